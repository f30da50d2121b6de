"""Periodic test signals, noise injection and training datasets.

Every random draw goes through a counter-based Philox generator keyed by
``(seed, stream...)`` so that each dataset example can be regenerated on its
own, in any order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._validation import ConfigurationError, check_fraction, check_points, check_positive

WAVES = ("sine", "triangle")
NOISE_KINDS = ("gaussian", "uniform")


def make_rng(*key: int) -> np.random.Generator:
    """Deterministic Philox generator for an integer key tuple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def sine_wave(t):
    return np.sin(2.0 * np.pi * np.asarray(t, dtype=np.float64))


def triangle_wave(t):
    """Triangle wave with range [0, 1] and unit period, peaking at t = 1/4."""
    s = np.clip(np.sin(2.0 * np.pi * np.asarray(t, dtype=np.float64)), -1.0, 1.0)
    return 0.5 + np.arcsin(s) / np.pi


_WAVE_FUNCS: dict[str, Callable] = {"sine": sine_wave, "triangle": triangle_wave}


def wave_function(wave: str) -> Callable:
    try:
        return _WAVE_FUNCS[wave]
    except KeyError:
        raise ValueError(f"unknown wave {wave!r}; expected one of {WAVES}") from None


@dataclass(frozen=True)
class Sequence:
    """Uniformly sampled d-dimensional series, stored as an (m, d) array."""

    points: np.ndarray
    t0: float = 0.0
    dt: float = 0.01

    def __post_init__(self):
        pts = check_points(self.points)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt!r}")

    def __len__(self):
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def with_points(self, points) -> "Sequence":
        return Sequence(points, t0=self.t0, dt=self.dt)


def sample_series(wave: str, t0: float, count: int, dt: float = 0.01) -> Sequence:
    if count < 1:
        raise ValueError("count must be >= 1")
    check_positive(dt, "dt")
    f = wave_function(wave)
    t = t0 + dt * np.arange(count)
    return Sequence(f(t)[:, None], t0=t0, dt=dt)


def draw_noise(rng: np.random.Generator, shape, amplitude: float, kind: str = "gaussian") -> np.ndarray:
    if kind == "gaussian":
        return amplitude * rng.standard_normal(shape)
    if kind == "uniform":
        return rng.uniform(-amplitude, amplitude, size=shape)
    raise ValueError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")


def add_noise(s: Sequence, amplitude: float, seed: int, kind: str = "gaussian") -> Sequence:
    """Perturb every component by ``amplitude`` times an independent draw.

    Gaussian noise has standard deviation ``amplitude``; uniform noise is
    drawn from [-amplitude, amplitude].
    """
    check_positive(amplitude, "amplitude", strict=False)
    if amplitude == 0:
        return s.with_points(s.points.copy())
    noise = draw_noise(make_rng(seed), s.points.shape, amplitude, kind)
    return s.with_points(s.points + noise)


def decay_input(s: Sequence, rate: float) -> Sequence:
    """Scale point i (0-based) by ``exp(-rate * i)``."""
    check_positive(rate, "rate", strict=False)
    factors = np.exp(-rate * np.arange(len(s)))
    return s.with_points(s.points * factors[:, None])


def reshuffle_window(s: Sequence, fraction: float, seed: int) -> Sequence:
    """Randomly permute the contents of ``floor(fraction * m)`` chosen positions."""
    check_fraction(fraction, "fraction")
    m = len(s)
    k = int(math.floor(fraction * m))
    if k < 2:
        return s.with_points(s.points.copy())
    rng = make_rng(seed)
    positions = np.sort(rng.choice(m, size=k, replace=False))
    pts = s.points.copy()
    pts[positions] = s.points[rng.permutation(positions)]
    return s.with_points(pts)


@dataclass(frozen=True)
class DatasetSpec:
    segments_per_wave: int = 6000
    length_min: int = 5
    length_max: int = 150
    noise_amplitude: float = 0.15
    dt: float = 0.01
    seed: int = 0
    waves: tuple = WAVES
    noise_kind: str = "gaussian"

    def validate(self) -> "DatasetSpec":
        if self.segments_per_wave < 1:
            raise ConfigurationError("segments_per_wave must be >= 1")
        if not 5 <= self.length_min <= self.length_max:
            raise ConfigurationError("need 5 <= length_min <= length_max")
        if not (np.isfinite(self.noise_amplitude) and self.noise_amplitude >= 0):
            raise ConfigurationError("noise_amplitude must be >= 0")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError("dt must be > 0")
        if not self.waves or any(w not in WAVES for w in self.waves):
            raise ConfigurationError(f"waves must be a non-empty subset of {WAVES}")
        if len(set(self.waves)) != len(self.waves):
            raise ConfigurationError("waves must not repeat")
        if self.noise_kind not in NOISE_KINDS:
            raise ConfigurationError(f"noise_kind must be one of {NOISE_KINDS}")
        return self


@dataclass(frozen=True)
class Example:
    input: Sequence
    target: np.ndarray
    wave: str = "sine"
    seed: int = 0


@dataclass
class Dataset:
    examples: list
    spec: DatasetSpec = field(default_factory=DatasetSpec)

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


def example_seed(seed: int, wave: str, index: int) -> int:
    ss = np.random.SeedSequence([int(seed), WAVES.index(wave), int(index)])
    return int(ss.generate_state(1)[0])


def make_example(spec: DatasetSpec, wave: str, ex_seed: int) -> Example:
    """Regenerate one example from its own seed.

    Draw order: length, start phase, then one noise value per point
    (inputs followed by the target).
    """
    rng = make_rng(ex_seed)
    length = int(rng.integers(spec.length_min, spec.length_max + 1))
    t0 = float(rng.uniform(0.0, 1.0))
    clean = wave_function(wave)(t0 + spec.dt * np.arange(length + 1))
    noisy = clean + draw_noise(rng, clean.shape, spec.noise_amplitude, spec.noise_kind)
    return Example(
        input=Sequence(noisy[:length, None], t0=t0, dt=spec.dt),
        target=noisy[length:],
        wave=wave,
        seed=ex_seed,
    )


def build_dataset(spec: DatasetSpec) -> Dataset:
    spec.validate()
    examples = [
        make_example(spec, wave, example_seed(spec.seed, wave, i))
        for wave in spec.waves
        for i in range(spec.segments_per_wave)
    ]
    return Dataset(examples, spec)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset_csv(ds: Dataset, path) -> None:
    """One row per example: ``wave,len,t0,seed,target,x1..xlen`` (d = 1 only)."""
    width = max((len(ex.input) for ex in ds), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["wave", "len", "t0", "seed", "target"] + [f"x{i + 1}" for i in range(width)])
        for ex in ds:
            if ex.input.d != 1:
                raise ValueError("dataset CSV export supports d = 1 only")
            w.writerow(
                [ex.wave, len(ex.input), _fmt(ex.input.t0), ex.seed, _fmt(ex.target[0])]
                + [_fmt(v) for v in ex.input.points[:, 0]]
            )


def read_dataset_csv(path, spec: DatasetSpec | None = None) -> Dataset:
    spec = spec or DatasetSpec()
    examples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:5] != ["wave", "len", "t0", "seed", "target"]:
            raise ValueError(f"{path}: not a dataset CSV (header {header[:5]})")
        for row in reader:
            length = int(row[1])
            values = np.array([float(v) for v in row[5 : 5 + length]])
            if values.shape[0] != length:
                raise ValueError(f"{path}: row declares {length} points, has {values.shape[0]}")
            examples.append(
                Example(
                    input=Sequence(values[:, None], t0=float(row[2]), dt=spec.dt),
                    target=np.array([float(row[4])]),
                    wave=row[0],
                    seed=int(row[3]),
                )
            )
    return Dataset(examples, spec)


def write_series_csv(s: Sequence, path) -> None:
    """Series file: header ``t,x1..xd``, one row per time point."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{k + 1}" for k in range(s.d)])
        for t, p in zip(s.times, s.points):
            w.writerow([_fmt(t)] + [_fmt(v) for v in p])


def read_series_csv(path) -> Sequence:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: expected columns t,x1..xd")
    t = data[:, 0]
    dt = float(t[1] - t[0]) if len(t) > 1 else 0.01
    return Sequence(data[:, 1:], t0=float(t[0]), dt=dt)
