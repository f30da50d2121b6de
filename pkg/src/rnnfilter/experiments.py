"""Scripted experiments: quality sweeps, fast/slow comparison, speedup and robustness."""

from __future__ import annotations

import csv
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cells import ModelBundle, init_params
from .predict import fast_predict, moving_window_predict, quality, roughness
from .signal import Sequence, add_noise, make_rng, reshuffle_window, sample_series
from .training import TrainConfig, train

COINCIDE_TOL = 0.05


@dataclass
class ExperimentReport:
    name: str
    parameters: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def column(self, key, **where):
        return [r[key] for r in self.rows if all(r.get(k) == v for k, v in where.items())]

    def to_csv(self, path) -> None:
        keys = []
        for r in self.rows:
            keys += [k for k in r if k not in keys]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _fmt(v) for k, v in r.items()})

    def manifest(self, seeds=(), model_hash=None) -> dict:
        return {
            "name": self.name,
            "parameters": self.parameters,
            "seeds": list(seeds),
            "model_hash": model_hash,
            "timings": self.timings,
            "versions": {
                "rnnfilter": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
        }

    def write_manifest(self, path, seeds=(), model_hash=None) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(seeds, model_hash), fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def eval_window(wave: str, m: int, p: int, a: float, seed: int, dt: float = 0.01):
    """Noisy input window at a seeded random phase and its clean continuation."""
    t0 = float(make_rng(seed, 7).uniform(0.0, 1.0))
    clean = sample_series(wave, t0, m + p, dt)
    X = add_noise(Sequence(clean.points[:m], t0=t0, dt=dt), a, seed)
    ref = Sequence(clean.points[m:], t0=t0 + m * dt, dt=dt)
    return X, ref


def evaluate_quality(model, wave="sine", m=75, p=100, a=0.15, seeds=range(5), method="window"):
    """Median Q and median roughness ratio (prediction / noisy input) over windows."""
    predict = moving_window_predict if method == "window" else fast_predict
    qs, ratios = [], []
    for s in seeds:
        X, ref = eval_window(wave, m, p, a, s)
        pred = predict(model, X, p).predicted
        qs.append(quality(pred, ref))
        ratios.append(roughness(pred) / roughness(X))
    return float(np.median(qs)), float(np.median(ratios))


def train_model(kind, n, dataset, cfg: TrainConfig, seed=None):
    seed = cfg.seed if seed is None else seed
    model = init_params(kind, n, dataset.examples[0].input.d, seed)
    trained, history = train(model, dataset, cfg)
    return trained, history


def _sweep_cell(args):
    kind, n, seed, dataset, cfg, wave, m, p, a, eval_windows, trainer = args
    from dataclasses import replace

    model, history = trainer(kind, n, dataset, replace(cfg, seed=seed))
    q, ratio = evaluate_quality(model, wave, m, p, a, range(eval_windows))
    val = history.val_loss[-1] if history is not None and len(history) else float("nan")
    return {"kind": kind, "n": n, "seed": seed, "Q": q, "roughness_ratio": ratio, "val_loss": val}


def quality_sweep(kinds, neuron_counts, dataset, cfg: TrainConfig, eval_windows=5, seeds=(0,),
                  wave="sine", m=75, p=100, a=0.15, threads=1, trainer=train_model) -> ExperimentReport:
    """Train one model per (kind, n, seed) and score one-period extrapolation."""
    if not neuron_counts:
        raise ValueError("neuron_counts must be nonempty")
    cells = [
        (k, n, s, dataset, cfg, wave, m, p, a, eval_windows, trainer)
        for k in kinds for n in neuron_counts for s in seeds
    ]
    t = time.perf_counter()
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    report = ExperimentReport(
        "quality_sweep",
        {"kinds": list(kinds), "neuron_counts": list(neuron_counts), "wave": wave, "m": m, "p": p, "a": a,
         "eval_windows": eval_windows, "epochs": cfg.epochs},
        rows,
        {"total_s": time.perf_counter() - t},
    )
    return report


def spearman(x, y) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(x, y).statistic)


def fast_vs_window(model, wave="triangle", amplitudes=(0.15, 0.9), m_values=(25, 75), p=100,
                   seed=0) -> ExperimentReport:
    rows = []
    for a in np.atleast_1d(amplitudes):
        for m in m_values:
            X, ref = eval_window(wave, m, p, float(a), seed)
            slow = moving_window_predict(model, X, p)
            fast = fast_predict(model, X, p)
            dev = float(np.max(np.abs(slow.values - fast.values)))
            rows.append({
                "a": float(a), "m": m, "max_dev": dev, "coincident": dev <= COINCIDE_TOL,
                "Q_window": quality(slow.predicted, ref), "Q_fast": quality(fast.predicted, ref),
                "recursions_window": slow.recursion_count, "recursions_fast": fast.recursion_count,
            })
    return ExperimentReport("fast_vs_window", {"wave": wave, "p": p, "seed": seed}, rows)


def theoretical_speedup(m: int, p: int) -> float:
    return m * p / (m + p)


def speedup_bench(model, m=50, p=50, repetitions=7, seed=0, wave="sine") -> ExperimentReport:
    """Median wall-clock of both predictors on one window (first run discarded)."""
    if repetitions < 5:
        raise ValueError("repetitions must be >= 5")
    X, _ = eval_window(wave, m, p, 0.15, seed)
    times = {}
    counts = {}
    for name, fn in (("window", moving_window_predict), ("fast", fast_predict)):
        fn(model, X, p)
        samples = []
        for _ in range(repetitions):
            t = time.perf_counter()
            res = fn(model, X, p)
            samples.append(time.perf_counter() - t)
        times[name] = float(np.median(samples))
        counts[name] = res.recursion_count
    row = {
        "m": m, "p": p,
        "recursions_window": counts["window"], "recursions_fast": counts["fast"],
        "count_ratio": counts["window"] / counts["fast"],
        "kappa_theory": theoretical_speedup(m, p),
        "time_window_s": times["window"], "time_fast_s": times["fast"],
        "kappa_measured": times["window"] / times["fast"],
    }
    return ExperimentReport("speedup_bench", {"m": m, "p": p, "repetitions": repetitions}, [row], times)


def decay_hook(rate: float):
    """Window hook: every retained point loses a factor ``exp(-rate)`` per step."""
    factor = np.exp(-rate)

    def hook(window, j):
        if j == 1 or rate == 0:
            return window
        pts = window.points.copy()
        pts[:-1] *= factor
        return window.with_points(pts)

    return hook


def reshuffle_hook(fraction: float, seed: int):
    def hook(window, j):
        if j == 1 or fraction == 0:
            return window
        return reshuffle_window(window, fraction, seed=int(make_rng(seed, 11, j).integers(2**31)))

    return hook


def decay_experiment(model, wave="sine", rates=(0.0, 0.002, 0.005, 0.008), m=75, p=100,
                     seeds=range(5), a=0.15) -> ExperimentReport:
    rows = []
    for rate in rates:
        for s in seeds:
            X, ref = eval_window(wave, m, p, a, s)
            pred = moving_window_predict(model, X, p, window_hook=decay_hook(rate))
            rows.append({"rate": rate, "seed": s, "Q": quality(pred.predicted, ref),
                         "roughness": roughness(pred.predicted)})
    return ExperimentReport("decay_experiment", {"wave": wave, "m": m, "p": p, "a": a,
                                                 "rates": list(rates)}, rows)


def reshuffle_experiment(model, wave="sine", fractions=(0.0, 0.05, 0.1, 0.2, 0.4), m=75, p=100,
                         seeds=range(5), a=0.15) -> ExperimentReport:
    """Moving-window prediction with per-step window reshuffling vs the fast map.

    The fast map reads only the first (unshuffled) window, so its output is
    recorded once per seed and compared byte-for-byte across fractions.
    """
    rows = []
    for s in seeds:
        X, ref = eval_window(wave, m, p, a, s)
        fast_ref = fast_predict(model, X, p).values.tobytes()
        for frac in fractions:
            hook = reshuffle_hook(frac, s)
            slow = moving_window_predict(model, X, p, window_hook=hook)
            fast = fast_predict(model, hook(X, 1), p)
            rows.append({
                "fraction": frac, "seed": s,
                "Q_window": quality(slow.predicted, ref), "roughness_window": roughness(slow.predicted),
                "Q_fast": quality(fast.predicted, ref), "roughness_fast": roughness(fast.predicted),
                "fast_identical": fast.values.tobytes() == fast_ref,
            })
    return ExperimentReport("reshuffle_experiment", {"wave": wave, "m": m, "p": p, "a": a,
                                                     "fractions": list(fractions)}, rows)


def median_by(report: ExperimentReport, key: str, value: str) -> dict:
    groups = {}
    for r in report.rows:
        groups.setdefault(r[key], []).append(r[value])
    return {k: float(np.median(v)) for k, v in groups.items()}
