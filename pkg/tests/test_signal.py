import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnnfilter._validation import ConfigurationError
from rnnfilter.signal import (
    DatasetSpec,
    Sequence,
    add_noise,
    build_dataset,
    decay_input,
    make_example,
    read_dataset_csv,
    read_series_csv,
    reshuffle_window,
    sample_series,
    sine_wave,
    triangle_wave,
    wave_function,
    write_dataset_csv,
    write_series_csv,
)

# values frozen from 30-digit mpmath evaluations
SINE_0_1 = 0.587785252292473129
SINE_FIRST5 = [0.0, 0.06279051953, 0.1253332336, 0.1873813146, 0.2486898872]


@pytest.mark.parametrize("t, expected", [(0.0, 0.0), (0.25, 1.0), (0.1, SINE_0_1)])
def test_sine_wave(t, expected):
    assert sine_wave(t) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("t, expected", [(0.0, 0.5), (0.25, 1.0), (0.75, 0.0)])
def test_triangle_wave(t, expected):
    assert triangle_wave(t) == pytest.approx(expected, abs=1e-15)


def test_triangle_is_piecewise_linear():
    t = np.linspace(-0.2, 0.2, 41)
    # slope 4 per unit time between the troughs and peaks
    np.testing.assert_allclose(triangle_wave(t), 0.5 + 2.0 * t, atol=1e-12)


def test_sample_series_examples():
    np.testing.assert_allclose(sample_series("sine", 0, 3, 0.25).points[:, 0], [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(sample_series("triangle", 0, 2, 0.25).points[:, 0], [0.5, 1.0], atol=1e-15)
    np.testing.assert_allclose(sample_series("sine", 0, 5, 0.01).points[:, 0], SINE_FIRST5, atol=1e-10)


def test_sample_series_rejects_bad_args():
    with pytest.raises(ValueError):
        sample_series("sine", 0, 0)
    with pytest.raises(ValueError):
        sample_series("square", 0, 3)
    with pytest.raises(ValueError):
        sample_series("sine", 0, 3, dt=0)


def test_sequence_invariants():
    s = Sequence(np.arange(6.0).reshape(3, 2), t0=1.0, dt=0.5)
    assert len(s) == 3 and s.d == 2
    np.testing.assert_allclose(s.times, [1.0, 1.5, 2.0])
    with pytest.raises(ValueError):
        Sequence([[np.nan]])
    with pytest.raises(ValueError):
        Sequence([1.0], dt=-1)
    with pytest.raises(ValueError):
        s.points[0, 0] = 3.0


def test_add_noise_zero_amplitude_is_identity():
    s = sample_series("sine", 0.3, 50)
    np.testing.assert_array_equal(add_noise(s, 0.0, 1).points, s.points)


def test_add_noise_deterministic():
    s = sample_series("sine", 0.3, 50)
    np.testing.assert_array_equal(add_noise(s, 0.15, 7).points, add_noise(s, 0.15, 7).points)
    assert not np.array_equal(add_noise(s, 0.15, 7).points, add_noise(s, 0.15, 8).points)


@pytest.mark.parametrize("kind, std", [("gaussian", 0.15), ("uniform", 0.15 / np.sqrt(3))])
def test_add_noise_statistics(kind, std):
    zero = Sequence(np.zeros((10_000, 1)))
    noise = add_noise(zero, 0.15, 3, kind=kind).points[:, 0]
    assert abs(noise.mean()) < 3 * std / 100
    assert noise.std() == pytest.approx(std, abs=0.01)
    if kind == "uniform":
        assert np.all(np.abs(noise) <= 0.15)


def test_decay_input_examples():
    s = Sequence(np.ones((3, 1)))
    np.testing.assert_allclose(decay_input(s, 0.002).points[:, 0], [1, 0.998002, 0.996008], atol=1e-6)
    np.testing.assert_array_equal(decay_input(s, 0.0).points, s.points)
    with pytest.raises(ValueError):
        decay_input(s, -1.0)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=40))
def test_decay_rate_zero_identity(values):
    s = Sequence(np.array(values))
    np.testing.assert_array_equal(decay_input(s, 0.0).points, s.points)


def test_reshuffle_fraction_zero_and_one():
    s = Sequence(np.arange(10.0))
    np.testing.assert_array_equal(reshuffle_window(s, 0.0, 1).points, s.points)
    out = reshuffle_window(s, 1.0, 1).points[:, 0]
    assert sorted(out) == sorted(s.points[:, 0])


def test_reshuffle_half_of_four_touches_two_positions():
    s = Sequence(np.arange(4.0))
    for seed in range(20):
        out = reshuffle_window(s, 0.5, seed).points[:, 0]
        moved = np.flatnonzero(out != s.points[:, 0])
        # two chosen positions are either swapped or left in place
        assert len(moved) in (0, 2)
    swapped = [np.sum(reshuffle_window(s, 0.5, k).points[:, 0] != np.arange(4)) for k in range(50)]
    assert max(swapped) == 2


@settings(max_examples=50)
@given(st.lists(st.integers(-100, 100), min_size=1, max_size=30), st.floats(0, 1), st.integers(0, 2**31))
def test_reshuffle_preserves_multiset(values, fraction, seed):
    s = Sequence(np.array(values, dtype=float))
    out = reshuffle_window(s, fraction, seed)
    assert sorted(out.points[:, 0]) == sorted(s.points[:, 0])
    k = int(np.floor(fraction * len(values)))
    assert np.sum(out.points[:, 0] != s.points[:, 0]) <= k
    np.testing.assert_array_equal(out.points, reshuffle_window(s, fraction, seed).points)


def test_build_dataset_size_and_targets():
    spec = DatasetSpec(segments_per_wave=40, noise_amplitude=0.0, seed=5)
    ds = build_dataset(spec)
    assert len(ds) == 80
    for ex in ds:
        f = wave_function(ex.wave)
        m = len(ex.input)
        assert 5 <= m <= 150
        np.testing.assert_allclose(ex.input.points[:, 0], f(ex.input.times), atol=1e-15)
        assert ex.target[0] == pytest.approx(f(ex.input.t0 + m * spec.dt), abs=1e-15)


def test_full_size_dataset():
    spec = DatasetSpec(segments_per_wave=6000, length_min=5, length_max=5)
    ds = build_dataset(spec)
    assert len(ds) == 12000
    assert all(len(ex.input) == 5 for ex in ds)


def test_dataset_reproducible_and_examples_independent():
    spec = DatasetSpec(segments_per_wave=20, seed=3)
    a, b = build_dataset(spec), build_dataset(spec)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.input.points, y.input.points)
        np.testing.assert_array_equal(x.target, y.target)
    # any example can be regenerated from its own seed
    ex = a.examples[17]
    again = make_example(spec, ex.wave, ex.seed)
    np.testing.assert_array_equal(again.input.points, ex.input.points)


def test_noisy_targets_follow_the_clean_wave():
    spec = DatasetSpec(segments_per_wave=2000, waves=("sine",), seed=1)
    resid = [ex.target[0] - sine_wave(ex.input.t0 + len(ex.input) * spec.dt) for ex in build_dataset(spec)]
    assert np.std(resid) == pytest.approx(0.15, abs=0.01)


@pytest.mark.parametrize(
    "kwargs",
    [dict(length_min=4), dict(length_min=20, length_max=10), dict(noise_amplitude=-0.1),
     dict(waves=()), dict(waves=("square",)), dict(segments_per_wave=0)],
)
def test_invalid_dataset_spec(kwargs):
    with pytest.raises(ConfigurationError):
        build_dataset(DatasetSpec(**kwargs))


def test_dataset_csv_round_trip(tmp_path):
    ds = build_dataset(DatasetSpec(segments_per_wave=15, seed=2))
    path = tmp_path / "data.csv"
    write_dataset_csv(ds, path)
    back = read_dataset_csv(path)
    assert len(back) == len(ds)
    for x, y in zip(ds, back):
        assert (x.wave, x.seed, x.input.t0) == (y.wave, y.seed, y.input.t0)
        np.testing.assert_array_equal(x.input.points, y.input.points)
        np.testing.assert_array_equal(x.target, y.target)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:6] == ["wave", "len", "t0", "seed", "target", "x1"]


def test_series_csv_round_trip(tmp_path):
    s = add_noise(sample_series("triangle", 0.2, 30), 0.1, 4)
    write_series_csv(s, tmp_path / "s.csv")
    back = read_series_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.points, s.points)
    assert back.t0 == s.t0
