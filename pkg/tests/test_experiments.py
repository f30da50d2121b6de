import json

import numpy as np
import pytest

from rnnfilter.cells import ModelBundle, init_params, param_shapes
from rnnfilter.experiments import (
    ExperimentReport,
    decay_experiment,
    decay_hook,
    eval_window,
    evaluate_quality,
    fast_vs_window,
    median_by,
    quality_sweep,
    reshuffle_experiment,
    reshuffle_hook,
    spearman,
    speedup_bench,
    theoretical_speedup,
)
from rnnfilter.predict import moving_window_predict, quality
from rnnfilter.signal import Sequence, sample_series
from rnnfilter.training import TrainConfig, TrainHistory


def random_model(kind="lstm", n=4, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    params = {k: scale * rng.normal(size=s) for k, s in param_shapes(kind, n, 1).items()}
    return ModelBundle(kind, n, 1, params)


def test_eval_window_is_seeded_and_continuous():
    X, ref = eval_window("sine", 30, 20, 0.0, seed=4)
    X2, ref2 = eval_window("sine", 30, 20, 0.0, seed=4)
    assert X.points.tobytes() == X2.points.tobytes()
    assert len(X) == 30 and len(ref) == 20
    assert ref.t0 == pytest.approx(X.t0 + 30 * 0.01)
    np.testing.assert_allclose(ref.points[:, 0], np.sin(2 * np.pi * ref.times), atol=1e-12)


def test_quality_sweep_with_stub_trainer():
    calls = []

    def trainer(kind, n, dataset, cfg):
        calls.append((kind, n, cfg.seed))
        return random_model(kind, n, seed=cfg.seed), TrainHistory([0.1], [0.2])

    report = quality_sweep(["lstm", "basic"], [2, 3], dataset=None, cfg=TrainConfig(epochs=1),
                           eval_windows=2, seeds=(0, 1), p=10, m=20, trainer=trainer)
    assert len(report.rows) == 8 and len(calls) == 8
    assert set(calls) == {(k, n, s) for k in ("lstm", "basic") for n in (2, 3) for s in (0, 1)}
    assert all(r["Q"] > 0 and r["roughness_ratio"] > 0 for r in report.rows)
    assert report.rows[0]["val_loss"] == 0.2
    with pytest.raises(ValueError):
        quality_sweep(["lstm"], [], None, TrainConfig())


def test_spearman_trend():
    assert spearman([5, 10, 20], [1.0, 2.0, 3.0]) == pytest.approx(1.0)
    assert spearman([5, 10, 20], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)


def test_fast_vs_window_grid():
    report = fast_vs_window(random_model(), amplitudes=(0.15, 0.9), m_values=(25, 75), p=20)
    assert [(r["a"], r["m"]) for r in report.rows] == [(0.15, 25), (0.15, 75), (0.9, 25), (0.9, 75)]
    for r in report.rows:
        assert r["recursions_window"] == r["m"] * 20
        assert r["recursions_fast"] == r["m"] + 19
        assert r["coincident"] == (r["max_dev"] <= 0.05)


def test_theoretical_speedup():
    assert theoretical_speedup(50, 50) == 25.0
    values = [theoretical_speedup(m, m) for m in range(1, 200)]
    assert all(b > a for a, b in zip(values, values[1:]))
    assert all(theoretical_speedup(m, 2 * m) > m / 2 for m in range(1, 50))


def test_speedup_bench_counts():
    report = speedup_bench(random_model(n=3), m=50, p=50, repetitions=5)
    row = report.rows[0]
    assert row["recursions_window"] == 2500 and row["recursions_fast"] == 99
    assert row["count_ratio"] == pytest.approx(2500 / 99)
    assert row["kappa_theory"] == 25.0
    with pytest.raises(ValueError):
        speedup_bench(random_model(), repetitions=4)


def test_decay_hook_convention():
    window = Sequence(np.ones((4, 1)))
    hook = decay_hook(0.1)
    assert hook(window, 1) is window
    out = hook(window, 2).points[:, 0]
    np.testing.assert_allclose(out, [np.exp(-0.1)] * 3 + [1.0])
    assert decay_hook(0.0)(window, 5) is window


def test_decay_rate_zero_reproduces_prediction():
    model = random_model()
    report = decay_experiment(model, rates=(0.0, 0.005), m=20, p=15, seeds=range(2))
    X, ref = eval_window("sine", 20, 15, 0.15, 0)
    plain = moving_window_predict(model, X, 15)
    row = report.column("Q", rate=0.0, seed=0)[0]
    assert row == quality(plain.predicted, ref)
    assert set(median_by(report, "rate", "Q")) == {0.0, 0.005}


def test_reshuffle_hook_preserves_values():
    window = sample_series("sine", 0, 20)
    hook = reshuffle_hook(0.5, 3)
    assert hook(window, 1) is window
    out = hook(window, 2)
    assert sorted(out.points[:, 0]) == sorted(window.points[:, 0])
    assert out.points.tobytes() == hook(window, 2).points.tobytes()


def test_reshuffle_experiment_fraction_zero_and_fast_invariance():
    model = random_model()
    report = reshuffle_experiment(model, fractions=(0.0, 0.2), m=20, p=15, seeds=range(2))
    assert all(report.column("fast_identical"))
    for s in range(2):
        X, ref = eval_window("sine", 20, 15, 0.15, s)
        plain = moving_window_predict(model, X, 15)
        assert report.column("Q_window", fraction=0.0, seed=s)[0] == quality(plain.predicted, ref)


def test_evaluate_quality_is_median_over_windows():
    model = init_params("lstm", 3, 1, 0)
    qs = []
    for s in range(3):
        X, ref = eval_window("sine", 20, 5, 0.15, s)
        qs.append(quality(moving_window_predict(model, X, 5).predicted, ref))
    q, ratio = evaluate_quality(model, m=20, p=5, seeds=range(3), method="window")
    assert q == np.median(qs) and ratio > 0
    assert evaluate_quality(model, m=20, p=5, seeds=range(3), method="fast")[0] > 0


def test_report_csv_and_manifest(tmp_path):
    report = ExperimentReport("demo", {"m": 75, "grid": [1, 2]}, [{"a": 0.15, "Q": 31.5}, {"a": 0.9, "Q": 2.0}],
                              {"total_s": 1.0})
    report.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines() == ["a,Q", "0.14999999999999999,31.5", "0.90000000000000002,2"]
    report.write_manifest(tmp_path / "r.json", seeds=[0, 1], model_hash="abc")
    man = json.loads((tmp_path / "r.json").read_text())
    assert man["seeds"] == [0, 1] and man["model_hash"] == "abc"
    assert "numpy" in man["versions"] and man["parameters"]["m"] == 75
    assert report.column("Q", a=0.9) == [2.0]
