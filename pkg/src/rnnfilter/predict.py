"""Multi-step extrapolation: the moving-window recursion and the reduced map.

The moving-window predictor re-runs the full recurrence over a window that
shifts by one point per step, costing ``m * p`` cell steps.  The fast
predictor runs the recurrence once, then iterates the input-free map
``G(s) = F(W s + b, s)`` obtained by folding the readout into the cell
weights, costing ``m + p - 1`` cell steps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .cells import ModelBundle, cell_step, readout, run_sequence, sigmoid
from .signal import Sequence


@dataclass
class PredictionResult:
    predicted: Sequence
    recursion_count: int
    traces_kept: list | None = None

    @property
    def values(self) -> np.ndarray:
        return self.predicted.points

    def __len__(self):
        return len(self.predicted)


@dataclass
class ReducedParams:
    """Readout-folded weights ``W~_as = W_ax W + W_as`` and ``b~_a = W_ax b + b_a``.

    ``input_proj`` keeps the folded input term ``W_ax W`` of every gate; the
    gated cell needs it for its candidate gate, where the reset gate scales
    only the recurrent part.
    """

    kind: str
    W: dict
    b: dict
    input_proj: dict = field(default_factory=dict)


def _as_sequence(X, d) -> Sequence:
    if isinstance(X, Sequence):
        if X.d != d:
            raise ValueError(f"input has dimension {X.d}, expected {d}")
        return X
    return Sequence(X)


def _result(X: Sequence, preds, count, kept=None) -> PredictionResult:
    m = len(X)
    pts = np.asarray(preds).reshape(len(preds), X.d)
    return PredictionResult(Sequence(pts, t0=X.t0 + m * X.dt, dt=X.dt), count, kept)


def moving_window_predict(model: ModelBundle, X, p: int, window_hook=None,
                          record_traces=False, keep_states=False):
    """Classical double recursion.

    ``window_hook(window, j)`` may rewrite the window before step ``j``
    (1-based) is run; it is how the robustness experiments perturb inputs.
    With ``record_traces`` the full state trace of every step is returned
    alongside the result.
    """
    if p < 1:
        raise ValueError("horizon p must be >= 1")
    X = _as_sequence(X, model.d)
    window = X
    W_r = model.readout_params
    preds, kept, traces = [], [], []
    for j in range(1, p + 1):
        if window_hook is not None:
            window = window_hook(window, j)
        trace = run_sequence(model, window)
        x_bar = readout(W_r, trace.last)
        preds.append(x_bar)
        if keep_states:
            kept.append(trace.last.copy())
        if record_traces:
            traces.append(trace)
        window = window.with_points(np.vstack([window.points[1:], x_bar[None, :]]))
    result = _result(X, preds, len(X) * p, kept if keep_states else None)
    if record_traces:
        return result, traces
    return result


def reduce_model(model: ModelBundle) -> ReducedParams:
    p = model.params
    W, b = p["W"], p["b"]
    Wt, bt, proj = {}, {}, {}
    for a in model.gates:
        proj[a] = p[f"W_{a}x"] @ W
        Wt[a] = proj[a] + p[f"W_{a}s"]
        bt[a] = p[f"W_{a}x"] @ b + p[f"b_{a}"]
    if model.kind == "gated":
        # the reset gate multiplies W_ms s only, so keep it separate
        extra = {"W_ms": p["W_ms"]}
    else:
        extra = {}
    return ReducedParams(model.kind, Wt, bt, {**proj, **extra})


def reduced_step(kind: str, rp: ReducedParams, s_prev, c_prev=None):
    """One application of the input-free map; returns ``(s, c)``."""
    W, b = rp.W, rp.b
    if kind == "basic":
        return np.tanh(W["i"] @ s_prev + b["i"]), None
    if kind == "gated":
        i = sigmoid(W["i"] @ s_prev + b["i"])
        r = sigmoid(W["r"] @ s_prev + b["r"])
        m = np.tanh(rp.input_proj["m"] @ s_prev + r * (rp.input_proj["W_ms"] @ s_prev) + b["m"])
        return (1.0 - i) * m + i * s_prev, None
    if kind == "lstm":
        if c_prev is None:
            raise ValueError("lstm reduced step needs the previous cell state")
        o = sigmoid(W["o"] @ s_prev + b["o"])
        i = sigmoid(W["i"] @ s_prev + b["i"])
        f = sigmoid(W["f"] @ s_prev + b["f"])
        m = np.tanh(W["m"] @ s_prev + b["m"])
        c = f * c_prev + i * m
        return o * np.tanh(c), c
    raise ValueError(f"unknown cell kind {kind!r}")


def fast_predict(model: ModelBundle, X, p: int, keep_states=False) -> PredictionResult:
    if p < 1:
        raise ValueError("horizon p must be >= 1")
    X = _as_sequence(X, model.d)
    trace = run_sequence(model, X)
    s = trace.last
    c = trace.cell_states[-1] if trace.cell_states is not None else None
    rp = reduce_model(model)
    W_r = model.readout_params
    preds = [readout(W_r, s)]
    kept = [s.copy()] if keep_states else None
    for _ in range(p - 1):
        s, c = reduced_step(model.kind, rp, s, c)
        preds.append(readout(W_r, s))
        if keep_states:
            kept.append(s.copy())
    return _result(X, preds, len(X) + p - 1, kept)


def full_step_at_readout(model: ModelBundle, s, c=None):
    """``F(W s + b, s)`` evaluated with the exact cell equations."""
    x = readout(model.readout_params, s)
    return cell_step(model.kind, model.params, x, s, c)


def quality(predicted, reference) -> float:
    """Reciprocal mean squared Euclidean deviation; ``inf`` for a perfect match."""
    F = np.asarray(getattr(predicted, "points", predicted), dtype=np.float64)
    f = np.asarray(getattr(reference, "points", reference), dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    if f.ndim == 1:
        f = f[:, None]
    if F.shape != f.shape or F.shape[0] < 1:
        raise ValueError(f"quality needs equal nonempty shapes, got {F.shape} and {f.shape}")
    mse = float(np.mean(np.sum((F - f) ** 2, axis=1)))
    return np.inf if mse == 0.0 else 1.0 / mse


def roughness(s) -> float:
    """Mean squared second difference."""
    x = np.asarray(getattr(s, "points", s), dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 3:
        raise ValueError("roughness needs at least 3 points")
    d2 = x[2:] - 2.0 * x[1:-1] + x[:-2]
    return float(np.mean(np.sum(d2 * d2, axis=1)))


def write_prediction_csv(result: PredictionResult, path, reference=None) -> None:
    pred = result.predicted
    ref = None
    if reference is not None:
        ref = np.asarray(getattr(reference, "points", reference), dtype=np.float64).reshape(len(pred), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["step", "t"] + [f"predicted_{k + 1}" for k in range(pred.d)]
        if ref is not None:
            header += [f"reference_{k + 1}" for k in range(ref.shape[1])]
        w.writerow(header)
        for j, (t, x) in enumerate(zip(pred.times, pred.points), start=1):
            row = [j, format(t, ".17g")] + [format(v, ".17g") for v in x]
            if ref is not None:
                row += [format(v, ".17g") for v in ref[j - 1]]
            w.writerow(row)


def read_prediction_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    cols = [k for k, h in enumerate(header) if h.startswith("predicted_")]
    return data[:, cols]
