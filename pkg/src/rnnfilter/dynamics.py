"""State-space diagnostics of the moving-window recursion.

Index conventions follow the traces returned by :func:`traced_moving_window`:
``traces[j - 1].states[i - 1]`` is the hidden state ``s^j_i`` of prediction
step ``j`` after reading ``i`` points, and ``s^j_0`` is the zero vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cells import ModelBundle, run_sequence
from .predict import moving_window_predict
from .signal import Sequence, make_rng


@dataclass
class ShiftedDiffSeries:
    values: np.ndarray
    step_index: int
    state_space: str = "hidden"

    def __len__(self):
        return len(self.values)


@dataclass
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    window: tuple

    @property
    def slope(self) -> float:
        return -self.rate


@dataclass
class EpsilonSeries:
    values: np.ndarray


@dataclass
class NoiseLinearityReport:
    amplitudes: np.ndarray
    ratios: np.ndarray
    spread: float


@dataclass
class ContractionReport:
    jacobians: list
    eigenvalues: list
    weights: list
    contracting: np.ndarray
    measured_contracting: np.ndarray
    identity_residual: float
    steps: list = field(default_factory=list)

    @property
    def fraction_contracting(self) -> float:
        return float(np.mean(self.contracting)) if len(self.contracting) else float("nan")

    @property
    def measured_fraction(self) -> float:
        return float(np.mean(self.measured_contracting)) if len(self.measured_contracting) else float("nan")


def traced_moving_window(model: ModelBundle, X, p: int, window_hook=None):
    """Moving-window prediction that also returns every step's state trace."""
    return moving_window_predict(model, X, p, window_hook=window_hook, record_traces=True)


def _states(trace, space):
    if space == "hidden":
        return trace.states
    if space == "cell":
        if trace.cell_states is None:
            raise ValueError("cell-state differences exist only for lstm traces")
        return trace.cell_states
    raise ValueError(f"space must be 'hidden' or 'cell', got {space!r}")


def shifted_difference(traces, j: int = 1, space: str = "hidden") -> ShiftedDiffSeries:
    """Norms ``||s^j_{i+1} - s^{j+1}_i||`` for i = 0..m-1."""
    if not 1 <= j < len(traces):
        raise IndexError(f"step j={j} needs traces j and j+1 (have {len(traces)})")
    a = _states(traces[j - 1], space)
    b = _states(traces[j], space)
    shifted = np.vstack([np.zeros((1, b.shape[1])), b[:-1]])
    return ShiftedDiffSeries(np.linalg.norm(a - shifted, axis=1), j, space)


def fit_decay(series, window=None) -> DecayFit:
    """Least-squares line through ``(i, ln value)``; default window is the tail half."""
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    if window is None:
        window = (len(values) // 2, len(values))
    lo, hi = window
    idx = np.arange(lo, hi)
    y = values[lo:hi]
    if len(y) < 2:
        raise ValueError("decay fit needs at least two points")
    if np.any(y <= 0):
        raise ValueError("decay fit needs strictly positive values in the window")
    ly = np.log(y)
    slope, intercept = np.polyfit(idx, ly, 1)
    resid = ly - (slope * idx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot <= 1e-30 * max(1.0, float(np.sum(ly ** 2))):
        r2 = 1.0
    else:
        r2 = max(0.0, 1.0 - ss_res / ss_tot)
    return DecayFit(float(-slope), float(intercept), r2, (lo, hi))


def epsilon_gap(traces) -> EpsilonSeries:
    """``||s^{j+1}_{m-1} - s^j_m||`` for j = 1..p-1."""
    if len(traces) < 2:
        raise ValueError("epsilon gap needs at least two traces")
    if len(traces[0]) < 2:
        raise ValueError("epsilon gap needs windows of length >= 2")
    vals = [np.linalg.norm(traces[j].states[-2] - traces[j - 1].states[-1]) for j in range(1, len(traces))]
    return EpsilonSeries(np.array(vals))


def final_state(model, X):
    return run_sequence(model, X).last


def noise_linearity_check(model, X_clean, amplitudes, seed: int, forward=final_state) -> NoiseLinearityReport:
    """Ratios ``||s_m(a) - s_m(0)|| / a`` for one frozen noise draw.

    ``spread`` is ``(max - min) / min`` over the ratios; a small spread means
    the state perturbation is first order in the amplitude.
    """
    amps = np.asarray(amplitudes, dtype=np.float64)
    if amps.size == 0 or np.any(amps <= 0):
        raise ValueError("amplitudes must be positive")
    X_clean = X_clean if isinstance(X_clean, Sequence) else Sequence(X_clean)
    xi = make_rng(seed).standard_normal(X_clean.points.shape)
    base = forward(model, X_clean)
    ratios = np.array(
        [np.linalg.norm(forward(model, X_clean.with_points(X_clean.points + a * xi)) - base) / a for a in amps]
    )
    spread = float((ratios.max() - ratios.min()) / ratios.min()) if ratios.min() > 0 else float("inf")
    return NoiseLinearityReport(amps, ratios, spread)


def basic_jacobian(W_is, s_next) -> np.ndarray:
    """``diag(1 - s_next**2) @ W_is``: derivative of a tanh step w.r.t. the previous state."""
    W = W_is["W_is"] if isinstance(W_is, dict) else np.asarray(W_is, dtype=np.float64)
    s = np.asarray(s_next, dtype=np.float64)
    if np.any(np.abs(s) > 1.0):
        raise ValueError("state components must lie in [-1, 1]")
    return (1.0 - s * s)[:, None] * W


def eigen_identity(A, a):
    """Expand ``a`` in the eigenbasis of ``U = A^T A``.

    Returns eigenvalues, weights ``w_k = e_k . a`` and the relative residual
    of ``|A a|^2 = sum_k lambda_k w_k^2``.
    """
    U = A.T @ A
    lam, E = np.linalg.eigh(U)
    w = E.T @ a
    b = A @ a
    lhs = float(b @ b)
    rhs = float(np.sum(lam * w * w))
    scale = max(lhs, float(a @ a), np.finfo(float).tiny)
    return lam, E, w, abs(lhs - rhs) / scale


def contraction_report(model: ModelBundle, X, p: int) -> ContractionReport:
    """Per-step contraction of the linearised shifted-difference map (basic cell)."""
    if model.kind != "basic":
        raise ValueError("contraction analysis is defined for the basic cell only")
    if p < 2:
        raise ValueError("need p >= 2 to form shifted differences")
    _, traces = traced_moving_window(model, X, p)
    W_is = model.params["W_is"]
    jac, eig, weights, contracting, measured, steps = [], [], [], [], [], []
    residual = 0.0
    m = len(traces[0])
    for j in range(1, p):
        S_j = traces[j - 1].states
        S_next = traces[j].states
        for i in range(1, m):
            # delta^j_{i-1} = s^j_i - s^{j+1}_{i-1}
            prev_other = S_next[i - 2] if i >= 2 else np.zeros(model.n)
            a = S_j[i - 1] - prev_other
            delta_i = S_j[i] - S_next[i - 1]
            a2 = float(a @ a)
            if a2 == 0.0:
                continue
            A = basic_jacobian(W_is, S_j[i])
            lam, _, w, res = eigen_identity(A, a)
            residual = max(residual, res)
            jac.append(A)
            eig.append(lam)
            weights.append(w)
            contracting.append(float(np.sum(lam * w * w)) < a2)
            measured.append(float(delta_i @ delta_i) < a2)
            steps.append((j, i))
    return ContractionReport(
        jac, eig, weights, np.array(contracting), np.array(measured), residual, steps
    )


def jacobian_chain(model: ModelBundle, traces, j: int = 1) -> np.ndarray:
    """Propagate ``delta^j_0`` through the product of basic Jacobians to ``delta^j_{m-1}``."""
    if model.kind != "basic":
        raise ValueError("Jacobian chain is defined for the basic cell only")
    S_j = traces[j - 1].states
    delta = S_j[0].copy()
    for i in range(1, len(S_j)):
        delta = basic_jacobian(model.params["W_is"], S_j[i]) @ delta
    return delta


def write_series_csv(series, path, meta: dict | None = None, fits=(), notes=()) -> None:
    """``i,value`` rows framed by ``#`` metadata header and fit/note footer lines."""
    values = np.asarray(getattr(series, "values", series))
    with open(path, "w") as fh:
        if meta:
            fh.write("# " + ", ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        fh.write("i,value\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{format(float(v), '.17g')}\n")
        for fit in fits:
            fh.write(
                f"# fit window={fit.window[0]}:{fit.window[1]} rate={fit.rate:.17g} "
                f"intercept={fit.intercept:.17g} r_squared={fit.r_squared:.17g}\n"
            )
        for note in notes:
            fh.write(f"# {note}\n")
