"""One-step-ahead training: loss, backpropagation through time, Adam.

Batches are grouped by segment length so the recurrence runs without
padding.  Inside a batch the forward and backward passes are vectorised
over examples with all gates stacked into single matrices.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ._validation import ConfigurationError, check_fraction
from .cells import ModelBundle, param_names, sigmoid
from .signal import Dataset, make_rng

logger = logging.getLogger(__name__)

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba missing
    _kernels = None

DEFAULT_ENGINE = "numba" if _kernels is not None else "numpy"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    validation_fraction: float = 0.2
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 8
    seed: int = 0
    clip_norm: float | None = None

    def validate(self) -> "TrainConfig":
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        check_fraction(self.validation_fraction, "validation_fraction", closed=False)
        for name in ("learning_rate", "epsilon"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0")
        for name in ("beta1", "beta2"):
            check_fraction(getattr(self, name), name, closed=False)
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ConfigurationError("clip_norm must be > 0 when set")
        return self


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss"])
            for e, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
                w.writerow([e, format(tr, ".17g"), format(va, ".17g")])


# -- batching ----------------------------------------------------------------

def _pair(item):
    if hasattr(item, "input"):
        return item.input.points, np.asarray(item.target, dtype=np.float64)
    x, y = item
    x = x.points if hasattr(x, "points") else np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return x, np.atleast_1d(np.asarray(y, dtype=np.float64))


def group_by_length(batch) -> dict:
    """Map segment length to stacked ``(X, Y)`` arrays of shape (B, m, d), (B, d)."""
    groups = defaultdict(lambda: ([], []))
    for item in batch:
        x, y = _pair(item)
        groups[x.shape[0]][0].append(x)
        groups[x.shape[0]][1].append(y)
    return {m: (np.stack(xs), np.stack(ys)) for m, (xs, ys) in sorted(groups.items())}


# -- vectorised forward / backward -------------------------------------------

def _stack(model: ModelBundle):
    p = model.params
    g = model.gates
    Wx = np.concatenate([p[f"W_{a}x"] for a in g])
    Ws = np.concatenate([p[f"W_{a}s"] for a in g])
    b = np.concatenate([p[f"b_{a}"] for a in g])
    return Wx, Ws, b


def _check_batch(model, X):
    if X.ndim != 3 or X.shape[2] != model.d:
        raise ValueError(f"batch must have shape (B, m, {model.d}), got {X.shape}")


def forward_batch(model: ModelBundle, X: np.ndarray, keep_cache=False, engine=None):
    """Run a (B, m, d) batch; return final states, predictions and optionally the cache."""
    _check_batch(model, X)
    if (engine or DEFAULT_ENGINE) == "numba" and not keep_cache:
        Wx, Ws, b = _stack(model)
        S, _, _, _ = _kernels.forward(_kernels.KIND_CODE[model.kind], np.ascontiguousarray(X), Wx, Ws, b, model.n)
        s = S[:, -1]
        return s, s @ model.params["W"].T + model.params["b"], None
    n, kind = model.n, model.kind
    Wx, Ws, b = _stack(model)
    PX = X @ Wx.T + b
    B, m, _ = X.shape
    s = np.zeros((B, n))
    c = np.zeros((B, n))
    cache = [] if keep_cache else None
    for t in range(m):
        PS = s @ Ws.T
        if kind == "basic":
            s_new = np.tanh(PX[:, t] + PS)
            entry = (s, s_new)
        elif kind == "gated":
            A = PX[:, t]
            i = sigmoid(A[:, :n] + PS[:, :n])
            r = sigmoid(A[:, n:2 * n] + PS[:, n:2 * n])
            h = PS[:, 2 * n:]
            mm = np.tanh(A[:, 2 * n:] + r * h)
            s_new = (1.0 - i) * mm + i * s
            entry = (s, i, r, h, mm)
        else:
            Z = PX[:, t] + PS
            i = sigmoid(Z[:, :n])
            f = sigmoid(Z[:, n:2 * n])
            mm = np.tanh(Z[:, 2 * n:3 * n])
            o = sigmoid(Z[:, 3 * n:])
            c_new = f * c + i * mm
            tc = np.tanh(c_new)
            s_new = o * tc
            entry = (s, c, i, f, mm, o, tc)
            c = c_new
        if keep_cache:
            cache.append(entry)
        s = s_new
    pred = s @ model.params["W"].T + model.params["b"]
    return s, pred, cache


def _backward_batch(model: ModelBundle, X, Y, scale, engine=None):
    """Gradient of ``scale * sum_b ||pred_b - y_b||^2`` for one equal-length batch."""
    if (engine or DEFAULT_ENGINE) == "numba":
        return _backward_batch_compiled(model, X, Y, scale)
    return _backward_batch_numpy(model, X, Y, scale)


def _split_gates(model, grads, dWx, dWs, db):
    n = model.n
    for k, a in enumerate(model.gates):
        sl = slice(k * n, (k + 1) * n)
        grads[f"W_{a}x"] = dWx[sl]
        grads[f"W_{a}s"] = dWs[sl]
        grads[f"b_{a}"] = db[sl]
    return grads


def _backward_batch_compiled(model, X, Y, scale):
    _check_batch(model, X)
    Wx, Ws, b = _stack(model)
    X = np.ascontiguousarray(X)
    code = _kernels.KIND_CODE[model.kind]
    S, C, A, H = _kernels.forward(code, X, Wx, Ws, b, model.n)
    s_last = S[:, -1]
    err = s_last @ model.params["W"].T + model.params["b"] - Y
    dpred = 2.0 * scale * err
    grads = {"W": dpred.T @ s_last, "b": dpred.sum(axis=0)}
    dWx, dWs, db = _kernels.backward(code, X, Ws, S, C, A, H, dpred @ model.params["W"], model.n)
    return float(np.sum(err * err)), _split_gates(model, grads, dWx, dWs, db)


def _backward_batch_numpy(model, X, Y, scale):
    n, kind, p = model.n, model.kind, model.params
    s_last, pred, cache = forward_batch(model, X, keep_cache=True)
    err = pred - Y
    loss_sum = float(np.sum(err * err))
    dpred = 2.0 * scale * err
    grads = {"W": dpred.T @ s_last, "b": dpred.sum(axis=0)}
    _, Ws, _ = _stack(model)
    B, m, _ = X.shape
    G = Ws.shape[0]
    dPX = np.empty((B, m, G))
    dPS = np.empty((B, m, G))
    S_prev = np.empty((B, m, n))
    ds = dpred @ p["W"]
    dc = np.zeros((B, n))
    for t in range(m - 1, -1, -1):
        entry = cache[t]
        s_prev = entry[0]
        S_prev[:, t] = s_prev
        if kind == "basic":
            s_new = entry[1]
            da = ds * (1.0 - s_new * s_new)
            dPX[:, t] = da
            dPS[:, t] = da
            ds = da @ Ws
        elif kind == "gated":
            _, i, r, h, mm = entry
            di = ds * (s_prev - mm)
            dam = ds * (1.0 - i) * (1.0 - mm * mm)
            dar = dam * h * r * (1.0 - r)
            dai = di * i * (1.0 - i)
            dPX[:, t, :n] = dai
            dPX[:, t, n:2 * n] = dar
            dPX[:, t, 2 * n:] = dam
            dPS[:, t, :2 * n] = dPX[:, t, :2 * n]
            dPS[:, t, 2 * n:] = dam * r
            ds = ds * i + dPS[:, t] @ Ws
        else:
            _, c_prev, i, f, mm, o, tc = entry
            do = ds * tc
            dc = dc + ds * o * (1.0 - tc * tc)
            di = dc * mm
            df = dc * c_prev
            dmm = dc * i
            dPX[:, t, :n] = di * i * (1.0 - i)
            dPX[:, t, n:2 * n] = df * f * (1.0 - f)
            dPX[:, t, 2 * n:3 * n] = dmm * (1.0 - mm * mm)
            dPX[:, t, 3 * n:] = do * o * (1.0 - o)
            dPS[:, t] = dPX[:, t]
            dc = dc * f
            ds = dPS[:, t] @ Ws
    dWx = np.einsum("btg,btd->gd", dPX, X)
    dWs = np.einsum("btg,btn->gn", dPS, S_prev)
    db = dPX.sum(axis=(0, 1))
    return loss_sum, _split_gates(model, grads, dWx, dWs, db)


# -- public operations -----------------------------------------------------

def loss(model: ModelBundle, batch, engine=None) -> float:
    """Mean squared Euclidean one-step error over ``batch``."""
    groups = group_by_length(batch) if not isinstance(batch, dict) else batch
    if not groups:
        raise ValueError("batch must be nonempty")
    total, count = 0.0, 0
    for X, Y in groups.values():
        if Y.shape[1] != model.d:
            raise ValueError(f"targets have dimension {Y.shape[1]}, expected {model.d}")
        _, pred, _ = forward_batch(model, X, engine=engine)
        total += float(np.sum((pred - Y) ** 2))
        count += X.shape[0]
    return total / count


def loss_and_gradients(model: ModelBundle, batch, engine=None):
    groups = group_by_length(batch) if not isinstance(batch, dict) else batch
    if not groups:
        raise ValueError("batch must be nonempty")
    count = sum(X.shape[0] for X, _ in groups.values())
    total = 0.0
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    for X, Y in groups.values():
        if Y.shape[1] != model.d:
            raise ValueError(f"targets have dimension {Y.shape[1]}, expected {model.d}")
        part, g = _backward_batch(model, X, Y, 1.0 / count, engine)
        total += part
        for k in grads:
            grads[k] += g[k]
    return total / count, grads


def gradients(model: ModelBundle, batch, engine=None) -> dict:
    return loss_and_gradients(model, batch, engine)[1]


def central_difference(f, params: dict, step: float = 1e-5) -> dict:
    """Central-difference gradient of scalar ``f(params)`` w.r.t. every entry."""
    if not step > 0:
        raise ValueError("step must be > 0")
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    grads = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = f(work)
            flat[idx] = orig - step
            down = f(work)
            flat[idx] = orig
            g.reshape(-1)[idx] = (up - down) / (2.0 * step)
        grads[name] = g
    return grads


def finite_diff_grad(model: ModelBundle, batch, step: float = 1e-5) -> dict:
    groups = group_by_length(batch)
    # the numpy path keeps the oracle independent of the compiled kernels
    return central_difference(
        lambda p: loss(model.with_params(p), groups, engine="numpy"), model.params, step
    )


def adam_update(state: AdamState, params: dict, grads: dict, cfg: TrainConfig):
    """One bias-corrected Adam step; returns new ``(params, state)``."""
    t = state.step + 1
    b1, b2 = cfg.beta1, cfg.beta2
    new_params, new_m, new_v = {}, {}, {}
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, expected {p.shape}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        new_params[k] = p - cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
        new_m[k], new_v[k] = m, v
    return new_params, AdamState(new_m, new_v, t)


def _clip(grads: dict, max_norm: float) -> dict:
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm:
        return grads
    return {k: g * (max_norm / norm) for k, g in grads.items()}


def split_indices(n_examples: int, fraction: float, seed: int):
    """Deterministic (train, validation) index split."""
    perm = make_rng(seed, 0).permutation(n_examples)
    n_val = int(round(fraction * n_examples))
    n_val = min(max(n_val, 1), n_examples - 1) if n_examples > 1 else 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(model: ModelBundle, data: Dataset, cfg: TrainConfig = TrainConfig(), callback=None):
    """Train on one-step-ahead targets; returns the trained bundle and its history."""
    cfg.validate()
    examples = list(data.examples if hasattr(data, "examples") else data)
    if not examples:
        raise ValueError("dataset is empty")
    history = TrainHistory()
    if cfg.epochs == 0:
        return model, history

    train_idx, val_idx = split_indices(len(examples), cfg.validation_fraction, cfg.seed)
    buckets = group_by_length([examples[i] for i in train_idx])
    val_groups = group_by_length([examples[i] for i in val_idx]) if len(val_idx) else {}
    n_train = len(train_idx)

    params = {k: v.copy() for k, v in model.params.items()}
    state = AdamState.zeros_like(params)
    current = model.with_params(params)
    for epoch in range(cfg.epochs):
        rng = make_rng(cfg.seed, 1, epoch)
        batches = []
        for X, Y in buckets.values():
            order = rng.permutation(X.shape[0])
            n_chunks = -(-X.shape[0] // cfg.batch_size)
            for chunk in np.array_split(order, n_chunks):
                batches.append((X[chunk], Y[chunk]))
        epoch_loss = 0.0
        for bi in rng.permutation(len(batches)):
            X, Y = batches[bi]
            loss_sum, grads = _backward_batch(current, X, Y, 1.0 / X.shape[0])
            if cfg.clip_norm is not None:
                grads = _clip(grads, cfg.clip_norm)
            params, state = adam_update(state, params, grads, cfg)
            current = model.with_params(params)
            epoch_loss += loss_sum
        history.train_loss.append(epoch_loss / n_train)
        history.val_loss.append(loss(current, val_groups) if val_groups else float("nan"))
        logger.info("epoch %d train %.6g val %.6g", epoch + 1, history.train_loss[-1], history.val_loss[-1])
        if callback is not None:
            callback(epoch, current, history)

    current.meta.update(
        train_seed=cfg.seed,
        epochs=cfg.epochs,
        dataset=_dataset_tag(data),
    )
    return current, history


def _dataset_tag(data) -> str:
    spec = getattr(data, "spec", None)
    if spec is None:
        return "custom"
    return hashlib.sha256(repr(spec).encode()).hexdigest()[:16]
