"""Forward dynamics of the basic, gated and LSTM recurrent cells.

Parameters live in a flat ``{name: array}`` mapping with names ``W_<g>x``
(n x d), ``W_<g>s`` (n x n) and ``b_<g>`` (n,) for every gate ``g`` of the
cell kind, plus the readout ``W`` (d x n) and ``b`` (d,).  All step
functions accept a single vector or a batch of row vectors.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._validation import check_points

GATES = {
    "basic": ("i",),
    "gated": ("i", "r", "m"),
    "lstm": ("i", "f", "m", "o"),
}
CELL_KINDS = tuple(GATES)


def sigmoid(z):
    # tanh form avoids overflow warnings for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def gate_names(kind: str) -> tuple:
    try:
        return GATES[kind]
    except KeyError:
        raise ValueError(f"unknown cell kind {kind!r}; expected one of {CELL_KINDS}") from None


def param_names(kind: str) -> list[str]:
    names = []
    for g in gate_names(kind):
        names += [f"W_{g}x", f"W_{g}s", f"b_{g}"]
    return names + ["W", "b"]


def param_shapes(kind: str, n: int, d: int) -> dict[str, tuple]:
    shapes = {}
    for g in gate_names(kind):
        shapes[f"W_{g}x"] = (n, d)
        shapes[f"W_{g}s"] = (n, n)
        shapes[f"b_{g}"] = (n,)
    shapes["W"] = (d, n)
    shapes["b"] = (d,)
    return shapes


class ReadoutParams(NamedTuple):
    W: np.ndarray
    b: np.ndarray


@dataclass
class StateTrace:
    states: np.ndarray
    cell_states: np.ndarray | None = None

    def __len__(self):
        return self.states.shape[0]

    @property
    def last(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class ModelBundle:
    kind: str
    n: int
    d: int
    params: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = param_shapes(self.kind, self.n, self.d)
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be >= 1")
        if set(self.params) != set(shapes):
            raise ValueError(
                f"{self.kind} model needs parameters {sorted(shapes)}, got {sorted(self.params)}"
            )
        clean = {}
        for name in param_names(self.kind):
            arr = np.asarray(self.params[name], dtype=np.float64)
            if arr.shape != shapes[name]:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shapes[name]}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            clean[name] = arr
        self.params = clean

    @property
    def gates(self) -> tuple:
        return GATES[self.kind]

    @property
    def readout_params(self) -> ReadoutParams:
        return ReadoutParams(self.params["W"], self.params["b"])

    def copy(self) -> "ModelBundle":
        return ModelBundle(
            self.kind, self.n, self.d, {k: v.copy() for k, v in self.params.items()}, dict(self.meta)
        )

    def with_params(self, params: dict) -> "ModelBundle":
        return ModelBundle(self.kind, self.n, self.d, params, dict(self.meta))

    def fingerprint(self) -> str:
        return hashlib.sha256(dumps_model(self).encode()).hexdigest()


def _check_step_args(params, x, s_prev, gate="i"):
    Wx = params[f"W_{gate}x"]
    if np.shape(x)[-1] != Wx.shape[1]:
        raise ValueError(f"input has dimension {np.shape(x)[-1]}, expected {Wx.shape[1]}")
    if np.shape(s_prev)[-1] != Wx.shape[0]:
        raise ValueError(f"state has dimension {np.shape(s_prev)[-1]}, expected {Wx.shape[0]}")


def _affine(params, g, x, s):
    return x @ params[f"W_{g}x"].T + s @ params[f"W_{g}s"].T + params[f"b_{g}"]


def basic_step(params, x, s_prev):
    _check_step_args(params, x, s_prev)
    return np.tanh(_affine(params, "i", x, s_prev))


def gated_step(params, x, s_prev):
    """Gated update with elementwise products.

    The interpolation weight ``i`` keeps the previous state and ``1 - i``
    admits the candidate ``m``; the reset gate scales the recurrent term of
    the candidate only.
    """
    _check_step_args(params, x, s_prev)
    i = sigmoid(_affine(params, "i", x, s_prev))
    r = sigmoid(_affine(params, "r", x, s_prev))
    m = np.tanh(x @ params["W_mx"].T + r * (s_prev @ params["W_ms"].T) + params["b_m"])
    return (1.0 - i) * m + i * s_prev


def lstm_step(params, x, s_prev, c_prev):
    _check_step_args(params, x, s_prev)
    o = sigmoid(_affine(params, "o", x, s_prev))
    i = sigmoid(_affine(params, "i", x, s_prev))
    f = sigmoid(_affine(params, "f", x, s_prev))
    m = np.tanh(_affine(params, "m", x, s_prev))
    c = f * c_prev + i * m
    return o * np.tanh(c), c


def cell_step(kind, params, x, s_prev, c_prev=None):
    """Dispatch one step of ``kind``; returns ``(s, c)`` with ``c`` None unless lstm."""
    if kind == "basic":
        return basic_step(params, x, s_prev), None
    if kind == "gated":
        return gated_step(params, x, s_prev), None
    if kind == "lstm":
        if c_prev is None:
            raise ValueError("lstm step needs the previous cell state")
        return lstm_step(params, x, s_prev, c_prev)
    gate_names(kind)


def run_sequence(model: ModelBundle, X) -> StateTrace:
    """Run the cell over every point of ``X`` starting from zero state(s)."""
    pts = X.points if hasattr(X, "points") else X
    pts = check_points(pts, d=model.d, name="input sequence")
    m = pts.shape[0]
    states = np.empty((m, model.n))
    cells = np.empty((m, model.n)) if model.kind == "lstm" else None
    s = np.zeros(model.n)
    c = np.zeros(model.n) if cells is not None else None
    for k in range(m):
        s, c = cell_step(model.kind, model.params, pts[k], s, c)
        states[k] = s
        if cells is not None:
            cells[k] = c
    assert np.all(np.abs(states) <= 1.0), "hidden state left [-1, 1]"
    return StateTrace(states, cells)


def readout(r: ReadoutParams, s):
    W, b = r
    if np.shape(s)[-1] != W.shape[1]:
        raise ValueError(f"state has dimension {np.shape(s)[-1]}, expected {W.shape[1]}")
    return s @ W.T + b


def init_params(kind: str, n: int, d: int, seed: int) -> ModelBundle:
    """Uniform(-k, k) weights with k = 1/sqrt(fan_in); zero biases.

    Gate units see d inputs and n recurrent states (fan_in = d + n); readout
    units see n states.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 1])))
    params = {}
    k_gate = 1.0 / np.sqrt(d + n)
    for name, shape in param_shapes(kind, n, d).items():
        if name.startswith("b"):
            params[name] = np.zeros(shape)
        elif name == "W":
            k = 1.0 / np.sqrt(n)
            params[name] = rng.uniform(-k, k, size=shape)
        else:
            params[name] = rng.uniform(-k_gate, k_gate, size=shape)
    return ModelBundle(kind, n, d, params, {"init_seed": int(seed)})


# -- persistence -----------------------------------------------------------

MODEL_MAGIC = "rnnmodel v1"


def dumps_model(model: ModelBundle) -> str:
    lines = [f"{MODEL_MAGIC} kind={model.kind} n={model.n} d={model.d}"]
    for key in sorted(model.meta):
        lines.append(f"# {key}={model.meta[key]}")
    for name in param_names(model.kind):
        arr = model.params[name]
        mat = arr.reshape(arr.shape[0], -1)
        lines.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
        for row in mat:
            lines.append(" ".join(format(float(v), ".17g") for v in row))
    return "\n".join(lines) + "\n"


def _parse_meta_value(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def loads_model(text: str) -> ModelBundle:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MODEL_MAGIC + " "):
        raise ValueError("not an rnnmodel v1 file")
    fields = dict(tok.split("=", 1) for tok in lines[0][len(MODEL_MAGIC) + 1 :].split())
    kind, n, d = fields["kind"], int(fields["n"]), int(fields["d"])
    shapes = param_shapes(kind, n, d)
    meta, params = {}, {}
    pos = 1
    while pos < len(lines):
        line = lines[pos].strip()
        pos += 1
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = _parse_meta_value(value)
            continue
        name, rows, cols = line.split()
        rows, cols = int(rows), int(cols)
        block = np.array([[float(v) for v in lines[pos + r].split()] for r in range(rows)])
        pos += rows
        if name not in shapes:
            raise ValueError(f"unexpected tensor {name!r} for kind {kind}")
        params[name] = block.reshape(shapes[name])
    return ModelBundle(kind, n, d, params, meta)


def save_model(model: ModelBundle, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> ModelBundle:
    with open(path) as fh:
        return loads_model(fh.read())
