"""From-scratch fully connected network engine in float64.

Three tanh hidden layers of equal width, linear output, mean-squared-error
objective, Adam updates, seeded mini-batch training with a held-out
validation split. No autodiff framework: the backward pass is written out
and checked against finite differences in the test suite.

Parameters live in one contiguous float64 buffer with per-layer views so
the optimizer runs whole-model vector operations; gradients reuse a
training workspace to keep the inner loop allocation-free.

Model file layout: one UTF-8 JSON header line (layer dims, activation
names, hidden width, seed, training metadata) terminated by a newline,
followed by a little-endian float64 blob holding, per layer, the weight
matrix in row-major order then the bias vector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:  # fused optimizer kernel; the numpy fallback is ~5x slower, same result
    import numba

    @numba.njit(cache=True, fastmath=False)
    def _adam_fused(param, g, m, v, lr, beta1, beta2, eps, c1, c2):  # pragma: no cover
        for i in range(param.size):
            mi = beta1 * m[i] + (1.0 - beta1) * g[i]
            vi = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            m[i] = mi
            v[i] = vi
            param[i] -= lr * (mi / c1) / (math.sqrt(vi / c2) + eps)

except ImportError:  # pragma: no cover
    _adam_fused = None

__all__ = [
    "MlpModel", "TrainConfig", "AdamState", "LearningCurve", "Gradients",
    "init_mlp", "forward", "backward", "mse", "init_adam", "adam_step",
    "train", "save_model", "load_model",
]


def _layer_views(dims: list[int], flat: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    weights, biases, offset = [], [], 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out))
        offset += fan_in * fan_out
        biases.append(flat[offset : offset + fan_out])
        offset += fan_out
    assert offset == flat.size
    return weights, biases


def _param_count(dims: list[int]) -> int:
    return sum(i * o + o for i, o in zip(dims[:-1], dims[1:]))


@dataclass
class MlpModel:
    """Weights and shapes of one fully connected network."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "tanh"
    output_activation: str = "identity"
    seed: int = 0
    metadata: dict = field(default_factory=dict)
    flat: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.layer_dims) - 1:
            raise ValueError("need one weight matrix per layer transition")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != want or b.shape != (want[1],):
                raise ValueError(f"layer {i}: shapes {w.shape}/{b.shape} do not match {want}")

    @property
    def d_in(self) -> int:
        return self.layer_dims[0]

    @property
    def d_out(self) -> int:
        return self.layer_dims[-1]

    @property
    def hidden_width(self) -> int:
        return self.layer_dims[1]


def _from_flat(dims: list[int], flat: np.ndarray, **kwargs) -> MlpModel:
    weights, biases = _layer_views(dims, flat)
    return MlpModel(layer_dims=dims, weights=weights, biases=biases, flat=flat, **kwargs)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings; defaults are the reference recipe."""

    learning_rate: float = 0.001
    batch_size: int = 50
    epochs: int = 40
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0,1)")


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the model parameters."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0
    flat_m: np.ndarray | None = field(default=None, repr=False)
    flat_v: np.ndarray | None = field(default=None, repr=False)


@dataclass
class Gradients:
    """Parameter gradients of the half-mean-squared-error objective."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    flat: np.ndarray | None = field(default=None, repr=False)


@dataclass
class LearningCurve:
    """Per-epoch running training MSE and post-epoch validation MSE."""

    train_mse: np.ndarray
    val_mse: np.ndarray


def init_mlp(d_in: int, hidden_width: int, d_out: int, seed: int = 0,
             n_hidden: int = 3) -> MlpModel:
    """Xavier-uniform weights, zero biases, deterministic under the seed."""
    if min(d_in, hidden_width, d_out) <= 0 or n_hidden <= 0:
        raise ValueError("all dimensions must be positive")
    dims = [d_in] + [hidden_width] * n_hidden + [d_out]
    rng = np.random.default_rng(seed)
    flat = np.zeros(_param_count(dims))
    weights, biases = _layer_views(dims, flat)
    for w in weights:
        limit = np.sqrt(6.0 / sum(w.shape))
        w[:] = rng.uniform(-limit, limit, size=w.shape)
    return MlpModel(layer_dims=dims, weights=weights, biases=biases, seed=seed, flat=flat)


def _as_batch(x: np.ndarray, dim: int, name: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"{name} must have {dim} features, got shape {x.shape}")
    return x, single


class _Workspace:
    """Reusable buffers for one (model, max batch) combination."""

    def __init__(self, model: MlpModel, max_batch: int):
        dims = model.layer_dims
        self.max_batch = max_batch
        self.acts = [np.empty((max_batch, d)) for d in dims[1:]]
        self.deltas = [np.empty((max_batch, d)) for d in dims[1:]]
        self.tanh_tmp = [np.empty((max_batch, d)) for d in dims[1:-1]]
        grad_flat = np.empty(_param_count(dims))
        gw, gb = _layer_views(dims, grad_flat)
        self.grads = Gradients(weights=gw, biases=gb, flat=grad_flat)
        self.adam_tmp = np.empty(_param_count(dims))


def _forward_ws(model: MlpModel, x: np.ndarray, ws: _Workspace) -> np.ndarray:
    """Forward pass into workspace activation buffers; returns the output view."""
    b = x.shape[0]
    a = x
    last = len(model.weights) - 1
    for i, (w, bias) in enumerate(zip(model.weights, model.biases)):
        z = ws.acts[i][:b]
        np.matmul(a, w, out=z)
        z += bias
        if i != last:
            np.tanh(z, out=z)
        a = z
    return a


def _forward_plain(model: MlpModel, x: np.ndarray) -> np.ndarray:
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = z if i == last else np.tanh(z)
    return a


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Network output for one vector or a batch; rejects non-finite input."""
    xb, single = _as_batch(x, model.d_in, "input")
    if not np.isfinite(xb).all():
        raise ValueError("input contains NaN or infinity")
    out = _forward_plain(model, xb)
    return out[0] if single else out


def mse(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    """Mean squared error averaged over batch and output dimension."""
    xb, _ = _as_batch(x, model.d_in, "input")
    yb, _ = _as_batch(y, model.d_out, "target")
    out = _forward_plain(model, xb)
    return float(np.mean((out - yb) ** 2))


def _backward_ws(model: MlpModel, x: np.ndarray, y: np.ndarray,
                 ws: _Workspace) -> tuple[Gradients, float]:
    """Gradients of 0.5*mean((f(x)-y)^2) plus the batch MSE, buffers reused."""
    b = x.shape[0]
    out = _forward_ws(model, x, ws)
    delta = ws.deltas[-1][:b]
    np.subtract(out, y, out=delta)
    batch_mse = float(np.dot(delta.ravel(), delta.ravel())) / delta.size
    delta /= b * model.d_out
    grads = ws.grads
    n_layers = len(model.weights)
    for i in range(n_layers - 1, -1, -1):
        a_prev = x if i == 0 else ws.acts[i - 1][:b]
        np.matmul(a_prev.T, delta, out=grads.weights[i])
        np.sum(delta, axis=0, out=grads.biases[i])
        if i > 0:
            nxt = ws.deltas[i - 1][:b]
            np.matmul(delta, model.weights[i].T, out=nxt)
            t = ws.tanh_tmp[i - 1][:b]
            a = ws.acts[i - 1][:b]
            np.multiply(a, a, out=t)
            np.subtract(1.0, t, out=t)
            nxt *= t
            delta = nxt
    return grads, batch_mse


def backward(model: MlpModel, x: np.ndarray, y: np.ndarray) -> Gradients:
    """Exact gradients of 0.5 * mean((forward(x) - y)^2)."""
    xb, _ = _as_batch(x, model.d_in, "input")
    yb, _ = _as_batch(y, model.d_out, "target")
    if xb.shape[0] != yb.shape[0]:
        raise ValueError(f"batch mismatch: {xb.shape[0]} inputs vs {yb.shape[0]} targets")
    ws = _Workspace(model, xb.shape[0])
    grads, _ = _backward_ws(model, xb, yb, ws)
    return grads


def init_adam(model: MlpModel) -> AdamState:
    dims = model.layer_dims
    flat_m = np.zeros(_param_count(dims))
    flat_v = np.zeros(_param_count(dims))
    m_w, m_b = _layer_views(dims, flat_m)
    v_w, v_b = _layer_views(dims, flat_v)
    return AdamState(m_w=m_w, v_w=v_w, m_b=m_b, v_b=v_b, flat_m=flat_m, flat_v=flat_v)


def _adam_vec(param: np.ndarray, g: np.ndarray, m: np.ndarray, v: np.ndarray,
              t_buf: np.ndarray, lr: float, beta1: float, beta2: float,
              eps: float, c1: float, c2: float) -> None:
    np.multiply(m, beta1, out=m)
    np.multiply(g, 1.0 - beta1, out=t_buf)
    m += t_buf
    np.multiply(v, beta2, out=v)
    np.multiply(g, g, out=t_buf)
    t_buf *= 1.0 - beta2
    v += t_buf
    np.divide(v, c2, out=t_buf)
    np.sqrt(t_buf, out=t_buf)
    t_buf += eps
    np.divide(m, t_buf, out=t_buf)
    t_buf *= lr / c1
    param -= t_buf


def adam_step(
    model: MlpModel,
    grads: Gradients,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    tmp: np.ndarray | None = None,
) -> tuple[MlpModel, AdamState]:
    """Standard bias-corrected Adam update, applied in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    if model.flat is not None and grads.flat is not None and state.flat_m is not None:
        if _adam_fused is not None:
            _adam_fused(model.flat, grads.flat, state.flat_m, state.flat_v,
                        lr, beta1, beta2, eps, c1, c2)
            return model, state
        if tmp is None:
            tmp = np.empty_like(model.flat)
        _adam_vec(model.flat, grads.flat, state.flat_m, state.flat_v,
                  tmp, lr, beta1, beta2, eps, c1, c2)
        return model, state
    for i in range(len(model.weights)):
        for param, g, m, v in (
            (model.weights[i], grads.weights[i], state.m_w[i], state.v_w[i]),
            (model.biases[i], grads.biases[i], state.m_b[i], state.v_b[i]),
        ):
            _adam_vec(param, g, m, v, np.empty_like(g), lr, beta1, beta2, eps, c1, c2)
    return model, state


def train(model: MlpModel, inputs: np.ndarray, targets: np.ndarray,
          cfg: TrainConfig = TrainConfig()) -> tuple[MlpModel, LearningCurve]:
    """Seeded mini-batch training with a held-out validation split.

    The training curve records the running mean of mini-batch MSEs within
    each epoch (the model evolves during it); the validation curve is a
    full pass after each epoch. Raises if any parameter goes non-finite.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"need matching 2-D inputs/targets, got {x.shape} and {y.shape}")
    n = x.shape[0]
    if n < 2:
        raise ValueError("dataset must contain at least two examples")
    if x.shape[1] != model.d_in or y.shape[1] != model.d_out:
        raise ValueError(
            f"dataset dims {x.shape[1]}/{y.shape[1]} do not match model "
            f"{model.d_in}/{model.d_out}")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n)
    n_val = min(max(int(round(n * cfg.validation_fraction)), 1), n - 1)
    val_idx, train_idx = order[:n_val], order[n_val:]
    x_val, y_val = x[val_idx], y[val_idx]
    x_tr, y_tr = np.ascontiguousarray(x[train_idx]), np.ascontiguousarray(y[train_idx])
    n_tr = x_tr.shape[0]

    state = init_adam(model)
    ws = _Workspace(model, min(cfg.batch_size, n_tr))
    train_curve = np.empty(cfg.epochs)
    val_curve = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_tr)
        loss_sum = 0.0
        for start in range(0, n_tr, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            grads, batch_mse = _backward_ws(model, x_tr[idx], y_tr[idx], ws)
            adam_step(model, grads, state, cfg.learning_rate,
                      cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, tmp=ws.adam_tmp)
            loss_sum += batch_mse * idx.size
        train_curve[epoch] = loss_sum / n_tr
        val_curve[epoch] = mse(model, x_val, y_val)
        for w, b in zip(model.weights, model.biases):
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ArithmeticError(f"non-finite parameters after epoch {epoch}")
    return model, LearningCurve(train_mse=train_curve, val_mse=val_curve)


# -- persistence -----------------------------------------------------------------

def save_model(model: MlpModel, path: str | Path) -> None:
    header = {
        "layer_dims": model.layer_dims,
        "hidden_activation": model.hidden_activation,
        "output_activation": model.output_activation,
        "hidden_width": model.hidden_width,
        "seed": model.seed,
        "metadata": model.metadata,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for w, b in zip(model.weights, model.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path: str | Path) -> MlpModel:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        blob = f.read()
    dims = header["layer_dims"]
    expect = _param_count(dims) * 8
    if len(blob) != expect:
        raise ValueError(f"model blob is {len(blob)} bytes, expected {expect}")
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    return _from_flat(
        dims, flat,
        hidden_activation=header["hidden_activation"],
        output_activation=header["output_activation"],
        seed=header.get("seed", 0),
        metadata=header.get("metadata", {}),
    )
