"""Fixed-topology MLP (features -> 32 -> 32 -> K) with hand-rolled
forward/backward, He initialization, Adam, and a linear-warmup learning
rate schedule.

The arithmetic dtype follows the parameter arrays: float32 for production
training, float64 when the gradient-check tests exercise the same code
path at higher precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMOID = "sigmoid"
LEAKY = "leaky"

# Keep sigmoid outputs strictly inside (0, 1) even where float32 saturates.
_SIGMOID_LO = 1e-6
_SIGMOID_HI = 1.0 - 1e-6


@dataclass
class MLPConfig:
    input_dim: int
    output_dim: int
    hidden_dims: tuple[int, ...] = (32, 32)
    alpha: float = 0.01  # leaky-ReLU slope
    output_activation: str = SIGMOID

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("all layer dims must be >= 1")
        if self.alpha <= 0.0:
            raise ValueError("leaky slope must be positive")
        if self.output_activation not in (SIGMOID, LEAKY):
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return list(zip(dims[1:], dims[:-1]))  # (fan_out, fan_in) per layer


@dataclass
class MLPParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def as_dict(self) -> dict[str, np.ndarray]:
        d = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            d[f"w{i}"] = w
            d[f"b{i}"] = b
        return d

    def copy(self) -> "MLPParams":
        return MLPParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])


@dataclass
class TrainStepConfig:
    lr_start: float = 0.05
    lr_end: float = 0.001
    warm_steps: int = 200

    def __post_init__(self):
        if not (self.lr_start >= self.lr_end > 0.0):
            raise ValueError("need lr_start >= lr_end > 0")
        if self.warm_steps < 1:
            raise ValueError("warm_steps must be >= 1")


def lr_at(step: int, cfg: TrainStepConfig) -> float:
    """Linear decay from lr_start to lr_end over warm_steps, then constant."""
    if step < 0:
        raise ValueError("step must be >= 0")
    f = min(step, cfg.warm_steps) / cfg.warm_steps
    return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * f


def he_init(cfg: MLPConfig, rng: np.random.Generator, dtype=np.float32) -> MLPParams:
    weights, biases = [], []
    for fan_out, fan_in in cfg.layer_dims:
        std = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, std, (fan_out, fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MLPParams(weights, biases)


def _leaky(z: np.ndarray, alpha: float) -> np.ndarray:
    return np.where(z >= 0, z, alpha * z)


def _leaky_grad(z: np.ndarray, alpha: float) -> np.ndarray:
    return np.where(z >= 0, 1.0, alpha).astype(z.dtype)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params: MLPParams, cfg: MLPConfig, features: np.ndarray):
    """Run the net on (B, input_dim) features (a single vector also works).

    Returns (outputs, cache); the cache feeds backward_l2.
    """
    x = np.atleast_2d(np.asarray(features))
    if x.shape[1] != cfg.input_dim:
        raise ValueError(f"expected input_dim {cfg.input_dim}, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input features")
    x = x.astype(params.weights[0].dtype, copy=False)
    zs, acts = [], [x]
    a = x
    n_layers = len(params.weights)
    for i in range(n_layers):
        z = a @ params.weights[i].T + params.biases[i]
        zs.append(z)
        if i < n_layers - 1:
            a = _leaky(z, cfg.alpha)
        elif cfg.output_activation == SIGMOID:
            a = _sigmoid(z)
        else:
            a = _leaky(z, cfg.alpha)
        acts.append(a)
    out_raw = acts[-1]
    if cfg.output_activation == SIGMOID:
        out = np.clip(out_raw, _SIGMOID_LO, _SIGMOID_HI)
    else:
        out = out_raw
    cache = {"zs": zs, "acts": acts, "out_raw": out_raw}
    return out, cache


def l2_loss(out: np.ndarray, targets: np.ndarray, mask: np.ndarray | None = None) -> float:
    out = np.atleast_2d(out)
    targets = np.atleast_2d(targets)
    d = out - targets
    if mask is not None:
        d = d * mask
    return float(np.mean(np.sum(d * d, axis=1) / out.shape[1]))


def backward_l2(params: MLPParams, cfg: MLPConfig, cache: dict,
                targets: np.ndarray, mask: np.ndarray | None = None):
    """Exact gradients of the (batch and neuron averaged) masked L2 loss.

    Returns (grad_params, grad_input); grad_input routes into the encoder.
    """
    zs, acts = cache["zs"], cache["acts"]
    out = acts[-1]
    targets = np.atleast_2d(np.asarray(targets, dtype=out.dtype))
    b, k = out.shape
    d_out = 2.0 * (out - targets) / (b * k)
    if mask is not None:
        d_out = d_out * np.asarray(mask, dtype=out.dtype)

    n_layers = len(params.weights)
    if cfg.output_activation == SIGMOID:
        s = cache["out_raw"]
        dz = d_out * s * (1.0 - s)
    else:
        dz = d_out * _leaky_grad(zs[-1], cfg.alpha)

    g_w = [None] * n_layers
    g_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        g_w[i] = dz.T @ acts[i]
        g_b[i] = dz.sum(axis=0)
        da = dz @ params.weights[i]
        if i > 0:
            dz = da * _leaky_grad(zs[i - 1], cfg.alpha)
        else:
            d_input = da
    return MLPParams(g_w, g_b), d_input


@dataclass
class AdamState:
    """First/second moments for a named set of parameter arrays."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], **kw) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()}, **kw)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float):
    """One bias-corrected Adam update, in place. Returns (params, state)."""
    state.t += 1
    b1c = 1.0 - state.beta1 ** state.t
    b2c = 1.0 - state.beta2 ** state.t
    for key, p in params.items():
        g = grads[key].astype(p.dtype, copy=False)
        m = state.m[key]
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)
    return params, state
