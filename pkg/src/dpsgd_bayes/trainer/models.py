"""Small models with hand-written, vectorized per-example gradients.

Parameters live in one flat vector ``theta``. Losses are binary
cross-entropy on a single logit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit, log_expit


class Architecture(str, enum.Enum):
    LOGISTIC_REGRESSION = "logistic_regression"
    MLP = "mlp"


@dataclass(frozen=True)
class ModelSpec:
    architecture: Architecture
    input_dim: int
    hidden_width: int = 32
    activation: str = "tanh"
    fit_intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"activation must be tanh or relu, got {self.activation!r}")
        if self.architecture is Architecture.MLP and self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")

    @property
    def n_params(self) -> int:
        d = self.input_dim
        if self.architecture is Architecture.LOGISTIC_REGRESSION:
            return d + int(self.fit_intercept)
        w = self.hidden_width
        return d * w + w + w + 1

    def init(self, rng: np.random.Generator, scale: Optional[float] = None) -> np.ndarray:
        if self.architecture is Architecture.LOGISTIC_REGRESSION:
            s = 0.01 if scale is None else scale
            return s * rng.standard_normal(self.n_params)
        d, w = self.input_dim, self.hidden_width
        s1 = 1.0 / np.sqrt(d) if scale is None else scale
        s2 = 1.0 / np.sqrt(w) if scale is None else scale
        return np.concatenate([s1 * rng.standard_normal(d * w), np.zeros(w),
                               s2 * rng.standard_normal(w), np.zeros(1)])


@dataclass
class ModelState:
    spec: ModelSpec
    theta: np.ndarray
    step: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.spec.n_params,):
            raise ValueError(f"theta has shape {self.theta.shape}, expected ({self.spec.n_params},)")
        if not np.all(np.isfinite(self.theta)):
            raise FloatingPointError("non-finite model weights")


def _unpack_mlp(spec: ModelSpec, theta: np.ndarray):
    d, w = spec.input_dim, spec.hidden_width
    W1 = theta[:d * w].reshape(w, d)
    b1 = theta[d * w:d * w + w]
    w2 = theta[d * w + w:d * w + 2 * w]
    b2 = theta[-1]
    return W1, b1, w2, b2


def _act(spec: ModelSpec, z):
    return np.tanh(z) if spec.activation == "tanh" else np.maximum(z, 0.0)


def _act_grad(spec: ModelSpec, z, a):
    return 1.0 - a * a if spec.activation == "tanh" else (z > 0).astype(float)


def logits(spec: ModelSpec, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    if spec.architecture is Architecture.LOGISTIC_REGRESSION:
        d = spec.input_dim
        out = X @ theta[:d]
        return out + theta[d] if spec.fit_intercept else out
    W1, b1, w2, b2 = _unpack_mlp(spec, theta)
    return _act(spec, X @ W1.T + b1) @ w2 + b2


def loss(spec: ModelSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-example binary cross-entropy."""
    z = logits(spec, theta, X)
    return -(y * log_expit(z) + (1.0 - y) * log_expit(-z))


def per_example_gradients(spec: ModelSpec, theta: np.ndarray, X: np.ndarray,
                          y: np.ndarray) -> np.ndarray:
    """Exact gradients of the per-example loss, shape ``(n, n_params)``.

    Raises:
        FloatingPointError: if any gradient entry is non-finite.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[1] != spec.input_dim:
        raise ValueError(f"X has {X.shape[1]} features, model expects {spec.input_dim}")
    if spec.architecture is Architecture.LOGISTIC_REGRESSION:
        r = expit(logits(spec, theta, X)) - y
        g = r[:, None] * X
        if spec.fit_intercept:
            g = np.hstack([g, r[:, None]])
    else:
        W1, b1, w2, b2 = _unpack_mlp(spec, theta)
        pre = X @ W1.T + b1
        hid = _act(spec, pre)
        r = expit(hid @ w2 + b2) - y
        back = (r[:, None] * w2[None, :]) * _act_grad(spec, pre, hid)
        gW1 = (back[:, :, None] * X[:, None, :]).reshape(len(X), -1)
        g = np.hstack([gW1, back, r[:, None] * hid, r[:, None]])
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite per-example gradient")
    return g


def per_example_gradient(m: ModelState, x: np.ndarray, y: float) -> np.ndarray:
    return per_example_gradients(m.spec, m.theta, np.asarray(x)[None, :], np.array([y]))[0]


def predict(spec: ModelSpec, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    return (logits(spec, theta, X) > 0).astype(int)
