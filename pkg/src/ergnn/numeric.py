"""Dense float64 linear algebra, activations, losses and Adam.

Every matrix in the package is a 2-D ``numpy.ndarray`` of dtype float64.
Backward passes are written out by hand per layer; there is no tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError

BCE_EPS = 1e-12


def as_matrix(x) -> np.ndarray:
    """Coerce ``x`` to a 2-D float64 array (scalars and vectors become rows)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got array with shape {arr.shape}")
    return arr


@dataclass
class Parameter:
    """A trainable matrix together with its accumulated gradient."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]
    name: str = ""

    def __post_init__(self):
        self.value = as_matrix(self.value).copy()
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        else:
            self.grad = as_matrix(self.grad).copy()
        if self.grad.shape != self.value.shape:
            raise DimensionError(
                f"grad shape {self.grad.shape} != value shape {self.value.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_param(cls, param: Parameter, **kwargs) -> "AdamState":
        return cls(np.zeros_like(param.value), np.zeros_like(param.value), **kwargs)


# -- linear layer -----------------------------------------------------------


def linear_forward(W: Parameter, b: Parameter, x: np.ndarray):
    """Return ``(x @ W.T + b, cache)``.

    ``W`` is ``out × in``, ``b`` a ``1 × out`` row broadcast over the rows of ``x``.
    """
    x = as_matrix(x)
    if x.shape[1] != W.value.shape[1]:
        raise DimensionError(
            f"input shape {x.shape} incompatible with weight shape {W.value.shape}"
        )
    if b.value.shape != (1, W.value.shape[0]):
        raise DimensionError(
            f"bias shape {b.value.shape} incompatible with weight shape {W.value.shape}"
        )
    out = x @ W.value.T + b.value
    return out, x


def linear_backward(W: Parameter, b: Parameter, cache: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Accumulate into ``W.grad``/``b.grad`` and return the gradient w.r.t. the input."""
    x = cache
    W.grad += grad_out.T @ x
    b.grad += grad_out.sum(axis=0, keepdims=True)
    return grad_out @ W.value


# -- activations --------------------------------------------------------------


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return np.where(x > 0.0, grad_out, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(s: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Backward through a sigmoid given its *output* ``s``."""
    return grad_out * s * (1.0 - s)


# -- losses -------------------------------------------------------------------


def bce_loss(p: np.ndarray, y: np.ndarray) -> float:
    """Summed binary cross-entropy with ``p`` clamped to ``[eps, 1 - eps]``."""
    p = as_matrix(p)
    y = as_matrix(y)
    if p.shape != y.shape:
        raise DimensionError(f"prediction shape {p.shape} != label shape {y.shape}")
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.sum(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Summed BCE of ``sigmoid(z)`` against ``y`` and its gradient w.r.t. ``z``.

    The loss value goes through :func:`bce_loss` so the clamp is identical;
    the gradient uses the fused form ``sigmoid(z) - y``. The two only
    disagree once ``|z| > ~27``, where the clamp is active.
    """
    z = as_matrix(z)
    y = as_matrix(y)
    if z.shape != y.shape:
        raise DimensionError(f"logit shape {z.shape} != label shape {y.shape}")
    p = sigmoid(z)
    return bce_loss(p, y), p - y


# -- optimisation -------------------------------------------------------------


def adam_step(param: Parameter, state: AdamState, lr: float) -> Parameter:
    """One bias-corrected Adam update of ``param`` in place. ``param.grad`` is left alone."""
    if state.m.shape != param.value.shape or state.v.shape != param.value.shape:
        raise DimensionError(
            f"Adam moments {state.m.shape} do not match parameter {param.value.shape}"
        )
    g = param.grad
    state.step_count += 1
    t = state.step_count
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1**t)
    v_hat = state.v / (1.0 - state.beta2**t)
    param.value -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return param


class Adam:
    """Adam over a fixed list of parameters."""

    def __init__(self, params: list[Parameter], lr: float = 0.01, **kwargs):
        self.params = list(params)
        self.lr = lr
        self.states = [AdamState.for_param(p, **kwargs) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p, s in zip(self.params, self.states):
            adam_step(p, s, self.lr)


# -- verification -------------------------------------------------------------


def finite_diff_grad(
    loss_fn: Callable[[Parameter], float], param: Parameter, step: float = 1e-5
) -> np.ndarray:
    """Central-difference estimate of d loss / d param, entry by entry.

    ``param.value`` is restored exactly after each probe.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    grad = np.zeros_like(param.value)
    flat = param.value.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = loss_fn(param)
        flat[i] = orig - step
        down = loss_fn(param)
        flat[i] = orig
        grad.reshape(-1)[i] = (up - down) / (2.0 * step)
    return grad


def uniform_init(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))
