#!/usr/bin/env python3
"""
Dense two-layer relu MLPs with multiple linear heads, their exact gradients,
the gradient-penalty parameter gradient, and ADAM.

Weights are numpy float64 arrays: W1 is (hidden, in), b1 is (hidden,), each
head k has W2_k (out_k, hidden) and b2_k (out_k,). Inputs are batches of rows;
a 1-D input is treated as a batch of one and results are squeezed back.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core.errors import NumericsError, ShapeError


@dataclass(frozen=True)
class MlpParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: Tuple[np.ndarray, ...]
    b2: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.W1.ndim != 2:
            raise ShapeError(f"W1 must be 2-D, got shape {self.W1.shape}")
        hidden = self.W1.shape[0]
        if self.b1.shape != (hidden,):
            raise ShapeError(f"b1 shape {self.b1.shape} does not match hidden size {hidden}")
        if not self.W2 or len(self.W2) != len(self.b2):
            raise ShapeError("Need at least one head and one bias per head")
        for k, (W2, b2) in enumerate(zip(self.W2, self.b2)):
            if W2.ndim != 2 or W2.shape[1] != hidden:
                raise ShapeError(f"Head {k} weight shape {W2.shape} does not chain from hidden size {hidden}")
            if b2.shape != (W2.shape[0],):
                raise ShapeError(f"Head {k} bias shape {b2.shape} does not match {W2.shape[0]} outputs")

    @classmethod
    def initialize(
            cls,
            rng: np.random.Generator,
            input_dim: int,
            hidden_dim: int,
            head_dims: Sequence[int],
    ) -> "MlpParams":
        """He-normal first layer, 1/sqrt(fan-in) heads, zero biases."""
        W1 = rng.normal(0.0, np.sqrt(2.0 / input_dim), size=(hidden_dim, input_dim))
        W2 = tuple(rng.normal(0.0, np.sqrt(1.0 / hidden_dim), size=(out, hidden_dim)) for out in head_dims)
        return cls(
            W1=W1,
            b1=np.zeros(hidden_dim),
            W2=W2,
            b2=tuple(np.zeros(out) for out in head_dims),
        )

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int, head_dims: Sequence[int]) -> "MlpParams":
        return cls(
            W1=np.zeros((hidden_dim, input_dim)),
            b1=np.zeros(hidden_dim),
            W2=tuple(np.zeros((out, hidden_dim)) for out in head_dims),
            b2=tuple(np.zeros(out) for out in head_dims),
        )

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def head_dims(self) -> Tuple[int, ...]:
        return tuple(W2.shape[0] for W2 in self.W2)

    def arrays(self) -> List[np.ndarray]:
        """Parameters in canonical order: W1, b1, then W2_k, b2_k per head."""
        out = [self.W1, self.b1]
        for W2, b2 in zip(self.W2, self.b2):
            out.extend([W2, b2])
        return out

    def names(self) -> List[str]:
        out = ["W1", "b1"]
        for k in range(len(self.W2)):
            out.extend([f"W2.{k}", f"b2.{k}"])
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "MlpParams":
        if len(arrays) != 2 + 2 * len(self.W2):
            raise ShapeError(f"Expected {2 + 2 * len(self.W2)} arrays, got {len(arrays)}")
        return MlpParams(
            W1=arrays[0],
            b1=arrays[1],
            W2=tuple(arrays[2::2]),
            b2=tuple(arrays[3::2]),
        )

    @classmethod
    def from_named(cls, named: dict) -> "MlpParams":
        n_heads = sum(1 for name in named if name.startswith("W2."))
        return cls(
            W1=named["W1"],
            b1=named["b1"],
            W2=tuple(named[f"W2.{k}"] for k in range(n_heads)),
            b2=tuple(named[f"b2.{k}"] for k in range(n_heads)),
        )


@dataclass(frozen=True)
class GradientSet:
    """Per-parameter gradients, in the canonical order of MlpParams.arrays()."""
    arrays: Tuple[np.ndarray, ...]

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "GradientSet":
        return cls(tuple(np.zeros_like(a) for a in params.arrays()))

    def norm(self) -> float:
        """Frobenius norm over the concatenation of every array."""
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays)))

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet(tuple(factor * a for a in self.arrays))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays)

    def _check(self, other: "GradientSet") -> None:
        if len(self.arrays) != len(other.arrays) or any(
                a.shape != b.shape for a, b in zip(self.arrays, other.arrays)):
            raise ShapeError("Gradient sets are not shape-congruent")

    def __add__(self, other: "GradientSet") -> "GradientSet":
        self._check(other)
        return GradientSet(tuple(a + b for a, b in zip(self.arrays, other.arrays)))

    def __sub__(self, other: "GradientSet") -> "GradientSet":
        self._check(other)
        return GradientSet(tuple(a - b for a, b in zip(self.arrays, other.arrays)))


@dataclass(frozen=True)
class MlpCache:
    x: np.ndarray
    z1: np.ndarray
    h: np.ndarray
    squeeze: bool


def _as_batch(x: np.ndarray, width: int) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    batch = x.reshape(1, -1) if squeeze else x
    if batch.ndim != 2 or batch.shape[1] != width:
        raise ShapeError(f"Input of shape {x.shape} does not match input dimension {width}")
    return batch, squeeze


def mlp_forward(params: MlpParams, x: np.ndarray) -> Tuple[List[np.ndarray], MlpCache]:
    """
    h = relu(W1 x + b1); head k = W2_k h + b2_k.

    Args:
        params: Network weights
        x: Input row or (n, in) batch

    Returns:
        (list of head outputs, cache for mlp_backward)
    """
    batch, squeeze = _as_batch(x, params.input_dim)
    z1 = batch @ params.W1.T + params.b1
    h = np.maximum(z1, 0.0)
    outputs = [h @ W2.T + b2 for W2, b2 in zip(params.W2, params.b2)]
    if squeeze:
        outputs = [out[0] for out in outputs]
    return outputs, MlpCache(x=batch, z1=z1, h=h, squeeze=squeeze)


def mlp_backward(
        params: MlpParams,
        cache: MlpCache,
        grad_outputs: Sequence[np.ndarray],
) -> Tuple[GradientSet, np.ndarray]:
    """
    Reverse-mode pass; parameter gradients are summed over the batch.

    Args:
        params: Weights used in the forward pass
        cache: Cache returned by mlp_forward
        grad_outputs: Upstream gradient for every head, shaped like the head outputs

    Returns:
        (GradientSet, gradient with respect to the input, shaped like the input)
    """
    if len(grad_outputs) != len(params.W2):
        raise ShapeError(f"Expected {len(params.W2)} head gradients, got {len(grad_outputs)}")

    n = cache.x.shape[0]
    dh = np.zeros_like(cache.h)
    head_grads = []
    for k, (W2, grad) in enumerate(zip(params.W2, grad_outputs)):
        grad = np.asarray(grad, dtype=np.float64).reshape(n, -1) if cache.squeeze else np.asarray(grad, dtype=np.float64)
        if grad.shape != (n, W2.shape[0]):
            raise ShapeError(f"Head {k} gradient shape {grad.shape} does not match output {(n, W2.shape[0])}")
        head_grads.extend([grad.T @ cache.h, grad.sum(axis=0)])
        dh += grad @ W2

    dz1 = dh * (cache.z1 > 0)
    dx = dz1 @ params.W1
    grads = GradientSet(tuple([dz1.T @ cache.x, dz1.sum(axis=0)] + head_grads))
    return grads, (dx[0] if cache.squeeze else dx)


class PenaltyResult(NamedTuple):
    value: float
    grads: GradientSet
    zero_norm_count: int


def input_gradient(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Row-wise gradient of a single-output network with respect to its input."""
    if params.head_dims != (1,):
        raise ShapeError(f"Input gradient needs a scalar network, got heads {params.head_dims}")
    batch, squeeze = _as_batch(x, params.input_dim)
    z1 = batch @ params.W1.T + params.b1
    g = ((z1 > 0) * params.W2[0][0]) @ params.W1
    return g[0] if squeeze else g


def grad_penalty_param_grads(params: MlpParams, x_hat: np.ndarray, lam: float) -> PenaltyResult:
    """
    Mean of lam * (||grad_x D(x_hat)||_2 - 1)^2 and its exact parameter gradient.

    For D(x) = w . relu(W1 x + b1) + c the input gradient is g = W1^T (m * w)
    with m the relu mask. Writing u = m * w and q = dP/dg = 2 lam (||g|| - 1) g / ||g||,
    the penalty gradient is u q^T for W1 and m * (W1 q) for w; b1 and c only act
    through the mask, whose derivative is zero away from the kink.

    Args:
        params: Single-head critic weights
        x_hat: Evaluation point(s)
        lam: Penalty weight

    Returns:
        PenaltyResult; samples with a zero input gradient contribute lam and no gradient
    """
    if params.head_dims != (1,):
        raise ShapeError(f"Gradient penalty needs a scalar critic, got heads {params.head_dims}")
    batch, _ = _as_batch(x_hat, params.input_dim)
    n = batch.shape[0]

    mask = (batch @ params.W1.T + params.b1 > 0).astype(np.float64)
    u = mask * params.W2[0][0]
    g = u @ params.W1
    norms = np.linalg.norm(g, axis=1)

    zero = norms == 0.0
    coef = np.zeros(n)
    coef[~zero] = 2.0 * lam * (norms[~zero] - 1.0) / norms[~zero]
    q = coef[:, None] * g

    dW1 = u.T @ q / n
    dw = np.sum(mask * (q @ params.W1.T), axis=0) / n
    grads = GradientSet((
        dW1,
        np.zeros_like(params.b1),
        dw.reshape(params.W2[0].shape),
        np.zeros_like(params.b2[0]),
    ))
    value = float(np.mean(lam * (norms - 1.0) ** 2))
    return PenaltyResult(value=value, grads=grads, zero_norm_count=int(zero.sum()))


@dataclass(frozen=True)
class AdamState:
    m: Tuple[np.ndarray, ...]
    v: Tuple[np.ndarray, ...]
    step: int = 0
    lr: float = 5e-5
    beta1: float = 0.5
    beta2: float = 0.8
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 5e-5, beta1: float = 0.5,
                   beta2: float = 0.8, epsilon: float = 1e-8) -> "AdamState":
        zeros = tuple(np.zeros_like(a) for a in params.arrays())
        return cls(m=zeros, v=zeros, step=0, lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)


def adam_step(params: MlpParams, grads: GradientSet, state: AdamState) -> Tuple[MlpParams, AdamState]:
    """
    One bias-corrected ADAM descent step.

    Args:
        params: Current parameters
        grads: Gradient of the objective being minimised
        state: Moment estimates from the previous step

    Returns:
        (updated parameters, updated state)
    """
    arrays = params.arrays()
    if len(arrays) != len(grads.arrays) or any(p.shape != g.shape for p, g in zip(arrays, grads.arrays)):
        raise ShapeError("Gradients are not shape-congruent with parameters")
    if not grads.is_finite():
        raise NumericsError(f"Non-finite gradient at ADAM step {state.step + 1}")

    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(arrays, grads.arrays, state.m, state.v):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        new_params.append(p - update)
        new_m.append(m)
        new_v.append(v)

    new_state = AdamState(
        m=tuple(new_m), v=tuple(new_v), step=step,
        lr=state.lr, beta1=state.beta1, beta2=state.beta2, epsilon=state.epsilon,
    )
    return params.with_arrays(new_params), new_state


def clip_combine(g_a: GradientSet, g_m: GradientSet) -> GradientSet:
    """
    g_a + min(||g_a||, ||g_m||) * g_m / ||g_m||, norms taken over all parameters at once.

    The mutual-information part never outweighs the adversarial gradient.
    """
    g_a._check(g_m)
    norm_m = g_m.norm()
    if norm_m == 0.0:
        return g_a
    return g_a + g_m.scaled(min(g_a.norm(), norm_m) / norm_m)
