"""Regularized deep linear networks: losses, exact gradients, and rescalings.

The two objectives handled here are the per-layer regularized squared loss

    F(W) = ||W_L ... W_1 - Y||_F^2 + sum_l lambda_l ||W_l||_F^2

and its uniform-regularizer companion

    G(W) = ||W_L ... W_1 - sqrt(lam) Y||_F^2 + lam * sum_l ||W_l||_F^2,

where lam is the product of the per-layer regularization weights.  The two
problems share critical points up to the per-layer rescaling implemented by
:func:`rescale_f_to_g`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Matrix shapes do not chain into a valid network."""


@dataclass(frozen=True)
class DimChain:
    """Layer dimension chain (d_0, d_1, ..., d_L) of an L-layer network, L >= 2."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) < 3:
            raise ShapeError(f"need at least 2 layers (3 dims), got dims={dims}")
        if any(d < 1 for d in dims):
            raise ShapeError(f"all dimensions must be >= 1, got dims={dims}")

    @property
    def depth(self) -> int:
        return len(self.dims) - 1

    @property
    def d_in(self) -> int:
        return self.dims[0]

    @property
    def d_out(self) -> int:
        return self.dims[-1]

    @property
    def d_min(self) -> int:
        return min(self.d_in, self.d_out)

    @property
    def hidden(self) -> tuple[int, ...]:
        return self.dims[1:-1]

    @property
    def assumption1(self) -> bool:
        """Every hidden width at least as large as min(d_0, d_L)."""
        return min(self.hidden) >= self.d_min


@dataclass(frozen=True)
class RegParams:
    """Per-layer regularization weights lambda_1, ..., lambda_L (all > 0)."""

    lambdas: tuple[float, ...]

    def __post_init__(self):
        lams = tuple(float(x) for x in self.lambdas)
        object.__setattr__(self, "lambdas", lams)
        if len(lams) < 2:
            raise ValueError("need one weight per layer, at least 2 layers")
        if any(not math.isfinite(x) or x <= 0.0 for x in lams):
            raise ValueError(f"regularization weights must be positive, got {lams}")

    @classmethod
    def uniform(cls, value: float, depth: int) -> "RegParams":
        return cls((float(value),) * depth)

    @property
    def depth(self) -> int:
        return len(self.lambdas)

    @property
    def lambda_prod(self) -> float:
        return float(np.prod(self.lambdas))

    @property
    def lambda_min(self) -> float:
        return min(self.lambdas)

    @property
    def lambda_max(self) -> float:
        return max(self.lambdas)


@dataclass
class WeightStack:
    """The tuple W = (W_1, ..., W_L); layer l has shape d_l x d_{l-1}."""

    layers: list[np.ndarray]

    def __post_init__(self):
        self.layers = [np.asarray(w, dtype=float) for w in self.layers]
        if len(self.layers) < 2:
            raise ShapeError("a network needs at least 2 layers")
        for l in range(1, len(self.layers)):
            if self.layers[l].shape[1] != self.layers[l - 1].shape[0]:
                raise ShapeError(
                    f"layer {l + 1} has {self.layers[l].shape[1]} columns but "
                    f"layer {l} has {self.layers[l - 1].shape[0]} rows"
                )

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.layers[0].shape[1],) + tuple(w.shape[0] for w in self.layers)

    def dim_chain(self) -> DimChain:
        return DimChain(self.dims)

    def copy(self) -> "WeightStack":
        return WeightStack([w.copy() for w in self.layers])

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(w * w)) for w in self.layers))

    def __add__(self, other: "WeightStack") -> "WeightStack":
        return WeightStack([a + b for a, b in zip(self.layers, other.layers)])

    def __sub__(self, other: "WeightStack") -> "WeightStack":
        return WeightStack([a - b for a, b in zip(self.layers, other.layers)])

    def scale(self, c: float) -> "WeightStack":
        return WeightStack([c * w for w in self.layers])

    @classmethod
    def zeros(cls, dims) -> "WeightStack":
        dims = dims.dims if isinstance(dims, DimChain) else tuple(dims)
        return cls([np.zeros((dims[l + 1], dims[l])) for l in range(len(dims) - 1)])

    @classmethod
    def gaussian(cls, dims, rng: np.random.Generator) -> "WeightStack":
        dims = dims.dims if isinstance(dims, DimChain) else tuple(dims)
        return cls(
            [rng.standard_normal((dims[l + 1], dims[l])) for l in range(len(dims) - 1)]
        )


def _check_target(stack: WeightStack, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=float)
    d_out, d_in = stack.layers[-1].shape[0], stack.layers[0].shape[1]
    if target.shape != (d_out, d_in):
        raise ShapeError(
            f"target has shape {target.shape}, expected ({d_out}, {d_in})"
        )
    return target


def _check_reg(stack: WeightStack, reg: RegParams) -> None:
    if reg.depth != stack.depth:
        raise ShapeError(
            f"{reg.depth} regularization weights for a {stack.depth}-layer network"
        )


def partial_product(stack: WeightStack, i: int, j: int) -> np.ndarray:
    """Product W_i W_{i-1} ... W_j (1-based); the empty range j == i + 1 is identity.

    The identity returned for an empty range has the size of the seam it sits
    on: d_i rows/columns (so W_{0:1} is I_{d_0} and W_{L:L+1} is I_{d_L}).
    """
    L = stack.depth
    dims = stack.dims
    if not (0 <= i <= L and 1 <= j <= L + 1 and j <= i + 1):
        raise IndexError(f"invalid product range i={i}, j={j} for L={L}")
    if j == i + 1:
        return np.eye(dims[i])
    out = stack.layers[j - 1]
    for l in range(j, i):
        out = stack.layers[l] @ out
    return out


def product_all(stack: WeightStack) -> np.ndarray:
    """End-to-end map W_L ... W_1."""
    return partial_product(stack, stack.depth, 1)


def loss_f(stack: WeightStack, target: np.ndarray, reg: RegParams) -> float:
    """Squared residual of the end-to-end map plus per-layer Tikhonov terms."""
    target = _check_target(stack, target)
    _check_reg(stack, reg)
    resid = product_all(stack) - target
    value = float(np.sum(resid * resid))
    for lam, w in zip(reg.lambdas, stack.layers):
        value += lam * float(np.sum(w * w))
    return value


def grad_f(stack: WeightStack, target: np.ndarray, reg: RegParams) -> WeightStack:
    """Exact gradient of :func:`loss_f` with respect to every layer.

    Prefix products W_{l-1:1} and suffix products W_{L:l+1} are accumulated in
    one forward and one backward sweep so the total cost stays linear in the
    number of layers.
    """
    target = _check_target(stack, target)
    _check_reg(stack, reg)
    L = stack.depth
    prefix = [None] * (L + 1)  # prefix[l] = W_{l:1}, prefix[0] = I
    prefix[0] = np.eye(stack.layers[0].shape[1])
    for l in range(1, L + 1):
        prefix[l] = stack.layers[l - 1] @ prefix[l - 1]
    suffix = [None] * (L + 2)  # suffix[l] = W_{L:l}, suffix[L+1] = I
    suffix[L + 1] = np.eye(stack.layers[-1].shape[0])
    for l in range(L, 0, -1):
        suffix[l] = suffix[l + 1] @ stack.layers[l - 1]
    resid = prefix[L] - target
    grads = []
    for l in range(1, L + 1):
        g = 2.0 * (suffix[l + 1].T @ resid @ prefix[l - 1].T)
        g += 2.0 * reg.lambdas[l - 1] * stack.layers[l - 1]
        grads.append(g)
    return WeightStack(grads)


def grad_norm_f(stack: WeightStack, target: np.ndarray, reg: RegParams) -> float:
    return grad_f(stack, target, reg).norm()


def _uniform_companion(reg: RegParams) -> tuple[float, RegParams, float]:
    lam = reg.lambda_prod
    return lam, RegParams.uniform(lam, reg.depth), math.sqrt(lam)


def loss_g(stack: WeightStack, target: np.ndarray, reg: RegParams) -> float:
    """Uniform-regularizer loss with target scaled by sqrt of the product weight."""
    _, uni, root = _uniform_companion(reg)
    return loss_f(stack, root * np.asarray(target, dtype=float), uni)


def grad_g(stack: WeightStack, target: np.ndarray, reg: RegParams) -> WeightStack:
    _, uni, root = _uniform_companion(reg)
    return grad_f(stack, root * np.asarray(target, dtype=float), uni)


def grad_norm_g(stack: WeightStack, target: np.ndarray, reg: RegParams) -> float:
    return grad_g(stack, target, reg).norm()


def rescale_f_to_g(stack: WeightStack, reg: RegParams) -> WeightStack:
    """Map a point of the per-layer problem to the uniform problem: W_l -> sqrt(lambda_l) W_l."""
    _check_reg(stack, reg)
    return WeightStack(
        [math.sqrt(lam) * w for lam, w in zip(reg.lambdas, stack.layers)]
    )


def rescale_g_to_f(stack: WeightStack, reg: RegParams) -> WeightStack:
    """Inverse of :func:`rescale_f_to_g`."""
    _check_reg(stack, reg)
    return WeightStack(
        [w / math.sqrt(lam) for lam, w in zip(reg.lambdas, stack.layers)]
    )
