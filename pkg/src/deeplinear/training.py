"""Gradient descent on the regularized losses and their nonlinear extensions.

Plain full-batch gradient descent with the joint stopping rule
``grad_sq <= tol`` and ``|F change| <= tol`` reproduces the convergence
experiments: linear rates near critical points, escape from two-layer
saddles, trapping at deeper non-optimal components.  The extended objectives
add an input matrix, per-layer biases, and elementwise activations, with
gradients by explicit layerwise backpropagation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .critical import optimal_profile, profile_from_choices, sample_random_params, \
    construct_critical_point
from .network import DimChain, RegParams, ShapeError, WeightStack, grad_f, loss_f
from .spectrum import analyze_target
from .util import named_seed, named_stream

ACTIVATIONS = ("identity", "relu", "leaky-relu", "tanh")
MODEL_KINDS = ("linear", "linear-with-bias", "nonlinear")
INIT_SCHEMES = ("near-critical", "uniform-fan-based", "gaussian")
LEAKY_SLOPE = 0.01


class DivergenceError(RuntimeError):
    def __init__(self, message, last_finite=None):
        super().__init__(message)
        self.last_finite = last_finite


class InsufficientDataError(ValueError):
    """Not enough usable points for the requested fit."""


@dataclass
class ModelSpec:
    """Objective structure: plain product loss, bias terms, or activations."""

    kind: str = "linear"
    activation: str = "identity"
    input_matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"kind must be one of {MODEL_KINDS}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.kind == "linear" and self.activation != "identity":
            raise ValueError("the linear kind uses the identity activation")
        if self.input_matrix is not None:
            self.input_matrix = np.asarray(self.input_matrix, dtype=float)

    @property
    def with_bias(self) -> bool:
        return self.kind in ("linear-with-bias", "nonlinear")


@dataclass
class TrainConfig:
    learning_rate: float = 4.5e-4
    max_iters: int = 100_000
    grad_sq_tol: float = 1e-6
    fval_change_tol: float = 1e-7
    seed: int = 0
    init: str = "near-critical"
    init_scale: float = 0.01
    log_stride: int = 100

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.grad_sq_tol <= 0 or self.fval_change_tol <= 0:
            raise ValueError("stopping tolerances must be positive")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"init must be one of {INIT_SCHEMES}")


@dataclass
class Trajectory:
    f_values: np.ndarray            # F(W^0), ..., F(W^n): one more than steps
    grad_sq: np.ndarray             # squared gradient norm at W^0 .. W^{n-1}
    step_norm_sq: np.ndarray        # ||W^{k+1} - W^k||^2 per step
    snapshots: list[tuple[int, WeightStack]]
    final: WeightStack
    final_biases: list[np.ndarray] | None
    termination: str
    wall_time: float

    @property
    def n_steps(self) -> int:
        return len(self.step_norm_sq)

    @property
    def is_monotone(self) -> bool:
        """Objective nonincreasing along the run (up to 1e-12 relative).

        Informational: large steps can overshoot without diverging, which is
        flagged here rather than treated as an error.
        """
        f = np.asarray(self.f_values)
        return bool(np.all(np.diff(f) <= 1e-12 * (1.0 + np.abs(f[:-1]))))

    def to_csv(self, stride: int = 1) -> str:
        lines = ["iter,F,grad_sq"]
        for k in range(0, self.n_steps, stride):
            lines.append(f"{k},{self.f_values[k]!r},{self.grad_sq[k]!r}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "n_steps": self.n_steps,
            "f_initial": float(self.f_values[0]),
            "f_final": float(self.f_values[-1]),
            "grad_sq_final": float(self.grad_sq[-1]) if self.n_steps else math.nan,
            "monotone": self.is_monotone,
            "termination": self.termination,
            "wall_time": self.wall_time,
        }


def _act(z: np.ndarray, name: str) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky-relu":
        return np.where(z > 0.0, z, LEAKY_SLOPE * z)
    return np.tanh(z)


def _act_deriv(z: np.ndarray, name: str) -> np.ndarray:
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        # subgradient 0 at the kink
        return (z > 0.0).astype(float)
    if name == "leaky-relu":
        return np.where(z > 0.0, 1.0, LEAKY_SLOPE)
    t = np.tanh(z)
    return 1.0 - t * t


def value_and_grad(
    layers: list[np.ndarray],
    biases: list[np.ndarray] | None,
    x: np.ndarray | None,
    target: np.ndarray,
    reg: RegParams,
    activation: str = "identity",
) -> tuple[float, list[np.ndarray], list[np.ndarray] | None]:
    """Objective value and exact layerwise gradients of the extended loss.

    ``x is None`` means the identity input.  Activations apply after every
    layer except the last; biases (when present) are regularized with the
    same per-layer weights as the matrices.
    """
    L = len(layers)
    acts: list[np.ndarray | None] = [x]
    pre: list[np.ndarray] = []
    a = x
    for l in range(L):
        z = layers[l] @ a if a is not None else layers[l].copy()
        if biases is not None:
            z = z + biases[l][:, None]
        pre.append(z)
        a = _act(z, activation) if l < L - 1 else z
        acts.append(a)
    resid = a - target
    value = float(np.sum(resid * resid))
    for lam, w in zip(reg.lambdas, layers):
        value += lam * float(np.sum(w * w))
    if biases is not None:
        for lam, b in zip(reg.lambdas, biases):
            value += lam * float(np.sum(b * b))

    grads: list[np.ndarray | None] = [None] * L
    gbias: list[np.ndarray | None] | None = [None] * L if biases is not None else None
    dz = 2.0 * resid
    for l in range(L - 1, -1, -1):
        gw = dz @ acts[l].T if acts[l] is not None else dz.copy()
        gw += 2.0 * reg.lambdas[l] * layers[l]
        grads[l] = gw
        if biases is not None:
            gbias[l] = dz.sum(axis=1) + 2.0 * reg.lambdas[l] * biases[l]
        if l > 0:
            da = layers[l].T @ dz
            dz = da * _act_deriv(pre[l - 1], activation)
    return value, grads, gbias


def _init_state(model, dims: DimChain, cfg: TrainConfig, center):
    rng = named_stream(cfg.seed, "init")
    d = dims.dims
    if cfg.init == "near-critical":
        if center is None:
            raise ValueError("near-critical initialization needs a center stack")
        stack = center.copy() if isinstance(center, WeightStack) else center.stack.copy()
        layers = [
            w + cfg.init_scale * rng.standard_normal(w.shape) for w in stack.layers
        ]
    elif cfg.init == "uniform-fan-based":
        layers = []
        for l in range(dims.depth):
            fan_in, fan_out = d[l], d[l + 1]
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            layers.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
    else:
        layers = [
            rng.standard_normal((d[l + 1], d[l])) / math.sqrt(d[l])
            for l in range(dims.depth)
        ]
    biases = None
    if model.with_bias:
        biases = []
        for l in range(dims.depth):
            bound = 1.0 / math.sqrt(d[l])
            if cfg.init == "near-critical":
                biases.append(cfg.init_scale * rng.standard_normal(d[l + 1]))
            else:
                biases.append(rng.uniform(-bound, bound, size=d[l + 1]))
    return layers, biases


def train(
    model: ModelSpec,
    target: np.ndarray,
    reg: RegParams,
    cfg: TrainConfig,
    dims: DimChain,
    center: WeightStack | None = None,
) -> Trajectory:
    """Run gradient descent until both stopping tolerances hold jointly.

    The update is exactly W <- W - lr * grad, which downstream diagnostics
    rely on (the safeguard constant of plain descent is 1/lr).
    """
    target = np.asarray(target, dtype=float)
    x = model.input_matrix
    n_cols = x.shape[1] if x is not None else dims.dims[0]
    if x is not None and x.shape[0] != dims.dims[0]:
        raise ShapeError("input matrix rows must match d_0")
    if target.shape != (dims.dims[-1], n_cols):
        raise ShapeError(
            f"target shape {target.shape} does not match ({dims.dims[-1]}, {n_cols})"
        )

    layers, biases = _init_state(model, dims, cfg, center)
    lr = cfg.learning_rate
    f_hist: list[float] = []
    g_hist: list[float] = []
    s_hist: list[float] = []
    snapshots: list[tuple[int, WeightStack]] = []
    snap_stride = max(1, cfg.log_stride)
    last_finite = WeightStack([w.copy() for w in layers])

    t0 = time.perf_counter()
    termination = "max-iters"
    k = 0
    fast_linear = model.kind == "linear" and x is None
    while k < cfg.max_iters:
        if fast_linear:
            stack = WeightStack(layers)
            f_val = loss_f(stack, target, reg)
            gstack = grad_f(stack, target, reg)
            grads, gbias = gstack.layers, None
        else:
            f_val, grads, gbias = value_and_grad(
                layers, biases, x, target, reg, model.activation
            )
        if not math.isfinite(f_val):
            raise DivergenceError(
                f"objective became non-finite at iteration {k}", last_finite
            )
        gsq = sum(float(np.sum(g * g)) for g in grads)
        if gbias is not None:
            gsq += sum(float(np.sum(g * g)) for g in gbias)
        if f_hist and gsq <= cfg.grad_sq_tol and abs(f_val - f_hist[-1]) <= cfg.fval_change_tol:
            f_hist.append(f_val)
            termination = "converged"
            break
        if k % snap_stride == 0:
            snapshots.append((k, WeightStack([w.copy() for w in layers])))
            if len(snapshots) > 128:
                snapshots = snapshots[::2]
                snap_stride *= 2
        last_finite = WeightStack([w.copy() for w in layers])
        f_hist.append(f_val)
        g_hist.append(gsq)
        step_sq = 0.0
        for l in range(len(layers)):
            delta = lr * grads[l]
            step_sq += float(np.sum(delta * delta))
            layers[l] -= delta
        if gbias is not None:
            for l in range(len(biases)):
                delta = lr * gbias[l]
                step_sq += float(np.sum(delta * delta))
                biases[l] -= delta
        s_hist.append(step_sq)
        k += 1
    else:
        # ran out of iterations: record the final value for a complete series
        if fast_linear:
            f_hist.append(loss_f(WeightStack(layers), target, reg))
        else:
            f_val, _, _ = value_and_grad(layers, biases, x, target, reg, model.activation)
            f_hist.append(f_val)

    return Trajectory(
        f_values=np.asarray(f_hist),
        grad_sq=np.asarray(g_hist),
        step_norm_sq=np.asarray(s_hist),
        snapshots=snapshots,
        final=WeightStack([w.copy() for w in layers]),
        final_biases=[b.copy() for b in biases] if biases is not None else None,
        termination=termination,
        wall_time=time.perf_counter() - t0,
    )


@dataclass
class RateFit:
    rate: float
    r_squared: float
    slope: float
    n_points: int


def _fit_log_gap(ks: np.ndarray, logs: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(ks, logs, 1)
    pred = slope * ks + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def estimate_linear_rate(traj: Trajectory, tail_fraction: float = 0.5) -> RateFit:
    """Per-iteration contraction of F(W^k) - F(end), fitted on the tail.

    Points with gap below 1e-14 carry no signal and are excluded.  The gap to
    the final value bends down over the last ~1/(1-rate) iterations by
    construction, so the fit runs twice: a crude pass estimates the rate,
    which then sets how much of the trailing stretch to discard.
    """
    f = np.asarray(traj.f_values, dtype=float)
    f_end = f[-1]
    gaps = f[:-1] - f_end
    valid = np.nonzero(gaps > 1e-14)[0]
    if len(valid) < 5:
        raise InsufficientDataError("fewer than 5 iterates carry a positive gap")

    def window_fit(indices) -> tuple[float, float, np.ndarray]:
        take = max(20, int(len(indices) * tail_fraction))
        window = indices[-take:]
        window = window[:-3] if len(window) > 3 else window
        if len(window) < 20:
            raise InsufficientDataError(
                f"only {len(window)} usable tail points, need at least 20"
            )
        slope, r2 = _fit_log_gap(window.astype(float), np.log(gaps[window]))
        return slope, r2, window

    slope, r2, window = window_fit(valid)
    if slope < 0:
        # Drop the stretch where the unfitted remainder rho^(n-k) exceeds ~2%.
        cut = int(math.log(0.02) / slope) + 1
        trimmed = valid[valid <= valid[-1] - cut]
        if len(trimmed) >= 23:
            slope, r2, window = window_fit(trimmed)
    return RateFit(float(math.exp(slope)), r2, float(slope), len(window))


@dataclass
class Section4Row:
    depth: int
    init_kind: str
    f_center: float
    f_end: float
    rate: float
    r_squared: float
    n_steps: int
    termination: str

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "init": self.init_kind,
            "f_center": self.f_center,
            "f_end": self.f_end,
            "rate": self.rate,
            "r_squared": self.r_squared,
            "n_steps": self.n_steps,
            "termination": self.termination,
        }


SECTION4_CSV_HEADER = "depth,init,f_center,f_end,rate,r_squared,n_steps,termination"


def section4_rows_to_csv(rows: list[Section4Row]) -> str:
    lines = [SECTION4_CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.depth},{r.init_kind},{r.f_center!r},{r.f_end!r},{r.rate!r},"
            f"{r.r_squared!r},{r.n_steps},{r.termination}"
        )
    return "\n".join(lines) + "\n"


def reproduce_section4(
    depths=(2, 4, 6),
    seed: int = 0,
    d_in: int = 10,
    d_hidden: int = 32,
    d_out: int = 20,
    reg_value: float = 1e-4,
    learning_rate: float = 4.5e-4,
    max_iters: int = 400_000,
    init_scale: float = 0.01,
) -> list[Section4Row]:
    """Near-critical-initialization experiment over several depths.

    A fixed Gaussian target is fitted from initializations near an optimal
    component and near a non-optimal one (the smallest target singular value
    dropped).  Two layers escape the saddle; deeper stacks stay trapped.
    """
    rng = named_stream(seed, "instance")
    target = rng.standard_normal((d_out, d_in))
    spectrum = analyze_target(target)
    rows: list[Section4Row] = []
    for depth in depths:
        dims = DimChain((d_in,) + (d_hidden,) * (depth - 1) + (d_out,))
        reg = RegParams.uniform(reg_value, depth)
        saddle_choices = [-1] * spectrum.rank
        saddle_choices[-1] = 0
        centers = {
            "optimal": optimal_profile(spectrum, reg, depth),
            "saddle": profile_from_choices(spectrum, reg, depth, saddle_choices),
        }
        for name, profile in centers.items():
            params = sample_random_params(
                dims, spectrum, seed=named_seed(seed, f"params-{depth}-{name}")
            )
            center = construct_critical_point(
                profile, params, spectrum, reg, depth, target="F", dims=dims
            )
            cfg = TrainConfig(
                learning_rate=learning_rate,
                max_iters=max_iters,
                seed=named_seed(seed, f"init-{depth}-{name}"),
                init="near-critical",
                init_scale=init_scale,
                log_stride=200,
            )
            traj = train(ModelSpec(), target, reg, cfg, dims, center=center.stack)
            try:
                fit = estimate_linear_rate(traj)
                rate, r2 = fit.rate, fit.r_squared
            except InsufficientDataError:
                rate, r2 = math.nan, math.nan
            rows.append(
                Section4Row(
                    depth=depth,
                    init_kind=name,
                    f_center=loss_f(center.stack, target, reg),
                    f_end=float(traj.f_values[-1]),
                    rate=rate,
                    r_squared=r2,
                    n_steps=traj.n_steps,
                    termination=traj.termination,
                )
            )
    return rows
