"""Construction of the critical-point set and distances to it.

For every singular value y_i of the target, the stationary layer singular
values sigma solve

    sigma^(2L-1) - sqrt(lam) * y_i * sigma^(L-1) + lam * sigma = 0,

whose nonnegative roots are 0 plus the real roots of

    q(x) = x^(2L-2) - sqrt(lam) * y_i * x^(L-2) + lam

on (0, (sqrt(lam) y_i)^(1/L)].  A choice of one root per index defines a
"sigma profile"; each profile parametrizes one connected component of the
critical set, swept out by free orthogonal factors.  This module solves the
scalar equation, enumerates profiles, builds explicit critical points for
either objective, and estimates the distance from an arbitrary point to a
component by alternating orthogonal-Procrustes minimization over the free
factors (a certified upper bound), with the singular-value perturbation
inequality supplying a certified lower bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .network import (
    DimChain,
    RegParams,
    ShapeError,
    WeightStack,
    grad_norm_f,
    grad_norm_g,
)

if TYPE_CHECKING:  # pragma: no cover
    from .spectrum import TargetSpectrum


class SolverError(RuntimeError):
    """Scalar root refinement failed to converge."""


class AssumptionError(ValueError):
    """A width or regularization assumption required here does not hold."""


class InternalConsistencyError(RuntimeError):
    """A quantity violated an invariant it is supposed to satisfy exactly."""


GRID_CELLS = 4096
BISECT_TOL = 1e-14
DEGENERACY_TOL = 1e-7  # |q'(root)| below this (scaled) flags a multiple root


@dataclass(frozen=True)
class ScalarRoots:
    """Nonnegative roots of the scalar stationarity equation for one y value.

    ``roots`` is ascending and always starts with 0.  ``degenerate[k]`` marks
    a multiple root (vanishing derivative), the situation excluded by the
    regularization assumption.
    """

    roots: tuple[float, ...]
    degenerate: tuple[bool, ...]
    residuals: tuple[float, ...]

    def positive(self) -> tuple[float, ...]:
        return tuple(r for r in self.roots if r > 0.0)


def _bisect(q, lo: float, hi: float, qlo: float, qhi: float) -> float:
    if qlo == 0.0:
        return lo
    if qhi == 0.0:
        return hi
    if qlo * qhi > 0.0:
        raise SolverError(f"root not bracketed on [{lo}, {hi}]: q={qlo}, {qhi}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        qmid = q(mid)
        if qmid == 0.0 or hi - lo < BISECT_TOL * max(1.0, hi):
            return mid
        if (qmid < 0.0) == (qlo < 0.0):
            lo, qlo = mid, qmid
        else:
            hi, qhi = mid, qmid
    raise SolverError(
        f"bisection did not converge on [{lo}, {hi}] (q values {qlo}, {qhi})"
    )


def solve_scalar_equation(y: float, lam: float, depth: int) -> ScalarRoots:
    """All nonnegative stationary values for one target singular value.

    Uses a 4096-cell bracketing grid on (0, (sqrt(lam) y)^(1/L)] (every
    positive root lies in that interval since x^L <= sqrt(lam) y there),
    bisection on each sign change, and one Newton polish.  The interior
    minimizer of q is added to the grid so tangential (double) roots are
    caught and flagged.
    """
    y = float(y)
    lam = float(lam)
    L = int(depth)
    if y < 0 or lam <= 0 or L < 2:
        raise ValueError(f"need y >= 0, lam > 0, depth >= 2; got {y}, {lam}, {L}")
    root_lam = math.sqrt(lam)
    scale = lam + root_lam * y
    res_tol = 1e-12 * scale

    def q(x: float) -> float:
        return x ** (2 * L - 2) - root_lam * y * x ** (L - 2) + lam

    def qp(x: float) -> float:
        if L == 2:
            return 2.0 * x
        return (2 * L - 2) * x ** (2 * L - 3) - (L - 2) * root_lam * y * x ** (L - 3)

    # The zero root is degenerate exactly when q(0) = 0 as well (only possible
    # for L = 2 with y = sqrt(lam)), making 0 a higher-order stationary value.
    zero_degenerate = abs(q(0.0)) <= res_tol and abs(qp(0.0)) <= DEGENERACY_TOL * scale

    roots = [0.0]
    flags = [zero_degenerate]
    residuals = [0.0]

    if y > 0.0:
        bracket = (root_lam * y) ** (1.0 / L)
        grid = list(np.linspace(0.0, bracket, GRID_CELLS + 1))
        if L >= 3:
            # q decreases then increases; its only interior critical point.
            x_min = ((L - 2) * root_lam * y / (2 * L - 2)) ** (1.0 / L)
            if 0.0 < x_min < bracket:
                grid.append(x_min)
                grid.sort()
        qvals = [q(x) for x in grid]

        found: list[float] = []
        for k in range(len(grid) - 1):
            a, b = grid[k], grid[k + 1]
            qa, qb = qvals[k], qvals[k + 1]
            if qa == 0.0 and a > 0.0:
                found.append(a)
            elif qa * qb < 0.0:
                found.append(_bisect(q, a, b, qa, qb))
        if qvals[-1] == 0.0:
            found.append(grid[-1])
        # A tangential root leaves no sign change; the grid point at the
        # interior minimum exposes it.
        for k, x in enumerate(grid):
            if x > 0.0 and abs(qvals[k]) <= res_tol and not any(
                abs(x - r) <= 1e-9 * max(1.0, bracket) for r in found
            ):
                found.append(x)

        polished = []
        for r in sorted(found):
            d = qp(r)
            if abs(d) > DEGENERACY_TOL * scale:
                step = q(r) / d
                if abs(step) < 1e-6 * max(1.0, bracket):
                    r = r - step
            polished.append(r)

        dedup_tol = 1e-9 * max(1.0, bracket)
        for r in polished:
            if any(abs(r - prev) <= dedup_tol for prev in roots):
                continue
            res = abs(q(r))
            if res > res_tol * 10:
                raise SolverError(
                    f"root {r} of (y={y}, lam={lam}, L={L}) has residual {res}"
                )
            roots.append(r)
            flags.append(abs(qp(r)) <= DEGENERACY_TOL * scale)
            residuals.append(res)

    order = np.argsort(roots)
    return ScalarRoots(
        tuple(float(roots[k]) for k in order),
        tuple(bool(flags[k]) for k in order),
        tuple(float(residuals[k]) for k in order),
    )


@dataclass(frozen=True)
class SigmaProfile:
    """One choice of stationary value per positive target singular value.

    ``sigma_eq[i]`` is the root chosen for the equation of y_{i+1} (so it is
    aligned with the target's singular-value order, not sorted), ``sigma`` is
    the same multiset sorted nonincreasing and zero-padded to d_min, and the
    partition fields describe the distinct positive values of ``sigma``.
    """

    sigma: tuple[float, ...]          # sorted nonincreasing, length d_min
    sigma_eq: tuple[float, ...]       # per-index chosen roots, length rank(Y)
    choice: tuple[int, ...]           # index into each equation's root list
    degenerate: bool                  # any chosen root is a multiple root
    t_bounds: tuple[int, ...] = field(default=())
    multiplicities: tuple[int, ...] = field(default=())

    @property
    def r_sigma(self) -> int:
        return sum(1 for v in self.sigma if v > 0.0)

    @property
    def p_distinct(self) -> int:
        return len(self.multiplicities)

    @property
    def g_max(self) -> int:
        return max(self.multiplicities) if self.multiplicities else 0

    @property
    def is_zero(self) -> bool:
        return self.r_sigma == 0

    @property
    def sigma_max(self) -> float:
        return self.sigma[0] if self.sigma else 0.0

    @property
    def sigma_min_pos(self) -> float:
        pos = [v for v in self.sigma if v > 0.0]
        return min(pos) if pos else 0.0

    def min_abs_phi_prime(self, lam: float, depth: int) -> float:
        from .constants import phi_prime

        pos = [v for v in self.sigma if v > 0.0]
        if not pos:
            return math.inf
        return min(abs(phi_prime(v, lam, depth)) for v in pos)


def _make_profile(sigma_eq, choice, d_min, degenerate) -> SigmaProfile:
    sigma = sorted((float(v) for v in sigma_eq), reverse=True)
    sigma += [0.0] * (d_min - len(sigma))
    r_sigma = sum(1 for v in sigma if v > 0.0)
    # Distinct-value partition of the positive part; chosen roots of distinct
    # equations never coincide, so exact grouping with a tiny tolerance works.
    bounds = [0]
    tol = 1e-12 * max(1.0, sigma[0] if sigma else 0.0)
    for k in range(1, r_sigma):
        if sigma[k - 1] - sigma[k] > tol:
            bounds.append(k)
    if r_sigma > 0:
        bounds.append(r_sigma)
    t_bounds = tuple(bounds) if r_sigma > 0 else (0,)
    mults = tuple(t_bounds[i + 1] - t_bounds[i] for i in range(len(t_bounds) - 1))
    return SigmaProfile(
        sigma=tuple(sigma),
        sigma_eq=tuple(float(v) for v in sigma_eq),
        choice=tuple(int(c) for c in choice),
        degenerate=bool(degenerate),
        t_bounds=t_bounds,
        multiplicities=mults,
    )


def profile_from_choices(
    spectrum: "TargetSpectrum", reg: RegParams, depth: int, choices
) -> SigmaProfile:
    """Profile picking one explicit root (by index, ascending) per positive y_i.

    Negative indices follow Python semantics, so -1 selects the largest root
    of each equation.
    """
    lam = reg.lambda_prod
    choices = list(choices)
    if len(choices) != spectrum.rank:
        raise ValueError(
            f"need one choice per positive singular value ({spectrum.rank}), "
            f"got {len(choices)}"
        )
    sigma_eq = []
    idx = []
    degenerate = False
    for i, c in enumerate(choices):
        roots = solve_scalar_equation(float(spectrum.y[i]), lam, depth)
        c = int(c)
        val = roots.roots[c]
        if c < 0:
            c += len(roots.roots)
        sigma_eq.append(val)
        idx.append(c)
        degenerate = degenerate or roots.degenerate[c]
    return _make_profile(sigma_eq, idx, spectrum.d_min, degenerate)


def zero_profile(spectrum: "TargetSpectrum", reg: RegParams, depth: int) -> SigmaProfile:
    return profile_from_choices(spectrum, reg, depth, [0] * spectrum.rank)


def optimal_profile(
    spectrum: "TargetSpectrum", reg: RegParams, depth: int
) -> SigmaProfile:
    """Profile with the largest root at every index: the lowest-loss component."""
    return profile_from_choices(spectrum, reg, depth, [-1] * spectrum.rank)


@dataclass
class ProfileEnumeration:
    profiles: list[SigmaProfile]
    total_combinations: int
    truncated: bool


def enumerate_sigma_profiles(
    spectrum: "TargetSpectrum", reg: RegParams, depth: int, cap: int = 1024
) -> ProfileEnumeration:
    """All distinct sigma profiles (up to ``cap``), zero profile included.

    The Cartesian product over per-index root choices is walked largest-root
    first so truncation keeps the low-loss profiles; profiles are
    deduplicated on the sorted vector, since equal sorted vectors label the
    same component.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    lam = reg.lambda_prod
    d_min = spectrum.d_min
    per_index: list[ScalarRoots] = []
    for i in range(spectrum.rank):
        per_index.append(solve_scalar_equation(float(spectrum.y[i]), lam, depth))

    total = 1
    for roots in per_index:
        total *= len(roots.roots)

    profiles: list[SigmaProfile] = []
    seen: set[tuple[float, ...]] = set()
    truncated = False
    # Descending root order per index: first combination is the all-largest
    # profile, last is all-zero.
    choice_lists = [
        [(len(r.roots) - 1 - k) for k in range(len(r.roots))] for r in per_index
    ]
    for combo in itertools.product(*choice_lists):
        sigma_eq = [per_index[i].roots[c] for i, c in enumerate(combo)]
        degenerate = any(per_index[i].degenerate[c] for i, c in enumerate(combo))
        prof = _make_profile(sigma_eq, combo, d_min, degenerate)
        key = tuple(
            round(v / max(1.0, prof.sigma_max), 12) for v in prof.sigma
        )
        if key in seen:
            continue
        if len(profiles) >= cap:
            truncated = True
            break
        seen.add(key)
        profiles.append(prof)

    zero_key = tuple(0.0 for _ in range(d_min))
    if zero_key not in seen:
        profiles.append(
            _make_profile(
                [0.0] * spectrum.rank,
                [0] * spectrum.rank,
                d_min,
                any(r.degenerate[0] for r in per_index),
            )
        )

    # Deterministic order: lexicographically decreasing sorted vectors.
    profiles.sort(key=lambda p: tuple(-v for v in p.sigma))
    return ProfileEnumeration(profiles, total, truncated)


@dataclass
class CriticalParams:
    """Free orthogonal factors of one critical-set component.

    ``inner`` holds Q_2, ..., Q_L (Q_l acts on the seam of width d_{l-1});
    ``blocks`` holds one orthogonal factor per repeated-singular-value block
    of the target, shared between the first and last layer.
    """

    inner: list[np.ndarray]
    blocks: list[np.ndarray]

    def validate(self) -> None:
        for q in self.inner + self.blocks:
            n = q.shape[0]
            if q.shape != (n, n):
                raise ShapeError("orthogonal factor is not square")
            if n and np.linalg.norm(q.T @ q - np.eye(n)) > 1e-10:
                raise ValueError("factor is not orthogonal to 1e-10")


def haar_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix via sign-fixed QR of a Gaussian."""
    if n == 0:
        return np.zeros((0, 0))
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    signs = np.where(np.diag(r) >= 0.0, 1.0, -1.0)
    return q * signs


def identity_params(dims: DimChain, spectrum: "TargetSpectrum") -> CriticalParams:
    inner = [np.eye(dims.dims[l - 1]) for l in range(2, dims.depth + 1)]
    blocks = [np.eye(h) for h in spectrum.multiplicities]
    return CriticalParams(inner, blocks)


def sample_random_params(
    dims: DimChain,
    spectrum: "TargetSpectrum",
    profile: SigmaProfile | None = None,
    seed: int | np.random.Generator = 0,
) -> CriticalParams:
    """Haar-random orthogonal factors, deterministic for a fixed seed."""
    del profile  # factor shapes depend only on the dims and the target blocks
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    inner = [haar_orthogonal(rng, dims.dims[l - 1]) for l in range(2, dims.depth + 1)]
    blocks = [haar_orthogonal(rng, h) for h in spectrum.multiplicities]
    return CriticalParams(inner, blocks)


def _embed_diag(values: np.ndarray, rows: int, cols: int) -> np.ndarray:
    out = np.zeros((rows, cols))
    k = len(values)
    out[:k, :k] = np.diag(values)
    return out


def _layer_scales(reg: RegParams, target: str) -> list[float]:
    if target == "F":
        return [1.0 / math.sqrt(lam) for lam in reg.lambdas]
    if target == "G":
        return [1.0] * reg.depth
    raise ValueError(f"target must be 'F' or 'G', got {target!r}")


def _sigma_matrices(
    profile: SigmaProfile, dims: DimChain, reg: RegParams, target: str
) -> list[np.ndarray]:
    scales = _layer_scales(reg, target)
    sig = np.asarray(profile.sigma_eq)
    return [
        _embed_diag(sig * scales[l - 1], dims.dims[l], dims.dims[l - 1])
        for l in range(1, dims.depth + 1)
    ]


def _block_mixers(
    params: CriticalParams, spectrum: "TargetSpectrum", d_in: int, d_out: int
) -> tuple[np.ndarray, np.ndarray]:
    """Left/right repeated-block factors M_in (d_in) and M_out (d_out).

    Trailing blocks (beyond the target's rank) stay identity: they multiply
    zero rows/columns of the singular matrices and never affect the point.
    """
    m_in = np.eye(d_in)
    m_out = np.eye(d_out)
    for i in range(len(spectrum.multiplicities)):
        sl = spectrum.block_slice(i)
        m_in[sl, sl] = params.blocks[i]
        m_out[sl, sl] = params.blocks[i].T
    return m_in, m_out


@dataclass
class CriticalPoint:
    """An explicit critical point together with its construction frames.

    Layer l factors as ``left[l] @ sigma_mats[l] @ right[l]`` (0-based lists),
    which downstream code uses to build one-parameter perturbation families
    and tangent directions along the component.
    """

    stack: WeightStack
    profile: SigmaProfile
    params: CriticalParams
    target: str
    left: list[np.ndarray]
    right: list[np.ndarray]
    sigma_mats: list[np.ndarray]

    @property
    def depth(self) -> int:
        return self.stack.depth


def construct_critical_point(
    profile: SigmaProfile,
    params: CriticalParams,
    spectrum: "TargetSpectrum",
    reg: RegParams,
    depth: int,
    target: str = "F",
    dims: DimChain | None = None,
) -> CriticalPoint:
    """Assemble the critical point determined by a profile and free factors.

    The first layer carries the target's right singular frame, the last layer
    its left frame; repeated-value blocks of the target are mixed by the
    shared orthogonal factors in ``params``.
    """
    if dims is None:
        sizes = [spectrum.d_in] + [spectrum.d_min] * (depth - 1) + [spectrum.d_out]
        dims = DimChain(tuple(sizes))
    if dims.depth != depth or reg.depth != depth:
        raise ShapeError("depth mismatch between dims, reg, and request")
    if dims.dims[0] != spectrum.d_in or dims.dims[-1] != spectrum.d_out:
        raise ShapeError("dims do not match the target's shape")
    if not dims.assumption1:
        raise AssumptionError(
            f"hidden widths {dims.hidden} are narrower than min(d_0, d_L)="
            f"{dims.d_min}; the closed-form construction needs them at least that wide"
        )
    if len(params.inner) != depth - 1 or len(params.blocks) != spectrum.p_distinct:
        raise ShapeError("params do not match the dims/spectrum block structure")
    params.validate()

    sig_mats = _sigma_matrices(profile, dims, reg, target)
    m_in, m_out = _block_mixers(params, spectrum, dims.dims[0], dims.dims[-1])

    q = {l: params.inner[l - 2] for l in range(2, depth + 1)}
    left: list[np.ndarray] = []
    right: list[np.ndarray] = []
    left.append(q[2])
    right.append(m_in @ spectrum.v.T)
    for l in range(2, depth):
        left.append(q[l + 1])
        right.append(q[l].T)
    left.append(spectrum.u @ m_out)
    right.append(q[depth].T)

    layers = [left[k] @ sig_mats[k] @ right[k] for k in range(depth)]
    return CriticalPoint(
        stack=WeightStack(layers),
        profile=profile,
        params=params,
        target=target,
        left=left,
        right=right,
        sigma_mats=sig_mats,
    )


def singular_direction(point: CriticalPoint, index: int) -> WeightStack:
    """Unit perturbation that shifts the ``index``-th stationary value in every layer.

    Moving along this direction keeps the construction frames fixed and
    changes only one diagonal entry of every layer's singular matrix; it is
    the one-parameter family used to probe degenerate instances.
    """
    L = point.depth
    dirs = []
    for k in range(L):
        rows, cols = point.sigma_mats[k].shape
        e = np.zeros((rows, cols))
        e[index, index] = 1.0
        dirs.append(point.left[k] @ e @ point.right[k])
    d = WeightStack(dirs)
    return d.scale(1.0 / d.norm())


def tangent_basis(point: CriticalPoint, spectrum: "TargetSpectrum") -> np.ndarray:
    """Orthonormal basis (rows) of the component's tangent space at the point.

    Directions come from perturbing each free orthogonal factor along its
    skew-symmetric tangent; the zero profile has an empty tangent space.
    """
    L = point.depth
    layers = point.stack.layers
    sizes = [w.size for w in layers]
    total = sum(sizes)

    def flatten(stack_layers) -> np.ndarray:
        return np.concatenate([w.ravel() for w in stack_layers])

    rows = []

    def skew_pairs(n):
        for a in range(n):
            for b in range(a + 1, n):
                yield a, b

    # Seam factors Q_l touch layers l-1 (left side) and l (right side).
    for l in range(2, L + 1):
        n = point.params.inner[l - 2].shape[0]
        for a, b in skew_pairs(n):
            s = np.zeros((n, n))
            s[a, b] = 1.0
            s[b, a] = -1.0
            d = [np.zeros_like(w) for w in layers]
            # layer l-1 (0-based l-2): left factor is Q_l
            d[l - 2] = point.left[l - 2] @ s @ point.sigma_mats[l - 2] @ point.right[l - 2]
            # layer l (0-based l-1): right factor is Q_l^T
            d[l - 1] = -point.left[l - 1] @ point.sigma_mats[l - 1] @ s @ point.right[l - 1]
            rows.append(flatten(d))

    # Shared block factors touch the first and last layer only.
    for i, h in enumerate(spectrum.multiplicities):
        sl = spectrum.block_slice(i)
        for a, b in skew_pairs(h):
            s_small = np.zeros((h, h))
            s_small[a, b] = 1.0
            s_small[b, a] = -1.0
            d = [np.zeros_like(w) for w in layers]
            dm_in = np.zeros((layers[0].shape[1], layers[0].shape[1]))
            dm_in[sl, sl] = point.params.blocks[i] @ s_small
            d[0] = point.left[0] @ point.sigma_mats[0] @ dm_in @ spectrum.v.T
            dm_out = np.zeros((layers[-1].shape[0], layers[-1].shape[0]))
            dm_out[sl, sl] = s_small.T @ point.params.blocks[i].T
            d[-1] = spectrum.u @ dm_out @ point.sigma_mats[-1] @ point.right[-1]
            rows.append(flatten(d))

    if not rows:
        return np.zeros((0, total))
    mat = np.vstack(rows)
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    keep = s > 1e-10 * max(1.0, s[0])
    return vt[keep]


def _polar(c: np.ndarray) -> np.ndarray:
    if c.shape[0] == 0:
        return c
    u, _, vt = np.linalg.svd(c)
    return u @ vt


def layer_singular_values(stack: WeightStack) -> list[np.ndarray]:
    return [np.linalg.svd(w, compute_uv=False) for w in stack.layers]


def mirsky_lower_bound(
    stack: WeightStack,
    profile: SigmaProfile,
    reg: RegParams,
    target: str = "F",
    layer_svals: list[np.ndarray] | None = None,
) -> float:
    """Certified lower bound on the distance to the profile's component.

    Singular values are 1-Lipschitz under Frobenius perturbations, so the
    per-layer gap between the stack's singular values and the component's
    fixed ones bounds the distance from below.  Pass ``layer_svals`` to reuse
    decompositions when probing many profiles against one stack.
    """
    scales = _layer_scales(reg, target)
    sig = np.sort(np.asarray(profile.sigma_eq))[::-1]
    if layer_svals is None:
        layer_svals = layer_singular_values(stack)
    total = 0.0
    for k, w in enumerate(stack.layers):
        m = min(w.shape)
        ref = np.zeros(m)
        ref[: len(sig)] = sig * scales[k]
        ref = np.sort(ref)[::-1]
        diff = layer_svals[k] - ref
        total += float(diff @ diff)
    return math.sqrt(total)


@dataclass
class ComponentDistance:
    distance: float
    lower_bound: float
    nearest: WeightStack
    sweeps: int
    converged: bool


def distance_to_component(
    stack: WeightStack,
    profile: SigmaProfile,
    spectrum: "TargetSpectrum",
    reg: RegParams,
    depth: int,
    iters: int = 200,
    target: str = "F",
    check_nearest: bool = True,
) -> ComponentDistance:
    """Certified distance bracket from ``stack`` to one component.

    The upper bound comes from projecting onto the component: seed the free
    orthogonal factors from the stack's own singular frames (aligned to the
    component's singular-value pattern), then alternate closed-form
    Procrustes updates over each factor.  Every update solves its subproblem
    exactly, so the objective is nonincreasing; a rise beyond roundoff is an
    internal error.
    """
    dims = stack.dim_chain()
    if dims.dims[0] != spectrum.d_in or dims.dims[-1] != spectrum.d_out:
        raise ShapeError("stack endpoints do not match the target's shape")
    L = depth
    if dims.depth != L:
        raise ShapeError("stack depth does not match request")
    lower = mirsky_lower_bound(stack, profile, reg, target)

    if profile.is_zero or spectrum.rank == 0:
        nearest = WeightStack.zeros(dims)
        d = (stack - nearest).norm()
        return ComponentDistance(d, lower, nearest, 0, True)

    sig_mats = _sigma_matrices(profile, dims, reg, target)
    scales = _layer_scales(reg, target)
    sig_eq = np.asarray(profile.sigma_eq)
    w = stack.layers
    u_y, v_y = spectrum.u, spectrum.v

    # Seed the first seam from the right singular frame of layer 2 (columns
    # permuted so the frame's value order matches the unsorted diagonal
    # pattern of the component).  Later seams are NOT seeded independently:
    # chaining each one through a Procrustes fit of the layer between them
    # keeps the sign/gauge conventions consistent around the loop, which
    # per-layer SVD seeds do not (their arbitrary signs can create a
    # parity-locked corner the coordinate descent cannot leave).
    def seeded_frame(layer_idx: int) -> np.ndarray:
        _, _, vt = np.linalg.svd(w[layer_idx], full_matrices=True)
        v_full = vt.T
        n = v_full.shape[0]
        diag = sig_eq * scales[layer_idx]
        order = np.argsort(-diag, kind="stable")
        ranks = np.empty(len(diag), dtype=int)
        ranks[order] = np.arange(len(diag))
        perm = list(ranks) + list(range(len(diag), n))
        return v_full[:, perm]

    q = {2: seeded_frame(1)}
    for l in range(3, L + 1):
        q[l] = _polar(w[l - 2] @ q[l - 1] @ sig_mats[l - 2].T)
    blocks = [np.eye(h) for h in spectrum.multiplicities]

    def mixers():
        m_in = np.eye(dims.dims[0])
        m_out_left = np.eye(dims.dims[-1])
        for i, h in enumerate(spectrum.multiplicities):
            sl = spectrum.block_slice(i)
            m_in[sl, sl] = blocks[i]
            m_out_left[sl, sl] = blocks[i].T
        return m_in, m_out_left

    def member() -> WeightStack:
        m_in, m_out = mixers()
        layers = []
        layers.append(q[2] @ sig_mats[0] @ (m_in @ v_y.T))
        for l in range(2, L):
            layers.append(q[l + 1] @ sig_mats[l - 1] @ q[l].T)
        layers.append((u_y @ m_out) @ sig_mats[L - 1] @ q[L].T)
        return WeightStack(layers)

    def update_blocks():
        g1 = q[2].T @ w[0] @ v_y
        gl = u_y.T @ w[L - 1] @ q[L]
        for i in range(spectrum.p_distinct):
            sl = spectrum.block_slice(i)
            d1 = np.diag(sig_eq[sl] * scales[0])
            dl = np.diag(sig_eq[sl] * scales[L - 1])
            c = d1 @ g1[sl, sl] + dl @ gl[sl, sl].T
            blocks[i] = _polar(c)

    def update_seams():
        m_in, m_out = mixers()
        for l in range(2, L + 1):
            # layer l-1 = Q_l @ a, layer l = b @ Q_l^T
            if l - 1 == 1:
                a = sig_mats[0] @ (m_in @ v_y.T)
            else:
                a = sig_mats[l - 2] @ q[l - 1].T
            if l < L:
                b = q[l + 1] @ sig_mats[l - 1]
            else:
                b = (u_y @ m_out) @ sig_mats[L - 1]
            c = w[l - 2] @ a.T + w[l - 1].T @ b
            q[l] = _polar(c)

    update_blocks()
    obj = (stack - member()).norm() ** 2
    sweeps = 0
    converged = False
    for sweeps in range(1, iters + 1):
        update_seams()
        update_blocks()
        new_obj = (stack - member()).norm() ** 2
        if new_obj > obj + 1e-12 * max(1.0, obj):
            raise InternalConsistencyError(
                f"alternating projection increased the objective: {obj} -> {new_obj}"
            )
        improved = obj - new_obj
        obj = new_obj
        if improved < 1e-12:
            converged = True
            break

    nearest = member()
    dist = (stack - nearest).norm()
    if check_nearest:
        y = spectrum.target
        gnorm = (
            grad_norm_f(nearest, y, reg)
            if target == "F"
            else grad_norm_g(nearest, y, reg)
        )
        if gnorm > 1e-9 * (1.0 + float(np.linalg.norm(y))):
            raise InternalConsistencyError(
                f"projected point is not critical: gradient norm {gnorm}"
            )
    # The bracket must be consistent; tolerate only roundoff inversion.
    if dist < lower - 1e-9 * (1.0 + lower):
        raise InternalConsistencyError(
            f"distance upper bound {dist} fell below the certified lower {lower}"
        )
    return ComponentDistance(max(dist, lower), lower, nearest, sweeps, converged)


@dataclass
class SetDistance:
    distance: float
    lower_bound: float
    profile_index: int
    nearest: WeightStack
    truncated: bool


def distance_to_critical_set(
    stack: WeightStack,
    profiles: list[SigmaProfile] | ProfileEnumeration,
    spectrum: "TargetSpectrum",
    reg: RegParams,
    depth: int,
    iters: int = 200,
    target: str = "F",
) -> SetDistance:
    """Minimum component distance over the enumerated profiles.

    Profiles whose certified lower bound already exceeds the best upper bound
    are skipped.  Candidates are visited in order of their lower bound, with
    the enumeration index breaking ties so results are deterministic.
    """
    truncated = False
    if isinstance(profiles, ProfileEnumeration):
        truncated = profiles.truncated
        profiles = profiles.profiles
    if not profiles:
        raise ValueError("need at least one profile")

    svals = layer_singular_values(stack)
    lowers = [
        mirsky_lower_bound(stack, prof, reg, target, layer_svals=svals)
        for prof in profiles
    ]
    order = sorted(range(len(profiles)), key=lambda k: (lowers[k], k))
    best: ComponentDistance | None = None
    best_idx = -1
    for k in order:
        if best is not None and lowers[k] >= best.distance:
            continue
        cand = distance_to_component(
            stack, profiles[k], spectrum, reg, depth, iters=iters, target=target
        )
        if best is None or cand.distance < best.distance:
            best = cand
            best_idx = k
    assert best is not None
    overall_lower = min(lowers)
    return SetDistance(
        best.distance, overall_lower, best_idx, best.nearest, truncated
    )
