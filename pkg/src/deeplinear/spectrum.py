"""Spectral data of the target matrix: SVD, repeated-value partition, gaps.

Everything downstream of the target matrix Y is phrased in terms of its
singular values y_1 >= ... >= y_{d_min} and the partition of the positive
ones into blocks of equal value.  This module computes that partition, the
minimal gap ``delta_y`` between distinct values, and the set of all
nonnegative solutions of the per-value scalar stationarity equation together
with its separation ``delta_sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import RegParams


@dataclass
class TargetSpectrum:
    """Target matrix Y with its SVD and distinct-singular-value partition.

    Attributes:
        target: the matrix Y itself, shape d_out x d_in
        u: left singular frame, d_out x d_out orthogonal
        v: right singular frame, d_in x d_in orthogonal
        y: all min(d_out, d_in) singular values, nonincreasing
        rank: number of singular values above the rank threshold
        p_distinct: number of distinct positive singular values (p_Y)
        s_bounds: block boundaries 0 = s_0 < s_1 < ... < s_p = rank
        multiplicities: block sizes h_i = s_i - s_{i-1}
        delta_y: minimal gap between adjacent distinct values; the trailing
            zero counts as a distinct value whenever rank < d_min; +inf when
            no gap exists
    """

    target: np.ndarray
    u: np.ndarray
    v: np.ndarray
    y: np.ndarray
    rank: int
    p_distinct: int
    s_bounds: tuple[int, ...]
    multiplicities: tuple[int, ...]
    delta_y: float
    grouping_tol: float

    @property
    def d_out(self) -> int:
        return self.target.shape[0]

    @property
    def d_in(self) -> int:
        return self.target.shape[1]

    @property
    def d_min(self) -> int:
        return min(self.target.shape)

    @property
    def y_top(self) -> float:
        """Largest singular value (0 for the zero matrix)."""
        return float(self.y[0]) if self.y.size else 0.0

    @property
    def y_smallest_positive(self) -> float:
        """Smallest positive singular value y_{s_p}; 0 when Y = 0."""
        return float(self.y[self.rank - 1]) if self.rank > 0 else 0.0

    def block_slice(self, i: int) -> slice:
        """Index range of the i-th (0-based) positive block."""
        return slice(self.s_bounds[i], self.s_bounds[i + 1])

    def block_value(self, i: int) -> float:
        """Representative singular value of the i-th (0-based) positive block."""
        return float(self.y[self.s_bounds[i]])


def analyze_target(target: np.ndarray, grouping_tol: float = 1e-8) -> TargetSpectrum:
    """SVD of the target plus the distinct-positive-value partition.

    Consecutive singular values whose gap is at most ``grouping_tol * y_1``
    are merged into one block; the rank threshold is ``1e-12 * y_1`` (exact
    zeros when y_1 = 0).  Generic targets have all-distinct values, so the
    grouping only matters for designed repeated-spectrum inputs.
    """
    target = np.asarray(target, dtype=float)
    if target.ndim != 2:
        raise ValueError("target must be a matrix")
    if not np.all(np.isfinite(target)):
        raise ValueError("target must have finite entries")
    if grouping_tol < 0:
        raise ValueError("grouping_tol must be nonnegative")

    u, svals, vt = np.linalg.svd(target, full_matrices=True)
    y = np.asarray(svals, dtype=float)
    top = float(y[0]) if y.size else 0.0
    rank_tol = 1e-12 * top
    rank = int(np.sum(y > rank_tol)) if top > 0 else 0

    # Partition the positive part into blocks of (numerically) equal value.
    bounds = [0]
    gap_tol = grouping_tol * top
    for k in range(1, rank):
        if y[k - 1] - y[k] > gap_tol:
            bounds.append(k)
    if rank > 0:
        bounds.append(rank)
    s_bounds = tuple(bounds) if rank > 0 else (0,)
    mults = tuple(s_bounds[i + 1] - s_bounds[i] for i in range(len(s_bounds) - 1))
    p = len(mults)

    # Gap between block i and block i+1 compares the values at s_i and s_{i+1}.
    gaps = [float(y[s_bounds[i] - 1] - y[s_bounds[i + 1] - 1]) for i in range(1, p)]
    if rank < y.size and rank > 0:
        gaps.append(float(y[rank - 1]))  # trailing zero counts as the next value
    delta_y = min(gaps) if gaps else math.inf

    return TargetSpectrum(
        target=target,
        u=u,
        v=vt.T,
        y=y,
        rank=rank,
        p_distinct=p,
        s_bounds=s_bounds,
        multiplicities=mults,
        delta_y=delta_y,
        grouping_tol=float(grouping_tol),
    )


@dataclass
class RootValueSet:
    """All distinct nonnegative stationary values across every y_i.

    ``values`` is sorted ascending and always contains 0.  ``delta_sigma`` is
    the minimal pairwise gap (+inf for a singleton): it lower-bounds the
    separation between distinct components of the critical set.
    """

    values: tuple[float, ...]
    delta_sigma: float
    degenerate: bool = False  # any value is a multiple root of its equation


def build_root_value_set(
    spectrum: TargetSpectrum, reg: RegParams, depth: int
) -> RootValueSet:
    """Union of the root sets of the scalar equation over all singular values."""
    from .critical import solve_scalar_equation

    lam = reg.lambda_prod
    values = [0.0]
    degenerate = False
    seen = set()
    for i in range(spectrum.p_distinct):
        y_i = spectrum.block_value(i)
        if y_i in seen:
            continue
        seen.add(y_i)
        roots = solve_scalar_equation(y_i, lam, depth)
        degenerate = degenerate or any(roots.degenerate)
        values.extend(r for r in roots.roots if r > 0.0)
    values.sort()
    dedup_tol = 1e-9 * max(1.0, values[-1])
    out = [values[0]]
    for v in values[1:]:
        if v - out[-1] > dedup_tol:
            out.append(v)
    if len(out) >= 2:
        delta_sigma = min(out[k + 1] - out[k] for k in range(len(out) - 1))
    else:
        delta_sigma = math.inf
    return RootValueSet(tuple(out), float(delta_sigma), degenerate)
