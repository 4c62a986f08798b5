"""Expected utility of a bid vector under given marginal CDFs, and its
maximization over sorted bid vectors on a finite grid.

Both pricing rules give an expected utility that splits into a sum of
per-coordinate terms ``w_k(b_k)``:

    pay-as-bid:    w_k(y) = F_{K-k+1}(y) (v_k - y)
    uniform price: w_k(y) = F_{K-k+1}(y) (v_k - y) + k A_{K-k+1}(y) - (k-1) A_{K-k+2}(y)

where ``F_j`` is the CDF of the j-th highest opposing bid and
``A_j(y) = int_0^y F_j``.  Maximizing over non-increasing vectors is then a
chain dynamic program with running prefix maxima, linear in K times the grid
size.  ``eval_expected_utility`` uses the direct probabilistic expansion
instead, so the two can be checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .auction import AuctionFormat, DimensionError
from .cdf import StepCdf

__all__ = [
    "BidConstraints",
    "CdfProfile",
    "DistributionProfile",
    "InfeasibleConstraints",
    "candidate_grid",
    "eval_expected_utility",
    "maximize",
    "stage_values",
    "superlevel_hull",
]

TIE_TOL = 1e-12


class InfeasibleConstraints(ValueError):
    """No sorted bid vector on the grid satisfies the constraints."""


class CdfProfile:
    """K marginal CDF evaluators, index 1 being the highest opposing bid.

    Each component must be callable (vectorized CDF), provide
    ``integral_to(x)`` (integral of the CDF over [0, x]) and ``jump_points``.
    Components may cross each other.
    """

    def __init__(self, components: Sequence):
        if len(components) == 0:
            raise ValueError("a profile needs at least one marginal")
        self.components = list(components)

    @property
    def K(self) -> int:
        return len(self.components)

    @classmethod
    def from_samples(cls, samples) -> "CdfProfile":
        """Empirical marginals of an (n, K) array of opposing bid vectors."""
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        return cls([StepCdf.from_samples(samples[:, k]) for k in range(samples.shape[1])])

    def jump_points(self) -> np.ndarray:
        pts = [np.asarray(c.jump_points, dtype=float) for c in self.components]
        return np.unique(np.concatenate(pts)) if pts else np.empty(0)

    def evaluate(self, xs):
        """(F, A) arrays of shape (K, len(xs))."""
        xs = np.asarray(xs, dtype=float)
        F = np.vstack([np.asarray(c(xs), dtype=float).reshape(xs.shape) for c in self.components])
        A = np.vstack([np.asarray(c.integral_to(xs), dtype=float).reshape(xs.shape) for c in self.components])
        return F, A


class DistributionProfile:
    """Exact marginals of an adversary distribution, usable as a profile.

    For distributions with continuous parts the jump points are augmented by
    a uniform grid of ``resolution`` intervals so that grid maximization is
    meaningful.
    """

    def __init__(self, dist, resolution: int = 10_000):
        self.dist = dist
        self.resolution = int(resolution)

    @property
    def K(self) -> int:
        return self.dist.K

    def jump_points(self) -> np.ndarray:
        pts = [self.dist.breakpoints()]
        if self.dist.continuous and self.resolution > 0:
            pts.append(np.linspace(0.0, 1.0, self.resolution + 1))
        return np.unique(np.concatenate(pts))

    def evaluate(self, xs):
        xs = np.asarray(xs, dtype=float)
        F = np.vstack([self.dist.marginal_cdf(k, xs) for k in range(1, self.K + 1)])
        A = np.vstack([self.dist.cdf_integral(k, xs) for k in range(1, self.K + 1)])
        return F, A


@dataclass(frozen=True)
class BidConstraints:
    """Per-coordinate boxes, optional pinned values and the truthful-first flag."""

    lower: tuple
    upper: tuple
    pins: tuple
    first_coordinate_truthful: bool = False

    def __post_init__(self):
        K = len(self.lower)
        if len(self.upper) != K or len(self.pins) != K:
            raise DimensionError("constraint vectors must all have length K")
        for k in range(K):
            lo, hi, pin = self.lower[k], self.upper[k], self.pins[k]
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"coordinate {k + 1}: box [{lo}, {hi}] is not inside [0, 1]")
            if pin is not None and not (lo <= pin <= hi):
                raise ValueError(f"coordinate {k + 1}: pin {pin} lies outside [{lo}, {hi}]")

    @property
    def K(self) -> int:
        return len(self.lower)

    @classmethod
    def free(cls, K: int, truthful: bool = False) -> "BidConstraints":
        return cls((0.0,) * K, (1.0,) * K, (None,) * K, truthful)

    @classmethod
    def from_boxes(cls, boxes, pins=None, truthful: bool = False) -> "BidConstraints":
        K = len(boxes)
        pins = tuple(pins) if pins is not None else (None,) * K
        return cls(
            tuple(float(a) for a, _ in boxes), tuple(float(b) for _, b in boxes), pins, truthful
        )

    def with_pins(self, pins: dict) -> "BidConstraints":
        """Copy with extra pins, keyed by 1-based coordinate."""
        new = list(self.pins)
        for k, value in pins.items():
            new[k - 1] = float(value)
        return BidConstraints(self.lower, self.upper, tuple(new), self.first_coordinate_truthful)

    def points(self) -> list:
        pts = list(self.lower) + list(self.upper)
        pts += [p for p in self.pins if p is not None]
        return pts

    def allowed(self, grid: np.ndarray, v) -> np.ndarray:
        """Boolean mask (K, M) of grid values each coordinate may take."""
        K = self.K
        mask = np.empty((K, grid.size), dtype=bool)
        for k in range(K):
            m = (grid >= self.lower[k]) & (grid <= self.upper[k])
            if self.pins[k] is not None:
                m &= grid == self.pins[k]
            if k == 0 and self.first_coordinate_truthful:
                m &= grid == float(v[0])
            mask[k] = m
        return mask


def _check_inputs(profile, b, v):
    K = profile.K
    if len(v) != K:
        raise DimensionError(f"profile has K={K} but valuations have K={len(v)}")
    if b is not None:
        if len(b) != K:
            raise DimensionError(f"profile has K={K} but bid has K={len(b)}")
        for i in range(K - 1):
            if b[i] < b[i + 1]:
                raise ValueError(f"bid vector must be non-increasing, got {tuple(b)}")
    return K


def eval_expected_utility(fmt: AuctionFormat, profile, b: Sequence[float], v: Sequence[float]) -> float:
    """Expected utility of bid ``b`` when the opposing marginals are ``profile``."""
    fmt = AuctionFormat.parse(fmt)
    K = _check_inputs(profile, b, v)
    b_ext = np.concatenate([np.asarray(b, dtype=float), [0.0]])
    F, A = profile.evaluate(b_ext)
    v = np.asarray(v, dtype=float)
    total = 0.0
    if fmt is AuctionFormat.DISCRIMINATORY:
        for i in range(1, K + 1):
            total += F[K - i, i - 1] * (v[i - 1] - b_ext[i - 1])
        return float(total)
    S = np.cumsum(v)
    for i in range(1, K + 1):
        hi, lo = b_ext[i - 1], b_ext[i]
        row = K - i  # marginal K-i+1
        F_hi_at_lo = F[row, i]
        F_lo_at_lo = F[row - 1, i] if row >= 1 else 0.0  # F_0 is identically 0
        F_at_hi = F[row, i - 1]
        # integral of x dF over (lo, hi], by parts
        x_dF = hi * F_at_hi - lo * F_hi_at_lo - (A[row, i - 1] - A[row, i])
        total += (F_hi_at_lo - F_lo_at_lo) * (S[i - 1] - i * lo)
        total += (F_at_hi - F_hi_at_lo) * S[i - 1] - i * x_dF
    return float(total)


def stage_values(fmt: AuctionFormat, F: np.ndarray, A: np.ndarray, grid: np.ndarray, v) -> np.ndarray:
    """Per-coordinate utility terms w_k on the grid, shape (K, M)."""
    fmt = AuctionFormat.parse(fmt)
    K = F.shape[0]
    W = np.empty_like(F)
    for k in range(1, K + 1):
        row = K - k
        W[k - 1] = F[row] * (v[k - 1] - grid)
        if fmt is AuctionFormat.UNIFORM:
            W[k - 1] += k * A[row]
            if k >= 2:
                W[k - 1] -= (k - 1) * A[row + 1]
    return W


def candidate_grid(profile, v, constraints: BidConstraints | None = None) -> np.ndarray:
    pts = [profile.jump_points(), np.asarray([0.0, 1.0]), np.asarray(v, dtype=float)]
    if constraints is not None:
        pts.append(np.asarray(constraints.points(), dtype=float))
    g = np.concatenate(pts)
    g = g[(g >= 0.0) & (g <= 1.0)]
    return np.unique(g)


def _prepare(fmt, profile, v, constraints, grid, extend_grid=True):
    K = _check_inputs(profile, None, v)
    if constraints is None:
        constraints = BidConstraints.free(K)
    if constraints.K != K:
        raise DimensionError(f"constraints have K={constraints.K}, profile has K={K}")
    if grid is None:
        grid = candidate_grid(profile, v, constraints)
    elif extend_grid:
        extra = np.asarray(constraints.points() + [0.0, 1.0, float(v[0])], dtype=float)
        grid = np.unique(np.concatenate([np.asarray(grid, dtype=float), extra]))
        grid = grid[(grid >= 0.0) & (grid <= 1.0)]
    else:
        grid = np.unique(np.asarray(grid, dtype=float))
    F, A = profile.evaluate(grid)
    W = stage_values(fmt, F, A, grid, np.asarray(v, dtype=float))
    W = np.where(np.isnan(W), -np.inf, W)
    W = np.where(constraints.allowed(grid, v), W, -np.inf)
    return grid, W


def _path_value(W: np.ndarray, idx) -> float:
    # summed from the last coordinate, the same association as the recursion
    total = 0.0
    for k in range(W.shape[0] - 1, -1, -1):
        total = W[k, idx[k]] + total
    return float(total)


def _best_indices(W: np.ndarray, tol: float) -> list:
    K, M = W.shape
    V = np.empty_like(W)
    V[K - 1] = W[K - 1]
    for k in range(K - 2, -1, -1):
        V[k] = W[k] + np.maximum.accumulate(V[k + 1])
    idx = []
    limit = M
    for k in range(K):
        seg = V[k, :limit]
        best = seg.max()
        if not np.isfinite(best):
            raise InfeasibleConstraints("no sorted bid vector on the grid satisfies the constraints")
        j = int(np.argmax(seg >= best - tol))
        idx.append(j)
        limit = j + 1
    return idx


def maximize(
    fmt: AuctionFormat,
    profile,
    v: Sequence[float],
    constraints: BidConstraints | None = None,
    grid=None,
    tol: float = TIE_TOL,
    extend_grid: bool = True,
):
    """Best sorted bid vector on the grid and its estimated expected utility.

    Near-ties (within ``tol``) go to the lexicographically smallest vector,
    except that a vector made of zeros and ones is preferred when one attains
    the optimum.  An explicit ``grid`` is completed with 0, 1, the first value
    and the constraint points unless ``extend_grid`` is False.
    """
    grid, W = _prepare(fmt, profile, v, constraints, grid, extend_grid)
    K = W.shape[0]
    idx = _best_indices(W, tol)
    value = _path_value(W, idx)
    best01 = None
    has01 = grid[0] == 0.0 and grid[-1] == 1.0
    zero, one = 0, grid.size - 1
    for m in range(K + 1 if has01 else 0):
        cand = [one] * m + [zero] * (K - m)
        val = _path_value(W, cand)
        if np.isfinite(val) and val >= value - tol and (best01 is None or val > best01[1] + tol):
            best01 = (cand, val)
    if best01 is not None:
        idx, value = best01
    return tuple(float(grid[j]) for j in idx), value


def superlevel_hull(
    fmt: AuctionFormat,
    profile,
    v: Sequence[float],
    threshold: float,
    grid=None,
    constraints: BidConstraints | None = None,
    tol: float = TIE_TOL,
):
    """Per-coordinate [min, max] over grid vectors with utility >= threshold."""
    grid, W = _prepare(fmt, profile, v, constraints, grid)
    K, M = W.shape
    # best total of coordinates before k given b_k = g (predecessors are >= g)
    before = np.zeros((K, M))
    for k in range(1, K):
        prev = before[k - 1] + W[k - 1]
        before[k] = np.maximum.accumulate(prev[::-1])[::-1]
    # best total of coordinates after k given b_k = g (successors are <= g)
    after = np.zeros((K, M))
    for k in range(K - 2, -1, -1):
        nxt = after[k + 1] + W[k + 1]
        after[k] = np.maximum.accumulate(nxt)
    hull = []
    for k in range(K):
        total = before[k] + W[k] + after[k]
        ok = np.flatnonzero(np.isfinite(total) & (total >= threshold - tol))
        if ok.size == 0:
            raise ValueError(f"no grid vector reaches utility {threshold}")
        hull.append((float(grid[ok[0]]), float(grid[ok[-1]])))
    return hull
