"""CDF estimators: empirical CDFs, DKW bands, interval-censored (banded)
estimates built from bandit observations, and order-statistic transfer maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .auction import BanditObservation, Status

__all__ = [
    "BandedCdf",
    "CdfBand",
    "EcdfBuilder",
    "EmptyEstimatorError",
    "PiecewiseConstant",
    "StepCdf",
    "dkw_epsilon",
    "order_stat_cdf",
    "order_stat_inverse",
    "order_stat_transfer",
]


class EmptyEstimatorError(ValueError):
    """Raised when an estimator is finalized before seeing any data."""


def dkw_epsilon(t: int, alpha: float) -> float:
    """Half-width of the DKW band for ``t`` samples at confidence ``1 - alpha``."""
    if t < 1:
        raise ValueError(f"sample count must be at least 1, got {t}")
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * t))


class StepCdf:
    """Right-continuous step CDF given by its jump points and cumulative levels."""

    def __init__(self, jump_points, cum_probs):
        jp = np.asarray(jump_points, dtype=float)
        cp = np.asarray(cum_probs, dtype=float)
        if jp.ndim != 1 or jp.shape != cp.shape:
            raise ValueError("jump_points and cum_probs must be 1-d and of equal length")
        if jp.size and (np.any(np.diff(jp) <= 0) or jp[0] < 0 or jp[-1] > 1):
            raise ValueError("jump points must be strictly increasing inside [0, 1]")
        if cp.size and (np.any(np.diff(cp) < 0) or cp[0] < 0 or cp[-1] > 1 + 1e-12):
            raise ValueError("cumulative probabilities must be non-decreasing in [0, 1]")
        self.jump_points = jp
        self.cum_probs = cp
        mass = np.diff(np.concatenate([[0.0], cp]))
        self._first_moment = np.cumsum(jp * mass)

    @classmethod
    def from_samples(cls, samples) -> "StepCdf":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size == 0:
            raise EmptyEstimatorError("cannot build an empirical CDF from zero samples")
        pts, counts = np.unique(x, return_counts=True)
        return cls(pts, np.cumsum(counts) / x.size)

    def _index(self, x):
        return np.searchsorted(self.jump_points, x, side="right")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = self._index(x)
        levels = np.concatenate([[0.0], self.cum_probs])
        out = levels[idx]
        return float(out) if out.ndim == 0 else out

    def first_moment_to(self, x):
        """Stieltjes integral of t dF(t) over (-inf, x]."""
        idx = self._index(np.asarray(x, dtype=float))
        out = np.concatenate([[0.0], self._first_moment])[idx]
        return float(out) if out.ndim == 0 else out

    def integral_to(self, x):
        """Riemann integral of F over [0, x] (jumps lie in [0, 1])."""
        x = np.asarray(x, dtype=float)
        out = np.maximum(x, 0.0) * self(x) - self.first_moment_to(x)
        return float(out) if np.ndim(out) == 0 else out

    def stieltjes(self, a: float, b: float) -> float:
        """Integral of t dF(t) over the half-open interval (a, b]."""
        return self.first_moment_to(b) - self.first_moment_to(a)

    def integral(self, a: float, b: float) -> float:
        """Integral of F(t) dt over [a, b]."""
        return self.integral_to(b) - self.integral_to(a)


class EcdfBuilder:
    """Accumulates observations of one scalar and finalizes an empirical CDF."""

    def __init__(self):
        self._values: list = []

    def insert(self, x: float) -> None:
        if not (0.0 <= x <= 1.0):
            raise ValueError(f"observation {x} is outside [0, 1]")
        self._values.append(float(x))

    def insert_many(self, xs) -> None:
        for x in np.asarray(xs, dtype=float).ravel():
            self.insert(x)

    def __len__(self) -> int:
        return len(self._values)

    def finalize(self) -> StepCdf:
        return StepCdf.from_samples(self._values)


@dataclass(frozen=True)
class CdfBand:
    """Uniform confidence band [center - eps, center + eps] clipped to [0, 1]."""

    center: StepCdf
    half_width: float

    def lower(self, x):
        return np.clip(self.center(x) - self.half_width, 0.0, 1.0)

    def upper(self, x):
        return np.clip(self.center(x) + self.half_width, 0.0, 1.0)

    def contains(self, cdf, grid) -> bool:
        """Whether ``cdf`` stays in the band on ``grid`` and at the jump points.

        A step CDF's sup-distance to a continuous CDF is attained at a jump or
        just before one, so both one-sided values are checked there.
        """
        grid = np.asarray(grid, dtype=float)
        jp = self.center.jump_points
        pts = np.concatenate([grid, jp])
        ok = np.all(np.abs(self.center(pts) - cdf(pts)) <= self.half_width + 1e-15)
        if jp.size:
            left = np.concatenate([[0.0], self.center.cum_probs[:-1]])
            ok = ok and np.all(np.abs(left - cdf(jp)) <= self.half_width + 1e-15)
        return bool(ok)


class PiecewiseConstant:
    """Function that is constant between consecutive knots.

    ``at_knots[j]`` is the value exactly at ``knots[j]`` and ``between[j]`` the
    value on the open segment ``(knots[j], knots[j+1])``.  Left of the first
    knot the value is ``before``; right of the last one it is ``after``.
    """

    def __init__(self, knots, at_knots, between, before: float = 0.0, after: float | None = None):
        self.knots = np.asarray(knots, dtype=float)
        self.at_knots = np.asarray(at_knots, dtype=float)
        self.between = np.asarray(between, dtype=float)
        if self.knots.size == 0 or self.at_knots.shape != self.knots.shape:
            raise ValueError("need at least one knot and one value per knot")
        if self.between.shape[0] != self.knots.size - 1:
            raise ValueError("need one segment value between each pair of knots")
        self.before = float(before)
        self.after = float(self.at_knots[-1] if after is None else after)
        seg = np.concatenate([[self.before], self.between, [self.after]])
        self._segments = seg
        widths = np.diff(self.knots)
        self._cum = np.concatenate([[0.0], np.cumsum(self.between * widths)])

    @property
    def jump_points(self):
        return self.knots

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        j = np.searchsorted(self.knots, x, side="right") - 1
        jc = np.clip(j, 0, None)
        exact = (j >= 0) & (self.knots[jc] == x)
        out = np.where(exact, self.at_knots[jc], self._segments[j + 1])
        return float(out) if out.ndim == 0 else out

    def integral_to(self, x):
        """Integral over [knots[0], x]; zero left of the first knot."""
        x = np.asarray(x, dtype=float)
        j = np.searchsorted(self.knots, x, side="right") - 1
        jc = np.clip(j, 0, None)
        out = self._cum[jc] + self._segments[jc + 1] * (x - self.knots[jc])
        out = np.where(j >= 0, out, 0.0)
        return float(out) if out.ndim == 0 else out


class BandedCdf:
    """Interval-censored CDF estimates of every opposing-bid marginal.

    Slot ``i`` of a bandit observation (1-based) is recorded against marginal
    ``k = K - i + 1``.  The observation fixes the indicator ``beta_k <= x`` for
    every ``x`` in the closed interval ``[lo, hi]``; the estimate at ``x`` is the
    fraction of covering observations for which that indicator is one.
    """

    def __init__(self, K: int):
        if K < 1:
            raise ValueError("K must be at least 1")
        self.K = K
        self._rows: list = []
        self._arrays = None
        self._n_built = 0

    def __len__(self) -> int:
        return len(self._rows)

    def observe(self, obs: BanditObservation) -> None:
        if obs.K != self.K:
            raise ValueError(f"observation has K={obs.K}, estimator has K={self.K}")
        self._rows.append((obs.lo, obs.hi, obs.status, obs.value))

    def _build(self):
        if self._arrays is not None and self._n_built == len(self._rows):
            return self._arrays
        K = self.K
        rows = self._rows
        lo = np.array([r[0] for r in rows], dtype=float).reshape(-1, K)
        hi = np.array([r[1] for r in rows], dtype=float).reshape(-1, K)
        st = np.array([r[2] for r in rows], dtype=int).reshape(-1, K)
        val = np.array([r[3] for r in rows], dtype=float).reshape(-1, K)
        per_k = []
        for k in range(1, K + 1):
            i = K - k  # 0-based slot index for marginal k
            l, h, s, x = lo[:, i], hi[:, i], st[:, i], val[:, i]
            below = s == Status.BELOW
            at = s == Status.AT
            per_k.append(
                dict(
                    lo=np.sort(l),
                    hi=np.sort(h),
                    below_lo=np.sort(l[below]),
                    below_hi=np.sort(h[below]),
                    at_v=np.sort(x[at]),
                    at_hi=np.sort(h[at]),
                    knots=np.unique(np.concatenate([[0.0, 1.0], l, h, x[at]])),
                )
            )
        self._arrays = per_k
        self._n_built = len(rows)
        return per_k

    @staticmethod
    def _counts(d, x, closed_side: str):
        # point queries pass "left": an interval [lo, hi] covers x iff lo <= x <= hi.
        # Segment queries pass "right" at the left knot, so an interval covers
        # the open segment to the right of the knot iff lo <= knot < hi.
        cov = np.searchsorted(d["lo"], x, side="right") - np.searchsorted(d["hi"], x, side=closed_side)
        num = (
            np.searchsorted(d["below_lo"], x, side="right")
            - np.searchsorted(d["below_hi"], x, side=closed_side)
            + np.searchsorted(d["at_v"], x, side="right")
            - np.searchsorted(d["at_hi"], x, side=closed_side)
        )
        return num, cov

    def _check_k(self, k):
        if not (1 <= k <= self.K):
            raise IndexError(f"marginal index {k} outside 1..{self.K}")

    def evaluate(self, k: int, x):
        """Vectorized (estimate, coverage); estimate is NaN where coverage is 0."""
        self._check_k(k)
        x = np.asarray(x, dtype=float)
        if not self._rows:
            return np.full(x.shape, np.nan), np.zeros(x.shape, dtype=int)
        d = self._build()[k - 1]
        num, cov = self._counts(d, x, "left")
        with np.errstate(invalid="ignore", divide="ignore"):
            est = np.where(cov > 0, num / np.maximum(cov, 1), np.nan)
        return est, cov

    def eval(self, k: int, x: float):
        """Scalar (estimate, coverage); estimate is None when coverage is 0."""
        est, cov = self.evaluate(k, np.array([x]))
        c = int(cov[0])
        return (None if c == 0 else float(est[0])), c

    def knots(self, k: int) -> np.ndarray:
        self._check_k(k)
        if not self._rows:
            return np.array([0.0, 1.0])
        return self._build()[k - 1]["knots"]

    def segment_values(self, k: int, knots):
        """(estimate, coverage) on the open segments between consecutive knots.

        ``knots`` must include every breakpoint of marginal ``k``.
        """
        self._check_k(k)
        left = np.asarray(knots, dtype=float)[:-1]
        if not self._rows:
            return np.full(left.shape, np.nan), np.zeros(left.shape, dtype=int)
        d = self._build()[k - 1]
        num, cov = self._counts(d, left, "right")
        with np.errstate(invalid="ignore", divide="ignore"):
            est = np.where(cov > 0, num / np.maximum(cov, 1), np.nan)
        return est, cov

    def all_knots(self) -> np.ndarray:
        return np.unique(np.concatenate([self.knots(k) for k in range(1, self.K + 1)]))

    def component(self, k: int, fill: float = 0.0, knots=None) -> PiecewiseConstant:
        """Estimate of marginal ``k`` on [0, 1] with undefined values set to ``fill``."""
        knots = self.knots(k) if knots is None else np.asarray(knots, dtype=float)
        at, _ = self.evaluate(k, knots)
        seg, _ = self.segment_values(k, knots)
        at = np.where(np.isnan(at), fill, at)
        seg = np.where(np.isnan(seg), fill, seg)
        return PiecewiseConstant(knots, at, seg)


def _check_order_args(N: int, k: int):
    if N < 1 or not (1 <= k <= N):
        raise ValueError(f"order statistic index k={k} must lie in 1..N with N={N}")


def order_stat_cdf(N: int, k: int, q):
    """CDF of the k-th largest of N i.i.d. draws, as a function of the base CDF q."""
    _check_order_args(N, k)
    q_arr = np.asarray(q, dtype=float)
    if np.any((q_arr < 0) | (q_arr > 1)) or np.any(np.isnan(q_arr)):
        raise ValueError("q must lie in [0, 1]")
    total = np.zeros_like(q_arr)
    for j in range(k):
        total = total + math.comb(N, j) * (1.0 - q_arr) ** j * q_arr ** (N - j)
    total = np.clip(total, 0.0, 1.0)
    return float(total) if total.ndim == 0 else total


def order_stat_inverse(N: int, k: int, p, tol: float = 1e-12):
    """Inverse of ``order_stat_cdf`` in q, by bisection."""
    _check_order_args(N, k)
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0) | (p_arr > 1)) or np.any(np.isnan(p_arr)):
        raise ValueError("p must lie in [0, 1]")
    lo = np.zeros_like(p_arr)
    hi = np.ones_like(p_arr)
    n_iter = max(1, int(math.ceil(math.log2(1.0 / tol))) + 2)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = order_stat_cdf(N, k, mid) < p_arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    out = np.where(p_arr <= 0.0, 0.0, np.where(p_arr >= 1.0, 1.0, out))
    return float(out) if out.ndim == 0 else out


def order_stat_transfer(N: int, k: int, k_prime: int, q):
    """Map an estimate of the k-th order statistic CDF to the k'-th one."""
    _check_order_args(N, k)
    _check_order_args(N, k_prime)
    if k == k_prime:
        q_arr = np.asarray(q, dtype=float)
        if np.any((q_arr < 0) | (q_arr > 1)):
            raise ValueError("q must lie in [0, 1]")
        return float(q_arr) if q_arr.ndim == 0 else q_arr.copy()
    return order_stat_cdf(N, k_prime, order_stat_inverse(N, k, q))
