"""Sequential bidders.

Every learner exposes ``next_bid(t)`` (rounds are 1-based) and
``observe(feedback)``.  The kind of feedback a learner consumes is given by
its ``feedback`` attribute:

- ``"full"``: the opposing bid vector as a tuple;
- ``"bandit"``: a ``BanditObservation`` of a uniform-price round;
- ``"outcome"``: the ``AuctionOutcome`` of the round (allocation and prices);
- ``"none"``: nothing is used.

Learners that re-solve an estimated problem accept ``refit_ratio`` and
``refit_warmup``.  With the default ``refit_ratio=0`` they re-solve after
every round.  A positive ratio re-solves every round up to ``refit_warmup``
observations and afterwards only once the data has grown by that factor,
which keeps long simulations affordable.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from .auction import AuctionFormat, BanditObservation, bid_vector
from .cdf import BandedCdf, PiecewiseConstant, StepCdf, order_stat_cdf, order_stat_inverse
from .optimizer import BidConstraints, CdfProfile, InfeasibleConstraints, maximize, superlevel_hull

__all__ = [
    "DiscretizedEtcDiscriminatory",
    "Etc",
    "FixedBid",
    "FullInfo",
    "IntervalRefine",
    "LEARNERS",
    "Learner",
    "RefitSchedule",
    "TruthfulUnitDemand",
    "Ubiid",
    "default_exploration_length",
    "make_learner",
]

log = logging.getLogger(__name__)


class RefitSchedule:
    """Decides after how many observations an estimated problem is re-solved."""

    def __init__(self, ratio: float = 0.0, warmup: int = 0):
        if ratio < 0:
            raise ValueError("refit ratio must be nonnegative")
        self.ratio = float(ratio)
        self.warmup = int(warmup)
        self.last: int | None = None

    def due(self, n: int) -> bool:
        if self.last is None:
            return True
        if n == self.last:
            return False
        if self.ratio == 0.0 or n <= self.warmup:
            return True
        return n >= self.last * (1.0 + self.ratio)

    def mark(self, n: int) -> None:
        self.last = n


def default_exploration_length(K: int, T: int) -> int:
    return min(T, math.ceil(K ** (2.0 / 3.0) * T ** (2.0 / 3.0)))


class Learner:
    name = ""
    feedback = "none"
    # whether the bid sequence does not depend on the horizon T
    anytime = True
    formats: tuple = (AuctionFormat.UNIFORM, AuctionFormat.DISCRIMINATORY)

    def __init__(self, fmt: AuctionFormat, v: Sequence[float]):
        self.fmt = AuctionFormat.parse(fmt)
        if self.fmt not in self.formats:
            raise ValueError(f"{type(self).__name__} does not support the {self.fmt.value} format")
        self.v = bid_vector(v, name="valuation")
        self.K = len(self.v)

    def next_bid(self, t: int) -> tuple:
        raise NotImplementedError

    def observe(self, feedback) -> None:
        pass


class TruthfulUnitDemand(Learner):
    """Bids the first marginal value on one unit and nothing on the others."""

    name = "truthful_unit_demand"

    def __init__(self, fmt, v):
        super().__init__(fmt, v)
        self._bid = (self.v[0],) + (0.0,) * (self.K - 1)

    def next_bid(self, t):
        return self._bid


class FixedBid(Learner):
    name = "fixed_bid"

    def __init__(self, fmt, v, bid):
        super().__init__(fmt, v)
        self._bid = bid_vector(bid, self.K)

    def next_bid(self, t):
        return self._bid


class FullInfo(Learner):
    """Plays the maximizer of the empirical expected utility.

    Under the uniform rule the first coordinate is fixed to the first marginal
    value, which never loses utility.  The first round bids the valuations.
    """

    name = "full_info"
    feedback = "full"

    def __init__(self, fmt, v, refit_ratio: float = 0.0, refit_warmup: int = 0):
        super().__init__(fmt, v)
        self.schedule = RefitSchedule(refit_ratio, refit_warmup)
        self._buf = np.empty((1024, self.K))
        self.n = 0
        self._bid = tuple(self.v)

    def observe(self, beta) -> None:
        if self.n == self._buf.shape[0]:
            self._buf = np.concatenate([self._buf, np.empty_like(self._buf)])
        self._buf[self.n] = beta
        self.n += 1

    def profile(self) -> CdfProfile:
        return CdfProfile.from_samples(self._buf[: self.n])

    def next_bid(self, t):
        if self.n > 0 and self.schedule.due(self.n):
            truthful = self.fmt is AuctionFormat.UNIFORM
            cons = BidConstraints.free(self.K, truthful=truthful)
            self._bid, _ = maximize(self.fmt, self.profile(), self.v, cons)
            self.schedule.mark(self.n)
        return self._bid


def _banded_profile(banded: BandedCdf, fill: float = 0.0) -> CdfProfile:
    return CdfProfile([banded.component(k, fill) for k in range(1, banded.K + 1)])


class Etc(Learner):
    """Explore with extreme bids in round robin, then commit once (uniform rule).

    Exploration round t bids 1 on the first k units and 0 on the rest, with
    k = ((t - 1) mod K) + 1, which reveals the opposing bid of rank K - k + 1
    on the whole of [0, 1].
    """

    name = "etc"
    feedback = "bandit"
    anytime = False
    formats = (AuctionFormat.UNIFORM,)

    def __init__(self, fmt, v, T: int, T_expl: int | None = None):
        super().__init__(fmt, v)
        if T < 1:
            raise ValueError("horizon T must be at least 1")
        self.T = int(T)
        self.T_expl = default_exploration_length(self.K, self.T) if T_expl is None else int(T_expl)
        if self.T_expl < 1:
            raise ValueError("exploration length must be at least 1")
        self.banded = BandedCdf(self.K)
        self.n_explored = 0
        self.committed: tuple | None = None

    def exploration_bid(self, t: int) -> tuple:
        k = (t - 1) % self.K + 1
        return (1.0,) * k + (0.0,) * (self.K - k)

    def next_bid(self, t):
        if t <= self.T_expl:
            return self.exploration_bid(t)
        if self.committed is None:
            self.committed = self._commit()
        return self.committed

    def observe(self, obs: BanditObservation) -> None:
        if self.n_explored < self.T_expl:
            self.banded.observe(obs)
            self.n_explored += 1

    def _commit(self) -> tuple:
        for k in range(1, self.K + 1):
            knots = self.banded.knots(k)
            _, cov_at = self.banded.evaluate(k, knots)
            _, cov_seg = self.banded.segment_values(k, knots)
            if np.any(cov_at == 0) or np.any(cov_seg == 0):
                raise RuntimeError(
                    f"marginal {k} has uncovered points after exploration; "
                    f"exploration length {self.T_expl} is shorter than K={self.K}"
                )
        cons = BidConstraints.free(self.K, truthful=True)
        bid, _ = maximize(AuctionFormat.UNIFORM, _banded_profile(self.banded), self.v, cons)
        return bid


class IntervalRefine(Learner):
    """Successive elimination of bid intervals for the uniform rule.

    Keeps one interval per coordinate that shrinks to the convex hull of
    near-optimal estimated bids.  While the exploration budget lasts and the
    intervals still overlap, each round pins one coordinate at the top of its
    interval and the next coordinate at the bottom of its own, which widens
    the censoring windows.  Once consecutive intervals are separated, rounds
    alternate between the two ends of a single coordinate's interval.
    """

    name = "interval_refine"
    feedback = "bandit"
    anytime = False
    formats = (AuctionFormat.UNIFORM,)

    def __init__(self, fmt, v, T: int, T_expl: int | None = None, refit_ratio: float = 0.0, refit_warmup: int = 0):
        super().__init__(fmt, v)
        if T < 1:
            raise ValueError("horizon T must be at least 1")
        self.T = int(T)
        self.T_expl = default_exploration_length(self.K, self.T) if T_expl is None else int(T_expl)
        self.schedule = RefitSchedule(refit_ratio, refit_warmup)
        self.banded = BandedCdf(self.K)
        self.boxes = [(0.0, 1.0)] * self.K
        self.gap = -1.0
        self.n = 0
        self.fallbacks = 0
        self._profile = CdfProfile([PiecewiseConstant([0.0, 1.0], [0.0, 0.0], [0.0])] * self.K)
        self._cache: dict = {}

    def phase(self, t: int) -> int:
        return 1 if (t <= self.T_expl and self.gap <= 0) else 2

    def pins(self, t: int) -> dict:
        K = self.K
        if self.phase(t) == 1:
            k = (t - 1) % K + 1
            pins = {k: self.boxes[k - 1][1]}
            if k < K:
                pins[k + 1] = self.boxes[k][0]
            return pins
        if K == 1:
            return {}
        kt = (t - 1) % (2 * (K - 1)) + 2
        k = kt // 2
        lo, hi = self.boxes[k - 1]
        return {k: hi if kt % 2 == 0 else lo}

    def next_bid(self, t):
        pins = self.pins(t)
        key = tuple(sorted(pins.items()))
        bid = self._cache.get(key)
        if bid is None:
            base = BidConstraints.from_boxes(self.boxes)
            try:
                bid, _ = maximize(AuctionFormat.UNIFORM, self._profile, self.v, base.with_pins(pins))
            except (InfeasibleConstraints, ValueError):
                self.fallbacks += 1
                log.info("round %d: pins %s infeasible, maximizing without them", t, pins)
                bid, _ = maximize(AuctionFormat.UNIFORM, self._profile, self.v, base)
            self._cache[key] = bid
        return bid

    def observe(self, obs: BanditObservation) -> None:
        self.banded.observe(obs)
        self.n += 1
        if self.schedule.due(self.n):
            self._profile = self.estimated_profile()
            self.refine_intervals(self.n)
            self._cache.clear()
            self.schedule.mark(self.n)

    def estimated_profile(self) -> CdfProfile:
        return _banded_profile(self.banded)

    def threshold_width(self, t: int) -> float:
        m = t // self.K
        if m == 0:
            return math.inf
        return math.sqrt(math.log(2.0 * self.T**2) / (2.0 * m))

    def refine_intervals(self, t: int):
        width = self.threshold_width(t)
        if math.isfinite(width):
            cons = BidConstraints.from_boxes(self.boxes)
            _, u_max = maximize(AuctionFormat.UNIFORM, self._profile, self.v, cons)
            hull = superlevel_hull(AuctionFormat.UNIFORM, self._profile, self.v, u_max - width, constraints=cons)
            self.boxes = [
                (max(lo, h_lo), min(hi, h_hi)) for (lo, hi), (h_lo, h_hi) in zip(self.boxes, hull)
            ]
            if self.K >= 2:
                self.gap = min(self.boxes[k][0] - self.boxes[k + 1][1] for k in range(self.K - 1))
        return list(self.boxes), self.gap


class Ubiid(Learner):
    """Uniform-rule bidder against opponents drawn i.i.d. from a common law.

    Each censored marginal estimate is a noisy view of the same base CDF.  At
    every point the best-covered marginal is mapped back to the base CDF and
    then forward to every other rank.
    """

    name = "ubiid"
    feedback = "bandit"
    formats = (AuctionFormat.UNIFORM,)

    def __init__(self, fmt, v, N: int, refit_ratio: float = 0.0, refit_warmup: int = 0):
        super().__init__(fmt, v)
        if N < self.K:
            raise ValueError(f"need N >= K opponents, got N={N}, K={self.K}")
        self.N = int(N)
        self.schedule = RefitSchedule(refit_ratio, refit_warmup)
        self.banded = BandedCdf(self.K)
        self.n = 0
        self._bid = None

    def observe(self, obs: BanditObservation) -> None:
        self.banded.observe(obs)
        self.n += 1

    def best_coverage_index(self, coverage: np.ndarray) -> np.ndarray:
        """1-based rank with the largest coverage per column; ties go to the smallest."""
        return np.argmax(coverage, axis=0) + 1

    def transferred(self, knots=None):
        """(knots, values at knots, values between knots), each of shape (K, M)."""
        if knots is None:
            knots = self.banded.all_knots()
        K = self.K
        est_at, cov_at, est_seg, cov_seg = [], [], [], []
        for k in range(1, K + 1):
            e, c = self.banded.evaluate(k, knots)
            est_at.append(e)
            cov_at.append(c)
            e, c = self.banded.segment_values(k, knots)
            est_seg.append(e)
            cov_seg.append(c)

        def transfer(est, cov):
            est, cov = np.array(est), np.array(cov)
            kstar = self.best_coverage_index(cov)
            cols = np.arange(est.shape[1])
            q = est[kstar - 1, cols]
            covered = cov[kstar - 1, cols] > 0
            base = np.zeros_like(q)
            for j in range(1, K + 1):
                sel = covered & (kstar == j)
                if np.any(sel):
                    base[sel] = order_stat_inverse(self.N, j, q[sel])
            out = np.vstack([order_stat_cdf(self.N, k, base) for k in range(1, K + 1)])
            # mapping a rank onto itself is the identity
            out = np.where(kstar[None, :] == np.arange(1, K + 1)[:, None], q[None, :], out)
            return np.where(covered[None, :], out, 0.0)

        return knots, transfer(est_at, cov_at), transfer(est_seg, cov_seg)

    def profile(self) -> CdfProfile:
        knots, at, seg = self.transferred()
        return CdfProfile([PiecewiseConstant(knots, at[k], seg[k]) for k in range(self.K)])

    def next_bid(self, t):
        if self._bid is None or (self.n > 0 and self.schedule.due(self.n)):
            cons = BidConstraints.free(self.K, truthful=True)
            self._bid, _ = maximize(AuctionFormat.UNIFORM, self.profile(), self.v, cons)
            self.schedule.mark(self.n)
        return self._bid


class DiscretizedEtcDiscriminatory(Learner):
    """Explore-then-commit on an m-point bid grid for the pay-as-bid rule.

    Exploration plays the flat bids (g, ..., g) for each grid value g in round
    robin.  The allocation of such a round tells, for every rank j, whether the
    j-th highest opposing bid is at most g, so the marginal CDFs are estimated
    on the grid.  The committed bid maximizes the plug-in expected utility over
    sorted vectors with coordinates on the grid.
    """

    name = "discretized_etc"
    feedback = "outcome"
    anytime = False
    formats = (AuctionFormat.DISCRIMINATORY,)

    def __init__(self, fmt, v, T: int, m: int | None = None, T_expl: int | None = None):
        super().__init__(fmt, v)
        if T < 1:
            raise ValueError("horizon T must be at least 1")
        self.T = int(T)
        self.m = max(1, math.ceil(T ** (1.0 / 3.0))) if m is None else int(m)
        if self.m < 1:
            raise ValueError("grid size must be at least 1")
        self.grid = np.linspace(0.0, 1.0, self.m) if self.m > 1 else np.array([0.0])
        if T_expl is None:
            T_expl = self.m * math.ceil(T ** (2.0 / 3.0) / self.m)
        self.T_expl = min(int(T_expl), self.T)
        self.pulls = np.zeros(self.m, dtype=int)
        # wins[j, i] counts exploration rounds on grid point j where unit i+1 was won
        self.wins = np.zeros((self.m, self.K), dtype=int)
        self.n = 0
        self.committed: tuple | None = None
        self._last_arm = None

    def next_bid(self, t):
        if t <= self.T_expl:
            self._last_arm = (t - 1) % self.m
            return (float(self.grid[self._last_arm]),) * self.K
        self._last_arm = None
        if self.committed is None:
            self.committed = self._commit()
        return self.committed

    def observe(self, outcome) -> None:
        if self._last_arm is None:
            return
        j = self._last_arm
        self.pulls[j] += 1
        self.wins[j, : outcome.allocation] += 1
        self.n += 1

    def estimated_cdfs(self) -> np.ndarray:
        """(K, m) array; row r estimates the CDF of the (r+1)-th highest opposing bid."""
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = self.wins / np.maximum(self.pulls, 1)[:, None]
        # winning unit i with a flat bid g means beta_{K-i+1} <= g
        return frac[:, ::-1].T

    def _commit(self) -> tuple:
        est = self.estimated_cdfs()
        comps = [PiecewiseConstant(self.grid, est[r], est[r][:-1]) for r in range(self.K)]
        bid, _ = maximize(AuctionFormat.DISCRIMINATORY, CdfProfile(comps), self.v, grid=self.grid, extend_grid=False)
        return bid


LEARNERS = {
    cls.name: cls
    for cls in (FullInfo, Etc, IntervalRefine, Ubiid, TruthfulUnitDemand, FixedBid, DiscretizedEtcDiscriminatory)
}


def make_learner(name: str, fmt, v, T: int, params: dict | None = None, N: int | None = None) -> Learner:
    """Instantiate a learner by registry name; ``N`` feeds learners that need it."""
    params = dict(params or {})
    if name not in LEARNERS:
        raise ValueError(f"unknown learner {name!r}; choose from {sorted(LEARNERS)}")
    cls = LEARNERS[name]
    if cls in (Etc, IntervalRefine, DiscretizedEtcDiscriminatory):
        params.setdefault("T", T)
    if cls is Ubiid:
        if N is None and "N" not in params:
            raise ValueError("the ubiid learner needs the number of opponents N")
        params.setdefault("N", N)
    return cls(fmt, v, **params)
