"""Opposing-bid distributions with exact marginal CDFs.

Every distribution samples sorted vectors in [0, 1]^K and exposes, for each
rank ``k`` (1 = highest opposing bid), the marginal CDF ``P(beta_k <= x)`` and
its running integral ``int_0^x P(beta_k <= t) dt``.  The latter is what the
uniform-price expected utility needs besides point values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from .auction import bid_vector
from .cdf import StepCdf, order_stat_cdf

__all__ = [
    "AdversaryDistribution",
    "BaseLaw",
    "DeltaSeparated",
    "DeltaSeparatedSpec",
    "Discrete",
    "DiscreteSpec",
    "FirstPriceHard",
    "FirstPriceHardSpec",
    "IidBernoulliHardSpec",
    "IidOrderStats",
    "IidOrderStatsSpec",
    "Uniform3Hard",
    "Uniform3HardSpec",
    "build_distribution",
    "spec_from_dict",
    "spec_to_dict",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def cumulative_integral(f: Callable, xs, breaks) -> np.ndarray:
    """``int_0^x f`` at each ``x`` by Gauss-Legendre on the pieces between breaks.

    ``f`` must be smooth between consecutive points of ``breaks``; jumps at
    the breaks themselves are harmless.
    """
    xs = np.clip(np.asarray(xs, dtype=float), 0.0, 1.0)
    br = np.asarray(breaks, dtype=float)
    knots = np.unique(np.concatenate([[0.0], br[(br > 0) & (br <= 1)], xs.ravel()]))
    if knots.size == 1:
        return np.zeros_like(xs)
    a, b = knots[:-1], knots[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
    cum = np.concatenate([[0.0], np.cumsum(half * (vals @ _GL_WEIGHTS))])
    return cum[np.searchsorted(knots, xs)]


class AdversaryDistribution:
    """Common interface; subclasses fill in ``_cdf``, ``sample_many`` and friends."""

    kind: str = ""
    K: int = 1
    # whether some marginal has a continuous part, so that the oracle needs a
    # dense grid rather than the jump points alone
    continuous: bool = True

    def _check_k(self, k: int):
        if not (1 <= k <= self.K):
            raise IndexError(f"marginal index {k} outside 1..{self.K}")

    def _cdf(self, k: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _integral(self, k: int, x: np.ndarray) -> np.ndarray:
        return cumulative_integral(lambda t: self._cdf(k, t), x, self.breakpoints())

    def marginal_cdf(self, k: int, x):
        """P(beta_k <= x)."""
        self._check_k(k)
        x_arr = np.asarray(x, dtype=float)
        out = np.where(x_arr < 0, 0.0, np.where(x_arr >= 1, 1.0, self._cdf(k, np.clip(x_arr, 0, 1))))
        return float(out) if out.ndim == 0 else out

    def cdf_integral(self, k: int, x):
        """Integral of the k-th marginal CDF over [0, x]."""
        self._check_k(k)
        x_arr = np.asarray(x, dtype=float)
        flat = np.clip(x_arr.ravel(), 0.0, 1.0)
        out = self._integral(k, flat).reshape(x_arr.shape)
        out = out + np.maximum(x_arr - 1.0, 0.0)
        return float(out) if out.ndim == 0 else out

    def breakpoints(self) -> np.ndarray:
        """Points where some marginal CDF may jump or change formula."""
        return np.array([0.0, 1.0])

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> tuple:
        return tuple(float(x) for x in self.sample_many(rng, 1)[0])


class Discrete(AdversaryDistribution):
    kind = "discrete"
    continuous = False

    def __init__(self, atoms: Sequence[Sequence[float]], probs: Sequence[float]):
        if len(atoms) == 0 or len(atoms) != len(probs):
            raise ValueError("discrete distribution needs one probability per atom")
        K = len(atoms[0])
        self.atoms = np.array([bid_vector(a, K, name="atom") for a in atoms], dtype=float)
        self.probs = np.asarray(probs, dtype=float)
        if np.any(self.probs < 0):
            raise ValueError("atom probabilities must be nonnegative")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"atom probabilities must sum to 1, got {self.probs.sum()}")
        self.K = K
        self._marginals = []
        for k in range(K):
            col = self.atoms[:, k]
            order = np.argsort(col, kind="stable")
            pts, inv = np.unique(col[order], return_inverse=True)
            mass = np.bincount(inv, weights=self.probs[order], minlength=pts.size)
            self._marginals.append(StepCdf(pts, np.minimum(np.cumsum(mass), 1.0)))
        self._cum = np.cumsum(self.probs)
        self._cum[-1] = 1.0

    def _cdf(self, k, x):
        return np.asarray(self._marginals[k - 1](x), dtype=float)

    def _integral(self, k, x):
        return np.asarray(self._marginals[k - 1].integral_to(x), dtype=float)

    def breakpoints(self):
        return np.unique(np.concatenate([[0.0, 1.0], self.atoms.ravel()]))

    def sample_many(self, rng, n):
        idx = np.searchsorted(self._cum, rng.random(n), side="right")
        return self.atoms[np.minimum(idx, len(self.probs) - 1)]


@dataclass(frozen=True)
class BaseLaw:
    """Law of one opponent's bid for the i.i.d. order-statistic model.

    name: "uniform", "power" (CDF x**a), "beta" (parameters a, b) or
    "bernoulli" (value ``scale`` with probability p, else 0).
    """

    name: str = "uniform"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.params
        if self.name == "uniform":
            pass
        elif self.name == "power":
            if p.get("a", 0) <= 0:
                raise ValueError("power base law needs a > 0")
        elif self.name == "beta":
            if p.get("a", 0) <= 0 or p.get("b", 0) <= 0:
                raise ValueError("beta base law needs a > 0 and b > 0")
        elif self.name == "bernoulli":
            if not (0.0 <= p.get("p", -1) <= 1.0):
                raise ValueError("bernoulli base law needs p in [0, 1]")
            if not (0.0 < p.get("scale", 1.0) <= 1.0):
                raise ValueError("bernoulli scale must lie in (0, 1]")
        else:
            raise ValueError(
                f"unsupported base law {self.name!r}: use a continuous strictly increasing law "
                "(uniform, power, beta) or bernoulli"
            )

    @property
    def discrete(self) -> bool:
        return self.name == "bernoulli"

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        p = self.params
        if self.name == "uniform":
            return x
        if self.name == "power":
            return x ** p["a"]
        if self.name == "beta":
            return stats.beta.cdf(x, p["a"], p["b"])
        scale = p.get("scale", 1.0)
        return np.where(x >= scale, 1.0, 1.0 - p["p"])

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        p = self.params
        if self.name == "uniform":
            return u
        if self.name == "power":
            return u ** (1.0 / p["a"])
        if self.name == "beta":
            return stats.beta.ppf(u, p["a"], p["b"])
        return np.where(u < 1.0 - p["p"], 0.0, p.get("scale", 1.0))

    def breakpoints(self):
        if self.name == "bernoulli":
            return np.array([0.0, self.params.get("scale", 1.0), 1.0])
        return np.array([0.0, 1.0])


class IidOrderStats(AdversaryDistribution):
    """Top-K order statistics of N i.i.d. opponent bids."""

    kind = "iid_order_stats"

    def __init__(self, N: int, K: int, base: BaseLaw | None = None):
        if K < 1:
            raise ValueError("K must be at least 1")
        if N < K:
            raise ValueError(f"need N >= K opponents, got N={N}, K={K}")
        self.N, self.K = int(N), int(K)
        self.base = base if base is not None else BaseLaw()
        self.continuous = not self.base.discrete

    def _cdf(self, k, x):
        return order_stat_cdf(self.N, k, self.base.cdf(x))

    def breakpoints(self):
        return self.base.breakpoints()

    def sample_many(self, rng, n):
        draws = self.base.ppf(rng.random((n, self.N)))
        draws = np.clip(draws, 0.0, 1.0)
        return -np.sort(-draws, axis=1)[:, : self.K]


class _IntervalLaw:
    """Law of one coordinate of a Delta-separated distribution."""

    def __init__(self, lo: float, hi: float, spec: dict | None):
        spec = dict(spec or {"law": "uniform"})
        self.lo, self.hi = float(lo), float(hi)
        self.law = spec.get("law", "uniform")
        if self.law == "uniform" and self.hi > self.lo:
            self.step = None
        elif self.law in ("uniform", "point"):
            at = float(spec.get("at", self.lo)) if self.law == "point" else self.lo
            self.step = StepCdf([at], [1.0])
            self.law = "point"
        elif self.law == "atoms":
            pts = np.asarray(spec["points"], dtype=float)
            probs = np.asarray(spec["probs"], dtype=float)
            if abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
                raise ValueError("interval atom probabilities must be nonnegative and sum to 1")
            order = np.argsort(pts)
            self.step = StepCdf(pts[order], np.minimum(np.cumsum(probs[order]), 1.0))
        else:
            raise ValueError(f"unknown interval law {self.law!r}")
        if self.step is not None:
            jp = self.step.jump_points
            if jp[0] < self.lo - 1e-15 or jp[-1] > self.hi + 1e-15:
                raise ValueError("interval law puts mass outside its interval")

    @property
    def continuous(self):
        return self.step is None

    def cdf(self, x):
        if self.step is not None:
            return np.asarray(self.step(x), dtype=float)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def integral(self, x):
        if self.step is not None:
            return np.asarray(self.step.integral_to(x), dtype=float)
        w = self.hi - self.lo
        inside = np.clip(x, self.lo, self.hi) - self.lo
        return inside**2 / (2.0 * w) + np.maximum(x - self.hi, 0.0)

    def ppf(self, u):
        if self.step is None:
            return self.lo + u * (self.hi - self.lo)
        idx = np.searchsorted(self.step.cum_probs, u, side="right")
        return self.step.jump_points[np.minimum(idx, self.step.jump_points.size - 1)]

    def breakpoints(self):
        if self.step is not None:
            return self.step.jump_points
        return np.array([self.lo, self.hi])


class DeltaSeparated(AdversaryDistribution):
    """Independent coordinates, each confined to its own interval.

    ``intervals[k-1]`` holds beta_k; consecutive intervals must be at least
    ``delta`` apart (lower end of I_k minus upper end of I_{k+1}).
    """

    kind = "delta_separated"

    def __init__(self, intervals: Sequence[Sequence[float]], delta: float, laws: Sequence[dict] | None = None):
        if len(intervals) == 0:
            raise ValueError("need at least one interval")
        if delta <= 0:
            raise ValueError(f"separation delta must be positive, got {delta}")
        self.K = len(intervals)
        self.delta = float(delta)
        self.intervals = [(float(a), float(b)) for a, b in intervals]
        for k, (a, b) in enumerate(self.intervals, start=1):
            if not (0.0 <= a <= b <= 1.0):
                raise ValueError(f"interval {k} = [{a}, {b}] is not a sub-interval of [0, 1]")
        for k in range(self.K - 1):
            gap = self.intervals[k][0] - self.intervals[k + 1][1]
            if gap < self.delta - 1e-12:
                raise ValueError(
                    f"intervals {k + 1} and {k + 2} are {gap:.6g} apart, less than delta={self.delta}"
                )
        laws = list(laws) if laws is not None else [None] * self.K
        if len(laws) != self.K:
            raise ValueError("need one law per interval")
        self.laws = [_IntervalLaw(a, b, s) for (a, b), s in zip(self.intervals, laws)]
        self.continuous = any(l.continuous for l in self.laws)

    def _cdf(self, k, x):
        return self.laws[k - 1].cdf(x)

    def _integral(self, k, x):
        return self.laws[k - 1].integral(x)

    def breakpoints(self):
        return np.unique(np.concatenate([[0.0, 1.0]] + [l.breakpoints() for l in self.laws]))

    def sample_many(self, rng, n):
        u = rng.random((n, self.K))
        return np.column_stack([law.ppf(u[:, k]) for k, law in enumerate(self.laws)])


def _fph_base_cdf(x):
    x = np.asarray(x, dtype=float)
    low = 1.0 / (3.0 * (1.0 - np.minimum(x, 1.0 / 3.0)))
    high = 0.25 + 0.75 * x
    return np.where(x < 0, 0.0, np.where(x < 1.0 / 3.0, low, np.minimum(high, 1.0)))


def _fph_base_ppf(u):
    u = np.asarray(u, dtype=float)
    mid = 1.0 - 1.0 / (3.0 * np.maximum(u, 1.0 / 3.0))
    return np.where(u <= 1.0 / 3.0, 0.0, np.where(u < 0.5, mid, (u - 0.25) / 0.75))


class FirstPriceHard(AdversaryDistribution):
    """Single-unit pay-as-bid instance with a locally flattened CDF.

    The base CDF is 1/(3(1-b)) on [0, 1/3) and 1/4 + 3b/4 on [1/3, 1], so a
    bidder with value 1 is indifferent among all bids in [0, 1/3].  With
    ``index`` i the CDF is held at its right-end value on
    [i/9 T^(-1/3), (i+1)/9 T^(-1/3)), which makes the left end optimal.

    For K > 1 the instance is embedded as in a Delta-separated reduction: the
    low coordinate uses the CDF rescaled to [0, 1/2] and the other K-1
    opposing bids sit deterministically at 1 - j/(2K), j = 0..K-2.
    """

    kind = "first_price_hard"

    def __init__(self, T: int, index: int | None = None, K: int = 1):
        if T < 1:
            raise ValueError("horizon T must be at least 1")
        if K < 1:
            raise ValueError("K must be at least 1")
        self.T, self.K = int(T), int(K)
        self.index = index
        self.scale = 1.0 if K == 1 else 0.5
        self.high_bids = [1.0 - j / (2.0 * K) for j in range(K - 1)]
        if index is None:
            self.window = None
        else:
            if index < 0:
                raise ValueError("perturbation index must be nonnegative")
            width = T ** (-1.0 / 3.0) / 9.0
            a, c = index * width, (index + 1) * width
            if c > 1.0 / 3.0 + 1e-15:
                raise ValueError(
                    f"perturbation index {index} needs (i+1)/9 T^(-1/3) <= 1/3; T={T} is too small"
                )
            self.window = (a, c)

    def low_cdf(self, y):
        """CDF of the (unscaled) low coordinate."""
        y = np.asarray(y, dtype=float)
        base = _fph_base_cdf(y)
        if self.window is None:
            return base
        a, c = self.window
        return np.where((y >= a) & (y < c), _fph_base_cdf(c), base)

    def _low_ppf(self, u):
        base = _fph_base_ppf(u)
        if self.window is None:
            return base
        a, c = self.window
        return np.where((u > _fph_base_cdf(a)) & (u <= _fph_base_cdf(c)), a, base)

    def _cdf(self, k, x):
        if k < self.K:
            return np.where(x >= self.high_bids[k - 1], 1.0, 0.0)
        return self.low_cdf(np.minimum(x / self.scale, 1.0))

    def _integral(self, k, x):
        if k < self.K:
            return np.maximum(x - self.high_bids[k - 1], 0.0)
        return super()._integral(k, x)

    def breakpoints(self):
        pts = [0.0, 1.0, self.scale / 3.0, self.scale] + list(self.high_bids)
        if self.window is not None:
            pts += [self.scale * self.window[0], self.scale * self.window[1]]
        return np.unique(np.asarray(pts))

    def sample_many(self, rng, n):
        low = self.scale * self._low_ppf(rng.random(n))
        cols = [np.full(n, h) for h in self.high_bids] + [low]
        return np.column_stack(cols)


_U3_KNEE = 5.0 / 900.0
_U3_TOP = 1.0 / 6.0
_U3_VALUE = 1.0 / 3.0


def _u3_f1(y):
    y = np.asarray(y, dtype=float)
    mid_y = np.clip(y, _U3_KNEE, _U3_TOP)
    mid = (np.log(_U3_VALUE - _U3_KNEE) - np.log(_U3_VALUE - mid_y)) / 3.0 + _U3_KNEE
    return np.where(y <= _U3_KNEE, y, mid)


class Uniform3Hard(AdversaryDistribution):
    """Three-unit uniform-price instance with a tent-shaped perturbation of F_2.

    Densities on [0, 5/900] are 1, 21 and 101 for beta_1, beta_2, beta_3; on
    (5/900, 1/6] each follows 1/(3(1/3 - y)); there is no mass on (1/6, 1/3]
    and the remaining mass of each coordinate is spread uniformly on (1/3, 1].
    The perturbation raises F_2 by a tent of height epsilon/2 on the window
    (5/900 + k eps, 5/900 + (k+1) eps).  Coordinates are coupled comonotonically
    so samples are sorted.
    """

    kind = "uniform3_hard"

    def __init__(self, T: int, index: int | None = None, epsilon: float | None = None):
        if T < 1:
            raise ValueError("horizon T must be at least 1")
        self.K = 3
        self.T = int(T)
        self.epsilon = float(epsilon) if epsilon is not None else T ** (-1.0 / 3.0) / 700.0
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.index = index
        if index is None:
            self.window = None
        else:
            max_index = math.floor(1.0 / (7.0 * self.epsilon))
            if not (0 <= index <= max_index):
                raise ValueError(f"perturbation index {index} outside 0..{max_index}")
            start = _U3_KNEE + index * self.epsilon
            self.window = (start, start + self.epsilon)
        self._tail_start = [self._body(k, _U3_VALUE) for k in (1, 2, 3)]

    def _body(self, k, y):
        y = np.asarray(y, dtype=float)
        f1 = _u3_f1(y)
        if k == 1:
            return f1
        slope, offset = (21.0, 1.0 / 9.0) if k == 2 else (101.0, 5.0 / 9.0)
        return np.where(y <= _U3_KNEE, slope * y, offset + f1)

    def perturbation(self, y):
        """Amount added to the base F_2 at ``y``."""
        y = np.asarray(y, dtype=float)
        if self.window is None:
            return np.zeros_like(y)
        a, c = self.window
        o = y - a
        half = 0.5 * self.epsilon
        tent = np.where(o < half, o, self.epsilon - o)
        return np.where((y > a) & (y < c), tent, 0.0)

    def _cdf(self, k, x):
        x = np.asarray(x, dtype=float)
        body = self._body(k, np.minimum(x, _U3_VALUE))
        if k == 2:
            body = body + self.perturbation(x)
        top = self._tail_start[k - 1]
        tail = top + (1.0 - top) * (x - _U3_VALUE) / (1.0 - _U3_VALUE)
        return np.where(x <= _U3_VALUE, body, np.minimum(tail, 1.0))

    def breakpoints(self):
        pts = [0.0, _U3_KNEE, _U3_TOP, _U3_VALUE, 1.0]
        if self.window is not None:
            a, c = self.window
            pts += [a, 0.5 * (a + c), c]
        return np.unique(np.asarray(pts))

    def _quantile(self, k, u):
        lo = np.zeros_like(u)
        hi = np.ones_like(u)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self._cdf(k, mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return hi

    def sample_many(self, rng, n):
        u = rng.random(n)
        cols = [self._quantile(k, u) for k in (1, 2, 3)]
        return np.column_stack(cols)


# ----------------------------------------------------------------------------
# Specs: plain descriptions that can live in a JSON config.


@dataclass(frozen=True)
class DiscreteSpec:
    atoms: tuple
    probs: tuple


@dataclass(frozen=True)
class IidOrderStatsSpec:
    N: int
    K: int
    base: BaseLaw = field(default_factory=BaseLaw)


@dataclass(frozen=True)
class DeltaSeparatedSpec:
    intervals: tuple
    delta: float
    laws: tuple | None = None


@dataclass(frozen=True)
class FirstPriceHardSpec:
    T: int
    index: int | None = None
    K: int = 1


@dataclass(frozen=True)
class Uniform3HardSpec:
    T: int
    index: int | None = None
    epsilon: float | None = None


@dataclass(frozen=True)
class IidBernoulliHardSpec:
    p: float


def build_distribution(spec) -> AdversaryDistribution:
    if isinstance(spec, dict):
        spec = spec_from_dict(spec)
    if isinstance(spec, DiscreteSpec):
        return Discrete(spec.atoms, spec.probs)
    if isinstance(spec, IidOrderStatsSpec):
        return IidOrderStats(spec.N, spec.K, spec.base)
    if isinstance(spec, DeltaSeparatedSpec):
        return DeltaSeparated(spec.intervals, spec.delta, spec.laws)
    if isinstance(spec, FirstPriceHardSpec):
        return FirstPriceHard(spec.T, spec.index, spec.K)
    if isinstance(spec, Uniform3HardSpec):
        return Uniform3Hard(spec.T, spec.index, spec.epsilon)
    if isinstance(spec, IidBernoulliHardSpec):
        if not (0.0 <= spec.p <= 1.0):
            raise ValueError("bernoulli parameter p must lie in [0, 1]")
        return IidOrderStats(2, 2, BaseLaw("bernoulli", {"p": spec.p, "scale": 2.0 / 3.0}))
    raise TypeError(f"not a distribution spec: {spec!r}")


def spec_from_dict(d: dict[str, Any]):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "discrete":
        return DiscreteSpec(tuple(tuple(a) for a in d["atoms"]), tuple(d["probs"]))
    if kind == "iid_order_stats":
        base = d.get("base", {"name": "uniform"})
        if isinstance(base, str):
            base = {"name": base}
        base = dict(base)
        law = BaseLaw(base.pop("name", "uniform"), base)
        return IidOrderStatsSpec(int(d["N"]), int(d["K"]), law)
    if kind == "delta_separated":
        laws = d.get("laws")
        return DeltaSeparatedSpec(
            tuple(tuple(i) for i in d["intervals"]), float(d["delta"]), None if laws is None else tuple(laws)
        )
    if kind == "first_price_hard":
        return FirstPriceHardSpec(int(d["T"]), d.get("index"), int(d.get("K", 1)))
    if kind == "uniform3_hard":
        return Uniform3HardSpec(int(d["T"]), d.get("index"), d.get("epsilon"))
    if kind == "iid_bernoulli_hard":
        return IidBernoulliHardSpec(float(d["p"]))
    raise ValueError(f"unknown distribution kind {kind!r}")


def spec_to_dict(spec) -> dict[str, Any]:
    if isinstance(spec, DiscreteSpec):
        return {"kind": "discrete", "atoms": [list(a) for a in spec.atoms], "probs": list(spec.probs)}
    if isinstance(spec, IidOrderStatsSpec):
        return {"kind": "iid_order_stats", "N": spec.N, "K": spec.K, "base": {"name": spec.base.name, **spec.base.params}}
    if isinstance(spec, DeltaSeparatedSpec):
        out = {"kind": "delta_separated", "intervals": [list(i) for i in spec.intervals], "delta": spec.delta}
        if spec.laws is not None:
            out["laws"] = list(spec.laws)
        return out
    if isinstance(spec, FirstPriceHardSpec):
        return {"kind": "first_price_hard", "T": spec.T, "index": spec.index, "K": spec.K}
    if isinstance(spec, Uniform3HardSpec):
        return {"kind": "uniform3_hard", "T": spec.T, "index": spec.index, "epsilon": spec.epsilon}
    if isinstance(spec, IidBernoulliHardSpec):
        return {"kind": "iid_bernoulli_hard", "p": spec.p}
    raise TypeError(f"not a distribution spec: {spec!r}")
