"""Single-round mechanics of the K-item uniform-price and pay-as-bid auctions.

A bid vector is a tuple of K floats in [0, 1], sorted non-increasingly.  The
opposing bids ``beta`` use the same representation.  Ties between the bidder
and the opponents are always resolved in favor of the bidder.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "AuctionFormat",
    "AuctionOutcome",
    "BanditObservation",
    "DimensionError",
    "Status",
    "allocate",
    "bid_vector",
    "extract_bandit_observation",
    "observation_from_outcome",
    "oracle_settle",
    "settle",
    "settle_many",
]


class DimensionError(ValueError):
    """Raised when vectors that must share the item count K do not."""


class AuctionFormat(str, enum.Enum):
    UNIFORM = "uniform"
    DISCRIMINATORY = "discriminatory"

    @classmethod
    def parse(cls, value) -> "AuctionFormat":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown auction format {value!r}") from None


class Status(enum.IntEnum):
    """What a bandit round reveals about one opposing bid.

    BELOW: the opposing bid is at or below the slot's lower end.
    AT: the opposing bid is revealed exactly and lies in (lo, hi].
    ABOVE: the opposing bid is strictly above the slot's upper end.
    """

    BELOW = -1
    AT = 0
    ABOVE = 1


def bid_vector(values: Sequence[float], K: int | None = None, name: str = "bid") -> tuple:
    """Validate a sorted vector in [0, 1]^K and return it as a tuple of floats."""
    out = tuple(float(x) for x in values)
    if len(out) == 0:
        raise DimensionError(f"{name} vector must have at least one entry")
    if K is not None and len(out) != K:
        raise DimensionError(f"{name} vector has length {len(out)}, expected {K}")
    for i, x in enumerate(out):
        if not (0.0 <= x <= 1.0):
            raise ValueError(f"{name}[{i}] = {x} is outside [0, 1]")
        if i and x > out[i - 1]:
            raise ValueError(f"{name} vector must be non-increasing, got {out}")
    return out


@dataclass(frozen=True)
class AuctionOutcome:
    allocation: int
    unit_prices: tuple
    utility: float


@dataclass(frozen=True)
class BanditObservation:
    """Censored view of the opposing bids after one uniform-price round.

    Slot ``i`` (0-based) concerns the opposing bid of rank ``K - i`` (1-based),
    bounded by the bidder's own interval ``lo[i] = b[i+1]``, ``hi[i] = b[i]``.
    ``value[i]`` is the revealed bid when ``status[i]`` is AT and NaN otherwise.
    """

    lo: tuple
    hi: tuple
    status: tuple
    value: tuple

    @property
    def K(self) -> int:
        return len(self.status)


def _check_dims(b, beta, v=None):
    K = len(b)
    if K == 0:
        raise DimensionError("bid vector must have at least one entry")
    if len(beta) != K:
        raise DimensionError(f"bid has K={K} but opposing bids have K={len(beta)}")
    if v is not None and len(v) != K:
        raise DimensionError(f"bid has K={K} but valuations have K={len(v)}")
    return K


def allocate(b: Sequence[float], beta: Sequence[float]) -> int:
    """Number of units won: the longest prefix with b_j >= beta_{K+1-j}."""
    K = _check_dims(b, beta)
    x = 0
    for j in range(K):
        if b[j] >= beta[K - 1 - j]:
            x = j + 1
        else:
            break
    return x


def settle(fmt: AuctionFormat, b: Sequence[float], beta: Sequence[float], v: Sequence[float]) -> AuctionOutcome:
    """Allocation, unit prices and realized utility of one round."""
    K = _check_dims(b, beta, v)
    x = allocate(b, beta)
    if x == 0:
        return AuctionOutcome(0, (), 0.0)
    if fmt == AuctionFormat.UNIFORM:
        # first rejected bid: the better of the bidder's next bid and the
        # lowest opposing bid still in the running
        next_own = b[x] if x < K else 0.0
        price = max(next_own, beta[K - x])
        prices = (price,) * x
    else:
        prices = tuple(b[:x])
    utility = 0.0
    for l in range(x):
        utility += v[l] - prices[l]
    return AuctionOutcome(x, prices, utility)


def oracle_settle(fmt: AuctionFormat, b: Sequence[float], beta: Sequence[float], v: Sequence[float]) -> AuctionOutcome:
    """Reference settlement by sorting all 2K bids; used to check ``settle``."""
    K = _check_dims(b, beta, v)
    merged = [(float(x), 0) for x in b] + [(float(x), 1) for x in beta]
    # owner 0 (the bidder) sorts first among equal values
    merged.sort(key=lambda e: (-e[0], e[1]))
    winning_own = [val for val, owner in merged[:K] if owner == 0]
    x = len(winning_own)
    if x == 0:
        return AuctionOutcome(0, (), 0.0)
    fmt = AuctionFormat.parse(fmt)
    if fmt is AuctionFormat.UNIFORM:
        prices = (merged[K][0],) * x
    else:
        prices = tuple(winning_own)
    utility = 0.0
    for l in range(x):
        utility += v[l] - prices[l]
    return AuctionOutcome(x, prices, utility)


def settle_many(fmt: AuctionFormat, b, betas, v) -> np.ndarray:
    """Realized utilities of a fixed bid against many opposing bid vectors.

    ``betas`` has shape (n, K).  Vectorized counterpart of ``settle`` used for
    Monte-Carlo checks.
    """
    b = np.asarray(b, dtype=float)
    v = np.asarray(v, dtype=float)
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    K = b.shape[0]
    if betas.shape[1] != K or v.shape[0] != K:
        raise DimensionError("bid, opposing bids and valuations must share K")
    wins = b[None, :] >= betas[:, ::-1]
    # prefix property: once a comparison fails all later ones fail too
    x = np.cumprod(wins, axis=1).sum(axis=1)
    cum_v = np.concatenate([[0.0], np.cumsum(v)])
    if AuctionFormat.parse(fmt) is AuctionFormat.UNIFORM:
        b_ext = np.concatenate([b, [0.0]])
        beta_idx = np.clip(K - x, 0, K - 1)
        price = np.maximum(b_ext[x], betas[np.arange(len(x)), beta_idx])
        util = cum_v[x] - x * price
    else:
        cum_b = np.concatenate([[0.0], np.cumsum(b)])
        util = cum_v[x] - cum_b[x]
    return np.where(x > 0, util, 0.0)


def observation_from_outcome(b: Sequence[float], outcome: AuctionOutcome) -> BanditObservation:
    """Bandit observation reconstructed from the allocation and price alone."""
    K = len(b)
    x = outcome.allocation
    lo, hi, status, value = [], [], [], []
    for i in range(1, K + 1):
        b_lo = b[i] if i < K else 0.0
        lo.append(b_lo)
        hi.append(b[i - 1])
        if x >= i + 1:
            # unit i+1 was won, so the opposing bid of rank K-i+1 sits at or
            # below b_{i+1}
            status.append(Status.BELOW)
            value.append(math.nan)
        elif x < i:
            status.append(Status.ABOVE)
            value.append(math.nan)
        else:
            price = outcome.unit_prices[0]
            if price > b_lo:
                status.append(Status.AT)
                value.append(price)
            else:
                status.append(Status.BELOW)
                value.append(math.nan)
    return BanditObservation(tuple(lo), tuple(hi), tuple(status), tuple(value))


def extract_bandit_observation(b: Sequence[float], beta: Sequence[float]) -> BanditObservation:
    """What the bidder learns about ``beta`` from one uniform-price round."""
    _check_dims(b, beta)
    zeros = (0.0,) * len(b)
    return observation_from_outcome(b, settle(AuctionFormat.UNIFORM, b, beta, zeros))
