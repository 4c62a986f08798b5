import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auctionlearn.auction import (
    AuctionFormat,
    DimensionError,
    Status,
    allocate,
    extract_bandit_observation,
    observation_from_outcome,
    oracle_settle,
    settle,
    settle_many,
)

U, D = AuctionFormat.UNIFORM, AuctionFormat.DISCRIMINATORY


def sorted_vectors(K, values=st.floats(0.0, 1.0)):
    return st.lists(values, min_size=K, max_size=K).map(lambda xs: tuple(sorted(xs, reverse=True)))


# coarse values make ties frequent
coarse = st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])


@st.composite
def instances(draw, values=st.floats(0.0, 1.0)):
    K = draw(st.integers(1, 6))
    return (
        draw(sorted_vectors(K, values)),
        draw(sorted_vectors(K, values)),
        draw(sorted_vectors(K, values)),
    )


def test_allocate_examples():
    assert allocate((0.9, 0.5, 0.2), (0.8, 0.4, 0.1)) == 2
    assert allocate((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)) == 0
    assert allocate((0.5,), (0.5,)) == 1


def test_allocate_dimension_mismatch():
    with pytest.raises(DimensionError):
        allocate((0.5, 0.2), (0.3,))
    with pytest.raises(DimensionError):
        settle(U, (0.5,), (0.3,), (1.0, 0.5))


def test_settle_examples():
    b, beta, v = (0.9, 0.5, 0.2), (0.8, 0.4, 0.1), (1.0, 0.6, 0.3)
    out = settle(U, b, beta, v)
    assert out.allocation == 2
    assert out.unit_prices == (0.4, 0.4)
    assert out.utility == pytest.approx(0.8)
    out = settle(D, b, beta, v)
    assert out.allocation == 2
    assert out.unit_prices == (0.9, 0.5)
    assert out.utility == pytest.approx(0.2)
    for fmt in (U, D):
        out = settle(fmt, (0.0, 0.0), (0.3, 0.1), (1.0, 1.0))
        assert out.allocation == 0 and out.unit_prices == () and out.utility == 0.0


def test_oracle_examples():
    b, beta, v = (0.9, 0.5, 0.2), (0.8, 0.4, 0.1), (1.0, 0.6, 0.3)
    assert oracle_settle(U, b, beta, v) == settle(U, b, beta, v)
    assert oracle_settle(D, b, beta, v) == settle(D, b, beta, v)
    out = oracle_settle(U, (0.5, 0.5), (0.5, 0.5), (1.0, 1.0))
    assert (out.allocation, out.unit_prices, out.utility) == (2, (0.5, 0.5), 1.0)
    out = oracle_settle(D, (1.0,), (0.0,), (1.0,))
    assert (out.allocation, out.unit_prices, out.utility) == (1, (1.0,), 0.0)


def test_format_parse():
    assert AuctionFormat.parse("Uniform") is U
    assert AuctionFormat.parse(D) is D
    with pytest.raises(ValueError):
        AuctionFormat.parse("vickrey")


@settings(max_examples=300, deadline=None)
@given(instances(coarse), st.sampled_from([U, D]))
def test_settle_matches_oracle_with_ties(inst, fmt):
    b, beta, v = inst
    assert settle(fmt, b, beta, v) == oracle_settle(fmt, b, beta, v)


@settings(max_examples=200, deadline=None)
@given(instances())
def test_outcome_invariants(inst):
    b, beta, v = inst
    u = settle(U, b, beta, v)
    d = settle(D, b, beta, v)
    assert u.allocation == d.allocation
    assert len(set(u.unit_prices)) <= 1
    assert d.unit_prices == b[: d.allocation]
    # uniform price is the (K+1)-th largest of the 2K bids
    if u.allocation:
        merged = sorted(b + beta, reverse=True)
        assert u.unit_prices[0] == merged[len(b)]


@settings(max_examples=200, deadline=None)
@given(instances(coarse), st.data())
def test_allocation_monotone_in_bids(inst, data):
    b, beta, _ = inst
    K = len(b)
    i = data.draw(st.integers(0, K - 1))
    ceiling = 1.0 if i == 0 else b[i - 1]
    raised = list(b)
    raised[i] = data.draw(st.floats(b[i], ceiling))
    assert allocate(tuple(raised), beta) >= allocate(b, beta)


@settings(max_examples=300, deadline=None)
@given(instances(coarse))
def test_bandit_observation_needs_only_allocation_and_price(inst):
    b, beta, _ = inst
    K = len(b)
    obs = extract_bandit_observation(b, beta)
    # direct evaluation against the full opposing vector
    for i in range(1, K + 1):
        lo = b[i] if i < K else 0.0
        hi = b[i - 1]
        target = beta[K - i]
        assert obs.lo[i - 1] == lo and obs.hi[i - 1] == hi
        if lo < target <= hi:
            assert obs.status[i - 1] == Status.AT
            assert obs.value[i - 1] == target
        elif target <= lo:
            assert obs.status[i - 1] == Status.BELOW
        else:
            assert obs.status[i - 1] == Status.ABOVE
    # the discriminatory outcome carries the same allocation
    assert observation_from_outcome(b, settle(U, b, beta, (0.0,) * K)) == obs


def test_bandit_observation_examples():
    obs = extract_bandit_observation((0.7, 0.3), (0.9, 0.5))
    assert obs.status == (Status.AT, Status.ABOVE)
    assert obs.value[0] == 0.5 and (obs.lo[0], obs.hi[0]) == (0.3, 0.7)
    assert (obs.lo[1], obs.hi[1]) == (0.0, 0.3)
    obs = extract_bandit_observation((0.7, 0.3), (0.6, 0.2))
    assert obs.status == (Status.BELOW, Status.ABOVE)
    obs = extract_bandit_observation((0.0,), (0.4,))
    assert obs.status == (Status.ABOVE,) and math.isnan(obs.value[0])


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0), sorted_vectors(3), sorted_vectors(3))
def test_unit_demand_truthful_bid_dominates(v1, beta, other):
    v = (v1, 0.0, 0.0)
    truthful = settle(U, (v1, 0.0, 0.0), beta, v).utility
    assert truthful >= settle(U, other, beta, v).utility - 1e-15


def test_settle_many_matches_settle():
    rng = np.random.default_rng(3)
    for K in (1, 2, 4):
        for _ in range(20):
            b = tuple(np.sort(rng.random(K))[::-1])
            v = tuple(np.sort(rng.random(K))[::-1])
            betas = -np.sort(-rng.random((50, K)), axis=1)
            for fmt in (U, D):
                got = settle_many(fmt, b, betas, v)
                want = [settle(fmt, b, tuple(row), v).utility for row in betas]
                np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)
