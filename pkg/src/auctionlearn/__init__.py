"""Learning to bid in repeated multi-unit uniform-price and pay-as-bid auctions."""

from .auction import (
    AuctionFormat,
    AuctionOutcome,
    BanditObservation,
    Status,
    allocate,
    extract_bandit_observation,
    oracle_settle,
    settle,
)
from .distributions import build_distribution
from .optimizer import BidConstraints, CdfProfile, DistributionProfile, eval_expected_utility, maximize

__version__ = "0.1.0"
