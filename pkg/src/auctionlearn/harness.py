"""Seeded episodes, replicated experiments, pseudo-regret and slope fits."""

from __future__ import annotations

import concurrent.futures
import csv
import json
import math
import os
import shutil
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .auction import AuctionFormat, bid_vector, observation_from_outcome, settle
from .distributions import build_distribution, spec_from_dict, spec_to_dict
from .learners import LEARNERS, make_learner
from .optimizer import DistributionProfile, candidate_grid, eval_expected_utility, maximize

__all__ = [
    "ExperimentConfig",
    "RegretTrace",
    "TraceWriter",
    "best_fixed_bid",
    "episode_rng",
    "fit_loglog_slope",
    "run_episode",
    "run_experiment",
    "write_outputs",
]

# opposing bids are drawn in blocks of this many rounds; keeping it fixed makes
# the first T draws of an episode independent of the horizon
SAMPLE_BLOCK = 4096
STREAM_THRESHOLD = 1_000_000
TRACE_HEADER = ["replication", "t", "instant_regret", "cumulative_regret"]


@dataclass
class ExperimentConfig:
    format: AuctionFormat
    K: int
    T: int
    valuations: tuple
    distribution: Any
    learner: str
    learner_params: dict = field(default_factory=dict)
    feedback: str = "full"
    seeds: tuple = (0,)
    replications: int = 1
    T_grid: tuple | None = None
    oracle_precision: int = 100_000
    oracle_grid: int = 10_000

    def __post_init__(self):
        self.format = AuctionFormat.parse(self.format)
        if isinstance(self.distribution, dict):
            self.distribution = spec_from_dict(self.distribution)
        self.valuations = bid_vector(self.valuations, name="valuation")
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.T_grid is not None:
            self.T_grid = tuple(sorted(int(t) for t in self.T_grid)) or None
        self.validate()

    def validate(self):
        if self.K < 1 or len(self.valuations) != self.K:
            raise ValueError(f"K={self.K} does not match {len(self.valuations)} valuations")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.T_grid is not None and min(self.T_grid) < 1:
            raise ValueError("every horizon in T_grid must be at least 1")
        if self.feedback not in ("full", "bandit"):
            raise ValueError(f"feedback must be 'full' or 'bandit', got {self.feedback!r}")
        if self.learner not in LEARNERS:
            raise ValueError(f"unknown learner {self.learner!r}; choose from {sorted(LEARNERS)}")
        cls = LEARNERS[self.learner]
        needed = {"full": "full", "bandit": "bandit", "outcome": "bandit"}.get(cls.feedback)
        if needed is not None and needed != self.feedback:
            raise ValueError(f"learner {self.learner!r} needs {needed} feedback, config has {self.feedback}")
        if self.format not in cls.formats:
            raise ValueError(f"learner {self.learner!r} does not support the {self.format.value} format")
        dist = self.build_distribution()
        if dist.K != self.K:
            raise ValueError(f"distribution has K={dist.K}, config has K={self.K}")
        if self.learner == "ubiid" and dist.kind != "iid_order_stats":
            raise ValueError("the ubiid learner requires an iid_order_stats adversary")

    def build_distribution(self):
        return build_distribution(self.distribution)

    def horizons(self) -> tuple:
        return self.T_grid if self.T_grid else (self.T,)

    def make_learner(self, T: int):
        dist = self.build_distribution()
        N = getattr(dist, "N", None)
        return make_learner(self.learner, self.format, self.valuations, T, self.learner_params, N=N)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        learner = d.pop("learner")
        if isinstance(learner, dict):
            name, params = learner["name"], dict(learner.get("params", {}))
        else:
            name, params = learner, {}
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(learner=name, learner_params=params, **d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "format": self.format.value,
            "K": self.K,
            "T": self.T,
            "valuations": list(self.valuations),
            "distribution": spec_to_dict(self.distribution),
            "learner": {"name": self.learner, "params": dict(self.learner_params)},
            "feedback": self.feedback,
            "seeds": list(self.seeds),
            "replications": self.replications,
            "T_grid": None if self.T_grid is None else list(self.T_grid),
            "oracle_precision": self.oracle_precision,
            "oracle_grid": self.oracle_grid,
        }


@dataclass
class RegretTrace:
    """Per-round pseudo-regret of one episode.

    ``instant`` and ``cumulative`` are empty when the episode streamed its
    trace to disk; ``checkpoints`` maps rounds to cumulative regret.
    """

    instant: np.ndarray
    cumulative: np.ndarray
    realized_utility: float
    checkpoints: dict
    bids_played: int

    @property
    def total(self) -> float:
        return self.checkpoints[max(self.checkpoints)]


def best_fixed_bid(dist, v, fmt, resolution: int = 10_000, refine_rounds: int = 3):
    """Oracle bid maximizing the exact expected utility, and its value.

    Jump points of the marginal CDFs are always on the grid.  For
    distributions with continuous parts a uniform grid is added and then
    refined locally around the incumbent a few times.
    """
    fmt = AuctionFormat.parse(fmt)
    profile = DistributionProfile(dist, resolution)
    grid = candidate_grid(profile, v)
    # no tie tolerance: the oracle must not give away even 1e-12 per round
    bid, _ = maximize(fmt, profile, v, grid=grid, tol=0.0)
    if dist.continuous:
        h = 1.0 / max(resolution, 1)
        for _ in range(refine_rounds):
            local = [np.linspace(c - h, c + h, 41) for c in bid]
            grid = np.concatenate([grid] + local)
            grid = np.unique(grid[(grid >= 0.0) & (grid <= 1.0)])
            bid, _ = maximize(fmt, profile, v, grid=grid, tol=0.0)
            h /= 20.0
    return bid, eval_expected_utility(fmt, profile, bid, v)


def episode_rng(seed: int, replication: int) -> np.random.Generator:
    """Counter-based generator owned by one (seed, replication) episode."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(replication,))))


class TraceWriter:
    """Streams ``replication,t,instant_regret,cumulative_regret`` rows to a CSV file."""

    def __init__(self, path, header: bool = True):
        self.path = Path(path)
        try:
            self._fh = open(self.path, "w", encoding="utf-8", newline="")
        except OSError as exc:
            raise OSError(f"cannot write trace file {self.path}: {exc}") from exc
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if header:
            self._writer.writerow(TRACE_HEADER)

    def write(self, replication: int, t0: int, instant: np.ndarray, cumulative: np.ndarray):
        for j in range(len(instant)):
            self._writer.writerow((replication, t0 + j, repr(float(instant[j])), repr(float(cumulative[j]))))

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _default_checkpoints(T: int) -> list:
    pts = [2**j for j in range(int(math.log2(T)) + 1)] if T >= 1 else []
    return sorted(set(pts + [T]))


def run_episode(
    config: ExperimentConfig,
    seed: int,
    replication: int = 0,
    T: int | None = None,
    checkpoints: Sequence[int] | None = None,
    oracle=None,
    dist=None,
    trace_writer: TraceWriter | None = None,
    trace_id: int | None = None,
) -> RegretTrace:
    """Play one episode and return its pseudo-regret trace.

    The instant regret of round t is the oracle value minus the exact expected
    utility of the bid played in round t.
    """
    T = config.T if T is None else int(T)
    dist = config.build_distribution() if dist is None else dist
    fmt, v = config.format, config.valuations
    if oracle is None:
        oracle = best_fixed_bid(dist, v, fmt, config.oracle_grid)
    best_value = oracle[1]
    learner = config.make_learner(T)
    feedback_kind = learner.feedback
    profile = DistributionProfile(dist, 0)
    rng = episode_rng(seed, replication)
    checkpoints = sorted(set(_default_checkpoints(T) if checkpoints is None else [c for c in checkpoints if c <= T]))
    keep = T < STREAM_THRESHOLD or trace_writer is None
    instant = np.empty(T) if keep else np.empty(SAMPLE_BLOCK)
    regret_of: dict = {}
    realized = 0.0
    cum = 0.0
    cps: dict = {}
    next_cp = 0
    for start in range(0, T, SAMPLE_BLOCK):
        n = min(SAMPLE_BLOCK, T - start)
        betas = dist.sample_many(rng, SAMPLE_BLOCK)[:n].tolist()
        block = instant[start : start + n] if keep else instant[:n]
        for j in range(n):
            t = start + j + 1
            b = learner.next_bid(t)
            beta = betas[j]
            outcome = settle(fmt, b, beta, v)
            if feedback_kind == "full":
                learner.observe(beta)
            elif feedback_kind == "bandit":
                learner.observe(observation_from_outcome(b, outcome))
            elif feedback_kind == "outcome":
                learner.observe(outcome)
            r = regret_of.get(b)
            if r is None:
                r = best_value - eval_expected_utility(fmt, profile, b, v)
                regret_of[b] = r
            block[j] = r
            realized += outcome.utility
        block_cum = cum + np.cumsum(block[:n])
        while next_cp < len(checkpoints) and checkpoints[next_cp] <= start + n:
            cps[checkpoints[next_cp]] = float(block_cum[checkpoints[next_cp] - start - 1])
            next_cp += 1
        if trace_writer is not None:
            trace_writer.write(replication if trace_id is None else trace_id, start + 1, block[:n], block_cum)
        cum = float(block_cum[-1])
    cps[T] = cum
    if keep:
        return RegretTrace(instant, np.cumsum(instant), realized, cps, len(regret_of))
    return RegretTrace(np.empty(0), np.empty(0), realized, cps, len(regret_of))


def _run_job(config_dict: dict, seed: int, replication: int, horizons: tuple, oracle, trace_path, trace_id):
    config = ExperimentConfig.from_dict(config_dict)
    dist = config.build_distribution()
    anytime = LEARNERS[config.learner].anytime
    finals = {}
    checkpoints = {}
    try:
        writer = TraceWriter(trace_path, header=False) if trace_path else None
        try:
            if anytime:
                T_max = max(horizons)
                cps = sorted(set(_default_checkpoints(T_max)) | set(horizons))
                tr = run_episode(config, seed, replication, T_max, cps, oracle, dist, writer, trace_id)
                finals = {T: tr.checkpoints[T] for T in horizons}
                checkpoints = tr.checkpoints
            else:
                for T in horizons:
                    w = writer if T == max(horizons) else None
                    tr = run_episode(config, seed, replication, T, None, oracle, dist, w, trace_id)
                    finals[T] = tr.checkpoints[T]
                    if T == max(horizons):
                        checkpoints = tr.checkpoints
        finally:
            if writer is not None:
                writer.close()
    except Exception as exc:
        raise RuntimeError(f"replication {replication} (seed {seed}) failed: {exc}") from exc
    return finals, checkpoints


def _stats(values) -> dict:
    x = np.asarray(values, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return {"mean": float(x.mean()), "stderr": se, "n": int(x.size)}


def run_experiment(config: ExperimentConfig, threads: int = 1, trace_path=None) -> dict:
    """Run every (seed, replication) episode and aggregate cumulative regret.

    With ``trace_path`` the per-round trace of the largest horizon is written
    there, one block of rows per episode in (seed, replication) order.
    """
    dist = config.build_distribution()
    oracle = best_fixed_bid(dist, config.valuations, config.format, config.oracle_grid)
    horizons = config.horizons()
    jobs = [(seed, rep) for seed in config.seeds for rep in range(config.replications)]
    cfg = config.to_dict()
    parts = []
    if trace_path is not None:
        trace_path = Path(trace_path)
        parts = [trace_path.with_name(f"{trace_path.name}.part{i}") for i in range(len(jobs))]
    args = [
        (cfg, seed, rep, horizons, oracle, parts[i] if parts else None, i) for i, (seed, rep) in enumerate(jobs)
    ]
    if threads <= 1 or len(jobs) == 1:
        results = [_run_job(*a) for a in args]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_job, *a) for a in args]
            results = [f.result() for f in futures]
    if parts:
        with open(trace_path, "w", encoding="utf-8", newline="") as out:
            out.write(",".join(TRACE_HEADER) + "\n")
            for part in parts:
                with open(part, encoding="utf-8") as fh:
                    shutil.copyfileobj(fh, out)
                os.remove(part)

    summary: dict = {
        "config": cfg,
        "oracle": {"bid": list(oracle[0]), "value": float(oracle[1])},
        "horizons": [{"T": int(T), **_stats([r[0][T] for r in results])} for T in horizons],
    }
    common = sorted(set.intersection(*(set(r[1]) for r in results)))
    summary["checkpoints"] = [{"t": int(t), **_stats([r[1][t] for r in results])} for t in common]
    if config.T_grid:
        points = [(h["T"], h["mean"]) for h in summary["horizons"]]
        try:
            slope, intercept, r2 = fit_loglog_slope(points)
            summary["slope"] = {"slope": slope, "intercept": intercept, "r_squared": r2}
        except ValueError as exc:
            summary["slope"] = {"error": str(exc)}
    return summary


def fit_loglog_slope(points: Sequence[tuple]) -> tuple:
    """Least-squares fit of log(regret) against log(T): (slope, intercept, r^2)."""
    pts = [(float(T), float(r)) for T, r in points]
    kept = [(T, r) for T, r in pts if T > 0 and r > 0]
    if len(kept) < len(pts):
        warnings.warn(f"dropped {len(pts) - len(kept)} nonpositive points before the log-log fit")
    if len(kept) < 3:
        raise ValueError(f"need at least 3 positive points for a slope fit, got {len(kept)}")
    x = np.log([T for T, _ in kept])
    y = np.log([r for _, r in kept])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def write_outputs(summary: dict, out_dir, traces: Sequence[RegretTrace] | None = None) -> dict:
    """Write ``summary.json`` and optionally ``traces.csv`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = {"summary": out / "summary.json"}
    try:
        with open(paths["summary"], "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, ensure_ascii=False)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {paths['summary']}: {exc}") from exc
    if traces is not None:
        paths["traces"] = out / "traces.csv"
        with TraceWriter(paths["traces"]) as w:
            for rep, tr in enumerate(traces):
                w.write(rep, 1, tr.instant, tr.cumulative)
    return paths
