"""Monte Carlo campaigns, exhaustive sweeps, and result export.

Trials are embarrassingly parallel: each draws its own generator from a seed
derived statelessly from the campaign master, and aggregation is by counting,
so results are identical at any worker count.  Heavy inner loops (grand
coalition flags, fixed-shape stability, exhaustive Nash existence) are
vectorized over trial batches.
"""
from __future__ import annotations

import enum
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bounds_mod
from .clustering import AlgoConfig, run_three_stage
from .games import HedonicGame
from .oracle import DEFAULT_ENUMERATION_LIMIT, EnumerationLimitError, exists_stable, rgs_strings
from .sampling import SeedSpec, UtilityDistribution, derive_trial_seed, sample_game
from .stability import Concept, concept_profile

__all__ = [
    "WILSON_Z",
    "wilson_interval",
    "FrequencyEstimate",
    "ResultRow",
    "TrialSummary",
    "CampaignKind",
    "Campaign",
    "CampaignResult",
    "run_campaign",
    "run_mc_alg",
    "run_oracle_existence",
    "run_grand_coalition_study",
    "run_bounds_compare",
    "run_lemma_verify",
    "nash_existence_by_k",
    "grand_coalition_flags",
    "fixed_shape_ns_successes",
    "sample_lagrange_instance",
    "export_results",
    "load_results",
]

WILSON_Z = 1.959963984540054  # two-sided 95%

# Trials of distinct n-values (or shapes) live in disjoint seed blocks.
TRIAL_BLOCK = 1 << 40

_BATCH = 2048


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion; well behaved at 0 and 1."""
    if trials < 1:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in 0..trials")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    margin = (z / denom) * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials))
    return max(0.0, center - margin), min(1.0, center + margin)


@dataclass(frozen=True)
class FrequencyEstimate:
    successes: int
    trials: int
    estimate: float
    wilson_lo: float
    wilson_hi: float

    @classmethod
    def from_counts(cls, successes: int, trials: int) -> "FrequencyEstimate":
        lo, hi = wilson_interval(successes, trials)
        return cls(successes, trials, successes / trials, lo, hi)


@dataclass(frozen=True)
class ResultRow:
    """One exported line: a measured frequency (or estimate) plus optional bound."""

    n: int
    property: str
    successes: int
    trials: int
    estimate: float
    wilson_lo: float
    wilson_hi: float
    bound_value: float | None = None

    @classmethod
    def from_frequency(cls, n: int, prop: str, freq: FrequencyEstimate,
                       bound: float | None = None) -> "ResultRow":
        return cls(n, prop, freq.successes, freq.trials, freq.estimate,
                   freq.wilson_lo, freq.wilson_hi, bound)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "property": self.property, "successes": self.successes,
            "trials": self.trials, "estimate": self.estimate,
            "wilson_lo": self.wilson_lo, "wilson_hi": self.wilson_hi,
            "bound_value": self.bound_value,
        }


@dataclass(frozen=True)
class TrialSummary:
    """Per-trial outcome record; wall time is informational and ignored by equality."""

    n: int
    trial: int
    seed_stream: int
    outcomes: tuple[tuple[str, bool], ...]
    coalition_sizes: tuple[tuple[int, int], ...] = ()
    wall_ms: float = field(default=0.0, compare=False)

    def outcome(self, prop: str) -> bool:
        for name, val in self.outcomes:
            if name == prop:
                return val
        raise KeyError(prop)


class CampaignKind(enum.Enum):
    MC_ALG = "mc-alg"
    MC_GRAND = "mc-grand"
    ORACLE_EXISTENCE = "oracle-existence"
    BOUNDS_COMPARE = "bounds-compare"
    LEMMA_VERIFY = "lemma-verify"

    @classmethod
    def parse(cls, name: str) -> "CampaignKind":
        key = name.strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown campaign kind {name!r}")


@dataclass(frozen=True)
class Campaign:
    kind: CampaignKind
    n_values: tuple[int, ...]
    trials: int
    dist: UtilityDistribution
    master_seed: SeedSpec
    config: AlgoConfig | None = None
    concepts: tuple[Concept, ...] = ()
    shape_ks: tuple[int, ...] = ()
    m_values: tuple[int, ...] = ()
    k_values: tuple[int, ...] = ()
    workers: int = 1
    oracle_limit: int = DEFAULT_ENUMERATION_LIMIT

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.kind is not CampaignKind.LEMMA_VERIFY:
            if not self.n_values:
                raise ValueError("n_values must be nonempty")
            if list(self.n_values) != sorted(self.n_values):
                raise ValueError("n_values must be ascending")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class CampaignResult:
    campaign: Campaign
    rows: list[ResultRow]
    summaries: list[TrialSummary]


def _map_trials(fn, count: int, workers: int) -> list:
    if workers <= 1:
        return [fn(t) for t in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


# ---------------------------------------------------------------- MC_ALG ----

_ALG_CONCEPTS = tuple(Concept)
_ALG_PROPERTIES = tuple(c.value for c in _ALG_CONCEPTS) + (
    "stage1-success", "stage2-success", "stage3-success", "ir_enter_exit")


def run_mc_alg(campaign: Campaign, *, keep_summaries: bool = True) -> CampaignResult:
    """Sample games, run the three-stage algorithm, measure stability of its output."""
    if campaign.kind is not CampaignKind.MC_ALG:
        raise ValueError("campaign kind must be mc-alg")
    config = campaign.config or AlgoConfig()
    rows: list[ResultRow] = []
    summaries: list[TrialSummary] = []

    for n_idx, n in enumerate(campaign.n_values):
        base = n_idx * TRIAL_BLOCK

        def one_trial(t: int, n=n, base=base) -> TrialSummary:
            t0 = time.perf_counter()
            seed = derive_trial_seed(campaign.master_seed, base + t)
            game = sample_game(n, campaign.dist, seed)
            partition, report, _ledger = run_three_stage(game, config)
            prof = concept_profile(game, partition)
            combo = (prof[Concept.INDIVIDUALLY_RATIONAL]
                     and prof[Concept.ENTER_DENIED] and prof[Concept.EXIT_DENIED])
            outcomes = tuple((c.value, prof[c]) for c in _ALG_CONCEPTS) + (
                ("stage1-success", report.stage1_success),
                ("stage2-success", report.stage2_success),
                ("stage3-success", report.stage3_success),
                ("ir_enter_exit", combo),
            )
            sizes = tuple(sorted(report.coalition_size_histogram.items()))
            return TrialSummary(n=n, trial=t, seed_stream=seed.stream_index,
                                outcomes=outcomes, coalition_sizes=sizes,
                                wall_ms=(time.perf_counter() - t0) * 1e3)

        trial_results = _map_trials(one_trial, campaign.trials, campaign.workers)
        for prop in _ALG_PROPERTIES:
            succ = sum(1 for s in trial_results if s.outcome(prop))
            rows.append(ResultRow.from_frequency(
                n, prop, FrequencyEstimate.from_counts(succ, campaign.trials)))
        if keep_summaries:
            summaries.extend(trial_results)
    return CampaignResult(campaign, rows, summaries)


# ------------------------------------------------------- ORACLE_EXISTENCE ----

def nash_existence_by_k(games: np.ndarray) -> np.ndarray:
    """For a stacked game batch (T, n, n), decide per game and per block count k
    whether some partition into exactly k coalitions is Nash-stable.

    Exhaustive over all set partitions; returns a boolean array of shape
    (T, n + 1) indexed by k (entry 0 unused).
    """
    T, n, n2 = games.shape
    if n != n2:
        raise ValueError("games must be square")
    games2 = games.reshape(T * n, n)
    exists = np.zeros((T, n + 1), dtype=bool)
    ar = np.arange(n)
    for labels in rgs_strings(n):
        lab = np.asarray(labels, dtype=np.intp)
        k = int(max(labels)) + 1
        M = np.zeros((n, k))
        M[ar, lab] = 1.0
        S = (games2 @ M).reshape(T, n, k)
        own = S[:, ar, lab].copy()
        S[:, ar, lab] = -np.inf
        mx = S.max(axis=2)
        sizes = np.bincount(lab, minlength=k)
        nonsingleton = sizes[lab] > 1
        ok = ((mx <= own).all(axis=1)
              & ((own >= 0) | ~nonsingleton).all(axis=1))
        exists[ok, k] = True
    return exists


def nash_k_bound(n: int, k: int) -> float:
    """Upper bound on P(some k-block partition is Nash-stable), all k covered.

    The grand coalition (k=1) and the all-singleton shape (k=n) have exact
    probabilities; intermediate k uses the composite counting bound.
    """
    if k == 1:
        return 0.5 ** n
    if k == n:
        return bounds_mod.singleton_partition_ns_probability(n)
    return bounds_mod.nash_k_composite_bound(n, k)


def _sample_game_batch(n: int, dist: UtilityDistribution, master: SeedSpec,
                       base: int, start: int, count: int) -> np.ndarray:
    out = np.empty((count, n, n))
    for i in range(count):
        seed = derive_trial_seed(master, base + start + i)
        out[i] = dist.sample(seed.rng(), (n, n))
    out[:, np.arange(n), np.arange(n)] = 0.0
    return out


def run_oracle_existence(campaign: Campaign, *, keep_summaries: bool = True) -> CampaignResult:
    """Exhaustively decide stable-partition existence per sampled game."""
    if campaign.kind is not CampaignKind.ORACLE_EXISTENCE:
        raise ValueError("campaign kind must be oracle-existence")
    concepts = campaign.concepts or (Concept.NASH,)
    if max(campaign.n_values) > campaign.oracle_limit:
        raise EnumerationLimitError(
            f"n={max(campaign.n_values)} beyond oracle limit {campaign.oracle_limit}")
    rows: list[ResultRow] = []
    summaries: list[TrialSummary] = []

    for n_idx, n in enumerate(campaign.n_values):
        base = n_idx * TRIAL_BLOCK
        T = campaign.trials
        games = _sample_game_batch(n, campaign.dist, campaign.master_seed, base, 0, T)

        per_concept: dict[Concept, np.ndarray] = {}
        per_k = None
        if Concept.NASH in concepts:
            per_k = nash_existence_by_k(games)
            per_concept[Concept.NASH] = per_k[:, 1:].any(axis=1)
        others = [c for c in concepts if c is not Concept.NASH]
        if others:
            def decide(t: int) -> list[bool]:
                game = HedonicGame(games[t])
                return [exists_stable(game, c, limit=campaign.oracle_limit) is not None
                        for c in others]
            decided = _map_trials(decide, T, campaign.workers)
            for j, c in enumerate(others):
                per_concept[c] = np.array([d[j] for d in decided], dtype=bool)

        for c in concepts:
            succ = int(per_concept[c].sum())
            rows.append(ResultRow.from_frequency(
                n, f"exists:{c.value}", FrequencyEstimate.from_counts(succ, T)))
        if per_k is not None:
            for k in range(1, n + 1):
                succ = int(per_k[:, k].sum())
                rows.append(ResultRow.from_frequency(
                    n, f"exists:nash:k={k}",
                    FrequencyEstimate.from_counts(succ, T), bound=nash_k_bound(n, k)))
        if keep_summaries:
            for t in range(T):
                outcomes = tuple((f"exists:{c.value}", bool(per_concept[c][t]))
                                 for c in concepts)
                summaries.append(TrialSummary(
                    n=n, trial=t,
                    seed_stream=derive_trial_seed(campaign.master_seed, base + t).stream_index,
                    outcomes=outcomes))
    return CampaignResult(campaign, rows, summaries)


# --------------------------------------------------------------- MC_GRAND ----

def grand_coalition_flags(batch: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorized stability flags of the grand (and all-singleton) partition."""
    row_sums = batch.sum(axis=2)
    has_fan = (batch > 0).any(axis=1)  # some b with u_b(a) > 0, per agent a
    ir = (row_sums >= 0).all(axis=1)
    return {
        "grand-exit-denied": has_fan.all(axis=1),
        "grand-cns": ~((row_sums < 0) & ~has_fan).any(axis=1),
        "grand-ir": ir,
        "grand-ns": ir,  # only deviation from the grand coalition is breaking away
        "singleton-ns": (batch <= 0).all(axis=(1, 2)),
    }


_GRAND_PROPERTIES = ("grand-exit-denied", "grand-cns", "grand-ir", "grand-ns",
                     "singleton-ns")


def run_grand_coalition_study(campaign: Campaign, *,
                              keep_summaries: bool = False) -> CampaignResult:
    """Measure grand-coalition stability frequencies against the closed forms."""
    if campaign.kind is not CampaignKind.MC_GRAND:
        raise ValueError("campaign kind must be mc-grand")
    dist = campaign.dist
    rows: list[ResultRow] = []
    summaries: list[TrialSummary] = []

    for n_idx, n in enumerate(campaign.n_values):
        base = n_idx * TRIAL_BLOCK
        T = campaign.trials
        counts = {p: 0 for p in _GRAND_PROPERTIES}
        done = 0
        while done < T:
            b = min(_BATCH, T - done)
            batch = _sample_game_batch(n, dist, campaign.master_seed, base, done, b)
            flags = grand_coalition_flags(batch)
            for p in _GRAND_PROPERTIES:
                counts[p] += int(flags[p].sum())
            if keep_summaries:
                for i in range(b):
                    outcomes = tuple((p, bool(flags[p][i])) for p in _GRAND_PROPERTIES)
                    summaries.append(TrialSummary(
                        n=n, trial=done + i,
                        seed_stream=derive_trial_seed(
                            campaign.master_seed, base + done + i).stream_index,
                        outcomes=outcomes))
            done += b

        bound_for: dict[str, float | None] = {p: None for p in _GRAND_PROPERTIES}
        bound_for["grand-exit-denied"] = bounds_mod.grand_cns_exit_denied_prob(
            n, dist.positive_mass)
        if dist.mean > 0:
            bound_for["grand-ns"] = bounds_mod.grand_ns_lower_bound(n, dist.lo, dist.hi)
        for p in _GRAND_PROPERTIES:
            rows.append(ResultRow.from_frequency(
                n, p, FrequencyEstimate.from_counts(counts[p], T), bound=bound_for[p]))
    return CampaignResult(campaign, rows, summaries)


# ---------------------------------------------------------- BOUNDS_COMPARE ----

def fixed_shape_ns_successes(n: int, k: int, trials: int, dist: UtilityDistribution,
                             master: SeedSpec, base: int = 0) -> int:
    """Count trials where one fixed equal-size k-block partition is Nash-stable.

    Requires k | n with blocks of size >= 2 so the no-singleton bound applies.
    """
    if n % k != 0 or n // k < 2:
        raise ValueError("need equal blocks of size at least 2 (k | n, n/k >= 2)")
    m = n // k
    lab = np.repeat(np.arange(k), m)
    M = np.zeros((n, k))
    M[np.arange(n), lab] = 1.0
    ar = np.arange(n)
    successes = 0
    done = 0
    chunk_idx = 0
    # Chunked streams: one derived generator per fixed-size chunk.
    chunk = 65536
    while done < trials:
        b = min(chunk, trials - done)
        rng = derive_trial_seed(master, base + chunk_idx).rng()
        chunk_idx += 1
        batch = dist.sample(rng, (b, n, n))
        batch[:, ar, ar] = 0.0
        S = (batch.reshape(b * n, n) @ M).reshape(b, n, k)
        own = S[:, ar, lab].copy()
        S[:, ar, lab] = -np.inf
        mx = S.max(axis=2)
        ns = (mx <= own).all(axis=1) & (own >= 0).all(axis=1)
        successes += int(ns.sum())
        done += b
    return successes


def run_bounds_compare(campaign: Campaign) -> CampaignResult:
    """Fixed-shape Nash-stability frequencies against the no-singleton bound."""
    if campaign.kind is not CampaignKind.BOUNDS_COMPARE:
        raise ValueError("campaign kind must be bounds-compare")
    if not campaign.shape_ks:
        raise ValueError("bounds-compare needs shape_ks")
    rows: list[ResultRow] = []
    block = 0
    for n in campaign.n_values:
        for k in campaign.shape_ks:
            succ = fixed_shape_ns_successes(n, k, campaign.trials, campaign.dist,
                                            campaign.master_seed, base=block * TRIAL_BLOCK)
            block += 1
            bound = bounds_mod.nash_partition_bound(n, k, allow_singletons=False)
            rows.append(ResultRow.from_frequency(
                n, f"fixed-shape-ns:k={k}",
                FrequencyEstimate.from_counts(succ, campaign.trials), bound=bound))
    return CampaignResult(campaign, rows, [])


# ------------------------------------------------------------ LEMMA_VERIFY ----

def sample_lagrange_instance(rng: np.random.Generator, max_k: int = 6,
                             max_n: int = 30) -> tuple[list[int], list[float]]:
    """One random (sizes, weights) instance for the product-bound verifier."""
    k = int(rng.integers(1, max_k + 1))
    n_total = int(rng.integers(k, max_n + 1))
    # Random composition of n_total into k positive parts.
    if k == 1:
        s = [n_total]
    else:
        cuts = np.sort(rng.choice(np.arange(1, n_total), size=k - 1, replace=False))
        parts = np.diff(np.concatenate(([0], cuts, [n_total])))
        s = [int(x) for x in parts]
    scale = float(rng.choice([0.01, 1.0, 100.0]))
    q = (scale * rng.random(k) ** 2).tolist()
    if rng.random() < 0.05:
        q[int(rng.integers(0, k))] = 0.0
    return s, q


def run_lemma_verify(campaign: Campaign) -> CampaignResult:
    """Dominance-lemma estimates plus a randomized product-bound search."""
    if campaign.kind is not CampaignKind.LEMMA_VERIFY:
        raise ValueError("campaign kind must be lemma-verify")
    m_values = campaign.m_values or (1, 3, 10)
    k_values = campaign.k_values or (1, 2, 5)
    rows: list[ResultRow] = []
    for m in m_values:
        for k in k_values:
            report = bounds_mod.check_dominance_lemmas(
                m, k, campaign.trials, campaign.master_seed)
            for est in report.estimates:
                rows.append(ResultRow(
                    n=m, property=f"dominance:{est.name}:m={m}:k={k}",
                    successes=1 if est.violated else 0, trials=campaign.trials,
                    estimate=est.estimate,
                    wilson_lo=est.estimate - 3.0 * est.std_error,
                    wilson_hi=est.estimate + 3.0 * est.std_error,
                    bound_value=None))

    rng = derive_trial_seed(campaign.master_seed, 999 * TRIAL_BLOCK).rng()
    violations = 0
    for _ in range(campaign.trials):
        s, q = sample_lagrange_instance(rng)
        if not bounds_mod.verify_lagrange_product_bound(s, q):
            violations += 1
    rows.append(ResultRow.from_frequency(
        0, "lagrange-product-violations",
        FrequencyEstimate.from_counts(violations, campaign.trials)))
    return CampaignResult(campaign, rows, [])


_RUNNERS = {
    CampaignKind.MC_ALG: run_mc_alg,
    CampaignKind.MC_GRAND: run_grand_coalition_study,
    CampaignKind.ORACLE_EXISTENCE: run_oracle_existence,
    CampaignKind.BOUNDS_COMPARE: run_bounds_compare,
    CampaignKind.LEMMA_VERIFY: run_lemma_verify,
}


def run_campaign(campaign: Campaign, **kwargs) -> CampaignResult:
    return _RUNNERS[campaign.kind](campaign, **kwargs)


# ----------------------------------------------------------------- export ----

_CSV_HEADER = "n,property,successes,trials,estimate,wilson_lo,wilson_hi,bound_value"


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def export_results(rows: list[ResultRow], path, fmt: str = "csv") -> None:
    """Write rows as CSV or JSON; identical inputs give byte-identical files."""
    fmt = fmt.lower()
    if fmt == "csv":
        lines = [_CSV_HEADER]
        for r in rows:
            lines.append(f"{r.n},{r.property},{r.successes},{r.trials},"
                         f"{_fmt(r.estimate)},{_fmt(r.wilson_lo)},{_fmt(r.wilson_hi)},"
                         f"{_fmt(r.bound_value)}")
        data = ("\n".join(lines) + "\n").encode()
    elif fmt == "json":
        data = (json.dumps({"results": [r.to_dict() for r in rows]},
                           sort_keys=True) + "\n").encode()
    else:
        raise ValueError(f"unknown format {fmt!r}")
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def load_results(path, fmt: str = "json") -> list[ResultRow]:
    if fmt.lower() != "json":
        raise ValueError("round-trip import is JSON only")
    with open(path) as fh:
        payload = json.load(fh)
    return [ResultRow(**row) for row in payload["results"]]
