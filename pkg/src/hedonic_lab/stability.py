"""Stability concept checking for a (game, partition) pair.

Seven concepts are supported, all driven by single-agent deviations or by
per-agent denial conditions.  ``check`` is the witness-producing reference
implementation; ``concept_profile`` evaluates all seven at once with
vectorized utility sums and is the hot path for Monte Carlo campaigns.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .games import (
    Deviation,
    HedonicGame,
    NEW_SINGLETON,
    Partition,
    PartitionError,
    coalition_utility,
    favor_in,
    favor_out,
)

__all__ = [
    "Concept",
    "Verdict",
    "check",
    "concept_profile",
    "implied_concepts",
    "IMPLICATIONS",
]


class Concept(enum.Enum):
    NASH = "nash"
    INDIVIDUAL = "individual"
    CONTRACTUAL_NASH = "contractual-nash"
    CONTRACTUAL_INDIVIDUAL = "contractual-individual"
    INDIVIDUALLY_RATIONAL = "individually-rational"
    ENTER_DENIED = "enter-denied"
    EXIT_DENIED = "exit-denied"

    @classmethod
    def parse(cls, name: str) -> "Concept":
        key = name.strip().lower().replace("_", "-")
        aliases = {"ns": "nash", "is": "individual", "cns": "contractual-nash",
                   "cis": "contractual-individual", "ir": "individually-rational"}
        key = aliases.get(key, key)
        for concept in cls:
            if concept.value == key:
                return concept
        raise ValueError(f"unknown concept {name!r}")


# Deviation-based concepts, in contrast to the per-agent denial conditions.
_DEVIATION_CONCEPTS = frozenset({
    Concept.NASH,
    Concept.INDIVIDUAL,
    Concept.CONTRACTUAL_NASH,
    Concept.CONTRACTUAL_INDIVIDUAL,
})


@dataclass(frozen=True)
class Verdict:
    """Outcome of a stability check; a witness is present iff unstable.

    For deviation-based concepts the witness is the blocking ``Deviation``;
    for enter-denied / exit-denied / individual rationality it is an
    ``(agent, coalition_index)`` pair.
    """

    stable: bool
    witness: Deviation | tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.stable != (self.witness is None):
            raise ValueError("stable verdicts carry no witness, unstable ones must")


def _deviation_blocks(game: HedonicGame, partition: Partition, concept: Concept,
                      dev: Deviation) -> bool:
    """Whether ``dev`` is an admissible strictly-improving deviation under ``concept``."""
    a = dev.agent
    own = partition.coalition_of(a)
    current = coalition_utility(game, a, own)
    if dev.target is NEW_SINGLETON:
        gain = 0.0 > current
        consent_out = True  # an empty coalition has nobody to object
    else:
        target = partition.coalitions[dev.target]
        gain = coalition_utility(game, a, target) > current
        consent_out = not favor_out(game, target, a)
    if not gain:
        return False
    if concept in (Concept.INDIVIDUAL, Concept.CONTRACTUAL_INDIVIDUAL) and not consent_out:
        return False
    if concept in (Concept.CONTRACTUAL_NASH, Concept.CONTRACTUAL_INDIVIDUAL):
        if favor_in(game, own, a):
            return False
    return True


def check(game: HedonicGame, partition: Partition, concept: Concept) -> Verdict:
    """Decide ``concept`` for the pair, returning the first witness when it fails.

    Witness order is deterministic: lowest agent id first, then lowest target
    coalition index, with the fresh-singleton move last.
    """
    if partition.n != game.n:
        raise PartitionError("partition does not match the game's agent count")
    if concept in _DEVIATION_CONCEPTS:
        for a in range(game.n):
            own_idx = partition.index_of(a)
            for j in range(len(partition)):
                if j == own_idx:
                    continue
                dev = Deviation(a, j)
                if _deviation_blocks(game, partition, concept, dev):
                    return Verdict(False, dev)
            if len(partition.coalition_of(a)) > 1:
                dev = Deviation(a, NEW_SINGLETON)
                if _deviation_blocks(game, partition, concept, dev):
                    return Verdict(False, dev)
        return Verdict(True)
    if concept is Concept.INDIVIDUALLY_RATIONAL:
        for a in range(game.n):
            if coalition_utility(game, a, partition.coalition_of(a)) < 0:
                return Verdict(False, (a, partition.index_of(a)))
        return Verdict(True)
    if concept is Concept.ENTER_DENIED:
        for a in range(game.n):
            own_idx = partition.index_of(a)
            for j, block in enumerate(partition.coalitions):
                if j != own_idx and not favor_out(game, block, a):
                    return Verdict(False, (a, j))
        return Verdict(True)
    if concept is Concept.EXIT_DENIED:
        for a in range(game.n):
            if not favor_in(game, partition.coalition_of(a), a):
                return Verdict(False, (a, partition.index_of(a)))
        return Verdict(True)
    raise ValueError(f"unhandled concept {concept}")


def concept_profile(game: HedonicGame, partition: Partition) -> dict[Concept, bool]:
    """Evaluate all seven concepts at once (no witnesses, vectorized sums)."""
    if partition.n != game.n:
        raise PartitionError("partition does not match the game's agent count")
    U = game.utilities
    n = game.n
    labels = partition.labels()
    k = len(partition)
    order = np.argsort(labels, kind="stable")
    block_sizes = np.bincount(labels, minlength=k)
    starts = np.zeros(k, dtype=np.intp)
    np.cumsum(block_sizes[:-1], out=starts[1:])

    ar = np.arange(n)
    # S[a, j] = sum of a's utilities over block j (own diagonal contributes 0).
    S = np.add.reduceat(U[:, order], starts, axis=1)
    own = S[ar, labels]
    S_other = S.copy()
    S_other[ar, labels] = -np.inf
    mx_other = S_other.max(axis=1) if k > 1 else np.full(n, -np.inf)
    nonsingleton = block_sizes[labels] > 1

    # fin[j, a]: some member of block j strictly favors a inside; fout: outside.
    fin = np.add.reduceat((U > 0)[order, :], starts, axis=0) > 0
    fout = np.add.reduceat((U < 0)[order, :], starts, axis=0) > 0
    own_fin = fin[labels, ar]

    nash_dev = (mx_other > own) | (nonsingleton & (own < 0))
    join_ok = S_other > own[:, None]  # strict gain per target block
    is_dev = (join_ok & ~fout.T).any(axis=1) | (nonsingleton & (own < 0))
    cns_dev = ~own_fin & nash_dev
    cis_dev = ~own_fin & is_dev

    enter_open = ~fout.T.copy()
    enter_open[ar, labels] = False

    return {
        Concept.NASH: not nash_dev.any(),
        Concept.INDIVIDUAL: not is_dev.any(),
        Concept.CONTRACTUAL_NASH: not cns_dev.any(),
        Concept.CONTRACTUAL_INDIVIDUAL: not cis_dev.any(),
        Concept.INDIVIDUALLY_RATIONAL: bool((own >= 0).all()),
        Concept.ENTER_DENIED: not enter_open.any(),
        Concept.EXIT_DENIED: bool(own_fin.all()),
    }


# (antecedents, consequent) pairs; an implication is violated when every
# antecedent holds and the consequent does not.
IMPLICATIONS: tuple[tuple[tuple[Concept, ...], Concept], ...] = (
    ((Concept.NASH,), Concept.INDIVIDUAL),
    ((Concept.NASH,), Concept.CONTRACTUAL_NASH),
    ((Concept.INDIVIDUAL,), Concept.INDIVIDUALLY_RATIONAL),
    ((Concept.INDIVIDUAL,), Concept.CONTRACTUAL_INDIVIDUAL),
    ((Concept.CONTRACTUAL_NASH,), Concept.CONTRACTUAL_INDIVIDUAL),
    ((Concept.EXIT_DENIED,), Concept.CONTRACTUAL_NASH),
    ((Concept.ENTER_DENIED, Concept.INDIVIDUALLY_RATIONAL), Concept.INDIVIDUAL),
)


def implied_concepts(results: dict[Concept, bool]) -> list[str]:
    """Violated implications of the concept lattice; empty means consistent."""
    missing = [c for c in Concept if c not in results]
    if missing:
        raise ValueError(f"results missing concepts: {[c.name for c in missing]}")
    violations = []
    for antecedents, consequent in IMPLICATIONS:
        if all(results[c] for c in antecedents) and not results[consequent]:
            lhs = "&".join(c.name for c in antecedents)
            violations.append(f"{lhs}=>{consequent.name}")
    return violations
