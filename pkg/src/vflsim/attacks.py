"""Label-inference attack against blind training, and sweeps over its knobs.

Threat model: a curious node receives one synthetic label vector per
training example and, out of band, learns the true labels of a small budget
of examples. Identical synthetic vectors must come from the same codebook
row and therefore the same class, so the attacker clusters examples by
exact vector equality and propagates each known label across its cluster.

The defense surface: raising the per-class row count Q leaves more clusters
than the attacker can cover, and per-example-distinct labels (jittered) make
every cluster a singleton, so nothing propagates beyond the known examples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from . import synthlabels
from .errors import ContractError
from .seeding import rng_for


@dataclass
class AttackOutcome:
    """Result of one attack run.

    recovered_count counts examples outside the known set whose inferred
    label matches the truth; recovery_fraction is the attacker's total
    coverage (known + recovered) / n.
    """

    n: int
    cluster_count: int
    known_count: int
    recovered_count: int
    recovery_fraction: float


def cluster_ids(synth: np.ndarray) -> np.ndarray:
    """Cluster index per example under exact vector equality."""
    synth = np.asarray(synth, dtype=np.float64)
    if synth.ndim != 2:
        raise ContractError(f"expected (N, q) synthetic labels, got {synth.shape}")
    ids: dict[bytes, int] = {}
    out = np.empty(synth.shape[0], dtype=np.int64)
    for i in range(synth.shape[0]):
        key = synth[i].tobytes()
        out[i] = ids.setdefault(key, len(ids))
    return out


def infer_labels(synth: np.ndarray, known: dict[int, int]) -> dict[int, int]:
    """Attacker-side propagation: labels for every example it can resolve.

    Consumes only node-visible state (the synthetic vectors) plus the known
    example labels. Returns example index -> inferred label, including the
    known examples themselves.
    """
    clusters = cluster_ids(synth)
    cluster_label: dict[int, int] = {}
    for idx, label in known.items():
        cluster_label.setdefault(int(clusters[idx]), int(label))
    inferred: dict[int, int] = {}
    for i in range(synth.shape[0]):
        label = cluster_label.get(int(clusters[i]))
        if label is not None:
            inferred[i] = label
    return inferred


def run_attack(
    synth: np.ndarray, known: dict[int, int], true_labels: np.ndarray
) -> AttackOutcome:
    """Score an attack: propagation happens blind, grading uses the truth."""
    true_labels = np.asarray(true_labels, dtype=np.int64)
    n = synth.shape[0]
    if true_labels.shape != (n,):
        raise ContractError("true_labels must align with the synthetic labels")
    inferred = infer_labels(synth, known)
    recovered = sum(
        1
        for idx, label in inferred.items()
        if idx not in known and label == true_labels[idx]
    )
    return AttackOutcome(
        n=n,
        cluster_count=int(cluster_ids(synth).max()) + 1,
        known_count=len(known),
        recovered_count=recovered,
        recovery_fraction=(len(known) + recovered) / n,
    )


def choose_known(
    synth: np.ndarray,
    true_labels: np.ndarray,
    budget: int,
    rng: np.random.Generator,
) -> dict[int, int]:
    """Spend the labeling budget one example per cluster, clusters drawn at random.

    This is the coverage-maximizing policy for an attacker who can pick which
    examples to have labeled: a second example from a known cluster is wasted.
    """
    if budget < 1:
        raise ContractError("attack budget must be >= 1")
    clusters = cluster_ids(synth)
    members: dict[int, list[int]] = {}
    for i, c in enumerate(clusters):
        members.setdefault(int(c), []).append(i)
    cluster_order = rng.permutation(len(members))
    known: dict[int, int] = {}
    for c in cluster_order[: min(budget, len(members))]:
        rows = members[int(c)]
        pick = int(rows[rng.integers(0, len(rows))])
        known[pick] = int(true_labels[pick])
    return known


@dataclass
class SweepPoint:
    """Aggregated attack results for one (per_class, distinct) setting."""

    per_class: int
    distinct: bool
    mean_recovery: float
    std_recovery: float
    se_recovery: float
    mean_beyond_known: float
    outcomes: list[AttackOutcome] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "per_class": self.per_class,
            "distinct": self.distinct,
            "mean_recovery": self.mean_recovery,
            "std_recovery": self.std_recovery,
            "se_recovery": self.se_recovery,
            "mean_beyond_known": self.mean_beyond_known,
            "trials": len(self.outcomes),
        }


def _sweep_one(
    labels: np.ndarray,
    class_count: int,
    width: int,
    per_class: int,
    distinct: bool,
    budget: int,
    trials: int,
    base_seed: int,
    policy: str,
    jitter_radius: float | None,
) -> SweepPoint:
    recoveries = []
    beyond = []
    outcomes = []
    mode = "distinct" if distinct else "exact"
    for trial in range(trials):
        codebook = synthlabels.build_codebook(
            class_count=class_count,
            width=width,
            per_class=per_class,
            policy=policy,
            rng=rng_for(base_seed, "attack-codebook", per_class, mode, trial),
        )
        assign_rng = rng_for(base_seed, "attack-assign", per_class, mode, trial)
        if distinct:
            z = synthlabels.assign_distinct(
                codebook, labels, assign_rng, jitter_radius=jitter_radius
            )
        else:
            z = synthlabels.assign(codebook, labels, assign_rng)
        known = choose_known(
            z,
            labels,
            budget,
            rng_for(base_seed, "attack-known", per_class, mode, trial),
        )
        outcome = run_attack(z, known, labels)
        outcomes.append(outcome)
        recoveries.append(outcome.recovery_fraction)
        beyond.append(outcome.recovered_count)
    arr = np.asarray(recoveries, dtype=np.float64)
    return SweepPoint(
        per_class=per_class,
        distinct=distinct,
        mean_recovery=float(arr.mean()),
        std_recovery=float(arr.std()),
        se_recovery=float(arr.std() / sqrt(trials)),
        mean_beyond_known=float(np.mean(beyond)),
        outcomes=outcomes,
    )


def attack_sweep(
    labels: np.ndarray,
    class_count: int,
    width: int,
    per_class_values: tuple[int, ...] = (1, 2, 4, 8),
    budget: int | None = None,
    trials: int = 10,
    base_seed: int = 0,
    policy: str = "gaussian",
    include_distinct: bool = True,
    jitter_radius: float | None = None,
) -> list[SweepPoint]:
    """Attack strength across privacy multipliers, plus the distinct-label mode.

    The budget defaults to one known example per class. Each (setting, trial)
    pair draws its own codebook, assignment, and known set from derived
    seeds, so points are independent and reproducible.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if budget is None:
        budget = class_count
    points = [
        _sweep_one(
            labels,
            class_count,
            width,
            per_class,
            False,
            budget,
            trials,
            base_seed,
            policy,
            jitter_radius,
        )
        for per_class in per_class_values
    ]
    if include_distinct:
        points.append(
            _sweep_one(
                labels,
                class_count,
                width,
                per_class_values[0],
                True,
                budget,
                trials,
                base_seed,
                policy,
                jitter_radius,
            )
        )
    return points
