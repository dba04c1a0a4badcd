"""Synthetic-label codebooks: per-node label encodings the server can invert.

For a node with synthetic-label width q, a codebook holds Q vectors in R^q
per class ("privacy multiplier" Q), all rows separated pairwise by at least
`min_row_gap` in euclidean distance so that nearest-row decoding is a
well-defined function. Assignment maps each example's true class to one of
its Q rows; the distinct variant additionally jitters each example inside an
open ball of radius strictly below half the row gap, which keeps decoding
exact while making every issued label vector unique.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, GenerationError, UnknownLabelError

MIN_ROW_GAP = 1.0
_BUILD_ATTEMPTS = 200


@dataclass
class LabelCodebook:
    """Decoding table for one node's synthetic labels.

    rows has shape (class_count, per_class, width): per_class = Q candidate
    vectors for each of the class_count true classes.
    """

    node_id: int
    class_count: int
    width: int
    per_class: int
    rows: np.ndarray
    policy: str
    min_row_gap: float = MIN_ROW_GAP

    def flat_rows(self) -> np.ndarray:
        return self.rows.reshape(self.class_count * self.per_class, self.width)

    def row_classes(self) -> np.ndarray:
        """Class index of each flat row."""
        return np.repeat(np.arange(self.class_count), self.per_class)


def _min_pairwise_gap(flat: np.ndarray) -> float:
    diffs = flat[:, None, :] - flat[None, :, :]
    d = np.sqrt((diffs * diffs).sum(axis=2))
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def build_codebook(
    class_count: int,
    width: int,
    per_class: int,
    policy: str,
    rng: np.random.Generator,
    node_id: int = 0,
    min_row_gap: float = MIN_ROW_GAP,
) -> LabelCodebook:
    """Draw codebook rows until every pair is at least `min_row_gap` apart.

    Policies:
      gaussian: rows are independent N(0, 5^2 I) draws.
      affine:   row j for class m is a_j * m + b_j replicated across the
                width; the same j-th coefficients apply to every class,
                i.e. each j is one affine relabeling of the class index.
                The slope floor scales with 1/sqrt(width) so adjacent
                classes always clear the row gap.

    Rejected draws widen their spread every 20 attempts, so separation is
    reached even in low dimensions.
    """
    if class_count < 1 or width < 1 or per_class < 1:
        raise ContractError("class_count, width, and per_class must be >= 1")
    if policy not in ("gaussian", "affine"):
        raise ContractError(f"unknown codebook policy {policy!r}")
    for attempt in range(_BUILD_ATTEMPTS):
        stretch = 1.0 + 0.5 * (attempt // 20)
        if policy == "gaussian":
            rows = 5.0 * stretch * rng.normal(size=(class_count, per_class, width))
        else:
            a_low = max(0.5, 1.05 * min_row_gap / np.sqrt(width))
            a = rng.uniform(a_low, a_low + 2.0, size=per_class)
            b = rng.uniform(-3.0 * stretch, 3.0 * stretch, size=per_class)
            values = a[None, :] * np.arange(class_count)[:, None] + b[None, :]
            rows = np.repeat(values[:, :, None], width, axis=2)
        flat = rows.reshape(class_count * per_class, width)
        if flat.shape[0] == 1 or _min_pairwise_gap(flat) >= min_row_gap:
            return LabelCodebook(
                node_id=node_id,
                class_count=class_count,
                width=width,
                per_class=per_class,
                rows=rows,
                policy=policy,
                min_row_gap=min_row_gap,
            )
    raise GenerationError(
        f"could not draw a {policy} codebook with row gap >= {min_row_gap} "
        f"({class_count} classes x {per_class} rows in R^{width})"
    )


def assign(
    codebook: LabelCodebook, labels: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Synthetic label per example: a uniformly chosen codebook row of its class."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= codebook.class_count):
        raise ContractError("label outside the codebook's class range")
    choice = rng.integers(0, codebook.per_class, size=labels.size)
    return codebook.rows[labels, choice].copy()


def assign_distinct(
    codebook: LabelCodebook,
    labels: np.ndarray,
    rng: np.random.Generator,
    jitter_radius: float | None = None,
) -> np.ndarray:
    """Row choice plus a uniform open-ball jitter, with exact-duplicate resampling.

    The jitter radius must stay strictly below half the codebook row gap so
    every jittered vector still decodes to its source row. Duplicates (exact
    float equality) are redrawn, so the issued vectors are pairwise distinct.
    """
    limit = codebook.min_row_gap / 2.0
    if jitter_radius is None:
        jitter_radius = 0.9 * limit
    if not (0.0 < jitter_radius < limit):
        raise ContractError(
            f"jitter_radius must lie in (0, {limit}) to keep decoding exact"
        )
    base = assign(codebook, labels, rng)
    n, q = base.shape

    def ball(count: int) -> np.ndarray:
        direction = rng.normal(size=(count, q))
        norms = np.linalg.norm(direction, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        radius = jitter_radius * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / q)
        return direction / norms * radius

    out = base + ball(n)
    for _ in range(100):
        _, first = np.unique(
            out.view([("", out.dtype)] * q).ravel(), return_index=True
        )
        dup = np.setdiff1d(np.arange(n), first, assume_unique=False)
        if dup.size == 0:
            return out
        out[dup] = base[dup] + ball(dup.size)
    raise GenerationError("could not make synthetic labels pairwise distinct")


def decode(codebook: LabelCodebook, vector: np.ndarray) -> int:
    """True class of one synthetic label vector."""
    return int(decode_batch(codebook, np.asarray(vector, dtype=np.float64)[None, :])[0])


def decode_batch(codebook: LabelCodebook, vectors: np.ndarray) -> np.ndarray:
    """True classes for a batch of synthetic label vectors.

    Exact matches against codebook rows resolve by lookup; everything else
    decodes to the nearest row, provided it lies strictly within half the
    row gap (beyond that the vector cannot have come from this codebook).
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != codebook.width:
        raise ContractError(
            f"expected vectors of shape (B, {codebook.width}), got {vectors.shape}"
        )
    flat = codebook.flat_rows()
    classes = codebook.row_classes()
    exact = {row.tobytes(): int(classes[i]) for i, row in enumerate(flat)}
    out = np.empty(vectors.shape[0], dtype=np.int64)
    pending: list[int] = []
    for i in range(vectors.shape[0]):
        hit = exact.get(vectors[i].tobytes())
        if hit is None:
            pending.append(i)
        else:
            out[i] = hit
    if pending:
        rest = vectors[pending]
        diffs = rest[:, None, :] - flat[None, :, :]
        d2 = (diffs * diffs).sum(axis=2)
        nearest = np.argmin(d2, axis=1)
        dist = np.sqrt(d2[np.arange(len(pending)), nearest])
        bad = dist >= codebook.min_row_gap / 2.0
        if bad.any():
            worst = float(dist[bad].max())
            raise UnknownLabelError(
                f"synthetic label {worst:.3g} away from every codebook row "
                f"(limit {codebook.min_row_gap / 2.0:.3g})"
            )
        out[pending] = classes[nearest]
    return out
