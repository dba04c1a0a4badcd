"""Gradient-boosted regression trees, written directly against numpy.

Squared-error boosting: each round fits a depth-limited regression tree to
the current residuals and the ensemble adds `shrinkage` times its
prediction. Split search is exact over a per-feature candidate grid (all
midpoints when a feature has few distinct values, histogram quantile edges
otherwise), and the split gain is the variance-reduction form

    S_L^2 / n_L + S_R^2 / n_R - S^2 / n

with S the residual sum on a side. Ties are broken toward the lowest
feature index, then the lowest threshold, so fits are reproducible across
runs and platforms. Multi-output targets train one independent chain of
trees per output column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError

MAX_BINS = 256


@dataclass
class TreeNode:
    """One node; leaves hold `value`, internal nodes a (feature, threshold) test."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class BoostedChain:
    """Boosted trees for a single scalar output."""

    base_value: float
    shrinkage: float
    trees: list[TreeNode] = field(default_factory=list)


@dataclass
class BoostedForest:
    """One chain per output column, sharing hyperparameters and binning."""

    n_rounds: int
    max_depth: int
    shrinkage: float
    min_leaf: int
    input_dim: int
    chains: list[BoostedChain] = field(default_factory=list)
    train_mse_trace: list[float] = field(default_factory=list)

    @property
    def output_dim(self) -> int:
        return len(self.chains)


def _candidate_thresholds(column: np.ndarray) -> np.ndarray:
    """Split candidates for one feature: midpoints between adjacent values.

    When the column has more than MAX_BINS distinct values, candidates are
    quantile edges instead, keeping split search linear in sample count.
    """
    unique = np.unique(column)
    if unique.size <= 1:
        return np.empty(0, dtype=np.float64)
    if unique.size <= MAX_BINS:
        return (unique[:-1] + unique[1:]) / 2.0
    qs = np.linspace(0.0, 1.0, MAX_BINS + 1)[1:-1]
    edges = np.unique(np.quantile(column, qs))
    # Quantile edges can land on data values; nudging is unnecessary because
    # the split test is `x <= threshold` and edges are interior by construction.
    return edges


def _best_split(
    x: np.ndarray,
    residual: np.ndarray,
    rows: np.ndarray,
    candidates: list[np.ndarray],
    min_leaf: int,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, gain) over the candidate grid, or None.

    Gain is computed from left/right residual sums; the argmax is taken
    row-major over the (feature, threshold) table so ties resolve to the
    lowest feature index, then the lowest threshold.
    """
    n = rows.size
    total = float(residual[rows].sum())
    parent_score = total * total / n
    best: tuple[int, float, float] | None = None
    best_gain = 0.0
    for j, cand in enumerate(candidates):
        if cand.size == 0:
            continue
        col = x[rows, j]
        order = np.argsort(col, kind="stable")
        col_sorted = col[order]
        res_sorted = residual[rows][order]
        prefix = np.cumsum(res_sorted)
        # Number of rows with value <= threshold, per candidate threshold.
        counts = np.searchsorted(col_sorted, cand, side="right")
        valid = (counts >= min_leaf) & (n - counts >= min_leaf)
        if not valid.any():
            continue
        left_sum = prefix[counts[valid] - 1]
        n_left = counts[valid].astype(np.float64)
        n_right = n - n_left
        gain = (
            left_sum * left_sum / n_left
            + (total - left_sum) * (total - left_sum) / n_right
            - parent_score
        )
        k = int(np.argmax(gain))
        if gain[k] > best_gain + 1e-12:
            best_gain = float(gain[k])
            best = (j, float(cand[valid][k]), best_gain)
    return best


def _grow_tree(
    x: np.ndarray,
    residual: np.ndarray,
    rows: np.ndarray,
    candidates: list[np.ndarray],
    max_depth: int,
    min_leaf: int,
    depth: int = 0,
) -> TreeNode:
    mean = float(residual[rows].mean())
    if depth >= max_depth or rows.size < 2 * min_leaf:
        return TreeNode(value=mean)
    split = _best_split(x, residual, rows, candidates, min_leaf)
    if split is None:
        return TreeNode(value=mean)
    feature, threshold, _ = split
    mask = x[rows, feature] <= threshold
    left_rows = rows[mask]
    right_rows = rows[~mask]
    return TreeNode(
        feature=feature,
        threshold=threshold,
        left=_grow_tree(x, residual, left_rows, candidates, max_depth, min_leaf, depth + 1),
        right=_grow_tree(x, residual, right_rows, candidates, max_depth, min_leaf, depth + 1),
        value=mean,
    )


def _tree_predict(node: TreeNode, x: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[0], dtype=np.float64)
    stack = [(node, np.arange(x.shape[0]))]
    while stack:
        cur, rows = stack.pop()
        if rows.size == 0:
            continue
        if cur.is_leaf:
            out[rows] = cur.value
            continue
        mask = x[rows, cur.feature] <= cur.threshold
        stack.append((cur.left, rows[mask]))
        stack.append((cur.right, rows[~mask]))
    return out


def fit_forest(
    x: np.ndarray,
    y: np.ndarray,
    n_rounds: int = 100,
    max_depth: int = 3,
    shrinkage: float = 0.1,
    min_leaf: int = 5,
) -> BoostedForest:
    """Fit one boosted chain per column of `y` (2-D) on features `x`.

    With n_rounds == 0 the forest predicts the column means. The returned
    `train_mse_trace` holds overall train MSE after each round; squared-error
    boosting with shrinkage in (0, 1] never increases it.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionError(f"bad shapes for boosting: x {x.shape}, y {y.shape}")
    if x.shape[0] == 0:
        raise DimensionError("cannot fit a forest on an empty sample")
    if max_depth < 1 or max_depth > 3:
        raise ContractError("max_depth must be in 1..3")
    if not (0.0 < shrinkage <= 1.0):
        raise ContractError("shrinkage must be in (0, 1]")
    if min_leaf < 1 or n_rounds < 0:
        raise ContractError("min_leaf must be >= 1 and n_rounds >= 0")

    candidates = [_candidate_thresholds(x[:, j]) for j in range(x.shape[1])]
    rows = np.arange(x.shape[0])
    forest = BoostedForest(
        n_rounds=n_rounds,
        max_depth=max_depth,
        shrinkage=shrinkage,
        min_leaf=min_leaf,
        input_dim=x.shape[1],
    )
    preds = np.empty_like(y)
    for c in range(y.shape[1]):
        chain = BoostedChain(base_value=float(y[:, c].mean()), shrinkage=shrinkage)
        forest.chains.append(chain)
        preds[:, c] = chain.base_value
    forest.train_mse_trace.append(float(np.mean((preds - y) ** 2)))
    for _ in range(n_rounds):
        for c, chain in enumerate(forest.chains):
            residual = y[:, c] - preds[:, c]
            tree = _grow_tree(x, residual, rows, candidates, max_depth, min_leaf)
            chain.trees.append(tree)
            preds[:, c] += shrinkage * _tree_predict(tree, x)
        forest.train_mse_trace.append(float(np.mean((preds - y) ** 2)))
    return forest


def predict_forest(forest: BoostedForest, x: np.ndarray) -> np.ndarray:
    """Ensemble prediction, shape (B, output_dim)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != forest.input_dim:
        raise DimensionError(
            f"expected input of shape (B, {forest.input_dim}), got {x.shape}"
        )
    out = np.empty((x.shape[0], forest.output_dim), dtype=np.float64)
    for c, chain in enumerate(forest.chains):
        col = np.full(x.shape[0], chain.base_value, dtype=np.float64)
        for tree in chain.trees:
            col += chain.shrinkage * _tree_predict(tree, x)
        out[:, c] = col
    return out
