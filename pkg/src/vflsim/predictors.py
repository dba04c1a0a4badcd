"""Uniform predictor layer over the residual-net and boosted-tree backends.

A PredictorSpec names a model family and its hyperparameters; fit_regressor
and fit_classifier return a TrainedPredictor that predicts with a single
`predict` call regardless of backend. Federation code only needs to know
whether a predictor is differentiable (supports input gradients for the
relay protocol).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import boosting, nets
from .errors import ContractError, DimensionError, NonDifferentiableModelError
from .seeding import rng_for


@dataclass(frozen=True)
class PredictorSpec:
    """Model family plus hyperparameters.

    kind: "mlp" (residual net) or "trees" (boosted regression trees).
    output_dim is fixed by the caller (regression width or class count).
    """

    kind: str = "mlp"
    output_dim: int = 1
    # mlp settings
    hidden_dim: int = 32
    depth: int = 10
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    activation: str = "tanh"
    optimizer: str = "adam"
    # trees settings
    n_rounds: int = 100
    max_depth: int = 3
    shrinkage: float = 0.1
    min_leaf: int = 5

    @property
    def differentiable(self) -> bool:
        return self.kind == "mlp"

    def __post_init__(self):
        if self.kind not in ("mlp", "trees"):
            raise ContractError(f"unknown predictor kind {self.kind!r}")
        if self.output_dim < 1:
            raise ContractError("output_dim must be >= 1")


@dataclass
class TrainedPredictor:
    """A fitted model: exactly one of `net` or `forest` is set.

    For classifiers, `class_count` is the number of classes and `classes`
    maps output columns back to original label values. `loss_trace` records
    the training objective per epoch (mlp) or per round (trees).
    """

    spec: PredictorSpec
    task: str  # "regression" or "classification"
    net: nets.ResidualNet | None = None
    forest: boosting.BoostedForest | None = None
    class_count: int = 0
    classes: np.ndarray | None = None
    constant_output: np.ndarray | None = None
    loss_trace: list[float] = field(default_factory=list)

    @property
    def differentiable(self) -> bool:
        return self.net is not None


def _minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _fit_mlp(
    spec: PredictorSpec,
    x: np.ndarray,
    target: np.ndarray,
    loss_kind: str,
    rng: np.random.Generator,
) -> tuple[nets.ResidualNet, list[float]]:
    net = nets.init_net(
        input_dim=x.shape[1],
        output_dim=spec.output_dim,
        hidden_dim=spec.hidden_dim,
        depth=spec.depth,
        activation=spec.activation,
        rng=rng,
    )
    state = nets.OptimizerState(
        kind=spec.optimizer,
        learning_rate=spec.learning_rate,
        weight_decay=spec.weight_decay,
    )
    loss_fn = nets.loss_mse if loss_kind == "mse" else nets.loss_softmax_ce
    trace: list[float] = []
    for _ in range(spec.epochs):
        total = 0.0
        count = 0
        for idx in _minibatches(x.shape[0], spec.batch_size, rng):
            xb = x[idx]
            tb = target[idx]
            y, tape = nets.forward(net, xb)
            value, d_y = loss_fn(y, tb)
            grads, _ = nets.backward(net, tape, d_y)
            nets.optimizer_step(net.parameters(), grads, state)
            net.version += 1
            total += value * idx.size
            count += idx.size
        trace.append(total / count)
    return net, trace


def fit_regressor(
    spec: PredictorSpec, x: np.ndarray, target: np.ndarray, seed_parts: tuple = (0,)
) -> TrainedPredictor:
    """Fit `spec` to real-valued targets of shape (N, output_dim)."""
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 1:
        target = target[:, None]
    if x.ndim != 2 or target.shape != (x.shape[0], spec.output_dim):
        raise DimensionError(
            f"regressor expects x (N, d) and target (N, {spec.output_dim}); "
            f"got {x.shape} and {target.shape}"
        )
    if spec.kind == "trees":
        forest = boosting.fit_forest(
            x,
            target,
            n_rounds=spec.n_rounds,
            max_depth=spec.max_depth,
            shrinkage=spec.shrinkage,
            min_leaf=spec.min_leaf,
        )
        return TrainedPredictor(
            spec=spec,
            task="regression",
            forest=forest,
            loss_trace=list(forest.train_mse_trace),
        )
    rng = rng_for(*seed_parts)
    net, trace = _fit_mlp(spec, x, target, "mse", rng)
    return TrainedPredictor(spec=spec, task="regression", net=net, loss_trace=trace)


def fit_classifier(
    spec: PredictorSpec, x: np.ndarray, labels: np.ndarray, seed_parts: tuple = (0,)
) -> TrainedPredictor:
    """Fit `spec` to integer labels; spec.output_dim must equal the class count.

    An mlp trains with softmax cross-entropy on logits. Boosted trees reduce
    classification to regression: a binary problem fits one chain on the
    {0, 1} labels, a multiclass one fits a chain per class on one-hot columns.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise DimensionError(
            f"classifier expects x (N, d) and labels (N,); got {x.shape} "
            f"and {labels.shape}"
        )
    classes = np.unique(labels)
    if classes.size == 1:
        warnings.warn("single-class training set: predictor is constant")
        out = np.zeros(spec.output_dim, dtype=np.float64)
        col = int(classes[0]) if spec.output_dim > 1 else 0
        out[min(col, spec.output_dim - 1)] = 1.0
        return TrainedPredictor(
            spec=spec,
            task="classification",
            class_count=spec.output_dim,
            classes=classes,
            constant_output=out,
        )
    if spec.output_dim < int(classes.max()) + 1:
        raise DimensionError(
            f"output_dim {spec.output_dim} too small for labels up to {classes.max()}"
        )
    m = spec.output_dim
    if spec.kind == "trees":
        if m == 2:
            target = (labels == 1).astype(np.float64)[:, None]
        else:
            target = np.zeros((labels.size, m), dtype=np.float64)
            target[np.arange(labels.size), labels] = 1.0
        tree_spec = replace(spec, output_dim=target.shape[1])
        forest = boosting.fit_forest(
            x,
            target,
            n_rounds=spec.n_rounds,
            max_depth=spec.max_depth,
            shrinkage=spec.shrinkage,
            min_leaf=spec.min_leaf,
        )
        return TrainedPredictor(
            spec=spec,
            task="classification",
            forest=forest,
            class_count=m,
            classes=classes,
            loss_trace=list(forest.train_mse_trace),
        )
    rng = rng_for(*seed_parts)
    net, trace = _fit_mlp(spec, x, labels, "softmax", rng)
    return TrainedPredictor(
        spec=spec,
        task="classification",
        net=net,
        class_count=m,
        classes=classes,
        loss_trace=trace,
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def predict(model: TrainedPredictor, x: np.ndarray) -> np.ndarray:
    """Model output of shape (B, output_dim).

    Regression returns raw outputs. A classifier mlp returns softmax
    probabilities; classifier trees return clipped-and-renormalized scores
    on the same (B, class_count) layout (binary chains expand to two
    columns [1 - s, s]).
    """
    x = np.asarray(x, dtype=np.float64)
    if model.constant_output is not None:
        return np.tile(model.constant_output, (x.shape[0], 1))
    if model.net is not None:
        y, _ = nets.forward(model.net, x)
        if model.task == "classification":
            return _softmax(y)
        return y
    raw = boosting.predict_forest(model.forest, x)
    if model.task == "regression":
        return raw
    if model.class_count == 2 and raw.shape[1] == 1:
        s = np.clip(raw[:, 0], 0.0, 1.0)
        return np.column_stack([1.0 - s, s])
    scores = np.clip(raw, 0.0, None)
    totals = scores.sum(axis=1, keepdims=True)
    flat = totals[:, 0] <= 0.0
    scores[flat] = 1.0 / scores.shape[1]
    totals[flat] = 1.0
    return scores / totals


def predict_classes(model: TrainedPredictor, x: np.ndarray) -> np.ndarray:
    """Argmax class indices for a classification predictor."""
    if model.task != "classification":
        raise ContractError("predict_classes requires a classification predictor")
    return np.argmax(predict(model, x), axis=1)


def input_gradient(
    model: TrainedPredictor, x: np.ndarray, d_y: np.ndarray
) -> np.ndarray:
    """Gradient of an upstream objective wrt the inputs of a differentiable model."""
    if model.net is None:
        raise NonDifferentiableModelError(
            "input gradients require an mlp predictor; boosted trees do not "
            "support the gradient-relay protocol"
        )
    _, tape = nets.forward(model.net, x)
    _, d_x = nets.backward(model.net, tape, d_y)
    return d_x
