"""Federated training protocols over vertically partitioned features.

Three protocols share one topology model (P feature-holding nodes plus a
coordinating server that owns the labels; some nodes may be colocated with
the server):

  vfl    joint training. Per batch, every node sends its current embedding
         of the batch to the server, the server backpropagates its loss and
         returns each node the gradient with respect to that node's output.
         2 * ceil(N / B) * P * E messages over E epochs.

  sbvfl  blind training. The server issues each node one synthetic-label
         vector per training example (drawn from a per-node codebook over
         the true classes), each node locally fits a regressor to its
         synthetic labels, sends its outputs once, and the server fits a
         classifier on the concatenated outputs against the true labels.
         Exactly 2 * P messages.

  lvfl   untrained node maps. Nodes apply randomly initialized embeddings,
         send outputs once, and the server fits a classifier. Exactly
         P messages.

Every transfer is logged in a CommLedger as a Message with an exact element
count; ledgers report both a logical count (every node-server exchange) and
a physical count that skips messages staying inside a machine that hosts
both the server and a colocated node.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nets, predictors, synthlabels
from .datasets import Standardizer, VerticalSplit, fit_standardizer
from .errors import ContractError, NonDifferentiableModelError
from .seeding import rng_for

PHASES = ("synthetic-labels", "node-outputs", "gradients", "inference")
BYTES_PER_ELEMENT = 8  # float64 payloads


def _seed_parts(base_seed) -> tuple:
    """Normalize a seed argument: a bare int or a tuple of context parts."""
    return base_seed if isinstance(base_seed, tuple) else (base_seed,)

# Payload kinds each phase is allowed to carry; raw features and true labels
# are never legal payloads, which is the schema-level privacy guarantee.
ALLOWED_PAYLOADS = {
    "synthetic-labels": ("synthetic-labels",),
    "node-outputs": ("node-outputs",),
    "gradients": ("output-gradients",),
    "inference": ("node-outputs",),
}


@dataclass(frozen=True)
class Message:
    """One logged node-server transfer."""

    phase: str
    sender: str
    receiver: str
    payload_kind: str
    elements: int
    colocated: bool

    @property
    def nbytes(self) -> int:
        return self.elements * BYTES_PER_ELEMENT


@dataclass
class Topology:
    """Node widths and which nodes share a machine with the server.

    input_dims[k] is node k's raw feature width, output_dims[k] the width of
    the embedding (or synthetic label) it exchanges with the server.
    """

    input_dims: list[int]
    output_dims: list[int]
    colocated: frozenset[int] = frozenset()

    def __post_init__(self):
        if len(self.input_dims) != len(self.output_dims):
            raise ContractError("input_dims and output_dims must align")
        if not self.input_dims:
            raise ContractError("a topology needs at least one node")
        bad = [k for k in self.colocated if not 0 <= k < len(self.input_dims)]
        if bad:
            raise ContractError(f"colocated refers to unknown nodes {bad}")

    @property
    def party_count(self) -> int:
        return len(self.input_dims)


@dataclass
class CommLedger:
    """Append-only message log with per-phase accounting."""

    messages: list[Message] = field(default_factory=list)

    def log(
        self,
        topology: Topology,
        phase: str,
        node: int,
        to_server: bool,
        payload_kind: str,
        elements: int,
    ) -> None:
        if phase not in PHASES:
            raise ContractError(f"unknown phase {phase!r}")
        if payload_kind not in ALLOWED_PAYLOADS[phase]:
            raise ContractError(
                f"payload {payload_kind!r} is not allowed in phase {phase!r}"
            )
        name = f"node:{node}"
        self.messages.append(
            Message(
                phase=phase,
                sender=name if to_server else "server",
                receiver="server" if to_server else name,
                payload_kind=payload_kind,
                elements=int(elements),
                colocated=node in topology.colocated,
            )
        )

    def _selected(self, phase: str | None, mode: str) -> list[Message]:
        if mode not in ("logical", "physical"):
            raise ContractError(f"unknown counting mode {mode!r}")
        out = []
        for msg in self.messages:
            if phase is not None and msg.phase != phase:
                continue
            if mode == "physical" and msg.colocated:
                continue
            out.append(msg)
        return out

    def count(self, phase: str | None = None, mode: str = "logical") -> int:
        return len(self._selected(phase, mode))

    def elements(self, phase: str | None = None, mode: str = "logical") -> int:
        return sum(m.elements for m in self._selected(phase, mode))

    def summary(self) -> dict:
        """Per-phase and total message/element/byte counts in both modes."""
        out: dict = {}
        for mode in ("logical", "physical"):
            phases = {}
            for phase in PHASES:
                msgs = self._selected(phase, mode)
                if msgs:
                    phases[phase] = {
                        "messages": len(msgs),
                        "elements": sum(m.elements for m in msgs),
                        "bytes": sum(m.nbytes for m in msgs),
                    }
            all_msgs = self._selected(None, mode)
            out[mode] = {
                "phases": phases,
                "total": {
                    "messages": len(all_msgs),
                    "elements": sum(m.elements for m in all_msgs),
                    "bytes": sum(m.nbytes for m in all_msgs),
                },
            }
        return out


def expected_vfl_messages(n: int, batch_size: int, parties: int, epochs: int) -> int:
    """Training transfers for joint training: 2 per node per batch step."""
    return 2 * -(-n // batch_size) * parties * epochs


def expected_sbvfl_messages(parties: int) -> int:
    return 2 * parties


def expected_lvfl_messages(parties: int) -> int:
    return parties


@dataclass
class SbvflArtifacts:
    """Blind-training byproducts, split by who can see them.

    codebooks stay on the server; synth_labels[k] is exactly what node k
    received, so it is the attack surface for label inference.
    """

    codebooks: list[synthlabels.LabelCodebook]
    synth_labels: list[np.ndarray]


@dataclass
class FederatedModel:
    """A trained federation: per-node embedding models plus the server model."""

    protocol: str
    topology: Topology
    node_models: list[predictors.TrainedPredictor]
    server_model: predictors.TrainedPredictor
    server_transform: Standardizer | None = None
    training_ledger: CommLedger = field(default_factory=CommLedger)
    loss_trace: list[float] = field(default_factory=list)
    sbvfl: SbvflArtifacts | None = None


@dataclass
class PredictionResult:
    scores: np.ndarray
    classes: np.ndarray
    ledger: CommLedger
    embedding_collision_pairs: int


def _node_parts(split: VerticalSplit, features: np.ndarray) -> list[np.ndarray]:
    return [features[:, cols] for cols in split.columns]


def relay_batch(
    node_nets: list[nets.ResidualNet],
    server_net: nets.ResidualNet,
    x_parts: list[np.ndarray],
    labels: np.ndarray,
) -> tuple[float, list[list[np.ndarray]], list[np.ndarray], list[np.ndarray]]:
    """One synchronous joint step without parameter updates.

    Nodes embed their feature slices, the server scores the concatenation
    with softmax cross-entropy, and gradients flow back through the
    concatenation boundary. Returns (loss value, per-node parameter
    gradients, server parameter gradients, per-node output gradients).
    """
    outs = []
    tapes = []
    for net, xk in zip(node_nets, x_parts):
        y, tape = nets.forward(net, xk)
        outs.append(y)
        tapes.append(tape)
    h = np.concatenate(outs, axis=1)
    logits, server_tape = nets.forward(server_net, h)
    value, d_logits = nets.loss_softmax_ce(logits, labels)
    server_grads, d_h = nets.backward(server_net, server_tape, d_logits)
    node_grads = []
    d_outs = []
    start = 0
    for net, tape in zip(node_nets, tapes):
        width = net.output_dim
        d_out = d_h[:, start : start + width]
        grads, _ = nets.backward(net, tape, d_out)
        node_grads.append(grads)
        d_outs.append(d_out)
        start += width
    return value, node_grads, server_grads, d_outs


def run_vfl(
    split: VerticalSplit,
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    node_spec: predictors.PredictorSpec,
    server_spec: predictors.PredictorSpec,
    synth_widths: list[int],
    base_seed: int | tuple,
    epochs: int = 5,
    batch_size: int = 128,
    colocated: frozenset[int] = frozenset(),
) -> FederatedModel:
    """Joint training with the gradient relay; both ends must be mlps.

    epochs and batch_size set the relay schedule itself (they fix the
    message count), independently of any local-training hyperparameters
    carried by the model specs.
    """
    if not node_spec.differentiable or not server_spec.differentiable:
        raise NonDifferentiableModelError(
            "joint training needs differentiable node and server models; "
            "boosted trees cannot exchange gradients"
        )
    seeds = _seed_parts(base_seed)
    parts = _node_parts(split, features)
    parties = split.party_count
    topology = Topology(
        input_dims=[p.shape[1] for p in parts],
        output_dims=list(synth_widths),
        colocated=colocated,
    )
    node_nets = [
        nets.init_net(
            input_dim=parts[k].shape[1],
            output_dim=synth_widths[k],
            hidden_dim=node_spec.hidden_dim,
            depth=node_spec.depth,
            activation=node_spec.activation,
            rng=rng_for(*seeds, "vfl-node-init", k),
        )
        for k in range(parties)
    ]
    server_net = nets.init_net(
        input_dim=sum(synth_widths),
        output_dim=class_count,
        hidden_dim=server_spec.hidden_dim,
        depth=server_spec.depth,
        activation=server_spec.activation,
        rng=rng_for(*seeds, "vfl-server-init"),
    )
    node_states = [
        nets.OptimizerState(
            kind=node_spec.optimizer,
            learning_rate=node_spec.learning_rate,
            weight_decay=node_spec.weight_decay,
        )
        for _ in range(parties)
    ]
    server_state = nets.OptimizerState(
        kind=server_spec.optimizer,
        learning_rate=server_spec.learning_rate,
        weight_decay=server_spec.weight_decay,
    )
    ledger = CommLedger()
    batch_rng = rng_for(*seeds, "vfl-batches")
    n = features.shape[0]
    trace = []
    for _ in range(epochs):
        order = batch_rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            x_parts = [p[idx] for p in parts]
            for k in range(parties):
                ledger.log(
                    topology,
                    "node-outputs",
                    k,
                    to_server=True,
                    payload_kind="node-outputs",
                    elements=idx.size * synth_widths[k],
                )
            value, node_grads, server_grads, d_outs = relay_batch(
                node_nets, server_net, x_parts, labels[idx]
            )
            nets.optimizer_step(server_net.parameters(), server_grads, server_state)
            server_net.version += 1
            for k in range(parties):
                ledger.log(
                    topology,
                    "gradients",
                    k,
                    to_server=False,
                    payload_kind="output-gradients",
                    elements=d_outs[k].size,
                )
                nets.optimizer_step(
                    node_nets[k].parameters(), node_grads[k], node_states[k]
                )
                node_nets[k].version += 1
            total += value * idx.size
        trace.append(total / n)
    node_models = [
        predictors.TrainedPredictor(
            spec=predictors.PredictorSpec(
                kind="mlp",
                output_dim=synth_widths[k],
                hidden_dim=node_spec.hidden_dim,
                depth=node_spec.depth,
                activation=node_spec.activation,
            ),
            task="regression",
            net=node_nets[k],
        )
        for k in range(parties)
    ]
    server_model = predictors.TrainedPredictor(
        spec=predictors.PredictorSpec(
            kind="mlp",
            output_dim=class_count,
            hidden_dim=server_spec.hidden_dim,
            depth=server_spec.depth,
            activation=server_spec.activation,
        ),
        task="classification",
        net=server_net,
        class_count=class_count,
        classes=np.arange(class_count),
    )
    return FederatedModel(
        protocol="vfl",
        topology=topology,
        node_models=node_models,
        server_model=server_model,
        training_ledger=ledger,
        loss_trace=trace,
    )


def run_sbvfl(
    split: VerticalSplit,
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    node_spec: predictors.PredictorSpec,
    server_spec: predictors.PredictorSpec,
    synth_widths: list[int],
    base_seed: int | tuple,
    per_class: int = 4,
    codebook_policy: str = "gaussian",
    distinct_labels: bool = False,
    jitter_radius: float | None = None,
    colocated: frozenset[int] = frozenset(),
    concurrent: bool = True,
) -> FederatedModel:
    """Blind training: synthetic labels out, node outputs back, 2P messages.

    Node fits run on a thread pool by default; every node consumes only its
    own seeded random stream, so concurrent and sequential runs produce
    byte-identical models.
    """
    seeds = _seed_parts(base_seed)
    parts = _node_parts(split, features)
    parties = split.party_count
    topology = Topology(
        input_dims=[p.shape[1] for p in parts],
        output_dims=list(synth_widths),
        colocated=colocated,
    )
    ledger = CommLedger()
    codebooks = []
    synth = []
    for k in range(parties):
        codebook = synthlabels.build_codebook(
            class_count=class_count,
            width=synth_widths[k],
            per_class=per_class,
            policy=codebook_policy,
            rng=rng_for(*seeds, "codebook", k),
            node_id=k,
        )
        assign_rng = rng_for(*seeds, "assign", k)
        if distinct_labels:
            z = synthlabels.assign_distinct(
                codebook, labels, assign_rng, jitter_radius=jitter_radius
            )
        else:
            z = synthlabels.assign(codebook, labels, assign_rng)
        codebooks.append(codebook)
        synth.append(z)
        ledger.log(
            topology,
            "synthetic-labels",
            k,
            to_server=False,
            payload_kind="synthetic-labels",
            elements=z.size,
        )

    def fit_node(k: int) -> predictors.TrainedPredictor:
        spec = predictors.PredictorSpec(
            kind=node_spec.kind,
            output_dim=synth_widths[k],
            hidden_dim=node_spec.hidden_dim,
            depth=node_spec.depth,
            epochs=node_spec.epochs,
            batch_size=node_spec.batch_size,
            learning_rate=node_spec.learning_rate,
            weight_decay=node_spec.weight_decay,
            activation=node_spec.activation,
            optimizer=node_spec.optimizer,
            n_rounds=node_spec.n_rounds,
            max_depth=node_spec.max_depth,
            shrinkage=node_spec.shrinkage,
            min_leaf=node_spec.min_leaf,
        )
        return predictors.fit_regressor(
            spec, parts[k], synth[k], seed_parts=(*seeds, "sbvfl-node", k)
        )

    if concurrent and parties > 1:
        with ThreadPoolExecutor(max_workers=parties) as pool:
            node_models = list(pool.map(fit_node, range(parties)))
    else:
        node_models = [fit_node(k) for k in range(parties)]

    outs = []
    for k in range(parties):
        out = predictors.predict(node_models[k], parts[k])
        outs.append(out)
        ledger.log(
            topology,
            "node-outputs",
            k,
            to_server=True,
            payload_kind="node-outputs",
            elements=out.size,
        )
    h = np.concatenate(outs, axis=1)
    transform = fit_standardizer(h)
    server_model = predictors.fit_classifier(
        server_spec, transform.apply(h), labels, seed_parts=(*seeds, "sbvfl-server")
    )
    trace = []
    for model in node_models:
        trace.extend(model.loss_trace)
    return FederatedModel(
        protocol="sbvfl",
        topology=topology,
        node_models=node_models,
        server_model=server_model,
        server_transform=transform,
        training_ledger=ledger,
        loss_trace=trace,
        sbvfl=SbvflArtifacts(codebooks=codebooks, synth_labels=synth),
    )


def run_lvfl(
    split: VerticalSplit,
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    node_spec: predictors.PredictorSpec,
    server_spec: predictors.PredictorSpec,
    synth_widths: list[int],
    base_seed: int | tuple,
    colocated: frozenset[int] = frozenset(),
) -> FederatedModel:
    """Untrained node embeddings, one output transfer per node: P messages."""
    seeds = _seed_parts(base_seed)
    if not node_spec.differentiable:
        raise NonDifferentiableModelError(
            "untrained node maps are randomly initialized nets; boosted trees "
            "have no untrained form"
        )
    parts = _node_parts(split, features)
    parties = split.party_count
    topology = Topology(
        input_dims=[p.shape[1] for p in parts],
        output_dims=list(synth_widths),
        colocated=colocated,
    )
    ledger = CommLedger()
    node_models = []
    outs = []
    for k in range(parties):
        net = nets.init_net(
            input_dim=parts[k].shape[1],
            output_dim=synth_widths[k],
            hidden_dim=node_spec.hidden_dim,
            depth=node_spec.depth,
            activation=node_spec.activation,
            rng=rng_for(*seeds, "lvfl-node-init", k),
        )
        model = predictors.TrainedPredictor(
            spec=predictors.PredictorSpec(
                kind="mlp",
                output_dim=synth_widths[k],
                hidden_dim=node_spec.hidden_dim,
                depth=node_spec.depth,
                activation=node_spec.activation,
            ),
            task="regression",
            net=net,
        )
        out = predictors.predict(model, parts[k])
        node_models.append(model)
        outs.append(out)
        ledger.log(
            topology,
            "node-outputs",
            k,
            to_server=True,
            payload_kind="node-outputs",
            elements=out.size,
        )
    h = np.concatenate(outs, axis=1)
    transform = fit_standardizer(h)
    server_model = predictors.fit_classifier(
        server_spec, transform.apply(h), labels, seed_parts=(*seeds, "lvfl-server")
    )
    return FederatedModel(
        protocol="lvfl",
        topology=topology,
        node_models=node_models,
        server_model=server_model,
        server_transform=transform,
        training_ledger=ledger,
    )


def predict_federated(
    model: FederatedModel, split: VerticalSplit, features: np.ndarray
) -> PredictionResult:
    """Score unseen rows, logging one inference transfer per node.

    Also reports how many row pairs collide in embedding space (identical
    concatenated node outputs for different raw feature rows), a quick check
    that embeddings are not trivially invertible lookups.
    """
    parts = _node_parts(split, features)
    ledger = CommLedger()
    outs = []
    for k, model_k in enumerate(model.node_models):
        out = predictors.predict(model_k, parts[k])
        outs.append(out)
        ledger.log(
            model.topology,
            "inference",
            k,
            to_server=True,
            payload_kind="node-outputs",
            elements=out.size,
        )
    h = np.concatenate(outs, axis=1)
    collisions = _embedding_collision_pairs(h, features)
    if model.server_transform is not None:
        h = model.server_transform.apply(h)
    scores = predictors.predict(model.server_model, h)
    classes = np.argmax(scores, axis=1)
    return PredictionResult(
        scores=scores,
        classes=classes,
        ledger=ledger,
        embedding_collision_pairs=collisions,
    )


def _embedding_collision_pairs(embeddings: np.ndarray, raw: np.ndarray) -> int:
    groups: dict[bytes, list[int]] = {}
    for i in range(embeddings.shape[0]):
        groups.setdefault(embeddings[i].tobytes(), []).append(i)
    pairs = 0
    for rows in groups.values():
        if len(rows) < 2:
            continue
        for a in range(len(rows)):
            for b in range(a + 1, len(rows)):
                if raw[rows[a]].tobytes() != raw[rows[b]].tobytes():
                    pairs += 1
    return pairs
