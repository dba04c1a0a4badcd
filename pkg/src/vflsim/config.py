"""Experiment configuration: INI files parsed into typed dataclasses.

Validation is collected, not fail-fast: every problem in the file is
gathered and reported in one ConfigError so a bad config can be fixed in a
single pass. Unknown sections and keys are errors, which catches typos that
would otherwise silently fall back to defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

SCENARIOS = ("single-node", "centralized", "vfl", "sbvfl", "lvfl")
COUNTING_MODES = ("logical", "physical")
DATASET_KINDS = ("blobs", "digits", "credit", "idx", "csv")
PARTITION_SCHEMES = ("equal-slices", "image-bands", "credit", "explicit")


@dataclass
class ModelConfig:
    kind: str = "mlp"
    hidden_dim: int = 32
    depth: int = 10
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    activation: str = "tanh"
    optimizer: str = "adam"
    n_rounds: int = 100
    max_depth: int = 3
    shrinkage: float = 0.1
    min_leaf: int = 5


@dataclass
class DatasetConfig:
    kind: str = "blobs"
    n: int = 800  # generated pool size before sharing/splitting
    test_fraction: float = 0.2
    shared_fraction: float = 1.0
    seed: int = 1
    standardize: str = "auto"  # auto | true | false
    path: str = ""
    label_column: str = ""
    images_path: str = ""
    labels_path: str = ""
    # blobs shape
    dim: int = 12
    classes: int = 4
    separation: float = 4.0
    noise: float = 1.0


@dataclass
class PartitionConfig:
    scheme: str = "equal-slices"
    parties: int = 2
    colocated: tuple[int, ...] = ()
    explicit_columns: tuple[tuple[int, ...], ...] = ()


@dataclass
class ProtocolConfig:
    synth_width: int = 0  # 0 means per-node default max(2, min(d_k, 16))
    privacy_multiplier: int = 4
    codebook_policy: str = "gaussian"
    distinct_labels: bool = False
    jitter_radius: float = 0.0  # 0 means the default fraction of the row gap
    concurrent_nodes: bool = True
    vfl_epochs: int = 0  # 0 inherits server_model.epochs
    vfl_batch_size: int = 0  # 0 inherits server_model.batch_size


@dataclass
class AttackConfig:
    per_class_values: tuple[int, ...] = (1, 2, 4, 8)
    budget: int = 0  # 0 means one per class
    trials: int = 10
    include_distinct: bool = True


@dataclass
class ExperimentConfig:
    scenarios: tuple[str, ...] = ("vfl",)
    trials: int = 1
    base_seed: int = 0
    counting_mode: str = "logical"
    single_node_index: int = 0
    out: str = ""
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    node_model: ModelConfig = field(default_factory=ModelConfig)
    server_model: ModelConfig = field(default_factory=ModelConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)


class _Collector:
    """Typed reads from one section, accumulating problems instead of raising."""

    def __init__(self, section: str, values: dict[str, str], problems: list[str]):
        self.section = section
        self.values = dict(values)
        self.problems = problems
        self.seen: set[str] = set()

    def _raw(self, key: str) -> str | None:
        self.seen.add(key)
        return self.values.get(key)

    def note(self, message: str) -> None:
        self.problems.append(f"[{self.section}] {message}")

    def read_int(self, key: str, default: int) -> int:
        raw = self._raw(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            self.note(f"{key} must be an integer, got {raw!r}")
            return default

    def read_float(self, key: str, default: float) -> float:
        raw = self._raw(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            self.note(f"{key} must be a number, got {raw!r}")
            return default

    def read_bool(self, key: str, default: bool) -> bool:
        raw = self._raw(key)
        if raw is None:
            return default
        lowered = raw.strip().lower()
        if lowered in ("true", "yes", "on", "1"):
            return True
        if lowered in ("false", "no", "off", "0"):
            return False
        self.note(f"{key} must be a boolean, got {raw!r}")
        return default

    def read_str(self, key: str, default: str, choices: tuple[str, ...] = ()) -> str:
        raw = self._raw(key)
        if raw is None:
            return default
        raw = raw.strip()
        if choices and raw not in choices:
            self.note(f"{key} must be one of {', '.join(choices)}; got {raw!r}")
            return default
        return raw

    def read_int_list(self, key: str, default: tuple[int, ...]) -> tuple[int, ...]:
        raw = self._raw(key)
        if raw is None:
            return default
        try:
            return tuple(int(part) for part in raw.split(",") if part.strip())
        except ValueError:
            self.note(f"{key} must be a comma-separated list of integers, got {raw!r}")
            return default

    def read_str_list(self, key: str, default: tuple[str, ...]) -> tuple[str, ...]:
        raw = self._raw(key)
        if raw is None:
            return default
        return tuple(part.strip() for part in raw.split(",") if part.strip())

    def finish(self) -> None:
        unknown = set(self.values) - self.seen
        for key in sorted(unknown):
            self.note(f"unknown key {key!r}")


def _read_model(collector: _Collector) -> ModelConfig:
    cfg = ModelConfig(
        kind=collector.read_str("kind", "mlp", ("mlp", "trees")),
        hidden_dim=collector.read_int("hidden_dim", 32),
        depth=collector.read_int("depth", 10),
        epochs=collector.read_int("epochs", 20),
        batch_size=collector.read_int("batch_size", 128),
        learning_rate=collector.read_float("learning_rate", 1e-3),
        weight_decay=collector.read_float("weight_decay", 1e-3),
        activation=collector.read_str("activation", "tanh", ("tanh", "relu")),
        optimizer=collector.read_str("optimizer", "adam", ("sgd", "adam")),
        n_rounds=collector.read_int("n_rounds", 100),
        max_depth=collector.read_int("max_depth", 3),
        shrinkage=collector.read_float("shrinkage", 0.1),
        min_leaf=collector.read_int("min_leaf", 5),
    )
    for key, low in (
        ("hidden_dim", 1),
        ("depth", 0),
        ("epochs", 1),
        ("batch_size", 1),
        ("min_leaf", 1),
        ("n_rounds", 0),
    ):
        if getattr(cfg, key) < low:
            collector.note(f"{key} must be >= {low}")
    if cfg.learning_rate <= 0:
        collector.note("learning_rate must be > 0")
    if cfg.weight_decay < 0:
        collector.note("weight_decay must be >= 0")
    if not 1 <= cfg.max_depth <= 3:
        collector.note("max_depth must be in 1..3")
    if not 0 < cfg.shrinkage <= 1:
        collector.note("shrinkage must be in (0, 1]")
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI text into an ExperimentConfig, raising ConfigError on problems."""
    parser = configparser.ConfigParser(interpolation=None)
    problems: list[str] = []
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"not valid INI: {exc}"]) from exc

    known_sections = (
        "experiment",
        "dataset",
        "partition",
        "node_model",
        "server_model",
        "protocol",
        "attack_sweep",
    )
    for section in parser.sections():
        if section not in known_sections:
            problems.append(f"unknown section [{section}]")

    def collector(section: str) -> _Collector:
        values = dict(parser[section]) if parser.has_section(section) else {}
        return _Collector(section, values, problems)

    exp = collector("experiment")
    scenarios = exp.read_str_list("scenarios", ())
    single = exp.read_str("scenario", "")
    if scenarios and single:
        exp.note("give either scenario or scenarios, not both")
    if single:
        scenarios = (single,)
    if not scenarios:
        scenarios = ("vfl",)
    for name in scenarios:
        if name not in SCENARIOS:
            exp.note(f"unknown scenario {name!r}; choices: {', '.join(SCENARIOS)}")
    cfg = ExperimentConfig(
        scenarios=scenarios,
        trials=exp.read_int("trials", 1),
        base_seed=exp.read_int("base_seed", 0),
        counting_mode=exp.read_str("counting_mode", "logical", COUNTING_MODES),
        single_node_index=exp.read_int("single_node_index", 0),
        out=exp.read_str("out", ""),
    )
    if cfg.trials < 1:
        exp.note("trials must be >= 1")
    exp.finish()

    ds = collector("dataset")
    cfg.dataset = DatasetConfig(
        kind=ds.read_str("kind", "blobs", DATASET_KINDS),
        n=ds.read_int("n", 800),
        test_fraction=ds.read_float("test_fraction", 0.2),
        shared_fraction=ds.read_float("shared_fraction", 1.0),
        seed=ds.read_int("seed", 1),
        standardize=ds.read_str("standardize", "auto", ("auto", "true", "false")),
        path=ds.read_str("path", ""),
        label_column=ds.read_str("label_column", ""),
        images_path=ds.read_str("images_path", ""),
        labels_path=ds.read_str("labels_path", ""),
        dim=ds.read_int("dim", 12),
        classes=ds.read_int("classes", 4),
        separation=ds.read_float("separation", 4.0),
        noise=ds.read_float("noise", 1.0),
    )
    if cfg.dataset.n < 2:
        ds.note("n must be >= 2")
    if not 0.0 < cfg.dataset.test_fraction < 1.0:
        ds.note("test_fraction must be in (0, 1)")
    if not 0.0 < cfg.dataset.shared_fraction <= 1.0:
        ds.note("shared_fraction must be in (0, 1]")
    if cfg.dataset.kind == "csv" and not cfg.dataset.path:
        ds.note("kind csv requires path")
    if cfg.dataset.kind == "csv" and not cfg.dataset.label_column:
        ds.note("kind csv requires label_column")
    if cfg.dataset.kind == "idx" and (
        not cfg.dataset.images_path or not cfg.dataset.labels_path
    ):
        ds.note("kind idx requires images_path and labels_path")
    ds.finish()

    part = collector("partition")
    explicit_raw = part.read_str("columns", "")
    explicit: tuple[tuple[int, ...], ...] = ()
    if explicit_raw:
        try:
            explicit = tuple(
                tuple(int(v) for v in group.split(",") if v.strip())
                for group in explicit_raw.split(";")
                if group.strip()
            )
        except ValueError:
            part.note(f"columns must be semicolon-separated integer lists, got {explicit_raw!r}")
    cfg.partition = PartitionConfig(
        scheme=part.read_str("scheme", "equal-slices", PARTITION_SCHEMES),
        parties=part.read_int("parties", 2),
        colocated=part.read_int_list("colocated", ()),
        explicit_columns=explicit,
    )
    if cfg.partition.parties < 1:
        part.note("parties must be >= 1")
    if cfg.partition.scheme == "explicit" and not explicit:
        part.note("scheme explicit requires columns")
    part.finish()

    node = collector("node_model")
    cfg.node_model = _read_model(node)
    node.finish()
    server = collector("server_model")
    cfg.server_model = _read_model(server)
    server.finish()

    proto = collector("protocol")
    cfg.protocol = ProtocolConfig(
        synth_width=proto.read_int("synth_width", 0),
        privacy_multiplier=proto.read_int("privacy_multiplier", 4),
        codebook_policy=proto.read_str(
            "codebook_policy", "gaussian", ("gaussian", "affine")
        ),
        distinct_labels=proto.read_bool("distinct_labels", False),
        jitter_radius=proto.read_float("jitter_radius", 0.0),
        concurrent_nodes=proto.read_bool("concurrent_nodes", True),
        vfl_epochs=proto.read_int("vfl_epochs", 0),
        vfl_batch_size=proto.read_int("vfl_batch_size", 0),
    )
    if cfg.protocol.synth_width < 0:
        proto.note("synth_width must be >= 0 (0 selects the per-node default)")
    if cfg.protocol.privacy_multiplier < 1:
        proto.note("privacy_multiplier must be >= 1")
    if cfg.protocol.jitter_radius < 0:
        proto.note("jitter_radius must be >= 0 (0 selects the default)")
    if cfg.protocol.vfl_epochs < 0 or cfg.protocol.vfl_batch_size < 0:
        proto.note("vfl_epochs and vfl_batch_size must be >= 0 (0 inherits)")
    proto.finish()

    atk = collector("attack_sweep")
    cfg.attack = AttackConfig(
        per_class_values=atk.read_int_list("per_class_values", (1, 2, 4, 8)),
        budget=atk.read_int("budget", 0),
        trials=atk.read_int("trials", 10),
        include_distinct=atk.read_bool("include_distinct", True),
    )
    if any(v < 1 for v in cfg.attack.per_class_values):
        atk.note("per_class_values must all be >= 1")
    if cfg.attack.trials < 1:
        atk.note("trials must be >= 1")
    if cfg.attack.budget < 0:
        atk.note("budget must be >= 0 (0 selects one per class)")
    atk.finish()

    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    return parse_config(text)


def _dataclass_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def config_as_dict(cfg: ExperimentConfig) -> dict:
    """JSON-friendly echo of a resolved configuration."""
    return {
        "scenarios": list(cfg.scenarios),
        "trials": cfg.trials,
        "base_seed": cfg.base_seed,
        "counting_mode": cfg.counting_mode,
        "single_node_index": cfg.single_node_index,
        "dataset": _dataclass_dict(cfg.dataset),
        "partition": {
            "scheme": cfg.partition.scheme,
            "parties": cfg.partition.parties,
            "colocated": list(cfg.partition.colocated),
            "explicit_columns": [list(c) for c in cfg.partition.explicit_columns],
        },
        "node_model": _dataclass_dict(cfg.node_model),
        "server_model": _dataclass_dict(cfg.server_model),
        "protocol": _dataclass_dict(cfg.protocol),
        "attack_sweep": _dataclass_dict(cfg.attack),
    }
