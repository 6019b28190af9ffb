"""Experiment configuration: nested dataclasses loaded from YAML with a strict schema.

Unknown keys and wrong types are rejected with the dotted path of the field.
Defaults follow the published settings (depth-5 QAOA, MADE with two hidden
layers of width 2n, Adam at lr 0.005, batch 8, 30 epochs).
"""
import copy
import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

SCHEMA_VERSION = 1
KINDS = ("spectral_gap_sweep", "magnetization", "autocorrelation")
PROPOSALS = ("ssf", "uniform", "gns_optimized", "gns_fixed")


@dataclass
class QaoaSettings:
    p: int = 5
    angle_table: typing.Optional[str] = None
    angle_convention: str = "sk"
    fallback: bool = True
    ramp_gamma_max: float = 0.7
    ramp_beta_max: float = 0.6
    gtol: float = 1e-6
    maxiter: int = 500
    max_qubits: int = 20


@dataclass
class MadeSettings:
    hidden_layers: int = 2
    hidden_width_factor: int = 2
    learning_rate: float = 0.005
    batch_size: int = 8
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class DatasetSettings:
    train_size: int = 1000
    test_size: int = 250


@dataclass
class McmcSettings:
    steps: int = 100_000
    chains: int = 10
    burn_in: int = 10_000
    max_lag: int = 1000
    mhat2_stride: int = 1
    write_traces: bool = True


@dataclass
class ExperimentConfig:
    kind: str = "spectral_gap_sweep"
    schema_version: int = SCHEMA_VERSION
    master_seed: int = 0
    n_values: typing.List[int] = field(default_factory=lambda: list(range(3, 13)))
    betas: typing.List[float] = field(default_factory=lambda: [10.0])
    instances: int = 100
    proposals: typing.List[str] = field(default_factory=lambda: list(PROPOSALS))
    qaoa: QaoaSettings = field(default_factory=QaoaSettings)
    made: MadeSettings = field(default_factory=MadeSettings)
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    out_dir: str = "runs/experiment"
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        def bad(path, msg):
            raise ConfigError(path, msg)

        if self.schema_version != SCHEMA_VERSION:
            bad("schema_version", f"unsupported version {self.schema_version}")
        if self.kind not in KINDS:
            bad("kind", f"must be one of {KINDS}")
        if not self.n_values or min(self.n_values) < 2:
            bad("n_values", "need at least one size, each >= 2")
        if not self.betas or min(self.betas) < 0:
            bad("betas", "need at least one inverse temperature >= 0")
        if self.instances < 0:
            bad("instances", "must be >= 0")
        for i, p in enumerate(self.proposals):
            if p not in PROPOSALS:
                bad(f"proposals[{i}]", f"must be one of {PROPOSALS}")
        if self.qaoa.p < 1:
            bad("qaoa.p", "must be >= 1")
        if self.qaoa.angle_convention not in ("sk", "none"):
            bad("qaoa.angle_convention", "must be 'sk' or 'none'")
        if self.made.learning_rate <= 0:
            bad("made.learning_rate", "must be > 0")
        for name in ("batch_size", "epochs", "hidden_layers", "hidden_width_factor"):
            if getattr(self.made, name) < 1:
                bad(f"made.{name}", "must be >= 1")
        if self.dataset.train_size < 1 or self.dataset.test_size < 0:
            bad("dataset", "train_size must be >= 1 and test_size >= 0")
        m = self.mcmc
        if m.steps < 1 or m.chains < 1 or m.burn_in < 0 or m.max_lag < 1 or m.mhat2_stride < 1:
            bad("mcmc", "steps, chains, max_lag, mhat2_stride must be >= 1 and burn_in >= 0")
        if self.kind != "spectral_gap_sweep" and m.steps - m.burn_in <= m.max_lag:
            bad("mcmc.max_lag", "post-burn-in chain must be longer than max_lag")
        if self.workers < 1:
            bad("workers", "must be >= 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        """Hash of everything that affects results (excludes out_dir and workers)."""
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


KIND_DEFAULTS = {
    "spectral_gap_sweep": {},
    "magnetization": {
        "n_values": [25],
        "betas": [5.0],
        "instances": 1,
        "dataset": {"train_size": 8000, "test_size": 2000},
        "qaoa": {"max_qubits": 26},
    },
}
KIND_DEFAULTS["autocorrelation"] = KIND_DEFAULTS["magnetization"]


def _check_type(value, tp, path):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _check_type(value, args[0], path)
    if origin in (list, typing.List):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        (inner,) = typing.get_args(tp)
        return [_check_type(v, inner, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def _build(cls, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", "expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        p = f"{path}.{key}" if path else str(key)
        if key not in names:
            raise ConfigError(p, "unknown key")
        tp = hints[key]
        if dataclasses.is_dataclass(tp):
            kwargs[key] = _build(tp, value, p)
        else:
            kwargs[key] = _check_type(value, tp, p)
    return cls(**kwargs)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_mapping(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a mapping")
    kind = data.get("kind", "spectral_gap_sweep")
    merged = _merge(KIND_DEFAULTS.get(kind, {}), data)
    return _build(ExperimentConfig, merged).validate()


def load_config(path) -> ExperimentConfig:
    return config_from_mapping(yaml.safe_load(Path(path).read_text()) or {})


def apply_override(data: dict, dotted: str, value) -> dict:
    """Set ``a.b.c = value`` in a raw mapping (used by CLI flags)."""
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "cannot override inside a non-mapping")
    node[keys[-1]] = value
    return data
