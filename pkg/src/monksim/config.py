"""Scenario configuration: nested dataclasses loaded from YAML."""
from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .gc import GcConfig, GcConfigError
from .monk import PolicyConfig, PolicyConfigError, Variant
from .workload import ArrivalProcess, RequestSpec, WorkloadConfigError

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid scenario file; ``path`` names the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


@dataclass
class ScenarioConfig:
    schema_version: int = SCHEMA_VERSION
    name: str = "default"
    cores: int = 8
    quantum_us: int = 1_000
    strict_idle: bool = True
    pool_size: int | None = None
    horizon_us: int = 4_000_000
    settle_us: int = 1_000_000
    seeds: list = field(default_factory=lambda: list(range(10)))
    request: RequestSpec = field(default_factory=RequestSpec)
    arrival: ArrivalProcess = field(default_factory=ArrivalProcess)
    gc: GcConfig = field(default_factory=GcConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"unsupported version {self.schema_version}")
        if self.cores < 1:
            raise ConfigError("cores", "must be >= 1")
        if self.quantum_us < 1:
            raise ConfigError("quantum_us", "must be >= 1")
        if self.pool_size is not None and self.pool_size < 1:
            raise ConfigError("pool_size", "must be >= 1")
        if self.horizon_us <= 0:
            raise ConfigError("horizon_us", "must be positive")
        if not 0 <= self.settle_us < self.horizon_us:
            raise ConfigError("settle_us", "must lie in [0, horizon_us)")
        if self.policy.fallback and self.policy.headroom >= self.cores:
            raise ConfigError("policy.headroom", "must be smaller than cores")
        try:
            self.gc.validate()
        except GcConfigError as e:
            raise ConfigError("gc", str(e)) from None
        if self.request.alloc_bytes > self.gc.heap_capacity:
            raise ConfigError("request.alloc_bytes", "exceeds gc.heap_capacity")

    @property
    def mutators(self) -> int:
        return self.pool_size or self.cores

    def with_policy(self, name: str) -> "ScenarioConfig":
        pol = self.policy
        base = PolicyConfig.parse(name, reconcile_interval_us=pol.reconcile_interval_us,
                                  fallback_mode=pol.fallback_mode, decay_alpha=pol.decay_alpha,
                                  switch_delay_us=pol.switch_delay_us)
        return dataclasses.replace(self, policy=base)

    def with_rate(self, rate: float) -> "ScenarioConfig":
        return dataclasses.replace(self, arrival=dataclasses.replace(self.arrival, rate=rate))

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def header_lines(self, seed: int | None = None) -> list[str]:
        lines = [f"config_hash={self.digest()}", f"scenario={self.name}"]
        if seed is not None:
            lines.append(f"seed={seed}")
        lines.append(f"policy={self.policy.label}")
        lines.append(f"decay_alpha={self.policy.decay_alpha}")
        lines.append(f"k_conservative={self.gc.k_conservative}")
        lines.append(f"start_margin={self.gc.start_margin}")
        lines.append(f"headroom_factor={self.gc.headroom_factor}")
        return lines


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


_SECTION_ERRORS = (ConfigError, GcConfigError, PolicyConfigError, WorkloadConfigError)


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if origin is typing.Union or str(origin) == "types.UnionType":
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        return build(tp, value, path)
    if origin is list or tp is list:
        if not isinstance(value, list):
            raise ConfigError(path, "expected a list")
        return list(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
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
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            allowed = ", ".join(m.value for m in tp)
            raise ConfigError(path, f"expected one of {allowed}, got {value!r}") from None
    return value


def build(cls, data, path: str = ""):
    """Construct dataclass ``cls`` from a mapping, reporting bad fields by dotted path."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, "expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, "unknown field")
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        if cls is PolicyConfig and name == "variant" and isinstance(value, str) \
                and value not in Variant.__members__:
            # labels such as HMONK(2) or HMONK_S_C0 carry the headroom
            try:
                parsed = PolicyConfig.parse(value)
            except PolicyConfigError as e:
                raise ConfigError(sub, str(e)) from None
            kwargs["variant"] = parsed.variant
            kwargs["headroom"] = parsed.headroom
            continue
        if name in kwargs:
            continue
        kwargs[name] = _coerce(hints[name], value, sub)
    try:
        return cls(**kwargs)
    except ConfigError as e:
        if path and e.path:
            raise ConfigError(f"{path}.{e.path}", str(e).split(": ", 1)[-1]) from None
        raise
    except (*_SECTION_ERRORS, TypeError) as e:
        raise ConfigError(path, str(e)) from None


def load_config(source) -> ScenarioConfig:
    """Load a scenario from a YAML path or an already-parsed mapping."""
    if isinstance(source, (str, Path)):
        try:
            text = Path(source).read_text()
        except OSError as e:
            raise ConfigError("", f"cannot read {source}: {e}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError("", f"invalid YAML: {e}") from None
    else:
        data = source
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be a mapping")
    if "schema_version" not in data:
        raise ConfigError("schema_version", "missing")
    return build(ScenarioConfig, data)


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
