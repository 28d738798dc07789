"""Pipeline configuration: one nested document, loaded from YAML or JSON."""

from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .fingerprint import VARIANTS, GPConfig, ImputationConfig
from .gp import HyperBounds
from .selection import SelectionConfig
from .steps import StepDetectorConfig
from .tagging import METHODS, STRIDE


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    resolution: float = 0.1

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("grid resolution must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    variant: str = "wifi+magnetic2"
    tagging: str = STRIDE
    seed: int = 0
    detector: StepDetectorConfig = field(default_factory=StepDetectorConfig)
    gp: GPConfig = field(default_factory=GPConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    imputation: ImputationConfig = field(default_factory=ImputationConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.tagging not in METHODS:
            raise ValueError(f"unknown tagging method {self.tagging!r}")

    def to_dict(self):
        d = asdict(self)
        d["gp"]["bounds"] = self.gp.bounds.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            sub = {
                "detector": _build(StepDetectorConfig, d.pop("detector", {})),
                "selection": _build(SelectionConfig, d.pop("selection", {})),
                "grid": _build(GridConfig, d.pop("grid", {})),
                "imputation": _build(ImputationConfig, d.pop("imputation", {})),
            }
            gp = dict(d.pop("gp", {}) or {})
            bounds = HyperBounds.from_dict(gp.pop("bounds", {}) or {})
            sub["gp"] = _build(GPConfig, {**gp, "bounds": bounds})
            return cls(**d, **sub)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from None

    def with_overrides(self, overrides):
        """Apply ``{"a.b": value}`` overrides; ``None`` values are ignored."""
        d = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            node = d
            *parents, leaf = key.split(".")
            for p in parents:
                node = node[p]
            if leaf not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[leaf] = value
        return PipelineConfig.from_dict(d)


def _build(cls, d):
    d = dict(d or {})
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return replace(cls(), **d)


def load_config(path):
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            line = f" (line {mark.line + 1})" if mark else ""
            raise ConfigError(f"{path}: invalid config{line}") from None
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return PipelineConfig.from_dict(doc)


def dump_config(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
