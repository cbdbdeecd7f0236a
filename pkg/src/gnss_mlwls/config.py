"""Experiment configuration: nested dataclasses loaded from a YAML document.

Every setting has a default, so an empty document is a valid configuration
(it only lacks data paths). Unknown keys are rejected to catch typos.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .activation import Activation, ActivationConfigError, ActivationSpec
from .ensemble.models import KINDS, AdaBoostConfig, BoostingConfig, ForestConfig
from .features import DopplerSign, Grouping
from .measurements import Constellation


class ConfigError(ValueError):
    pass


@dataclass
class SplitPaths:
    """Inputs of one split: RINEX obs/nav + truth, or a canonical CSV + truth."""

    obs: Optional[str] = None
    nav: Optional[str] = None
    truth: Optional[str] = None
    truth_format: str = "csv_geodetic"
    canonical: Optional[str] = None


@dataclass
class SolverSettings:
    tol: float = 1e-4
    max_iter: int = 10
    atmosphere: bool = False  # Klobuchar + Saastamoinen at ingest, RINEX inputs only


@dataclass
class FeatureSettings:
    elevation_mask_deg: float = 15.0
    clock_grouping: str = Grouping.PER_CONSTELLATION.value
    doppler_sign: str = DopplerSign.RINEX.value
    max_rate_dt_s: float = 1.5  # previous epoch older than this gives no rate feature


@dataclass
class LabelSettings:
    enumeration_cap: int = 16
    beam_width: int = 8
    min_epoch_signals: int = 5  # training and accuracy skip smaller epochs


@dataclass
class ModelSettings:
    kind: str = "adaboost"
    # Per-kind defaults, overridable per constellation via ``per_constellation``.
    random_forest: dict = field(default_factory=lambda: dataclasses.asdict(ForestConfig()))
    adaboost: dict = field(default_factory=lambda: dataclasses.asdict(AdaBoostConfig()))
    gradient_boosting: dict = field(default_factory=lambda: dataclasses.asdict(BoostingConfig()))
    per_constellation: dict = field(default_factory=dict)  # {"GPS": {...}, "BeiDou": {...}}

    def params(self, constellation: str, kind: Optional[str] = None) -> dict:
        kind = kind or self.kind
        p = dict(getattr(self, kind))
        p.update(self.per_constellation.get(constellation, {}))
        return p


@dataclass
class ActivationSettings:
    kind: str = "sigmoid"
    b: float = 100.0
    a: Optional[float] = None
    # extra activations reported next to the configured one; sigmoid uses b
    compare: list = field(default_factory=lambda: ["linear", "unit_step", "relu"])

    def spec(self) -> ActivationSpec:
        return ActivationSpec(Activation(self.kind), float(self.b), self.a)

    def compare_specs(self) -> list:
        return [ActivationSpec(Activation(k), float(self.b), self.a) for k in self.compare]


@dataclass
class SweepSettings:
    b_min: int = 1
    b_max: int = 200
    b_step: int = 1
    b_grid: Optional[list] = None  # explicit grid overrides the range
    mode: str = "test"  # "test" scores on the test split, "validation" on a held-out tail of train
    validation_fraction: float = 0.2

    def grid(self) -> list:
        if self.b_grid is not None:
            return [float(b) for b in self.b_grid]
        return [float(b) for b in range(self.b_min, self.b_max + 1, self.b_step)]


@dataclass
class ExperimentConfig:
    output_dir: str = "out"
    seed: int = 0
    threads: int = 1
    constellations: list = field(default_factory=lambda: ["GPS", "BeiDou"])
    max_gap_s: float = 0.5
    train: SplitPaths = field(default_factory=SplitPaths)
    test: SplitPaths = field(default_factory=SplitPaths)
    solver: SolverSettings = field(default_factory=SolverSettings)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    labeling: LabelSettings = field(default_factory=LabelSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    activation: ActivationSettings = field(default_factory=ActivationSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    base_dir: str = field(default=".", metadata={"internal": True})

    def constellation_enums(self) -> tuple:
        return tuple(Constellation.parse(c) for c in self.constellations)

    def path(self, p: Optional[str]) -> Optional[Path]:
        """Resolve a config-relative path."""
        if p is None:
            return None
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    @property
    def out(self) -> Path:
        return self.path(self.output_dir)

    def validate(self) -> "ExperimentConfig":
        try:
            cons = self.constellation_enums()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not cons or len(set(cons)) != len(cons):
            raise ConfigError("constellations must be a non-empty list without repeats")
        if self.model.kind not in KINDS:
            raise ConfigError(f"model.kind must be one of {KINDS}")
        try:
            self.activation.spec()
            self.activation.compare_specs()
        except (ActivationConfigError, ValueError) as exc:
            raise ConfigError(f"activation: {exc}") from exc
        try:
            Grouping(self.features.clock_grouping)
            DopplerSign(self.features.doppler_sign)
        except ValueError as exc:
            raise ConfigError(f"features: {exc}") from exc
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.sweep.mode not in ("test", "validation"):
            raise ConfigError("sweep.mode must be 'test' or 'validation'")
        grid = self.sweep.grid()
        if not grid or any(not b > 0 for b in grid):
            raise ConfigError("sweep grid must be non-empty with positive values")
        if not 0.0 <= self.features.elevation_mask_deg < 90.0:
            raise ConfigError("elevation mask must lie in [0, 90)")
        if self.labeling.enumeration_cap < 4:
            raise ConfigError("enumeration cap too small")
        classes = {"random_forest": ForestConfig, "adaboost": AdaBoostConfig, "gradient_boosting": BoostingConfig}
        for name, cls in classes.items():
            checks = [getattr(self.model, name)]
            if name == self.model.kind:
                checks += [self.model.params(c) for c in self.model.per_constellation]
            for params in checks:
                try:
                    cls(**params)
                except TypeError as exc:
                    raise ConfigError(f"model.{name}: {exc}") from exc
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d


def _build(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls) if not f.metadata.get("internal")}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key {where + '.' if where else ''}{unknown[0]}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{where}.{name}" if where else name)
        elif sub is not None and isinstance(value, dict) and isinstance(sub(), dict):
            kwargs[name] = {**sub(), **value}  # partial overrides keep the other defaults
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_from_dict(data: Optional[dict], base_dir: str = ".") -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data or {}, "")
    cfg.base_dir = base_dir
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {p}: {exc}") from exc
    return config_from_dict(data, str(p.parent))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
