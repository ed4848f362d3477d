"""Experiment configuration: dataclasses plus JSON (de)serialization."""
import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import ConfigError
from .filters import FilterConfig
from .models import ModelKind, ModelSpec
from .obs import LocalizationSpec


class EnsembleInit(str, Enum):
    PERTURBED_TRUTH = "perturbed_truth"
    IDENTICAL_COPIES = "identical_copies"


# Parameter sets of the one-week spread experiments; c0 = 0.02 and rho0 = 1.0 throughout.
SPREAD_EXPERIMENTS = {
    2: dict(kappa=0.5, kappa_post=5.0, c1=0.5, rho1=1.5),
    3: dict(kappa=0.5, kappa_post=3.0, c1=0.5, rho1=1.5),
    4: dict(kappa=0.3, kappa_post=5.0, c1=0.5, rho1=1.5),
    5: dict(kappa=1.0, kappa_post=1.0, c1=0.3, rho1=3.0),
    6: dict(kappa=0.5, kappa_post=3.0, c1=0.5, rho1=3.0),
    7: dict(kappa=0.3, kappa_post=5.0, c1=0.5, rho1=3.0),
}


@dataclass(frozen=True)
class ObsNetworkSpec:
    every: int = 1
    offset: int = 0
    err_var: float = 1.0

    def __post_init__(self):
        if self.every < 1 or self.err_var <= 0:
            raise ConfigError("obs network needs every >= 1 and err_var > 0")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    obs: ObsNetworkSpec = field(default_factory=ObsNetworkSpec)
    filter: FilterConfig = field(default_factory=FilterConfig)
    members: int = 40
    cycles: int = 200
    spinup_cycles: int = 50
    ensemble_init: EnsembleInit = EnsembleInit.PERTURBED_TRUTH
    init_spread: float = 1.0
    burn_in_steps: int = 1000
    forecast_lead_cycles: tuple = (0, 1, 2, 4, 8)
    output_dir: str = "out"
    seed: int = 0
    workers: int = 1
    save_states: bool = True
    dump_matrices_cycles: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ensemble_init", EnsembleInit(self.ensemble_init))
        object.__setattr__(self, "forecast_lead_cycles", tuple(int(k) for k in self.forecast_lead_cycles))
        object.__setattr__(self, "dump_matrices_cycles", tuple(int(k) for k in self.dump_matrices_cycles))
        if self.cycles < 1:
            raise ConfigError("cycles must be >= 1")
        if not 0 <= self.spinup_cycles < self.cycles:
            raise ConfigError("need 0 <= spinup_cycles < cycles")
        if self.members < 2:
            raise ConfigError("ensemble needs at least two members")
        if any(k < 0 for k in self.forecast_lead_cycles):
            raise ConfigError("forecast leads must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def filter_seed(self):
        return self.seed if self.filter.seed is None else self.filter.seed

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_filter(self, **changes):
        return dataclasses.replace(self, filter=dataclasses.replace(self.filter, **changes))


def _jsonable(obj):
    if isinstance(obj, Enum):
        return obj.value
    if dataclasses.is_dataclass(obj):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def to_dict(cfg):
    return _jsonable(cfg)


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


def model_from_dict(data):
    data = dict(data or {})
    if ModelKind(data.get("kind", ModelKind.LORENZ96)) is ModelKind.LORENZ63:
        data.setdefault("dt", 0.01)
        data.setdefault("steps_per_cycle", 5)
    return _build(ModelSpec, data, "model")


def from_dict(data):
    data = dict(data or {})
    try:
        model = model_from_dict(data.pop("model", None))
        obs = _build(ObsNetworkSpec, data.pop("obs", None), "obs")
        fdata = dict(data.pop("filter", None) or {})
        if "loc" in fdata:
            fdata["loc"] = _build(LocalizationSpec, fdata["loc"], "filter.loc")
        if model.kind is ModelKind.LORENZ63:
            fdata.setdefault("loc", LocalizationSpec(kind="none"))
        filt = _build(FilterConfig, fdata, "filter")
        return _build(ExperimentConfig, {**data, "model": model, "obs": obs, "filter": filt}, "experiment")
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from err


def load_config(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return from_dict(data)


def dump_config(cfg, path):
    Path(path).write_text(json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n")
