"""Experiment configuration: all-defaulted dataclasses, TOML or JSON files.

Every field has a working default (the degree-2 power map and observables
whose moments are known in closed form), so `greenlab all` runs with no
config at all.  A file sets only the fields it wants to change; unknown
keys are rejected with the full field path so typos cannot silently fall
back to defaults.  The resolved config is dumped next to the reports,
and re-running from that dump reproduces the outputs byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import tomli

from .errors import ConfigError, GreenlabError, InvalidParams
from .observables import Observable, _parse_center, observable_from_config
from .sphere import RationalMap, SpherePoint, make_rational_map
from .transfer import TransferBudget


def _as_complex_list(raw, path: str) -> list[complex]:
    """Coefficients come as numbers or [re, im] pairs."""
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ConfigError(f"{path}: need a nonempty coefficient list")
    out = []
    for i, v in enumerate(raw):
        if isinstance(v, (int, float)):
            out.append(complex(v))
        elif isinstance(v, (list, tuple)) and len(v) == 2:
            out.append(complex(float(v[0]), float(v[1])))
        else:
            raise ConfigError(f"{path}[{i}]: expected a number or [re, im] pair")
    return out


@dataclass
class MapConfig:
    numerator: list = field(default_factory=lambda: [0.0, 0.0, 1.0])
    denominator: list = field(default_factory=lambda: [1.0])

    def build(self) -> RationalMap:
        num = _as_complex_list(self.numerator, "map.numerator")
        den = _as_complex_list(self.denominator, "map.denominator")
        try:
            return make_rational_map(num, den)
        except GreenlabError as exc:
            raise ConfigError(f"map: {exc}") from exc


@dataclass
class SamplerConfig:
    n_samples: int = 100_000
    burn_in: int = 50
    seed: int = 0
    start: object = None  # number, [re, im], or "inf"; None = default start

    def start_point(self) -> SpherePoint | None:
        if self.start is None:
            return None
        try:
            return _parse_center(self.start)
        except InvalidParams as exc:
            raise ConfigError(f"sampler.start: {exc}") from exc


@dataclass
class BudgetConfig:
    exact_depth_max: int = 12
    mc_paths: int = 10_000

    def build(self) -> TransferBudget:
        return TransferBudget(
            exact_depth_max=self.exact_depth_max, mc_paths=self.mc_paths
        )


@dataclass
class GreenConfig:
    # probe points for the escape-rate potential
    points: list = field(default_factory=lambda: [[4.0, 0.0], [0.5, 0.0], [0.0, 1.0]])
    n_iter: int = 40


@dataclass
class ModerateConfig:
    beta: float = 1.0
    center: object = field(default_factory=lambda: [1.0, 0.0])
    m_grid: list = field(default_factory=lambda: [1.0, 1.5, 2.0, 2.5, 3.0])
    radii: list = field(default_factory=lambda: [0.4, 0.3, 0.2, 0.15, 0.1])
    exp_alpha: float = 0.5


@dataclass
class CorrelationsConfig:
    phi: dict = field(default_factory=lambda: {"class": "trigpoly", "coeffs": [0, 1]})
    psi: dict = field(default_factory=lambda: {"class": "trigpoly", "coeffs": [0, 0, 1]})
    n_max: int = 8
    n_orbits: int = 50_000
    n_eval: int = 4096


@dataclass
class VarianceConfig:
    psi: dict = field(default_factory=lambda: {"class": "trigpoly", "coeffs": [0, 1, 1]})
    n_max: int = 8
    bk_grid: list = field(default_factory=lambda: [8, 16, 32])
    n_orbits: int = 20_000


@dataclass
class CltConfig:
    psi: dict = field(default_factory=lambda: {"class": "trigpoly", "coeffs": [0, 1]})
    n: int = 256
    n_orbits: int = 20_000
    ks_threshold: float = 0.05
    coboundary_tol: float = 0.01


@dataclass
class LdtConfig:
    psi: dict = field(default_factory=lambda: {"class": "trigpoly", "coeffs": [0, 1]})
    epsilon: float = 0.2
    n_grid: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    n_orbits: int = 30_000


@dataclass
class DecomposeConfig:
    psi: dict = field(default_factory=lambda: {"class": "trigpoly", "coeffs": [0, 1, 1]})
    tol: float = 1e-6
    gordin_n: int = 6
    n_eval: int = 1024


@dataclass
class OracleConfig:
    d: int = 2
    depth: int = 3


@dataclass
class ExperimentConfig:
    map: MapConfig = field(default_factory=MapConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    green: GreenConfig = field(default_factory=GreenConfig)
    moderate: ModerateConfig = field(default_factory=ModerateConfig)
    correlations: CorrelationsConfig = field(default_factory=CorrelationsConfig)
    variance: VarianceConfig = field(default_factory=VarianceConfig)
    clt: CltConfig = field(default_factory=CltConfig)
    ldt: LdtConfig = field(default_factory=LdtConfig)
    decompose: DecomposeConfig = field(default_factory=DecomposeConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    out_dir: str = "runs/latest"
    workers: int = 1
    format: str = "both"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def observable(self, section: str) -> Observable:
        """Build the named section's psi (or phi via 'correlations.phi')."""
        sec, _, which = section.partition(".")
        spec = getattr(getattr(self, sec), which or "psi")
        try:
            return observable_from_config(spec)
        except InvalidParams as exc:
            raise ConfigError(f"{sec}.{which or 'psi'}: {exc}") from exc


_SECTIONS = {
    "map": MapConfig,
    "sampler": SamplerConfig,
    "budget": BudgetConfig,
    "green": GreenConfig,
    "moderate": ModerateConfig,
    "correlations": CorrelationsConfig,
    "variance": VarianceConfig,
    "clt": CltConfig,
    "ldt": LdtConfig,
    "decompose": DecomposeConfig,
    "oracle": OracleConfig,
}

# fields whose value legitimately varies in type; everything else is
# type-checked against its default
_ANY_TYPE = {"sampler.start", "moderate.center"}


def _check_scalar(name: str, default, value):
    if name in _ANY_TYPE:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name}: expected a list")
        return list(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{name}: expected a table/object")
        return dict(value)
    return value


def _section_from_dict(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a table/object")
    out = cls()
    defaults = {f.name: getattr(out, f.name) for f in dataclasses.fields(cls)}
    for key, value in data.items():
        if key not in defaults:
            raise ConfigError(f"{path}.{key}: unknown field")
        setattr(out, key, _check_scalar(f"{path}.{key}", defaults[key], value))
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root: expected a table/object")
    cfg = ExperimentConfig()
    top_defaults = {"out_dir": cfg.out_dir, "workers": cfg.workers, "format": cfg.format}
    for key, value in data.items():
        if key in _SECTIONS:
            setattr(cfg, key, _section_from_dict(_SECTIONS[key], value, key))
        elif key in top_defaults:
            setattr(cfg, key, _check_scalar(key, top_defaults[key], value))
        else:
            raise ConfigError(f"{key}: unknown field")
    if cfg.format not in ("csv", "json", "both"):
        raise ConfigError(f"format: must be csv, json, or both, got {cfg.format!r}")
    if cfg.workers < 1:
        raise ConfigError("workers: must be >= 1")
    return cfg


def load_config(path: str | None) -> ExperimentConfig:
    """Read a .toml or .json experiment file; None gives pure defaults."""
    if path is None:
        return ExperimentConfig()
    if path.endswith(".toml"):
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    elif path.endswith(".json"):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    else:
        raise ConfigError(f"config file must end in .toml or .json: {path}")
    return config_from_dict(data)
