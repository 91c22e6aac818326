"""
Configuration and initialization for the branching lab: logging setup,
numerical defaults, bundled scenarios and the strict TOML run-config loader.
"""
import hashlib
import json
import os
import logging
import logging.handlers
import tomllib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from src.models.families import FAMILIES
from src.models.fields import FieldDescriptorError
from src.models.model_spec import BoundParams, ModelSpec, SimConfig

# Logger configuration
LOGS_DIR = Path("logs")
LOG_FILE = LOGS_DIR / "branching_lab.log"
LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Numerical defaults
APP_CONFIG = {
    "app_name": "Branching Spectra Lab",
    "c": 10.0,
    "c0": 0.05,
    "r0": 1.0,
    "ball_samples": 64,
    "quad_tol": 1e-6,
    "eigen_tol": 1e-8,
    "population_cap": 1_000_000,
    "chunk_size": 4096,
    "output_dir": "results",
    "cache_duration": 30 * 86400,  # spectra do not go stale; keep a month
}

_logging_ready = False


class ConfigError(Exception):
    """Raised for unknown keys, missing sections or invalid values in a run config."""
    pass


def setup_logging() -> None:
    """Set up logging for the application."""
    global _logging_ready
    if _logging_ready:
        return
    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, LOG_LEVEL, logging.INFO))

    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    LOGS_DIR.mkdir(exist_ok=True)
    file_handler = logging.handlers.RotatingFileHandler(
        LOG_FILE,
        maxBytes=10 * 1024 * 1024,  # 10 MB
        backupCount=5,
    )
    file_handler.setFormatter(formatter)
    root_logger.addHandler(file_handler)

    # Set specific levels for some loggers to reduce noise
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("numba").setLevel(logging.WARNING)

    _logging_ready = True
    root_logger.info(f"Logging initialized at level {LOG_LEVEL}")


def get_config() -> Dict[str, Any]:
    """
    Get application configuration.

    Returns:
        Dict[str, Any]: Application configuration
    """
    return APP_CONFIG


@dataclass(frozen=True)
class GridSection:
    R: float = 8.0
    n: int = 401
    m_modes: int = 10
    tol: float = APP_CONFIG["eigen_tol"]
    method: str = "auto"
    confine: bool = True
    stability: bool = False
    envelope_modes: int = 0


@dataclass(frozen=True)
class SimSection:
    dt: float = 0.01
    t_max: float = 1.0
    n_paths: int = 10000
    seed: int = 12345
    cap: int = APP_CONFIG["population_cap"]
    chunk_size: int = APP_CONFIG["chunk_size"]
    workers: int = 1
    x0: Tuple[float, ...] = (0.0,)
    times: Tuple[float, ...] = ()
    phi: str = "one"
    record_particles: bool = False

    def to_sim_config(self) -> SimConfig:
        return SimConfig(
            dt=self.dt,
            t_max=self.t_max,
            n_paths=self.n_paths,
            rng_seed=self.seed,
            population_cap=self.cap,
            chunk_size=self.chunk_size,
            workers=self.workers,
            record_particles=self.record_particles,
        )

    @property
    def sample_times(self) -> Tuple[float, ...]:
        return self.times or (self.t_max,)


@dataclass(frozen=True)
class BoundsSection:
    c: float = APP_CONFIG["c"]
    c0: float = APP_CONFIG["c0"]
    r0: float = APP_CONFIG["r0"]
    branch: str = "ess2"
    ball_samples: int = APP_CONFIG["ball_samples"]
    box_radius: float = 2.0
    quad_tol: float = APP_CONFIG["quad_tol"]
    c_values: Tuple[float, ...] = ()
    c0_values: Tuple[float, ...] = ()
    radii: Tuple[float, ...] = (2.0, 4.0, 8.0, 16.0, 32.0)
    thetas: Tuple[float, ...] = (0.5, 1.0)

    def params(self, c: Optional[float] = None, c0: Optional[float] = None) -> BoundParams:
        return BoundParams(
            c=self.c if c is None else c,
            c0=self.c0 if c0 is None else c0,
            r0=self.r0,
            ball_samples=self.ball_samples,
            branch=self.branch,
        )


@dataclass(frozen=True)
class VerifySection:
    checks: Tuple[str, ...] = ("total_mass", "gap_rate", "qsd")
    times: Tuple[float, ...] = (1.0, 2.0, 3.0, 4.0)
    x0: Tuple[float, ...] = (0.0,)
    gap_phi: str = "bump:1,1"
    gap_times: Tuple[float, ...] = (1.0, 2.0, 3.0, 4.0)
    trusted_radius: Optional[float] = None
    qsd_times: Tuple[float, ...] = (0.5, 1.0, 2.0)
    phis: Tuple[str, ...] = ("one",)
    ass1_phi: str = "x2"
    lambda0_offset: float = 0.0


@dataclass(frozen=True)
class OutputSection:
    directory: str = APP_CONFIG["output_dir"]


VERIFY_CHECKS = ("total_mass", "gap_rate", "qsd", "duality", "ass1", "envelope")
SECTIONS = {
    "grid": GridSection,
    "sim": SimSection,
    "bounds": BoundsSection,
    "verify": VerifySection,
    "output": OutputSection,
}
MODEL_KEYS = {"name", "dimension", "V", "birth", "death", "family", "alpha", "beta", "c", "kappa", "rate"}


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration; absent sections are None."""

    model: Optional[ModelSpec]
    grid: Optional[GridSection]
    sim: Optional[SimSection]
    bounds: Optional[BoundsSection]
    verify: Optional[VerifySection]
    output: OutputSection
    config_hash: str
    scenario: str = ""
    model_table: Dict[str, Any] = field(default_factory=dict)

    def require(self, *sections: str) -> None:
        """Raise ConfigError unless every named section is present."""
        missing = [name for name in sections if getattr(self, name) is None]
        if missing:
            raise ConfigError(f"Missing config section(s) for this command: {', '.join(missing)}")


SCENARIOS: Dict[str, Dict[str, Any]] = {
    "harmonic": {
        "model": {"family": "harmonic", "dimension": 1},
        "grid": {"R": 8.0, "n": 801, "m_modes": 20},
        "sim": {"dt": 0.01, "t_max": 4.0, "n_paths": 20000, "seed": 2024, "x0": [0.0], "times": [1.0, 2.0, 3.0, 4.0]},
        "bounds": {"c_values": [5.0, 10.0, 20.0], "c0_values": [0.05, 0.1]},
        "verify": {
            "checks": ["total_mass", "gap_rate", "qsd", "duality", "ass1", "envelope"],
            "times": [1.0, 2.0, 3.0, 4.0],
            "x0": [0.0],
            "gap_phi": "bump:1,1",
            "gap_times": [1.0, 2.0, 3.0, 4.0],
            "qsd_times": [0.5, 1.0, 2.0],
            "phis": ["one", "x"],
        },
    },
    "ou-kappa": {
        "model": {"family": "ou", "c": -1.0, "kappa": 0.3, "dimension": 1},
        "grid": {"R": 8.0, "n": 801, "m_modes": 12},
        "sim": {"dt": 0.01, "t_max": 4.0, "n_paths": 20000, "seed": 2025, "x0": [0.7], "times": [1.0, 2.0, 3.0, 4.0]},
        "verify": {
            "checks": ["total_mass", "gap_rate", "qsd", "duality"],
            "times": [1.0, 2.0, 3.0, 4.0],
            "x0": [0.7],
            "gap_phi": "bump:1,1",
            "gap_times": [2.0, 3.0, 4.0, 5.0],
            "trusted_radius": 2.0,
            "qsd_times": [0.5, 1.0, 2.0],
            "phis": ["one", "x"],
        },
    },
    "yule": {
        "model": {"family": "yule", "rate": 0.5, "dimension": 1},
        "grid": {"R": 8.0, "n": 401, "m_modes": 4},
        "sim": {"dt": 0.01, "t_max": 2.0, "n_paths": 20000, "seed": 2026, "x0": [0.0], "times": [1.0, 2.0]},
        "verify": {"checks": ["duality"], "times": [2.0], "x0": [0.0]},
    },
    "critical": {
        "model": {"family": "critical", "rate": 1.0, "dimension": 1},
        "grid": {"R": 8.0, "n": 401, "m_modes": 4},
        "sim": {"dt": 0.01, "t_max": 2.0, "n_paths": 20000, "seed": 2027, "x0": [0.0], "times": [1.0, 2.0]},
        "verify": {"checks": ["duality"], "times": [2.0], "x0": [0.0]},
    },
}


def _freeze(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _parse_section(name: str, cls: type, data: Any):
    if not isinstance(data, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"Unknown key(s) in [{name}]: {', '.join(unknown)}")
    try:
        return cls(**{key: _freeze(value) for key, value in data.items()})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid [{name}] section: {str(e)}")


def parse_model(data: Any) -> ModelSpec:
    """Build a ModelSpec from a [model] table (field descriptors or a named family)."""
    if not isinstance(data, Mapping):
        raise ConfigError("[model] must be a table")
    unknown = sorted(set(data) - MODEL_KEYS)
    if unknown:
        raise ConfigError(f"Unknown key(s) in [model]: {', '.join(unknown)}")
    params = dict(data)
    name = params.pop("name", None)
    try:
        if "family" in params:
            family = params.pop("family")
            if family not in FAMILIES:
                raise ConfigError(f"Unknown model family '{family}'; choose from {sorted(FAMILIES)}")
            spec = FAMILIES[family](**params)
        else:
            missing = [key for key in ("dimension", "V", "birth", "death") if key not in params]
            if missing:
                raise ConfigError(f"[model] is missing {', '.join(missing)}")
            extra = sorted(set(params) - {"dimension", "V", "birth", "death"})
            if extra:
                raise ConfigError(f"Key(s) {', '.join(extra)} need a model family")
            spec = ModelSpec.from_descriptors(
                params["dimension"], params["V"], params["birth"], params["death"], name=name or "custom"
            )
            name = None
    except (TypeError, ValueError, FieldDescriptorError) as e:
        raise ConfigError(f"Invalid [model] section: {str(e)}")
    if name:
        spec = ModelSpec(spec.dimension, spec.potential, spec.birth, spec.death, name=name)
    return spec


def config_hash(data: Mapping[str, Any]) -> str:
    """md5 of the canonical JSON form of a raw config."""
    return hashlib.md5(json.dumps(data, sort_keys=True).encode()).hexdigest()


def parse_config(data: Mapping[str, Any], seed: Optional[int] = None, scenario: str = "") -> RunConfig:
    """
    Strictly parse a raw config mapping.

    Args:
        data: Raw mapping as read from TOML
        seed: Overrides [sim].seed when given
        scenario: Name of the bundled scenario, recorded for headers

    Raises:
        ConfigError: On unknown sections or keys and on invalid values
    """
    data = json.loads(json.dumps(data))
    unknown = sorted(set(data) - set(SECTIONS) - {"model"})
    if unknown:
        raise ConfigError(f"Unknown config section(s): {', '.join(unknown)}")
    if seed is not None:
        if not 0 <= int(seed) < 2 ** 64:
            raise ConfigError(f"--seed must be a 64-bit unsigned integer, got {seed}")
        data.setdefault("sim", {})["seed"] = int(seed)

    parsed: Dict[str, Any] = {
        name: _parse_section(name, cls, data[name]) if name in data else None
        for name, cls in SECTIONS.items()
    }
    if parsed["verify"] is not None:
        bad = sorted(set(parsed["verify"].checks) - set(VERIFY_CHECKS))
        if bad:
            raise ConfigError(f"Unknown verification check(s): {', '.join(bad)}")
    if parsed["sim"] is not None:
        try:
            parsed["sim"].to_sim_config()
        except ValueError as e:
            raise ConfigError(f"Invalid [sim] section: {str(e)}")

    return RunConfig(
        model=parse_model(data["model"]) if "model" in data else None,
        grid=parsed["grid"],
        sim=parsed["sim"],
        bounds=parsed["bounds"],
        verify=parsed["verify"],
        output=parsed["output"] or OutputSection(),
        config_hash=config_hash(data),
        scenario=scenario,
        model_table=dict(data.get("model", {})),
    )


def load_config(
    path: Optional[str] = None,
    scenario: Optional[str] = None,
    seed: Optional[int] = None,
) -> RunConfig:
    """
    Load a run config from a TOML file or a bundled scenario.

    Raises:
        ConfigError: If neither or both sources are given, the file cannot
            be read, or parsing fails
    """
    if (path is None) == (scenario is None):
        raise ConfigError("Give exactly one of --config or --scenario")
    if scenario is not None:
        if scenario not in SCENARIOS:
            raise ConfigError(f"Unknown scenario '{scenario}'; choose from {sorted(SCENARIOS)}")
        return parse_config(SCENARIOS[scenario], seed=seed, scenario=scenario)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Malformed TOML in {path}: {str(e)}")
    return parse_config(data, seed=seed)
