import json
import math
import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .model import ProblemSpec

Mode = Literal["coupled", "wave-only", "fd-only"]
CheckLevel = Literal["fast", "full"]


class GridConfig(BaseModel):
    """Resolutions of the characteristic lattice, the physical lattice and the FD oracle"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    # Lattice cells across X-tilde; h_char = X-tilde / char_resolution
    char_resolution: int = 256
    # Physical nodes in x including both ends
    n_phys: int = 65
    # Output step; defaults to the x spacing π/(n_phys − 1)
    dt_phys: Optional[float] = None

    # FD oracle
    n_fd: int = 257
    dt_fd: Optional[float] = None

    # Samples used to tabulate the initial presets
    n_initial: int = 2049
    # Midpoint nodes of the Duhamel s-integral
    duhamel_s_points: int = 16

    @field_validator("char_resolution", "n_fd")
    def check_resolution(cls, v):
        """At least 4 cells"""
        if v < 4:
            raise ValueError("resolution must be at least 4")
        return v

    @field_validator("n_phys", "n_initial")
    def check_odd_nodes(cls, v):
        """Simpson quadrature needs an odd node count of at least 5"""
        if v < 5 or v % 2 == 0:
            raise ValueError("node count must be odd and at least 5")
        return v

    @field_validator("dt_phys", "dt_fd")
    def check_positive_step(cls, v):
        if v is not None and not v > 0:
            raise ValueError("time step must be positive")
        return v

    @property
    def output_step(self) -> float:
        return self.dt_phys if self.dt_phys is not None else math.pi / (self.n_phys - 1)


class FixedPointConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    # Initial window length
    delta: float = 0.1
    # Sup-norm convergence tolerance on J
    tol: float = 1e-8
    max_iter: int = 40
    max_halvings: int = 8
    # Optional bound on sup|J − J_seed| inside a window
    K_guard: Optional[float] = None

    @field_validator("delta", "tol")
    def check_positive(cls, v):
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("max_iter")
    def check_iterations(cls, v):
        if v < 1:
            raise ValueError("max_iter must be at least 1")
        return v


class DiagnosticsConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    # Energy slack max(slack_rel·E(0), slack_abs)
    slack_rel: float = 1e-6
    slack_abs: float = 1e-8
    test_family_size: int = 3
    cusp_tol: float = 1e-6


class RunConfig(BaseModel):
    """Run configuration schema for poiseuille-lc"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    problem: ProblemSpec = Field(default_factory=ProblemSpec)
    horizon: float = 1.0
    grids: GridConfig = Field(default_factory=GridConfig)
    fixed_point: FixedPointConfig = Field(default_factory=FixedPointConfig)
    diagnostics: DiagnosticsConfig = Field(default_factory=DiagnosticsConfig)

    mode: Mode = "coupled"
    check_level: CheckLevel = "fast"

    # Artifact directory
    output_dir: Optional[str] = None
    seed_label: str = "default"

    @field_validator("horizon")
    def check_horizon(cls, v):
        if not (v > 0 and math.isfinite(v)):
            raise ValueError("horizon must be positive and finite")
        return v

    @model_validator(mode="after")
    def check_output_step(self):
        """The output step must fit inside the horizon"""
        if self.grids.output_step > self.horizon * (1 + 1e-12):
            raise ValueError("output step exceeds the horizon")
        return self


def validate_run_config(config: Dict[str, Any]) -> RunConfig:
    """
    Validate a raw configuration dictionary

    Creates the output directory if one is named.

    Raises:
        ConfigurationError: If validation fails
    """
    try:
        config_model = RunConfig(**config)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {e.errors()[0]['loc']}: {e.errors()[0]['msg']}", module="config") from e

    if config_model.output_dir and not os.path.exists(config_model.output_dir):
        os.makedirs(config_model.output_dir, exist_ok=True)
    return config_model


def load_run_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Read a JSON configuration file and validate it

    Args:
        path: Configuration file
        overrides: Keys replacing the file's values (CLI flags); dotted keys such as
            "grids.n_phys" address nested entries, and None values are skipped

    Raises:
        ConfigurationError: If the file cannot be read or does not validate
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read config {path}: {e}", module="config") from e
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must hold a JSON object", module="config")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw = apply_override(raw, key, value)
    return validate_run_config(raw)


def apply_override(raw: Dict[str, Any], dotted: str, value: Any) -> Dict[str, Any]:
    """Set a nested key given as "a.b.c" in a copy of raw"""
    out = json.loads(json.dumps(raw))
    node = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return out
