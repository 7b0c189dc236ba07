"""
config.py — Defaults, environment and JSON run configuration.

Precedence
----------
  dataclass defaults  <  JSON file (--config)  <  command-line flags

Environment
-----------
  PBMIX_THREADS: worker threads for the numeric libraries (mirrors
                 --threads); read from the process environment or a
                 .env file in the working directory.

Usage
-----
    from src.config import RunConfig, load_config

    cfg = load_config("config.json")          # RunConfig
    cfg = cfg.merged({"levels": 5})           # flag overrides
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from src.errors import ConfigError

load_dotenv()

# ── Quadrature ────────────────────────────────────────────────────────────────
ASSEMBLY_DEGREE = 6      # bilinear forms with variable ε, κ, u_h
ERROR_DEGREE    = 12     # error norms
LOAD_DEGREE     = 12     # manufactured loads against hats / bubbles
LINE_POINTS     = 5      # Gauss points per facet or line sub-segment
SINGULAR_GRADING = 4.0    # s ↦ s^β grading of rules toward a singular line

# ── Solver ────────────────────────────────────────────────────────────────────
RESIDUAL_TOL    = 1e-10  # relative ‖Mx − b‖₂ / ‖b‖₂ contract
GEOMETRY_TOL    = 1e-12  # point location / segment clipping

# ── Studies ───────────────────────────────────────────────────────────────────
DEFAULT_LEVELS  = 7
REFERENCE_EXTRA = 2      # extra refinements for reference-solution studies
CASE_NAMES      = ("ex1-smooth", "ex1-rough", "ex2", "ex3-line", "constant")
COMMANDS        = ("mesh", "solve", "convergence", "selftest")
# ─────────────────────────────────────────────────────────────────────────────


def env_threads() -> Optional[int]:
    """Thread count from PBMIX_THREADS, or None when unset."""
    raw = os.getenv("PBMIX_THREADS")
    if raw is None or raw.strip() == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"PBMIX_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"PBMIX_THREADS must be >= 1, got {value}")
    return value


def default_threads() -> int:
    return env_threads() or os.cpu_count() or 1


@dataclass
class RunConfig:
    """
    One CLI invocation. Defaults: lowest order, regularised load,
    seven uniform levels.
    """
    command:         str = "convergence"
    case:            str = "ex1-smooth"
    levels:          Optional[int] = None      # None: the case default (7 for ex1/ex2)
    k:               int = 0
    use_q:           bool = True
    assembly_degree: int = ASSEMBLY_DEGREE
    error_degree:    int = ERROR_DEGREE
    load_degree:     int = LOAD_DEGREE
    mesh_path:       Optional[str] = None
    out:             Optional[str] = None
    nx:              int = 2
    level:           int = 1
    u0:              float = 0.25
    seed:            int = 0
    threads:         int = field(default_factory=default_threads)

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.case not in CASE_NAMES:
            raise ConfigError(f"unknown case {self.case!r}; choose from {', '.join(CASE_NAMES)}")
        if self.levels is not None and self.levels < 2 and self.command == "convergence":
            raise ConfigError("a convergence study needs at least 2 levels")
        if self.k < 0:
            raise ConfigError("polynomial degree k must be >= 0")
        if self.nx < 1:
            raise ConfigError("--nx must be >= 1")
        if self.level < 1:
            raise ConfigError("--level must be >= 1")
        if self.threads < 1:
            raise ConfigError("--threads must be >= 1")
        for name in ("assembly_degree", "error_degree", "load_degree"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2")
        return self

    def merged(self, overrides: Dict[str, Any]) -> "RunConfig":
        """New config with every non-None override applied."""
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **clean)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: Optional[str], base: Optional[RunConfig] = None) -> RunConfig:
    """Read a JSON object of RunConfig fields on top of `base` (or defaults)."""
    cfg = base or RunConfig()
    if path is None:
        return cfg
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg.merged(data)
