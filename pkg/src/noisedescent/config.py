"""Config-file ingestion: a small INI-style grammar, schema-validated.

Grammar (documented in README and configs/default.ini):

- ``[section]`` headers group keys; ``key = value`` lines assign them.
- ``#`` starts a comment (full-line or trailing); blank lines ignored.
- Angles accept a bare number (radians) or an explicit ``deg``/``rad``
  suffix, e.g. ``gamma_min = -8 deg``.
- Observer lists are semicolon-separated coordinate pairs,
  e.g. ``observers = 0,0; 20000,2500``.

Unknown sections or keys are rejected with the offending line number.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .flight_dynamics import AircraftModel, Atmosphere
from .noise import EngineNoiseParams, Observer
from .nlp_solver import SolverOptions
from .scenarios import PATH_COMPONENTS, PathBounds, Scenario, VARIANTS

_DEG = math.pi / 180.0


def _parse_float(text: str, key: str, line: int) -> float:
    t = text.strip().lower()
    try:
        if t in ("inf", "+inf", "infinity"):
            return math.inf
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}", key=key, line=line) from None


def _parse_angle(text: str, key: str, line: int) -> float:
    parts = text.split()
    if len(parts) == 2 and parts[1] in ("deg", "rad"):
        value = _parse_float(parts[0], key, line)
        return value * _DEG if parts[1] == "deg" else value
    if len(parts) == 1:
        return _parse_float(parts[0], key, line)
    raise ConfigError(f"expected '<number> [deg|rad]', got {text!r}", key=key, line=line)


def _parse_int(text: str, key: str, line: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}", key=key, line=line) from None


def _parse_pairs(text: str, key: str, line: int) -> list[tuple[float, float]]:
    pairs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        coords = [c for c in chunk.split(",") if c.strip()]
        if len(coords) != 2:
            raise ConfigError(f"expected 'x,y' pairs separated by ';', got {chunk!r}",
                              key=key, line=line)
        pairs.append((_parse_float(coords[0], key, line),
                      _parse_float(coords[1], key, line)))
    if not pairs:
        raise ConfigError("expected at least one coordinate pair", key=key, line=line)
    return pairs


def _parse_choice(options):
    def parse(text: str, key: str, line: int) -> str:
        value = text.strip()
        if value not in options:
            raise ConfigError(f"must be one of {options}, got {value!r}", key=key, line=line)
        return value
    return parse


def _parse_bool(text: str, key: str, line: int) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}", key=key, line=line)


# section -> key -> parser
_SCHEMA = {
    "scenario": {
        "x0": _parse_float, "y0": _parse_float, "h0": _parse_float,
        "V0": _parse_float, "xf": _parse_float, "yf": _parse_float,
        "hf": _parse_float, "tf": _parse_float, "N": _parse_int,
        "variant": _parse_choice(VARIANTS),
        "fuel_cap_factor": _parse_float,
        "stall_speed": _parse_float,
        "observers": _parse_pairs,
        "n_starts": _parse_int,
        "seed": _parse_int,
        "directivity": _parse_choice(("velocity_vector", "track_axis")),
        "track_axis": _parse_pairs,
    },
    "aircraft": {
        "mass": _parse_float, "S": _parse_float, "Cz_alpha": _parse_float,
        "Cx0": _parse_float, "k_i": _parse_float, "T0": _parse_float,
        "C_SR": _parse_float, "g": _parse_float, "rho0": _parse_float,
    },
    "engine_noise": {
        "v1": _parse_float, "v2": _parse_float, "s1": _parse_float,
        "s2": _parse_float, "tau1": _parse_float, "tau2": _parse_float,
        "rho1": _parse_float, "d": _parse_float, "me": _parse_float,
        "temp_term_coeff": _parse_float,
    },
    "atmosphere": {
        "rho_isa": _parse_float, "c_isa": _parse_float,
        "lapse": _parse_float, "exponent": _parse_float,
    },
    "bounds": {
        "gamma_min": _parse_angle, "gamma_max": _parse_angle,
        "V_min": _parse_float, "V_max": _parse_float,
        "chi_min": _parse_angle, "chi_max": _parse_angle,
        "alpha_min": _parse_angle, "alpha_max": _parse_angle,
        "delta_x_min": _parse_float, "delta_x_max": _parse_float,
        "mu_min": _parse_angle, "mu_max": _parse_angle,
    },
    "solver": {
        "max_outer": _parse_int,
        "inner_maxiter": _parse_int,
        "max_inner_total": _parse_int,
        "feasibility_tol": _parse_float,
        "optimality_tol": _parse_float,
        "initial_penalty": _parse_float,
        "penalty_factor": _parse_float,
        "penalty_max": _parse_float,
        "lbfgs_memory": _parse_int,
        "max_line_search": _parse_int,
        "verbose": _parse_bool,
    },
}


def read_sections(path: str | Path) -> dict[str, dict[str, tuple[str, int]]]:
    """Raw (value, line) table per section, schema-checked for unknown names."""
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SCHEMA:
                raise ConfigError(f"unknown section [{name}]", key=name, line=lineno)
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        if current is None:
            raise ConfigError("assignment before any [section] header", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        section_name = next(n for n, s in sections.items() if s is current)
        if key not in _SCHEMA[section_name]:
            raise ConfigError(f"unknown key in [{section_name}]", key=key, line=lineno)
        if key in current:
            raise ConfigError(f"duplicate key in [{section_name}]", key=key, line=lineno)
        current[key] = (value, lineno)
    return sections


def _typed(sections, name: str) -> dict:
    out = {}
    for key, (value, lineno) in sections.get(name, {}).items():
        out[key] = _SCHEMA[name][key](value, key, lineno)
    return out


def parse_config(path: str | Path) -> tuple[Scenario, SolverOptions]:
    """Read and validate a config file into (Scenario, SolverOptions)."""
    sections = read_sections(path)

    aircraft = AircraftModel(**_typed(sections, "aircraft"))
    atmosphere = Atmosphere(**_typed(sections, "atmosphere"))

    sc = _typed(sections, "scenario")
    engine_kwargs = _typed(sections, "engine_noise")
    if "directivity" in sc:
        engine_kwargs["directivity_mode"] = sc.pop("directivity")
    track = sc.pop("track_axis", None)
    if engine_kwargs.get("directivity_mode") == "track_axis":
        if track is None:
            # default track axis: the straight route direction
            dx = sc.get("xf", 60000.0) - sc.get("x0", 0.0)
            dy = sc.get("yf", 5000.0) - sc.get("y0", 0.0)
            track = [(dx, dy)]
        engine_kwargs["track_axis"] = tuple(track[0])
    elif track is not None:
        raise ConfigError("track_axis is only meaningful with directivity = track_axis",
                          key="track_axis")
    engine = EngineNoiseParams(**engine_kwargs)

    b = _typed(sections, "bounds")
    defaults = PathBounds.default(sc.get("stall_speed", 70.0))
    lower = defaults.lower.copy()
    upper = defaults.upper.copy()
    for i, comp in enumerate(PATH_COMPONENTS):
        if f"{comp}_min" in b:
            lower[i] = b[f"{comp}_min"]
        if f"{comp}_max" in b:
            upper[i] = b[f"{comp}_max"]
    bounds = PathBounds(lower=lower, upper=upper)

    variant = sc.pop("variant", "noise")
    observers = tuple(Observer(x, y) for x, y in sc.pop("observers", [(0.0, 0.0)]))
    scenario = Scenario(
        x0=sc.pop("x0", 0.0), y0=sc.pop("y0", 0.0), h0=sc.pop("h0", 3500.0),
        V0=sc.pop("V0", 160.0),
        xf=sc.pop("xf", 60000.0), yf=sc.pop("yf", 5000.0), hf=sc.pop("hf", 500.0),
        tf=sc.pop("tf", 600.0), n_intervals=sc.pop("N", 100),
        bounds=bounds, observers=observers, variant=variant,
        fuel_cap_factor=sc.pop("fuel_cap_factor", 1.1),
        stall_speed=sc.pop("stall_speed", 70.0),
        aircraft=aircraft, engine=engine, atmosphere=atmosphere,
        n_starts=sc.pop("n_starts", 1), seed=sc.pop("seed", 0),
    )
    scenario.validate()
    solver = SolverOptions(**_typed(sections, "solver"))
    return scenario, solver
