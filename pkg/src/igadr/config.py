"""Run configuration: a flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored.  Values are numbers, booleans
(``true``/``false``), ``none``, bare words, or comma-separated tuples.
Problem parameters (``gamma``, ``with_advection``, ...) are accepted for the
problem that declares them; geometry parameters (``bounds``, ``center``,
``radius``, ``r_in``, ``r_out``) go with ``geometry``.  Anything else is an
error.  Missing entries take the problem's defaults.
"""

import inspect
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .problems import PROBLEMS, get_problem
from .stepping import BC_KINDS

GEOMETRIES = ("rectangle", "disk", "annulus")
GEOMETRY_KEYS = {
    "rectangle": ("bounds",),
    "disk": ("center", "radius"),
    "annulus": ("center", "r_in", "r_out"),
}
MAX_DEGREE = 8


class ConfigError(ValueError):
    """Bad configuration; ``line`` and ``key`` locate the problem when known."""

    def __init__(self, message, line=None, key=None):
        self.line, self.key = line, key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class RunConfig:
    problem: str = "exact-system"
    params: dict = field(default_factory=dict)
    geometry: Optional[str] = None
    geometry_params: dict = field(default_factory=dict)
    degree: int = 4
    nx: int = 32
    ny: Optional[int] = None
    dt: float = 0.02
    t_end: float = 1.0
    n_substeps: Optional[int] = None
    quad_points: Optional[int] = None
    bc: str = "neumann-zero"
    out_dir: str = "out"
    snapshot_every: int = 0
    sample_n: Optional[int] = None

    def __post_init__(self):
        if self.ny is None:
            object.__setattr__(self, "ny", self.nx)
        if self.sample_n is None:
            object.__setattr__(self, "sample_n", 4 * max(self.nx, self.ny) + 1)
        validate(self)

    def build_problem(self):
        prob = get_problem(self.problem, **self.params)
        if self.geometry is not None:
            prob = prob.with_params(geometry=(self.geometry, dict(self.geometry_params)))
        return prob

    def replace(self, **changes):
        return replace(self, **changes)


# plain scalar keys and their types, in serialisation order
_SCALARS = {
    "degree": int,
    "nx": int,
    "ny": int,
    "dt": float,
    "t_end": float,
    "n_substeps": int,
    "quad_points": int,
    "bc": str,
    "out_dir": str,
    "snapshot_every": int,
    "sample_n": int,
}
_OPTIONAL = {"n_substeps", "quad_points", "ny", "sample_n"}


def validate(cfg):
    if cfg.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {cfg.problem!r}; choose from {sorted(PROBLEMS)}",
                          key="problem")
    if not 1 <= cfg.degree <= MAX_DEGREE:
        raise ConfigError(f"must be between 1 and {MAX_DEGREE}", key="degree")
    for key in ("nx", "ny"):
        if getattr(cfg, key) < 1:
            raise ConfigError("must be at least 1", key=key)
    if not (cfg.dt > 0 and math.isfinite(cfg.dt)):
        raise ConfigError("must be positive", key="dt")
    if not (cfg.t_end >= 0 and math.isfinite(cfg.t_end)):
        raise ConfigError("must be non-negative", key="t_end")
    if cfg.n_substeps is not None and cfg.n_substeps < 1:
        raise ConfigError("must be at least 1", key="n_substeps")
    if cfg.quad_points is not None and cfg.quad_points < 1:
        raise ConfigError("must be at least 1", key="quad_points")
    if cfg.bc not in BC_KINDS:
        raise ConfigError(f"must be one of {BC_KINDS}", key="bc")
    if cfg.snapshot_every < 0:
        raise ConfigError("must be non-negative", key="snapshot_every")
    if cfg.sample_n < 2:
        raise ConfigError("must be at least 2", key="sample_n")
    if cfg.geometry is not None and cfg.geometry not in GEOMETRIES:
        raise ConfigError(f"must be one of {GEOMETRIES}", key="geometry")
    allowed = problem_parameters(cfg.problem)
    for key in cfg.params:
        if key not in allowed:
            raise ConfigError(f"not a parameter of problem {cfg.problem!r}", key=key)
    geo_allowed = GEOMETRY_KEYS.get(cfg.geometry, ())
    for key in cfg.geometry_params:
        if key not in geo_allowed:
            raise ConfigError(f"not a parameter of geometry {cfg.geometry!r}", key=key)


def problem_parameters(name):
    return tuple(inspect.signature(PROBLEMS[name]).parameters)


def _parse_value(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes"):
        return True
    if low in ("false", "no"):
        return False
    if low == "none":
        return None
    if "," in text:
        return tuple(_parse_value(part) for part in text.split(","))
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _coerce(key, value, kind, line=None):
    if value is None:
        if key in _OPTIONAL:
            return None
        raise ConfigError("may not be none", line, key)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", line, key)
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", line, key)
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a word, got {value!r}", line, key)
    return value


def parse_config(text, source="<config>"):
    """Parse config text into a :class:`RunConfig`."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value' in {source}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"empty key or value in {source}", lineno)
        if key in raw:
            raise ConfigError("given twice", lineno, key)
        raw[key] = (_parse_value(value), lineno)
    return from_mapping({k: v for k, (v, _) in raw.items()}, {k: n for k, (_, n) in raw.items()})


def from_mapping(values, lines=None):
    """Build a config from parsed values, filling problem defaults."""
    lines = lines or {}
    values = dict(values)
    problem = values.pop("problem", "exact-system")
    if problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {problem!r}; choose from {sorted(PROBLEMS)}",
                          lines.get("problem"), "problem")
    geometry = values.pop("geometry", None)
    if geometry is not None and geometry not in GEOMETRIES:
        raise ConfigError(f"must be one of {GEOMETRIES}", lines.get("geometry"), "geometry")
    pnames = problem_parameters(problem)
    defaults = PROBLEMS[problem]().defaults
    kwargs = {k: v for k, v in defaults.items() if k in _SCALARS}
    params, geo_params = {}, {}
    for key, value in values.items():
        line = lines.get(key)
        if key in _SCALARS:
            kwargs[key] = _coerce(key, value, _SCALARS[key], line)
        elif key in pnames:
            params[key] = value
        elif geometry is not None and key in GEOMETRY_KEYS[geometry]:
            geo_params[key] = value
        else:
            raise ConfigError("unknown key", line, key)
    try:
        return RunConfig(problem=problem, params=params, geometry=geometry,
                         geometry_params=geo_params, **kwargs)
    except ConfigError as exc:
        if exc.line is None and exc.key in lines:
            raise ConfigError(str(exc).split(": ", 1)[-1], lines[exc.key], exc.key) from None
        raise


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    return str(value)


def serialize(cfg):
    """Text that :func:`parse_config` maps back to ``cfg``."""
    out = [f"problem = {cfg.problem}"]
    if cfg.geometry is not None:
        out.append(f"geometry = {cfg.geometry}")
    for key in (f.name for f in fields(cfg)):
        if key in _SCALARS:
            out.append(f"{key} = {_format(getattr(cfg, key))}")
    for key, value in sorted(cfg.params.items()):
        out.append(f"{key} = {_format(value)}")
    for key, value in sorted(cfg.geometry_params.items()):
        out.append(f"{key} = {_format(value)}")
    return "\n".join(out) + "\n"


def describe_keys():
    """Help text listing every key and its default."""
    base = RunConfig()
    rows = ["problem        one of " + ", ".join(sorted(PROBLEMS)),
            "geometry       override: " + ", ".join(GEOMETRIES)]
    for key in _SCALARS:
        default = getattr(base, key)
        if key == "ny":
            default = "nx"
        elif key == "sample_n":
            default = "4*max(nx, ny)+1"
        elif key == "n_substeps":
            default = "auto"
        elif key == "quad_points":
            default = "degree+1"
        rows.append(f"{key:<14} default {default}")
    rows.append("problem parameters and geometry parameters as documented per problem;")
    rows.append("degree, nx, dt, t_end and bc default to the problem's own values.")
    return "\n".join(rows)
