"""Sectioned ``key = value`` configuration <-> :class:`Scenario`.

Sections: ``[soil] [mesh] [time] [bc] [solver] [output]``. ``#`` starts a
comment. Numeric values accept constant expressions (``5/3``); data entries
in ``[bc]`` are expressions over ``x, z, t, u`` with ``ustar`` and ``pi``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .constitutive import SoilParams
from .expr import Expression, ExpressionError, constant
from .lsolver import LschemeConfig
from .timestepper import MeshSpec, Scenario


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class OutputOptions:
    fields: bool = False
    field_every: int = 1


_SOIL = {"b", "c", "a", "m", "h_cap", "K_s", "C_scale", "phi_porosity", "model", "linear_K", "n_table"}
_MESH = {f.name for f in fields(MeshSpec)}
_TIME = {"T", "N"}
_BC_DATA = {"u0", "source"}
_BC_TAGS = {"bottom", "top", "left", "right"}
_SOLVER = {"L", "atol", "rtol", "max_iters", "lin_tol", "lin_max_iters", "epsilon", "physical_bounds"}
_OUTPUT = {"fields", "field_every"}
SECTIONS = {"soil": _SOIL, "mesh": _MESH, "time": _TIME, "bc": _BC_DATA | _BC_TAGS,
            "solver": _SOLVER, "output": _OUTPUT}
_INT_KEYS = {"n_table", "dim", "n_cells", "nx", "ny", "N", "max_iters", "lin_max_iters", "field_every"}
_BOOL_KEYS = {"physical_bounds", "fields"}


def read_sections(text: str) -> dict:
    """``{section: {key: (value, line)}}``; rejects unknown sections/keys and duplicates."""
    out: dict = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            if section in out:
                raise ConfigError(f"duplicate section [{section}]", lineno)
            out[section] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SECTIONS[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        if key in out[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", lineno)
        out[section][key] = (value, lineno)
    return out


def _convert(key, value, line):
    try:
        if key in _BOOL_KEYS:
            low = value.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"expected a boolean, got {value!r}")
        if key in _INT_KEYS:
            num = constant(value)
            if num != int(num):
                raise ValueError(f"expected an integer, got {value!r}")
            return int(num)
        return constant(value)
    except (ValueError, ExpressionError) as exc:
        raise ConfigError(f"{key}: {exc}", line) from None


def _typed(section: dict, skip=()):
    return {k: _convert(k, v, line) for k, (v, line) in section.items() if k not in skip}


def _first_line(section: dict):
    return min((line for _, line in section.values()), default=None)


def parse_config(text: str, require_time: bool = True) -> tuple[Scenario, OutputOptions]:
    """Parse and validate; every error carries the offending line number."""
    sec = read_sections(text)
    soil_sec = sec.get("soil", {})
    model = soil_sec.get("model", ("vgm", None))[0]
    if model not in ("vgm", "linear"):
        raise ConfigError("model must be 'vgm' or 'linear'", soil_sec["model"][1])
    soil_vals = _typed(soil_sec, skip={"model"})
    linear_K = soil_vals.pop("linear_K", 1.0)
    n_table = soil_vals.pop("n_table", 2048)
    soil = None
    if model == "vgm" or soil_vals:
        missing = [k for k in ("b", "c", "a", "m") if k not in soil_vals]
        if missing:
            raise ConfigError(f"[soil] is missing required key(s): {', '.join(missing)}")
        try:
            soil = SoilParams(**soil_vals)
        except ValueError as exc:
            msg = str(exc)
            bad = "a" if msg.startswith("removability") else next(
                (k for k in soil_sec if msg.startswith(k + " ")), None)
            line = soil_sec[bad][1] if bad else _first_line(soil_sec)
            raise ConfigError(str(exc), line) from None

    mesh_sec = sec.get("mesh", {})
    mesh_vals = _typed(mesh_sec)
    try:
        mesh = MeshSpec(**mesh_vals)
    except ValueError as exc:
        raise ConfigError(str(exc), _first_line(mesh_sec)) from None

    time_sec = sec.get("time", {})
    tvals = _typed(time_sec)
    if require_time:
        missing = [k for k in ("T", "N") if k not in tvals]
        if missing:
            raise ConfigError(f"[time] is missing required key(s): {', '.join(missing)}")

    bc_sec = sec.get("bc", {})
    consts = {"ustar": 1.0}
    for key, (value, line) in bc_sec.items():
        try:
            Expression(value, consts)
        except ExpressionError as exc:
            raise ConfigError(f"{key}: {exc}", line) from None
    extra = [k for k in bc_sec if k in _BC_TAGS and k not in mesh.tags]
    if extra:
        raise ConfigError(f"boundary tag {extra[0]!r} does not exist on a {mesh.dim}D mesh", bc_sec[extra[0]][1])
    if require_time:
        missing = [t for t in mesh.tags if t not in bc_sec]
        if missing:
            raise ConfigError(f"[bc] is missing boundary data for: {', '.join(missing)}")
    bc = {k: v for k, (v, _) in bc_sec.items() if k in _BC_TAGS}

    solver_sec = sec.get("solver", {})
    L_raw = solver_sec.get("L")
    svals = _typed(solver_sec, skip={"L"})
    epsilon = svals.pop("epsilon", 0.0)
    physical = svals.pop("physical_bounds", True)
    L = None
    if L_raw is not None and L_raw[0].lower() != "auto":
        L = _convert("L", *L_raw)
    try:
        solver = LschemeConfig(L=L, **svals)
    except ValueError as exc:
        raise ConfigError(str(exc), _first_line(solver_sec)) from None

    try:
        scenario = Scenario(
            soil=soil, mesh=mesh, T=tvals.get("T", 1.0), N=tvals.get("N", 1),
            u0=bc_sec.get("u0", ("0", 0))[0], bc=bc, source=bc_sec.get("source", ("0", 0))[0],
            epsilon=epsilon, solver=solver, model=model, linear_K=linear_K,
            physical_bounds=physical, n_table=n_table,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), _first_line(time_sec)) from None
    out = OutputOptions(**_typed(sec.get("output", {})))
    return scenario, out


def format_config(scenario: Scenario, output: OutputOptions | None = None) -> str:
    """Inverse of :func:`parse_config` (floats written with ``repr``)."""
    lines = ["[soil]", f"model = {scenario.model}", f"linear_K = {scenario.linear_K!r}",
             f"n_table = {scenario.n_table}"]
    if scenario.soil is not None:
        lines += [f"{f.name} = {getattr(scenario.soil, f.name)!r}" for f in fields(SoilParams)]
    lines += ["", "[mesh]"] + [f"{f.name} = {getattr(scenario.mesh, f.name)!r}" for f in fields(MeshSpec)]
    lines += ["", "[time]", f"T = {scenario.T!r}", f"N = {scenario.N}"]
    lines += ["", "[bc]", f"u0 = {scenario.u0}", f"source = {scenario.source}"]
    lines += [f"{tag} = {expr}" for tag, expr in scenario.bc]
    s = scenario.solver
    lines += ["", "[solver]", f"L = {'auto' if s.L is None else repr(s.L)}", f"atol = {s.atol!r}",
              f"rtol = {s.rtol!r}", f"max_iters = {s.max_iters}", f"lin_tol = {s.lin_tol!r}",
              f"lin_max_iters = {s.lin_max_iters}", f"epsilon = {scenario.epsilon!r}",
              f"physical_bounds = {str(scenario.physical_bounds).lower()}"]
    if output is not None:
        lines += ["", "[output]", f"fields = {str(output.fields).lower()}", f"field_every = {output.field_every}"]
    return "\n".join(lines) + "\n"


DEFAULT_CONFIG = """\
# 1D infiltration into a dry column, saturated at the top
[soil]
b = 3/5
c = 5/3
a = 5/3
m = 0.6
K_s = 1
C_scale = 1
phi_porosity = 1

[mesh]
dim = 1
n_cells = 100

[time]
T = 0.25
N = 50

[bc]
u0 = 0
top = ustar
bottom = 0

[solver]
L = auto
"""
