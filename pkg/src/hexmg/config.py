"""Flat ``key = value`` problem configuration.

One assignment per line; ``#`` starts a comment. Every key has a default and
unknown keys are rejected with the offending line number.
"""

from dataclasses import dataclass, field, fields, replace
import math

from .errors import ConfigError
from .material import QFUNCTION_VARIANTS, NeoHookean, lame_from_young_poisson
from .mesh import FACES, BoundaryCondition, build_box_mesh
from .nonlinear import LINE_SEARCHES, SOLVERS, NewtonConfig


def _floats(n):
    def parse(s):
        vals = [float(v) for v in s.replace(",", " ").split()]
        if len(vals) != n:
            raise ValueError(f"expected {n} numbers")
        return tuple(vals)
    return parse


def _ints(s):
    return tuple(int(v) for v in s.replace(",", " ").split())


def _int3(s):
    v = _ints(s)
    if len(v) != 3:
        raise ValueError("expected 3 integers")
    return v


def _auto_int(s):
    return None if s.strip().lower() in ("auto", "none", "") else int(s)


def _auto_float(s):
    return None if s.strip().lower() in ("auto", "none", "") else float(s)


def _choice(options):
    def parse(s):
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


def _faces(s):
    out = tuple(v for v in s.replace(",", " ").split() if v.lower() != "none")
    for f in out:
        if f not in FACES:
            raise ValueError(f"unknown face {f!r}")
    return out


def _face_or_none(s):
    s = s.strip()
    if s.lower() == "none":
        return None
    if s not in FACES:
        raise ValueError(f"unknown face {s!r}")
    return s


def _schedule(s):
    return None if s.strip().lower() == "auto" else _ints(s)


def _cases(s):
    out = []
    for item in s.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 3:
            raise ValueError(f"case {item!r} must be id:order:refinement")
        out.append((parts[0].strip(), int(parts[1]), int(parts[2])))
    return tuple(out)


def _case(s):
    c = _cases(s)
    if len(c) > 1:
        raise ValueError("expected a single id:order:refinement")
    return c[0] if c else None


def _words(s):
    return tuple(v for v in s.replace(",", " ").split())


def _path(s):
    s = s.strip()
    return None if s.lower() in ("none", "") else s


def _bool(s):
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _opt(parser, default, doc=""):
    return field(default=default, metadata={"parse": parser, "doc": doc})


@dataclass(frozen=True)
class ProblemConfig:
    # geometry and discretization
    extents: tuple = _opt(_floats(3), (4.0, 1.0, 1.0), "box lengths")
    counts: tuple = _opt(_int3, (4, 1, 1), "elements per direction before refinement")
    refinement: int = _opt(int, 1, "multiplier applied to counts")
    order: int = _opt(int, 2, "solution polynomial order")
    geometry_order: int = _opt(_auto_int, None, "geometry order (auto = solution order)")
    quadrature: int = _opt(_auto_int, None, "points per direction (auto = order + 1)")
    # material
    young: float = _opt(float, 1.0)
    poisson: float = _opt(float, 0.3)
    mu: float = _opt(_auto_float, None, "overrides young/poisson when set with lambda")
    lam: float = _opt(_auto_float, None)
    variant: str = _opt(_choice(QFUNCTION_VARIANTS), "current")
    # boundary conditions
    fixed_faces: tuple = _opt(_faces, ("-x",))
    traction_face: str = _opt(_face_or_none, "+x")
    traction: tuple = _opt(_floats(3), (0.0, 0.0, 0.0))
    displacement_face: str = _opt(_face_or_none, None)
    displacement: tuple = _opt(_floats(3), (0.0, 0.0, 0.0))
    body_force: tuple = _opt(_floats(3), (0.0, 0.0, 0.0))
    # solver
    solver: str = _opt(_choice(SOLVERS), "newton-cg")
    schedule: tuple = _opt(_schedule, None)
    load_steps: int = _opt(int, 1)
    newton_max_it: int = _opt(int, 50)
    newton_rtol: float = _opt(float, 1e-8)
    newton_atol: float = _opt(float, 1e-10)
    linear_rtol: float = _opt(float, 1e-3)
    cg_max_it: int = _opt(int, 500)
    line_search: str = _opt(_choice(LINE_SEARCHES), "critical-point")
    lbfgs_memory: int = _opt(int, 5)
    lbfgs_refresh: int = _opt(int, 1)
    # outputs and execution
    case_id: str = _opt(str.strip, "case")
    vtk: str = _opt(_path, "solution.vtk")
    threads: int = _opt(int, 1)
    deterministic: bool = _opt(_bool, False)
    # accuracy study
    cases: tuple = _opt(_cases, ())
    reference: tuple = _opt(_case, None)
    target_error: float = _opt(float, 0.01)
    # performance study
    orders: tuple = _opt(_ints, (1, 2, 3))
    dof_ladder: tuple = _opt(_ints, (6, 12), "lattice intervals per base element; refinement = entry / order")
    representations: tuple = _opt(_words, ("matrix-free", "assembled"))
    repeats: int = _opt(int, 20)
    warmup: int = _opt(int, 2)
    max_assembled_bytes: float = _opt(float, 2.0e9)

    def __post_init__(self):
        checks = [
            (self.order >= 1, "order", "must be >= 1"),
            (self.refinement >= 1, "refinement", "must be >= 1"),
            (all(c >= 1 for c in self.counts), "counts", "must be >= 1"),
            (all(e > 0 for e in self.extents), "extents", "must be positive"),
            (self.load_steps >= 1, "load_steps", "must be >= 1"),
            (self.threads >= 1, "threads", "must be >= 1"),
            (self.newton_rtol > 0 and self.newton_atol > 0, "newton_rtol", "tolerances must be positive"),
            (self.linear_rtol > 0, "linear_rtol", "must be positive"),
            (self.repeats >= 1, "repeats", "must be >= 1"),
            ((self.mu is None) == (self.lam is None), "mu", "set both mu and lam or neither"),
            (bool(self.fixed_faces) or self.displacement_face is not None, "fixed_faces",
             "no Dirichlet face: rigid-body modes make the problem singular"),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg}", key=key)
        for r in self.representations:
            if r not in ("matrix-free", "assembled"):
                raise ConfigError(f"representations: unknown representation {r!r}", key="representations")

    # -- builders -----------------------------------------------------------------

    def material(self):
        if self.mu is not None:
            return NeoHookean(mu=self.mu, lam=self.lam)
        return lame_from_young_poisson(self.young, self.poisson)

    def boundary_conditions(self):
        bcs = [BoundaryCondition(f, "dirichlet", (0.0, 0.0, 0.0)) for f in self.fixed_faces]
        if self.displacement_face is not None:
            bcs.append(BoundaryCondition(self.displacement_face, "dirichlet", self.displacement))
        if self.traction_face is not None and any(self.traction):
            bcs.append(BoundaryCondition(self.traction_face, "traction", self.traction))
        return bcs

    def mesh(self, order=None, refinement=None):
        r = self.refinement if refinement is None else refinement
        p = self.order if order is None else order
        return build_box_mesh(self.extents, tuple(r * c for c in self.counts), p)

    def newton_config(self):
        return NewtonConfig(max_it=self.newton_max_it, rtol=self.newton_rtol, atol=self.newton_atol,
                            linear_rtol=self.linear_rtol, cg_max_it=self.cg_max_it,
                            line_search=self.line_search, load_steps=self.load_steps,
                            schedule=self.schedule, lbfgs_memory=self.lbfgs_memory,
                            lbfgs_refresh=self.lbfgs_refresh)

    def with_case(self, order, refinement):
        return replace(self, order=order, refinement=refinement, schedule=None)


CONFIG_KEYS = {f.name: f for f in fields(ProblemConfig)}
_ALIASES = {"lambda": "lam"}


def parse_config_text(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}",
                              line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}", key=key, line=lineno)
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}", key=key, line=lineno)
        try:
            values[key] = CONFIG_KEYS[key].metadata["parse"](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}",
                              key=key, line=lineno) from None
    try:
        return ProblemConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}", key=exc.key) from None


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text, source=str(path))


def format_config(cfg):
    """Render a config back to the flat text format."""
    lines = []
    for f in fields(ProblemConfig):
        v = getattr(cfg, f.name)
        if v is None:
            s = "auto" if f.name in ("geometry_order", "quadrature", "mu", "lam", "schedule") else "none"
        elif isinstance(v, bool):
            s = "true" if v else "false"
        elif f.name == "cases":
            s = ", ".join(f"{i}:{p}:{r}" for i, p, r in v)
        elif f.name == "reference":
            s = f"{v[0]}:{v[1]}:{v[2]}"
        elif isinstance(v, tuple):
            s = ", ".join(str(x) for x in v) if v else "none"
        elif isinstance(v, float) and math.isinf(v):
            s = "inf"
        else:
            s = str(v)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"
