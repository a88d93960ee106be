"""Run configuration: INI files with section headers and key = value lines.

Lengths in ``[lengthscale]`` accept a ``cs`` suffix (``4cs`` means four cell
sizes). Boundary conditions are placed with coordinates given as fractions
of the mesh bounding box, so a configuration keeps its meaning when the mesh
is rescaled::

    [boundary]
    support.left = box 0 0 0 1 xy     # x0 y0 x1 y1 (fractions) and dofs
    load.tip = point 1 0 0 -3         # x y (fractions), fx fy
    output = point 1 0.5 x -1         # x y, direction, sign of D
    spring.in = point 0 0.5 x 0.1     # x y, direction, stiffness

Errors carry the file name and line number of the offending entry.
"""

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import fem, maskfield
from .hexgrid import build_grid
from .lengthscale import LengthScaleSpec


class ConfigError(ValueError):
    """Malformed configuration; the message starts with ``file:line:``."""


@dataclass(frozen=True)
class Length:
    """A length, either absolute or a multiple of the cell size."""

    value: float
    in_cs: bool = False

    def resolve(self, cs):
        return self.value * cs if self.in_cs else self.value

    def __str__(self):
        return f"{self.value:g}cs" if self.in_cs else f"{self.value:g}"


@dataclass(frozen=True)
class Support:
    box: tuple
    dofs: str


@dataclass(frozen=True)
class PointLoad:
    at: tuple
    force: tuple


@dataclass(frozen=True)
class OutputPort:
    at: tuple
    direction: str
    sign: float


@dataclass(frozen=True)
class Spring:
    at: tuple
    direction: str
    stiffness: float


@dataclass(frozen=True)
class RunConfig:
    n_cols: int
    n_rows: int
    cs: float
    supports: tuple
    loads: tuple
    name: str = "run"
    modulus: float = 1.0
    poisson: float = 0.3
    thickness: float = 1.0
    rho_min: float = 1e-3
    objective: str = fem.COMPLIANCE
    scale: float = 1.0
    output: OutputPort = None
    springs: tuple = ()
    polarity: str = maskfield.NEGATIVE
    n_masks_x: int = 20
    n_masks_y: int = 10
    alpha: float = 6.0
    eta: float = 3.0
    circular: bool = False
    max_axis: float = 10.0
    initial_axis: float = None
    positive_min_axis: float = 1e-2
    min_ls: Length = Length(4, True)
    max_ls: Length = Length(7, True)
    p: int = 1
    vf_init: float = 0.2
    vf_min: float = 0.1
    vf_max: float = 0.5
    tol: float = 1.0
    delta_eps: float = 10.0
    eps_int: float = None
    stage_budget: int = 100
    total_budget: int = 6000
    stage1_passes: int = 10
    refresh_every: int = None
    continuation: tuple = ()
    deletion_threshold: float = 1e-6
    outdir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.n_cols < 1 or self.n_rows < 1 or not self.cs > 0:
            raise ValueError("grid dimensions and cell size must be positive")
        if self.min_ls.resolve(self.cs) > self.max_ls.resolve(self.cs):
            raise ValueError("min_ls must not exceed max_ls")
        if self.objective not in (fem.COMPLIANCE, fem.MECHANISM):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.objective == fem.MECHANISM and self.output is None:
            raise ValueError("mechanism objective needs an output port")
        if self.refresh_every is not None and self.refresh_every < 2:
            raise ValueError("refresh_every must be at least 2")

    @property
    def min_ls_abs(self):
        return self.min_ls.resolve(self.cs)

    @property
    def max_ls_abs(self):
        return self.max_ls.resolve(self.cs)

    def scaled(self, factor):
        """Mesh and mask counts times ``factor``; ``cs`` divided by it."""
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        return dataclasses.replace(
            self,
            n_cols=max(1, int(round(self.n_cols * factor))),
            n_rows=max(1, int(round(self.n_rows * factor))),
            n_masks_x=max(1, int(round(self.n_masks_x * factor))),
            n_masks_y=max(1, int(round(self.n_masks_y * factor))),
            cs=self.cs / factor,
        )


# ------------------------------------------------------------------ parsing


_SCHEMA = {
    "run": {"name": str, "outdir": str, "seed": int},
    "grid": {"n_cols": int, "n_rows": int, "cs": float},
    "material": {"modulus": float, "poisson": float, "thickness": float, "rho_min": float},
    "objective": {"kind": str, "scale": float},
    "masks": {
        "polarity": str, "n_x": int, "n_y": int, "alpha": float, "eta": float,
        "circular": bool, "max_axis": float, "initial_axis": float, "positive_min_axis": float,
    },
    "lengthscale": {"min_ls": Length, "max_ls": Length, "p": int},
    "sls": {
        "vf_init": float, "vf_min": float, "vf_max": float, "tol": float, "delta_eps": float,
        "eps_int": float, "stage_budget": int, "total_budget": int, "stage1_passes": int,
        "refresh_every": int, "continuation": tuple, "deletion_threshold": float,
    },
    "boundary": None,  # free-form keys, parsed separately
}

_RENAME = {
    ("objective", "kind"): "objective",
    ("masks", "n_x"): "n_masks_x",
    ("masks", "n_y"): "n_masks_y",
}

_LENGTH = re.compile(r"^\s*([-+0-9.eE]+)\s*(cs)?\s*$")


def _key_lines(text):
    """Map (section, key) to the 1-based line number where it is defined."""
    where, section = {}, None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = no
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            where[(section, m.group(1).strip().lower())] = no
    return where


def _convert(kind, raw):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "yes", "true", "on"):
            return True
        if low in ("0", "no", "false", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is Length:
        m = _LENGTH.match(raw)
        if not m:
            raise ValueError(f"expected a length such as 3.8 or 4cs, got {raw!r}")
        return Length(float(m.group(1)), bool(m.group(2)))
    if kind is tuple:
        parts = [t for t in re.split(r"[,\s]+", raw.strip()) if t]
        return tuple(float(t) for t in parts)
    if kind is int:
        v = float(raw)
        if v != int(v):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(v)
    return kind(raw.strip())


def _fractions(tokens, n, what):
    if len(tokens) < n:
        raise ValueError(f"{what}: expected {n} numbers")
    vals = tuple(float(t) for t in tokens[:n])
    return vals


def _parse_boundary(section_items):
    supports, loads, springs, output = [], [], [], None
    for key, raw in section_items:
        tok = raw.split("#")[0].split()
        kind = key.split(".")[0]
        if kind == "support":
            if not tok or tok[0] != "box" or len(tok) != 6:
                raise ValueError("support needs: box x0 y0 x1 y1 dofs")
            dofs = tok[5].lower()
            if not dofs or set(dofs) - {"x", "y"}:
                raise ValueError(f"support dofs must be x, y or xy, got {tok[5]!r}")
            supports.append(Support(_fractions(tok[1:5], 4, "support box"), dofs))
        elif kind == "load":
            if not tok or tok[0] != "point" or len(tok) != 5:
                raise ValueError("load needs: point x y fx fy")
            v = _fractions(tok[1:], 4, "load")
            loads.append(PointLoad(v[:2], v[2:]))
        elif kind == "output":
            if not tok or tok[0] != "point" or len(tok) != 5 or tok[3] not in ("x", "y"):
                raise ValueError("output needs: point x y (x|y) sign")
            output = OutputPort(_fractions(tok[1:3], 2, "output"), tok[3], float(tok[4]))
        elif kind == "spring":
            if not tok or tok[0] != "point" or len(tok) != 5 or tok[3] not in ("x", "y"):
                raise ValueError("spring needs: point x y (x|y) stiffness")
            springs.append(Spring(_fractions(tok[1:3], 2, "spring"), tok[3], float(tok[4])))
        else:
            raise ValueError(f"unknown boundary entry {key!r}")
    return tuple(supports), tuple(loads), tuple(springs), output


def parse_config(text, source="<config>"):
    """Parse configuration text into a :class:`RunConfig`."""
    lines = _key_lines(text)

    def fail(msg, section=None, key=None):
        no = lines.get((section, key), lines.get((section, None), 0))
        raise ConfigError(f"{source}:{no}: {msg}")

    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        no = getattr(exc, "lineno", 0)
        raise ConfigError(f"{source}:{no}: {exc.message if hasattr(exc, 'message') else exc}") from exc

    kwargs = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            fail(f"unknown section [{section}]", section)
        schema = _SCHEMA[section]
        if schema is None:
            continue
        for key, raw in cp.items(section):
            if key not in schema:
                fail(f"unknown key {key!r} in [{section}]", section, key)
            try:
                value = _convert(schema[key], raw)
            except ValueError as exc:
                fail(f"{key}: {exc}", section, key)
            kwargs[_RENAME.get((section, key), key)] = value

    for req_section, req_key in (("grid", "n_cols"), ("grid", "n_rows"), ("grid", "cs")):
        if req_key not in kwargs:
            fail(f"missing required key {req_key!r} in [{req_section}]", req_section)

    if cp.has_section("boundary"):
        items = cp.items("boundary")
        for key, raw in items:
            try:
                _parse_boundary([(key, raw)])
            except ValueError as exc:
                fail(str(exc), "boundary", key)
        supports, loads, springs, output = _parse_boundary(items)
    else:
        supports, loads, springs, output = (), (), (), None
    if not supports:
        fail("at least one support is required", "boundary")
    if not loads:
        fail("at least one load is required", "boundary")
    kwargs.update(supports=supports, loads=loads, springs=springs, output=output)
    try:
        return RunConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        fail(str(exc))


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


BENCHMARKS = ("I", "II", "III", "IV")


def benchmark_text(name):
    """Text of a shipped benchmark configuration."""
    if name not in BENCHMARKS:
        raise ValueError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
    return resources.files("hexmask").joinpath("configs").joinpath(f"bench_{name}.ini").read_text(encoding="utf-8")


def benchmark_config(name, scale=1.0):
    cfg = parse_config(benchmark_text(name), source=f"bench_{name}.ini")
    return cfg.scaled(scale) if scale != 1.0 else cfg


def config_to_text(cfg):
    """Serialize a configuration back to INI text (round-trips through parse)."""
    def num(v):
        return repr(float(v)) if isinstance(v, float) else str(v)

    out = [
        "[run]", f"name = {cfg.name}", f"outdir = {cfg.outdir}", f"seed = {cfg.seed}", "",
        "[grid]", f"n_cols = {cfg.n_cols}", f"n_rows = {cfg.n_rows}", f"cs = {num(cfg.cs)}", "",
        "[material]", f"modulus = {num(cfg.modulus)}", f"poisson = {num(cfg.poisson)}",
        f"thickness = {num(cfg.thickness)}", f"rho_min = {num(cfg.rho_min)}", "",
        "[objective]", f"kind = {cfg.objective}", f"scale = {num(cfg.scale)}", "",
        "[masks]", f"polarity = {cfg.polarity}", f"n_x = {cfg.n_masks_x}", f"n_y = {cfg.n_masks_y}",
        f"alpha = {num(cfg.alpha)}", f"eta = {num(cfg.eta)}", f"circular = {'yes' if cfg.circular else 'no'}",
        f"max_axis = {num(cfg.max_axis)}", f"positive_min_axis = {num(cfg.positive_min_axis)}",
    ]
    if cfg.initial_axis is not None:
        out.append(f"initial_axis = {num(cfg.initial_axis)}")
    out += [
        "", "[lengthscale]", f"min_ls = {cfg.min_ls}", f"max_ls = {cfg.max_ls}", f"p = {cfg.p}", "",
        "[sls]", f"vf_init = {num(cfg.vf_init)}", f"vf_min = {num(cfg.vf_min)}", f"vf_max = {num(cfg.vf_max)}",
        f"tol = {num(cfg.tol)}", f"delta_eps = {num(cfg.delta_eps)}",
        f"stage_budget = {cfg.stage_budget}", f"total_budget = {cfg.total_budget}",
        f"stage1_passes = {cfg.stage1_passes}", f"deletion_threshold = {num(cfg.deletion_threshold)}",
    ]
    if cfg.eps_int is not None:
        out.append(f"eps_int = {num(cfg.eps_int)}")
    if cfg.refresh_every is not None:
        out.append(f"refresh_every = {cfg.refresh_every}")
    if cfg.continuation:
        out.append("continuation = " + ", ".join(num(a) for a in cfg.continuation))
    out += ["", "[boundary]"]
    for i, s in enumerate(cfg.supports):
        out.append(f"support.{i} = box {' '.join(num(v) for v in s.box)} {s.dofs}")
    for i, ld in enumerate(cfg.loads):
        out.append(f"load.{i} = point {' '.join(num(v) for v in (*ld.at, *ld.force))}")
    if cfg.output is not None:
        o = cfg.output
        out.append(f"output = point {num(o.at[0])} {num(o.at[1])} {o.direction} {num(o.sign)}")
    for i, sp in enumerate(cfg.springs):
        out.append(f"spring.{i} = point {num(sp.at[0])} {num(sp.at[1])} {sp.direction} {num(sp.stiffness)}")
    return "\n".join(out) + "\n"


# ------------------------------------------------------------ model setup


def _frac_point(grid, at):
    xmin, ymin, xmax, ymax = grid.bounds
    return xmin + at[0] * (xmax - xmin), ymin + at[1] * (ymax - ymin)


def _dof(node, direction):
    return 2 * node + (0 if direction == "x" else 1)


def build_model(cfg, grid=None):
    """Grid and finite element model described by ``cfg``."""
    grid = grid or build_grid(cfg.n_cols, cfg.n_rows, cfg.cs)
    xmin, ymin, xmax, ymax = grid.bounds
    w, h = xmax - xmin, ymax - ymin
    fixed = []
    for s in cfg.supports:
        x0, y0, x1, y1 = s.box
        # boxes are closed; a relative slack absorbs round-off
        tol = 1e-9 * max(w, h)
        nodes = grid.nodes_in_box(xmin + x0 * w, ymin + y0 * h, xmin + x1 * w, ymin + y1 * h, tol)
        if nodes.size == 0:
            nodes = np.array([grid.nearest_node(*_frac_point(grid, ((x0 + x1) / 2, (y0 + y1) / 2)))])
        fixed.append(fem.node_dofs(nodes, s.dofs))
    fixed = np.unique(np.concatenate(fixed)) if fixed else np.array([], dtype=int)
    f = np.zeros(2 * grid.n_nodes)
    for ld in cfg.loads:
        node = grid.nearest_node(*_frac_point(grid, ld.at))
        f[2 * node] += ld.force[0]
        f[2 * node + 1] += ld.force[1]
    out_dof, out_sign = None, 1.0
    if cfg.output is not None:
        node = grid.nearest_node(*_frac_point(grid, cfg.output.at))
        out_dof, out_sign = _dof(node, cfg.output.direction), cfg.output.sign
    springs = {}
    for sp in cfg.springs:
        node = grid.nearest_node(*_frac_point(grid, sp.at))
        d = _dof(node, sp.direction)
        springs[d] = springs.get(d, 0.0) + sp.stiffness
    return fem.FEModel(
        grid=grid, fixed_dofs=fixed, loads=f, E=cfg.modulus, nu=cfg.poisson, thickness=cfg.thickness,
        rho_min=cfg.rho_min, output_dof=out_dof, output_sign=out_sign, springs=springs,
    )


def lengthscale_spec(cfg):
    return LengthScaleSpec(cfg.min_ls_abs, cfg.max_ls_abs, cfg.p)


def mask_axis_bounds(cfg):
    """Lower and upper semi-axis bounds for the configured polarity."""
    lower = cfg.min_ls_abs if cfg.polarity == maskfield.NEGATIVE else cfg.positive_min_axis
    return lower, cfg.max_axis


def initial_masks(cfg, grid):
    """Evenly spread masks with semi-axes ``max_axis / 4`` clipped to the bounds."""
    lower, upper = mask_axis_bounds(cfg)
    a = cfg.max_axis / 4 if cfg.initial_axis is None else cfg.initial_axis
    a = float(np.clip(a, lower, upper))
    params = maskfield.evenly_spread(cfg.n_masks_x, cfg.n_masks_y, grid.bounds, a)
    return maskfield.MaskSet(params, polarity=cfg.polarity, alpha=cfg.alpha, eta=cfg.eta, circular=cfg.circular)
