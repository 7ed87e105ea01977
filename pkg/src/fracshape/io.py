"""Run configuration, ASCII mesh files and CSV records.

All writers go through a temporary file in the target directory followed by
an atomic rename.
"""

from __future__ import annotations

import configparser
import io
import math
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .deformation import PenaltyConfig
from .driver import LoadSchedule, OptimizerConfig, SimulationResult
from .elasticity import Material
from .mesh import Tag, TriMesh, boundary_topology, signed_areas
from .specimen import Level, SpecimenSpec, Tip


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MeshFormatError(ValueError):
    pass


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class RunConfig:
    material: Material = Material()
    specimen: SpecimenSpec = SpecimenSpec()
    schedule: LoadSchedule = LoadSchedule.tension()
    optimizer: OptimizerConfig = OptimizerConfig()
    output_dir: str | None = None
    snapshot_every: int = 1


_MATERIAL_KEYS = {"lambda": "lam", "mu": "mu", "gc": "gc", "nu": "nu", "a_metric": "a_metric"}
_SCHEDULE_KEYS = ("mode", "coarse_increment", "switch_at", "fine_increment", "max_loadsteps")
_OPTIMIZER_KEYS = (
    "armijo_tau0", "armijo_c", "tau_min", "tol_efrac", "tol_gradnorm", "quality_threshold", "max_opt_iters",
)
_PENALTY_KEYS = ("psi_min", "psi_max", "epsilon_gap", "newton_tol", "newton_max_iter")
_SECTIONS = {
    "material": tuple(_MATERIAL_KEYS),
    "specimen": ("tip", "delta", "level"),
    "schedule": _SCHEDULE_KEYS,
    "optimizer": _OPTIMIZER_KEYS + _PENALTY_KEYS,
    "output": ("directory", "snapshot_every"),
}
REQUIRED_SECTIONS = ("specimen", "schedule")
_INT_KEYS = {"max_loadsteps", "max_opt_iters", "newton_max_iter", "snapshot_every"}


def _locate(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip().lower()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section and "=" in line:
            if line.split("=", 1)[0].strip().lower() == key:
                return no
    return None


def parse_config(text: str) -> RunConfig:
    """Parse INI text; omitted keys take their defaults."""
    cp = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",), strict=True
    )
    try:
        cp.read_string(text)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of a section", exc.lineno) from None

    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]", _locate(text, section))
        for key in cp[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", _locate(text, section, key))
    for section in REQUIRED_SECTIONS:
        if not cp.has_section(section):
            raise ConfigError(f"missing required section [{section}]")

    def get(section, key, kind=float):
        if not cp.has_option(section, key):
            return None
        raw = cp.get(section, key).strip()
        line = _locate(text, section, key)
        if kind is str:
            return raw
        try:
            value = int(raw) if key in _INT_KEYS else float(raw)
        except ValueError:
            raise ConfigError(f"malformed number for {key!r}: {raw!r}", line) from None
        if not math.isfinite(value):
            raise ConfigError(f"{key} must be finite", line)
        return value

    def build(factory, section, values):
        try:
            return factory(**{k: v for k, v in values.items() if v is not None})
        except ValueError as exc:
            bad = next((k for k in values if k in str(exc)), None)
            raise ConfigError(str(exc), _locate(text, section, bad) if bad else _locate(text, section)) from None

    mat_values = {attr: get("material", key) for key, attr in _MATERIAL_KEYS.items()}
    for key, attr in _MATERIAL_KEYS.items():
        v = mat_values[attr]
        if v is not None and not v > 0:
            raise ConfigError(f"{key} must be positive", _locate(text, "material", key))
    material = build(Material, "material", mat_values)

    tip = get("specimen", "tip", str)
    level = get("specimen", "level", str)
    spec_values = {"tip": tip, "delta": get("specimen", "delta"), "level": level}
    if tip is not None and tip not in {t.value for t in Tip}:
        raise ConfigError(f"unknown tip {tip!r}", _locate(text, "specimen", "tip"))
    if level is not None and level not in {lv.value for lv in Level}:
        raise ConfigError(f"unknown level {level!r}", _locate(text, "specimen", "level"))
    specimen = build(SpecimenSpec, "specimen", spec_values)

    mode = get("schedule", "mode", str) or "tension"
    if mode not in ("tension", "shear"):
        raise ConfigError(f"unknown mode {mode!r}", _locate(text, "schedule", "mode"))
    base = LoadSchedule.tension() if mode == "tension" else LoadSchedule.shear()
    sched_values = {k: get("schedule", k) for k in _SCHEDULE_KEYS if k != "mode"}
    sched_values = {k: (v if v is not None else getattr(base, k)) for k, v in sched_values.items()}
    schedule = build(LoadSchedule, "schedule", {"mode": mode, **sched_values})

    opt_values = {k: get("optimizer", k) for k in _OPTIMIZER_KEYS}
    pen = PenaltyConfig()
    psi_min = get("optimizer", "psi_min")
    psi_max = get("optimizer", "psi_max")
    psi_min = psi_min if psi_min is not None else pen.psi_schedule[0]
    psi_max = psi_max if psi_max is not None else pen.psi_schedule[-1]
    if not (0 < psi_min <= psi_max):
        raise ConfigError("psi_min must be positive and not exceed psi_max", _locate(text, "optimizer"))
    psi = [psi_min]
    while psi[-1] * 10 <= psi_max * (1 + 1e-12):
        psi.append(psi[-1] * 10)
    if psi[-1] != psi_max:
        psi.append(psi_max)
    pen_values = {
        "psi_schedule": tuple(psi),
        "epsilon_gap": get("optimizer", "epsilon_gap"),
        "newton_tol": get("optimizer", "newton_tol"),
        "newton_max_iter": get("optimizer", "newton_max_iter"),
    }
    penalty = build(PenaltyConfig, "optimizer", pen_values)
    optimizer = build(OptimizerConfig, "optimizer", {**opt_values, "penalty": penalty})

    directory = get("output", "directory", str)
    snap = get("output", "snapshot_every")
    if snap is not None and snap < 0:
        raise ConfigError("snapshot_every must be >= 0", _locate(text, "output", "snapshot_every"))
    return RunConfig(material, specimen, schedule, optimizer, directory or None, 1 if snap is None else snap)


def format_config(cfg: RunConfig) -> str:
    """INI text that parses back to ``cfg``."""
    m, s, sch, o = cfg.material, cfg.specimen, cfg.schedule, cfg.optimizer
    r = repr
    lines = [
        "[material]",
        *(f"{key} = {r(float(getattr(m, attr)))}" for key, attr in _MATERIAL_KEYS.items()),
        "",
        "[specimen]",
        f"tip = {s.tip.value}",
        f"delta = {r(float(s.delta))}",
        f"level = {s.level.value}",
        "",
        "[schedule]",
        f"mode = {sch.mode}",
        f"coarse_increment = {r(float(sch.coarse_increment))}",
        f"switch_at = {r(float(sch.switch_at))}",
        f"fine_increment = {r(float(sch.fine_increment))}",
        f"max_loadsteps = {sch.max_loadsteps}",
        "",
        "[optimizer]",
        *(f"{k} = {r(getattr(o, k))}" for k in _OPTIMIZER_KEYS),
        f"psi_min = {r(float(o.penalty.psi_schedule[0]))}",
        f"psi_max = {r(float(o.penalty.psi_schedule[-1]))}",
        f"epsilon_gap = {r(float(o.penalty.epsilon_gap))}",
        f"newton_tol = {r(float(o.penalty.newton_tol))}",
        f"newton_max_iter = {o.penalty.newton_max_iter}",
        "",
        "[output]",
    ]
    if cfg.output_dir:
        lines.append(f"directory = {cfg.output_dir}")
    lines.append(f"snapshot_every = {cfg.snapshot_every}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- mesh files

MESH_MAGIC = "fracmesh"
MESH_VERSION = 1


def _g17(x: float) -> str:
    return f"{x:.17g}"


def format_mesh(mesh: TriMesh) -> str:
    out = io.StringIO()
    out.write(f"{MESH_MAGIC} {MESH_VERSION}\n")
    out.write(f"nodes {mesh.n_nodes}\n")
    for i, (x, y) in enumerate(mesh.nodes):
        out.write(f"{i} {_g17(x)} {_g17(y)}\n")
    out.write(f"triangles {mesh.n_triangles}\n")
    for i, (a, b, c) in enumerate(mesh.triangles):
        out.write(f"{i} {a} {b} {c}\n")
    out.write(f"boundary {len(mesh.edges)}\n")
    for (a, b), t in zip(mesh.edges, mesh.tags):
        out.write(f"{a} {b} {Tag(int(t)).label}\n")
    return out.getvalue()


def write_mesh(path: str | Path, mesh: TriMesh) -> None:
    atomic_write(path, format_mesh(mesh))


def parse_mesh(text: str) -> TriMesh:
    lines = [(no, ln.split()) for no, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    pos = 0

    def take(expect_len=None):
        nonlocal pos
        if pos >= len(lines):
            raise MeshFormatError("unexpected end of file")
        no, tok = lines[pos]
        pos += 1
        if expect_len is not None and len(tok) != expect_len:
            raise MeshFormatError(f"line {no}: expected {expect_len} fields, got {len(tok)}")
        return no, tok

    def header(name):
        no, tok = take(2)
        if tok[0] != name:
            raise MeshFormatError(f"line {no}: expected '{name} <count>'")
        try:
            return int(tok[1])
        except ValueError:
            raise MeshFormatError(f"line {no}: bad count {tok[1]!r}") from None

    no, tok = take()
    if len(tok) != 2 or tok[0] != MESH_MAGIC:
        raise MeshFormatError(f"line {no}: not a {MESH_MAGIC} file")
    if tok[1] != str(MESH_VERSION):
        raise MeshFormatError(f"line {no}: unsupported version {tok[1]} (expected {MESH_VERSION})")

    def rows(count, width, conv):
        out = []
        for k in range(count):
            no, tok = take(width)
            try:
                if int(tok[0]) != k:
                    raise MeshFormatError(f"line {no}: expected id {k}, got {tok[0]}")
                out.append([conv(t) for t in tok[1:]])
            except ValueError as exc:
                raise MeshFormatError(f"line {no}: {exc}") from None
        return out

    n = header("nodes")
    nodes = np.array(rows(n, 3, float), dtype=float).reshape(-1, 2)
    m = header("triangles")
    tris = np.array(rows(m, 4, int), dtype=np.int64).reshape(-1, 3)
    if tris.size and (tris.min() < 0 or tris.max() >= n):
        raise MeshFormatError("triangle node index out of range")
    area = signed_areas(nodes, tris)
    if np.any(area <= 0):
        raise MeshFormatError(f"triangle {int(np.flatnonzero(area <= 0)[0])} is not counter-clockwise")
    b = header("boundary")
    edges, tags = [], []
    for _ in range(b):
        no, tok = take(3)
        try:
            a_, b_ = int(tok[0]), int(tok[1])
            tag = Tag.from_label(tok[2])
        except ValueError as exc:
            raise MeshFormatError(f"line {no}: {exc}") from None
        if not (0 <= a_ < n and 0 <= b_ < n):
            raise MeshFormatError(f"line {no}: boundary node index out of range")
        edges.append((a_, b_))
        tags.append(int(tag))
    if pos != len(lines):
        raise MeshFormatError(f"line {lines[pos][0]}: trailing content")
    try:
        topo, elems = boundary_topology(tris)
    except ValueError as exc:
        raise MeshFormatError(str(exc)) from None
    index = {tuple(sorted(e)): (tuple(e), el) for e, el in zip(topo.tolist(), elems.tolist())}
    if len(edges) != len(index):
        raise MeshFormatError("boundary section does not list every boundary edge exactly once")
    oriented, owner = [], []
    for e in edges:
        key = tuple(sorted(e))
        if key not in index:
            raise MeshFormatError(f"edge {e} is not a boundary edge of the triangulation")
        oriented.append(index[key][0])
        owner.append(index[key][1])
    tags = np.array(tags, dtype=np.int64)
    delta = _infer_delta(nodes, np.array(oriented).reshape(-1, 2), tags)
    return TriMesh(nodes, tris, np.array(oriented).reshape(-1, 2), tags, np.array(owner), delta)


def _infer_delta(nodes, edges, tags) -> float | None:
    fixed = edges[tags == int(Tag.CRACK_FIXED)]
    if len(fixed) == 0:
        return None
    return float(np.max(np.abs(nodes[fixed.ravel(), 1] - 0.5)))


def read_mesh(path: str | Path) -> TriMesh:
    return parse_mesh(Path(path).read_text())


# ---------------------------------------------------------------- records

CSV_HEADER = (
    "loadstep,wD_x1_mm,wD_x2_mm,E_bulk,E_frac,E_reg,J,tau_x1,tau_x2,"
    "opt_iters,remeshes,min_quality,tip_x1,tip_x2"
)


def format_records_csv(result: SimulationResult) -> str:
    out = [CSV_HEADER]
    for r in result.records:
        vals = [
            str(r.loadstep), _g17(r.w_D[0]), _g17(r.w_D[1]), _g17(r.E_bulk), _g17(r.E_frac), _g17(r.E_reg),
            _g17(r.J), _g17(r.force[0]), _g17(r.force[1]), str(r.opt_iters), str(r.remeshes),
            _g17(r.min_quality), _g17(r.tip[0]), _g17(r.tip[1]),
        ]
        out.append(",".join(vals))
    return "\n".join(out) + "\n"


def write_records_csv(path: str | Path, result: SimulationResult) -> None:
    atomic_write(path, format_records_csv(result))
