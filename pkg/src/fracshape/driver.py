"""Quasi-static load stepping with shape-optimization iterations per load.

Each optimization iteration solves the state and adjoint problems,
assembles the shape derivative, computes the penalized Sobolev gradient
``V`` and searches ``x -> x + tau V`` for sufficient decrease of ``J``.
Steps that would heal the crack (shorter crack boundary or larger domain)
are rejected in the line search.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adjoint import solve_adjoint
from .deformation import (
    DeformationError,
    PenaltyConfig,
    metric_matrix,
    solve_deformation,
)
from .elasticity import (
    BoundaryCondition,
    Discretization,
    Material,
    boundary_force,
    bulk_energy,
    fracture_energy,
    reg_energy,
    solve_state,
)
from .fem import SingularElementError, SolverError
from .mesh import CRACK_TAGS, TriMesh, min_scaled_jacobian, remesh, update_coordinates
from .shapederiv import shape_derivative_vector
from .specimen import SpecimenSpec, generate
from .triangulate import GeometryError

log = logging.getLogger(__name__)

MICRON = 1e-3  # mm
ANGLE_DISTANCE = 0.05  # mm of tip travel used for the initiation angle


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    armijo_tau0: float = 5e-3
    armijo_c: float = 1e-4
    tau_min: float = 1e-10
    tol_efrac: float = 1e-8
    tol_gradnorm: float = 1e-4
    quality_threshold: float = 0.30
    max_opt_iters: int = 200
    penalty: PenaltyConfig = PenaltyConfig()

    def __post_init__(self):
        for name in ("armijo_tau0", "armijo_c", "tau_min", "tol_efrac", "tol_gradnorm", "quality_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_opt_iters < 1:
            raise ValueError("max_opt_iters must be at least 1")


@dataclass(frozen=True)
class LoadSchedule:
    """Monotone top displacements; increments in micrometres.

    ``tension`` pulls the top edge up, ``shear`` moves it in the negative
    x1 direction.  Steps of ``coarse_increment`` are used up to
    ``switch_at``, then steps of ``fine_increment``.
    """

    mode: str = "tension"
    coarse_increment: float = 0.5
    switch_at: float = 3.5
    fine_increment: float = 0.1
    max_loadsteps: int = 100

    def __post_init__(self):
        if self.mode not in ("tension", "shear"):
            raise ValueError(f"mode must be 'tension' or 'shear', got {self.mode!r}")
        for name in ("coarse_increment", "fine_increment"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.switch_at < 0:
            raise ValueError("switch_at must be non-negative")
        if self.max_loadsteps < 0:
            raise ValueError("max_loadsteps must be non-negative")

    @classmethod
    def tension(cls) -> LoadSchedule:
        return cls("tension", 0.5, 3.5, 0.1, 100)

    @classmethod
    def shear(cls) -> LoadSchedule:
        return cls("shear", 0.5, 9.0, 0.1, 100)

    def magnitudes_um(self) -> list[float]:
        n_coarse = int(math.floor(self.switch_at / self.coarse_increment + 1e-9))
        out = [round(k * self.coarse_increment, 12) for k in range(1, n_coarse + 1)]
        base = n_coarse * self.coarse_increment
        j = 1
        while len(out) < self.max_loadsteps:
            out.append(round(base + j * self.fine_increment, 12))
            j += 1
        return out[: self.max_loadsteps]

    def displacement(self, magnitude_um: float) -> tuple[float, float]:
        v = magnitude_um * MICRON
        return (0.0, v) if self.mode == "tension" else (-v, 0.0)

    def loads(self) -> list[tuple[float, float]]:
        """Top displacements in mm."""
        return [self.displacement(m) for m in self.magnitudes_um()]


@dataclass
class StepRecord:
    loadstep: int
    w_D: tuple[float, float]
    E_bulk: float
    E_frac: float
    E_reg: float
    J: float
    force: tuple[float, float]
    opt_iters: int
    remeshes: int
    min_quality: float
    tip: tuple[float, float]
    reason: str = ""


@dataclass
class AcceptedStep:
    """Bookkeeping for one accepted optimization step."""

    loadstep: int
    tau: float
    J_before: float
    J_after: float
    area_before: float
    area_after: float
    E_frac_before: float
    E_frac_after: float
    tip: tuple[float, float]


@dataclass
class SimulationResult:
    records: list[StepRecord] = field(default_factory=list)
    steps: list[AcceptedStep] = field(default_factory=list)
    tip_trace: list[tuple[float, float]] = field(default_factory=list)
    mesh: TriMesh | None = None
    stop_reason: str = ""
    error: str | None = None

    def initial_angle(self) -> float | None:
        return propagation_angle(self.tip_trace)


def crack_tip(mesh: TriMesh, mode: str = "tension") -> tuple[float, float]:
    """Extremal crack vertex along the expected propagation direction."""
    nodes = mesh.nodes_with(*CRACK_TAGS)
    if len(nodes) == 0:
        raise ValueError("mesh has no crack edges")
    x = mesh.nodes[nodes]
    key = x[:, 0] if mode == "tension" else x[:, 0] + x[:, 1]
    i = int(np.argmin(key))
    return float(x[i, 0]), float(x[i, 1])


def propagation_angle(trace, distance: float = ANGLE_DISTANCE) -> float | None:
    """Angle in degrees (from the negative x1 axis, positive downward) of the
    tip path over its first ``distance`` of travel, or None if shorter."""
    if not trace:
        return None
    x0 = np.asarray(trace[0], dtype=float)
    for p in trace[1:]:
        d = np.asarray(p, dtype=float) - x0
        if np.hypot(*d) >= distance:
            return float(np.degrees(np.arctan2(-d[1], -d[0])))
    return None


class _State:
    """Mesh with its state solution and derived energies."""

    def __init__(self, mesh: TriMesh, material: Material, bc: BoundaryCondition):
        self.mesh = mesh
        self.disc = Discretization(mesh, material)
        self.w = solve_state(mesh, material, bc, self.disc)
        self.E_bulk = bulk_energy(mesh, material, self.w, self.disc)
        self.E_frac = fracture_energy(mesh, material)
        self.E_reg = reg_energy(mesh, material)
        self.J = self.E_bulk + self.E_frac - self.E_reg


def _line_search(state: _State, V, aVV, material, bc, config: OptimizerConfig):
    tau = config.armijo_tau0
    area0 = state.mesh.area
    while tau >= config.tau_min:
        cand = update_coordinates(state.mesh, V, tau)
        ok = not cand.has_inverted and cand.has_simple_boundary
        if ok:
            # irreversibility: the crack boundary may not shrink, the domain may not grow
            ok = fracture_energy(cand, material) >= state.E_frac and cand.area <= area0
        if ok:
            try:
                new = _State(cand, material, bc)
            except (SolverError, SingularElementError):
                new = None
            if new is not None and new.J <= state.J - config.armijo_c * tau * aVV:
                return tau, new
        tau *= 0.5
    return None, None


def optimize_loadstep(
    mesh: TriMesh,
    material: Material,
    bc: BoundaryCondition,
    config: OptimizerConfig = OptimizerConfig(),
    *,
    target_h: float = 0.045,
    mode: str = "tension",
    loadstep: int = 0,
    stop_tip_x1: float | None = None,
    on_step: Callable[[AcceptedStep], None] | None = None,
) -> tuple[TriMesh, StepRecord]:
    """Minimize ``J`` over crack shapes at a fixed load.

    Stops when the fracture energy increase drops below ``tol_efrac``, the
    gradient norm below ``tol_gradnorm``, no admissible step is found, the
    tip passes ``stop_tip_x1`` or ``max_opt_iters`` is reached.
    """
    state = _State(mesh, material, bc)
    V_prev = None
    iters = remeshes = 0
    reason = "max_iters"
    for _ in range(config.max_opt_iters):
        z = solve_adjoint(state.mesh, material, state.w, state.disc)
        dL = shape_derivative_vector(state.mesh, material, state.w, z, state.disc)
        try:
            V = solve_deformation(state.mesh, material, dL, config.penalty, V0=V_prev, disc=state.disc)
        except DeformationError:
            if V_prev is None:
                raise
            V = solve_deformation(state.mesh, material, dL, config.penalty, disc=state.disc)
        aVV = float(V.ravel() @ (metric_matrix(state.disc) @ V.ravel()))
        if math.sqrt(max(aVV, 0.0)) < config.tol_gradnorm:
            reason = "gradient_norm"
            break
        tau, new = _line_search(state, V, aVV, material, bc, config)
        if new is None:
            reason = "no_step"
            break
        iters += 1
        dE = new.E_frac - state.E_frac
        step = AcceptedStep(
            loadstep, tau, state.J, new.J, state.mesh.area, new.mesh.area, state.E_frac, new.E_frac,
            crack_tip(new.mesh, mode),
        )
        if on_step is not None:
            on_step(step)
        state = new
        V_prev = V
        if min_scaled_jacobian(state.mesh) < config.quality_threshold:
            state = _State(remesh(state.mesh, target_h), material, bc)
            V_prev = None
            remeshes += 1
        if dE < config.tol_efrac:
            reason = "fracture_energy"
            break
        if stop_tip_x1 is not None and step.tip[0] < stop_tip_x1:
            reason = "fractured"
            break
    else:
        log.warning("loadstep %d hit max_opt_iters=%d", loadstep, config.max_opt_iters)
    record = StepRecord(
        loadstep=loadstep,
        w_D=tuple(bc.top),
        E_bulk=state.E_bulk,
        E_frac=state.E_frac,
        E_reg=state.E_reg,
        J=state.J,
        force=tuple(float(f) for f in boundary_force(state.mesh, material, state.w, state.disc)),
        opt_iters=iters,
        remeshes=remeshes,
        min_quality=min_scaled_jacobian(state.mesh),
        tip=crack_tip(state.mesh, mode),
        reason=reason,
    )
    return state.mesh, record


def run_simulation(
    spec: SpecimenSpec,
    material: Material = Material(),
    schedule: LoadSchedule = LoadSchedule.tension(),
    config: OptimizerConfig = OptimizerConfig(),
    *,
    mesh: TriMesh | None = None,
    out_dir: str | Path | None = None,
    snapshot_every: int = 1,
    on_record: Callable[[StepRecord], None] | None = None,
) -> SimulationResult:
    """Run the full load schedule, optionally writing CSV and mesh snapshots."""
    from .io import write_mesh, write_records_csv

    mesh = mesh if mesh is not None else generate(spec)
    target_h = spec.target_h
    result = SimulationResult(mesh=mesh)
    result.tip_trace.append(crack_tip(mesh, schedule.mode))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_mesh(out / "mesh_0000.fm", mesh)
        write_records_csv(out / "records.csv", result)
    stop_x1 = 2.0 * target_h if schedule.mode == "tension" else None

    def on_step(step: AcceptedStep):
        result.steps.append(step)
        result.tip_trace.append(step.tip)

    result.stop_reason = "schedule_complete"
    for k, w_D in enumerate(schedule.loads(), start=1):
        bc = BoundaryCondition(w_D)
        try:
            mesh, rec = optimize_loadstep(
                mesh, material, bc, config, target_h=target_h, mode=schedule.mode, loadstep=k,
                stop_tip_x1=stop_x1, on_step=on_step,
            )
        except (GeometryError, SolverError, SingularElementError, DeformationError) as exc:
            log.error("loadstep %d failed: %s", k, exc)
            result.error = f"loadstep {k}: {exc}"
            result.stop_reason = "error"
            break
        result.records.append(rec)
        result.mesh = mesh
        log.info(
            "loadstep %d w_D=(%.4g, %.4g) um  iters=%d remesh=%d  E_frac=%.6g  force=%.6g  tip=(%.4f, %.4f)  [%s]",
            k, w_D[0] / MICRON, w_D[1] / MICRON, rec.opt_iters, rec.remeshes, rec.E_frac, rec.force[1],
            rec.tip[0], rec.tip[1], rec.reason,
        )
        if on_record is not None:
            on_record(rec)
        if out is not None:
            write_records_csv(out / "records.csv", result)
            if snapshot_every and k % snapshot_every == 0:
                write_mesh(out / f"mesh_{k:04d}.fm", mesh)
        if stop_x1 is not None and rec.tip[0] < stop_x1:
            result.stop_reason = "fractured"
            break
    return result
