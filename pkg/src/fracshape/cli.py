"""Command line entry point.

Exit codes: 0 success, 1 user error (bad arguments, config or files),
2 numerical failure (solver breakdown, failed checks, broken geometry).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2
THREADS_VAR = "FRACSHAPE_THREADS"

log = logging.getLogger("fracshape")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; that code is reserved for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _threads() -> int | None:
    raw = os.environ.get(THREADS_VAR)
    if raw is None or raw.strip() == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_VAR} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_VAR} must be a positive integer, got {raw!r}")
    return n


def _limit_threads(n: int | None) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fracshape", description="Brittle fracture as shape optimization on triangle meshes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    m = sub.add_parser("mesh", help="generate a notched specimen mesh")
    m.add_argument("--tip", required=True, choices=["flat", "round", "pointy"])
    m.add_argument("--delta", required=True, type=float)
    m.add_argument("--level", required=True, choices=["very-coarse", "coarse", "medium", "fine", "very-fine"])
    m.add_argument("-o", "--output", required=True, type=Path)

    r = sub.add_parser("run", help="run a quasi-static simulation")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--mesh", type=Path, help="start from this mesh instead of generating one")
    r.add_argument("--out", required=True, type=Path)

    v = sub.add_parser("verify", help="run a self-check against finite-difference or closed-form oracles")
    v.add_argument("--check", required=True, choices=["spectral", "adjoint", "shape", "deformation"])
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--fields", type=Path, help="spectral only: write per-element principal strains as CSV")

    q = sub.add_parser("quality", help="report mesh size and quality")
    q.add_argument("--mesh", required=True, type=Path)
    return p


def _cmd_mesh(args) -> int:
    from .io import write_mesh
    from .mesh import min_scaled_jacobian
    from .specimen import SpecimenSpec, generate

    try:
        spec = SpecimenSpec(args.tip, args.delta, args.level)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    mesh = generate(spec)
    write_mesh(args.output, mesh)
    print(f"{args.output}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, "
          f"min scaled Jacobian {min_scaled_jacobian(mesh):.3f}")
    return EXIT_OK


def _cmd_run(args) -> int:
    from .driver import run_simulation
    from .io import ConfigError, MeshFormatError, parse_config, read_mesh
    from .mesh import CRACK_TAGS

    try:
        cfg = parse_config(args.config.read_text())
        mesh = read_mesh(args.mesh) if args.mesh else None
    except OSError as exc:
        raise UsageError(str(exc)) from None
    except (ConfigError, MeshFormatError) as exc:
        raise UsageError(f"{exc}") from None
    if mesh is not None and len(mesh.edges_with(*CRACK_TAGS)) == 0:
        raise UsageError(f"{args.mesh}: mesh has no crack edges")
    result = run_simulation(
        cfg.specimen, cfg.material, cfg.schedule, cfg.optimizer,
        mesh=mesh, out_dir=args.out, snapshot_every=cfg.snapshot_every,
    )
    last = result.records[-1] if result.records else None
    print(f"{len(result.records)} loadsteps, stop: {result.stop_reason}")
    if last is not None:
        print(f"final tip ({last.tip[0]:.4f}, {last.tip[1]:.4f}), E_frac {last.E_frac:.6g}")
    angle = result.initial_angle()
    if angle is not None:
        print(f"initial propagation angle {angle:.1f} deg")
    if result.error:
        print(f"error: {result.error}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_verify(args) -> int:
    from . import verify

    report = verify.CHECKS[args.check](seed=args.seed)
    print(report.format())
    ok = report.passed
    if args.check == "spectral":
        from .elasticity import BoundaryCondition, Material, solve_state
        from .io import atomic_write

        mesh = verify.medium_specimen()
        fields_report = verify.check_tip_fields(mesh)
        print(fields_report.format())
        ok = ok and fields_report.passed
        if args.fields:
            w = solve_state(mesh, Material(), BoundaryCondition((0.0, 5.0 * verify.MICRON)))
            atomic_write(args.fields, verify.spectral_fields_csv(verify.spectral_fields(mesh, Material(), w)))
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_quality(args) -> int:
    import numpy as np

    from .io import MeshFormatError, read_mesh
    from .mesh import CRACK_TAGS, Tag, scaled_jacobians

    try:
        mesh = read_mesh(args.mesh)
    except OSError as exc:
        raise UsageError(str(exc)) from None
    except MeshFormatError as exc:
        raise UsageError(str(exc)) from None
    q = scaled_jacobians(mesh.nodes, mesh.triangles)
    _, _, length = mesh.edge_geometry
    print(f"nodes {mesh.n_nodes}")
    print(f"triangles {mesh.n_triangles}")
    print(f"area {mesh.area:.12g}")
    print(f"min scaled Jacobian {q.min():.4f}")
    print(f"mean scaled Jacobian {q.mean():.4f}")
    print(f"below 0.30: {int(np.sum(q < 0.30))}")
    for tag in Tag:
        e = mesh.edges_with(tag)
        print(f"{tag.label:<12} {len(e):4d} edges, length {length[e].sum():.6g}")
    print(f"crack length {length[mesh.edges_with(*CRACK_TAGS)].sum():.6g}")
    return EXIT_OK


COMMANDS = {"mesh": _cmd_mesh, "run": _cmd_run, "verify": _cmd_verify, "quality": _cmd_quality}


def main(argv: list[str] | None = None) -> int:
    from .deformation import DeformationError
    from .fem import SingularElementError, SolverError
    from .mesh import MeshError
    from .triangulate import GeometryError

    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USER
        _limit_threads(_threads())
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"fracshape: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (GeometryError, MeshError, SolverError, SingularElementError, DeformationError, RuntimeError) as exc:
        print(f"fracshape: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
