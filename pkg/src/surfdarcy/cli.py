"""Command-line front end: convergence studies, property-check suites, and
VTK exports.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 check-suite failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import fe_space, vtk_io
from .mesh import DEFAULT_N_CELLS, build_background, refine_uniform
from .solver import SingularSystemError
from .suites import (
    geometric_rate_suite,
    lemma_ratio_suite,
    manufactured_residual_suite,
    positioning_suite,
)
from .verification import (
    CASE_TABLE,
    ManufacturedSolution,
    case_config,
    report_to_csv,
    report_to_markdown,
    run_case,
    run_level,
)

__all__ = ["main"]


def _parse_vector(text, length=3):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != length:
        raise argparse.ArgumentTypeError(f"expected {length} comma-separated values")
    return tuple(parts)


def _parse_box(text):
    lo, hi = _parse_vector(text, 2)
    return ((lo, hi), (lo, hi), (lo, hi))


def _load_config_file(path):
    """Flat key = value file; '#' starts a comment."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = val.strip("\"'")
    return values


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="surfdarcy",
        description="Stabilized cut finite element solver for surface Darcy flow",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=str, default=None, help="key=value config file")
        p.add_argument("--tau", type=float, default=0.1, help="stabilization parameter")
        p.add_argument("--alpha", type=float, default=2.0, help="stabilization h-exponent")
        p.add_argument("--ncells0", type=int, default=DEFAULT_N_CELLS)
        p.add_argument("--box", type=_parse_box, default=_parse_box("-1.65,1.65"))
        p.add_argument("--offset", type=_parse_vector, default=(0.0, 0.0, 0.0))
        p.add_argument("--quad-degree", type=int, default=4)
        p.add_argument("--quad-degree-err", type=int, default=6)
        p.add_argument("--seed", type=int, default=0)

    conv = sub.add_parser("converge", help="run a convergence study")
    conv.add_argument("--case", type=int, required=True, help="study case 1..6")
    conv.add_argument("--levels", type=int, default=3, help="finest refinement level")
    conv.add_argument("--csv", type=str, default=None)
    conv.add_argument("--markdown", type=str, default=None)
    conv.add_argument("--vtk-dir", type=str, default=None)
    add_common(conv)

    check = sub.add_parser("check", help="run the property-check suites")
    check.add_argument("--levels", type=int, default=3)
    check.add_argument("--translations", type=int, default=20)
    add_common(check)

    exp = sub.add_parser("export", help="solve one level and write VTK files")
    exp.add_argument("--case", type=int, required=True)
    exp.add_argument("--level", type=int, default=1)
    exp.add_argument("--vtk-dir", type=str, required=True)
    add_common(exp)
    return parser


def _apply_config_file(parser, argv):
    """Pre-parse --config and install file values as defaults (flags win)."""
    if "--config" not in argv:
        return
    idx = argv.index("--config")
    path = argv[idx + 1]
    values = _load_config_file(path)
    converters = {
        "box": _parse_box,
        "offset": _parse_vector,
        "tau": float,
        "alpha": float,
        "ncells0": int,
        "levels": int,
        "translations": int,
        "case": int,
        "level": int,
        "quad_degree": int,
        "quad_degree_err": int,
        "seed": int,
    }
    defaults = {}
    for key, val in values.items():
        conv = converters.get(key, str)
        defaults[key] = conv(val)
    for action in parser._subparsers._group_actions[0].choices.values():
        action.set_defaults(**{k: v for k, v in defaults.items()})


def _validate(args):
    if getattr(args, "case", None) is not None and args.case not in CASE_TABLE:
        raise ValueError(f"case must be in {sorted(CASE_TABLE)}")
    if args.tau <= 0.0:
        raise ValueError("tau must be positive")
    if not 0.0 <= args.alpha <= 2.0:
        raise ValueError("alpha must lie in [0, 2]")
    if getattr(args, "levels", 1) > 4:
        raise ValueError("levels > 4 not supported in the study configuration")


def _config_from_args(args):
    return dict(
        tau=args.tau,
        alpha=args.alpha,
        n_cells0=args.ncells0,
        box=args.box,
        offset=args.offset,
        quad_degree=args.quad_degree,
        quad_degree_err=args.quad_degree_err,
    )


def _cmd_converge(args):
    config = case_config(args.case, **_config_from_args(args))
    print(
        f"case {args.case}: orders (k_u, k_p, k_g) = "
        f"({config.k_u}, {config.k_p}, {config.k_g}), "
        f"stabilization = {config.stab.value}, tau = {config.tau}, alpha = {config.alpha}"
    )
    report = run_case(config, levels=args.levels, case=args.case)
    print(report_to_markdown(report), end="")
    if args.csv:
        Path(args.csv).write_text(report_to_csv(report))
        print(f"wrote {args.csv}")
    if args.markdown:
        Path(args.markdown).write_text(report_to_markdown(report))
        print(f"wrote {args.markdown}")
    if args.vtk_dir:
        _export_level(args, args.levels, Path(args.vtk_dir))
    return 0


def _export_level(args, level, outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    config = case_config(args.case, **_config_from_args(args))
    exact = ManufacturedSolution(offset=config.offset)
    mesh = build_background(config.box, config.n_cells0)
    for _ in range(level):
        mesh = refine_uniform(mesh)
    out = run_level(config, mesh, exact)
    vspace, pspace = out["spaces"]
    ds = out["ds"]
    solution = out["solution"]

    nodes, normals = vtk_io.surface_node_points(ds)
    flat = nodes.reshape(-1, 3)
    cells = np.repeat(ds.cell_active, nodes.shape[1])
    p_vals = fe_space.evaluate(pspace, solution.p_coeffs, cells, flat)
    u_vals = np.stack(
        [fe_space.evaluate(vspace, solution.u_coeffs[c], cells, flat) for c in range(3)],
        axis=1,
    )
    surface_path = outdir / f"surface_case{args.case}_level{level}.vtk"
    vtk_io.export_surface(
        surface_path,
        ds,
        point_data={
            "pressure": p_vals,
            "velocity": u_vals,
            "speed": np.linalg.norm(u_vals, axis=1),
            "normal": normals.reshape(-1, 3),
        },
    )
    mesh_path = outdir / f"active_mesh_case{args.case}_level{level}.vtk"
    vtk_io.export_active_mesh(mesh_path, out["active"])
    print(f"wrote {surface_path}")
    print(f"wrote {mesh_path}")
    return 0


def _cmd_check(args):
    suites = [
        manufactured_residual_suite(offset=args.offset, seed=args.seed),
        geometric_rate_suite(
            offset=args.offset,
            levels=tuple(range(1, args.levels + 1)),
            n_cells0=args.ncells0,
            box=args.box,
        ),
        lemma_ratio_suite(
            offset=args.offset,
            levels=tuple(range(1, args.levels + 1)),
            tau=args.tau,
            alpha=args.alpha,
            seed=args.seed,
        ),
        positioning_suite(
            level=min(args.levels, 2),
            n_translations=args.translations,
            tau=args.tau,
            alpha=args.alpha,
            seed=args.seed,
        ),
    ]
    failed = False
    for suite in suites:
        status = "PASS" if suite.passed else "FAIL"
        print(f"[{status}] {suite.name}")
        for line in suite.lines:
            print(f"  {line}")
        failed = failed or not suite.passed
    return 3 if failed else 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        _validate(args)
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "converge":
            return _cmd_converge(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "export":
            return _export_level(args, args.level, Path(args.vtk_dir))
    except (SingularSystemError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
