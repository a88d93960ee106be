"""Command-line interface.

Subcommands::

    hexmask optimize <config.ini> [--outdir DIR]
    hexmask bench <I|II|III|IV> [--scale F] [--outdir DIR]
    hexmask skeletonize <density.csv> [--out skeleton.csv] [--cs CS] [--svg FILE]
    hexmask analytic --p P --vstar V --xm XM --eps EPS [--skeleton three|two]
    hexmask fd-check <config.ini> [--scale F] [--samples N] [--tol T]
    hexmask render <state.json> [--out final.svg]

Exit codes: 0 success, 1 failed check, 2 usage or input error.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import analytic, config, fem, lengthscale, maskfield, postproc, render, sls
from . import io as hio
from .hexgrid import build_grid
from .skeleton import skeletonize

log = logging.getLogger("hexmask")

OUTPUT_FILES = ("final.svg", "skeleton.svg", "history.csv", "masks.csv", "density.csv", "report.txt")


# ------------------------------------------------------------ run outputs


def write_run_outputs(outdir, cfg, problem, state):
    """Write every artifact of a finished SLS run into ``outdir``.

    Returns
    -------
    dict
        Extra report entries (projection results, load-path connectivity).
    """
    grid = problem.grid
    m = state.final
    proj = postproc.project_with_min_ls(m.field, m.regions, problem.model, problem.kind, problem.scale)
    loops = postproc.smooth_boundary(grid, proj, steps=20)
    ports = [] if problem.model.output_dof is None else [problem.model.output_dof]
    extra = {
        "phi_projected": f"{proj.phi:.6g}",
        "projection_change": f"{proj.relative_change:.6g}",
        "load_path_connected": postproc.load_path_connected(problem.model, m.field.binary(), ports),
        "skeleton_cells": len(m.skeleton.skeleton_cells),
    }
    files = {
        "final.svg": render.render_svg(grid, m.field, masks=state.masks, regions=m.regions),
        "skeleton.svg": render.render_svg(grid, m.field, skeleton=m.skeleton, regions=m.regions),
        "projected.svg": render.render_svg(grid, proj.field, boundary=loops),
        "history.csv": hio.history_csv(state.history),
        "masks.csv": hio.masks_csv(state.masks),
        "density.csv": hio.density_csv(grid, m.field),
        "regions.csv": lengthscale.regions_csv(m.regions),
        "report.txt": hio.report_text(state, extra),
        "state.json": hio.state_json(config.config_to_text(cfg), state),
    }
    for name, text in files.items():
        hio.atomic_write(os.path.join(outdir, name), text)
    return extra


def _run(cfg, outdir):
    problem, sls_cfg = sls.problem_from_config(cfg)
    log.info("grid %dx%d cs=%g, %d masks", cfg.n_cols, cfg.n_rows, cfg.cs, len(problem.masks))
    state = sls.run(problem, sls_cfg)
    write_run_outputs(outdir, cfg, problem, state)
    sys.stdout.write(hio.report_text(state))
    return 0


def cmd_optimize(args):
    cfg = config.load_config(args.config)
    return _run(cfg, args.outdir or cfg.outdir)


def cmd_bench(args):
    cfg = config.benchmark_config(args.name, args.scale)
    return _run(cfg, args.outdir or os.path.join(cfg.outdir, f"bench_{args.name}"))


# ------------------------------------------------------------ skeletonize


def cmd_skeletonize(args):
    n_cols, n_rows, rho = hio.read_density_csv(args.density)
    grid = build_grid(n_cols, n_rows, args.cs)
    result = skeletonize(grid, rho > args.threshold)
    skel = result.mask(grid.n_cells).astype(float)
    out = args.out or os.path.splitext(args.density)[0] + "_skeleton.csv"
    hio.atomic_write(out, hio.density_csv(grid, skel))
    if args.svg:
        hio.atomic_write(args.svg, render.render_svg(grid, rho, skeleton=result))
    solid_cells = int((rho > args.threshold).sum())
    print(f"cells: {grid.n_cells}")
    print(f"solid cells: {solid_cells}")
    print(f"skeleton cells: {len(result.skeleton_cells)}")
    print(f"iterations: {result.iterations}")
    print(f"special case: {result.special_case_triggered}")
    print(f"written: {out}")
    return 0


# ------------------------------------------------------------ analytic


def cmd_analytic(args):
    skeleton = analytic.TWO_MEMBER if args.skeleton == "two" else analytic.THREE_MEMBER
    spec = analytic.TrussSpec(p=args.p, v_star=args.vstar, x_m=args.xm, eps1=args.eps, skeleton=skeleton)
    print(analytic.case_table(spec))
    best = analytic.best_solution(spec)
    if best is None:
        print("no feasible case")
    else:
        print(f"best: case {best.case}, x = ({', '.join(f'{w:.6g}' for w in best.widths)}), SE = {best.strain_energy:.6g}")
    return 0


# ------------------------------------------------------------ fd-check


def fd_check(problem, spec, samples=20, seed=0, rel_step=None, floor=1e-4):
    """Compare analytic and central-difference derivatives.

    The objective, the volume and both length-scale measures are checked
    along ``samples`` randomly chosen parameters. Regions are frozen at the
    base design, matching how the gradients are defined. The default step
    is the cube root of machine epsilon times ``max(1, |x_i|)``, which
    balances truncation against round-off. The error of an
    entry is ``|a - n| / max(|a|_inf, |n|_inf, floor)`` with the norms taken
    over the sampled entries of the same quantity.

    Returns
    -------
    list of (name, index, analytic, numeric, error)
    """
    grid = problem.grid
    masks = problem.masks
    pts = grid.centroids
    fld = maskfield.evaluate_field(grid, masks, problem.model.rho_min)
    regions = lengthscale.build_regions(grid, skeletonize(grid, fld.binary()), spec)

    def values(x):
        f = maskfield.evaluate_field(grid, masks.with_vector(x), problem.model.rho_min)
        phi = fem.objective_density_gradient(problem.model, f, problem.kind, problem.scale)[0]
        return np.array([phi, f.rho.sum(), lengthscale.g_min(f, regions, spec), lengthscale.g_max(f, regions, spec)])

    phi, dphi, _ = fem.objective_density_gradient(problem.model, fld, problem.kind, problem.scale)
    dmin, dmax = lengthscale.density_gradients(fld, regions, spec)
    cols = np.column_stack([dphi, np.ones(grid.n_cells), dmin, dmax])
    grads = maskfield.density_vjp(masks, pts, cols)
    x0 = masks.vector
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(x0.size, size=min(samples, x0.size), replace=False))
    names = ("phi", "volume", "g_min", "g_max")
    if rel_step is None:
        rel_step = np.finfo(float).eps ** (1 / 3)
    diffs = []
    for i in idx:
        h = rel_step * max(1.0, abs(x0[i]))
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        diffs.append((values(xp) - values(xm)) / (2 * h))
    num = np.array(diffs).T
    ana = grads[:, idx]
    # normwise: each error is taken relative to the largest derivative of
    # the same quantity, so entries near zero are not judged on round-off
    scale = np.maximum(np.maximum(np.abs(ana).max(axis=1), np.abs(num).max(axis=1)), floor)
    rows = []
    for col, i in enumerate(idx):
        for k, name in enumerate(names):
            a, n = ana[k, col], num[k, col]
            rows.append((name, int(i), float(a), float(n), float(abs(a - n) / scale[k])))
    return rows


def cmd_fd_check(args):
    cfg = config.load_config(args.config)
    if args.scale != 1.0:
        cfg = cfg.scaled(args.scale)
    problem, sls_cfg = sls.problem_from_config(cfg)
    rows = fd_check(problem, sls_cfg.spec, samples=args.samples, seed=args.seed)
    worst = max(r[4] for r in rows)
    print(f"{'quantity':<8}{'index':>7}{'analytic':>16}{'numeric':>16}{'error':>12}")
    for name, i, a, n, e in rows:
        print(f"{name:<8}{i:>7}{a:>16.8g}{n:>16.8g}{e:>12.3g}")
    ok = worst < args.tol
    print(f"max normwise error {worst:.3g} ({'PASS' if ok else 'FAIL'} at tol {args.tol:g})")
    return 0 if ok else 1


# ------------------------------------------------------------ render


def cmd_render(args):
    with open(args.state, encoding="utf-8") as fh:
        text, masks, _ = hio.parse_state_json(fh.read())
    cfg = config.parse_config(text, source=args.state)
    grid = build_grid(cfg.n_cols, cfg.n_rows, cfg.cs)
    fld = maskfield.evaluate_field(grid, masks, cfg.rho_min)
    regions = lengthscale.build_regions(grid, skeletonize(grid, fld.binary()), config.lengthscale_spec(cfg))
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.state)), "final.svg")
    hio.atomic_write(out, render.render_svg(grid, fld, masks=masks, regions=regions))
    print(f"written: {out}")
    return 0


# ------------------------------------------------------------ entry point


def build_parser():
    p = argparse.ArgumentParser(prog="hexmask", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("optimize", help="run the two-stage driver on a config file")
    s.add_argument("config")
    s.add_argument("--outdir")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("bench", help="run a shipped benchmark")
    s.add_argument("name", choices=config.BENCHMARKS)
    s.add_argument("--scale", type=float, default=1.0, help="mesh and mask count factor")
    s.add_argument("--outdir")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("skeletonize", help="skeleton of a density CSV")
    s.add_argument("density")
    s.add_argument("--out")
    s.add_argument("--cs", type=float, default=1.0, help="cell size")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--svg", help="also render the skeleton to this file")
    s.set_defaults(func=cmd_skeletonize)

    s = sub.add_parser("analytic", help="three-truss KKT case table")
    s.add_argument("--p", type=int, required=True, choices=(1, 2))
    s.add_argument("--vstar", type=float, required=True)
    s.add_argument("--xm", type=float, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--skeleton", choices=("three", "two"), default="three")
    s.set_defaults(func=cmd_analytic)

    s = sub.add_parser("fd-check", help="finite-difference gradient check")
    s.add_argument("config")
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--samples", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-4)
    s.set_defaults(func=cmd_fd_check)

    s = sub.add_parser("render", help="SVG from a saved state.json")
    s.add_argument("state")
    s.add_argument("--out")
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except config.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
