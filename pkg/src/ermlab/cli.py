"""Command-line entry point: ``ermlab <subcommand> CONFIG -o OUTDIR``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 property violation under ``--check``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .certify import certify_assumption1
from .errors import ConfigError, NotConverged, ScaleOutOfRange, TooFewAtoms, TooManySigns
from .geometry import (Annulus, Ball, cover_annulus, h_diameter, project_to_ball,
                       sample_annulus, seminorm_cover_distances)
from .losses import EmpiricalObjective
from .processes import OffsetProcessInstance, ball_grid, exp_moment_exhaustive
from .reporting import (CERTIFY_COLUMNS, COVER_SUMMARY_COLUMNS, EXPMOMENT_COLUMNS,
                        SOLVE_COLUMNS, emit_reports, load_sweep, write_resolved, write_table)
from .risk_lab import (bound_domination_ratio, calibrate_constant, distribution_for,
                       resolve_threads, run_sweep, trial_rng)
from .solver import excess_risk, minimize_empirical, minimize_population, tolerance_for

log = logging.getLogger("ermlab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
SLOPE_N_RANGE = (-1.25, -0.80)
SLOPE_D_RANGE = (0.5, 1.5)
DOMINATION_FACTOR = 4.0
REFINE_RTOL = 1e-3


def _setup(cfg, d):
    exp = cfg.experiment()
    loss = exp.loss()
    dist = distribution_for(exp, d)
    domain = Ball.centered(d, loss.domain_radius)
    w_star = minimize_population(loss, dist, domain, tol=1e-9).w_hat
    return loss, dist, domain, w_star


def _draw_sample(cfg, loss, dist, d, n, index):
    rng = trial_rng(cfg.trial_seed, d, n, index)
    counts = rng.multinomial(n, dist.probabilities)
    keep = counts > 0
    return EmpiricalObjective(loss, dist.x[keep], dist.y[keep], counts[keep])


def run_certify(cfg, out: Path, threads: int):
    rows, failures = [], []
    digest = cfgmod.config_hash(cfg)
    for d in cfg.dims:
        loss, dist, domain, w_star = _setup(cfg, d)
        for n in cfg.ns:
            for s in range(cfg.cert_samples):
                obj = _draw_sample(cfg, loss, dist, d, n, s)
                report = certify_assumption1(obj, cfg.cert_trials, cfg.trial_seed + s,
                                             w_star=w_star, domain=domain)
                rows.extend(report.rows())
                failures += [f"{loss.name} d={d} n={n} sample={s}: {k}"
                             for k, ok in report.flags().items() if not ok]
    write_table(out / "certify.csv", CERTIFY_COLUMNS, rows, digest)
    return failures, []


def run_solve(cfg, out: Path, threads: int):
    rows, numeric = [], []
    digest = cfgmod.config_hash(cfg)
    width = max(cfg.dims)
    for d in cfg.dims:
        loss, dist, domain, w_star = _setup(cfg, d)
        for n in cfg.ns:
            obj = _draw_sample(cfg, loss, dist, d, n, 0)
            try:
                res = minimize_empirical(obj, domain, tolerance_for(loss, d, n))
            except NotConverged as exc:
                res = exc.result
                numeric.append(f"d={d} n={n}: {exc}")
            w = list(res.w_hat) + [""] * (width - d)
            rows.append([d, n, res.objective, res.gradient_map_norm, res.iterations,
                         res.converged, excess_risk(loss, dist, res.w_hat, w_star), *w])
    header = [*SOLVE_COLUMNS, *(f"w{i + 1}" for i in range(width))]
    write_table(out / "solve.csv", header, rows, digest)
    return [f"not converged: {m}" for m in numeric], numeric


def run_cover(cfg, out: Path, threads: int):
    digest = cfgmod.config_hash(cfg)
    summary, failures = [], []
    n = cfg.ns[0]
    for d in cfg.dims:
        loss, dist, domain, w_star = _setup(cfg, d)
        obj = _draw_sample(cfg, loss, dist, d, n, 0)
        ann = Annulus(domain, w_star, obj.h, 0.0, cfg.cover_r)
        net = cover_annulus(ann, cfg.cover_u, cfg.distribution_seed)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.trial_seed, spawn_key=(d,)))
        pts = sample_annulus(ann, rng, cfg.verify_points)
        worst = float(seminorm_cover_distances(net, obj.h, pts).max()) if len(pts) else 0.0
        covered = worst <= cfg.cover_u
        size_ok = len(net) <= net.certificate and len(net) <= net.packing_bound
        summary.append([d, cfg.cover_r, cfg.cover_u, len(net), net.certificate,
                        net.packing_bound, worst, covered, covered and size_ok])
        if not (covered and size_ok):
            failures.append(f"cover d={d}: covered={covered} size_ok={size_ok}")
        write_table(out / f"cover_d{d}.csv", ["index", *(f"w{i + 1}" for i in range(d))],
                    ([i, *p] for i, p in enumerate(net.points)), digest)
    write_table(out / "cover_summary.csv", COVER_SUMMARY_COLUMNS, summary, digest)
    return failures, []


def _eval_set(cfg, domain, obj, w_star, refine: bool):
    d = domain.dim
    if d == 1:
        per_axis = cfg.grid if not refine else 2 * cfg.grid - 1
        return np.vstack([ball_grid(domain, per_axis), w_star])
    if d == 2:
        per_axis = cfg.grid_2d if not refine else 2 * cfg.grid_2d - 1
        return np.vstack([ball_grid(domain, per_axis), w_star])
    diam = h_diameter(domain, obj.h)
    ratio = cfg.net_ratio * (2 if refine else 1)
    ann = Annulus(domain, w_star, obj.h, 0.0, diam)
    net = cover_annulus(ann, diam / ratio, cfg.distribution_seed)
    return np.vstack([project_to_ball(domain, net.points), w_star])


def run_expmoment(cfg, out: Path, threads: int):
    rows, failures = [], []
    digest = cfgmod.config_hash(cfg)
    for d in cfg.dims:
        loss, dist, domain, w_star = _setup(cfg, d)
        for n in cfg.ns:
            obj = _draw_sample(cfg, loss, dist, d, n, 0)
            eval_set = _eval_set(cfg, domain, obj, w_star, refine=False)
            res = exp_moment_exhaustive(OffsetProcessInstance(obj, w_star, eval_set), threads)
            rel = float("nan")
            ok = res.within_bound
            if cfg.refine:
                fine = _eval_set(cfg, domain, obj, w_star, refine=True)
                res2 = exp_moment_exhaustive(OffsetProcessInstance(obj, w_star, fine), threads)
                rel = abs(res2.moment - res.moment) / res.moment
                ok = ok and rel < REFINE_RTOL
            rows.append([d, n, res.lam, res.log_moment, res.bound_log, ok, len(eval_set), rel])
            if not ok:
                failures.append(f"expmoment d={d} n={n}: log_moment={res.log_moment} rel={rel}")
    write_table(out / "expmoment.csv", EXPMOMENT_COLUMNS, rows, digest)
    return failures, []


def sweep_violations(result) -> list[str]:
    """Property checks applied to a finished sweep under ``--check``."""
    problems = []
    exp = result.config
    for (d, n), cell in sorted(result.cells.items()):
        if np.any(cell.excess < -1e-12):
            problems.append(f"negative excess risk in cell d={d} n={n}")
        ordered = [cell.quantiles[dl] for dl in sorted(exp.deltas, reverse=True)]
        if any(b < a for a, b in zip(ordered, ordered[1:])):
            problems.append(f"quantiles not monotone in delta for d={d} n={n}")
    for s in result.slopes():
        if s.statistic == "median":
            continue
        lo, hi = SLOPE_N_RANGE if s.kind == "n" else SLOPE_D_RANGE
        if not lo <= s.slope <= hi:
            problems.append(f"slope in {s.kind} at {s.fixed} ({s.statistic}) = {s.slope:.3f}")
    d0, n0 = min(result.cells)
    delta0 = exp.deltas[0]
    c = calibrate_constant(result, d0, n0, delta0)
    worst = bound_domination_ratio(result, c)
    if worst > DOMINATION_FACTOR:
        problems.append(f"bound domination ratio {worst:.3f} exceeds {DOMINATION_FACTOR}")
    return problems


def run_sweep_cmd(cfg, out: Path, threads: int):
    result = run_sweep(cfg.experiment(), threads=threads)
    emit_reports(result, out, cfg)
    numeric = [f"cell d={d} n={n}: {c.flagged} unconverged trials"
               for (d, n), c in sorted(result.cells.items()) if c.failed]
    return sweep_violations(result), numeric


def run_report(cfg, out: Path, threads: int, source: Path):
    result = load_sweep(source / "trials.csv", cfg.experiment())
    emit_reports(result, out, cfg)
    numeric = [f"cell d={d} n={n}: {c.flagged} unconverged trials"
               for (d, n), c in sorted(result.cells.items()) if c.failed]
    return sweep_violations(result), numeric


RUNNERS = {
    "certify": run_certify,
    "solve": run_solve,
    "cover": run_cover,
    "expmoment": run_expmoment,
    "risk-sweep": run_sweep_cmd,
}


def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  {k:<18} {v}" for k, v in cfgmod.HELP.items())
    defaults = cfgmod.format_config(cfgmod.RunConfig())
    parser = argparse.ArgumentParser(
        prog="ermlab",
        description="Excess-risk experiments for ERM with exp-concave losses.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"config keys:\n{keys}\n\ndefaults:\n{defaults}",
    )
    parser.add_argument("subcommand", choices=[*RUNNERS, "report"])
    parser.add_argument("config", type=Path, help="flat key=value config file")
    parser.add_argument("-o", "--output-dir", type=Path, default=Path("ermlab-out"))
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (repeatable)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker count (default: $ERMLAB_THREADS or all CPUs)")
    parser.add_argument("--input", type=Path, default=None,
                        help="report: directory holding trials.csv from a previous sweep")
    parser.add_argument("--check", action="store_true",
                        help="run property checks on the fresh outputs")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if not args.config.is_file():
            raise ConfigError(f"config file {args.config} does not exist")
        cfg = cfgmod.parse_config(args.config, args.overrides)
        if args.subcommand == "report" and args.input is None:
            raise ConfigError("report needs --input DIR")
        args.output_dir.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"ermlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    threads = resolve_threads(args.threads)
    write_resolved(cfg, args.output_dir)
    try:
        if args.subcommand == "report":
            violations, numeric = run_report(cfg, args.output_dir, threads, args.input)
        else:
            violations, numeric = RUNNERS[args.subcommand](cfg, args.output_dir, threads)
    except (ConfigError, TooManySigns, ScaleOutOfRange, TooFewAtoms) as exc:
        print(f"ermlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotConverged as exc:
        print(f"ermlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for msg in numeric:
        print(f"ermlab: numerical failure: {msg}", file=sys.stderr)
    if numeric:
        return EXIT_NUMERIC
    if args.check:
        for msg in violations:
            print(f"ermlab: check failed: {msg}", file=sys.stderr)
        if violations:
            return EXIT_CHECK
        log.info("all checks passed")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
