"""CSV / TSV writers and readers for experiment outputs.

Every file starts with ``# config-hash: <hex>``.  Floats are written with 17
significant digits, so rereading a file reproduces the values exactly.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .config import RunConfig, config_hash, format_config
from .risk_lab import CellResult, ExperimentConfig, RiskSweepResult, theory_bound

TRIALS_COLUMNS = ("d", "n", "trial", "excess_risk", "converged")
SUMMARY_COLUMNS = ("d", "n", "delta", "quantile", "mean", "theory_bound", "ratio", "flagged")
RATES_COLUMNS = ("kind", "fixed", "statistic", "slope", "stderr", "intercept")
CERTIFY_COLUMNS = ("loss", "d", "n", "trials", "check", "worst_value", "limit", "pass")
COVER_COLUMNS = ("index",)  # followed by w1..wd
COVER_SUMMARY_COLUMNS = ("d", "r", "u", "size", "bound_6r_u", "packing_bound",
                         "max_cover_distance", "covered", "pass")
EXPMOMENT_COLUMNS = ("d", "n", "lambda", "log_moment", "paper_bound_log", "pass",
                     "grid_points", "refined_rel_change")
SOLVE_COLUMNS = ("d", "n", "objective", "gradient_map_norm", "iterations", "converged",
                 "excess_risk")  # followed by w1..wd


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_table(path: Path, header, rows, digest: str, delimiter: str = ",") -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# config-hash: {digest}\n")
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_table(path: Path) -> tuple[str, list[dict]]:
    with Path(path).open() as fh:
        first = fh.readline()
        if not first.startswith("# config-hash:"):
            raise ValueError(f"{path} lacks a config-hash line")
        digest = first.split(":", 1)[1].strip()
        return digest, list(csv.DictReader(fh))


def write_resolved(cfg: RunConfig, out_dir: Path) -> Path:
    path = Path(out_dir) / "config.resolved"
    path.write_text(format_config(cfg))
    return path


def trial_rows(result: RiskSweepResult):
    for (d, n), cell in sorted(result.cells.items()):
        for t, (e, ok) in enumerate(zip(cell.excess, cell.converged)):
            yield (d, n, t, float(e), bool(ok))


def summary_rows(result: RiskSweepResult, c: float, corollary: bool = False):
    loss = result.config.loss()
    for (d, n), cell in sorted(result.cells.items()):
        for delta in result.config.deltas:
            q = cell.quantiles[delta]
            bound = theory_bound(loss, d, n, delta, c, corollary)
            yield (d, n, delta, q, cell.mean, bound, q / bound, cell.flagged)


def emit_reports(result: RiskSweepResult, out_dir, cfg: RunConfig,
                 include_trials: bool = True) -> list[Path]:
    """Write trials/summary/rates CSVs and log-log plot data."""
    if not result.cells:
        raise ValueError("cannot report an empty sweep")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)
    written = [write_resolved(cfg, out)]
    if include_trials:
        written.append(write_table(out / "trials.csv", TRIALS_COLUMNS, trial_rows(result), digest))
    written.append(write_table(out / "summary.csv", SUMMARY_COLUMNS,
                               summary_rows(result, cfg.bound_constant, cfg.corollary), digest))
    slopes = result.slopes()
    written.append(write_table(
        out / "rates.csv", RATES_COLUMNS,
        ((s.kind, s.fixed, s.statistic, s.slope, s.stderr, s.intercept) for s in slopes), digest))
    written.extend(_plotdata(result, out, digest, cfg))
    return written


def _plotdata(result: RiskSweepResult, out: Path, digest: str, cfg: RunConfig) -> list[Path]:
    loss = result.config.loss()
    stats_names = result.statistics()
    header_stats = [f"log_{s}" for s in stats_names]
    header_bounds = [f"log_bound_q{delta!r}" for delta in result.config.deltas]
    paths = []
    exp = result.config
    for d in exp.dims:
        rows = []
        for n in sorted(exp.sample_sizes):
            cell = result.cell(d, n)
            row = [math.log(n)]
            row += [_safe_log(result.statistic(cell, s)) for s in stats_names]
            row += [math.log(theory_bound(loss, d, n, dl, cfg.bound_constant, cfg.corollary))
                    for dl in exp.deltas]
            rows.append(row)
        paths.append(write_table(out / f"plotdata_n_d{d}.tsv",
                                 ["log_n", *header_stats, *header_bounds], rows, digest, "\t"))
    for n in exp.sample_sizes:
        rows = []
        for d in sorted(exp.dims):
            cell = result.cell(d, n)
            row = [math.log(d)]
            row += [_safe_log(result.statistic(cell, s)) for s in stats_names]
            row += [math.log(theory_bound(loss, d, n, dl, cfg.bound_constant, cfg.corollary))
                    for dl in exp.deltas]
            rows.append(row)
        paths.append(write_table(out / f"plotdata_d_n{n}.tsv",
                                 ["log_d", *header_stats, *header_bounds], rows, digest, "\t"))
    return paths


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0 else float("-inf")


def load_sweep(trials_csv, exp: ExperimentConfig) -> RiskSweepResult:
    """Rebuild a sweep result from ``trials.csv`` (``w_star`` is not stored)."""
    _, rows = read_table(trials_csv)
    cells: dict[tuple[int, int], list] = {}
    for row in rows:
        key = (int(row["d"]), int(row["n"]))
        cells.setdefault(key, []).append((int(row["trial"]), float(row["excess_risk"]),
                                          row["converged"] == "1"))
    result = RiskSweepResult(exp)
    for (d, n), items in cells.items():
        items.sort()
        excess = np.array([e for _, e, _ in items])
        conv = np.array([ok for _, _, ok in items], dtype=bool)
        result.cells[(d, n)] = CellResult(d, n, excess, conv, None, exp.deltas)
    return result
