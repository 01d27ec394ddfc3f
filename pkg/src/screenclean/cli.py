"""Command-line front end: analyze a CSV, replicate the study tables, or
run the persistence experiment.

Commands
--------
analyze      three-stage selection on a user CSV (column ``y`` + covariates)
simulate     one simulation cell: design x screener x splitting scheme
tables       the full operating-characteristic tables (or a cell filter)
persistence  the radius-selection trend experiment

Every command takes ``--seed`` and is bit-reproducible: identical flags and
seed give byte-identical output files. A JSON config file (``--config``)
can supply any long-flag value; explicit flags win on conflict. Output CSVs
start with a comment line recording the package version, the seed, and a
hash of the resolved configuration.

Exit codes: 0 success, 2 input/config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .cleaner import sandwich
from .core import Dataset
from .errors import DataError, NumericError, TooFewRowsError
from .pipeline import KRule, PipelineConfig, SplitScheme, run_screen_and_clean
from .screeners import ScreenMethod
from .simulation import (
    ADAPTIVE,
    CellSpec,
    ModelKind,
    SimModel,
    run_cell,
    run_table,
    table1_rows,
    table2_rows,
    SCREENERS,
)
from .persistence import run_trend_experiment

_SCREENER_NAMES = tuple(m.value for m in ScreenMethod)
_SPLIT_NAMES = tuple(s.value for s in SplitScheme)
_KRULE_NAMES = tuple(k.value for k in KRule)


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------

def _apply_config_file(args: argparse.Namespace) -> None:
    """Fill unset flags from the JSON config file; flags always win."""
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config) as fh:
            loaded = json.load(fh)
    except OSError as err:
        raise DataError(f"cannot read config file: {err}")
    except json.JSONDecodeError as err:
        raise DataError(f"config file is not valid JSON: {err}")
    if not isinstance(loaded, dict):
        raise DataError("config file must hold a JSON object")
    for key, value in loaded.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise DataError(f"unknown config key {key!r}")
        if getattr(args, dest) is None:
            setattr(args, dest, value)


def _fill(args: argparse.Namespace, defaults: dict) -> dict:
    """Apply hard defaults after the config file; returns the resolved
    mapping used for hashing."""
    resolved = {}
    for key, default in defaults.items():
        value = getattr(args, key)
        if value is None:
            value = default
        setattr(args, key, value)
        resolved[key] = value
    return resolved


def _config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _comment(seed, cfg_hash: str) -> str:
    return f"# screenclean {__version__} | seed={seed} | config={cfg_hash}"


def _write_csv(path: str, comment: str, header: list[str],
               rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(comment + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.10g}"
    return str(value)


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _read_csv_dataset(path: str) -> Dataset:
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        raw = [row for row in reader
               if row and not row[0].lstrip().startswith("#")]
    if len(raw) < 2:
        raise DataError("CSV needs a header row and at least one data row")
    header = [h.strip() for h in raw[0]]
    if "y" not in header:
        raise DataError("CSV has no 'y' column (response must be named y)")
    y_col = header.index("y")
    x_names = tuple(h for i, h in enumerate(header) if i != y_col)
    if not x_names:
        raise DataError("CSV has no covariate columns besides y")
    y_vals, x_vals = [], []
    for r, row in enumerate(raw[1:], start=2):
        if len(row) != len(header):
            raise DataError(
                f"row {r} has {len(row)} fields, header has {len(header)}")
        vals = []
        for name, cell in zip(header, row):
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(
                    f"non-numeric value {cell.strip()!r} in column "
                    f"{name!r}, row {r}")
        y_vals.append(vals[y_col])
        x_vals.append([v for i, v in enumerate(vals) if i != y_col])
    return Dataset(y=np.array(y_vals), x=np.array(x_vals), names=x_names)


_ANALYZE_DEFAULTS = dict(screener="lasso", splits="trisplit", alpha=0.05,
                         k_rule="sqrt", k_const=5.0, seed=0, grid_size=100,
                         frozen_screen=False, t_critical=False,
                         center_y=False, emit_intermediate=False,
                         output="screenclean_out", threads=1)


def cmd_analyze(args: argparse.Namespace) -> int:
    resolved = _fill(args, _ANALYZE_DEFAULTS)
    resolved["input"] = args.input
    _check_threads(args.threads)
    data = _read_csv_dataset(args.input)
    if data.n < 6:
        raise TooFewRowsError(f"analyze needs at least 6 rows, got {data.n}")
    if args.center_y:
        # no intercepts are ever fitted, so offer mean-centering up front
        data = Dataset(y=data.y - float(data.y.mean()), x=data.x,
                       names=data.names)
    config = PipelineConfig(
        screener=ScreenMethod(args.screener),
        splits=SplitScheme(args.splits),
        alpha=float(args.alpha),
        k_rule=KRule(args.k_rule),
        k_const=float(args.k_const),
        seed=int(args.seed),
        grid_size=int(args.grid_size),
        refold_screen=not args.frozen_screen,
        student=bool(args.t_critical),
    )
    result = run_screen_and_clean(data, config)
    outdir = args.output
    os.makedirs(outdir, exist_ok=True)
    cfg_hash = _config_hash(resolved)
    comment = _comment(args.seed, cfg_hash)
    names = data.column_names()

    cr = result.clean
    rows = [[j + 1, names[j], _fmt(float(c)), _fmt(float(t)),
             _fmt(cr.critical), int(j in cr.d_hat)]
            for j, c, t in zip(cr.s_hat, cr.coef, cr.t_values)]
    _write_csv(os.path.join(outdir, "clean_table.csv"), comment,
               ["variable", "name", "coefficient", "t_value", "critical",
                "kept"], rows)

    lower, upper = sandwich(cr)
    summary = {
        "version": __version__,
        "config": resolved,
        "config_hash": cfg_hash,
        "n": data.n,
        "p": data.p,
        "k_n": result.k_n,
        "split_sizes": [int(g.size) for g in result.plan.indices],
        "lambda": result.score.lam,
        "l_hat": result.score.l_hat,
        "selected": [j + 1 for j in cr.s_hat],
        "selected_names": [names[j] for j in cr.s_hat],
        "kept": [j + 1 for j in cr.d_hat],
        "kept_names": [names[j] for j in cr.d_hat],
        "critical": cr.critical,
        "alpha": cr.alpha,
        "perfect_fit": cr.perfect_fit,
        "sandwich": {"lower": [j + 1 for j in lower],
                     "upper": [j + 1 for j in upper]},
        "warnings": list(result.warnings),
    }
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if args.emit_intermediate:
        prows = [[_fmt(e.lam), len(e.selected),
                  "|".join(str(j + 1) for j in e.selected),
                  "|".join(_fmt(float(c)) for c in e.coef)]
                 for e in result.path.entries]
        _write_csv(os.path.join(outdir, "screen_path.csv"), comment,
                   ["lambda", "size", "selected", "coefficients"], prows)
        crows = [[i, _fmt(float(lam)), int(sz), _fmt(float(mse))]
                 for i, (lam, sz, mse) in enumerate(
                     zip(result.cv_lambdas, result.cv_sizes, result.cv_mse))]
        _write_csv(os.path.join(outdir, "cv_curve.csv"), comment,
                   ["index", "lambda", "size", "l_hat"], crows)

    kept_names = ", ".join(names[j] for j in cr.d_hat) or "(none)"
    sel_names = ", ".join(names[j] for j in cr.s_hat) or "(none)"
    print(f"selected ({len(cr.s_hat)}): {sel_names}")
    print(f"kept ({len(cr.d_hat)}): {kept_names}")
    print(f"critical value: {_fmt(cr.critical)}  alpha: {cr.alpha}")
    print(f"report written to {outdir}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _build_model(kind: str, n: int, p: int, delta, rho, tau,
                 sigma: float) -> SimModel:
    try:
        mk = ModelKind(kind.upper())
    except ValueError:
        raise DataError(f"unknown model {kind!r} (choose A, B, C or D)")
    if mk is ModelKind.A:
        return SimModel.model_a(n, p, sigma=sigma)
    if mk is ModelKind.B:
        if delta is None:
            raise DataError("model B needs --delta")
        return SimModel.model_b(n, p, delta=float(delta), sigma=sigma)
    if mk is ModelKind.C:
        if delta is None:
            raise DataError("model C needs --delta")
        return SimModel.model_c(n, p, delta=float(delta),
                                rho=0.5 if rho is None else float(rho),
                                sigma=sigma)
    return SimModel.model_d(n, rho=0.95 if rho is None else float(rho),
                            tau=0.01 if tau is None else float(tau),
                            sigma=sigma)


_SIMULATE_DEFAULTS = dict(model="B", n=100, p=100, delta=None, rho=None,
                          tau=None, sigma=1.0, screener="lasso",
                          splits="trisplit", alpha=0.05, replicates=100,
                          seed=0, grid_size=100, frozen_screen=False,
                          output="screenclean_out", threads=1)


def cmd_simulate(args: argparse.Namespace) -> int:
    user_p = args.p
    resolved = _fill(args, _SIMULATE_DEFAULTS)
    _check_threads(args.threads)
    if int(args.replicates) < 1:
        raise DataError("replicates must be >= 1")
    if str(args.model).upper() == "D":
        # refuse a contradictory --p rather than silently ignoring it
        if user_p is not None and int(user_p) != 10:
            raise DataError("model D is defined for p = 10")
        args.p = 10
        resolved["p"] = 10
    delta = args.delta
    if delta is None and args.model in ("B", "C"):
        delta = 0.5 if int(args.p) <= 100 else 1.5
        resolved["delta"] = delta
    model = _build_model(args.model, int(args.n), int(args.p), delta,
                         args.rho, args.tau, float(args.sigma))
    method = (ADAPTIVE if args.screener == ADAPTIVE
              else ScreenMethod(args.screener))
    spec = CellSpec(model=model, method=method,
                    splits=SplitScheme(args.splits), alpha=float(args.alpha))
    result = run_cell(spec, int(args.replicates), int(args.seed),
                      grid_size=int(args.grid_size),
                      refold_screen=not args.frozen_screen)
    row = result.row
    outdir = args.output
    os.makedirs(outdir, exist_ok=True)
    cfg_hash = _config_hash(resolved)
    header = ["model", "n", "p", "sigma", "screener", "splits", "alpha",
              "replicates", "size", "power", "fpr", "coverage", "se_size",
              "se_power", "se_fpr", "se_coverage", "failures"]
    out_row = [model.kind.value, model.n, model.p, _fmt(model.sigma),
               args.screener, args.splits, _fmt(float(args.alpha)),
               row.replicates, _fmt(row.size), _fmt(row.power_av),
               _fmt(row.fpr), _fmt(row.coverage), _fmt(row.size_se),
               _fmt(row.power_se), _fmt(row.fpr_se), _fmt(row.coverage_se),
               len(result.failures)]
    _write_csv(os.path.join(outdir, "simulate.csv"),
               _comment(args.seed, cfg_hash), header, [out_row])
    print(f"model {model.kind.value} n={model.n} p={model.p} "
          f"{args.screener}/{args.splits}: size={row.size:.3f} "
          f"power={row.power_av:.3f} fpr={row.fpr:.4f} "
          f"({row.replicates} replicates, {len(result.failures)} failures)")
    print(f"report written to {outdir}")
    return 0


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

_TABLES_DEFAULTS = dict(table=1, replicates=1000, replicates_large=None,
                        cells=None, alpha=0.05, seed=0, grid_size=100,
                        frozen_screen=False, output="screenclean_out",
                        threads=1)


def _parse_cell_filter(spec: str) -> list[str]:
    tokens = [t.strip() for t in spec.split(";") if t.strip()]
    if not tokens:
        raise DataError("empty --cells filter")
    return tokens


def _row_key(row, table: int) -> str:
    m = row.model
    if table == 1:
        return f"{row.splits_label},{m.n},{m.p},{m.kind.value}"
    return f"{m.n},{m.p},{m.kind.value}"


def cmd_tables(args: argparse.Namespace) -> int:
    resolved = _fill(args, _TABLES_DEFAULTS)
    _check_threads(args.threads)
    table = int(args.table)
    if table not in (1, 2):
        raise DataError(f"--table must be 1 or 2, got {args.table}")
    replicates = int(args.replicates)
    if replicates < 10:
        raise DataError("tables need --replicates >= 10")
    reps_large = (None if args.replicates_large is None
                  else int(args.replicates_large))

    rows = table1_rows() if table == 1 else table2_rows()
    if args.cells:
        wanted = _parse_cell_filter(args.cells)
        keys = {_row_key(r, table): r for r in rows}
        missing = [t for t in wanted if t not in keys]
        if missing:
            raise DataError(
                f"unknown cell filter {missing[0]!r}; rows look like "
                f"{next(iter(keys))!r}")
        rows = [keys[t] for t in wanted]

    cells = []
    for row in rows:
        reps = (reps_large if (reps_large is not None and row.model.p >= 1000)
                else None)
        if table == 1:
            for method in SCREENERS:
                cells.append(CellSpec(model=row.model, method=method,
                                      splits=row.scheme,
                                      alpha=float(args.alpha),
                                      replicates=reps))
        else:
            cells.append(CellSpec(model=row.model, method=ADAPTIVE,
                                  splits=None, alpha=float(args.alpha),
                                  replicates=reps))

    def progress(done, total, res):
        spec = res.spec
        label = (spec.method if isinstance(spec.method, str)
                 else spec.method.value)
        print(f"[{done}/{total}] model {spec.model.kind.value} "
              f"n={spec.model.n} p={spec.model.p} {label}: "
              f"size={res.row.size:.3f} power={res.row.power_av:.3f}",
              flush=True)

    results = run_table(cells, replicates, int(args.seed),
                        grid_size=int(args.grid_size),
                        refold_screen=not args.frozen_screen,
                        progress=progress)

    outdir = args.output
    os.makedirs(outdir, exist_ok=True)
    cfg_hash = _config_hash(resolved)
    comment = _comment(args.seed, cfg_hash)
    if table == 1:
        header = ["splits", "n", "p", "model",
                  "size_lasso", "size_stepwise", "size_marginal",
                  "power_lasso", "power_stepwise", "power_marginal",
                  "se_size_lasso", "se_size_stepwise", "se_size_marginal",
                  "se_power_lasso", "se_power_stepwise", "se_power_marginal",
                  "replicates"]
        out_rows = []
        for i, row in enumerate(rows):
            trio = results[3 * i: 3 * i + 3]
            out_rows.append(
                [row.splits_label, row.model.n, row.model.p,
                 row.model.kind.value]
                + [_fmt(r.row.size) for r in trio]
                + [_fmt(r.row.power_av) for r in trio]
                + [_fmt(r.row.size_se) for r in trio]
                + [_fmt(r.row.power_se) for r in trio]
                + [trio[0].row.replicates])
        path = os.path.join(outdir, "table1.csv")
    else:
        header = ["n", "p", "model", "size", "power", "fpr",
                  "se_size", "se_power", "se_fpr", "replicates"]
        out_rows = []
        for row, res in zip(rows, results):
            out_rows.append([row.model.n, row.model.p, row.model.kind.value,
                             _fmt(res.row.size), _fmt(res.row.power_av),
                             _fmt(res.row.fpr), _fmt(res.row.size_se),
                             _fmt(res.row.power_se), _fmt(res.row.fpr_se),
                             res.row.replicates])
        path = os.path.join(outdir, "table2.csv")
    _write_csv(path, comment, header, out_rows)
    failures = sum(len(r.failures) for r in results)
    print(f"wrote {path} ({len(out_rows)} rows, {failures} failed replicates)")
    return 0


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_PERSIST_DEFAULTS = dict(n_values="100,400,1600", replicates=50, p=20,
                         delta=0.5, sigma=1.0, grid=50, omega_max=None,
                         seed=0, output="screenclean_out", threads=1)


def cmd_persistence(args: argparse.Namespace) -> int:
    resolved = _fill(args, _PERSIST_DEFAULTS)
    _check_threads(args.threads)
    try:
        n_values = tuple(int(t) for t in str(args.n_values).split(",") if t)
    except ValueError:
        raise DataError(f"--n-values must be comma-separated integers, "
                        f"got {args.n_values!r}")
    if not n_values:
        raise DataError("--n-values is empty")
    omega_max = None if args.omega_max is None else float(args.omega_max)
    result = run_trend_experiment(
        n_values=n_values, replicates=int(args.replicates),
        master_seed=int(args.seed), p=int(args.p), delta=float(args.delta),
        sigma=float(args.sigma), grid=int(args.grid), omega_max=omega_max)

    outdir = args.output
    os.makedirs(outdir, exist_ok=True)
    cfg_hash = _config_hash(resolved)
    comment = _comment(args.seed, cfg_hash)
    curve_rows = []
    for curve in result.curves:
        for i in range(curve.radii.size):
            curve_rows.append([curve.n, _fmt(float(curve.radii[i])),
                               _fmt(float(curve.holdout_mse[i])),
                               _fmt(float(curve.population_risk[i])),
                               _fmt(float(curve.l1_norms[i]))])
    _write_csv(os.path.join(outdir, "persistence_curve.csv"), comment,
               ["n", "radius", "empirical_risk", "population_risk",
                "l1_norm"], curve_rows)
    sum_rows = [[r.n, _fmt(r.omega), _fmt(r.median_gap), _fmt(r.mean_gap),
                 r.replicates] for r in result.rows]
    _write_csv(os.path.join(outdir, "persistence_summary.csv"), comment,
               ["n", "omega", "median_gap", "mean_gap", "replicates"],
               sum_rows)
    for r in result.rows:
        print(f"n={r.n}: omega={r.omega:.4f} median gap={r.median_gap:.6g} "
              f"mean gap={r.mean_gap:.6g} ({r.replicates} replicates)")
    print(f"report written to {outdir}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _check_threads(threads) -> None:
    if threads is not None and int(threads) < 1:
        raise DataError("--threads must be >= 1")


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--seed", type=int, default=None,
                    help="master seed; same seed, same bytes out (default 0)")
    sp.add_argument("--output", default=None, metavar="DIR",
                    help="report directory (default screenclean_out)")
    sp.add_argument("--config", default=None, metavar="JSON",
                    help="JSON file of flag values; explicit flags win")
    sp.add_argument("--threads", type=int, default=None,
                    help="worker cap for independent cells; results never "
                         "depend on it (seeds are pre-assigned)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="screenclean",
        description="Multi-stage variable selection: screen, cross-validate, "
                    "clean with multiplicity-corrected t-tests.")
    parser.add_argument("--version", action="version",
                        version=f"screenclean {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="three-stage selection on a CSV")
    pa.add_argument("input", help="CSV with a 'y' column plus covariates")
    pa.add_argument("--screener", choices=_SCREENER_NAMES, default=None)
    pa.add_argument("--splits", choices=_SPLIT_NAMES, default=None)
    pa.add_argument("--alpha", type=float, default=None)
    pa.add_argument("--k-rule", choices=_KRULE_NAMES, default=None,
                    help="screening budget: sqrt(n) or k-const*log(n)")
    pa.add_argument("--k-const", type=float, default=None)
    pa.add_argument("--grid-size", type=int, default=None,
                    help="lasso penalty grid size (default 100)")
    pa.add_argument("--frozen-screen", action="store_true", default=None,
                    help="freeze the full-split screen during LOO folds")
    pa.add_argument("--t-critical", action="store_true", default=None,
                    help="Student t critical value instead of normal")
    pa.add_argument("--center-y", action="store_true", default=None,
                    help="subtract the response mean before analysis "
                         "(no intercept is ever fitted)")
    pa.add_argument("--emit-intermediate", action="store_true", default=None,
                    help="also write screen_path.csv and cv_curve.csv")
    _add_common(pa)
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("simulate", help="run one simulation cell")
    ps.add_argument("--model", choices=("A", "B", "C", "D"), default=None)
    ps.add_argument("--n", type=int, default=None)
    ps.add_argument("--p", type=int, default=None)
    ps.add_argument("--delta", type=float, default=None,
                    help="signal scale for models B/C "
                         "(default 0.5 for p<=100, 1.5 otherwise)")
    ps.add_argument("--rho", type=float, default=None)
    ps.add_argument("--tau", type=float, default=None)
    ps.add_argument("--sigma", type=float, default=None)
    ps.add_argument("--screener", choices=_SCREENER_NAMES + (ADAPTIVE,),
                    default=None)
    ps.add_argument("--splits", choices=_SPLIT_NAMES, default=None)
    ps.add_argument("--alpha", type=float, default=None)
    ps.add_argument("--replicates", type=int, default=None)
    ps.add_argument("--grid-size", type=int, default=None)
    ps.add_argument("--frozen-screen", action="store_true", default=None)
    _add_common(ps)
    ps.set_defaults(func=cmd_simulate)

    pt = sub.add_parser("tables", help="replicate the study tables")
    pt.add_argument("--table", type=int, choices=(1, 2), default=None)
    pt.add_argument("--replicates", type=int, default=None,
                    help="replicates per cell (default 1000, minimum 10)")
    pt.add_argument("--replicates-large", type=int, default=None,
                    help="override replicates on p=1000 designs")
    pt.add_argument("--cells", default=None, metavar="FILTER",
                    help="semicolon-separated row filter, e.g. "
                         "'3,100,100,B' (table 1) or '100,100,B' (table 2)")
    pt.add_argument("--alpha", type=float, default=None)
    pt.add_argument("--grid-size", type=int, default=None)
    pt.add_argument("--frozen-screen", action="store_true", default=None)
    _add_common(pt)
    pt.set_defaults(func=cmd_tables)

    pp = sub.add_parser("persistence",
                        help="radius-selection trend experiment")
    pp.add_argument("--n-values", default=None,
                    help="comma-separated sample sizes (default 100,400,1600)")
    pp.add_argument("--replicates", type=int, default=None)
    pp.add_argument("--p", type=int, default=None)
    pp.add_argument("--delta", type=float, default=None)
    pp.add_argument("--sigma", type=float, default=None)
    pp.add_argument("--grid", type=int, default=None,
                    help="radius grid size (default 50)")
    pp.add_argument("--omega-max", type=float, default=None,
                    help="override the n^(1/5) radius budget")
    _add_common(pp)
    pp.set_defaults(func=cmd_persistence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        return args.func(args)
    except DataError as err:
        stage = getattr(err, "stage", None)
        where = f" [{stage}]" if stage else ""
        print(f"error{where}: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        stage = getattr(err, "stage", None)
        where = f" [{stage}]" if stage else ""
        print(f"numeric failure{where}: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
