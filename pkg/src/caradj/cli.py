"""Command-line front end.

Subcommands
-----------
analyze    estimate treatment effects for a trial CSV
simulate   run a Monte Carlo scenario file
randomize  append a stratified assignment column to a CSV

Exit codes: 0 success, 2 invalid input, 3 degenerate stratum. Errors are
written to stderr as a single JSON object.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import analyze
from .data import _coerce_labels, load_csv
from .errors import DegenerateStratumError, ValidationError
from .estimators import GRAM_SCOPES, KINDS
from .gram import DEFAULT_RCOND
from .randomization import VARIANTS, RandomizationScheme, assign
from .sim.config import load_scenario
from .sim.montecarlo import ReplicateError, run_monte_carlo

SCHEMA_VERSION = "1"
EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE = 0, 2, 3
METRICS = ("bias", "signed_bias", "mean", "sd", "mean_se", "sd_se", "cp", "mc_cp")


def fmt(x) -> str:
    """Numbers with 17 significant digits; everything else via ``str``."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return _jsonable(obj.item())
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _write(text: str, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="")


# -- analyze -----------------------------------------------------------------

def _analysis_text(path, reports) -> str:
    out = [f"caradj analysis of {path}", ""]
    for r in reports:
        d = r.to_dict()
        lvl = 100 * (1 - r.alpha)
        out.append(f"[{r.kind}]")
        out.append(f"  tau_hat    {fmt(r.tau_hat)}")
        out.append(f"  sigma2_hat {fmt(r.sigma2_hat)}")
        out.append(f"  se         {fmt(r.se)}")
        out.append(f"  {lvl:g}% CI    [{fmt(r.ci[0])}, {fmt(r.ci[1])}]")
        diag = d["diagnostics"]
        out.append(
            f"  pseudo-inverse used: {fmt(bool(diag['pseudo_inverse_used']))}, "
            f"variance clamped: {fmt(bool(diag['variance_clamped']))}"
        )
        if diag["diag_bias"] is not None:
            out.append(f"  diagonal bias diagnostic {fmt(diag['diag_bias'])}")
        out.append("  stratum        n     n1     n0  contribution")
        for s in d["strata"]:
            out.append(
                f"  {str(s['label']):<8} {s['n']:>6} {s['n1']:>6} {s['n0']:>6}  {fmt(s['contribution'])}"
            )
        out.append("")
    return "\n".join(out)


def _analysis_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["schema_version", "estimator", "tau_hat", "sigma2_hat", "se", "ci_lo", "ci_hi",
         "alpha", "n", "pseudo_inverse_used", "variance_clamped", "diag_bias"]
    )
    for r in reports:
        w.writerow(
            [SCHEMA_VERSION, r.kind, fmt(r.tau_hat), fmt(r.sigma2_hat), fmt(r.se), fmt(r.ci[0]),
             fmt(r.ci[1]), fmt(r.alpha), r.n, fmt(bool(r.pseudo_inverse)), fmt(bool(r.clamped)),
             "" if r.diag_bias is None else fmt(r.diag_bias)]
        )
    return buf.getvalue()


def cmd_analyze(args) -> int:
    kinds = _split_list(args.estimators)
    if not kinds:
        raise ValidationError("at least one estimator kind is required")
    for k in kinds:
        if k not in KINDS:
            raise ValidationError(f"unknown estimator {k!r}; choose from {', '.join(KINDS)}")
    if "oracle" in kinds:
        raise ValidationError("the oracle estimator needs population Gram matrices and is simulation-only")
    schema = {"outcome": args.outcome, "arm": args.arm, "stratum": args.stratum}
    if args.covariates is not None:
        schema["covariates"] = _split_list(args.covariates)
    dataset = load_csv(args.input, schema)
    reports = analyze(dataset, kinds, alpha=args.alpha, rcond=args.rcond, gram_scope=args.gram_scope)
    if args.format == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "input": str(args.input),
            "n": dataset.n,
            "p": dataset.p,
            "strata": dataset.K,
            "estimates": [r.to_dict() for r in reports],
        }
        text = dump_json(doc)
    elif args.format == "csv":
        text = _analysis_csv(reports)
    else:
        text = _analysis_text(args.input, reports)
    _write(text, args.output)
    return EXIT_OK


# -- simulate ----------------------------------------------------------------

def _parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _extra_metrics(res) -> dict[str, dict[str, float]]:
    """Per-estimator auxiliary averages used by the diagnostics tables."""
    extra: dict[str, dict[str, float]] = {}
    R = res.R
    for k in res.kinds:
        row = {
            "pseudo_rate": float(np.mean(res.table[f"{k}.pseudo"])),
            "clamped_rate": float(np.mean(res.table[f"{k}.clamped"])),
            "mean_sigma2": math.fsum(res.table[f"{k}.sigma2"]) / R,
        }
        if k in ("oracle", "feasible"):
            z = res.table[f"{k}.zeta2_II"]
            row["mean_zeta2_II"] = math.fsum(z) / R
            row["se_zeta2_II"] = float(np.std(z, ddof=1)) / math.sqrt(R)
        if k == "ols":
            row["mean_diag_bias"] = math.fsum(res.table["ols.diag_bias"]) / R
            row["mean_diag_bias_oracle"] = math.fsum(res.table["ols.diag_bias_oracle"]) / R
        extra[k] = row
    return extra


def simulation_tables(scenario, results) -> tuple[str, dict]:
    """Long-format CSV text and the JSON document for a finished scenario."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema_version", "scenario", "grid_point", "model", "n", "p", "R", "seed",
                "true_tau", "estimator", "metric", "value"])
    points = []
    for g, res in enumerate(results):
        cfg = res.config
        extra = _extra_metrics(res)
        ests = {}
        for k in res.kinds:
            vals = {**res.metrics[k].as_dict(), **extra[k]}
            ests[k] = vals
            for name in (*METRICS, *[m for m in extra[k] if m not in METRICS]):
                w.writerow([SCHEMA_VERSION, scenario.name, g, cfg.model, cfg.n, cfg.dim, res.R,
                            res.master_seed, fmt(res.true_tau), k, name, fmt(vals[name])])
        points.append({
            "grid_point": g,
            "config": cfg.to_dict(),
            "R": res.R,
            "seed": res.master_seed,
            "alpha": res.alpha,
            "true_tau": res.true_tau,
            "true_tau_se": res.true_tau_se,
            "estimators": ests,
        })
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario.name,
        "gram_scope": scenario.gram_scope,
        "results": points,
    }
    return buf.getvalue(), doc


def _simulate_text(scenario, results) -> str:
    lines = [f"scenario {scenario.name}: R={scenario.replicates}, seed={scenario.seed}"]
    head = f"{'n':>6} {'p':>5} {'estimator':<11} {'bias':>10} {'sd':>10} {'sd/se':>8} {'cp':>7} {'mc_cp':>7}"
    lines.append(head)
    for res in results:
        for k in res.kinds:
            m = res.metrics[k]
            lines.append(
                f"{res.config.n:>6} {res.config.dim:>5} {k:<11} {m.bias:>10.4f} {m.sd:>10.4f} "
                f"{m.sd_se:>8.3f} {m.cp:>7.3f} {m.mc_cp:>7.3f}"
            )
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:

    overrides = _parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.replicates is not None:
        overrides["replicates"] = str(args.replicates)
    scenario = load_scenario(args.config, overrides)
    workers = args.workers if args.workers is not None else scenario.workers
    if workers < 1:
        raise ValidationError("--workers must be at least 1")

    results = []
    for cfg in scenario.grid:
        results.append(
            run_monte_carlo(cfg, scenario.estimators, scenario.replicates, scenario.seed,
                            workers=workers, alpha=scenario.alpha, gram_scope=scenario.gram_scope)
        )
    csv_text, doc = simulation_tables(scenario, results)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = args.name or scenario.name
    (outdir / f"{stem}.csv").write_text(csv_text, encoding="utf-8", newline="")
    (outdir / f"{stem}.json").write_text(dump_json(doc), encoding="utf-8", newline="")
    if not args.quiet:
        sys.stdout.write(_simulate_text(scenario, results))
    return EXIT_OK


# -- randomize ---------------------------------------------------------------

def cmd_randomize(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"empty file: {path}")
    header, body = rows[0], [r for r in rows[1:] if r]
    if args.stratum not in header:
        raise ValidationError(f"missing column {args.stratum!r} (role stratum)")
    if args.column in header:
        raise ValidationError(f"column {args.column!r} already exists")
    if not body:
        raise ValidationError(f"empty file: {path} has a header but no rows")
    j = header.index(args.stratum)
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ValidationError(f"line {i} has {len(r)} fields, expected {len(header)}")
        if r[j].strip() == "":
            raise ValidationError(f"missing stratum label on line {i}")
    labels = _coerce_labels([r[j].strip() for r in body])
    scheme = RandomizationScheme(args.scheme, args.pi, args.block_size, args.coin_bias)
    a = assign(scheme, labels, args.seed)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*header, args.column])
    for r, ai in zip(body, a):
        w.writerow([*r, int(ai)])
    _write(buf.getvalue(), args.output)
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def _fraction(text: str) -> float:
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return float(num) / float(den)
        return float(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caradj",
        description="Covariate adjustment for stratified randomized trials.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="estimate treatment effects from a trial CSV")
    pa.add_argument("input", help="CSV file with a header row")
    pa.add_argument("--outcome", default="y", help="outcome column (default: y)")
    pa.add_argument("--arm", default="arm", help="0/1 assignment column (default: arm)")
    pa.add_argument("--stratum", default="stratum", help="stratum label column (default: stratum)")
    pa.add_argument("--covariates", default=None,
                    help="comma-separated covariate columns (default: all other columns)")
    pa.add_argument("--estimators", default="unadjusted,ols,feasible",
                    help="comma-separated subset of unadjusted,ols,feasible (default: all three)")
    pa.add_argument("--alpha", type=float, default=0.05, help="1 - confidence level (default: 0.05)")
    pa.add_argument("--rcond", type=float, default=DEFAULT_RCOND,
                    help="relative eigenvalue cutoff for the pseudo-inverse (default: 1e-10)")
    pa.add_argument("--gram-scope", choices=GRAM_SCOPES, default="stratum",
                    help="estimate covariate Gram matrices per stratum or pooled (default: stratum)")
    pa.add_argument("--format", choices=("text", "json", "csv"), default="text")
    pa.add_argument("-o", "--output", default=None, help="output file (default: stdout)")
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("simulate", help="run a Monte Carlo scenario file")
    ps.add_argument("config", help="scenario file (INI, one [scenario] section)")
    ps.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a scenario key; repeatable")
    ps.add_argument("--seed", type=int, default=None, help="master seed (overrides the file)")
    ps.add_argument("--replicates", "-R", type=int, default=None, help="replicate count (overrides the file)")
    ps.add_argument("--workers", type=int, default=None, help="worker processes (default: file or 1)")
    ps.add_argument("--output-dir", default=".", help="directory for <name>.csv and <name>.json")
    ps.add_argument("--name", default=None, help="output file stem (default: scenario name)")
    ps.add_argument("--quiet", action="store_true", help="do not print the summary table")
    ps.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("randomize", help="append a stratified assignment column to a CSV")
    pr.add_argument("input", help="CSV file with a stratum column")
    pr.add_argument("--stratum", default="stratum", help="stratum label column (default: stratum)")
    pr.add_argument("--scheme", choices=VARIANTS, default="permuted-block")
    pr.add_argument("--pi", type=_fraction, default=0.5, help="target treated fraction (default: 1/2)")
    pr.add_argument("--block-size", type=int, default=6, help="permuted block size (default: 6)")
    pr.add_argument("--lambda", dest="coin_bias", type=_fraction, default=2.0 / 3.0,
                    help="biased-coin probability, in (1/2, 1] (default: 2/3)")
    pr.add_argument("--seed", type=int, required=True, help="random seed")
    pr.add_argument("--column", default="arm", help="name of the appended column (default: arm)")
    pr.add_argument("-o", "--output", default=None, help="output file (default: stdout)")
    pr.set_defaults(func=cmd_randomize)
    return parser


def _error(code: int, exc: Exception) -> int:
    err = {"error": {"code": code, "type": type(exc).__name__, "message": str(exc)}}
    if isinstance(exc, DegenerateStratumError) and exc.stratum is not None:
        err["error"]["stratum"] = exc.stratum
    sys.stderr.write(json.dumps(_jsonable(err), default=str) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ReplicateError as exc:
        code = EXIT_DEGENERATE if isinstance(exc.cause, DegenerateStratumError) else EXIT_INVALID
        return _error(code, exc)
    except DegenerateStratumError as exc:
        return _error(EXIT_DEGENERATE, exc)
    except ValidationError as exc:
        return _error(EXIT_INVALID, exc)
    except OSError as exc:
        return _error(EXIT_INVALID, exc)


if __name__ == "__main__":
    sys.exit(main())
