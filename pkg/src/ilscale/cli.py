"""Command-line entry point: synth, bc-run, fit, forecast, cv, report.

Exit codes: 0 success, 1 partial (some fits failed), 2 usage or config error.
Outputs go to --out, defaulting to $ILSCALE_OUTDIR or the current directory.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .crossval import DEFAULT_MIN_TRAIN, cv_all, trajectory_csv
from .flops import FlopRule
from .forecast import (
    ISOFLOP_LOSS,
    ISOFLOP_RETURN,
    ReturnLossLaw,
    fit_return_loss,
    forecast_from_loss,
    forecast_from_return_law,
    forecast_isoflop_chain,
    forecast_parametric,
    match_budgets,
)
from .isoflop import MAX_RETURN, MIN_LOSS, IsoflopLaws, approach1_laws, collect_optima
from .numerics import RegressionError
from .parametric import QuadraticSurface, allocation_with_ci, fit_surface
from .plots import svg_chart
from .records import (
    DEFAULT_REL_TOL,
    ExperimentRecord,
    RecordError,
    format_records,
    group_by_budget,
    read_records,
    select_metric_records,
)

logger = logging.getLogger("ilscale")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2
OUTDIR_ENV = "ILSCALE_OUTDIR"
OBJECTIVE = {"loss": MIN_LOSS, "return": MAX_RETURN}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- file output

def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _json(obj) -> str:
    def fix(o):
        if isinstance(o, float) and not math.isfinite(o):
            return None if math.isnan(o) else ("inf" if o > 0 else "-inf")
        if isinstance(o, dict):
            return {k: fix(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [fix(v) for v in o]
        return o
    return json.dumps(fix(obj), indent=2, sort_keys=True) + "\n"


class Run:
    """Collects outputs for one command and writes them with a shared manifest."""

    def __init__(self, command: str, args: dict, inputs: Sequence[str], outdir: Path):
        self.command = command
        self.outdir = outdir
        self.inputs = {p: _sha256_file(p) for p in inputs}
        blob = json.dumps({"command": command, "args": args, "inputs": self.inputs, "version": __version__},
                          sort_keys=True, default=str)
        self.digest = hashlib.sha256(blob.encode()).hexdigest()[:16]
        self.args = args
        self.outputs: dict[str, str] = {}

    def write(self, name: str, text: str) -> Path:
        path = self.outdir / name
        atomic_write(path, text)
        self.outputs[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def write_json(self, name: str, obj: dict) -> Path:
        return self.write(name, _json({"manifest_digest": self.digest, **obj}))

    def finish(self, extra: Optional[dict] = None) -> None:
        manifest = {
            "command": self.command,
            "config_digest": self.digest,
            "args": self.args,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "tool_version": __version__,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        if extra:
            manifest.update(extra)
        atomic_write(self.outdir / f"manifest_{self.command}.json", _json(manifest))


def _rows_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: format(v, ".17g") if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def _load_json(path: str, what: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise UsageError(f"{what} not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} {path} is not valid JSON: {exc}") from None


def _load_records(path: str) -> list[ExperimentRecord]:
    try:
        return read_records(path)
    except FileNotFoundError:
        raise UsageError(f"records file not found: {path}") from None
    except RecordError as exc:
        raise UsageError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    from .synth import SynthSpec, analytic_optima, generate

    raw = _load_json(args.spec, "synth spec")
    try:
        spec = SynthSpec.from_dict(raw)
    except (KeyError, ValueError, TypeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) else str(exc)
        raise UsageError(f"invalid synth spec: {msg}") from None
    run = Run("synth", {"spec": spec.to_dict()}, [args.spec], args.out)
    records = generate(spec)
    run.write("records.jsonl", format_records(records))
    truth = analytic_optima(spec)
    run.write_json("truth.json", {"spec": spec.to_dict(), "truth": truth.to_dict()})
    run.finish()
    print(f"wrote {len(records)} records to {args.out / 'records.jsonl'}")
    return EXIT_OK


# ---------------------------------------------------------------- bc-run

def cmd_bc_run(args) -> int:
    from .bcdesk import TrainConfig, run_isoflop_experiment

    raw = _load_json(args.config, "bc config") if args.config else {}
    if args.seeds is not None:
        raw["seeds"] = args.seeds
    try:
        config = TrainConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid bc config: {exc}") from None
    run = Run("bc-run", {"config": config.to_dict()}, [args.config] if args.config else [], args.out)
    result = run_isoflop_experiment(config)
    run.write("records.jsonl", format_records(result.records))
    run.finish(result.manifest(config))
    print(f"wrote {len(result.records)} records to {args.out / 'records.jsonl'} "
          f"(expert {result.expert_score:.3f}, random {result.random_baseline:.3f})")
    return EXIT_OK


# ---------------------------------------------------------------- fit

def _metrics(arg: str) -> list[str]:
    return ["loss", "return"] if arg == "both" else [arg]


def _select(records, metric: str, skip_budgets: int, rel_tol: float):
    chosen = select_metric_records(records, metric)
    if metric == "return":
        chosen = [r for r in chosen if r.mean_return is not None]
    if not chosen:
        field = "loss" if metric == "loss" else "mean_return"
        raise UsageError(f"records carry no {field}; cannot fit --metric {metric}")
    try:
        groups = group_by_budget(chosen, rel_tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    kept = groups[skip_budgets:]
    return groups, [r for g in kept for r in g.records]


def fit_all(records, metric_arg: str, method: str, rule: FlopRule, skip_budgets: int = 0,
            rel_tol: float = DEFAULT_REL_TOL, use_fallback: bool = False) -> tuple[dict, dict]:
    """Fit everything requested. Returns (report, plot tables)."""
    report: dict = {"rule": rule.kind.value, "flop_denominator": rule.denominator, "method": method,
                    "skip_budgets": skip_budgets, "rel_tol": rel_tol, "fits": {}, "errors": []}
    tables: dict = {}
    for metric in _metrics(metric_arg):
        groups, kept_records = _select(records, metric, skip_budgets, rel_tol)
        entry: dict = {}
        field = "loss" if metric == "loss" else "mean_return"
        tables[f"isoflop_profiles_{metric}.csv"] = (
            [{"budget": g.budget, "params": r.params, "samples": r.samples, metric: getattr(r, field), "seed": r.seed}
             for g in groups for r in g.records],
            ["budget", "params", "samples", metric, "seed"],
        )
        if method in ("isoflop", "both"):
            try:
                laws = approach1_laws(groups, OBJECTIVE[metric], rule, skip_budgets, use_fallback)
                entry["isoflop"] = laws.to_dict()
                rows = []
                for o in laws.optima:
                    rows.append({"flops": o.budget, "n_opt": o.n_opt, "d_opt": o.d_opt, "metric_opt": o.metric_opt,
                                 "n_fit": laws.n_law.predict(o.budget), "d_fit": laws.d_law.predict(o.budget),
                                 "metric_fit": laws.metric_law.predict(o.budget)})
                tables[f"optima_{metric}.csv"] = (
                    [{"budget": r["flops"], "n_opt": r["n_opt"], "d_opt": r["d_opt"], "metric_opt": r["metric_opt"]}
                     for r in rows], ["budget", "n_opt", "d_opt", "metric_opt"])
                tables[f"laws_{metric}.csv"] = (rows, ["flops", "metric_opt", "metric_fit", "n_opt", "n_fit",
                                                       "d_opt", "d_fit"])
            except (RegressionError, ValueError) as exc:
                report["errors"].append({"metric": metric, "method": "isoflop", "error": str(exc)})
        if method in ("parametric", "both"):
            try:
                surface = fit_surface(kept_records, metric)
                entry["parametric"] = {"surface": surface.to_dict(),
                                       "allocation": allocation_with_ci(surface, rule.denominator).to_dict()}
            except (RegressionError, ValueError) as exc:
                report["errors"].append({"metric": metric, "method": "parametric", "error": str(exc)})
        if "isoflop" in entry and "parametric" in entry:
            entry["alpha_difference"] = entry["isoflop"]["alpha"] - entry["parametric"]["allocation"]["alpha"]
        report["fits"][metric] = entry

    fits = report["fits"]
    if "isoflop" in fits.get("loss", {}) and "isoflop" in fits.get("return", {}):
        loss_laws = IsoflopLaws.from_dict(fits["loss"]["isoflop"])
        ret_laws = IsoflopLaws.from_dict(fits["return"]["isoflop"])
        try:
            rl = fit_return_loss(loss_laws.optima, ret_laws.optima)
            report["return_loss"] = rl.to_dict()
            pairs = match_budgets(loss_laws.optima, ret_laws.optima)
            tables["return_vs_loss.csv"] = (
                [{"budget": lo.budget, "loss_opt": lo.metric_opt, "return_opt": ro.metric_opt,
                  "return_fit": rl.predict_return(lo.metric_opt)} for lo, ro in pairs],
                ["budget", "loss_opt", "return_opt", "return_fit"])
        except RegressionError as exc:
            report["errors"].append({"metric": "return_vs_loss", "method": "isoflop", "error": str(exc)})
    return report, tables


def cmd_fit(args) -> int:
    records = _load_records(args.records)
    rule = FlopRule.from_name(args.rule)
    mismatched = 0
    for r in records:
        try:
            r.check_rule(rule)
        except RecordError:
            mismatched += 1
    if mismatched:
        logger.warning("%d record(s) have FLOPs inconsistent with the %s rule", mismatched, args.rule)
    run = Run("fit", {k: v for k, v in vars(args).items() if k not in ("func", "out")}, [args.records], args.out)
    report, tables = fit_all(records, args.metric, args.method, rule, args.skip_budgets, args.rel_tol,
                             args.use_fallback)
    for name, (rows, cols) in tables.items():
        run.write(name, _rows_csv(rows, cols))
    run.write_json("fit_report.json", report)
    run.finish()
    for metric, entry in report["fits"].items():
        for method in ("isoflop", "parametric"):
            if method in entry:
                a = entry[method]["alpha"] if method == "isoflop" else entry[method]["allocation"]["alpha"]
                print(f"{metric:6s} {method:10s} alpha={a:.4f} beta={1 - a:.4f}")
    for err in report["errors"]:
        print(f"error: {err['metric']} {err['method']}: {err['error']}", file=sys.stderr)
    return EXIT_PARTIAL if report["errors"] else EXIT_OK


# ---------------------------------------------------------------- forecast

def forecasts_from_report(report: dict, target_return=None, target_loss=None, budget=None) -> list:
    fits = report.get("fits", {})
    denom = float(report.get("flop_denominator", 6.0))

    def iso(metric):
        d = fits.get(metric, {}).get("isoflop")
        return IsoflopLaws.from_dict(d) if d else None

    def surf(metric):
        d = fits.get(metric, {}).get("parametric")
        return QuadraticSurface.from_dict(d["surface"]) if d else None

    loss_laws, ret_laws = iso("loss"), iso("return")
    loss_surf, ret_surf = surf("loss"), surf("return")
    out = []
    if target_return is not None:
        if loss_laws is not None and "return_loss" in report:
            chain = forecast_isoflop_chain(target_return, ReturnLossLaw.from_dict(report["return_loss"]), loss_laws)
            out.append(chain)
            if loss_surf is not None:
                out.append(forecast_parametric(chain.budget_C, loss_surf, denom, loss_laws.budget_range))
        if ret_laws is not None:
            fr = forecast_from_return_law(target_return, ret_laws)
            out.append(fr)
            if ret_surf is not None:
                out.append(forecast_parametric(fr.budget_C, ret_surf, denom, ret_laws.budget_range))
    elif target_loss is not None:
        if loss_laws is not None:
            fl = forecast_from_loss(target_loss, loss_laws)
            out.append(fl)
            if loss_surf is not None:
                out.append(forecast_parametric(fl.budget_C, loss_surf, denom, loss_laws.budget_range))
    elif budget is not None:
        for laws, surface in ((loss_laws, loss_surf), (ret_laws, ret_surf)):
            if surface is not None:
                out.append(forecast_parametric(budget, surface, denom, laws.budget_range if laws else None))
            if laws is not None:
                from .forecast import Forecast, extrapolation_note
                decades, warnings = extrapolation_note(budget, laws.budget_range)
                out.append(Forecast(
                    method=ISOFLOP_LOSS if laws.objective == MIN_LOSS else ISOFLOP_RETURN,
                    target_metric=laws.metric_law.predict(budget), budget_C=budget,
                    n_opt=laws.n_law.predict(budget), d_opt=laws.d_law.predict(budget),
                    extrapolation_decades=decades, warnings=tuple(warnings),
                    provenance={"alpha": laws.alpha, "beta": laws.beta, "gamma": laws.gamma}))
    return out


def cmd_forecast(args) -> int:
    report = _load_json(args.report, "fit report")
    try:
        forecasts = forecasts_from_report(report, args.target_return, args.target_loss, args.budget)
    except (RegressionError, ValueError) as exc:
        raise UsageError(f"cannot forecast: {exc}") from None
    if not forecasts:
        wanted = ("--target-return" if args.target_return is not None else
                  "--target-loss" if args.target_loss is not None else "--budget")
        raise UsageError(f"fit report lacks the laws needed for {wanted}")
    run = Run("forecast", {k: v for k, v in vars(args).items() if k not in ("func", "out")}, [args.report], args.out)
    run.write_json("forecast.json", {"forecasts": [f.to_dict() for f in forecasts]})
    run.finish()
    for f in forecasts:
        print(f"{f.method:14s} C={f.budget_C:.4g} N={f.n_opt:.4g} D={f.d_opt:.4g}"
              + (f"  [{'; '.join(f.warnings)}]" if f.warnings else ""))
    return EXIT_OK


# ---------------------------------------------------------------- cv

def cv_inputs(records, metric_arg: str, rule: FlopRule, rel_tol: float = DEFAULT_REL_TOL,
              skip_budgets: int = 0) -> tuple[dict, dict, list]:
    points, budgets, errors = {}, {}, []
    optima = {}
    for metric in _metrics(metric_arg):
        groups, _ = _select(records, metric, 0, rel_tol)
        opts, warnings = collect_optima(groups, OBJECTIVE[metric], rule, skip_budgets)
        errors.extend(warnings)
        optima[metric] = opts
        points[f"{metric}_opt_vs_flops"] = [(o.budget, o.metric_opt) for o in opts]
        points[f"{metric}_params_vs_flops"] = [(o.budget, o.n_opt) for o in opts]
        points[f"{metric}_samples_vs_flops"] = [(o.budget, o.d_opt) for o in opts]
    if "loss" in optima and "return" in optima:
        pairs = match_budgets(optima["loss"], optima["return"])
        points["return_vs_loss"] = [(lo.metric_opt, ro.metric_opt) for lo, ro in pairs]
        budgets["return_vs_loss"] = [lo.budget for lo, _ in pairs]
    return points, budgets, errors


def cmd_cv(args) -> int:
    records = _load_records(args.records)
    rule = FlopRule.from_name(args.rule)
    run = Run("cv", {k: v for k, v in vars(args).items() if k not in ("func", "out")}, [args.records], args.out)
    points, budgets, warnings = cv_inputs(records, args.metric, rule, args.rel_tol, args.skip_budgets)
    reports = cv_all(points, min_train=args.min_train, budgets=budgets)
    run.write_json("cv_report.json", {"min_train": args.min_train, "warnings": warnings,
                                      "reports": [r.to_dict() for r in reports]})
    run.write("cv_trajectories.csv", trajectory_csv(reports))
    run.finish()
    failed = [r for r in reports if r.error]
    for r in reports:
        if r.error:
            print(f"{r.regression_name:26s} error: {r.error}", file=sys.stderr)
        else:
            print(f"{r.regression_name:26s} steps={len(r.steps)} mean_rmse={r.mean_rmse:.4g}")
    return EXIT_PARTIAL if failed else EXIT_OK


# ---------------------------------------------------------------- report

def cmd_report(args) -> int:
    report = _load_json(args.report, "fit report")
    run = Run("report", {"report": args.report}, [args.report], args.out)
    lines = ["# Scaling-law fit summary", "", f"FLOP rule: {report.get('rule')} "
             f"(C = {report.get('flop_denominator')}·N·D)", ""]
    lines += ["| metric | method | alpha | beta | alpha 95% CI | gamma |", "|---|---|---|---|---|---|"]
    for metric, entry in report.get("fits", {}).items():
        if "isoflop" in entry:
            iso = entry["isoflop"]
            ci = iso["n_law"]["exponent_ci95"]
            lines.append(f"| {metric} | isoFLOP | {iso['alpha']:.3f} | {iso['beta']:.3f} | "
                         f"({_fmt(ci[0])}, {_fmt(ci[1])}) | {iso['gamma']:.3f} |")
            series = [{"label": "optimum", "x": [o["budget"] for o in iso["optima"]],
                       "y": [o["metric_opt"] for o in iso["optima"]]}]
            for key, ylabel in (("metric", metric), ("n", "params"), ("d", "samples")):
                law = iso[f"{key}_law"]
                pts = iso["optima"]
                ys = [o["metric_opt"] if key == "metric" else o[f"{key}_opt"] for o in pts]
                xs = [o["budget"] for o in pts]
                fit = [math.exp(law["log_prefactor"] + law["exponent"] * math.log(x)) for x in xs]
                run.write(f"{metric}_{ylabel}_vs_flops.svg", svg_chart(
                    [{"label": "optima", "x": xs, "y": ys},
                     {"label": f"exp {law['exponent']:.3f}", "x": xs, "y": fit, "style": "line"}],
                    title=f"{metric}-optimal {ylabel} vs FLOPs", xlabel="FLOPs", ylabel=ylabel))
        if "parametric" in entry:
            al = entry["parametric"]["allocation"]
            ci = al.get("alpha_ci95") or [math.nan, math.nan]
            lines.append(f"| {metric} | parametric | {al['alpha']:.3f} | {al['beta']:.3f} | "
                         f"({_fmt(ci[0])}, {_fmt(ci[1])}) | |")
    if "return_loss" in report:
        lines += ["", f"Return vs optimal loss: R ∝ L^{report['return_loss']['delta']:.3f} "
                      f"(R² = {report['return_loss']['r_squared']:.3f})"]
    for err in report.get("errors", []):
        lines.append(f"- fit error ({err['metric']}, {err['method']}): {err['error']}")
    run.write("summary.md", "\n".join(lines) + "\n")
    run.finish()
    print("\n".join(lines))
    return EXIT_OK


def _fmt(v) -> str:
    return f"{v:.3f}" if isinstance(v, (int, float)) and math.isfinite(v) else str(v)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    default_out = os.environ.get(OUTDIR_ENV, ".")
    parser = argparse.ArgumentParser(prog="ilscale", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def out_arg(p):
        p.add_argument("-o", "--out", type=Path, default=Path(default_out),
                       help=f"output directory (default: ${OUTDIR_ENV} or .)")

    p = sub.add_parser("synth", help="generate synthetic records plus a ground-truth file")
    p.add_argument("spec", help="synth spec JSON")
    out_arg(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bc-run", help="run the behavioral-cloning isoFLOP sweep")
    p.add_argument("config", nargs="?", help="sweep config JSON (defaults used when omitted)")
    p.add_argument("--seeds", type=int, nargs="+", help="override the config's seeds")
    out_arg(p)
    p.set_defaults(func=cmd_bc_run)

    def fit_common(p):
        p.add_argument("records", help="records .jsonl or .csv")
        p.add_argument("--metric", choices=["loss", "return", "both"], default="loss")
        p.add_argument("--rule", choices=["6nd", "8nd"], default="6nd")
        p.add_argument("--skip-budgets", type=int, default=0, metavar="K", help="drop the K smallest budgets")
        p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL, help="budget grouping tolerance")

    p = sub.add_parser("fit", help="fit isoFLOP and/or parametric scaling laws")
    fit_common(p)
    p.add_argument("--method", choices=["isoflop", "parametric", "both"], default="both")
    p.add_argument("--use-fallback", action="store_true",
                   help="use the empirical best point for budgets without an interior optimum")
    out_arg(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="forecast compute and (N, D) from a fit report")
    p.add_argument("report", help="fit_report.json from `fit`")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--target-return", type=float, metavar="R")
    target.add_argument("--target-loss", type=float, metavar="L")
    target.add_argument("--budget", type=float, metavar="C")
    out_arg(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("cv", help="rolling cross-validation of every power-law regression")
    fit_common(p)
    p.add_argument("--min-train", type=int, default=DEFAULT_MIN_TRAIN)
    out_arg(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("report", help="render a fit report as markdown and SVG charts")
    p.add_argument("report", help="fit_report.json from `fit`")
    out_arg(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "skip_budgets", 0) < 0:
        parser.error("--skip-budgets must be >= 0")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ilscale {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
