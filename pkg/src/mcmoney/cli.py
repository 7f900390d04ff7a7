"""Command line entry point: ``mcmoney {rca,complete,indices,pipeline}``.

Every stage reads and writes plain files in ``--out``. A stage first writes
``manifest_<stage>.json`` (config snapshot, seed, input digests) and
rewrites it on exit with wall time, warnings and status.

Exit codes: 0 success, 2 input/config error, 3 more than 10% of
repetitions failed, 4 indices dominated by undefined values.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import re
import sys
import time
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .data_ingest import (DiscreteMatrix, RcaMatrix, aggregate_level, compute_rca, discretize,
                          filter_by_population, load_populations, load_trade_flows, log_transform)
from .errors import ConfigError, EmptyInputError, NumericalFailure, ParseError
from .evaluation import (RANK_DIRECTION, balanced_accuracy, confusion_8class, global_roc, kendall_tau,
                         load_group, ranking, top_x_ratio)
from .experiment import (ExperimentInput, ProtocolConfig, appendix_grid, run_experiment, run_product_side,
                         step_grid, surrogate_incidence)
from .genepy import counterfactual_genepy, genepy, incidence_from_rca
from .money import money_index, roc_curve
from .plots import write_roc_svg
from .tables import read_matrix, read_table, write_matrix, write_table

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("mcmoney")

STAGES = ("rca", "complete", "indices")
EXIT_INPUT, EXIT_SOLVER, EXIT_NA = 2, 3, 4
FAILED_REP_LIMIT = 0.10
NA_LIMIT = 0.5
TOP_X = (20, 30, 40)


class StageExit(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


@dataclass
class Settings:
    input: str | None = None
    population: str | None = None
    population_threshold: int = 5_000_000
    year: int | None = None
    level: str = "hs4"
    reps: int = 50
    seed: int = 0
    lambda_grid: str = "step"
    transform: str = "discrete"
    out: str = "mcmoney_out"
    threads: int = 1
    row_fraction: float = 0.25
    p_missing: float = 0.3
    max_iter: int = 1500
    tol: float = 1e-9
    group_file: str | None = None
    plots: bool = True

    def protocol(self) -> ProtocolConfig:
        if self.lambda_grid == "step":
            grid = step_grid()
        elif self.lambda_grid == "appendix":
            grid = appendix_grid()
        else:
            raise ConfigError(f"unknown lambda grid {self.lambda_grid!r}")
        if self.transform not in ("discrete", "log"):
            raise ConfigError(f"unknown transform {self.transform!r}")
        clip = (-4.0, 4.0) if self.transform == "discrete" else None
        return ProtocolConfig(repetitions=self.reps, row_fraction=self.row_fraction,
                              missing_probability=self.p_missing, lambda_grid=grid, clip_bounds=clip,
                              base_seed=self.seed, tolerance=self.tol, max_iterations=self.max_iter,
                              threads=self.threads)


FULL_SCALE = {"reps": 1000, "lambda_grid": "step", "p_missing": 0.3, "row_fraction": 0.25}


def resolve_settings(args) -> Settings:
    """Defaults < config file < ``--paper-scale`` preset < explicit flags."""
    names = {f.name for f in fields(Settings)}
    merged = {}
    preset = bool(getattr(args, "paper_scale", False))
    if getattr(args, "config", None):
        try:
            with open(args.config, "rb") as fh:
                conf = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        conf = {k.replace("-", "_"): v for k, v in conf.items()}
        preset = preset or bool(conf.pop("paper_scale", False))
        unknown = set(conf) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(conf)
    if preset:
        merged.update(FULL_SCALE)
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            merged[name] = v
    return Settings(**merged)


def digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) or math.isinf(v) else v
    return v


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


class Manifest:
    def __init__(self, out: Path, stage: str, settings: Settings, inputs: dict[str, Path]):
        self.path = out / f"manifest_{stage}.json"
        self.t0 = time.perf_counter()
        self.data = {
            "tool": "mcmoney", "version": __version__, "stage": stage,
            "config": asdict(settings), "base_seed": settings.seed,
            "inputs": {name: {"path": str(p), "sha256": digest(p)} for name, p in inputs.items()},
            "status": "running", "warnings": [], "wall_seconds": None,
        }
        write_json(self.path, self.data)

    def finish(self, status: str, caught) -> None:
        self.data["status"] = status
        self.data["warnings"] = [f"{w.category.__name__}: {w.message}" for w in caught]
        self.data["wall_seconds"] = round(time.perf_counter() - self.t0, 3)
        write_json(self.path, self.data)


def _run_stage(name, settings, inputs, body):
    out = Path(settings.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in inputs.values():
        if not Path(p).is_file():
            raise FileNotFoundError(f"input not found: {p}")
    manifest = Manifest(out, name, settings, inputs)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        status = "failed"
        try:
            body(out)
            status = "ok"
        finally:
            for w in caught:
                log.warning("%s", w.message)
            manifest.finish(status, caught)


def _load_rca(out: Path) -> RcaMatrix:
    rows, cols, v = read_matrix(out / "rca.csv")
    missing = np.isnan(v)
    return RcaMatrix(rows, cols, np.where(missing, 0.0, v), missing)


def stage_rca(settings: Settings) -> None:
    if settings.input is None:
        raise ConfigError("--input is required for the rca stage")
    if settings.year is None:
        raise ConfigError("--year is required for the rca stage")
    inputs = {"trade": Path(settings.input)}
    if settings.population:
        inputs["population"] = Path(settings.population)

    def body(out):
        table = load_trade_flows(settings.input, settings.year)
        table = aggregate_level(table, settings.level)
        if settings.population:
            table = filter_by_population(table, load_populations(settings.population),
                                         settings.population_threshold)
        if not table.values:
            raise EmptyInputError("no countries left after the population filter")
        rca = compute_rca(table)
        disc = discretize(rca)
        write_matrix(out / "rca.csv", rca.countries, rca.products, rca.values, rca.missing)
        write_matrix(out / "discrete.csv", disc.countries, disc.products, disc.groups)
        log.info("RCA matrix %d x %d, %d missing cells", *rca.shape, int(rca.missing.sum()))

    _run_stage("rca", settings, inputs, body)


def _write_rmse(path, agg, labels):
    write_table(path, ["n", "h", "lambda", "val_rmse", "test_rmse"],
                ([r.n, labels[r.h], r.lam, r.val_rmse, r.test_rmse] for r in agg.rmse_records))


def _write_rates(path, agg, corner):
    write_table(path, [corner, "fpr", "fnr", "test_appearances"],
                zip(agg.rows, agg.fpr_by_row, agg.fnr_by_row, agg.test_appearances.sum(axis=1)))


def stage_complete(settings: Settings) -> None:
    out = Path(settings.out)
    inputs = {"rca": out / "rca.csv", "discrete": out / "discrete.csv"}
    config = settings.protocol()
    failures = {}

    def body(out):
        rca = _load_rca(out)
        if settings.transform == "log":
            A = ExperimentInput.from_log(log_transform(rca))
        else:
            rows, cols, g = read_matrix(out / "discrete.csv")
            A = ExperimentInput.from_discrete(DiscreteMatrix(rows, cols, g.astype(np.int8)))
        try:
            agg = run_experiment(A, config)
            agg_T = run_product_side(A, config)
        except NumericalFailure as exc:
            raise StageExit(EXIT_SOLVER, str(exc)) from exc
        mbar, mhat = surrogate_incidence(agg, rca.missing)
        mbar_T, mhat_T = surrogate_incidence(agg_T, rca.missing.T)
        write_matrix(out / "mbar.csv", agg.rows, agg.cols, mbar)
        write_matrix(out / "mhat.csv", agg.rows, agg.cols, mhat)
        write_matrix(out / "mbar_T.csv", agg_T.rows, agg_T.cols, mbar_T, corner="product")
        write_matrix(out / "mhat_T.csv", agg_T.rows, agg_T.cols, mhat_T, corner="product")
        write_matrix(out / "test_appearances.csv", agg.rows, agg.cols, agg.test_appearances)
        _write_rmse(out / "rmse_records.csv", agg, agg.rows)
        _write_rmse(out / "rmse_records_T.csv", agg_T, agg_T.rows)
        _write_rates(out / "row_rates.csv", agg, "country")
        _write_rates(out / "product_rates.csv", agg_T, "product")
        failures["count"] = len(agg.failed_repetitions) + len(agg_T.failed_repetitions)

    _run_stage("complete", settings, inputs, body)
    share = failures["count"] / (2 * config.repetitions)
    if share > FAILED_REP_LIMIT:
        raise StageExit(EXIT_SOLVER, f"{failures['count']} repetitions failed ({share:.0%})")


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", label)


def _tau_entry(x, y):
    try:
        r = kendall_tau(x, y)
    except ValueError as exc:
        return {"tau": None, "p_value": None, "n": 0, "note": str(exc)}
    return {"tau": r.tau, "p_value": r.p_value, "n": r.n}


def stage_indices(settings: Settings) -> None:
    out = Path(settings.out)
    names = ["rca", "mbar", "mhat", "mbar_T", "mhat_T", "row_rates"]
    inputs = {n: out / f"{n}.csv" for n in names}
    if settings.group_file:
        inputs["group"] = Path(settings.group_file)
    result = {}

    def body(out):
        rca = _load_rca(out)
        countries = rca.countries
        M = incidence_from_rca(rca).entries
        valid = ~rca.missing
        _, _, mbar = read_matrix(out / "mbar.csv")
        _, _, mhat = read_matrix(out / "mhat.csv")
        _, _, mbar_T = read_matrix(out / "mbar_T.csv")
        _, _, mhat_T = read_matrix(out / "mhat_T.csv")
        mhat = mhat.astype(np.int8)
        mhat_T = mhat_T.astype(np.int8)

        scores, weights = money_index(mbar, M, valid, mbar_T, M.T, valid.T, mhat_T)
        order = ranking(scores.money, RANK_DIRECTION["money"])
        rank = np.full(len(countries), np.nan)
        rank[order] = np.arange(1, order.size + 1)
        write_table(out / "money_scores.csv", ["country", "auc", "weight", "money", "rank"],
                    ([c, scores.auc[i], scores.weight[i], scores.money[i],
                      None if np.isnan(rank[i]) else int(rank[i])] for i, c in enumerate(countries)))
        write_table(out / "product_weights.csv", ["product", "positives", "negatives", "ftot_mean"],
                    zip(rca.products, weights.positives, weights.negatives, weights.ftot_mean))

        curves = []
        roc_rows = []
        for i, c in enumerate(countries):
            curve = roc_curve(mbar[i], M[i], valid[i])
            curves.append(curve)
            ths = [math.inf, *curve.thresholds[::-1]]
            roc_rows.extend([c, t, f, tp] for t, f, tp in zip(ths, curve.fpr, curve.tpr))
        write_table(out / "roc_points.csv", ["country", "threshold", "fpr", "tpr"], roc_rows)

        g = genepy(M)
        g_mc = counterfactual_genepy(mhat)
        gen, gen_mc = g.expand(len(countries)), g_mc.expand(len(countries))
        ev1 = np.full(len(countries), np.nan)
        ev2 = np.full(len(countries), np.nan)
        ev1[g.kept_countries], ev2[g.kept_countries] = g.eigvec1, g.eigvec2
        write_table(out / "genepy.csv", ["country", "genepy", "genepy_mc", "difference", "eigvec1", "eigvec2"],
                    zip(countries, gen, gen_mc, gen - gen_mc, ev1, ev2))

        _, rate_rows = read_table(out / "row_rates.csv")
        fpr = np.array([np.nan if r[1] == "NA" else float(r[1]) for r in rate_rows])
        fnr = np.array([np.nan if r[2] == "NA" else float(r[2]) for r in rate_rows])

        groc = global_roc(mbar, M, valid)
        conf = confusion_8class(gen, gen_mc)
        write_matrix(out / "confusion_genepy.csv", [f"true_{k + 1}" for k in range(8)],
                     [f"pred_{k + 1}" for k in range(8)], conf.counts, corner="class")

        group = load_group(settings.group_file)
        index_scores = {"money": scores.money, "genepy": gen, "genepy_mc": gen_mc}
        top = {}
        for name, s in index_scores.items():
            scored = int(np.count_nonzero(~np.isnan(s)))
            top[name] = {str(x): (top_x_ratio(s, countries, group, x, RANK_DIRECTION[name])
                                  if x <= scored else None) for x in TOP_X}
        report = {
            "n_countries": len(countries), "n_products": len(rca.products),
            "global_auc": groc.auc,
            "balanced_accuracy": balanced_accuracy(mhat, M, valid),
            "kendall": {
                "genepy_vs_genepy_mc": _tau_entry(gen, gen_mc),
                "fpr_vs_genepy": _tau_entry(fpr, gen),
                "fnr_vs_genepy": _tau_entry(fnr, gen),
                "money_vs_genepy": _tau_entry(scores.money, gen),
            },
            "top_x": top, "group": sorted(group),
            "group_present": sorted(set(group) & set(countries)),
            "na_counts": {"auc": int(np.isnan(scores.auc).sum()), "weight": int(np.isnan(scores.weight).sum()),
                          "money": int(np.isnan(scores.money).sum()), "genepy": int(np.isnan(gen).sum()),
                          "genepy_mc": int(np.isnan(gen_mc).sum())},
        }
        write_json(out / "evaluation_report.json", report)

        diag = []
        for i, c in enumerate(countries):
            for field_name, arr in (("auc", scores.auc), ("weight", scores.weight), ("genepy", gen),
                                    ("genepy_mc", gen_mc)):
                if np.isnan(arr[i]):
                    diag.append([c, field_name, "undefined"])
        write_table(out / "diagnostics.csv", ["country", "field", "status"], diag)

        if settings.plots:
            write_roc_svg(out / "roc_global.svg", [("global", groc.fpr, groc.tpr)],
                          title=f"Global ROC (AUC {groc.auc:.3f})")
            overlay = [(c, cu.fpr, cu.tpr) for c, cu in zip(countries, curves) if not np.isnan(cu.auc)][:8]
            write_roc_svg(out / "roc_overlay.svg", [("global", groc.fpr, groc.tpr), *overlay],
                          title="Country ROC curves")
            roc_dir = out / "roc"
            roc_dir.mkdir(exist_ok=True)
            for c, cu in zip(countries, curves):
                if not np.isnan(cu.auc):
                    write_roc_svg(roc_dir / f"{_safe_name(c)}.svg", [(c, cu.fpr, cu.tpr)],
                                  title=f"{c} (AUC {cu.auc:.3f})")
        result["na_share"] = float(np.isnan(scores.money).mean())

    _run_stage("indices", settings, inputs, body)
    if result["na_share"] > NA_LIMIT:
        raise StageExit(EXIT_NA, f"MONEY undefined for {result['na_share']:.0%} of countries; see diagnostics.csv")


STAGE_FUNCS = {"rca": stage_rca, "complete": stage_complete, "indices": stage_indices}


def stage_pipeline(settings: Settings, resume_from: str = "rca") -> None:
    for name in STAGES[STAGES.index(resume_from):]:
        log.info("stage %s", name)
        STAGE_FUNCS[name](settings)


def _add_common(p: argparse.ArgumentParser, stage: str):
    p.add_argument("--config", help="TOML file with settings (flags take precedence)")
    p.add_argument("--out", help="output directory")
    if stage in ("rca", "pipeline"):
        p.add_argument("--input", help="trade CSV with columns country,product,year,value")
        p.add_argument("--population", help="population CSV with columns country,population")
        p.add_argument("--population-threshold", type=int)
        p.add_argument("--year", type=int)
        p.add_argument("--level", choices=["hs2", "hs4"])
    if stage in ("complete", "pipeline"):
        p.add_argument("--reps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--lambda-grid", choices=["step", "appendix"])
        p.add_argument("--transform", choices=["discrete", "log"])
        p.add_argument("--threads", type=int)
        p.add_argument("--row-fraction", type=float)
        p.add_argument("--p-missing", type=float)
        p.add_argument("--max-iter", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--paper-scale", action="store_true", default=None,
                       help="1000 repetitions, 30-point step grid, p_missing 0.3, s 0.25")
    if stage in ("indices", "pipeline"):
        p.add_argument("--group-file", help="country codes for the top-x ratios (default: G19+5)")
        p.add_argument("--no-plots", dest="plots", action="store_false", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcmoney", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("rca", "trade CSV -> rca.csv, discrete.csv"),
                        ("complete", "country- and product-side completion experiments"),
                        ("indices", "MONEY, GENEPY, counterfactual GENEPY and the evaluation report"),
                        ("pipeline", "all stages in order")):
        p = sub.add_parser(name, help=help_)
        _add_common(p, name)
        if name == "pipeline":
            p.add_argument("--resume-from", choices=STAGES, default="rca",
                           help="skip stages before this one (their outputs must exist)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve_settings(args)
        if args.command == "pipeline":
            stage_pipeline(settings, args.resume_from)
        else:
            STAGE_FUNCS[args.command](settings)
    except StageExit as exc:
        print(f"mcmoney: {exc}", file=sys.stderr)
        return exc.code
    except (ParseError, EmptyInputError, ConfigError, FileNotFoundError) as exc:
        print(f"mcmoney: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
