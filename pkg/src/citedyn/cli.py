"""Command-line pipeline: synth -> ingest -> cluster -> fit -> predict -> evaluate -> report."""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from collections import Counter

import numpy as np
import yaml

from . import citation_data as cd
from . import clustering, evaluation, synth
from .fitting import FitConfig, FitResult, fit_cohort, predict
from .models import params_from_json

log = logging.getLogger("citedyn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "paths": {"pairs": None, "metadata": None, "out": "out"},
    "seed": 0,
    "horizon": 50,
    "cohort": {"first_year": None, "last_year": None},
    "filter": {"min_citations": 10, "window": 5},
    "clustering": {"k": 4, "restarts": 100, "max_iter": 300},
    "fit": {
        "full": [1, 50],
        "train": [1, 10],
        "models": ["wsb", "sir", "arima", "naive"],
        "n_starts": 16,
        "max_iters": 2000,
        "tol": 1e-8,
        "m": 30.0,
        "n_jobs": 1,
        "failure_budget": 0.05,
    },
    "evaluate": {"t_eval": 50, "bins": 20, "min_bin_n": 3, "pw_bin_width": 0.02, "wks_models": ["wsb", "sir", "arima"]},
    "synth": {"n_papers": 400, "noise": "poisson", "jitter": 0.05},
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NumericalFailure(Exception):
    pass


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, val in (extra or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _set_path(cfg, dotted, value):
    node = cfg
    *parents, leaf = dotted.split(".")
    for p in parents:
        node = node.setdefault(p, {})
    node[leaf] = value


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the YAML/JSON document at ``path``, then ``key.sub=value`` overrides."""
    doc = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise UsageError(f"invalid config {path}: {exc}") from exc
    cfg = _merge(DEFAULTS, doc)
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        _set_path(cfg, key, yaml.safe_load(raw))
    return cfg


def _seed(cfg, stream: str) -> int:
    # one top-level seed, one derived stream per consumer
    streams = ("clustering", "fit", "synth")
    return int(np.random.SeedSequence([int(cfg["seed"]), streams.index(stream)]).generate_state(1)[0])


def _out(cfg, name):
    return os.path.join(cfg["paths"]["out"], name)


def _dump_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"missing input {path}: run the earlier pipeline step first") from exc


def _histories(cfg):
    path = _out(cfg, "histories.json")
    if not os.path.exists(path):
        raise DataError(f"missing input {path}: run `ingest` first")
    return cd.read_histories(path)


# ------------------------------------------------------------ commands

def cmd_synth(cfg) -> dict:
    s = cfg["synth"]
    templates = synth.CLASS_TEMPLATES
    if s.get("templates"):
        try:
            templates = tuple(params_from_json(t) for t in s["templates"])
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"invalid synth templates: {exc}") from exc
    cohort = synth.generate_cohort(
        int(s["n_papers"]), templates, noise=s["noise"], param_jitter=float(s["jitter"]),
        seed=_seed(cfg, "synth"), horizon=int(cfg["horizon"]),
    )
    dest = s.get("dest") or os.path.join(cfg["paths"]["out"], "synth")
    paths = synth.write_cohort(cohort, dest)
    log.info("synthetic cohort of %d papers written to %s", len(cohort.histories), dest)
    return paths


def cmd_ingest(cfg) -> dict:
    pairs, meta = cfg["paths"]["pairs"], cfg["paths"]["metadata"]
    if not pairs or not meta:
        raise UsageError("ingest needs paths.pairs and paths.metadata")
    for p in (pairs, meta):
        if not os.path.exists(p):
            raise DataError(f"input file not found: {p}")
    try:
        dataset = cd.ingest(pairs, meta)
    except cd.IngestError as exc:
        raise DataError(str(exc)) from exc
    histories = cd.build_histories(dataset, int(cfg["horizon"]))
    first, last = cfg["cohort"]["first_year"], cfg["cohort"]["last_year"]
    if first is not None or last is not None:
        keep = set(cd.select_published(dataset, first or 0, last or 9999))
        histories = [h for h in histories if h.paper_id in keep]
    f = cfg["filter"]
    retained = cd.filter_sample(histories, int(f["min_citations"]), int(f["window"]))
    journals = Counter(dataset.papers[h.paper_id].journal or "" for h in retained)
    report = {
        "ingest": dataset.report.to_json(),
        "cohort_size": len(histories),
        "retained": len(retained),
        "retained_fraction": len(retained) / len(histories) if histories else 0.0,
        "journals": dict(sorted(journals.items())),
        "config": cfg,
    }
    os.makedirs(cfg["paths"]["out"], exist_ok=True)
    cd.write_histories(retained, _out(cfg, "histories.json"))
    _dump_json(_out(cfg, "ingest_report.json"), report)
    print(f"ingested {report['ingest']['events']} events, dropped {report['ingest']['dropped']}; "
          f"retained {len(retained)}/{len(histories)} papers")
    return report


def cmd_cluster(cfg) -> dict:
    histories = _histories(cfg)
    c = cfg["clustering"]
    shapes = clustering.make_shapes(histories)
    try:
        assignment = clustering.kmeans_cluster(
            shapes, int(c["k"]), int(c["restarts"]), _seed(cfg, "clustering"), int(c["max_iter"])
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    horizon = histories[0].horizon
    t_values = [t for t in (2, 10, 50) if t <= horizon]
    stats = clustering.class_statistics(assignment, histories, t_values)
    clustering.write_assignment(assignment, _out(cfg, "assignment.csv"), _out(cfg, "centroids.json"))
    evaluation.write_table(
        _out(cfg, "class_stats.csv"),
        ["class", "t", "n", "min", "q1", "median", "q3", "max"],
        [[r[k] for k in ("class", "t", "n", "min", "q1", "median", "q3", "max")] for r in stats.boxplots],
    )
    report = {
        "sizes": {str(k): v for k, v in stats.sizes.items()},
        "early_fraction": {str(k): v for k, v in stats.early_fraction.items()},
        "top_decile_odds": {
            str(k): clustering.top_decile_odds(assignment, histories, k) for k in range(1, assignment.k + 1)
        },
        "wcss": assignment.wcss,
        "config": cfg,
    }
    _dump_json(_out(cfg, "cluster_report.json"), report)
    print("class sizes: " + ", ".join(f"{k}:{v}" for k, v in report["sizes"].items()))
    return report


def _fit_config(cfg, window) -> FitConfig:
    f = cfg["fit"]
    return FitConfig(
        window=tuple(f[window]), n_starts=int(f["n_starts"]), max_iters=int(f["max_iters"]),
        tol=float(f["tol"]), m=float(f["m"]), seed=_seed(cfg, "fit"),
    )


def cmd_fit(cfg, window: str) -> list:
    if window not in ("full", "train"):
        raise UsageError("window must be 'full' or 'train'")
    histories = _histories(cfg)
    f = cfg["fit"]
    config = _fit_config(cfg, window)
    if config.window[1] > histories[0].horizon:
        raise UsageError(f"fit window {config.window} exceeds the horizon")
    results = fit_cohort(histories, f["models"], config, n_jobs=int(f["n_jobs"]))
    _dump_json(_out(cfg, f"fits_{window}.json"), {"config": cfg, "fits": [r.to_json() for r in results]})
    with open(_out(cfg, f"fits_{window}.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["paper_id", "model", "param1", "param2", "param3", "objective", "converged"])
        for r in results:
            vals = _flat_params(r)
            w.writerow([r.paper_id, r.model, *vals, repr(float(r.objective_value)), int(r.converged)])
    failed = sum(not r.converged for r in results)
    print(f"fitted {len(results)} (paper, model) pairs, {failed} not converged")
    if failed > float(f["failure_budget"]) * len(results):
        raise NumericalFailure(f"{failed}/{len(results)} fits failed, above the failure budget")
    return results


def _flat_params(r: FitResult) -> list:
    p = r.params
    if r.model == "wsb":
        vals = [p.lam, p.mu, p.sigma]
    elif r.model == "sir":
        vals = [p.s0, p.beta, p.gamma]
    elif r.model == "arima":
        vals = [f"{p.p}.{p.d}.{p.q}", p.intercept, p.sigma2]
    else:
        vals = [p.c_train, "", ""]
    return [repr(float(v)) if isinstance(v, float) else v for v in vals]


def _load_fits(cfg, window) -> list:
    doc = _load_json(_out(cfg, f"fits_{window}.json"))
    return [
        FitResult(d["paper_id"], d["model"], params_from_json(d), d["objective"], d["converged"],
                  d["n_evals"], tuple(d["window"]))
        for d in doc["fits"]
    ]


def cmd_predict(cfg, window: str = "train") -> str:
    histories = {h.paper_id: h for h in _histories(cfg)}
    fits = _load_fits(cfg, window)
    horizon = next(iter(histories.values())).horizon
    grid = np.arange(horizon + 1)
    path = _out(cfg, f"predictions_{window}.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["paper_id", "model"] + [f"t{t}" for t in grid])
        for r in fits:
            chat = predict(r, histories[r.paper_id], grid)
            w.writerow([r.paper_id, r.model] + [repr(float(v)) for v in chat])
    return path


def _read_predictions(path):
    if not os.path.exists(path):
        raise DataError(f"missing input {path}: run `predict` first")
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            out[(row[0], row[1])] = np.asarray(row[2:], dtype=float)
    return out


def cmd_evaluate(cfg) -> dict:
    histories = _histories(cfg)
    lookup = {h.paper_id: h for h in histories}
    a_path = _out(cfg, "assignment.csv")
    if not os.path.exists(a_path):
        raise DataError(f"missing input {a_path}: run `cluster` first")
    assignment = clustering.read_assignment(a_path)
    classes = assignment.as_dict()
    e = cfg["evaluate"]
    t_eval = int(e["t_eval"])
    summary = {"config": cfg}

    if os.path.exists(_out(cfg, "fits_full.json")):
        grid = np.arange(histories[0].horizon + 1)
        scores = []
        for r in _load_fits(cfg, "full"):
            if r.model in e["wks_models"]:
                h = lookup[r.paper_id]
                window = (0, r.window[1])
                scores.append(evaluation.weighted_ks(h, predict(r, h, grid), window, model=r.model))
        hists = evaluation.pw_distribution(scores, classes, float(e["pw_bin_width"]))
        evaluation.write_table(_out(cfg, "fig4_pw.csv"), evaluation.PW_HEADER, evaluation.pw_rows(hists))
        evaluation.write_table(
            _out(cfg, "wks_scores.csv"), ["paper_id", "model", "class", "w"],
            [[s.paper_id, s.model, classes[s.paper_id], s.w] for s in scores],
        )
        med = {}
        for s in scores:
            med.setdefault(f"{s.model}/{classes[s.paper_id]}", []).append(s.w)
        summary["median_w"] = {k: float(np.median(v)) for k, v in sorted(med.items())}

    preds = _read_predictions(_out(cfg, "predictions_train.csv"))
    models = sorted({m for _, m in preds}, key=lambda m: ("wsb", "sir", "arima", "naive").index(m))
    scatter_rows, mape_rows = [], []
    summary["mape_by_class"], summary["overestimation_fraction"], summary["within_one_sigma"] = {}, {}, {}
    for model in models:
        ids = [h.paper_id for h in histories if (h.paper_id, model) in preds]
        c = np.asarray([lookup[i].counts[t_eval] for i in ids], dtype=float)
        chat = np.asarray([preds[(i, model)][t_eval] for i in ids])
        sc = evaluation.binned_scatter(c, chat, int(e["bins"]), int(e["min_bin_n"]))
        for b in sc.bins:
            scatter_rows.append([model, b.bin_lo, b.bin_hi, b.bin_center, b.mean_pred, b.std_pred, b.n, b.flag, b.low_n])
        by_class = evaluation.mape(c, chat, [classes[i] for i in ids])
        by_bin = evaluation.mape_by_citation_bin(c, chat, int(e["bins"]))
        for rep in (by_class, by_bin):
            for ent in rep.entries:
                mape_rows.append([model, rep.grouping, ent.group, ent.center, ent.epsilon, ent.n])
        summary["mape_by_class"][model] = {str(k): v for k, v in by_class.as_dict().items()}
        summary["overestimation_fraction"][model] = sc.overestimation_fraction
        summary["within_one_sigma"][model] = sc.within_fraction
    evaluation.write_table(_out(cfg, "fig6_scatter.csv"), evaluation.SCATTER_HEADER, scatter_rows)
    evaluation.write_table(_out(cfg, "fig7_mape.csv"), evaluation.MAPE_HEADER, mape_rows)
    _dump_json(_out(cfg, "evaluation_summary.json"), summary)
    for model, eps in summary["mape_by_class"].items():
        print(f"MAPE@{t_eval} {model}: " + ", ".join(f"k{k}={v:.3f}" for k, v in eps.items()))
    return summary


def cmd_report(cfg) -> dict:
    parts = {}
    for name in ("ingest_report", "cluster_report", "evaluation_summary"):
        path = _out(cfg, f"{name}.json")
        if os.path.exists(path):
            doc = _load_json(path)
            doc.pop("config", None)
            parts[name] = doc
    if not parts:
        raise DataError("nothing to report: no pipeline outputs found")
    parts["config"] = cfg
    parts["choices"] = {
        "year_binning": "floor(days / 365.25)",
        "fit_objective": "least squares on cumulative counts",
        "sir_initial_influential": cfg["fit"].get("i0", 1.0),
        "arima": "CSS on cumulative counts, AIC over p,q in 0..2 and d in 1..2",
    }
    _dump_json(_out(cfg, "report.json"), parts)
    print(json.dumps({k: v for k, v in parts.items() if k != "config"}, indent=1, sort_keys=True))
    return parts


# ------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="citedyn", description=__doc__)
    ap.add_argument("--config", help="YAML or JSON run configuration")
    ap.add_argument("--out", help="output directory (paths.out)")
    ap.add_argument("--seed", type=int, help="top-level random seed")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override any config entry, e.g. clustering.k=3")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("ingest", help="build and filter citation histories")
    p.add_argument("--pairs")
    p.add_argument("--metadata")
    sub.add_parser("cluster", help="K-means shape classes and class statistics")
    p = sub.add_parser("fit", help="fit models over the full range or the training window")
    p.add_argument("--window", choices=("full", "train"), default="full")
    p.add_argument("--models", help="comma-separated subset of wsb,sir,arima,naive")
    p.add_argument("--n-jobs", type=int)
    p = sub.add_parser("predict", help="model counts on the full grid from fitted parameters")
    p.add_argument("--window", choices=("full", "train"), default="train")
    sub.add_parser("evaluate", help="weighted KS, binned scatter and MAPE tables")
    p = sub.add_parser("synth", help="write a synthetic cohort in the ingest formats")
    p.add_argument("--spec", help="YAML file whose keys override the synth section")
    p.add_argument("--dest", help="directory for pairs.csv, metadata.csv, truth.csv")
    sub.add_parser("report", help="collect all summaries into report.json")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = list(args.overrides)
        cfg = load_config(args.config, overrides)
        if args.out:
            cfg["paths"]["out"] = args.out
        if args.seed is not None:
            cfg["seed"] = args.seed
        os.makedirs(cfg["paths"]["out"], exist_ok=True)
        cmd = args.command
        if cmd == "ingest":
            if args.pairs:
                cfg["paths"]["pairs"] = args.pairs
            if args.metadata:
                cfg["paths"]["metadata"] = args.metadata
            cmd_ingest(cfg)
        elif cmd == "cluster":
            cmd_cluster(cfg)
        elif cmd == "fit":
            if args.models:
                cfg["fit"]["models"] = [m.strip() for m in args.models.split(",") if m.strip()]
            if args.n_jobs is not None:
                cfg["fit"]["n_jobs"] = args.n_jobs
            cmd_fit(cfg, args.window)
        elif cmd == "predict":
            cmd_predict(cfg, args.window)
        elif cmd == "evaluate":
            cmd_evaluate(cfg)
        elif cmd == "synth":
            if args.spec:
                try:
                    doc = yaml_doc(args.spec)
                except (OSError, yaml.YAMLError) as exc:
                    raise UsageError(f"cannot read synth spec {args.spec}: {exc}") from exc
                cfg["synth"] = _merge(cfg["synth"], doc.get("synth", doc))
            if args.dest:
                cfg["synth"]["dest"] = args.dest
            cmd_synth(cfg)
        elif cmd == "report":
            cmd_report(cfg)
    except UsageError as exc:
        print(f"citedyn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"citedyn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"citedyn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def yaml_doc(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


if __name__ == "__main__":
    sys.exit(main())
