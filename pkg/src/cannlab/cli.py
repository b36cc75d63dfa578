"""Command-line interface.

Exit codes: 0 success, 1 usage or I/O error, 2 constraint failure,
3 non-finite training loss, 4 pipeline run aborted.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .agents import (
    AuthFailure,
    BackendUnavailable,
    PipelineConfig,
    PipelineState,
    RunAborted,
    make_backend,
    run_pipeline,
)
from .agents.protocol import jsonable
from .datasets import (
    MalformedRow,
    MissingFile,
    NonMonotoneParams,
    generate_synthetic,
    invariant_plane_eval,
    load_dataset,
    reference_model,
)
from .model import (
    IoFailure,
    ModelDescriptor,
    SchemaMismatch,
    canonical_descriptor,
    load_model,
    mooney_rivlin,
    neo_hookean,
    save_model,
)
from .training import NonFiniteLoss, TrainConfig, fit, fit_report
from .validators import CONSTRAINTS, ToleranceConfig, validate_all

EXIT_OK, EXIT_IO, EXIT_CONSTRAINT, EXIT_NONFINITE, EXIT_ABORTED = 0, 1, 2, 3, 4

TOLERANCE_FLAGS = ("tau_rel", "tau_abs", "tau_loop", "tau_pointwise", "tau_norm", "n_seg", "grid_n", "n_dirs")
REFERENCES = {"mooney_rivlin": mooney_rivlin, "neo_hookean": neo_hookean}

logger = logging.getLogger("cannlab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with the
    # constraint-failure code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=jsonable) + "\n", encoding="utf-8")
    return path


def _read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing file {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from None


def _tolerances(args) -> ToleranceConfig:
    return ToleranceConfig().updated(**{k: getattr(args, k, None) for k in TOLERANCE_FLAGS})


def _merge_config(args, parser) -> None:
    """Fill unset options from ``--config``; explicit flags always win."""
    if not getattr(args, "config", None):
        return
    data = _read_json(args.config)
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    for key, value in data.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, value)
        elif not hasattr(args, dest):
            logger.debug("ignoring config key %s", key)


def _out_dir(args) -> Path:
    path = Path(args.output_dir or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---- validate -------------------------------------------------------------------

def cmd_validate(args) -> int:
    model = load_model(args.model)
    report = validate_all(model, _tolerances(args))
    out = _write_json(_out_dir(args) / "validation.json", report.to_dict(include_timing=args.timing))
    print(f"{model.descriptor.name}: {report.n_passed}/{len(CONSTRAINTS)} constraints passed -> {out}")
    for cid in report.failed:
        v = report[cid]
        print(f"  FAILED {cid.value}: worst {v.worst:.6g} {v.message}".rstrip())
        if v.witness is not None:
            print(f"    witness: {json.dumps(v.witness, default=jsonable)}")
    return EXIT_OK if report.overall else EXIT_CONSTRAINT


# ---- train ----------------------------------------------------------------------

def _load_descriptor(spec: str) -> ModelDescriptor:
    if spec == "canonical":
        return canonical_descriptor()
    data = _read_json(spec)
    if isinstance(data, dict) and "descriptor" in data:
        data = data["descriptor"]
    return ModelDescriptor.from_dict(data)


def _train_config(args) -> TrainConfig:
    return TrainConfig().updated(epochs=args.epochs, learning_rate=args.learning_rate,
                                 optimizer=args.optimizer, seed=args.seed)


def cmd_train(args) -> int:
    dataset = load_dataset(args.manifest)
    descriptor = _load_descriptor(args.descriptor)
    model, report = fit(descriptor, dataset, _train_config(args))
    out = _out_dir(args)
    save_model(model, out / "model.json")
    _write_json(out / "fit.json", report.to_dict())
    print(report.table(dataset.unit))
    print(f"model written to {out / 'model.json'}")
    return EXIT_OK


# ---- evaluate -------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    out = _out_dir(args)
    if not args.manifest and not args.truth:
        raise UsageError("evaluate needs --manifest and/or --truth")
    dataset = load_dataset(args.manifest) if args.manifest else None
    if dataset is not None:
        report = fit_report(model, dataset)
        _write_json(out / "fit.json", report.to_dict())
        print(report.table(dataset.unit))
    truth = load_model(args.truth) if args.truth else (reference_model(dataset) if dataset else None)
    if args.plane or args.truth:
        if truth is None:
            raise UsageError("invariant-plane evaluation needs --truth or a dataset with a reference model")
        plane = invariant_plane_eval(model, truth, lam1_max=args.lam1_max, n=args.n)
        path = plane.to_csv(out / "plane.csv")
        _write_json(out / "plane.json", {"max_rel_err": plane.max_rel_err, "n": args.n,
                                          "lam1_max": args.lam1_max, "csv": path.name})
        print(f"invariant plane: max relative P11 error {plane.max_rel_err:.4%} -> {path}")
    return EXIT_OK


# ---- pipeline -------------------------------------------------------------------

def _pipeline_dataset(args):
    if args.manifest:
        return load_dataset(args.manifest)
    ref = args.reference or "mooney_rivlin"
    if ref not in REFERENCES:
        raise UsageError(f"unknown reference model {ref!r}")
    return generate_synthetic(REFERENCES[ref](), n=args.points or 15, name=f"synthetic_{ref}")


def _pipeline_job(job) -> dict:
    """Run one pipeline into its own directory; returns a status record."""
    settings, index, out = job
    args = argparse.Namespace(**settings)
    dataset = _pipeline_dataset(args)
    config = PipelineConfig(
        refinement_rounds=2 if args.refinement_rounds is None else args.refinement_rounds,
        max_corrections=5 if args.max_corrections is None else args.max_corrections,
        tools=bool(args.tools),
        seed=(args.seed or 0) + index,
        violating_export_prob=0.25 if args.violating_export_prob is None else args.violating_export_prob,
        check_epochs=args.check_epochs or 200,
        train=TrainConfig().updated(epochs=args.epochs, learning_rate=args.learning_rate),
        output_dir=out,
    )
    creator = make_backend(args.creator or "good", "creator")
    inspector = make_backend(args.inspector or "oracle", "inspector")
    try:
        run = run_pipeline(config, dataset, creator, inspector)
    except RunAborted as exc:
        return {"index": index, "dir": out, "aborted": True, "reason": str(exc)}
    best = run.best_export
    return {"index": index, "dir": out, "aborted": False,
            "best": str(Path(out) / best.path) if best.path else None, "mean_r2": best.fit.mean_r2}


_PIPELINE_KEYS = ("manifest", "reference", "points", "refinement_rounds", "max_corrections", "tools", "seed",
                  "violating_export_prob", "check_epochs", "epochs", "learning_rate", "creator", "inspector")


def cmd_pipeline(args) -> int:
    runs = args.runs or 1
    root = _out_dir(args)
    settings = {k: getattr(args, k) for k in _PIPELINE_KEYS}
    jobs = [(settings, i, str(root if runs == 1 else root / f"run_{i:03d}")) for i in range(runs)]
    if args.parallel and args.parallel > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(_pipeline_job, jobs))
    else:
        results = [_pipeline_job(j) for j in jobs]
    aborted = False
    for r in results:
        if r["aborted"]:
            aborted = True
            print(f"run {r['index']}: aborted ({r['reason']}) -> {r['dir']}")
        else:
            print(f"run {r['index']}: best model {r['best']} (mean R2 {r['mean_r2']:.5f})")
    return EXIT_ABORTED if aborted else EXIT_OK


# ---- report -------------------------------------------------------------------

STATES = [s.value for s in PipelineState]


def _load_summaries(dirs) -> list[dict]:
    if not dirs:
        raise UsageError("report needs at least one run directory")
    summaries = []
    # sort so aggregates do not depend on argument order
    for d in sorted({str(Path(d).resolve()) for d in dirs}):
        path = Path(d) / "summary.json"
        try:
            data = _read_json(path)
            for key in ("transitions", "confusion", "exports", "rounds", "tool_histogram"):
                data[key]
        except (MissingFile, UsageError, KeyError, TypeError) as exc:
            raise UsageError(f"malformed run directory {d}: {exc}") from None
        summaries.append(data)
    return summaries


def aggregate_runs(summaries: list[dict], clip_negative_r2: bool = False) -> dict:
    counts = Counter()
    for s in summaries:
        counts.update((a, b) for a, b in s["transitions"])
    matrix = {}
    for a in STATES:
        total = sum(counts[(a, b)] for b in STATES)
        if total:
            matrix[a] = {b: counts[(a, b)] / total for b in STATES}

    keys = ("flagged_adhering", "flagged_adhering_truly_adhering", "flagged_violating",
            "flagged_violating_truly_adhering")
    conf = {k: sum(s["confusion"][k] for s in summaries) for k in keys}

    def ratio(a, b):
        return a / b if b else None

    conf["truly_adhering_given_flagged_adhering"] = ratio(conf["flagged_adhering_truly_adhering"],
                                                          conf["flagged_adhering"])
    conf["truly_adhering_given_flagged_violating"] = ratio(conf["flagged_violating_truly_adhering"],
                                                           conf["flagged_violating"])
    per = {c.value: {"flagged_violated": 0, "actually_violated": 0, "agree": 0} for c in CONSTRAINTS}
    flagged_all = Counter()
    tools = Counter()
    for s in summaries:
        for c, row in s["confusion"]["per_constraint"].items():
            for k, v in row.items():
                per[c][k] += v
        for r in s["rounds"]:
            for a in r["attempts"]:
                if a.get("verdict"):
                    flagged_all.update(c for c, v in a["verdict"]["verdicts"].items() if v["status"] == "violated")
        tools.update(s["tool_histogram"]["total"])

    by_round = {}
    for s in summaries:
        for e in s["exports"]:
            r2 = e["fit"]["mean_r2"]
            if r2 is None or not np.isfinite(r2):
                continue
            by_round.setdefault(e["round"], []).append(max(r2, 0.0) if clip_negative_r2 else r2)
    accuracy = {str(k): {"n": len(v), "mean_r2": float(np.mean(v)), "std_r2": float(np.std(v))}
                for k, v in sorted(by_round.items())}
    return {
        "n_runs": len(summaries),
        "transition_counts": {f"{a}->{b}": counts[(a, b)] for a in STATES for b in STATES if counts[(a, b)]},
        "transition_matrix": matrix,
        "confusion": conf,
        "per_constraint": per,
        "flagged_violations_all_verdicts": {c.value: flagged_all.get(c.value, 0) for c in CONSTRAINTS},
        "tool_calls": {c.value: tools.get(c.value, 0) for c in CONSTRAINTS},
        "accuracy_by_round": accuracy,
        "clip_negative_r2": clip_negative_r2,
    }


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_report(args) -> int:
    summaries = _load_summaries(args.runs)
    agg = aggregate_runs(summaries, args.clip_negative_r2)
    out = _out_dir(args)
    _write_json(out / "report.json", agg)
    _write_csv(out / "transitions.csv", ["from"] + STATES,
               [[a] + [repr(agg["transition_matrix"][a][b]) for b in STATES] for a in agg["transition_matrix"]])
    _write_csv(out / "constraints.csv", ["constraint", "flagged_violated", "actually_violated", "agree",
                                         "flagged_violated_all_verdicts", "tool_calls"],
               [[c.value, *agg["per_constraint"][c.value].values(),
                 agg["flagged_violations_all_verdicts"][c.value], agg["tool_calls"][c.value]] for c in CONSTRAINTS])
    _write_csv(out / "accuracy.csv", ["round", "n", "mean_r2", "std_r2"],
               [[k, v["n"], repr(v["mean_r2"]), repr(v["std_r2"])] for k, v in agg["accuracy_by_round"].items()])
    c = agg["confusion"]
    print(f"{agg['n_runs']} runs; flagged adhering {c['flagged_adhering']} "
          f"(truly adhering fraction {c['truly_adhering_given_flagged_adhering']}), flagged violating "
          f"{c['flagged_violating']} (truly adhering fraction {c['truly_adhering_given_flagged_violating']})")
    return EXIT_OK


# ---- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("-o", "--output-dir", default=None, help="directory for output files (default: .)")
    common.add_argument("--config", default=None,
                        help="JSON file of option values; command-line flags override it")
    common.add_argument("-v", "--verbose", action="store_true")

    tol = argparse.ArgumentParser(add_help=False)
    g = tol.add_argument_group("tolerance overrides")
    g.add_argument("--tau-rel", type=float, default=None, help="relative tolerance (default 1e-3)")
    g.add_argument("--tau-abs", type=float, default=None, help="absolute tolerance (default 1e-4)")
    g.add_argument("--tau-loop", type=float, default=None, help="loop residual tolerance (default 1e-2)")
    g.add_argument("--tau-pointwise", type=float, default=None, help="work-energy tolerance (default 1e-2)")
    g.add_argument("--tau-norm", type=float, default=None, help="normalization tolerance (default 1e-3)")
    g.add_argument("--n-seg", type=int, default=None, help="segments per path leg (default 200)")
    g.add_argument("--grid-n", type=int, default=None, help="ellipticity grid points per axis (default 50)")
    g.add_argument("--n-dirs", type=int, default=None, help="directions per set (default 200)")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--epochs", type=int, default=None, help="training epochs (default 5000)")
    training.add_argument("--learning-rate", type=float, default=None, help="step size (default 1e-3)")

    parser = _Parser(prog="cannlab", description="Physics-constrained hyperelastic model toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common, tol], help="run the nine constraint validators on a model")
    p.add_argument("model", help="model.json")
    p.add_argument("--timing", action="store_true", default=None, help="include per-validator timing")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", parents=[common, training], help="fit a descriptor to a dataset")
    p.add_argument("--manifest", required=True, help="dataset manifest.json")
    p.add_argument("--descriptor", default="canonical", help="descriptor JSON file or 'canonical'")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="fit metrics and invariant-plane errors")
    p.add_argument("model", help="model.json")
    p.add_argument("--manifest", default=None, help="dataset manifest.json")
    p.add_argument("--truth", default=None, help="reference model.json for the invariant plane")
    p.add_argument("--plane", action="store_true", default=None, help="evaluate the invariant plane")
    p.add_argument("--lam1-max", type=float, default=3.0)
    p.add_argument("-n", type=int, default=40, help="grid points per plane axis")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=[common, training], help="run the Creator-Inspector loop")
    p.add_argument("--creator", default=None, help="good | flaky | stubborn | live (default good)")
    p.add_argument("--inspector", default=None, help="oracle | blind | tools:<n> | live (default oracle)")
    p.add_argument("--manifest", default=None, help="dataset manifest (default: synthetic data)")
    p.add_argument("--reference", default=None, help="reference model for synthetic data (default mooney_rivlin)")
    p.add_argument("--points", type=int, default=None, help="synthetic points per mode (default 15)")
    p.add_argument("--refinement-rounds", type=int, default=None)
    p.add_argument("--max-corrections", type=int, default=None)
    p.add_argument("--tools", action="store_true", default=None, help="let the Inspector call validators")
    p.add_argument("--violating-export-prob", type=float, default=None)
    p.add_argument("--check-epochs", type=int, default=None)
    p.add_argument("--runs", type=int, default=None, help="independent runs (seed, seed+1, ...)")
    p.add_argument("--parallel", type=int, default=None, help="worker processes for independent runs")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("report", parents=[common], help="aggregate run directories into tables")
    p.add_argument("runs", nargs="*", help="run directories")
    p.add_argument("--clip-negative-r2", action="store_true", default=None,
                   help="clip negative R2 to zero in accuracy tables")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _merge_config(args, parser)
        if args.seed is None:
            args.seed = 0
        return args.func(args)
    except NonFiniteLoss as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (MalformedRow, NonMonotoneParams) as exc:
        print(f"error: bad dataset: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, MissingFile, IoFailure, SchemaMismatch, AuthFailure, BackendUnavailable,
            OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
