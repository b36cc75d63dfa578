"""Creator-Inspector refinement loop and its bookkeeping."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..datasets import StressStrainDataset
from ..model import ConstitutiveModel, SchemaMismatch, save_model
from ..training import FitReport, NonFiniteLoss, TrainConfig, fit, fit_report, predict_curve
from ..validators import CONSTRAINTS, ToleranceConfig, ValidationReport, run_validator, validate_all
from .backends import Backend, wall_clock
from .protocol import (
    InspectorVerdict,
    MalformedProposal,
    MalformedVerdict,
    ModelProposal,
    PipelineState,
    RoundAborted,
    RunAborted,
    check_feedback,
    creator_prompt,
    fence,
    jsonable,
    inspector_prompt,
    parse_proposal,
    parse_tool_call,
    parse_verdict,
    violation_feedback,
)

logger = logging.getLogger(__name__)

STAGES = ("instantiate", "train", "predict", "roundtrip")


# ---- transcript -------------------------------------------------------------

class Transcript:
    """Append-only conversation log, one record per message or tool event.

    With ``clock=None`` timestamps are a logical counter, which keeps
    transcripts of mock runs byte-identical across executions.
    """

    def __init__(self, clock=None):
        self.clock = clock
        self.records: list[dict] = []

    def add(self, role: str, round_index: int, content: str, **extra) -> dict:
        stamp = len(self.records) if self.clock is None else self.clock()
        rec = {"role": role, "round": round_index, "content": content, "timestamp": stamp, **extra}
        self.records.append(rec)
        return rec

    def __len__(self):
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, default=jsonable) + "\n" for r in self.records)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path


def live_llm_call(backend: Backend, messages: list[dict], transcript: Transcript | None = None,
                  round_index: int = 0) -> str:
    """One request/response exchange; logged as a single transcript record."""
    reply = backend.complete(messages)
    if transcript is not None:
        transcript.add(backend.role, round_index, reply, prompt=messages[-1]["content"] if messages else "")
    return reply


# ---- syntactic checks -------------------------------------------------------

@dataclass
class CheckReport:
    stages: list[dict]
    model: ConstitutiveModel | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return all(s["ok"] for s in self.stages) and len(self.stages) == len(STAGES)

    @property
    def failed_stage(self) -> str | None:
        for s in self.stages:
            if not s["ok"]:
                return s["stage"]
        return None

    @property
    def reason(self) -> str:
        for s in self.stages:
            if not s["ok"]:
                return s["reason"]
        return ""

    def to_dict(self) -> dict:
        return {"ok": self.ok, "stages": list(self.stages)}


def _predictions(model: ConstitutiveModel, dataset: StressStrainDataset) -> np.ndarray:
    parts = [predict_curve(model, s.mode, s.params) for s in dataset.samples]
    return np.concatenate(parts) if parts else np.zeros(0)


def syntactic_checks(proposal: ModelProposal, dataset: StressStrainDataset, check_epochs: int = 200,
                     base: TrainConfig = TrainConfig()) -> CheckReport:
    """Instantiate, briefly train, predict and round-trip a proposal.

    Stops at the first failing stage; failures are returned, not raised.
    """
    stages = []

    def fail(stage, reason):
        stages.append({"stage": stage, "ok": False, "reason": reason})
        return CheckReport(stages)

    try:
        descriptor = proposal.build_descriptor()
        config = base.updated(**proposal.train)
        config = config.updated(epochs=min(config.epochs, check_epochs))
    except (SchemaMismatch, ValueError, TypeError) as exc:
        return fail("instantiate", f"{type(exc).__name__}: {exc}")
    stages.append({"stage": "instantiate", "ok": True, "reason": ""})

    try:
        model, report = fit(descriptor, dataset, config)
    except NonFiniteLoss as exc:
        return fail("train", f"NonFiniteLoss: {exc}")
    except (ValueError, ArithmeticError) as exc:
        return fail("train", f"{type(exc).__name__}: {exc}")
    if not np.isfinite(report.final_loss):
        return fail("train", "NonFiniteLoss: final loss is not finite")
    stages.append({"stage": "train", "ok": True, "reason": ""})

    try:
        pred = _predictions(model, dataset)
    except (ValueError, ArithmeticError) as exc:
        return fail("predict", f"{type(exc).__name__}: {exc}")
    if not np.all(np.isfinite(pred)):
        return fail("predict", "prediction contains non-finite values")
    stages.append({"stage": "predict", "ok": True, "reason": ""})

    try:
        loaded = ConstitutiveModel.from_json(model.to_json())
        same = np.array_equal(_predictions(loaded, dataset), pred)
    except (SchemaMismatch, ValueError) as exc:
        return fail("roundtrip", f"{type(exc).__name__}: {exc}")
    if not same:
        return fail("roundtrip", "reloaded model predicts differently")
    stages.append({"stage": "roundtrip", "ok": True, "reason": ""})
    return CheckReport(stages, model)


# ---- agent calls --------------------------------------------------------------

def creator_propose(backend: Backend, conversation: list[dict], transcript: Transcript | None = None,
                    round_index: int = 0) -> ModelProposal:
    """Ask the Creator for a proposal; the reply is appended to ``conversation``."""
    if backend.role != "creator":
        raise ValueError("creator_propose needs a creator backend")
    reply = live_llm_call(backend, conversation, transcript, round_index)
    conversation.append({"role": "assistant", "content": reply})
    return parse_proposal(reply)


def inspector_audit(backend: Backend, model: ConstitutiveModel, tools: bool = False,
                    transcript: Transcript | None = None, round_index: int = 0,
                    tol: ToleranceConfig = ToleranceConfig(), max_tool_calls: int = 27) -> InspectorVerdict:
    """Obtain a per-constraint verdict, dispatching validator tool calls on request.

    An unparseable verdict gets one re-ask; a second failure raises
    ``MalformedVerdict``.
    """
    if backend.role != "inspector":
        raise ValueError("inspector_audit needs an inspector backend")
    messages = [{"role": "user", "content": inspector_prompt(model.to_document(), tools)}]
    calls = []
    reasked = False
    while True:
        reply = live_llm_call(backend, messages, transcript, round_index)
        messages.append({"role": "assistant", "content": reply})
        try:
            cid = parse_tool_call(reply)
            if cid is not None:
                if not tools:
                    raise MalformedVerdict("tool call requested but tools are disabled")
                if len(calls) >= max_tool_calls:
                    raise MalformedVerdict("too many tool calls")
                result = run_validator(cid, model, tol).to_dict()
                calls.append((cid, result))
                content = f"Tool result for {cid.value}:\n" + fence(result)
                if transcript is not None:
                    transcript.add("tool", round_index, content, tool=cid.value)
                messages.append({"role": "user", "content": content})
                continue
            verdict = parse_verdict(reply)
        except MalformedVerdict as exc:
            if reasked:
                raise
            reasked = True
            messages.append({"role": "user", "content":
                             f"Your reply could not be used ({exc}). Reply with the complete verdict block."})
            continue
        verdict.tool_calls = calls
        return verdict


def classify_transition(previous: InspectorVerdict | None, current: InspectorVerdict | None) -> PipelineState:
    """State reached after ``current``, judged only from Inspector verdicts.

    A violation is "repeated" when at least one constraint flagged now was
    also flagged in the immediately preceding verdict.
    """
    if current is None:
        return PipelineState.START
    if current.adherent:
        return PipelineState.ADHERENCE
    if previous is not None and set(current.violated) & set(previous.violated):
        return PipelineState.REPEATED_VIOLATION
    return PipelineState.NEW_VIOLATION


# ---- run records ------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    refinement_rounds: int = 2
    max_corrections: int = 5
    tools: bool = False
    seed: int = 0
    violating_export_prob: float = 0.25
    check_epochs: int = 200
    train: TrainConfig = TrainConfig()
    tol: ToleranceConfig = ToleranceConfig()
    output_dir: str | None = None

    def __post_init__(self):
        if self.refinement_rounds < 0 or self.max_corrections < 0:
            raise ValueError("round counts must be non-negative")
        if not 0.0 <= self.violating_export_prob <= 1.0:
            raise ValueError("violating_export_prob must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "refinement_rounds": self.refinement_rounds,
            "max_corrections": self.max_corrections,
            "tools": self.tools,
            "seed": self.seed,
            "violating_export_prob": self.violating_export_prob,
            "check_epochs": self.check_epochs,
            "train": dict(self.train.__dict__),
        }


@dataclass
class ExportRecord:
    round: int
    approved: bool
    model: ConstitutiveModel = field(repr=False)
    fit: FitReport = field(repr=False)
    verdict: InspectorVerdict = field(repr=False)
    path: str | None = None
    validation: ValidationReport | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "approved": self.approved,
            "name": self.model.descriptor.name,
            "fingerprint": self.model.fingerprint,
            "path": self.path,
            "fit": {k: v for k, v in self.fit.to_dict().items() if k != "loss_history"},
            "flagged_violated": [c.value for c in self.verdict.violated],
            "validation": None if self.validation is None else {
                "overall": self.validation.overall,
                "failed": [c.value for c in self.validation.failed],
            },
        }


@dataclass
class RoundRecord:
    index: int
    attempts: list[dict] = field(default_factory=list)
    aborted: bool = False
    reason: str = ""
    tool_histogram: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {"index": self.index, "aborted": self.aborted, "reason": self.reason,
                "attempts": self.attempts,
                "tool_histogram": {c.value: self.tool_histogram.get(c.value, 0) for c in CONSTRAINTS}}


@dataclass
class PipelineRun:
    config: PipelineConfig
    creator: dict
    inspector: dict
    rounds: list[RoundRecord] = field(default_factory=list)
    exports: list[ExportRecord] = field(default_factory=list)
    sampled_violations: list[ExportRecord] = field(default_factory=list)
    transitions: list[tuple[str, str]] = field(default_factory=list)
    transcript: Transcript = field(default_factory=Transcript)
    best: int | None = None

    @property
    def best_export(self) -> ExportRecord | None:
        return None if self.best is None else self.exports[self.best]

    @property
    def verdicts(self) -> list[dict]:
        return [a["verdict"] for r in self.rounds for a in r.attempts if a.get("verdict") is not None]

    def tool_histogram(self) -> dict:
        total = Counter()
        for r in self.rounds:
            total.update(r.tool_histogram)
        return {
            "per_round": [{c.value: r.tool_histogram.get(c.value, 0) for c in CONSTRAINTS} for r in self.rounds],
            "total": {c.value: total.get(c.value, 0) for c in CONSTRAINTS},
        }

    def summary(self) -> dict:
        best = self.best_export
        return {
            "config": self.config.to_dict(),
            "creator": self.creator,
            "inspector": self.inspector,
            "rounds": [r.to_dict() for r in self.rounds],
            "exports": [e.to_dict() for e in self.exports],
            "sampled_violations": [e.to_dict() for e in self.sampled_violations],
            "transitions": [list(t) for t in self.transitions],
            "tool_histogram": self.tool_histogram(),
            "best": None if best is None else {"round": best.round, "path": best.path,
                                               "mean_r2": best.fit.mean_r2},
            "confusion": ground_truth_label(self),
        }


# ---- the loop -----------------------------------------------------------------

def predictions_table(model: ConstitutiveModel, dataset: StressStrainDataset, report: FitReport) -> str:
    """Plain-text per-mode (param, target, prediction) rows plus an R2/MSE footer."""
    lines = []
    for s in dataset.samples:
        pred = predict_curve(model, s.mode, s.params)
        lines.append(f"mode {s.mode.value}")
        lines.append(f"{'param':>12}{'target':>14}{'prediction':>14}")
        for p, t, y in zip(s.params, s.stress, pred):
            lines.append(f"{p:>12.5g}{t:>14.6g}{y:>14.6g}")
    for k, v in report.modes.items():
        lines.append(f"{k}: R2 = {v.r2:.5f}, MSE = {v.mse:.6g}")
    return "\n".join(lines)


def refinement_feedback(record: ExportRecord, dataset: StressStrainDataset) -> str:
    return ("Current model descriptor:\n" + fence(record.model.descriptor.to_dict())
            + "\nPredictions of the trained model:\n" + predictions_table(record.model, dataset, record.fit)
            + "\nPropose an improved model that still satisfies every constraint.")


def _sort_key(record: ExportRecord) -> float:
    r2 = record.fit.mean_r2
    return r2 if np.isfinite(r2) else -np.inf


def run_pipeline(config: PipelineConfig, dataset: StressStrainDataset, creator: Backend,
                 inspector: Backend, transcript: Transcript | None = None) -> PipelineRun:
    """Propose, check, inspect and refine; export every inspector-approved model.

    Round 0 starts from the data alone; each of the ``refinement_rounds``
    later rounds starts from the previous export and its predictions. Each
    round allows ``max_corrections`` feedback cycles after the first
    proposal. Raises ``RunAborted`` (with the partial run attached) when no
    model gets approved at all.
    """
    if transcript is None:
        deterministic = creator.kind == "mock" and inspector.kind == "mock"
        transcript = Transcript(None if deterministic else wall_clock)
    run = PipelineRun(config, creator.describe(), inspector.describe(), transcript=transcript)
    rng = np.random.default_rng(config.seed)
    base = config.train.updated(seed=config.seed)

    for k in range(config.refinement_rounds + 1):
        record = RoundRecord(k)
        run.rounds.append(record)
        last = run.exports[-1] if run.exports else None
        feedback = refinement_feedback(last, dataset) if (k > 0 and last is not None) else None
        conversation = [{"role": "user", "content": creator_prompt(dataset.summary(), k, feedback)}]
        transcript.add("pipeline", k, conversation[0]["content"])
        try:
            _run_round(run, record, conversation, dataset, creator, inspector, base, rng)
        except RoundAborted as exc:
            record.aborted, record.reason = True, str(exc)
            logger.info("round %d aborted: %s", k, exc)

    if run.exports:
        run.best = max(range(len(run.exports)), key=lambda i: _sort_key(run.exports[i]))
    for rec in run.exports + run.sampled_violations:
        rec.validation = validate_all(rec.model, config.tol)
    if config.output_dir is not None:
        write_run(run, config.output_dir)
    if not run.exports:
        raise RunAborted("no model was approved in any round", run)
    return run


def _run_round(run, record, conversation, dataset, creator, inspector, base, rng):
    config = run.config
    k = record.index
    previous = None
    state = PipelineState.START
    for attempt in range(config.max_corrections + 1):
        entry = {"attempt": attempt}
        record.attempts.append(entry)
        try:
            proposal = creator_propose(creator, conversation, run.transcript, k)
        except MalformedProposal as exc:
            entry.update(proposal=None, checks={"ok": False, "stages": [
                {"stage": "parse", "ok": False, "reason": str(exc)}]}, verdict=None)
            message = check_feedback("parse", str(exc))
            conversation.append({"role": "user", "content": message})
            run.transcript.add("pipeline", k, message)
            continue
        entry["proposal"] = proposal.to_dict()
        checks = syntactic_checks(proposal, dataset, config.check_epochs, base)
        entry["checks"] = checks.to_dict()
        if not checks.ok:
            entry["verdict"] = None
            message = check_feedback(checks.failed_stage, checks.reason)
            conversation.append({"role": "user", "content": message})
            run.transcript.add("pipeline", k, message)
            continue

        try:
            verdict = inspector_audit(inspector, checks.model, config.tools, run.transcript, k, config.tol)
        except MalformedVerdict as exc:
            entry["verdict"] = None
            raise RoundAborted(f"inspector verdict unusable after re-ask: {exc}") from exc
        record.tool_histogram.update(c.value for c, _ in verdict.tool_calls)
        entry["verdict"] = verdict.to_dict()
        new_state = classify_transition(previous, verdict)
        run.transitions.append((state.value, new_state.value))
        entry["state"] = new_state.value
        previous, state = verdict, new_state

        if verdict.adherent:
            train_cfg = base.updated(**{k_: v for k_, v in proposal.train.items()})
            model, report = fit(proposal.build_descriptor(), dataset, train_cfg)
            run.exports.append(ExportRecord(k, True, model, report, verdict))
            return
        if rng.random() < config.violating_export_prob:
            run.sampled_violations.append(
                ExportRecord(k, False, checks.model, fit_report(checks.model, dataset), verdict))
        message = violation_feedback(verdict)
        conversation.append({"role": "user", "content": message})
        run.transcript.add("pipeline", k, message)
    raise RoundAborted(f"correction budget of {config.max_corrections} exhausted")


# ---- ground truth -------------------------------------------------------------

def _ratio(num: int, den: int):
    return num / den if den else None


def ground_truth_label(runs, tol: ToleranceConfig = ToleranceConfig()) -> dict:
    """Confusion summary of Inspector flags against ``validate_all``.

    Labels every approved export (flagged adhering) and every sampled
    flagged-violating model across one run or a list of runs.
    """
    runs = [runs] if isinstance(runs, PipelineRun) else list(runs)
    fa = fa_true = fv = fv_true = 0
    per = {c.value: {"flagged_violated": 0, "actually_violated": 0, "agree": 0} for c in CONSTRAINTS}
    for run in runs:
        for rec in run.exports + run.sampled_violations:
            if rec.validation is None:
                rec.validation = validate_all(rec.model, tol)
            truth = rec.validation.overall
            if rec.verdict.adherent:
                fa += 1
                fa_true += truth
            else:
                fv += 1
                fv_true += truth
            for c in CONSTRAINTS:
                flagged = not rec.verdict.status[c]
                actual = not rec.validation[c].passed
                per[c.value]["flagged_violated"] += flagged
                per[c.value]["actually_violated"] += actual
                per[c.value]["agree"] += flagged == actual
    return {
        "flagged_adhering": fa,
        "flagged_adhering_truly_adhering": fa_true,
        "flagged_violating": fv,
        "flagged_violating_truly_adhering": fv_true,
        "truly_adhering_given_flagged_adhering": _ratio(fa_true, fa),
        "truly_adhering_given_flagged_violating": _ratio(fv_true, fv),
        "adherence_precision": _ratio(fa_true, fa),
        "violation_precision": _ratio(fv - fv_true, fv),
        "per_constraint": per,
    }


# ---- persistence --------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=jsonable) + "\n", encoding="utf-8")


def _write_artifact(rec: ExportRecord, directory: Path, root: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    save_model(rec.model, directory / "model.json")
    _write_json(directory / "fit.json", rec.fit.to_dict())
    _write_json(directory / "verdict.json", rec.verdict.to_dict())
    if rec.validation is not None:
        _write_json(directory / "validation.json", rec.validation.to_dict())
    rec.path = (directory / "model.json").relative_to(root).as_posix()


def write_run(run: PipelineRun, directory) -> Path:
    """Write a run directory with stable file names.

    Top level holds the best model (``model.json``, ``fit.json``,
    ``validation.json``), ``transcript.jsonl`` and ``summary.json``; each
    approved export lives in ``round_<k>/`` and each sampled violating model
    in ``violations/<n>/``.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for rec in run.exports:
        _write_artifact(rec, root / f"round_{rec.round}", root)
    for n, rec in enumerate(run.sampled_violations):
        _write_artifact(rec, root / "violations" / str(n), root)
    best = run.best_export
    if best is not None:
        save_model(best.model, root / "model.json")
        _write_json(root / "fit.json", best.fit.to_dict())
        if best.validation is not None:
            _write_json(root / "validation.json", best.validation.to_dict())
    run.transcript.write(root / "transcript.jsonl")
    if run.config.tools:
        _write_json(root / "tool_histogram.json", run.tool_histogram())
    _write_json(root / "summary.json", run.summary())
    return root

