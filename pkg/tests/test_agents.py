import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from cannlab.agents import (
    AuthFailure,
    BackendUnavailable,
    BlindInspector,
    FlakyCreator,
    GoodCreator,
    InspectorVerdict,
    LiveBackend,
    MalformedProposal,
    MalformedVerdict,
    ModelProposal,
    OracleInspector,
    PipelineConfig,
    PipelineState,
    RunAborted,
    ScriptedCreator,
    ScriptedInspector,
    StubbornCreator,
    ToolCallingInspector,
    Transcript,
    classify_transition,
    creator_propose,
    ground_truth_label,
    inspector_audit,
    live_llm_call,
    make_backend,
    parse_proposal,
    parse_verdict,
    rawf_descriptor,
    run_pipeline,
    syntactic_checks,
)
from cannlab.agents.protocol import TOOL_SENTENCE, creator_prompt, fenced_json, inspector_prompt, render_verdict
from cannlab.datasets import generate_synthetic
from cannlab.model import ModelDescriptor, Term, canonical_descriptor, mooney_rivlin, rawf_fixture
from cannlab.training import TrainConfig
from cannlab.validators import CONSTRAINTS, ConstraintId, validate_all

FAST = PipelineConfig(refinement_rounds=0, check_epochs=50, train=TrainConfig(epochs=200))


@pytest.fixture(scope="module")
def data():
    return generate_synthetic(mooney_rivlin(), n=15, name="mr")


def _verdict(violated=()):
    status = {c: c.value not in violated for c in CONSTRAINTS}
    return InspectorVerdict(status, {c: "" for c in CONSTRAINTS})


# ---- protocol -------------------------------------------------------------------

def test_fenced_json_picks_last_matching_block():
    text = "```json\n{\"a\": 1}\n```\nnoise\n```\n{\"descriptor\": {}}\n```\n```json\nnot json\n```"
    assert fenced_json(text, "descriptor") == {"descriptor": {}}
    assert fenced_json(text) == {"descriptor": {}}
    assert fenced_json("no fences") is None


def test_parse_proposal():
    reply = 'Sure.\n```json\n{"descriptor": {"terms": []}, "train": {"epochs": 10}, "rationale": "r"}\n```'
    p = parse_proposal(reply)
    assert p.train == {"epochs": 10} and p.rationale == "r"
    with pytest.raises(MalformedProposal):
        parse_proposal("I would use a neo-Hookean model.")
    with pytest.raises(MalformedProposal):
        parse_proposal('```json\n{"descriptor": {}, "train": {"momentum": 0.9}}\n```')


def test_parse_verdict_requires_all_nine():
    full = render_verdict({c: True for c in CONSTRAINTS})
    assert parse_verdict(full).adherent
    partial = render_verdict({c: True for c in CONSTRAINTS[:8]})
    with pytest.raises(MalformedVerdict):
        parse_verdict(partial)
    v = _verdict(["ellipticity"])
    assert InspectorVerdict.from_dict(v.to_dict()).violated == [ConstraintId.ELLIPTICITY]


def test_prompts():
    text = creator_prompt("dataset summary", 1, "fix it")
    assert "Round: 1" in text and "fix it" in text
    for c in CONSTRAINTS:
        assert c.value in text
    doc = rawf_fixture().to_document()
    assert TOOL_SENTENCE in inspector_prompt(doc, tools=True)
    assert TOOL_SENTENCE not in inspector_prompt(doc, tools=False)


# ---- transitions ---------------------------------------------------------------

def test_classify_transition():
    assert classify_transition(None, _verdict()) is PipelineState.ADHERENCE
    assert classify_transition(_verdict(["ellipticity"]), _verdict(["ellipticity"])) is PipelineState.REPEATED_VIOLATION
    assert classify_transition(_verdict(["ellipticity"]), _verdict(["material_symmetry"])) is PipelineState.NEW_VIOLATION
    assert classify_transition(None, _verdict(["growth"])) is PipelineState.NEW_VIOLATION
    assert classify_transition(None, None) is PipelineState.START


# ---- creator and checks ----------------------------------------------------------

def test_creator_mocks(data):
    conv = [{"role": "user", "content": creator_prompt(data.summary(), 0)}]
    p = creator_propose(GoodCreator(), conv)
    assert p.build_descriptor().is_canonical
    conv = [{"role": "user", "content": creator_prompt(data.summary(), 0)}]
    first = creator_propose(FlakyCreator(), conv)
    assert any(t.feature == "F33" for t in first.build_descriptor().terms)
    conv.append({"role": "user", "content": "Flagged violations: objectivity"})
    assert creator_propose(FlakyCreator(), conv).build_descriptor().is_canonical
    with pytest.raises(MalformedProposal):
        creator_propose(ScriptedCreator(["no block here"]), [{"role": "user", "content": "x"}])
    with pytest.raises(ValueError):
        creator_propose(BlindInspector(), conv)


def test_syntactic_checks_pass(data):
    report = syntactic_checks(ModelProposal(canonical_descriptor().to_dict()), data, check_epochs=30)
    assert report.ok
    assert [s["stage"] for s in report.stages] == ["instantiate", "train", "predict", "roundtrip"]
    assert report.model is not None


def test_syntactic_checks_zero_terms(data):
    report = syntactic_checks(ModelProposal({"terms": []}), data)
    assert not report.ok
    assert report.failed_stage == "instantiate"
    assert len(report.stages) == 1


def test_syntactic_checks_divergence(data):
    desc = ModelDescriptor((Term("I1m3", "linear", weight_constraint="free"),))
    proposal = ModelProposal(desc.to_dict(), {"learning_rate": 1e3, "optimizer": "sgd"})
    report = syntactic_checks(proposal, data)
    assert report.failed_stage == "train"
    assert report.reason.startswith("NonFiniteLoss")


# ---- inspector --------------------------------------------------------------------

def test_oracle_inspector_on_rawf():
    v = inspector_audit(OracleInspector(), rawf_fixture())
    assert set(v.violated) == {ConstraintId.OBJECTIVITY, ConstraintId.MATERIAL_SYMMETRY}
    assert v.tool_calls == []


def test_oracle_inspector_with_tools_calls_all_nine():
    t = Transcript()
    v = inspector_audit(OracleInspector(), rawf_fixture(), tools=True, transcript=t)
    assert [c for c, _ in v.tool_calls] == list(CONSTRAINTS)
    assert set(v.violated) == {ConstraintId.OBJECTIVITY, ConstraintId.MATERIAL_SYMMETRY}
    assert sum(r["role"] == "tool" for r in t.records) == 9


def test_blind_inspector():
    assert inspector_audit(BlindInspector(), rawf_fixture()).adherent


def test_tool_calling_inspector_counts():
    v = inspector_audit(ToolCallingInspector(2), rawf_fixture(), tools=True)
    assert len(v.tool_calls) == 2
    v = inspector_audit(ToolCallingInspector(2), rawf_fixture(), tools=False)
    assert v.tool_calls == []


def test_inspector_reask_then_abort():
    good = render_verdict({c: True for c in CONSTRAINTS})
    t = Transcript()
    v = inspector_audit(ScriptedInspector(["garbage", good]), rawf_fixture(), transcript=t)
    assert v.adherent
    assert len(t) == 2
    with pytest.raises(MalformedVerdict):
        inspector_audit(ScriptedInspector(["garbage", "still garbage"]), rawf_fixture())


def test_tool_call_rejected_when_tools_disabled():
    call = '```json\n{"tool_call": "objectivity"}\n```'
    with pytest.raises(MalformedVerdict):
        inspector_audit(ScriptedInspector([call, call]), rawf_fixture(), tools=False)


# ---- pipeline ---------------------------------------------------------------------

def test_good_creator_exports_one_per_round(data):
    cfg = PipelineConfig(check_epochs=50, train=TrainConfig(epochs=300))
    run = run_pipeline(cfg, data, GoodCreator(), OracleInspector())
    assert len(run.exports) == 3
    assert all(e.approved and e.validation.overall for e in run.exports)
    r2 = [e.fit.mean_r2 for e in run.exports]
    assert run.best == int(np.argmax(r2))
    assert run.transitions == [("Start", "Adherence")] * 3
    assert len(run.transitions) == len(run.verdicts)


def test_flaky_transition_sequence(data):
    run = run_pipeline(FAST, data, FlakyCreator(), OracleInspector())
    assert run.transitions == [("Start", "NewViolation"), ("NewViolation", "Adherence")]
    assert run.transitions[0][0] == "Start"


def test_stubborn_aborts(data):
    with pytest.raises(RunAborted) as err:
        run_pipeline(FAST.__class__(refinement_rounds=0, max_corrections=5, check_epochs=20), data,
                     StubbornCreator(), OracleInspector())
    run = err.value.run
    assert run.rounds[0].aborted
    assert len(run.rounds[0].attempts) == 6
    feedback = [r for r in run.transcript.records if r["content"].startswith("Flagged violations")]
    assert len(feedback) == 6 - 1 + 1  # every violating verdict is fed back, including the last
    assert run.transitions[-1] == ("RepeatedViolation", "RepeatedViolation")


def test_malformed_creator_reply_counts_as_correction(data):
    creator = ScriptedCreator(["no block", canonical_descriptor()])
    run = run_pipeline(FAST, data, creator, OracleInspector())
    attempts = run.rounds[0].attempts
    assert attempts[0]["checks"]["stages"][0]["stage"] == "parse"
    assert len(run.exports) == 1
    assert len(run.transitions) == 1


def test_failed_check_feeds_back(data):
    bad = ModelDescriptor((Term("I1m3", "linear", weight_constraint="free"),))
    creator = ScriptedCreator([(bad, {"learning_rate": 1e3, "optimizer": "sgd"}), canonical_descriptor()])
    run = run_pipeline(FAST, data, creator, OracleInspector())
    assert run.rounds[0].attempts[0]["checks"]["ok"] is False
    assert any("Syntactic check failed at stage 'train'" in r["content"] for r in run.transcript.records)


def test_oracle_verdicts_equal_truth(data):
    cfg = PipelineConfig(refinement_rounds=1, violating_export_prob=1.0, check_epochs=50, train=TrainConfig(epochs=200))
    run = run_pipeline(cfg, data, FlakyCreator(), OracleInspector())
    for rec in run.exports + run.sampled_violations:
        assert [c for c in CONSTRAINTS if not rec.verdict.status[c]] == rec.validation.failed
    conf = ground_truth_label(run)
    assert conf["adherence_precision"] == 1.0
    assert conf["violation_precision"] == 1.0
    assert set(conf["per_constraint"]) == {c.value for c in CONSTRAINTS}


def test_blind_confusion_arithmetic(data):
    script = [canonical_descriptor()] * 9 + [rawf_descriptor()]
    runs = [run_pipeline(FAST, data, ScriptedCreator([d]), BlindInspector()) for d in script]
    conf = ground_truth_label(runs)
    assert conf["flagged_adhering"] == 10
    assert conf["truly_adhering_given_flagged_adhering"] == 0.9
    assert conf["truly_adhering_given_flagged_violating"] is None


def test_tool_histogram_accounting(data):
    cfg = PipelineConfig(refinement_rounds=1, tools=True, check_epochs=30, train=TrainConfig(epochs=100))
    run = run_pipeline(cfg, data, GoodCreator(), ToolCallingInspector(3))
    hist = run.tool_histogram()
    dispatched = sum(len(e.verdict.tool_calls) for e in run.exports)
    assert sum(hist["total"].values()) == dispatched == 6
    assert sum(sum(r.values()) for r in hist["per_round"]) == dispatched


def test_mock_runs_bitwise_reproducible(data, tmp_path):
    cfg = PipelineConfig(refinement_rounds=1, tools=True, check_epochs=30, train=TrainConfig(epochs=100),
                         violating_export_prob=1.0)
    outs = []
    for d in ("a", "b"):
        run_pipeline(PipelineConfig(**{**cfg.__dict__, "output_dir": str(tmp_path / d)}), data,
                     FlakyCreator(), OracleInspector())
        outs.append({p.relative_to(tmp_path / d).as_posix(): p.read_bytes()
                     for p in sorted((tmp_path / d).rglob("*")) if p.is_file()})
    assert outs[0] == outs[1]
    assert {"model.json", "fit.json", "validation.json", "transcript.jsonl", "summary.json",
            "tool_histogram.json"} <= set(outs[0])
    lines = outs[0]["transcript.jsonl"].decode().splitlines()
    assert [json.loads(x)["timestamp"] for x in lines] == list(range(len(lines)))


def test_export_invariant(data):
    run = run_pipeline(PipelineConfig(refinement_rounds=1, violating_export_prob=1.0, check_epochs=30,
                                      train=TrainConfig(epochs=100)), data, FlakyCreator(), OracleInspector())
    for e in run.exports:
        assert e.approved and e.verdict.adherent
    for e in run.sampled_violations:
        assert not e.approved and not e.verdict.adherent


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(violating_export_prob=1.5)
    with pytest.raises(ValueError):
        PipelineConfig(max_corrections=-1)


def test_make_backend():
    assert isinstance(make_backend("good", "creator"), GoodCreator)
    assert make_backend("tools:4", "inspector").n_calls == 4
    with pytest.raises(ValueError):
        make_backend("oracle", "creator")


# ---- live backend against a local stub --------------------------------------------

class _Stub(BaseHTTPRequestHandler):
    mode = "ok"
    hits = 0

    def log_message(self, *args):
        pass

    def do_POST(self):
        type(self).hits += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if self.mode == "slow":
            time.sleep(3.0)
        if self.mode == "auth":
            self.send_response(401)
            self.end_headers()
            return
        if self.mode == "error":
            self.send_response(503)
            self.end_headers()
            return
        reply = {"choices": [{"message": {"role": "assistant",
                                          "content": f"echo {body['messages'][-1]['content']}"}}]}
        data = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def stub():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Stub)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Stub.hits = 0
    _Stub.mode = "ok"
    yield f"http://127.0.0.1:{server.server_address[1]}/v1"
    server.shutdown()
    server.server_close()


def test_live_missing_credential_fails_before_network():
    backend = LiveBackend.from_env("creator", env={"CANNLAB_LLM_BASE_URL": "http://127.0.0.1:9"})
    with pytest.raises(AuthFailure):
        backend.complete([{"role": "user", "content": "hi"}])


def test_live_roundtrip_and_transcript(stub):
    backend = LiveBackend(role="creator", base_url=stub, model_name="m", api_key="k", timeout=5, retries=1)
    t = Transcript()
    assert live_llm_call(backend, [{"role": "user", "content": "ping"}], t) == "echo ping"
    live_llm_call(backend, [{"role": "user", "content": "again"}], t)
    assert len(t) == 2
    assert t.records[0]["role"] == "creator" and t.records[0]["prompt"] == "ping"


def test_live_timeout_honoured(stub):
    _Stub.mode = "slow"
    backend = LiveBackend(role="creator", base_url=stub, model_name="m", api_key="k", timeout=1.0, retries=1)
    start = time.monotonic()
    with pytest.raises(BackendUnavailable):
        backend.complete([{"role": "user", "content": "hi"}])
    assert abs(time.monotonic() - start - 1.0) <= 1.0


def test_live_retries_then_unavailable(stub):
    _Stub.mode = "error"
    backend = LiveBackend(role="inspector", base_url=stub, model_name="m", api_key="k", timeout=2, retries=3)
    with pytest.raises(BackendUnavailable):
        backend.complete([{"role": "user", "content": "hi"}])
    assert _Stub.hits == 3


def test_live_rejected_credential(stub):
    _Stub.mode = "auth"
    backend = LiveBackend(role="creator", base_url=stub, model_name="m", api_key="bad", timeout=2, retries=3)
    with pytest.raises(AuthFailure):
        backend.complete([{"role": "user", "content": "hi"}])
    assert _Stub.hits == 1
