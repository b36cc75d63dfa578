"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed even when output capture is on.
"""

import time

import numpy as np
import pytest

from oracles import base_tensors, fd_elasticity, fd_piola, mixed_model, random_descriptor, rel_err, trace_free_directions
from cannlab.agents import (
    BlindInspector,
    FlakyCreator,
    GoodCreator,
    OracleInspector,
    PipelineConfig,
    RunAborted,
    ScriptedCreator,
    StubbornCreator,
    ground_truth_label,
    rawf_descriptor,
    run_pipeline,
)
from cannlab.datasets import generate_synthetic, invariant_plane_eval
from cannlab.model import (
    ConstitutiveModel,
    WeightSet,
    build_model,
    canonical_descriptor,
    init_weights,
    load_model,
    mooney_rivlin,
    negative_weight_fixture,
    neo_hookean,
    rawf_fixture,
    save_model,
    sine_fixture,
    skew_fixture,
    softplus_raw_fixture,
)
from cannlab.training import TrainConfig, fit, loss, loss_gradient
from cannlab.validators import CONSTRAINTS, ConstraintId, validate_all

pytestmark = pytest.mark.slow

C = ConstraintId


def _report(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture(scope="module")
def rubber():
    return generate_synthetic(mooney_rivlin(), n=15, name="synthetic_rubber")


@pytest.fixture(scope="module")
def seed_fits(rubber):
    out = []
    for seed in range(10):
        start = time.perf_counter()
        model, report = fit(canonical_descriptor(), rubber, TrainConfig(seed=seed))
        out.append((model, report, time.perf_counter() - start))
    return out


def test_validator_soundness(capsys):
    details, ok = [], True
    for name, model in (("neo_hookean", neo_hookean()), ("mooney_rivlin", mooney_rivlin())):
        start = time.perf_counter()
        report = validate_all(model)
        elapsed = time.perf_counter() - start
        th = report[C.THERMODYNAMIC_CONSISTENCY].metrics
        eta = max(th["loop_1_eta"], th["loop_2_eta"])
        ell = report[C.ELLIPTICITY]
        full = ell.samples_checked == 1275 * 200 * 200
        good = report.n_passed == 9 and eta <= 1e-6 and ell.worst >= 0 and full and elapsed <= 300
        ok &= good
        details.append(f"{name} {report.n_passed}/9 eta={eta:.2e} ell_min={ell.worst:.3e} "
                       f"forms={ell.samples_checked} t={elapsed:.1f}s")
    _report(capsys, "validator soundness", ok, "; ".join(details))
    assert ok


EXPECTED = {
    "rawf": (rawf_fixture, {C.OBJECTIVITY, C.MATERIAL_SYMMETRY}),
    "sine": (sine_fixture, {C.ELLIPTICITY}),
    "softplus_raw": (softplus_raw_fixture, {C.ENERGY_NORMALIZATION}),
    "negative_weight": (negative_weight_fixture, {C.NON_NEGATIVITY, C.ELLIPTICITY}),
    "skew": (skew_fixture, {C.THERMODYNAMIC_CONSISTENCY, C.STRESS_SYMMETRY}),
}


def test_validator_completeness(capsys):
    details, ok = [], True
    for name, (factory, expected) in EXPECTED.items():
        report = validate_all(factory())
        got = set(report.failed)
        good = got == expected and report[C.GROWTH].passed
        ok &= good
        details.append(f"{name}={'ok' if good else sorted(c.value for c in got)}")
    _report(capsys, "validator completeness", ok, ", ".join(details))
    assert ok


def test_derivative_oracles(capsys, rubber):
    models = [neo_hookean(), mooney_rivlin(), mixed_model(0), mixed_model(1)]
    states = base_tensors()
    stress = max(rel_err(m.piola_stress(F), fd_piola(m, F)) for m in models for F in states)

    elastic = 0.0
    for m in models + [rawf_fixture()]:
        for F in states[1:]:
            elastic = max(elastic, rel_err(m.elasticity_tensor(F), fd_elasticity(m, F), floor=1e-12))
        A = m.elasticity_tensor(np.eye(3))
        scale = max(np.max(np.abs(A)), 1e-12)
        for E in trace_free_directions():
            h = 1e-5
            fd = (m.dpsi_dF(np.eye(3) + h * E) - m.dpsi_dF(np.eye(3) - h * E)) / (2 * h)
            elastic = max(elastic, np.max(np.abs(np.einsum("ijkl,kl->ij", A, E) - fd)) / scale)

    rng = np.random.default_rng(7)
    grad, n_models = 0.0, 24
    for _ in range(n_models):
        desc = random_descriptor(rng)
        model = build_model(desc, init_weights(desc, rng))
        g = loss_gradient(model, rubber).flat()
        w = model.weights.flat()
        fd = np.zeros_like(w)
        h = 1e-6
        for i in range(w.size):
            e = np.zeros_like(w)
            e[i] = h
            plus = ConstitutiveModel(desc, WeightSet.from_flat(desc, w + e))
            minus = ConstitutiveModel(desc, WeightSet.from_flat(desc, w - e))
            fd[i] = (loss(plus, rubber) - loss(minus, rubber)) / (2 * h)
        grad = max(grad, np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-8))

    ok = stress <= 1e-5 and elastic <= 1e-4 and grad <= 1e-4
    _report(capsys, "derivative oracles", ok,
            f"stress={stress:.2e} elasticity={elastic:.2e} gradient={grad:.2e} over {n_models} models")
    assert ok


def test_fitting(capsys, seed_fits):
    wins = 0
    worst_time = 0.0
    per_seed = []
    for seed, (_, report, elapsed) in enumerate(seed_fits):
        r2 = min(m.r2 for m in report.modes.values())
        wins += r2 >= 0.99 and elapsed <= 120
        worst_time = max(worst_time, elapsed)
        per_seed.append(f"{r2:.5f}")
    ok = wins >= 9
    _report(capsys, "fitting", ok, f"{wins}/10 seeds with min-mode R2 >= 0.99 [{' '.join(per_seed)}], "
                                   f"slowest seed {worst_time:.1f}s")
    assert ok


def test_generalization(capsys, seed_fits):
    model = seed_fits[0][0]
    plane = invariant_plane_eval(model, mooney_rivlin(), lam1_max=3.0, n=40)
    ok = plane.max_rel_err <= 0.05
    _report(capsys, "generalization", ok, f"max P11 relative error {100 * plane.max_rel_err:.2f}% on 40x40 plane")
    assert ok


def test_pipeline_determinism_and_bookkeeping(capsys, rubber, tmp_path):
    cfg = PipelineConfig()
    good = run_pipeline(cfg, rubber, GoodCreator(), OracleInspector())
    exports_ok = len(good.exports) == 3 and all(e.approved and validate_all(e.model).overall for e in good.exports)

    flaky = run_pipeline(cfg, rubber, FlakyCreator(), OracleInspector())
    seq = [("Start", "NewViolation"), ("NewViolation", "Adherence")]
    flaky_ok = flaky.rounds[0].attempts and flaky.transitions[:2] == seq

    try:
        run_pipeline(PipelineConfig(refinement_rounds=0), rubber, StubbornCreator(), OracleInspector())
        stubborn_ok = False
    except RunAborted as exc:
        stubborn_ok = exc.run.rounds[0].aborted and len(exc.run.rounds[0].attempts) == cfg.max_corrections + 1

    dumps = []
    for d in ("a", "b"):
        out = tmp_path / d
        run_pipeline(PipelineConfig(violating_export_prob=1.0, output_dir=str(out)), rubber,
                     FlakyCreator(), OracleInspector())
        dumps.append({p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    repro_ok = dumps[0] == dumps[1] and good.summary() == run_pipeline(
        cfg, rubber, GoodCreator(), OracleInspector()).summary()

    ok = bool(exports_ok and flaky_ok and stubborn_ok and repro_ok)
    _report(capsys, "pipeline determinism and bookkeeping", ok,
            f"good exports={len(good.exports)} all valid={exports_ok}; flaky={flaky.transitions[:2]}; "
            f"stubborn aborted={stubborn_ok}; bitwise reproducible={repro_ok}")
    assert ok


def test_confusion_arithmetic(capsys, rubber):
    fast = PipelineConfig(refinement_rounds=0, check_epochs=50, train=TrainConfig(epochs=200))
    script = [canonical_descriptor()] * 9 + [rawf_descriptor()]
    blind = ground_truth_label([run_pipeline(fast, rubber, ScriptedCreator([d]), BlindInspector()) for d in script])
    oracle_cfg = PipelineConfig(refinement_rounds=1, violating_export_prob=1.0, check_epochs=50,
                                train=TrainConfig(epochs=200))
    oracle = ground_truth_label([run_pipeline(oracle_cfg, rubber, FlakyCreator(), OracleInspector())])
    ok = (blind["truly_adhering_given_flagged_adhering"] == 0.9
          and oracle["truly_adhering_given_flagged_adhering"] == 1.0
          and oracle["flagged_violating"] > 0
          and oracle["truly_adhering_given_flagged_violating"] == 0.0
          and oracle["violation_precision"] == 1.0)
    _report(capsys, "confusion arithmetic", ok,
            f"blind P(adhering | flagged adhering)={blind['truly_adhering_given_flagged_adhering']}; oracle "
            f"adherence precision={oracle['adherence_precision']} violation precision={oracle['violation_precision']}")
    assert ok


def test_serialization(capsys, tmp_path):
    rng = np.random.default_rng(11)
    model = mixed_model(5)
    back = load_model(save_model(model, tmp_path / "m.json"))
    states = []
    for _ in range(100):
        a, d = rng.uniform(0.6, 1.8, 2)
        b, c = rng.uniform(-0.5, 0.5, 2)
        if abs(a * d - b * c) < 0.2:
            a += 1.0
        F = np.zeros((3, 3))
        F[:2, :2] = [[a, b], [c, d]]
        F[2, 2] = 1.0 / (a * d - b * c)
        states.append(F)
    F = np.stack(states)
    same_psi = np.array_equal(model.psi(F), back.psi(F))
    same_p = np.array_equal(model.piola_stress(F), back.piola_stress(F))
    ok = same_psi and same_p and back.to_json() == model.to_json()
    _report(capsys, "serialization", ok, f"100 states: psi identical={same_psi}, P identical={same_p}")
    assert ok
