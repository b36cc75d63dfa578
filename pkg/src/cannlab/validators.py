"""Sampling-based checks of the nine physical admissibility constraints.

Each ``check_*`` function takes a model and a :class:`ToleranceConfig` and
returns a :class:`ConstraintVerdict`. A constraint passes only when no
sample violates it. None of these checks is a proof.
"""

from __future__ import annotations

import enum
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mechanics import (
    REFLECTION,
    base_sample_set,
    ellipticity_grid,
    fibonacci_hemisphere,
    in_plane_rotation,
    plane_strain_tensor,
    rotation_sets,
)
from .model import ConstitutiveModel

ROUNDOFF_FLOOR = 1e-12


@dataclass(frozen=True)
class ToleranceConfig:
    tau_rel: float = 1e-3
    tau_abs: float = 1e-4
    tau_loop: float = 1e-2
    tau_pointwise: float = 1e-2
    tau_norm: float = 1e-3
    n_seg: int = 200
    L: float = 2.0
    grid_n: int = 50
    n_dirs: int = 200
    batch: int = 64

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"tolerance {name} must be positive")

    def updated(self, **overrides) -> "ToleranceConfig":
        kw = {k: v for k, v in overrides.items() if v is not None}
        return ToleranceConfig(**{**self.__dict__, **kw})


class ConstraintId(str, enum.Enum):
    THERMODYNAMIC_CONSISTENCY = "thermodynamic_consistency"
    STRESS_SYMMETRY = "stress_symmetry"
    OBJECTIVITY = "objectivity"
    MATERIAL_SYMMETRY = "material_symmetry"
    ELLIPTICITY = "ellipticity"
    GROWTH = "growth"
    ENERGY_NORMALIZATION = "energy_normalization"
    STRESS_NORMALIZATION = "stress_normalization"
    NON_NEGATIVITY = "non_negativity"


CONSTRAINTS = tuple(ConstraintId)


@dataclass
class ConstraintVerdict:
    id: ConstraintId
    passed: bool
    worst: float = 0.0
    witness: dict | None = None
    samples_checked: int = 0
    metrics: dict = field(default_factory=dict)
    message: str = ""

    def __post_init__(self):
        self.id = ConstraintId(self.id)
        if self.passed:
            self.witness = None

    def to_dict(self) -> dict:
        return {
            "id": self.id.value,
            "passed": self.passed,
            "worst": self.worst,
            "witness": self.witness,
            "samples_checked": self.samples_checked,
            "metrics": self.metrics,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintVerdict":
        return cls(ConstraintId(d["id"]), bool(d["passed"]), float(d.get("worst", 0.0)), d.get("witness"),
                   int(d.get("samples_checked", 0)), dict(d.get("metrics", {})), d.get("message", ""))


@dataclass
class ValidationReport:
    verdicts: dict[ConstraintId, ConstraintVerdict]
    timing: dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if set(self.verdicts) != set(CONSTRAINTS):
            raise ValueError("a report holds exactly one verdict per constraint")

    @property
    def overall(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    @property
    def failed(self) -> list[ConstraintId]:
        return [c for c in CONSTRAINTS if not self.verdicts[c].passed]

    @property
    def n_passed(self) -> int:
        return sum(v.passed for v in self.verdicts.values())

    def __getitem__(self, key) -> ConstraintVerdict:
        return self.verdicts[ConstraintId(key)]

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "overall": self.overall,
            "passed": self.n_passed,
            "verdicts": [self.verdicts[c].to_dict() for c in CONSTRAINTS],
        }
        if include_timing:
            d["timing"] = dict(self.timing)
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ValidationReport":
        verdicts = {ConstraintId(v["id"]): ConstraintVerdict.from_dict(v) for v in d["verdicts"]}
        return cls(verdicts, dict(d.get("timing", {})))


def approx_eq(x, y, tol: ToleranceConfig = ToleranceConfig()):
    """|x - y| <= max(tau_rel * max(|x|, |y|), tau_abs), elementwise."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    bound = np.maximum(tol.tau_rel * np.maximum(np.abs(x), np.abs(y)), tol.tau_abs)
    ok = np.abs(x - y) <= bound
    return bool(ok) if ok.ndim == 0 else ok


def _tensor(F) -> list:
    return np.asarray(F, dtype=float).tolist()


def _failed_evaluation(cid: ConstraintId, exc: Exception) -> ConstraintVerdict:
    return ConstraintVerdict(cid, False, float("inf"), {"error": type(exc).__name__},
                             message=f"model evaluation failed: {exc}")


def _guarded(cid: ConstraintId):
    def wrap(fn):
        def inner(model, tol: ToleranceConfig = ToleranceConfig(), **kw):
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    return fn(model, tol, **kw)
            except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                return _failed_evaluation(cid, exc)
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        inner.constraint = cid
        return inner
    return wrap


def _base_stack():
    states = base_sample_set()
    return states, np.stack([s.F for s in states])


# ---- thermodynamic consistency ------------------------------------------

_ROT45 = in_plane_rotation(np.pi / 4)[:2, :2] @ np.diag([1.4, 1.0])
_IDENT = (1.0, 0.0, 0.0, 1.0)

LOOP_1 = (_IDENT, (1.5, 0.0, 0.0, 1.5 ** -0.5), (1.5, 0.0, 0.0, 1.0), (1.3, 0.0, 0.0, 1.3), _IDENT)
LOOP_2 = (_IDENT, (1.0, 0.5, 0.0, 1.0), (1.4, 0.5, 0.0, 1.0),
          (_ROT45[0, 0], _ROT45[0, 1], _ROT45[1, 0], _ROT45[1, 1]), _IDENT)
PATH_A = (_IDENT, (2.0, 0.0, 0.0, 2.0 ** -0.5))
PATH_B = (_IDENT, (2.0, 0.0, 0.0, 1.0), (2.0, 0.0, 0.0, 2.0 ** -0.5))


@dataclass(frozen=True)
class DeformationPath:
    waypoints: tuple[tuple[float, float, float, float], ...]
    n_seg: int = 200
    name: str = ""

    def __post_init__(self):
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if np.allclose(a, b, rtol=0.0, atol=1e-15):
                raise ValueError("consecutive waypoints must differ")

    @property
    def closed(self) -> bool:
        return np.allclose(self.waypoints[0], self.waypoints[-1], rtol=0.0, atol=1e-15)

    def tensors(self) -> np.ndarray:
        """Discretized states, F33 recomputed at every step; shape (N+1, 3, 3)."""
        t = np.linspace(0.0, 1.0, self.n_seg + 1)
        blocks = []
        for k, (a, b) in enumerate(zip(self.waypoints, self.waypoints[1:])):
            a, b = np.asarray(a), np.asarray(b)
            seg = a[None, :] + t[:, None] * (b - a)[None, :]
            blocks.append(seg if k == 0 else seg[1:])
        q = np.concatenate(blocks)
        return plane_strain_tensor(q[:, 0], q[:, 1], q[:, 2], q[:, 3])


def path_work(model: ConstitutiveModel, F: np.ndarray):
    """Energy, stress, trapezoidal work increments and cumulative work.

    Work uses the full 3x3 increment including the recomputed F33 and the
    stress before the pressure reaction (see ``ConstitutiveModel.work_stress``).
    """
    psi = np.asarray(model.psi(F))
    P = model.work_stress(F)
    dF = np.diff(F, axis=0)
    dW = 0.5 * np.einsum("kij,kij->k", P[:-1] + P[1:], dF)
    W = np.concatenate([[0.0], np.cumsum(dW)])
    return psi, P, dW, W


def loop_residual(dW: np.ndarray) -> float:
    total = np.sum(np.abs(dW))
    return float(abs(np.sum(dW)) / total) if total > 0 else 0.0


@_guarded(ConstraintId.THERMODYNAMIC_CONSISTENCY)
def check_thermodynamic_consistency(model: ConstitutiveModel, tol: ToleranceConfig = ToleranceConfig()) -> ConstraintVerdict:
    """Work along closed loops and between two open paths.

    Metrics: normalized loop residual, stress uniqueness at loop closure,
    two-path agreement of the end-state work, and pointwise agreement of
    cumulative work with the energy difference along the open paths.
    """
    metrics: dict = {}
    failures = []
    n = 0
    for name, wps in (("loop_1", LOOP_1), ("loop_2", LOOP_2)):
        F = DeformationPath(wps, tol.n_seg, name).tensors()
        n += F.shape[0]
        _, _, dW, _ = path_work(model, F)
        eta = loop_residual(dW)
        metrics[f"{name}_eta"] = eta
        if eta > tol.tau_loop:
            failures.append({"metric": "loop_residual", "path": name, "eta": eta})
        # fresh evaluations at the start and end states, after the loop has run
        p_start = model.piola_stress(F[0])
        p_end = model.piola_stress(F[-1])
        closure = float(np.max(np.abs(p_start - p_end)))
        metrics[f"{name}_closure_diff"] = closure
        if not np.all(approx_eq(p_start, p_end, tol)):
            failures.append({"metric": "stress_uniqueness", "path": name, "max_diff": closure})

    end_work = {}
    worst_pointwise = 0.0
    for name, wps in (("path_a", PATH_A), ("path_b", PATH_B)):
        F = DeformationPath(wps, tol.n_seg, name).tensors()
        n += F.shape[0]
        psi, _, _, W = path_work(model, F)
        end_work[name] = float(W[-1])
        dpsi = psi - psi[0]
        diff = np.abs(W - dpsi)
        bound = tol.tau_pointwise * np.maximum(np.abs(W), np.abs(dpsi))
        bad = np.flatnonzero(diff > np.maximum(bound, ROUNDOFF_FLOOR))
        scale = np.maximum(np.maximum(np.abs(W), np.abs(dpsi)), ROUNDOFF_FLOOR)
        worst_pointwise = max(worst_pointwise, float(np.max(diff / scale)))
        if bad.size:
            k = int(bad[0])
            failures.append({"metric": "work_energy", "path": name, "step": k, "F": _tensor(F[k]),
                             "work": float(W[k]), "energy_change": float(dpsi[k])})
    metrics["path_a_work"] = end_work["path_a"]
    metrics["path_b_work"] = end_work["path_b"]
    metrics["work_energy_max_rel"] = worst_pointwise
    if not approx_eq(end_work["path_a"], end_work["path_b"], tol):
        failures.append({"metric": "two_path", "path_a": end_work["path_a"], "path_b": end_work["path_b"]})

    worst = max(metrics["loop_1_eta"], metrics["loop_2_eta"])
    passed = not failures
    return ConstraintVerdict(
        ConstraintId.THERMODYNAMIC_CONSISTENCY, passed, worst,
        None if passed else {"failures": failures}, n, metrics,
        "all four work metrics satisfied" if passed else
        "violated metrics: " + ", ".join(sorted({f["metric"] for f in failures})),
    )


# ---- stress symmetry, objectivity, material symmetry ----------------------

@_guarded(ConstraintId.STRESS_SYMMETRY)
def check_stress_symmetry(model: ConstitutiveModel, tol: ToleranceConfig = ToleranceConfig()) -> ConstraintVerdict:
    states, F = _base_stack()
    sigma = model.cauchy_stress(F)
    sigT = np.swapaxes(sigma, -1, -2)
    ok = approx_eq(sigma, sigT, tol).all(axis=(-2, -1))
    asym = np.max(np.abs(sigma - sigT), axis=(-2, -1))
    witness = None
    if not ok.all():
        k = int(np.flatnonzero(~ok)[0])
        witness = {"state": states[k].label, "F": _tensor(F[k]), "sigma": _tensor(sigma[k])}
    return ConstraintVerdict(ConstraintId.STRESS_SYMMETRY, bool(ok.all()), float(asym.max()), witness, len(states),
                             {"max_asymmetry": float(asym.max())})


def _invariance_check(cid, model, tol, transforms, apply):
    states, F = _base_stack()
    ref = np.asarray(model.psi(F))
    worst = 0.0
    witness = None
    count = 0
    for q, Q in enumerate(transforms):
        moved = np.asarray(model.psi(apply(F, Q)))
        ok = approx_eq(moved, ref, tol)
        count += len(states)
        worst = max(worst, float(np.max(np.abs(moved - ref))))
        if witness is None and not ok.all():
            k = int(np.flatnonzero(~ok)[0])
            witness = {"state": states[k].label, "F": _tensor(F[k]), "Q_index": q, "Q": _tensor(Q),
                       "psi": float(ref[k]), "psi_transformed": float(moved[k])}
    return ConstraintVerdict(cid, witness is None, worst, witness, count, {"max_deviation": worst})


@_guarded(ConstraintId.OBJECTIVITY)
def check_objectivity(model: ConstitutiveModel, tol: ToleranceConfig = ToleranceConfig()) -> ConstraintVerdict:
    """psi(QF) = psi(F) over base states and proper rotations."""
    rots = rotation_sets().proper
    return _invariance_check(ConstraintId.OBJECTIVITY, model, tol, rots, lambda F, Q: Q @ F)


@_guarded(ConstraintId.MATERIAL_SYMMETRY)
def check_material_symmetry(model: ConstitutiveModel, tol: ToleranceConfig = ToleranceConfig()) -> ConstraintVerdict:
    """psi(F Q^T) = psi(F) over base states and the full orthogonal sample."""
    rs = rotation_sets()
    transforms = np.concatenate([rs.proper, rs.improper])
    return _invariance_check(ConstraintId.MATERIAL_SYMMETRY, model, tol, transforms,
                             lambda F, Q: F @ Q.T)


# ---- ellipticity ----------------------------------------------------------

def direction_sets(n_dirs: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Two disjoint hemisphere point sets used as the a and b directions."""
    return fibonacci_hemisphere(n_dirs, offset=0.0), fibonacci_hemisphere(n_dirs, offset=0.5)


def rank_one_forms(A: np.ndarray, a_set: np.ndarray, b_set: np.ndarray) -> np.ndarray:
    """R[f, p, q] = (a_p x b_q) : A_f : (a_p x b_q) for a stack of tensors."""
    M = np.einsum("fijkl,pi,pk->fpjl", A, a_set, a_set, optimize=True)
    return np.einsum("fpjl,qj,ql->fpq", M, b_set, b_set, optimize=True)


@_guarded(ConstraintId.ELLIPTICITY)
def check_ellipticity(model: ConstitutiveModel, tol: ToleranceConfig = ToleranceConfig(),
                      workers: int = 1) -> ConstraintVerdict:
    """Rank-one (Legendre-Hadamard) condition on ordered principal stretches.

    The deformation set is processed in chunks of ``tol.batch`` states. The
    witness is the first negative value in (state, a, b) order, so the result
    does not depend on chunking or on ``workers``.
    """
    states = ellipticity_grid(tol.L, tol.grid_n)
    F = np.stack([s.F for s in states])
    a_set, b_set = direction_sets(tol.n_dirs)
    chunks = [slice(i, min(i + tol.batch, len(states))) for i in range(0, len(states), tol.batch)]

    def chunk_forms(sl):
        return rank_one_forms(model.elasticity_tensor(F[sl]), a_set, b_set)

    minimum = np.inf
    checked = 0
    witness = None

    def consume(sl, R):
        nonlocal minimum, checked, witness
        checked += R.size
        minimum = min(minimum, float(R.min()))
        neg = np.argwhere(R < 0.0)
        if neg.size:
            f, p, q = neg[0]
            k = sl.start + int(f)
            witness = {"state": states[k].label, "F": _tensor(F[k]), "a": a_set[p].tolist(),
                       "b": b_set[q].tolist(), "value": float(R[f, p, q]),
                       "state_index": k, "a_index": int(p), "b_index": int(q)}
            return True
        return False

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for sl, R in zip(chunks, pool.map(chunk_forms, chunks)):
                if consume(sl, R):
                    break
    else:
        for sl in chunks:
            if consume(sl, chunk_forms(sl)):
                break
    passed = witness is None
    return ConstraintVerdict(ConstraintId.ELLIPTICITY, passed, minimum, witness, checked,
                             {"min_form": minimum, "n_states": len(states), "n_pairs": len(a_set) * len(b_set)})


# ---- the trivial and reference-state checks ------------------------------

def check_growth(model: ConstitutiveModel, tol: ToleranceConfig = ToleranceConfig()) -> ConstraintVerdict:
    return ConstraintVerdict(ConstraintId.GROWTH, True, 0.0, None, 0,
                             message="J = 1 on every admissible state; nothing to evaluate")


check_growth.constraint = ConstraintId.GROWTH

_IDENTITY = np.eye(3)


@_guarded(ConstraintId.ENERGY_NORMALIZATION)
def check_energy_normalization(model: ConstitutiveModel, tol: ToleranceConfig = ToleranceConfig()) -> ConstraintVerdict:
    value = abs(float(model.psi(_IDENTITY)))
    ok = value <= tol.tau_norm
    return ConstraintVerdict(ConstraintId.ENERGY_NORMALIZATION, ok, value,
                             None if ok else {"F": _tensor(_IDENTITY), "psi": value}, 1, {"psi_identity": value})


@_guarded(ConstraintId.STRESS_NORMALIZATION)
def check_stress_normalization(model: ConstitutiveModel, tol: ToleranceConfig = ToleranceConfig()) -> ConstraintVerdict:
    P = model.piola_stress(_IDENTITY)
    value = float(np.max(np.abs(P)))
    ok = value <= tol.tau_norm
    return ConstraintVerdict(ConstraintId.STRESS_NORMALIZATION, ok, value,
                             None if ok else {"F": _tensor(_IDENTITY), "P": _tensor(P)}, 1, {"max_abs_P_identity": value})


@_guarded(ConstraintId.NON_NEGATIVITY)
def check_non_negativity(model: ConstitutiveModel, tol: ToleranceConfig = ToleranceConfig()) -> ConstraintVerdict:
    states, F = _base_stack()
    psi = np.asarray(model.psi(F))
    bad = np.flatnonzero(psi < -tol.tau_norm)
    witness = None
    if bad.size:
        k = int(bad[0])
        witness = {"state": states[k].label, "F": _tensor(F[k]), "psi": float(psi[k])}
    return ConstraintVerdict(ConstraintId.NON_NEGATIVITY, not bad.size, float(psi.min()), witness, len(states),
                             {"min_psi": float(psi.min())})


VALIDATORS: dict[ConstraintId, Callable] = {
    ConstraintId.THERMODYNAMIC_CONSISTENCY: check_thermodynamic_consistency,
    ConstraintId.STRESS_SYMMETRY: check_stress_symmetry,
    ConstraintId.OBJECTIVITY: check_objectivity,
    ConstraintId.MATERIAL_SYMMETRY: check_material_symmetry,
    ConstraintId.ELLIPTICITY: check_ellipticity,
    ConstraintId.GROWTH: check_growth,
    ConstraintId.ENERGY_NORMALIZATION: check_energy_normalization,
    ConstraintId.STRESS_NORMALIZATION: check_stress_normalization,
    ConstraintId.NON_NEGATIVITY: check_non_negativity,
}


def run_validator(cid, model: ConstitutiveModel, tol: ToleranceConfig = ToleranceConfig()) -> ConstraintVerdict:
    return VALIDATORS[ConstraintId(cid)](model, tol)


def validate_all(model: ConstitutiveModel, tol: ToleranceConfig = ToleranceConfig()) -> ValidationReport:
    verdicts, timing = {}, {}
    for cid in CONSTRAINTS:
        start = time.perf_counter()
        verdicts[cid] = VALIDATORS[cid](model, tol)
        timing[cid.value] = time.perf_counter() - start
    return ValidationReport(verdicts, timing)
