"""Block-structured invariant CANNs and the fixtures used to break them.

A model is a sum of terms. Each term reads one scalar feature ``x`` of the
deformation gradient (``I1 - 3``, ``I2 - 3`` or a raw component of
``F - I``), feeds ``y = w_in * x`` through an activation and sums
``w_out * f(y)`` over its neurons. Because every term depends on a single
feature, first and second derivatives with respect to ``F`` follow from the
chain rule in closed form; no automatic differentiation is involved.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .mechanics import as_tensor, invariants_array

MODEL_FORMAT_VERSION = "1"
PRESSURE_GUARD = 1e-8
LOG2 = float(np.log(2.0))


class DegeneratePressureDenominator(ArithmeticError):
    """(F^-T)_33 is too small to solve for the pressure."""


class SchemaMismatch(ValueError):
    """A model document does not follow the expected schema."""


class IoFailure(OSError):
    """A model file could not be read or written."""


class Activation(str, enum.Enum):
    LINEAR = "linear"
    SQUARE = "square"
    SOFTPLUS_SHIFTED = "softplus_shifted"
    SOFTPLUS_SQ = "softplus_sq"
    EXP_M1MY = "exp_m1my"
    SOFTPLUS_RAW = "softplus_raw"
    SINE = "sine"

    @property
    def clip(self) -> float | None:
        if self in (Activation.SOFTPLUS_SHIFTED, Activation.SOFTPLUS_SQ, Activation.SOFTPLUS_RAW):
            return 30.0
        if self is Activation.EXP_M1MY:
            return 10.0
        return None

    @property
    def convex(self) -> bool:
        return self is not Activation.SINE

    @property
    def normalizing(self) -> bool:
        """f(0) == 0."""
        return self is not Activation.SOFTPLUS_RAW


def _softplus(y):
    return np.logaddexp(0.0, y)


def _sigmoid(y):
    return 0.5 * (1.0 + np.tanh(0.5 * y))


def activation_derivs(kind: Activation, y: np.ndarray):
    """Return f(y), f'(y), f''(y) for an activation kind."""
    kind = Activation(kind)
    if kind is Activation.LINEAR:
        return y, np.ones_like(y), np.zeros_like(y)
    if kind is Activation.SQUARE:
        return y * y, 2.0 * y, np.full_like(y, 2.0)
    if kind is Activation.EXP_M1MY:
        e = np.exp(y)
        return e - 1.0 - y, e - 1.0, e
    if kind is Activation.SINE:
        return np.sin(y), np.cos(y), -np.sin(y)
    sp = _softplus(y)
    sg = _sigmoid(y)
    dsg = sg * (1.0 - sg)
    if kind is Activation.SOFTPLUS_RAW:
        return sp, sg, dsg
    g = sp - LOG2
    if kind is Activation.SOFTPLUS_SHIFTED:
        return g, sg, dsg
    return g * g, 2.0 * g * sg, 2.0 * sg * sg + 2.0 * g * dsg


_RAW_RE = re.compile(r"^F([123])([123])$")


def parse_feature(feature: str):
    """Map a feature name to ('I1'|'I2', None) or ('F', (i, j))."""
    if feature == "I1m3":
        return "I1", None
    if feature == "I2m3":
        return "I2", None
    m = _RAW_RE.match(feature)
    if m:
        return "F", (int(m.group(1)) - 1, int(m.group(2)) - 1)
    raise SchemaMismatch(f"unknown feature {feature!r}")


@dataclass(frozen=True)
class Term:
    feature: str
    activation: Activation
    neurons: int = 1
    weight_constraint: str = "nonneg"
    trainable: bool = True
    init: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        parse_feature(self.feature)
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.neurons < 1:
            raise SchemaMismatch("a term needs at least one neuron")
        if self.weight_constraint not in ("nonneg", "free"):
            raise SchemaMismatch(f"unknown weight constraint {self.weight_constraint!r}")
        if self.init is not None:
            w_in, w_out = (tuple(float(v) for v in w) for w in self.init)
            if len(w_in) != self.neurons or len(w_out) != self.neurons:
                raise SchemaMismatch("init weights must have one entry per neuron")
            object.__setattr__(self, "init", (w_in, w_out))

    @property
    def is_invariant(self) -> bool:
        return parse_feature(self.feature)[0] != "F"


@dataclass(frozen=True)
class StressAugmentation:
    """Non-potential stress added after the pressure solve.

    ``skew`` adds dP12 = value*F21 and dP21 = -value*F12; ``offset`` adds a
    constant value to P11.
    """

    kind: str = "none"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "skew", "offset"):
            raise SchemaMismatch(f"unknown stress augmentation {self.kind!r}")


@dataclass(frozen=True)
class ModelDescriptor:
    terms: tuple[Term, ...]
    normalize_energy: bool = True
    augmentation: StressAugmentation = field(default_factory=StressAugmentation)
    name: str = "cann"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise SchemaMismatch("a model needs at least one term")

    @property
    def is_canonical(self) -> bool:
        return (
            self.normalize_energy
            and self.augmentation.kind == "none"
            and all(t.is_invariant and t.activation.convex and t.activation.normalizing
                    and t.weight_constraint == "nonneg" for t in self.terms)
        )

    def to_dict(self) -> dict:
        terms = []
        for t in self.terms:
            d = {
                "feature": t.feature,
                "activation": t.activation.value,
                "neurons": t.neurons,
                "weight_constraint": t.weight_constraint,
                "trainable": t.trainable,
            }
            if t.init is not None:
                d["init"] = {"w_in": list(t.init[0]), "w_out": list(t.init[1])}
            terms.append(d)
        return {
            "name": self.name,
            "seed": self.seed,
            "normalize_energy": self.normalize_energy,
            "stress_augmentation": {"kind": self.augmentation.kind, "value": self.augmentation.value},
            "terms": terms,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelDescriptor":
        try:
            terms = []
            for t in data["terms"]:
                init = t.get("init")
                if init is not None:
                    init = (tuple(init["w_in"]), tuple(init["w_out"]))
                try:
                    act = Activation(t["activation"])
                except ValueError:
                    raise SchemaMismatch(f"unknown activation {t['activation']!r}") from None
                terms.append(Term(
                    feature=t["feature"],
                    activation=act,
                    neurons=int(t.get("neurons", 1)),
                    weight_constraint=t.get("weight_constraint", "nonneg"),
                    trainable=bool(t.get("trainable", True)),
                    init=init,
                ))
            aug = data.get("stress_augmentation") or {"kind": "none"}
            return cls(
                terms=tuple(terms),
                normalize_energy=bool(data.get("normalize_energy", True)),
                augmentation=StressAugmentation(aug.get("kind", "none"), float(aug.get("value", 0.0))),
                name=str(data.get("name", "cann")),
                seed=int(data.get("seed", 0)),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise SchemaMismatch(f"malformed descriptor: {exc!r}") from exc


# Per-family uniform init ranges (inner, outer).
INIT_RANGES = {
    Activation.LINEAR: ((0.05, 0.3), (0.02, 0.15)),
    Activation.SQUARE: ((0.05, 0.3), (1e-3, 2e-2)),
    Activation.SOFTPLUS_SHIFTED: ((0.1, 0.5), (0.02, 0.15)),
    Activation.SOFTPLUS_SQ: ((0.1, 0.5), (1e-3, 2e-2)),
    Activation.EXP_M1MY: ((0.05, 0.25), (1e-4, 5e-3)),
    Activation.SOFTPLUS_RAW: ((0.1, 0.5), (0.02, 0.15)),
    Activation.SINE: ((0.05, 0.3), (0.02, 0.15)),
}


@dataclass(frozen=True)
class WeightSet:
    """Per-term inner and outer weight vectors, in descriptor term order."""

    w_in: tuple[np.ndarray, ...]
    w_out: tuple[np.ndarray, ...]

    def __post_init__(self):
        w_in = tuple(_frozen(w) for w in self.w_in)
        w_out = tuple(_frozen(w) for w in self.w_out)
        object.__setattr__(self, "w_in", w_in)
        object.__setattr__(self, "w_out", w_out)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([a, b]) for a, b in zip(self.w_in, self.w_out)])

    @classmethod
    def from_flat(cls, descriptor: ModelDescriptor, vec: np.ndarray) -> "WeightSet":
        vec = np.asarray(vec, dtype=float)
        w_in, w_out, pos = [], [], 0
        for t in descriptor.terms:
            n = t.neurons
            w_in.append(vec[pos:pos + n])
            w_out.append(vec[pos + n:pos + 2 * n])
            pos += 2 * n
        if pos != vec.size:
            raise SchemaMismatch(f"expected {pos} weights, got {vec.size}")
        return cls(tuple(w_in), tuple(w_out))

    def project(self, descriptor: ModelDescriptor) -> "WeightSet":
        """Clamp nonneg-constrained weights to >= 0."""
        w_in, w_out = [], []
        for t, a, b in zip(descriptor.terms, self.w_in, self.w_out):
            if t.weight_constraint == "nonneg":
                a, b = np.maximum(a, 0.0), np.maximum(b, 0.0)
            w_in.append(a)
            w_out.append(b)
        return WeightSet(tuple(w_in), tuple(w_out))


def _frozen(w) -> np.ndarray:
    arr = np.array(w, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


def trainable_mask(descriptor: ModelDescriptor) -> np.ndarray:
    """Boolean mask over ``WeightSet.flat()`` marking trainable entries."""
    return np.concatenate([np.full(2 * t.neurons, t.trainable) for t in descriptor.terms])


def init_weights(descriptor: ModelDescriptor, rng: np.random.Generator | None = None) -> WeightSet:
    rng = np.random.default_rng(descriptor.seed) if rng is None else rng
    w_in, w_out = [], []
    for t in descriptor.terms:
        (lo_i, hi_i), (lo_o, hi_o) = INIT_RANGES[t.activation]
        a = rng.uniform(lo_i, hi_i, t.neurons)
        b = rng.uniform(lo_o, hi_o, t.neurons)
        if t.init is not None:
            a, b = np.array(t.init[0]), np.array(t.init[1])
        w_in.append(a)
        w_out.append(b)
    return WeightSet(tuple(w_in), tuple(w_out)).project(descriptor)


def term_response(term: Term, w_in: np.ndarray, w_out: np.ndarray, x: np.ndarray):
    """Energy of one term and its first two derivatives in the feature.

    ``x`` has any shape; the returned arrays match it. Beyond the clip
    bound the activation input is frozen, so both derivatives vanish there.
    """
    y = x[..., None] * w_in
    bound = term.activation.clip
    if bound is None:
        chi = np.ones_like(y)
    else:
        chi = ((y >= 0.0) & (y < bound)).astype(float)
        y = np.clip(y, 0.0, bound)
    f, f1, f2 = activation_derivs(term.activation, y)
    e = np.sum(w_out * f, axis=-1)
    s = np.sum(w_out * w_in * f1 * chi, axis=-1)
    t = np.sum(w_out * w_in * w_in * f2 * chi, axis=-1)
    return e, s, t


def _dI1(F, C, I1):
    return 2.0 * F


def _dI2(F, C, I1):
    return 2.0 * (I1[..., None, None] * F - F @ C)


def _d2I1(F, C, I1):
    eye = np.eye(3)
    H = 2.0 * np.einsum("ik,jl->ijkl", eye, eye)
    return np.broadcast_to(H, F.shape[:-2] + (3, 3, 3, 3))


def _d2I2(F, C, I1):
    eye = np.eye(3)
    B = F @ np.swapaxes(F, -1, -2)
    return 2.0 * (
        2.0 * np.einsum("...kl,...ij->...ijkl", F, F)
        + I1[..., None, None, None, None] * np.einsum("ik,jl->ijkl", eye, eye)
        - np.einsum("ik,...lj->...ijkl", eye, C)
        - np.einsum("...il,...kj->...ijkl", F, F)
        - np.einsum("...ik,jl->...ijkl", B, eye)
    )


@dataclass(frozen=True)
class ConstitutiveModel:
    descriptor: ModelDescriptor
    weights: WeightSet

    # ---- feature plumbing -------------------------------------------------

    def _features(self, F: np.ndarray):
        """Yield (term, w_in, w_out, x, kind, index) for every term."""
        I1, I2 = invariants_array(F)
        for term, a, b in zip(self.descriptor.terms, self.weights.w_in, self.weights.w_out):
            kind, idx = parse_feature(term.feature)
            if kind == "I1":
                x = np.maximum(I1 - 3.0, 0.0)
            elif kind == "I2":
                x = np.maximum(I2 - 3.0, 0.0)
            else:
                x = F[..., idx[0], idx[1]] - (1.0 if idx[0] == idx[1] else 0.0)
            yield term, a, b, x, kind, idx

    def psi_raw(self, F) -> np.ndarray:
        F = as_tensor(F)
        total = np.zeros(F.shape[:-2])
        for term, a, b, x, _, _ in self._features(F):
            total = total + term_response(term, a, b, x)[0]
        return total

    def psi_reference(self) -> float:
        """Un-normalized energy at F = I (all features vanish there)."""
        total = 0.0
        for term, a, b in zip(self.descriptor.terms, self.weights.w_in, self.weights.w_out):
            total += float(term_response(term, a, b, np.zeros(()))[0])
        return total

    # ---- public evaluation ------------------------------------------------

    def psi_derivs(self, I1: float, I2: float):
        """Invariant-term energy and partials (psi, psi1, psi2, psi11, psi12, psi22).

        Raw-component terms are not functions of the invariants and are
        left out. The sum is not normalized.
        """
        I1 = np.asarray(I1, dtype=float)
        I2 = np.asarray(I2, dtype=float)
        out = [np.zeros(np.broadcast(I1, I2).shape) for _ in range(6)]
        for term, a, b in zip(self.descriptor.terms, self.weights.w_in, self.weights.w_out):
            kind, _ = parse_feature(term.feature)
            if kind == "F":
                continue
            x = np.maximum((I1 if kind == "I1" else I2) - 3.0, 0.0)
            e, s, t = term_response(term, a, b, x)
            out[0] = out[0] + e
            if kind == "I1":
                out[1] = out[1] + s
                out[3] = out[3] + t
            else:
                out[2] = out[2] + s
                out[5] = out[5] + t
        return tuple(float(v) if v.ndim == 0 else v for v in out)

    def psi(self, F) -> np.ndarray | float:
        F = as_tensor(F)
        val = self.psi_raw(F)
        if self.descriptor.normalize_energy:
            val = val - self.psi_reference()
        return float(val) if val.ndim == 0 else val

    def dpsi_dF(self, F) -> np.ndarray:
        """Gradient of the energy with respect to F (no pressure term)."""
        F = as_tensor(F)
        C = np.swapaxes(F, -1, -2) @ F
        I1 = np.trace(C, axis1=-2, axis2=-1)
        G = np.zeros_like(F)
        for term, a, b, x, kind, idx in self._features(F):
            s = term_response(term, a, b, x)[1]
            if kind == "I1":
                G = G + s[..., None, None] * _dI1(F, C, I1)
            elif kind == "I2":
                G = G + s[..., None, None] * _dI2(F, C, I1)
            else:
                G[..., idx[0], idx[1]] += s
        return G

    def pressure(self, F, G: np.ndarray | None = None) -> np.ndarray:
        F = as_tensor(F)
        G = self.dpsi_dF(F) if G is None else G
        FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
        den = FinvT[..., 2, 2]
        if np.any(np.abs(den) < PRESSURE_GUARD):
            raise DegeneratePressureDenominator("|(F^-T)_33| below 1e-8")
        return G[..., 2, 2] / den

    def _augment(self, F: np.ndarray, P: np.ndarray) -> np.ndarray:
        aug = self.descriptor.augmentation
        if aug.kind == "skew":
            P[..., 0, 1] += aug.value * F[..., 1, 0]
            P[..., 1, 0] -= aug.value * F[..., 0, 1]
        elif aug.kind == "offset":
            P[..., 0, 0] += aug.value
        return P

    def piola_stress(self, F) -> np.ndarray:
        """First Piola-Kirchhoff stress with the pressure fixed by P33 = 0."""
        F = as_tensor(F)
        G = self.dpsi_dF(F)
        FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
        den = FinvT[..., 2, 2]
        if np.any(np.abs(den) < PRESSURE_GUARD):
            raise DegeneratePressureDenominator("|(F^-T)_33| below 1e-8")
        p = G[..., 2, 2] / den
        return self._augment(F, G - p[..., None, None] * FinvT)

    def work_stress(self, F) -> np.ndarray:
        """Stress without the pressure reaction: dpsi/dF plus any augmentation.

        The reaction -p F^-T does no work on volume-preserving paths, so this
        is the work-conjugate stress used for path integrals.
        """
        F = as_tensor(F)
        return self._augment(F, self.dpsi_dF(F))

    def cauchy_stress(self, F) -> np.ndarray:
        """sigma = P F^T, taking J = 1."""
        F = as_tensor(F)
        return self.piola_stress(F) @ np.swapaxes(F, -1, -2)

    def elasticity_tensor(self, F) -> np.ndarray:
        """A_ijkl = d2 psi / dF_ij dF_kl, shape (..., 3, 3, 3, 3)."""
        F = as_tensor(F)
        C = np.swapaxes(F, -1, -2) @ F
        I1 = np.trace(C, axis1=-2, axis2=-1)
        A = np.zeros(F.shape[:-2] + (3, 3, 3, 3))
        for term, a, b, x, kind, idx in self._features(F):
            _, s, t = term_response(term, a, b, x)
            if kind == "F":
                A[..., idx[0], idx[1], idx[0], idx[1]] += t
                continue
            d1, d2 = (_dI1, _d2I1) if kind == "I1" else (_dI2, _d2I2)
            D = d1(F, C, I1)
            A = A + t[..., None, None, None, None] * np.einsum("...ij,...kl->...ijkl", D, D)
            A = A + s[..., None, None, None, None] * d2(F, C, I1)
        return A

    # ---- housekeeping -----------------------------------------------------

    def with_weights(self, weights: WeightSet) -> "ConstitutiveModel":
        return replace(self, weights=weights.project(self.descriptor))

    def to_document(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "descriptor": self.descriptor.to_dict(),
            "weights": {
                "w_in": [[float(v) for v in w] for w in self.weights.w_in],
                "w_out": [[float(v) for v in w] for w in self.weights.w_out],
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2, sort_keys=True)

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_document(cls, doc: dict) -> "ConstitutiveModel":
        if not isinstance(doc, dict) or doc.get("version") != MODEL_FORMAT_VERSION:
            raise SchemaMismatch(f"unsupported model format version {doc.get('version') if isinstance(doc, dict) else None!r}")
        descriptor = ModelDescriptor.from_dict(doc["descriptor"])
        try:
            w = doc["weights"]
            weights = WeightSet(tuple(w["w_in"]), tuple(w["w_out"]))
        except (KeyError, TypeError) as exc:
            raise SchemaMismatch(f"malformed weights: {exc!r}") from exc
        for t, a, b in zip(descriptor.terms, weights.w_in, weights.w_out):
            if a.size != t.neurons or b.size != t.neurons:
                raise SchemaMismatch("weight vector length does not match neuron count")
        if len(weights.w_in) != len(descriptor.terms):
            raise SchemaMismatch("weight list does not match term list")
        return cls(descriptor, weights)

    @classmethod
    def from_json(cls, text: str) -> "ConstitutiveModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"not a JSON document: {exc}") from exc
        return cls.from_document(doc)


def build_model(descriptor: ModelDescriptor, weights: WeightSet | None = None) -> ConstitutiveModel:
    weights = init_weights(descriptor) if weights is None else weights.project(descriptor)
    return ConstitutiveModel(descriptor, weights)


def save_model(model: ConstitutiveModel, path) -> Path:
    path = Path(path)
    try:
        path.write_text(model.to_json() + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write model to {path}: {exc}") from exc
    return path


def load_model(path) -> ConstitutiveModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read model from {path}: {exc}") from exc
    return ConstitutiveModel.from_json(text)


def rank_one_form(A: np.ndarray, a: Sequence[float], b: Sequence[float]) -> float:
    """(a x b) : A : (a x b) for unit vectors a and b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(np.linalg.norm(a) - 1.0) > 1e-9 or abs(np.linalg.norm(b) - 1.0) > 1e-9:
        raise ValueError("rank_one_form expects unit vectors")
    h = np.outer(a, b).reshape(9)
    return float(h @ np.asarray(A).reshape(9, 9) @ h)


# ---- analytic surrogates and violation fixtures ---------------------------

def _fixed(feature, activation, w_in, w_out, constraint="nonneg"):
    return Term(feature, Activation(activation), neurons=len(w_in), weight_constraint=constraint,
                trainable=False, init=(tuple(w_in), tuple(w_out)))


def _fixture(name, terms, **kw) -> ConstitutiveModel:
    return build_model(ModelDescriptor(terms=tuple(terms), name=name, **kw))


def neo_hookean(c1: float = 0.5) -> ConstitutiveModel:
    """psi = c1 (I1 - 3)."""
    return _fixture("neo_hookean", [_fixed("I1m3", "linear", [1.0], [c1])])


def mooney_rivlin(c1: float = 0.5, c2: float = 0.1) -> ConstitutiveModel:
    """psi = c1 (I1 - 3) + c2 (I2 - 3)."""
    return _fixture("mooney_rivlin", [_fixed("I1m3", "linear", [1.0], [c1]),
                                       _fixed("I2m3", "linear", [1.0], [c2])])


def rawf_fixture(c1: float = 0.5, weight: float = 0.5) -> ConstitutiveModel:
    """Neo-Hookean plus weight*(F33 - 1)^2: not frame-indifferent."""
    return _fixture("rawf_fixture", [_fixed("I1m3", "linear", [1.0], [c1]),
                                      _fixed("F33", "square", [1.0], [weight])])


def sine_fixture(w_in: float = 0.3, w_out: float = 1.0) -> ConstitutiveModel:
    """psi = w_out sin(w_in (I1 - 3)): non-convex, non-negative on the base set."""
    return _fixture("sine_fixture", [_fixed("I1m3", "sine", [w_in], [w_out])])


def softplus_raw_fixture(w_in: float = 1.0, w_out: float = 1.0) -> ConstitutiveModel:
    """Un-normalized softplus term; psi(I) = w_out*log 2."""
    return _fixture("softplus_raw_fixture", [_fixed("I1m3", "softplus_raw", [w_in], [w_out])],
                    normalize_energy=False)


def negative_weight_fixture(c1: float = -0.5) -> ConstitutiveModel:
    """psi = c1 (I1 - 3) with a free, negative outer weight."""
    return _fixture("negative_weight_fixture", [_fixed("I1m3", "linear", [1.0], [c1], constraint="free")])


def skew_fixture(alpha: float = 0.1, c1: float = 0.5) -> ConstitutiveModel:
    """Neo-Hookean with a non-potential skew stress added to P12 / P21."""
    return _fixture("skew_fixture", [_fixed("I1m3", "linear", [1.0], [c1])],
                    augmentation=StressAugmentation("skew", alpha))


def offset_fixture(offset: float = 0.01, c1: float = 0.5) -> ConstitutiveModel:
    """Neo-Hookean with a constant P11 offset."""
    return _fixture("offset_fixture", [_fixed("I1m3", "linear", [1.0], [c1])],
                    augmentation=StressAugmentation("offset", offset))


def canonical_descriptor(neurons: int = 2, seed: int = 0, name: str = "block_cann",
                         activations: Sequence[str] = ("linear", "softplus_shifted")) -> ModelDescriptor:
    """Block CANN: one term per (invariant, activation) pair, all nonneg."""
    terms = [Term(f, Activation(a), neurons=neurons) for f in ("I1m3", "I2m3") for a in activations]
    return ModelDescriptor(terms=tuple(terms), name=name, seed=seed)
