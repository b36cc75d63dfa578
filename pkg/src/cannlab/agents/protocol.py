"""Message formats shared by the Creator and Inspector roles.

Agents exchange declarative model descriptors and per-constraint verdicts.
Both travel as a single fenced block holding a JSON object; everything
outside the block is free text and is ignored.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field

import numpy as np

from ..model import ModelDescriptor
from ..validators import CONSTRAINTS, ConstraintId


class MalformedProposal(ValueError):
    """A Creator reply did not contain a usable proposal block."""


class MalformedVerdict(ValueError):
    """An Inspector reply did not cover all nine constraints."""


class BackendUnavailable(RuntimeError):
    """The agent backend could not be reached within the retry budget."""


class AuthFailure(PermissionError):
    """Credentials for a live backend are missing or were rejected."""


class RoundAborted(RuntimeError):
    """The Creator exhausted the correction budget of one round."""


class RunAborted(RuntimeError):
    """A pipeline run finished without exporting any approved model.

    The partial run is available as ``run`` for inspection.
    """

    def __init__(self, message: str, run=None):
        super().__init__(message)
        self.run = run


class PipelineState(str, enum.Enum):
    START = "Start"
    NEW_VIOLATION = "NewViolation"
    REPEATED_VIOLATION = "RepeatedViolation"
    ADHERENCE = "Adherence"


CONSTRAINT_TEXT = {
    ConstraintId.THERMODYNAMIC_CONSISTENCY: "stress derives from a strain-energy potential (path-independent work)",
    ConstraintId.STRESS_SYMMETRY: "the Cauchy stress P F^T is symmetric",
    ConstraintId.OBJECTIVITY: "energy is invariant under rigid rotations of the deformed configuration",
    ConstraintId.MATERIAL_SYMMETRY: "energy is isotropic: invariant under rotations and reflections of the reference",
    ConstraintId.ELLIPTICITY: "the acoustic tensor is positive (rank-one convexity) on all sampled states",
    ConstraintId.GROWTH: "energy grows without bound under extreme compression or extension",
    ConstraintId.ENERGY_NORMALIZATION: "energy vanishes in the undeformed state",
    ConstraintId.STRESS_NORMALIZATION: "stress vanishes in the undeformed state",
    ConstraintId.NON_NEGATIVITY: "energy is non-negative for every admissible deformation",
}

INSPECTOR_HINTS = (
    "Raw deformation-gradient components as inputs usually break objectivity and isotropy.",
    "Oscillating activations such as sine are not convex and tend to break ellipticity.",
    "Activations with f(0) != 0 leave a residual energy at the identity unless it is subtracted.",
    "Free-sign outer weights can make the energy negative and lose convexity.",
    "Any stress term added outside the energy derivative is not a potential response.",
)

TOOL_SENTENCE = ("You may request a numerical validator by replying with a fenced JSON block "
                 '{"tool_call": "<constraint id>"}; call one only when you are genuinely uncertain.')

_FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_-]*)[ \t]*\n(.*?)```", re.DOTALL)


def fenced_blocks(text: str) -> list[tuple[str, str]]:
    """All fenced blocks as (info string, body) pairs."""
    return [(m.group(1), m.group(2)) for m in _FENCE.finditer(text or "")]


def fenced_json(text: str, key: str | None = None) -> dict | None:
    """Last fenced block that parses as a JSON object (containing ``key``)."""
    found = None
    for _, body in fenced_blocks(text):
        try:
            obj = json.loads(body)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and (key is None or key in obj):
            found = obj
    return found


def jsonable(obj):
    """``json.dumps`` fallback for numpy scalars and arrays."""
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def fence(obj, info: str = "json") -> str:
    return f"```{info}\n{json.dumps(obj, indent=2, sort_keys=True, default=jsonable)}\n```"


@dataclass(frozen=True)
class ModelProposal:
    """A Creator proposal. ``descriptor`` stays a raw mapping until the
    instantiation check turns it into a :class:`ModelDescriptor`."""

    descriptor: dict
    train: dict = field(default_factory=dict)
    rationale: str = ""

    def build_descriptor(self) -> ModelDescriptor:
        return ModelDescriptor.from_dict(self.descriptor)

    def to_dict(self) -> dict:
        return {"descriptor": self.descriptor, "train": dict(self.train), "rationale": self.rationale}


TRAIN_KEYS = ("epochs", "learning_rate", "optimizer", "seed")


def parse_proposal(text: str) -> ModelProposal:
    obj = fenced_json(text, "descriptor")
    if obj is None:
        raise MalformedProposal("reply contains no fenced JSON block with a 'descriptor' entry")
    if not isinstance(obj["descriptor"], dict):
        raise MalformedProposal("'descriptor' must be a JSON object")
    train = obj.get("train") or {}
    if not isinstance(train, dict):
        raise MalformedProposal("'train' must be a JSON object")
    unknown = sorted(set(train) - set(TRAIN_KEYS))
    if unknown:
        raise MalformedProposal(f"unknown training options {unknown}")
    return ModelProposal(obj["descriptor"], dict(train), str(obj.get("rationale", "")))


def render_proposal(descriptor: ModelDescriptor | dict, train: dict | None = None, rationale: str = "") -> str:
    d = descriptor.to_dict() if isinstance(descriptor, ModelDescriptor) else descriptor
    return "Proposed model:\n" + fence({"descriptor": d, "train": train or {}, "rationale": rationale})


@dataclass
class InspectorVerdict:
    """Per-constraint flag with justification, plus any validator calls made."""

    status: dict[ConstraintId, bool]           # True = fulfilled
    justification: dict[ConstraintId, str]
    tool_calls: list[tuple[ConstraintId, dict]] = field(default_factory=list)

    def __post_init__(self):
        if set(self.status) != set(CONSTRAINTS):
            raise MalformedVerdict("a verdict covers exactly the nine constraints")

    @property
    def adherent(self) -> bool:
        return all(self.status.values())

    @property
    def violated(self) -> list[ConstraintId]:
        return [c for c in CONSTRAINTS if not self.status[c]]

    def to_dict(self) -> dict:
        return {
            "verdicts": {c.value: {"status": "fulfilled" if self.status[c] else "violated",
                                   "justification": self.justification[c]} for c in CONSTRAINTS},
            "tool_calls": [{"constraint": c.value, "result": r} for c, r in self.tool_calls],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InspectorVerdict":
        v = parse_verdict_object(d)
        v.tool_calls = [(ConstraintId(t["constraint"]), t["result"]) for t in d.get("tool_calls", [])]
        return v


def parse_verdict_object(obj: dict) -> InspectorVerdict:
    table = obj.get("verdicts") if isinstance(obj, dict) else None
    if not isinstance(table, dict):
        raise MalformedVerdict("no 'verdicts' object")
    status, why = {}, {}
    for cid in CONSTRAINTS:
        entry = table.get(cid.value)
        if not isinstance(entry, dict) or entry.get("status") not in ("fulfilled", "violated"):
            raise MalformedVerdict(f"missing or invalid verdict for {cid.value}")
        status[cid] = entry["status"] == "fulfilled"
        why[cid] = str(entry.get("justification", ""))
    return InspectorVerdict(status, why)


def parse_verdict(text: str) -> InspectorVerdict:
    obj = fenced_json(text, "verdicts")
    if obj is None:
        raise MalformedVerdict("reply contains no fenced JSON block with a 'verdicts' entry")
    return parse_verdict_object(obj)


def parse_tool_call(text: str) -> ConstraintId | None:
    obj = fenced_json(text, "tool_call")
    if obj is None:
        return None
    try:
        return ConstraintId(obj["tool_call"])
    except ValueError:
        raise MalformedVerdict(f"unknown tool {obj['tool_call']!r}") from None


def render_verdict(status: dict, justification: dict | None = None) -> str:
    justification = justification or {}
    body = {"verdicts": {ConstraintId(c).value: {"status": "fulfilled" if ok else "violated",
                                                 "justification": justification.get(c, "")}
                         for c, ok in status.items()}}
    return "Verdict:\n" + fence(body)


# ---- prompt templates ------------------------------------------------------

def _constraint_list() -> str:
    return "\n".join(f"- {c.value}: {CONSTRAINT_TEXT[c]}" for c in CONSTRAINTS)


def creator_prompt(dataset_summary: str, round_index: int, feedback: str | None = None) -> str:
    parts = [
        "You design hyperelastic strain-energy models for an incompressible material.",
        f"Round: {round_index}",
        "Data:",
        dataset_summary,
        "The model must satisfy these constraints:",
        _constraint_list(),
        ("Reply with one fenced JSON block {\"descriptor\": {...}, \"train\": {...}, \"rationale\": \"...\"}. "
         "A descriptor lists terms {feature, activation, neurons, weight_constraint}; features are "
         "I1m3, I2m3 or Fij; activations are " + ", ".join(a.value for a in _activations()) + "."),
    ]
    if feedback:
        parts += ["Feedback on your previous proposal:", feedback]
    return "\n".join(parts)


def _activations():
    from ..model import Activation
    return list(Activation)


def inspector_prompt(model_document: dict, tools: bool) -> str:
    parts = [
        "Audit the following constitutive model for physical admissibility.",
        "Model document:",
        fence(model_document),
        "Constraints:",
        _constraint_list(),
        "Hints:",
        "\n".join(f"- {h}" for h in INSPECTOR_HINTS),
        ("For every constraint state whether it is fulfilled or violated with a short justification, as one "
         'fenced JSON block {"verdicts": {"<id>": {"status": "fulfilled|violated", "justification": "..."}}}.'),
    ]
    if tools:
        parts.append(TOOL_SENTENCE)
    return "\n".join(parts)


def model_document_from_prompt(text: str) -> dict | None:
    return fenced_json(text, "weights")


def violation_feedback(verdict: InspectorVerdict) -> str:
    lines = ["Flagged violations:"]
    for c in verdict.violated:
        lines.append(f"- {c.value}: {verdict.justification[c]}")
    return "\n".join(lines)


def check_feedback(stage: str, reason: str) -> str:
    return f"Syntactic check failed at stage '{stage}': {reason}"
