"""Agent backends: deterministic scripted agents and a live chat-completion client.

Every backend exposes ``complete(messages) -> str`` where ``messages`` is an
OpenAI-style list of ``{"role", "content"}`` dicts, plus a ``role``
(``"creator"`` or ``"inspector"``) and a ``kind`` (``"mock"`` or ``"live"``).
"""

from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass

import httpx

from ..model import Activation, ModelDescriptor, Term, canonical_descriptor
from ..model import ConstitutiveModel, SchemaMismatch
from ..validators import CONSTRAINTS, ConstraintId, ToleranceConfig, run_validator, validate_all
from .protocol import (
    TOOL_SENTENCE,
    AuthFailure,
    BackendUnavailable,
    fence,
    fenced_json,
    model_document_from_prompt,
    render_proposal,
    render_verdict,
)

logger = logging.getLogger(__name__)

ENV_BASE_URL = "CANNLAB_LLM_BASE_URL"
ENV_API_KEY = "CANNLAB_LLM_API_KEY"
ENV_MODEL = "CANNLAB_LLM_MODEL"
ENV_TIMEOUT = "CANNLAB_LLM_TIMEOUT"
ENV_RETRIES = "CANNLAB_LLM_RETRIES"

_ROUND_RE = re.compile(r"^Round: (\d+)$", re.MULTILINE)


class Backend:
    kind = "mock"
    role = "creator"
    name = "backend"

    def complete(self, messages: list[dict]) -> str:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind, "role": self.role, "name": self.name}


def _last_user(messages) -> str:
    for m in reversed(messages):
        if m["role"] == "user":
            return m["content"]
    return ""


def _first_user(messages) -> str:
    for m in messages:
        if m["role"] == "user":
            return m["content"]
    return ""


def _round_of(messages) -> int:
    m = _ROUND_RE.search(_first_user(messages))
    return int(m.group(1)) if m else 0


def _has_feedback(messages) -> bool:
    return sum(m["role"] == "assistant" for m in messages) > 0


# ---- creators -------------------------------------------------------------

def rawf_descriptor(name: str = "rawf_block") -> ModelDescriptor:
    """Trainable invariant term plus a frozen (F33 - 1)^2 term."""
    return ModelDescriptor(terms=(
        Term("I1m3", Activation.LINEAR, neurons=1),
        Term("F33", Activation.SQUARE, neurons=1, trainable=False, init=((1.0,), (0.5,))),
    ), name=name)


class GoodCreator(Backend):
    """Always proposes a canonical block CANN; one extra neuron per round."""

    name = "good"

    def complete(self, messages):
        k = _round_of(messages)
        desc = canonical_descriptor(neurons=1 + k, name=f"block_cann_r{k}")
        return render_proposal(desc, rationale="invariant inputs, convex normalized activations, nonneg weights")


class FlakyCreator(Backend):
    """First proposal of a run uses a raw F33 feature; any feedback fixes it."""

    name = "flaky"

    def complete(self, messages):
        k = _round_of(messages)
        if k == 0 and not _has_feedback(messages):
            return render_proposal(rawf_descriptor(), rationale="raw stretch input for extra flexibility")
        return render_proposal(canonical_descriptor(neurons=2, name=f"block_cann_r{k}"),
                               rationale="switched to invariant inputs")


class StubbornCreator(Backend):
    """Ignores all feedback and keeps proposing the raw-F design."""

    name = "stubborn"

    def complete(self, messages):
        return render_proposal(rawf_descriptor(), rationale="raw stretch input")


class ScriptedCreator(Backend):
    """Replays a fixed sequence of replies, one per call, cycling.

    Items may be descriptors (rendered as proposals), ``(descriptor, train)``
    pairs, or raw reply strings.
    """

    name = "scripted"

    def __init__(self, script):
        if not script:
            raise ValueError("script must not be empty")
        self.script = list(script)
        self.calls = 0

    def complete(self, messages):
        item = self.script[self.calls % len(self.script)]
        self.calls += 1
        if isinstance(item, str):
            return item
        if isinstance(item, tuple):
            return render_proposal(item[0], train=item[1])
        return render_proposal(item)


# ---- inspectors -----------------------------------------------------------

def _tool_results(messages) -> dict[ConstraintId, dict]:
    out = {}
    for m in messages:
        if m["role"] == "user" and m["content"].startswith("Tool result"):
            obj = fenced_json(m["content"], "passed")
            if obj is not None:
                out[ConstraintId(obj["id"])] = obj
    return out


def _tools_enabled(messages) -> bool:
    return TOOL_SENTENCE in _first_user(messages)


def _justify(result: dict) -> str:
    if result["passed"]:
        return "numerical check passed"
    return f"numerical check failed (worst {result['worst']:.6g})"


class BlindInspector(Backend):
    """Approves every model without looking at it."""

    role = "inspector"
    name = "blind"

    def complete(self, messages):
        return render_verdict({c: True for c in CONSTRAINTS}, {c: "looks fine" for c in CONSTRAINTS})


class OracleInspector(Backend):
    """Mirrors the numerical validators exactly.

    With tools enabled it requests all nine validators one by one and
    reports their outcomes; otherwise it evaluates them itself from the
    model document in the prompt.
    """

    role = "inspector"
    name = "oracle"

    def __init__(self, tol: ToleranceConfig = ToleranceConfig()):
        self.tol = tol

    def _tool_round(self, messages, wanted):
        done = _tool_results(messages)
        for cid in wanted:
            if cid not in done:
                return fence({"tool_call": cid.value}), done
        return None, done

    def complete(self, messages):
        if _tools_enabled(messages):
            request, done = self._tool_round(messages, CONSTRAINTS)
            if request is not None:
                return request
            return render_verdict({c: done[c]["passed"] for c in CONSTRAINTS},
                                  {c: _justify(done[c]) for c in CONSTRAINTS})
        doc = model_document_from_prompt(_first_user(messages))
        try:
            report = validate_all(ConstitutiveModel.from_document(doc), self.tol)
        except (SchemaMismatch, TypeError):
            return render_verdict({c: False for c in CONSTRAINTS}, {c: "unreadable model" for c in CONSTRAINTS})
        return render_verdict({c: report[c].passed for c in CONSTRAINTS},
                              {c: _justify(report[c].to_dict()) for c in CONSTRAINTS})


class ToolCallingInspector(Backend):
    """Calls the first ``n_calls`` validators, trusts them, approves the rest."""

    role = "inspector"
    name = "tool_calling"

    def __init__(self, n_calls: int = 2):
        self.n_calls = int(n_calls)

    def complete(self, messages):
        wanted = CONSTRAINTS[: self.n_calls] if _tools_enabled(messages) else ()
        done = _tool_results(messages)
        for cid in wanted:
            if cid not in done:
                return fence({"tool_call": cid.value})
        status = {c: done[c]["passed"] if c in done else True for c in CONSTRAINTS}
        return render_verdict(status, {c: _justify(done[c]) if c in done else "assumed" for c in CONSTRAINTS})


class ScriptedInspector(Backend):
    """Replays raw replies in order, cycling."""

    role = "inspector"
    name = "scripted_inspector"

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0

    def complete(self, messages):
        reply = self.replies[self.calls % len(self.replies)]
        self.calls += 1
        return reply


# ---- live chat-completion backend -----------------------------------------

@dataclass
class LiveBackend(Backend):
    """OpenAI-compatible ``/chat/completions`` client.

    ``retries`` is the total number of attempts, so a call never blocks for
    much longer than ``timeout * retries`` seconds.
    """

    role: str = "creator"
    base_url: str = ""
    model_name: str = ""
    api_key: str | None = None
    timeout: float = 60.0
    retries: int = 3
    temperature: float | None = None
    transport: httpx.BaseTransport | None = None

    kind = "live"

    @property
    def name(self) -> str:
        return self.model_name

    @classmethod
    def from_env(cls, role: str, env=None) -> "LiveBackend":
        env = os.environ if env is None else env
        return cls(
            role=role,
            base_url=env.get(ENV_BASE_URL, "https://api.openai.com/v1"),
            model_name=env.get(ENV_MODEL, ""),
            api_key=env.get(ENV_API_KEY) or None,
            timeout=float(env.get(ENV_TIMEOUT, 60.0)),
            retries=int(env.get(ENV_RETRIES, 3)),
        )

    def describe(self) -> dict:
        return {"kind": self.kind, "role": self.role, "name": self.model_name, "base_url": self.base_url}

    def complete(self, messages):
        if not self.api_key:
            raise AuthFailure(f"no credential: set {ENV_API_KEY}")
        url = self.base_url.rstrip("/") + "/chat/completions"
        body = {"model": self.model_name, "messages": messages}
        if self.temperature is not None:
            body["temperature"] = self.temperature
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last = None
        with httpx.Client(timeout=self.timeout, transport=self.transport) as client:
            for attempt in range(max(1, self.retries)):
                try:
                    resp = client.post(url, json=body, headers=headers)
                except httpx.TransportError as exc:
                    last = exc
                    logger.warning("attempt %d to %s failed: %s", attempt + 1, url, exc)
                    continue
                if resp.status_code in (401, 403):
                    raise AuthFailure(f"credential rejected ({resp.status_code})")
                if resp.status_code >= 500 or resp.status_code == 429:
                    last = RuntimeError(f"HTTP {resp.status_code}")
                    continue
                if resp.status_code >= 400:
                    raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    return resp.json()["choices"][0]["message"]["content"] or ""
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise BackendUnavailable(f"unexpected response body: {exc!r}") from exc
        raise BackendUnavailable(f"{url} unreachable after {max(1, self.retries)} attempts: {last}")


MOCK_CREATORS = {"good": GoodCreator, "flaky": FlakyCreator, "stubborn": StubbornCreator}
MOCK_INSPECTORS = {"oracle": OracleInspector, "blind": BlindInspector}


def make_backend(spec: str, role: str) -> Backend:
    """Backend from a short id: ``good``, ``flaky``, ``stubborn``, ``oracle``,
    ``blind``, ``tools:<n>`` or ``live``."""
    if spec == "live":
        return LiveBackend.from_env(role)
    if role == "creator" and spec in MOCK_CREATORS:
        return MOCK_CREATORS[spec]()
    if role == "inspector":
        if spec in MOCK_INSPECTORS:
            return MOCK_INSPECTORS[spec]()
        if spec.startswith("tools:"):
            return ToolCallingInspector(int(spec.split(":", 1)[1]))
    raise ValueError(f"unknown {role} backend {spec!r}")


def wall_clock() -> float:
    return time.time()
