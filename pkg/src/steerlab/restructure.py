"""Instruction-driven structure generation through a text completion backend.

The flow is a single deterministic pipeline: user instructions become a
four-message prompt bundle, the backend returns a chain-of-thought response,
the four bracketed sections are parsed out, and the code section is compiled
into a policy.  Parse or compile failures feed the diagnostics back to the
backend as an extra user message, at most twice, so one malformed reply does
not sink the whole request.

Two backends share one text-in/text-out interface.  The HTTP backend talks
to a chat-completions endpoint configured through environment variables.
The replay backend answers purely from recorded fixtures keyed by a hash of
the exact outgoing messages; a miss is a hard error, so tests can never
silently fall through to a live service.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from .observation import ACTION_NAMES, FEATURE_SIZES
from .pgdl import CompiledPolicy, ObsDecl, PgdlError, compile_source
from .prompts import (
    LANDER_ANSWER,
    LANDER_INSTRUCTIONS,
    RETRY_TEMPLATE,
    SYSTEM_PROMPT,
    render_task,
)

# Extra attempts after the first response fails to parse or compile.
MAX_RETRIES = 2

# Environment variables read by HttpBackend.from_env.
ENV_URL = "STEERLAB_LLM_URL"
ENV_API_KEY = "STEERLAB_LLM_API_KEY"
ENV_MODEL = "STEERLAB_LLM_MODEL"

SECTION_NAMES = ("Variables", "Structure Description", "Connections", "Code")

Message = dict[str, str]


class RestructureError(Exception):
    """Generation failed or was misconfigured; carries every transcript."""

    def __init__(self, message: str, transcripts: Sequence["LlmTranscript"] = (),
                 problems: Sequence[str] = ()):
        super().__init__(message)
        self.transcripts = list(transcripts)
        self.problems = list(problems)


class ResponseFormatError(Exception):
    """The response text does not follow the four-section format."""


# ---------------------------------------------------------------------------
# Instructions

@dataclass(frozen=True)
class Instruction:
    id: str
    text: str
    used: bool = True
    created_at: str = ""

    def to_json(self) -> dict:
        return {"id": self.id, "text": self.text, "used": self.used,
                "created_at": self.created_at}

    @staticmethod
    def from_json(data: Mapping) -> "Instruction":
        return Instruction(str(data["id"]), str(data["text"]),
                           bool(data.get("used", True)),
                           str(data.get("created_at", "")))


@dataclass(frozen=True)
class InstructionSet:
    """Ordered instruction list; only used-flagged entries enter prompts."""

    instructions: tuple[Instruction, ...] = ()

    def __post_init__(self):
        ids = [i.id for i in self.instructions]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate instruction id")

    def __iter__(self):
        return iter(self.instructions)

    def __len__(self) -> int:
        return len(self.instructions)

    def get(self, instruction_id: str) -> Instruction:
        for ins in self.instructions:
            if ins.id == instruction_id:
                return ins
        raise KeyError(instruction_id)

    def add(self, instruction: Instruction) -> "InstructionSet":
        return InstructionSet(self.instructions + (instruction,))

    def remove(self, instruction_id: str) -> "InstructionSet":
        kept = tuple(i for i in self.instructions if i.id != instruction_id)
        if len(kept) == len(self.instructions):
            raise KeyError(instruction_id)
        return InstructionSet(kept)

    def set_used(self, instruction_id: str, used: bool) -> "InstructionSet":
        self.get(instruction_id)
        return InstructionSet(tuple(
            Instruction(i.id, i.text, used, i.created_at) if i.id == instruction_id else i
            for i in self.instructions))

    def used_texts(self) -> list[str]:
        return [i.text for i in self.instructions if i.used]


# ---------------------------------------------------------------------------
# Prompt assembly

@dataclass(frozen=True)
class PromptBundle:
    """The four-message conversation; order is fixed and load-bearing."""

    system: str
    exemplar_task: str
    exemplar_answer: str
    task: str

    @property
    def messages(self) -> list[Message]:
        return [
            {"role": "system", "content": self.system},
            {"role": "user", "content": self.exemplar_task},
            {"role": "assistant", "content": self.exemplar_answer},
            {"role": "user", "content": self.task},
        ]

    @property
    def digest(self) -> str:
        return message_digest(self.messages)


def message_digest(messages: Sequence[Message]) -> str:
    """Stable key for an outgoing message list; replay fixtures index on it."""
    canon = json.dumps(list(messages), sort_keys=True, ensure_ascii=False,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def build_prompt(instructions: "InstructionSet | Sequence[str]") -> PromptBundle:
    """Deterministic text assembly; same texts in the same order, same bytes."""
    if isinstance(instructions, InstructionSet):
        texts = instructions.used_texts()
    else:
        texts = [str(t) for t in instructions]
    return PromptBundle(SYSTEM_PROMPT, LANDER_INSTRUCTIONS, LANDER_ANSWER,
                        render_task(texts))


# ---------------------------------------------------------------------------
# Response parsing

@dataclass(frozen=True)
class ParsedResponse:
    variables: str
    description: str  # shown verbatim to the user as the strategy summary
    connections: str
    pgdl: str


_HEADER_RE = re.compile(
    r"^[ \t]*\[(Variables|Structure Description|Connections|Code)\][ \t]*$",
    re.MULTILINE)
_FENCE_RE = re.compile(r"```[A-Za-z]*[ \t]*\n(.*?)```", re.DOTALL)


def parse_response(text: str) -> ParsedResponse:
    """Extract the four bracketed sections; prose outside them is ignored.

    Raises ResponseFormatError naming the first missing section, or an
    ambiguity error when more than one fenced code block is present.
    """
    matches = list(_HEADER_RE.finditer(text))
    first_at = {}
    for m in matches:
        first_at.setdefault(m.group(1), m)
    for name in SECTION_NAMES:
        if name not in first_at:
            raise ResponseFormatError(f"missing section [{name}]")

    ordered = sorted(first_at.values(), key=lambda m: m.start())
    sections = {}
    for here, after in zip(ordered, ordered[1:] + [None]):
        end = after.start() if after is not None else len(text)
        sections[here.group(1)] = text[here.end():end].strip()

    fences = _FENCE_RE.findall(text)
    if not fences:
        raise ResponseFormatError("missing fenced code block in section [Code]")
    if len(fences) > 1:
        raise ResponseFormatError(
            f"ambiguous response: found {len(fences)} fenced code blocks, expected exactly 1")

    return ParsedResponse(sections["Variables"], sections["Structure Description"],
                          sections["Connections"], fences[0])


# ---------------------------------------------------------------------------
# Backends

@dataclass(frozen=True)
class LlmTranscript:
    """One request/response exchange, stored verbatim for replay and audit."""

    model: str
    bundle_digest: str
    settings: Mapping[str, object]
    response: str
    latency_s: float
    timestamp: str
    cost_estimate: float | None = None

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "bundle_digest": self.bundle_digest,
            "settings": dict(self.settings),
            "response": self.response,
            "latency_s": self.latency_s,
            "timestamp": self.timestamp,
            "cost_estimate": self.cost_estimate,
        }

    @staticmethod
    def from_json(data: Mapping) -> "LlmTranscript":
        return LlmTranscript(
            model=str(data["model"]),
            bundle_digest=str(data["bundle_digest"]),
            settings=dict(data.get("settings", {})),
            response=str(data["response"]),
            latency_s=float(data["latency_s"]),
            timestamp=str(data["timestamp"]),
            cost_estimate=data.get("cost_estimate"),
        )


class ReplayBackend:
    """Answers from recorded fixtures only; a digest miss never goes live."""

    model = "replay"
    settings: Mapping[str, object] = {"replay": True}

    def __init__(self, responses: Mapping[str, str]):
        self.responses = dict(responses)

    @classmethod
    def load(cls, path: "str | Path") -> "ReplayBackend":
        """Load a directory of recording files.

        Each *.json file holds {"messages": [...], "response": "..."}; the
        key is recomputed from the stored messages so a stale hash in a
        hand-edited fixture cannot mask a prompt change.
        """
        root = Path(path)
        if not root.is_dir():
            raise RestructureError(f"replay fixture directory not found: {root}")
        responses = {}
        for file in sorted(root.glob("*.json")):
            data = json.loads(file.read_text(encoding="utf-8"))
            responses[message_digest(data["messages"])] = str(data["response"])
        if not responses:
            raise RestructureError(f"no replay recordings under {root}")
        return cls(responses)

    def complete(self, messages: Sequence[Message]) -> str:
        key = message_digest(messages)
        if key not in self.responses:
            raise RestructureError(
                f"no recorded response for prompt digest {key[:16]}; "
                "replay backends never fall back to a live call")
        return self.responses[key]


class HttpBackend:
    """Chat-completions client over plain HTTP.

    Generation latency runs into minutes, hence the long default timeout.
    """

    def __init__(self, url: str, model: str, api_key: "str | None" = None,
                 timeout_s: float = 600.0, temperature: float = 0.0):
        self.url = url
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.temperature = temperature

    @property
    def settings(self) -> Mapping[str, object]:
        return {"temperature": self.temperature, "timeout_s": self.timeout_s}

    @classmethod
    def from_env(cls, environ: "Mapping[str, str] | None" = None, **kwargs) -> "HttpBackend":
        env = os.environ if environ is None else environ
        url = env.get(ENV_URL)
        model = env.get(ENV_MODEL)
        if not url or not model:
            raise RestructureError(
                f"live backend needs {ENV_URL} and {ENV_MODEL} set "
                f"(and usually {ENV_API_KEY})")
        return cls(url=url, model=model, api_key=env.get(ENV_API_KEY), **kwargs)

    def complete(self, messages: Sequence[Message]) -> str:
        payload = {
            "model": self.model,
            "messages": list(messages),
            "temperature": self.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        request = urllib.request.Request(
            self.url, data=json.dumps(payload).encode("utf-8"), headers=headers)
        with urllib.request.urlopen(request, timeout=self.timeout_s) as reply:
            body = json.loads(reply.read().decode("utf-8"))
        try:
            return str(body["choices"][0]["message"]["content"])
        except (KeyError, IndexError, TypeError) as err:
            raise RestructureError(f"malformed completion payload: {err!r}")


# ---------------------------------------------------------------------------
# The generation loop

@dataclass(frozen=True)
class RestructureResult:
    policy: CompiledPolicy
    summary: str
    transcripts: tuple[LlmTranscript, ...]
    parsed: ParsedResponse


def _schema_problems(policy: CompiledPolicy) -> list[str]:
    """Driving-task gate: right action triple, known observation names."""
    problems = []
    declared = list(policy.structure.action_names)
    if sorted(declared) != sorted(ACTION_NAMES):
        problems.append(
            "the program must declare exactly the actions "
            f"{', '.join(ACTION_NAMES)} (found: {', '.join(declared) or 'none'})")
    unknown = [d.name for d in policy.program.decls
               if isinstance(d, ObsDecl) and d.name not in FEATURE_SIZES]
    if unknown:
        problems.append(
            f"unknown observation names: {', '.join(unknown)} "
            f"(available: {', '.join(FEATURE_SIZES)})")
    return problems


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def restructure(instructions: "InstructionSet | Sequence[str]", backend,
                max_retries: int = MAX_RETRIES,
                require_driving_schema: bool = True) -> RestructureResult:
    """Generate, parse, and compile a policy; retry with diagnostics on failure.

    Every compiled policy that comes back has passed the full program checks,
    so it always satisfies the structural validator.  On exhaustion the error
    carries one transcript and one problem report per attempt.
    """
    bundle = build_prompt(instructions)
    messages = bundle.messages
    transcripts: list[LlmTranscript] = []
    problems: list[str] = []

    for _attempt in range(1 + max_retries):
        started = time.perf_counter()
        response = backend.complete(messages)
        transcripts.append(LlmTranscript(
            model=getattr(backend, "model", "unknown"),
            bundle_digest=message_digest(messages),
            settings=dict(getattr(backend, "settings", {})),
            response=response,
            latency_s=time.perf_counter() - started,
            timestamp=_utc_now(),
        ))

        problem = None
        parsed = None
        policy = None
        try:
            parsed = parse_response(response)
        except ResponseFormatError as err:
            problem = str(err)
        if parsed is not None:
            try:
                policy = compile_source(parsed.pgdl)
            except PgdlError as err:
                problem = str(err)
        if policy is not None and require_driving_schema:
            gate = _schema_problems(policy)
            if gate:
                problem = "\n".join(gate)
                policy = None

        if policy is None:
            problems.append(problem or "empty problem report")
            # The failed reply joins the conversation so the next attempt
            # can repair it instead of starting over.
            messages = messages + [
                {"role": "assistant", "content": response},
                {"role": "user", "content": RETRY_TEMPLATE.format(diagnostics=problem)},
            ]
            continue

        return RestructureResult(policy, parsed.description, tuple(transcripts), parsed)

    raise RestructureError(
        f"no usable policy after {len(transcripts)} attempts", transcripts, problems)
