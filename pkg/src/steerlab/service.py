"""Network front door for teaching sessions.

The HTTP side is a plain request/response API under ``/api/v1``: create
or load a session, list and edit instructions and demonstrations, start
training, fetch the strategy summary, run test drives and the
robustness battery, and submit the final policy.  Every mutation goes
through the session module's snapshot operations, so a failed request
can never leave a half-applied session behind, and every successful
mutation is persisted to the session directory before the call reports
success.

Mutations that train run as jobs on a per-session single-writer queue;
the request returns a job id immediately (or, with ``?wait=1``, blocks
until the job settles) and progress is polled from the job endpoint.
Failures come back as a structured envelope ``{"error": {"rule": ...,
"detail": ...}}`` so clients can branch on the rule instead of parsing
prose.

The real-time channel is one WebSocket per session carrying
length-prefixed JSON messages both ways: the server streams one frame
packet per simulation step while an episode runs, and the client sends
control samples while recording a demonstration.  The simulation loop
is the source of truth: the recorded demonstration has exactly one row
per step, holding the last control values heard when a step's sample is
late or missing, so wire drops degrade only the display, never the
data.  A stop flag ends the episode (saving the demo), a reset flag
restarts it at the same start configuration and discards the partial
recording, and a disconnect mid-demo aborts without saving.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import re
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from fastapi import FastAPI, Request, WebSocket
from fastapi.responses import JSONResponse
from starlette.websockets import WebSocketDisconnect

from . import __version__
from . import session as sessions
from .demos import DemoSet
from .observation import ACTION_NAMES, TILE_COUNT
from .pgdl import render_summary
from .restructure import HttpBackend, ReplayBackend, RestructureError
from .sim import (
    DT,
    MAX_STEPS,
    NOMINAL_START,
    NoiseSpec,
    StartConfig,
    RolloutRecord,
    eas,
    flatten,
    observe,
    start_state,
    step,
)
from .track import Track, generate_track, wrap_angle
from .training import TrainConfig

API = "/api/v1"

# The teaching UI must test-drive the policy this many times before the
# submit endpoint unlocks.
SUBMIT_TEST_MINIMUM = 4

_SESSION_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_-]{0,63}$")

_TRAIN_FIELDS = ("seed", "learning_rate", "beta1", "beta2", "epsilon",
                 "batch_size", "batches")

_FRESH_IDS = itertools.count(1)


class ApiError(Exception):
    """Carries the error envelope: an HTTP status, a rule id, and detail."""

    def __init__(self, status: int, rule: str, detail: str, **extra):
        super().__init__(detail)
        self.status = status
        self.rule = rule
        self.detail = detail
        self.extra = dict(extra)

    def envelope(self) -> dict:
        return {"error": {"rule": self.rule, "detail": self.detail, **self.extra}}


def error_from_exception(exc: Exception) -> ApiError:
    """Fold package exceptions into envelopes the client can branch on."""
    if isinstance(exc, ApiError):
        return exc
    if isinstance(exc, RestructureError):
        return ApiError(409, "restructure-failed", str(exc),
                        transcripts=[t.to_json() for t in exc.transcripts],
                        problems=list(exc.problems))
    if isinstance(exc, sessions.SessionError):
        text = str(exc)
        if "locked" in text:
            return ApiError(409, "session-locked", text)
        if "unknown" in text:
            return ApiError(404, "unknown-item", text)
        if "already exists" in text:
            return ApiError(409, "duplicate-demo", text)
        if "at least one demonstration" in text or "teach something" in text:
            return ApiError(409, "empty-dataset", text)
        if "structured agent" in text or "generation backend" in text:
            return ApiError(409, "dense-no-instructions", text)
        return ApiError(400, "bad-request", text)
    return ApiError(500, "internal", f"{type(exc).__name__}: {exc}")


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ServiceConfig:
    """Runtime settings; ``load_config`` fills one from a JSON file."""

    port: int = 8712
    session_root: str = "sessions"
    backend: str = "replay"  # replay | http
    replay_dir: str | None = None
    llm_url: str | None = None
    llm_model: str | None = None
    # Frame pacing for the real-time channel.  The default emits one
    # packet per simulation step in real time; tests set 0 to run flat out.
    pace_s: float = DT
    # How long demo recording waits for the current step's control sample
    # before holding the last value.  0 keeps the hard real-time cadence.
    sample_timeout_s: float = 0.0


def load_config(path) -> ServiceConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: the config must be a JSON object")
    known = {"port", "session_root", "llm", "realtime"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"{path}: unknown config keys {unknown}")
    llm = data.get("llm", {})
    realtime = data.get("realtime", {})
    return ServiceConfig(
        port=int(data.get("port", ServiceConfig.port)),
        session_root=str(data.get("session_root", ServiceConfig.session_root)),
        backend=str(llm.get("backend", ServiceConfig.backend)),
        replay_dir=llm.get("replay_dir"),
        llm_url=llm.get("url"),
        llm_model=llm.get("model"),
        pace_s=float(realtime.get("pace_s", ServiceConfig.pace_s)),
        sample_timeout_s=float(realtime.get("sample_timeout_s",
                                            ServiceConfig.sample_timeout_s)),
    )


def build_backend(config: ServiceConfig):
    if config.backend == "replay":
        if not config.replay_dir:
            raise ValueError("replay backend needs llm.replay_dir in the config")
        return ReplayBackend.load(config.replay_dir)
    if config.backend == "http":
        if config.llm_url and config.llm_model:
            return HttpBackend(url=config.llm_url, model=config.llm_model)
        return HttpBackend.from_env()
    raise ValueError(f"unknown llm backend {config.backend!r}; use replay or http")


# ---------------------------------------------------------------------------
# Wire format of the real-time channel
#
# Each WebSocket binary frame holds one or more messages, each encoded as
# a big-endian u32 byte length followed by that many bytes of UTF-8 JSON.


def pack_message(payload: Mapping) -> bytes:
    body = json.dumps(payload, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def unpack_messages(data: bytes) -> list[dict]:
    out: list[dict] = []
    offset = 0
    while offset < len(data):
        if len(data) - offset < 4:
            raise ApiError(400, "bad-message", "truncated length prefix")
        (length,) = struct.unpack_from(">I", data, offset)
        offset += 4
        if len(data) - offset < length:
            raise ApiError(400, "bad-message", "message body shorter than its prefix")
        out.append(json.loads(data[offset:offset + length].decode("utf-8")))
        offset += length
    return out


@dataclass(frozen=True)
class FramePacket:
    """One simulation step as shown to the client."""

    version: int
    mode: str  # demo | rollout
    episode: int
    step: int
    x: float
    y: float
    heading: float
    speed: float
    distance_to_center: float
    angle_to_track: float
    tiles: tuple[dict, ...]  # lookahead window, world coordinates
    covered: int
    eas: float

    def to_json(self) -> dict:
        return {
            "type": "frame", "version": self.version, "mode": self.mode,
            "episode": self.episode, "step": self.step,
            "car": {
                "x": self.x, "y": self.y, "heading": self.heading,
                "speed": self.speed,
                "distance_to_center": self.distance_to_center,
                "angle_to_track": self.angle_to_track,
            },
            "tiles": list(self.tiles),
            "covered": self.covered, "eas": self.eas,
        }


@dataclass(frozen=True)
class ControlSample:
    """One pre-clip controller reading, tagged with the step it answers."""

    step: int
    steer: float = 0.0
    accelerate: float = 0.0
    brake: float = 0.0
    reset: bool = False
    stop: bool = False

    @staticmethod
    def from_json(data: Mapping) -> "ControlSample":
        try:
            sample = ControlSample(
                step=int(data.get("step", -1)),
                steer=float(data.get("steer", 0.0)),
                accelerate=float(data.get("accelerate", 0.0)),
                brake=float(data.get("brake", 0.0)),
                reset=bool(data.get("reset", False)),
                stop=bool(data.get("stop", False)),
            )
        except (TypeError, ValueError) as err:
            raise ApiError(400, "bad-message", f"malformed control sample: {err}")
        values = (sample.steer, sample.accelerate, sample.brake)
        if not all(np.isfinite(values)):
            raise ApiError(400, "bad-message", "control values must be finite")
        return sample

    @property
    def values(self) -> np.ndarray:
        return np.array([self.steer, self.accelerate, self.brake])


# ---------------------------------------------------------------------------
# Jobs and session handles


@dataclass
class Job:
    id: str
    session: str
    kind: str
    status: str = "queued"  # queued | running | done | failed
    progress: dict = field(default_factory=dict)
    version: int | None = None
    error: dict | None = None
    error_status: int = 500

    def report(self) -> dict:
        out = {"job": self.id, "session": self.session, "kind": self.kind,
               "status": self.status, "progress": dict(self.progress)}
        if self.version is not None:
            out["version"] = self.version
        if self.error is not None:
            out["error"] = self.error["error"]
        return out


@dataclass
class _Handle:
    agent: sessions.AgentInstance
    lock: threading.RLock = field(default_factory=threading.RLock)
    executor: ThreadPoolExecutor = field(
        default_factory=lambda: ThreadPoolExecutor(max_workers=1))
    streaming: bool = False


class Service:
    """Session registry plus the job machinery behind the routes."""

    def __init__(self, config: ServiceConfig, backend=None):
        self.config = config
        self.backend = backend if backend is not None else build_backend(config)
        self.root = Path(config.session_root)
        self.handles: dict[str, _Handle] = {}
        self.jobs: dict[str, Job] = {}
        self._tracks: dict[int, Track] = {}
        self._registry_lock = threading.Lock()
        self._job_ids = itertools.count(1)

    # -- sessions -------------------------------------------------------

    def session_dir(self, session_id: str) -> Path:
        return self.root / session_id

    def handle(self, session_id: str) -> _Handle:
        """Registry lookup, falling back to the on-disk session root."""
        with self._registry_lock:
            found = self.handles.get(session_id)
        if found is not None:
            return found
        directory = self.session_dir(session_id)
        if not (directory / "log.jsonl").exists():
            raise ApiError(404, "unknown-session", f"no session {session_id!r}")
        try:
            agent = sessions.load(directory)
        except Exception as err:  # any unreadable log is a corrupt session
            raise ApiError(409, "corrupt-session",
                           f"{session_id}: {type(err).__name__}: {err}")
        with self._registry_lock:
            return self.handles.setdefault(session_id, _Handle(agent))

    def claim_stream(self, handle: _Handle) -> bool:
        with self._registry_lock:
            if handle.streaming:
                return False
            handle.streaming = True
            return True

    def release_stream(self, handle: _Handle) -> None:
        with self._registry_lock:
            handle.streaming = False

    def register(self, agent: sessions.AgentInstance) -> _Handle:
        with self._registry_lock:
            if agent.session_id in self.handles:
                raise ApiError(409, "duplicate-session",
                               f"session {agent.session_id!r} already exists")
            handle = _Handle(agent)
            self.handles[agent.session_id] = handle
            return handle

    def known_sessions(self) -> list[dict]:
        with self._registry_lock:
            loaded = dict(self.handles)
        rows = {sid: {"session": sid, "loaded": True,
                      "version": handle.agent.version,
                      "kind": handle.agent.kind}
                for sid, handle in loaded.items()}
        if self.root.is_dir():
            for log in sorted(self.root.glob("*/log.jsonl")):
                sid = log.parent.name
                rows.setdefault(sid, {"session": sid, "loaded": False})
        return [rows[sid] for sid in sorted(rows)]

    def track(self, seed: int) -> Track:
        if seed not in self._tracks:
            self._tracks[seed] = generate_track(seed)
        return self._tracks[seed]

    def persist(self, agent: sessions.AgentInstance) -> None:
        sessions.persist(agent, self.session_dir(agent.session_id))

    # -- the single-writer mutation queue -------------------------------

    def submit(self, session_id: str, kind: str,
               fn: Callable[[sessions.AgentInstance, Callable[[int, int], None]],
                            sessions.AgentInstance],
               wait: bool) -> "Job | ApiError":
        """Queue a mutation; ``fn`` maps (agent, progress) to the next agent."""
        handle = self.handle(session_id)
        job = Job(id=f"job-{next(self._job_ids)}", session=session_id, kind=kind)
        self.jobs[job.id] = job

        def tick(done: int, total: int) -> None:
            phase = "battery" if kind == "battery" else "training"
            job.progress = {"phase": phase, "done": done, "total": total}

        def run() -> None:
            job.status = "running"
            try:
                with handle.lock:
                    agent = fn(handle.agent, tick)
                    self.persist(agent)
                    handle.agent = agent
                job.version = agent.version
                job.status = "done"
            except Exception as exc:  # surfaced through the job report
                failure = error_from_exception(exc)
                job.error = failure.envelope()
                job.error_status = failure.status
                job.status = "failed"

        future = handle.executor.submit(run)
        if wait:
            future.result()
        return job

    def mutate_now(self, session_id: str,
                   fn: Callable[[sessions.AgentInstance], sessions.AgentInstance]
                   ) -> sessions.AgentInstance:
        """Run a quick mutation inline, still serialized and persisted."""
        handle = self.handle(session_id)
        with handle.lock:
            agent = fn(handle.agent)
            self.persist(agent)
            handle.agent = agent
        return agent

    def shutdown(self) -> None:
        with self._registry_lock:
            handles = list(self.handles.values())
        for handle in handles:
            handle.executor.shutdown(wait=True, cancel_futures=True)


# ---------------------------------------------------------------------------
# JSON views


def snapshot(agent: sessions.AgentInstance) -> dict:
    return {
        "session": agent.session_id,
        "kind": agent.kind,
        "version": agent.version,
        "trained": agent.trained,
        "submitted": agent.submitted,
        "summary_available": agent.kind == sessions.STRUCTURED,
        "instructions": [
            {"id": i.id, "text": i.text, "used": i.used, "created_at": i.created_at}
            for i in agent.instructions],
        "demos": [
            {"id": d.id, "used": d.used, "seq": d.seq, "steps": len(d.rows),
             "created_at": d.created_at}
            for d in agent.demos],
        "trials": agent.log.trial_count,
        "rollouts": agent.log.rollout_count(agent.version),
        "rollouts_total": agent.log.rollout_count(),
        "events": len(agent.log),
        "eval": None if agent.eval is None else {
            "columns": len(agent.eval.columns), "rows": len(agent.eval.rows)},
    }


def _body_of(request_json, what: str = "body") -> dict:
    if request_json is None:
        return {}
    if not isinstance(request_json, dict):
        raise ApiError(400, "bad-request", f"the {what} must be a JSON object")
    return request_json


async def _read_body(request: Request) -> dict:
    raw = await request.body()
    if not raw:
        return {}
    try:
        return _body_of(json.loads(raw))
    except json.JSONDecodeError as err:
        raise ApiError(400, "bad-request", f"body is not valid JSON: {err}")


def _train_config_from(data: Mapping) -> TrainConfig:
    unknown = sorted(set(data) - set(_TRAIN_FIELDS))
    if unknown:
        raise ApiError(400, "bad-request", f"unknown train settings {unknown}")
    try:
        return replace(TrainConfig(), **{k: v for k, v in data.items()})
    except (TypeError, ValueError) as err:
        raise ApiError(400, "bad-request", f"bad train settings: {err}")


def _start_config_from(data: Mapping | None) -> StartConfig:
    if not data:
        return NOMINAL_START
    known = {"tile", "lateral", "heading_offset", "speed"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ApiError(400, "bad-request", f"unknown start fields {unknown}")
    try:
        return StartConfig(
            tile=int(data.get("tile", 0)),
            lateral=float(data.get("lateral", 0.0)),
            heading_offset=float(data.get("heading_offset", 0.0)),
            speed=float(data.get("speed", NOMINAL_START.speed)))
    except (TypeError, ValueError) as err:
        raise ApiError(400, "bad-request", f"bad start config: {err}")


def _noise_from(data: Mapping | None) -> NoiseSpec | None:
    if not data:
        return None
    try:
        return NoiseSpec(sigma=float(data["sigma"]), seed=int(data.get("seed", 0)))
    except (KeyError, TypeError, ValueError) as err:
        raise ApiError(400, "bad-request", f"bad noise spec: {err}")


def _demo_rows_from(data: Mapping, demo_id: str) -> DemoSet:
    try:
        obs = np.asarray(data["observations"], dtype=np.float64)
        act = np.asarray(data["actions"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as err:
        raise ApiError(400, "bad-request", f"bad demo payload: {err}")
    if obs.ndim != 2 or act.ndim != 2 or len(obs) != len(act) or not len(obs):
        raise ApiError(400, "bad-request",
                       "observations and actions must be parallel non-empty row lists")
    steps = np.arange(len(obs), dtype=np.int64)
    return DemoSet(obs, act, tuple(ACTION_NAMES), (demo_id,) * len(obs), steps)


def _next_demo_id(agent: sessions.AgentInstance) -> str:
    return f"demo-{1 + sum(1 for e in agent.log.events if e['event'] == 'demo-added')}"


def _job_response(job: Job, service: Service, wait: bool) -> JSONResponse:
    if not wait:
        return JSONResponse(job.report(), status_code=202)
    if job.status == "failed":
        body = dict(job.error)
        body["job"] = job.id
        return JSONResponse(body, status_code=job.error_status)
    payload = job.report()
    payload["session_state"] = snapshot(service.handle(job.session).agent)
    return JSONResponse(payload)


def _wants_wait(request: Request) -> bool:
    flag = request.query_params.get("wait", "")
    return flag.lower() in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# Application assembly


def create_app(config: ServiceConfig | None = None, backend=None) -> FastAPI:
    service = Service(config or ServiceConfig(), backend)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        service.shutdown()

    app = FastAPI(title="steerlab service", version=__version__, lifespan=lifespan)
    app.state.service = service

    @app.exception_handler(ApiError)
    async def _api_error(request, exc: ApiError):
        return JSONResponse(exc.envelope(), status_code=exc.status)

    # -- plumbing ------------------------------------------------------

    @app.get(API + "/health")
    def health():
        return {"status": "ok", "version": __version__}

    # -- session lifecycle ---------------------------------------------

    @app.get(API + "/sessions")
    def list_sessions():
        return {"sessions": service.known_sessions()}

    @app.post(API + "/sessions", status_code=201)
    async def create_session(request: Request):
        data = await _read_body(request)
        sid = str(data.get("session") or f"session-{next(_FRESH_IDS):04d}")
        if not _SESSION_ID.match(sid):
            raise ApiError(400, "bad-request",
                           "session ids are 1-64 characters of [A-Za-z0-9_-]")
        if (service.session_dir(sid) / "log.jsonl").exists():
            raise ApiError(409, "duplicate-session",
                           f"session {sid!r} already exists on disk")
        kind = str(data.get("kind", sessions.STRUCTURED))
        train_config = _train_config_from(_body_of(data.get("train"), "train block"))
        texts = data.get("instructions", [])
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            raise ApiError(400, "bad-request", "instructions must be a list of strings")
        if kind == sessions.DENSE:
            if texts:
                raise ApiError(409, "dense-no-instructions",
                               "a dense baseline session takes no instructions")
            agent = sessions.create_dense_agent(
                sid, init_seed=int(data.get("init_seed", 0)),
                train_config=train_config)
        elif kind == sessions.STRUCTURED:
            try:
                if "source" in data:
                    if texts:
                        raise ApiError(400, "bad-request",
                                       "give either a program source or instructions")
                    agent = sessions.create_structured_agent(
                        sid, str(data["source"]), train_config=train_config)
                else:
                    agent = sessions.create_agent_from_instructions(
                        sid, texts, service.backend, train_config=train_config)
            except ApiError:
                raise
            except (RestructureError, sessions.SessionError) as err:
                raise error_from_exception(err)
            except Exception as err:
                raise ApiError(400, "bad-request", f"cannot build the session: {err}")
        else:
            raise ApiError(400, "bad-request",
                           f"unknown session kind {kind!r}; use structured or dense")
        handle = service.register(agent)
        service.persist(handle.agent)
        return JSONResponse(snapshot(handle.agent), status_code=201)

    @app.post(API + "/sessions/{sid}/load")
    def load_session(sid: str):
        return snapshot(service.handle(sid).agent)

    @app.get(API + "/sessions/{sid}")
    def get_session(sid: str):
        return snapshot(service.handle(sid).agent)

    @app.get(API + "/sessions/{sid}/summary")
    def get_summary(sid: str):
        agent = service.handle(sid).agent
        if agent.kind == sessions.DENSE:
            return {"summary": None,
                    "detail": "no structured summary: this is a dense baseline session"}
        prose = agent.summary or render_summary(agent.policy.program)
        return {"summary": prose, "source": agent.policy.source}

    @app.get(API + "/sessions/{sid}/history")
    def get_history(sid: str):
        agent = service.handle(sid).agent
        rollouts = [
            {"at": e["at"], "version": e["version"], "track": e["track"],
             "eas": e["eas"], "termination": e["termination"]}
            for e in agent.log.events if e["event"] == "rollout"]
        trials = [
            {"at": e["at"], "version": e["version"], "trial": e["trial"],
             "final_loss": e["final_loss"], "checksum": e["checksum"]}
            for e in agent.log.events if e["event"] == "train-finished"]
        return {"rollouts": rollouts, "trials": trials}

    @app.get(API + "/sessions/{sid}/eval")
    def get_eval(sid: str):
        agent = service.handle(sid).agent
        if agent.eval is None:
            return {"columns": [], "rows": []}
        return {"columns": list(agent.eval.columns),
                "rows": [{"version": version, "cells": dict(cells)}
                         for version, cells in agent.eval.rows]}

    # -- instructions ----------------------------------------------------

    @app.get(API + "/sessions/{sid}/instructions")
    def list_instructions(sid: str):
        agent = service.handle(sid).agent
        return {"instructions": snapshot(agent)["instructions"]}

    @app.post(API + "/sessions/{sid}/instructions")
    async def add_instruction(sid: str, request: Request):
        data = await _read_body(request)
        text = data.get("text")
        if not isinstance(text, str) or not text.strip():
            raise ApiError(400, "bad-request", "an instruction needs non-empty text")
        job = service.submit(
            sid, "add-instruction",
            lambda agent, tick: sessions.add_instruction(
                agent, text, service.backend, progress=tick),
            wait=_wants_wait(request))
        return _job_response(job, service, _wants_wait(request))

    @app.delete(API + "/sessions/{sid}/instructions/{iid}")
    def remove_instruction(sid: str, iid: str, request: Request):
        job = service.submit(
            sid, "remove-instruction",
            lambda agent, tick: sessions.remove_instruction(
                agent, iid, service.backend, progress=tick),
            wait=_wants_wait(request))
        return _job_response(job, service, _wants_wait(request))

    @app.post(API + "/sessions/{sid}/instructions/{iid}/used")
    async def toggle_instruction(sid: str, iid: str, request: Request):
        data = await _read_body(request)
        if "used" not in data:
            raise ApiError(400, "bad-request", 'the body needs {"used": true|false}')
        used = bool(data["used"])
        job = service.submit(
            sid, "toggle-instruction",
            lambda agent, tick: sessions.toggle_used(
                agent, iid, used, service.backend, progress=tick),
            wait=_wants_wait(request))
        return _job_response(job, service, _wants_wait(request))

    # -- demonstrations --------------------------------------------------

    @app.get(API + "/sessions/{sid}/demos")
    def list_demos(sid: str):
        agent = service.handle(sid).agent
        return {"demos": snapshot(agent)["demos"]}

    @app.get(API + "/sessions/{sid}/demos/{did}")
    def get_demo(sid: str, did: str):
        agent = service.handle(sid).agent
        try:
            demo = agent.demo(did)
        except sessions.SessionError as err:
            raise error_from_exception(err)
        return {"id": demo.id, "used": demo.used, "seq": demo.seq,
                "created_at": demo.created_at, "steps": len(demo.rows),
                "action_names": list(demo.rows.action_names),
                "observations": demo.rows.observations.tolist(),
                "actions": demo.rows.actions.tolist()}

    @app.post(API + "/sessions/{sid}/demos")
    async def add_demo(sid: str, request: Request):
        data = await _read_body(request)
        explicit = data.get("id")

        def apply(agent, tick):
            demo_id = str(explicit) if explicit else _next_demo_id(agent)
            rows = _demo_rows_from(data, demo_id)
            return sessions.add_demonstration(agent, rows, progress=tick)

        job = service.submit(sid, "add-demo", apply, wait=_wants_wait(request))
        return _job_response(job, service, _wants_wait(request))

    @app.delete(API + "/sessions/{sid}/demos/{did}")
    def remove_demo(sid: str, did: str, request: Request):
        job = service.submit(
            sid, "remove-demo",
            lambda agent, tick: sessions.remove_demonstration(
                agent, did, progress=tick),
            wait=_wants_wait(request))
        return _job_response(job, service, _wants_wait(request))

    @app.post(API + "/sessions/{sid}/demos/{did}/used")
    async def toggle_demo(sid: str, did: str, request: Request):
        data = await _read_body(request)
        if "used" not in data:
            raise ApiError(400, "bad-request", 'the body needs {"used": true|false}')
        used = bool(data["used"])
        job = service.submit(
            sid, "toggle-demo",
            lambda agent, tick: sessions.toggle_used(agent, did, used,
                                                     service.backend,
                                                     progress=tick),
            wait=_wants_wait(request))
        return _job_response(job, service, _wants_wait(request))

    # -- training, evaluation, submission --------------------------------

    @app.post(API + "/sessions/{sid}/train")
    def start_training(sid: str, request: Request):
        agent = service.handle(sid).agent
        if not agent.used_demos:
            raise ApiError(409, "empty-dataset",
                           "training needs at least one demonstration in use")
        job = service.submit(
            sid, "train",
            lambda agent, tick: sessions.retrain(agent, progress=tick),
            wait=_wants_wait(request))
        return _job_response(job, service, _wants_wait(request))

    @app.get(API + "/sessions/{sid}/jobs/{jid}")
    def get_job(sid: str, jid: str):
        job = service.jobs.get(jid)
        if job is None or job.session != sid:
            raise ApiError(404, "unknown-job", f"no job {jid!r} for session {sid!r}")
        body = job.report()
        if job.status == "failed":
            body["error_status"] = job.error_status
        return body

    @app.post(API + "/sessions/{sid}/rollouts")
    async def run_rollout_endpoint(sid: str, request: Request):
        data = await _read_body(request)
        track = service.track(int(data.get("track_seed", 0)))
        start = _start_config_from(data.get("start"))
        noise = _noise_from(data.get("noise"))
        t_cutoff = int(data.get("t_cutoff", MAX_STEPS))
        record_holder: list[RolloutRecord] = []

        def apply(agent):
            agent, record = sessions.run_trial(agent, track, start=start,
                                               noise=noise, t_cutoff=t_cutoff,
                                               record_frames=False)
            record_holder.append(record)
            return agent

        try:
            agent = await asyncio.to_thread(service.mutate_now, sid, apply)
        except (sessions.SessionError, RestructureError) as err:
            raise error_from_exception(err)
        record = record_holder[0]
        return {"version": agent.version, "track_seed": track.seed,
                "eas": record.eas, "termination": record.termination,
                "steps": record.steps, "n_cutoff": record.n_cutoff,
                "rollouts": agent.log.rollout_count(agent.version)}

    @app.post(API + "/sessions/{sid}/battery")
    async def run_battery_endpoint(sid: str, request: Request):
        data = await _read_body(request)
        known = {"seen_seed", "unseen_seeds", "noise_sigmas", "noise_seed", "t_cutoff"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ApiError(400, "bad-request", f"unknown battery fields {unknown}")
        try:
            spec = sessions.BatterySpec(
                seen_seed=int(data.get("seen_seed", 0)),
                unseen_seeds=tuple(int(s) for s in data.get(
                    "unseen_seeds", sessions.BatterySpec.unseen_seeds)),
                noise_sigmas=tuple(float(s) for s in data.get(
                    "noise_sigmas", sessions.BatterySpec.noise_sigmas)),
                noise_seed=int(data.get("noise_seed",
                                        sessions.BatterySpec.noise_seed)),
                t_cutoff=int(data.get("t_cutoff", MAX_STEPS)))
        except (TypeError, ValueError) as err:
            raise ApiError(400, "bad-request", f"bad battery spec: {err}")
        except sessions.SessionError as err:
            raise error_from_exception(err)

        wait = _wants_wait(request)
        job = service.submit(
            sid, "battery",
            lambda agent, tick: sessions.run_battery(agent, spec, progress=tick),
            wait=wait)
        return _job_response(job, service, wait)

    @app.post(API + "/sessions/{sid}/submit")
    def submit_session(sid: str):
        handle = service.handle(sid)
        with handle.lock:
            agent = handle.agent
            tested = agent.log.rollout_count(agent.version)
            if tested < SUBMIT_TEST_MINIMUM:
                raise ApiError(
                    409, "submit-gate",
                    f"version {agent.version} was test driven {tested} of "
                    f"{SUBMIT_TEST_MINIMUM} required times",
                    tests=tested, required=SUBMIT_TEST_MINIMUM)
            agent = sessions.mark_submitted(agent)
            service.persist(agent)
            handle.agent = agent
        return snapshot(agent)

    # -- the real-time channel -------------------------------------------

    @app.websocket(API + "/sessions/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        await ws.accept()
        channel = _Channel(ws)
        try:
            handle = service.handle(sid)
        except ApiError as err:
            await channel.error(err)
            await ws.close()
            channel.shutdown()
            return
        if not service.claim_stream(handle):
            await channel.error(ApiError(409, "stream-busy",
                                         "another stream owns this session"))
            await ws.close()
            channel.shutdown()
            return
        try:
            while True:
                message = await channel.next()
                if message.get("type") != "start":
                    await channel.error(ApiError(
                        400, "bad-message",
                        f"expected a start message, got {message.get('type')!r}"))
                    continue
                await _run_episode(service, handle, channel, message)
        except WebSocketDisconnect:
            pass
        finally:
            service.release_stream(handle)
            channel.shutdown()

    return app


# ---------------------------------------------------------------------------
# Real-time loop internals


class _Channel:
    """Message-framed view of one WebSocket with a background reader."""

    def __init__(self, ws: WebSocket):
        self.ws = ws
        self.queue: asyncio.Queue = asyncio.Queue()
        self._reader = asyncio.get_running_loop().create_task(self._pump())

    async def _pump(self) -> None:
        try:
            while True:
                data = await self.ws.receive_bytes()
                for message in unpack_messages(data):
                    self.queue.put_nowait(message)
        except Exception:  # disconnects and framing errors end the stream
            self.queue.put_nowait(None)

    async def send(self, payload: Mapping) -> None:
        await self.ws.send_bytes(pack_message(payload))

    async def error(self, err: ApiError) -> None:
        body = err.envelope()["error"]
        await self.send({"type": "error", **body})

    async def next(self, timeout: float | None = None) -> dict | None:
        """The next message, or None after ``timeout`` seconds of silence."""
        try:
            message = self.queue.get_nowait()
        except asyncio.QueueEmpty:
            if timeout is not None and timeout <= 0:
                return None
            try:
                if timeout is None:
                    message = await self.queue.get()
                else:
                    message = await asyncio.wait_for(self.queue.get(), timeout)
            except asyncio.TimeoutError:
                return None
        if message is None:
            raise WebSocketDisconnect(1006)
        return message

    def shutdown(self) -> None:
        self._reader.cancel()


@dataclass
class _Controls:
    """Latest controller reading plus the sticky episode flags."""

    held: np.ndarray
    fresh: bool = False
    stop: bool = False
    reset: bool = False

    def take(self, sample: ControlSample, current_step: int) -> None:
        self.held = sample.values
        self.fresh = self.fresh or sample.step >= current_step
        self.stop = self.stop or sample.stop
        self.reset = self.reset or sample.reset


async def _gather_controls(channel: _Channel, controls: _Controls,
                           current_step: int, pace_s: float,
                           extra_wait_s: float, listen: bool) -> None:
    """Run out the step's pace budget, folding in whatever arrives.

    When ``extra_wait_s`` allows it, demo recording lingers past the pace
    deadline until the current step's own sample shows up; otherwise the
    last held value stands (the controller is treated as analog: silence
    means the stick has not moved).
    """
    loop = asyncio.get_running_loop()
    controls.fresh = False
    start = loop.time()
    budget = pace_s
    while True:
        if controls.stop or controls.reset:
            return
        remaining = start + budget - loop.time()
        if remaining <= 0:
            if listen and extra_wait_s > budget and not controls.fresh:
                budget = extra_wait_s
                continue
            # Pace spent: sweep up anything already queued, then move on.
            message = await channel.next(timeout=0)
            if message is None:
                return
        else:
            message = await channel.next(timeout=remaining)
            if message is None:
                continue
        kind = message.get("type")
        if kind == "control":
            try:
                controls.take(ControlSample.from_json(message), current_step)
            except ApiError as err:
                await channel.error(err)
                continue
            if listen and extra_wait_s > 0 and controls.fresh:
                return
        elif kind == "start":
            await channel.error(ApiError(409, "bad-message",
                                         "an episode is already running"))


def _frame(agent_version: int, mode: str, episode: int, index: int,
           track: Track, state, t_cutoff: int) -> FramePacket:
    near = state.tile
    window = []
    for k in range(TILE_COUNT):
        i = (near + k) % track.n_tiles
        window.append({
            "index": i,
            "x": float(track.centers[i][0]), "y": float(track.centers[i][1]),
            "heading": float(track.headings[i]),
            "border": bool(track.border[i]),
        })
    covered = len(state.covered)
    elapsed = state.steps * DT
    value = eas(covered, track.n_tiles, elapsed, t_cutoff * DT) if state.steps else 0.0
    return FramePacket(
        version=agent_version, mode=mode, episode=episode, step=index,
        x=float(state.position[0]), y=float(state.position[1]),
        heading=float(state.heading), speed=float(state.speed),
        distance_to_center=float(track.lateral_offset(state.position, near)),
        angle_to_track=float(wrap_angle(state.heading - track.headings[near])),
        tiles=tuple(window), covered=covered, eas=value)


def _episode_start_message(mode: str, episode: int, track: Track,
                           start: StartConfig, version: int, t_cutoff: int) -> dict:
    return {
        "type": "episode-start", "mode": mode, "episode": episode,
        "version": version, "t_cutoff": t_cutoff,
        "start": {"tile": start.tile, "lateral": start.lateral,
                  "heading_offset": start.heading_offset, "speed": start.speed},
        "track": {
            "seed": track.seed, "n_tiles": track.n_tiles,
            "half_width": track.half_width,
            "centers": [[float(x), float(y)] for x, y in track.centers],
            "headings": [float(h) for h in track.headings],
            "border": [bool(b) for b in track.border],
        },
    }


async def _run_episode(service: Service, handle: _Handle, channel: _Channel,
                       message: Mapping) -> None:
    mode = message.get("mode", "rollout")
    if mode not in ("demo", "rollout"):
        await channel.error(ApiError(400, "bad-message",
                                     f"unknown mode {mode!r}; use demo or rollout"))
        return
    try:
        track = service.track(int(message.get("track_seed", 0)))
        start = _start_config_from(message.get("start"))
        noise = _noise_from(message.get("noise"))
        t_cutoff = int(message.get("t_cutoff", MAX_STEPS))
    except ApiError as err:
        await channel.error(err)
        return
    if t_cutoff <= 0:
        await channel.error(ApiError(400, "bad-message", "t_cutoff must be positive"))
        return

    agent = handle.agent
    # An untrained agent still drives: compiled instructions carry initial
    # weights, and the dense baseline starts from its seeded parameters.
    driver = agent.driver() if mode == "rollout" else None

    config = service.config
    rng = noise.stream() if noise is not None and noise.sigma > 0.0 else None
    episode = 0
    while True:  # one iteration per reset
        episode += 1
        state = start_state(track, start)
        controls = _Controls(held=np.zeros(3))
        obs_rows: list[np.ndarray] = []
        act_rows: list[np.ndarray] = []
        termination = "cutoff"
        restart = False
        await channel.send(_episode_start_message(mode, episode, track, start,
                                                  agent.version, t_cutoff))
        index = 0
        while index < t_cutoff:
            tiles, indicators = observe(track, state)
            flat = flatten(tiles, indicators)
            packet = _frame(agent.version, mode, episode, index, track, state,
                            t_cutoff)
            await channel.send(packet.to_json())
            await _gather_controls(channel, controls, index, config.pace_s,
                                   config.sample_timeout_s, listen=mode == "demo")
            if controls.stop:
                termination = "stopped"
                break
            if controls.reset:
                restart = True
                break
            action = controls.held if mode == "demo" else driver(flat)
            action = np.asarray(action, dtype=np.float64)
            eps = rng.normal(0.0, noise.sigma, 3) if rng is not None else None
            if mode == "demo":
                obs_rows.append(flat)
                act_rows.append(action.copy())
            state = step(track, state, action, eps)
            index += 1
            if len(state.covered) == track.n_tiles:
                termination = "finished"
                break
        if restart:
            continue
        break

    covered = len(state.covered)
    elapsed = state.steps * DT
    value = eas(covered, track.n_tiles, elapsed, t_cutoff * DT) if state.steps else 0.0
    ending = {
        "type": "episode-end", "mode": mode, "episode": episode,
        "termination": termination, "steps": index, "n_cutoff": covered,
        "eas": value, "version": agent.version,
    }

    if mode == "rollout":
        record = RolloutRecord(
            track_seed=track.seed, n_total=track.n_tiles, start=start,
            noise=noise, termination=termination, t_total=elapsed,
            n_cutoff=covered, t_cutoff=t_cutoff * DT, eas=value)
        updated = await asyncio.to_thread(
            service.mutate_now, agent.session_id,
            lambda current: sessions.record_trial(current, track.seed, record))
        ending["rollouts"] = updated.log.rollout_count(updated.version)
    elif obs_rows:
        observations = np.asarray(obs_rows)
        actions = np.asarray(act_rows)

        def apply(current, tick):
            demo_id = _next_demo_id(current)
            steps = np.arange(len(observations), dtype=np.int64)
            rows = DemoSet(observations, actions, tuple(ACTION_NAMES),
                           (demo_id,) * len(observations), steps)
            return sessions.add_demonstration(current, rows, progress=tick)

        job = service.submit(agent.session_id, "add-demo", apply, wait=False)
        ending["demo_job"] = job.id
        ending["demo_steps"] = len(observations)

    await channel.send(ending)
