"""Teaching sessions: one agent, its update rules, and its artifacts.

An agent is a snapshot of four things: the instruction set, the
demonstration set, the compiled structure, and the weights on that
structure.  Every teaching move maps one snapshot to the next by the same
two rules the rest of the package is built around: demonstration changes
retrain the weights under the standing structure, and instruction changes
rebuild the structure first, then retrain on whatever demonstrations are
in use.  Snapshots are immutable; an operation either returns the next
version or raises, so a failed restructure or training run can never leave
a half-applied agent behind.

Retraining always cold-starts from the structure's declared initial
weights, with a seed derived from the session id and the new version
number, so the same teaching sequence reproduces the same weights bit for
bit.  Removal comes in two strengths, mirroring the review workflow: a
used-flag that keeps the item but drops it from training and prompting,
and a hard delete.

A session persists as a plain directory (program source, raw weight
vector, instruction and event logs, one frames file per demonstration,
generation transcripts, and the evaluation table), and loading it back
reproduces the snapshot exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .demos import DemoSet, load_frames, merge_demo_sets, save_frames
from .dense import DensePolicy
from .drivers import dense_driver, graph_driver
from .graph import WeightVector, weight_checksum
from .observation import ACTION_NAMES, FLAT_WIDTH
from .pgdl import CompiledPolicy, compile_source
from .restructure import (
    Instruction,
    InstructionSet,
    LlmTranscript,
    restructure,
)
from .sim import (
    MAX_STEPS,
    NOISE_SIGMAS,
    NOMINAL_START,
    NoiseSpec,
    StartConfig,
    RolloutRecord,
    edge_case_starts,
    run_rollout,
    unseen_battery_starts,
)
from .track import Track, generate_track
from .training import (
    DensePolicyAdapter,
    StructuredPolicyAdapter,
    TrainConfig,
    TrainError,
    train,
)

STRUCTURED = "structured"
DENSE = "dense"

WEIGHTS_MAGIC = b"SLWB"
WEIGHTS_FORMAT = 1

DENSE_SIZES = (FLAT_WIDTH, 80, len(ACTION_NAMES))


class SessionError(Exception):
    pass


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def retrain_seed(session_id: str, version: int) -> int:
    """Deterministic per-version training seed (low 32 bits of a digest)."""
    digest = hashlib.sha256(f"{session_id}:{version}".encode("utf-8")).digest()
    return int.from_bytes(digest[-4:], "big")


# ---------------------------------------------------------------------------
# State containers


@dataclass(frozen=True)
class Demonstration:
    """One recorded episode plus its review state.

    ``rows`` is a single-episode row table; ``seq`` is the insertion rank,
    which fixes the merge order for training no matter what was deleted
    in between.
    """

    id: str
    rows: DemoSet
    used: bool = True
    seq: int = 0
    created_at: str = ""


@dataclass(frozen=True)
class SessionLog:
    """Append-only event history; trial indices count finished trainings."""

    events: tuple[Mapping, ...] = ()

    def append(self, event: str, **payload) -> "SessionLog":
        record = {"at": _utc_now(), "event": event, **payload}
        return SessionLog(self.events + (record,))

    @property
    def trial_count(self) -> int:
        return sum(1 for e in self.events if e["event"] == "train-finished")

    def rollout_count(self, version: int | None = None) -> int:
        return sum(1 for e in self.events if e["event"] == "rollout"
                   and (version is None or e.get("version") == version))

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class EvalMatrix:
    """EAS per (trained version, condition); failed cells are simply absent."""

    columns: tuple[str, ...]
    rows: tuple[tuple[int, Mapping[str, float]], ...] = ()

    def append_row(self, version: int, cells: Mapping[str, float]) -> "EvalMatrix":
        unknown = sorted(set(cells) - set(self.columns))
        if unknown:
            raise SessionError(f"cells outside the battery columns: {unknown[:3]}")
        return EvalMatrix(self.columns, self.rows + ((version, dict(cells)),))


# ---------------------------------------------------------------------------
# The agent snapshot


@dataclass(frozen=True, eq=False)
class AgentInstance:
    """Immutable snapshot of one taught agent.

    ``policy`` holds the compiled program (its weights field is the cold
    start state); ``weights`` is the current trained state.  Dense agents
    carry a flat parameter vector instead and refuse instruction edits.
    """

    session_id: str
    kind: str
    version: int
    instructions: InstructionSet
    demos: tuple[Demonstration, ...]
    policy: CompiledPolicy | None
    weights: WeightVector | None
    dense_params: np.ndarray | None
    dense_init_seed: int
    summary: str
    train_config: TrainConfig
    transcripts: tuple[LlmTranscript, ...]
    log: SessionLog
    eval: EvalMatrix | None

    # -- derived views ------------------------------------------------

    @property
    def used_demos(self) -> tuple[Demonstration, ...]:
        return tuple(d for d in self.demos if d.used)

    @property
    def trained(self) -> bool:
        return self.log.trial_count > 0

    @property
    def submitted(self) -> bool:
        return any(e["event"] == "submitted" for e in self.log.events)

    @property
    def structure_hash(self) -> str:
        if self.kind == DENSE:
            basis = f"dense:{DENSE_SIZES}".encode("utf-8")
        else:
            basis = self.policy.source.encode("utf-8")
        return hashlib.sha256(basis).hexdigest()

    @property
    def weight_hash(self) -> str:
        values = self.dense_params if self.kind == DENSE else self.weights.values
        return weight_checksum(values)

    def driver(self) -> Callable[[np.ndarray], np.ndarray]:
        if self.kind == DENSE:
            return dense_driver(_dense_policy(self.dense_init_seed, self.dense_params))
        return graph_driver(self.policy.structure, self.weights)

    def demo(self, demo_id: str) -> Demonstration:
        for d in self.demos:
            if d.id == demo_id:
                return d
        raise SessionError(f"unknown demonstration {demo_id!r}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, AgentInstance):
            return NotImplemented
        return (
            self.session_id == other.session_id
            and self.kind == other.kind
            and self.version == other.version
            and self.instructions == other.instructions
            and _demos_equal(self.demos, other.demos)
            and _sources_equal(self.policy, other.policy)
            and _weights_equal(self.weights, other.weights)
            and _arrays_equal(self.dense_params, other.dense_params)
            and self.dense_init_seed == other.dense_init_seed
            and self.summary == other.summary
            and self.train_config == other.train_config
            and [t.to_json() for t in self.transcripts] == [t.to_json() for t in other.transcripts]
            and self.log.events == other.log.events
            and self.eval == other.eval
        )


def _demos_equal(a: tuple[Demonstration, ...], b: tuple[Demonstration, ...]) -> bool:
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if (x.id, x.used, x.seq, x.created_at) != (y.id, y.used, y.seq, y.created_at):
            return False
        if x.rows.action_names != y.rows.action_names or x.rows.demo_ids != y.rows.demo_ids:
            return False
        if not (np.array_equal(x.rows.observations, y.rows.observations)
                and np.array_equal(x.rows.actions, y.rows.actions)
                and np.array_equal(x.rows.steps, y.rows.steps)):
            return False
    return True


def _sources_equal(a: CompiledPolicy | None, b: CompiledPolicy | None) -> bool:
    if (a is None) != (b is None):
        return False
    return a is None or a.source == b.source


def _weights_equal(a: WeightVector | None, b: WeightVector | None) -> bool:
    if (a is None) != (b is None):
        return False
    return a is None or (np.array_equal(a.values, b.values)
                         and np.array_equal(a.frozen, b.frozen))


def _arrays_equal(a: np.ndarray | None, b: np.ndarray | None) -> bool:
    if (a is None) != (b is None):
        return False
    return a is None or np.array_equal(a, b)


def _dense_policy(init_seed: int, params: np.ndarray) -> DensePolicy:
    policy = DensePolicy.initialize(init_seed, sizes=DENSE_SIZES)
    policy.set_params(np.asarray(params, dtype=np.float64).copy())
    return policy


# ---------------------------------------------------------------------------
# Creation


def create_structured_agent(session_id: str, source: str, *,
                            summary: str = "",
                            train_config: TrainConfig = TrainConfig()) -> AgentInstance:
    """Fresh agent around an explicit program; no instructions, no demos."""
    policy = compile_source(source)
    log = SessionLog().append("created", session=session_id, kind=STRUCTURED,
                              version=1, train_config=_config_json(train_config))
    return AgentInstance(
        session_id=session_id, kind=STRUCTURED, version=1,
        instructions=InstructionSet(), demos=(),
        policy=policy, weights=policy.weights.copy(),
        dense_params=None, dense_init_seed=0,
        summary=summary, train_config=train_config,
        transcripts=(), log=log, eval=None)


def create_agent_from_instructions(session_id: str, texts: Sequence[str], backend, *,
                                   train_config: TrainConfig = TrainConfig()) -> AgentInstance:
    """Fresh agent whose first structure is generated from ``texts``."""
    instructions = InstructionSet()
    log = SessionLog().append("created", session=session_id, kind=STRUCTURED,
                              version=1, train_config=_config_json(train_config))
    for n, text in enumerate(texts, start=1):
        instruction = Instruction(id=f"ins-{n}", text=text, created_at=_utc_now())
        instructions = instructions.add(instruction)
        log = log.append("instruction-added", id=instruction.id, text=text, version=1)
    result = restructure(instructions, backend)
    log = log.append("restructured", summary=result.summary,
                     attempts=len(result.transcripts))
    return AgentInstance(
        session_id=session_id, kind=STRUCTURED, version=1,
        instructions=instructions, demos=(),
        policy=result.policy, weights=result.policy.weights.copy(),
        dense_params=None, dense_init_seed=0,
        summary=result.summary, train_config=train_config,
        transcripts=tuple(result.transcripts), log=log, eval=None)


def create_dense_agent(session_id: str, *, init_seed: int = 0,
                       train_config: TrainConfig = TrainConfig()) -> AgentInstance:
    """Baseline agent: one opaque function block, no program, no summary."""
    policy = DensePolicy.initialize(init_seed, sizes=DENSE_SIZES)
    log = SessionLog().append("created", session=session_id, kind=DENSE,
                              version=1, init_seed=init_seed,
                              train_config=_config_json(train_config))
    return AgentInstance(
        session_id=session_id, kind=DENSE, version=1,
        instructions=InstructionSet(), demos=(),
        policy=None, weights=None,
        dense_params=policy.get_params(), dense_init_seed=init_seed,
        summary="", train_config=train_config,
        transcripts=(), log=log, eval=None)


def _config_json(config: TrainConfig) -> dict:
    return {
        "seed": config.seed, "learning_rate": config.learning_rate,
        "beta1": config.beta1, "beta2": config.beta2, "epsilon": config.epsilon,
        "batch_size": config.batch_size, "batches": config.batches,
    }


def _config_from_json(data: Mapping) -> TrainConfig:
    return TrainConfig(
        seed=int(data["seed"]), learning_rate=float(data["learning_rate"]),
        beta1=float(data["beta1"]), beta2=float(data["beta2"]),
        epsilon=float(data["epsilon"]), batch_size=int(data["batch_size"]),
        batches=int(data["batches"]))


# ---------------------------------------------------------------------------
# Training plumbing shared by the mutation operations


def _require_open(agent: AgentInstance) -> None:
    if agent.submitted:
        raise SessionError("session is locked: the final policy was submitted")


def _training_rows(demos: Sequence[Demonstration]) -> DemoSet | None:
    used = sorted((d for d in demos if d.used), key=lambda d: d.seq)
    if not used:
        return None
    return merge_demo_sets([d.rows for d in used])


def _train_step(agent: AgentInstance, policy: CompiledPolicy | None,
                demos: Sequence[Demonstration], new_version: int,
                log: SessionLog, progress: Callable[[int, int], None] | None = None):
    """Retrain from cold start; returns (trained weights or params, log)."""
    rows = _training_rows(demos)
    if rows is None:
        raise SessionError("training needs at least one demonstration in use")
    seed = retrain_seed(agent.session_id, new_version)
    config = replace(agent.train_config, seed=seed)
    log = log.append("train-started", version=new_version, rows=len(rows), seed=seed)
    if agent.kind == DENSE:
        dense = _dense_policy_cold(agent)
        adapter = DensePolicyAdapter(dense)
    else:
        weights = policy.weights.copy()
        adapter = StructuredPolicyAdapter(policy.structure, weights)
    on_batch = None
    if progress is not None:
        on_batch = lambda index, loss: progress(index + 1, config.batches)
    report = train(adapter, rows, config, on_batch=on_batch)
    log = log.append("train-finished", version=new_version,
                     trial=log.trial_count + 1, checksum=report.checksum,
                     final_loss=report.final_loss,
                     wall_time_s=round(report.wall_time_s, 3))
    trained = dense.get_params() if agent.kind == DENSE else weights
    return trained, log


def _dense_policy_cold(agent: AgentInstance) -> DensePolicy:
    return DensePolicy.initialize(agent.dense_init_seed, sizes=DENSE_SIZES)


# ---------------------------------------------------------------------------
# Demonstration operations


def _check_demo_schema(rows: DemoSet) -> str:
    if rows.observations.shape[1] != FLAT_WIDTH:
        raise SessionError(
            f"demonstration rows are {rows.observations.shape[1]} wide,"
            f" the driving observation is {FLAT_WIDTH}")
    if tuple(rows.action_names) != tuple(ACTION_NAMES):
        raise SessionError(
            f"demonstration actions {list(rows.action_names)} do not match"
            f" {list(ACTION_NAMES)}")
    ids = rows.episode_ids
    if len(ids) != 1:
        raise SessionError(f"one demonstration per add; rows carry episodes {list(ids)}")
    return ids[0]


def add_demonstration(agent: AgentInstance, rows: DemoSet, *,
                      progress: Callable[[int, int], None] | None = None) -> AgentInstance:
    """Grow the demonstration set and retrain; the structure stays put."""
    _require_open(agent)
    demo_id = _check_demo_schema(rows)
    if any(d.id == demo_id for d in agent.demos):
        raise SessionError(f"demonstration {demo_id!r} already exists")
    seq = 1 + sum(1 for e in agent.log.events if e["event"] == "demo-added")
    demo = Demonstration(id=demo_id, rows=rows, used=True, seq=seq,
                         created_at=_utc_now())
    demos = agent.demos + (demo,)
    version = agent.version + 1
    log = agent.log.append("demo-added", id=demo_id, rows=len(rows), version=version)
    trained, log = _train_step(agent, agent.policy, demos, version, log, progress)
    return _with_weights(agent, trained, demos=demos, version=version, log=log)


def remove_demonstration(agent: AgentInstance, demo_id: str, *,
                         progress: Callable[[int, int], None] | None = None) -> AgentInstance:
    """Hard delete.  Retrains on the remainder; with nothing left in use
    the previous weights stand (there is no dataset to replace them with)."""
    _require_open(agent)
    agent.demo(demo_id)
    demos = tuple(d for d in agent.demos if d.id != demo_id)
    version = agent.version + 1
    log = agent.log.append("demo-removed", id=demo_id, version=version)
    if _training_rows(demos) is None:
        return replace(agent, demos=demos, version=version, log=log)
    trained, log = _train_step(agent, agent.policy, demos, version, log, progress)
    return _with_weights(agent, trained, demos=demos, version=version, log=log)


def _with_weights(agent: AgentInstance, trained, **updates) -> AgentInstance:
    if agent.kind == DENSE:
        return replace(agent, dense_params=trained, **updates)
    return replace(agent, weights=trained, **updates)


# ---------------------------------------------------------------------------
# Instruction operations


def _require_structured(agent: AgentInstance, what: str) -> None:
    if agent.kind != STRUCTURED:
        raise SessionError(f"{what} needs a structured agent; this one is a dense baseline")


def _restructure_step(agent: AgentInstance, instructions: InstructionSet,
                      backend, new_version: int, log: SessionLog,
                      progress: Callable[[int, int], None] | None = None):
    """Rebuild the structure, then retrain if any demonstration is in use."""
    result = restructure(instructions, backend)
    log = log.append("restructured", summary=result.summary,
                     attempts=len(result.transcripts))
    policy = result.policy
    if _training_rows(agent.demos) is None:
        weights = policy.weights.copy()
    else:
        weights, log = _train_step(agent, policy, agent.demos, new_version, log,
                                   progress)
    return policy, weights, result, log


def add_instruction(agent: AgentInstance, text: str, backend, *,
                    progress: Callable[[int, int], None] | None = None) -> AgentInstance:
    """Add a wish, regenerate the structure, retrain on the standing demos."""
    _require_open(agent)
    _require_structured(agent, "adding an instruction")
    number = 1 + sum(1 for e in agent.log.events if e["event"] == "instruction-added")
    instruction = Instruction(id=f"ins-{number}", text=text, created_at=_utc_now())
    instructions = agent.instructions.add(instruction)
    version = agent.version + 1
    log = agent.log.append("instruction-added", id=instruction.id, text=text,
                           version=version)
    policy, weights, result, log = _restructure_step(agent, instructions,
                                                     backend, version, log, progress)
    return replace(agent, instructions=instructions, version=version,
                   policy=policy, weights=weights, summary=result.summary,
                   transcripts=agent.transcripts + tuple(result.transcripts),
                   log=log)


def remove_instruction(agent: AgentInstance, instruction_id: str, backend, *,
                       progress: Callable[[int, int], None] | None = None) -> AgentInstance:
    """Hard delete.  The structure is regenerated even when the set empties,
    so the agent falls back to generic driving knowledge."""
    _require_open(agent)
    _require_structured(agent, "removing an instruction")
    instructions = agent.instructions.remove(instruction_id)
    version = agent.version + 1
    log = agent.log.append("instruction-removed", id=instruction_id, version=version)
    policy, weights, result, log = _restructure_step(agent, instructions,
                                                     backend, version, log, progress)
    return replace(agent, instructions=instructions, version=version,
                   policy=policy, weights=weights, summary=result.summary,
                   transcripts=agent.transcripts + tuple(result.transcripts),
                   log=log)


def toggle_used(agent: AgentInstance, item_id: str, used: bool,
                backend=None, *,
                progress: Callable[[int, int], None] | None = None) -> AgentInstance:
    """Flip an item's training flag and bring the agent back in line.

    Instructions force a restructure (the prompt changed), demonstrations
    force a retrain.  Unflagging the last used demonstration keeps the
    prior weights: the flag flips, but an empty dataset trains nothing.
    """
    _require_open(agent)
    is_instruction = any(i.id == item_id for i in agent.instructions)
    is_demo = any(d.id == item_id for d in agent.demos)
    if not (is_instruction or is_demo):
        raise SessionError(f"unknown item {item_id!r}")

    version = agent.version + 1
    if is_instruction:
        if backend is None:
            raise SessionError("toggling an instruction needs a generation backend")
        instructions = agent.instructions.set_used(item_id, used)
        log = agent.log.append("used-toggled", id=item_id, used=used, version=version)
        policy, weights, result, log = _restructure_step(agent, instructions,
                                                         backend, version, log,
                                                         progress)
        return replace(agent, instructions=instructions, version=version,
                       policy=policy, weights=weights, summary=result.summary,
                       transcripts=agent.transcripts + tuple(result.transcripts),
                       log=log)

    demos = tuple(replace(d, used=used) if d.id == item_id else d
                  for d in agent.demos)
    log = agent.log.append("used-toggled", id=item_id, used=used, version=version)
    if _training_rows(demos) is None:
        return replace(agent, demos=demos, version=version, log=log)
    trained, log = _train_step(agent, agent.policy, demos, version, log, progress)
    return _with_weights(agent, trained, demos=demos, version=version, log=log)


def retrain(agent: AgentInstance, *,
            progress: Callable[[int, int], None] | None = None) -> AgentInstance:
    """Train afresh at a new version; nothing else about the agent moves.

    The explicit train button maps here: same structure, same
    demonstrations, new cold start under the new version's seed.
    """
    _require_open(agent)
    version = agent.version + 1
    trained, log = _train_step(agent, agent.policy, agent.demos, version,
                               agent.log, progress)
    return _with_weights(agent, trained, version=version, log=log)


# ---------------------------------------------------------------------------
# Rollouts and the robustness battery


def record_trial(agent: AgentInstance, track_seed: int,
                 record: RolloutRecord) -> AgentInstance:
    """Log a finished test drive; the version stays put."""
    log = agent.log.append("rollout", version=agent.version,
                           track=track_seed, eas=record.eas,
                           termination=record.termination)
    return replace(agent, log=log)


def run_trial(agent: AgentInstance, track: Track,
              start: StartConfig = NOMINAL_START,
              noise: NoiseSpec | None = None,
              t_cutoff: int = MAX_STEPS,
              record_frames: bool = True) -> tuple[AgentInstance, RolloutRecord]:
    """One logged test drive of the current policy."""
    record = run_rollout(agent.driver(), track, start=start, noise=noise,
                         t_cutoff=t_cutoff, record_frames=record_frames)
    return record_trial(agent, track.seed, record), record


@dataclass(frozen=True)
class BatterySpec:
    """Which rollouts make up one evaluation row.

    The default is the full sweep: every start on ten fresh tracks, the
    stress starts on the teaching track, and two noise levels at the
    nominal start.
    """

    seen_seed: int = 0
    unseen_seeds: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    noise_sigmas: tuple[float, ...] = NOISE_SIGMAS
    noise_seed: int = 9000
    t_cutoff: int = MAX_STEPS

    def __post_init__(self) -> None:
        if self.seen_seed in self.unseen_seeds:
            raise SessionError("the teaching track cannot be in the unseen set")

    def conditions(self) -> list[tuple[str, Track, StartConfig, NoiseSpec | None]]:
        out: list[tuple[str, Track, StartConfig, NoiseSpec | None]] = []
        for seed in self.unseen_seeds:
            track = generate_track(seed)
            for i, start in enumerate(unseen_battery_starts(track)):
                out.append((f"unseen:{seed}:{i:02d}", track, start, None))
        seen = generate_track(self.seen_seed)
        for i, start in enumerate(edge_case_starts(seen)):
            out.append((f"edge:{i:02d}", seen, start, None))
        for level, sigma in enumerate(self.noise_sigmas):
            noise = NoiseSpec(sigma, self.noise_seed + level)
            out.append((f"noise:{sigma:g}", seen, NOMINAL_START, noise))
        return out

    def columns(self) -> tuple[str, ...]:
        return tuple(label for label, _, _, _ in self.conditions())


def evaluate_battery(driver: Callable[[np.ndarray], np.ndarray],
                     spec: BatterySpec = BatterySpec(),
                     progress: Callable[[int, int], None] | None = None) -> dict[str, float]:
    """Run every battery condition; a crashed cell is skipped, not fatal."""
    cells: dict[str, float] = {}
    conditions = spec.conditions()
    for n, (label, track, start, noise) in enumerate(conditions, start=1):
        try:
            record = run_rollout(driver, track, start=start, noise=noise,
                                 t_cutoff=spec.t_cutoff, record_frames=False)
        except Exception:
            continue
        finally:
            if progress is not None:
                progress(n, len(conditions))
        cells[label] = record.eas
    return cells


def run_battery(agent: AgentInstance, spec: BatterySpec = BatterySpec(), *,
                progress: Callable[[int, int], None] | None = None) -> AgentInstance:
    """Fill one evaluation row for the current trained version."""
    if not agent.trained:
        raise SessionError("the battery needs trained weights; teach something first")
    columns = spec.columns()
    matrix = agent.eval if agent.eval is not None else EvalMatrix(columns)
    if matrix.columns != columns:
        raise SessionError("battery spec disagrees with the existing evaluation columns")
    cells = evaluate_battery(agent.driver(), spec, progress)
    matrix = matrix.append_row(agent.version, cells)
    log = agent.log.append("battery", version=agent.version,
                           cells=len(columns), filled=len(cells))
    return replace(agent, eval=matrix, log=log)


def mark_submitted(agent: AgentInstance) -> AgentInstance:
    """Freeze the session; every later mutation is refused."""
    _require_open(agent)
    log = agent.log.append("submitted", version=agent.version,
                           tests=agent.log.rollout_count(agent.version))
    return replace(agent, log=log)


# ---------------------------------------------------------------------------
# Persistence
#
# Layout: agent.pgdl, weights.bin, instructions.jsonl, demos/*.frames,
# transcripts/, log.jsonl, eval.csv.  The weight file is self-checking:
# magic, format version, count, little-endian float64 payload, and a
# trailing digest over everything before it.


def _pack_weights(values: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(np.asarray(values, dtype="<f8")).tobytes()
    head = WEIGHTS_MAGIC + struct.pack("<II", WEIGHTS_FORMAT, len(values))
    return head + payload + hashlib.sha256(head + payload).digest()


def _unpack_weights(blob: bytes) -> np.ndarray:
    if len(blob) < 12 or blob[:4] != WEIGHTS_MAGIC:
        raise SessionError("weights.bin: not a weight file (bad magic)")
    fmt, count = struct.unpack("<II", blob[4:12])
    if fmt != WEIGHTS_FORMAT:
        raise SessionError(f"weights.bin: unsupported format {fmt}")
    body_end = 12 + 8 * count
    if len(blob) != body_end + 32:
        raise SessionError("weights.bin: truncated; checksum cannot be verified")
    if hashlib.sha256(blob[:body_end]).digest() != blob[body_end:]:
        raise SessionError("weights.bin: checksum mismatch")
    return np.frombuffer(blob[12:body_end], dtype="<f8").astype(np.float64)


def persist(agent: AgentInstance, directory) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)

    if agent.kind == STRUCTURED:
        (root / "agent.pgdl").write_text(agent.policy.source, encoding="utf-8")
        values = agent.weights.values
    else:
        values = agent.dense_params
    (root / "weights.bin").write_bytes(_pack_weights(values))

    with (root / "instructions.jsonl").open("w", encoding="utf-8") as fh:
        for instruction in agent.instructions:
            fh.write(json.dumps(instruction.to_json(), ensure_ascii=False) + "\n")

    demo_dir = root / "demos"
    demo_dir.mkdir(exist_ok=True)
    for stale in demo_dir.glob("*.frames"):
        stale.unlink()
    for demo in agent.demos:
        save_frames(demo_dir / f"{demo.id}.frames", demo.rows,
                    extra={"demo": demo.id, "used": demo.used,
                           "seq": demo.seq, "created_at": demo.created_at})

    transcript_dir = root / "transcripts"
    transcript_dir.mkdir(exist_ok=True)
    for stale in transcript_dir.glob("*.json"):
        stale.unlink()
    for n, transcript in enumerate(agent.transcripts, start=1):
        (transcript_dir / f"{n:04d}.json").write_text(
            json.dumps(transcript.to_json(), indent=1, ensure_ascii=False) + "\n",
            encoding="utf-8")

    with (root / "log.jsonl").open("w", encoding="utf-8") as fh:
        for event in agent.log.events:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")

    if agent.eval is not None:
        _write_eval(root / "eval.csv", agent.eval)


def _write_eval(path: Path, matrix: EvalMatrix) -> None:
    lines = ["version," + ",".join(matrix.columns)]
    for version, cells in matrix.rows:
        row = [str(version)]
        row.extend(repr(cells[c]) if c in cells else "" for c in matrix.columns)
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_eval(path: Path) -> EvalMatrix:
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    if header[:1] != ["version"]:
        raise SessionError("eval.csv: first column must be the version")
    columns = tuple(header[1:])
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        cells = line.split(",")
        version = int(cells[0])
        filled = {c: float(v) for c, v in zip(columns, cells[1:]) if v != ""}
        rows.append((version, filled))
    return EvalMatrix(columns, tuple(rows))


def load(directory) -> AgentInstance:
    root = Path(directory)
    log_path = root / "log.jsonl"
    if not log_path.is_file():
        raise SessionError(f"{root}: not a session directory (no log.jsonl)")
    events = tuple(json.loads(line) for line in
                   log_path.read_text(encoding="utf-8").splitlines() if line)
    log = SessionLog(events)
    created = next((e for e in events if e["event"] == "created"), None)
    if created is None:
        raise SessionError("log.jsonl: no creation event")
    session_id = created["session"]
    kind = created["kind"]
    train_config = _config_from_json(created["train_config"])
    version = max((e.get("version", 1) for e in events), default=1)
    summary = ""
    for event in events:
        if event["event"] == "restructured":
            summary = event["summary"]

    values = _unpack_weights((root / "weights.bin").read_bytes())
    if kind == STRUCTURED:
        policy = compile_source((root / "agent.pgdl").read_text(encoding="utf-8"))
        if len(values) != len(policy.weights.values):
            raise SessionError(
                f"weights.bin holds {len(values)} weights, the program declares"
                f" {len(policy.weights.values)}")
        weights = WeightVector(values, policy.weights.frozen.copy())
        dense_params = None
        init_seed = 0
    else:
        policy = None
        weights = None
        dense_params = values
        init_seed = int(created["init_seed"])
        expected = len(DensePolicy.initialize(init_seed, sizes=DENSE_SIZES).get_params())
        if len(values) != expected:
            raise SessionError(
                f"weights.bin holds {len(values)} weights, the dense baseline"
                f" uses {expected}")

    instructions = InstructionSet()
    ins_path = root / "instructions.jsonl"
    if ins_path.is_file():
        for line in ins_path.read_text(encoding="utf-8").splitlines():
            if line:
                instructions = instructions.add(Instruction.from_json(json.loads(line)))

    demos = []
    demo_dir = root / "demos"
    if demo_dir.is_dir():
        for path in sorted(demo_dir.glob("*.frames")):
            header = _frames_header(path)
            demos.append(Demonstration(
                id=header["demo"], rows=load_frames(path), used=bool(header["used"]),
                seq=int(header["seq"]), created_at=header.get("created_at", "")))
    demos.sort(key=lambda d: d.seq)

    transcripts = []
    if (root / "transcripts").is_dir():
        for path in sorted((root / "transcripts").glob("*.json")):
            transcripts.append(LlmTranscript.from_json(
                json.loads(path.read_text(encoding="utf-8"))))

    eval_matrix = _read_eval(root / "eval.csv") if (root / "eval.csv").is_file() else None

    return AgentInstance(
        session_id=session_id, kind=kind, version=version,
        instructions=instructions, demos=tuple(demos),
        policy=policy, weights=weights,
        dense_params=dense_params, dense_init_seed=init_seed,
        summary=summary, train_config=train_config,
        transcripts=tuple(transcripts), log=log, eval=eval_matrix)


def _frames_header(path: Path) -> dict:
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise SessionError(f"{path}: missing frames header")
    return json.loads(first[1:].strip())
