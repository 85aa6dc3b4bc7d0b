"""Regenerate the committed example session under fixtures/session/.

Usage: python3 tools/make_session_fixture.py

Replays a short teaching sequence (one instruction, two scripted
demonstrations, a second instruction, four test drives, one small battery)
and persists the resulting agent plus a manifest of the counters a loader
should see.  Training is shortened so the fixture stays small and quick to
rebuild; rerun this script whenever the session format or the replay
fixtures change.
"""

from __future__ import annotations

import json
from pathlib import Path

from steerlab import session as S
from steerlab.demos import demo_set_from_episodes
from steerlab.drivers import scripted_driver
from steerlab.observation import ACTION_NAMES
from steerlab.restructure import ReplayBackend
from steerlab.sim import StartConfig, run_rollout
from steerlab.track import generate_track
from steerlab.training import TrainConfig

ROOT = Path(__file__).resolve().parents[1]
OUT_DIR = ROOT / "fixtures" / "session" / "demo-session"
MANIFEST = ROOT / "fixtures" / "session" / "demo-session.manifest.json"

TRACK_SEED = 0
DEMO_STEPS = 120
CONFIG = TrainConfig(batches=60, batch_size=128)


def record_demo(demo_id: str, track, start: StartConfig):
    record = run_rollout(scripted_driver(), track, start=start,
                         t_cutoff=DEMO_STEPS, record_frames=True)
    return demo_set_from_episodes(
        [(demo_id, record.observations, record.actions)], ACTION_NAMES)


def main() -> int:
    backend = ReplayBackend.load(ROOT / "fixtures" / "replay")
    track = generate_track(TRACK_SEED)

    agent = S.create_agent_from_instructions(
        "demo-session", ["follow the center line"], backend, train_config=CONFIG)
    agent = S.add_demonstration(agent, record_demo("demo-1", track, StartConfig(
        tile=0, lateral=0.0, heading_offset=0.0, speed=40.0)))
    agent = S.add_demonstration(agent, record_demo("demo-2", track, StartConfig(
        tile=150, lateral=0.05, heading_offset=0.0, speed=40.0)))
    agent = S.add_instruction(agent, "slow down in front of curves", backend)
    for _ in range(4):
        agent, _ = S.run_trial(agent, track, t_cutoff=150, record_frames=False)
    agent = S.run_battery(agent, S.BatterySpec(seen_seed=TRACK_SEED,
                                               unseen_seeds=(1,), t_cutoff=200))

    if OUT_DIR.exists():
        for path in sorted(OUT_DIR.rglob("*"), reverse=True):
            path.unlink() if path.is_file() else path.rmdir()
    S.persist(agent, OUT_DIR)

    manifest = {
        "session": agent.session_id,
        "version": agent.version,
        "trials": agent.log.trial_count,
        "events": len(agent.log),
        "instructions": len(agent.instructions),
        "demos": len(agent.demos),
        "rollouts": agent.log.rollout_count(agent.version),
        "eval_columns": len(agent.eval.columns),
        "eval_rows": len(agent.eval.rows),
        "structure_hash": agent.structure_hash,
        "weight_hash": agent.weight_hash,
    }
    MANIFEST.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    for key, value in manifest.items():
        print(f"{key:16s} {value}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
