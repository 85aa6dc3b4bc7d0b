"""Run one full teaching loop: instruct, demonstrate, train, evaluate.

A session owns an agent through its whole life: instructions regenerate
the structure, demonstrations retrain the weights, trial rollouts count
toward the submit gate, and the robustness battery fills one row of the
evaluation matrix per trained version.  Everything is deterministic given
the session id and the inputs, and everything persists to a directory.
"""

import tempfile
from pathlib import Path

from steerlab import session as S
from steerlab.demos import demo_set_from_episodes
from steerlab.observation import ACTION_NAMES
from steerlab.restructure import ReplayBackend
from steerlab.sim import StartConfig, run_rollout
from steerlab.drivers import scripted_driver
from steerlab.track import generate_track

REPLAY = Path(__file__).resolve().parent.parent / "fixtures" / "replay"


def record_demo(demo_id, track, start):
    rec = run_rollout(scripted_driver(), track, start=start, t_cutoff=80)
    return demo_set_from_episodes(
        [(demo_id, rec.observations, rec.actions)], ACTION_NAMES)


backend = ReplayBackend.load(REPLAY)
track = generate_track(seed=0)

# Step 1: an instruction alone already yields a drivable agent; the
# generated structure carries its own initial weights.
agent = S.create_agent_from_instructions(
    "tutorial", ["follow the center line"], backend)
print(f"v{agent.version}: structured agent, {len(agent.weights.values)} weights")
print("summary:", agent.summary)

# Step 2: demonstrations. Each one retrains, bumping the version.
agent = S.add_demonstration(agent, record_demo("demo-1", track, StartConfig(0, 0.0, 0.0, 40.0)))
agent = S.add_demonstration(agent, record_demo("demo-2", track, StartConfig(150, 0.05, 0.0, 40.0)))
print(f"v{agent.version}: trained on {len(agent.demos)} demos, "
      f"weight hash {agent.weight_hash[:12]}")

# Step 3: trial rollouts on the teaching track count toward the gate.
for _ in range(4):
    agent, record = S.run_trial(agent, track, t_cutoff=250)
print(f"v{agent.version}: {agent.log.rollout_count(agent.version)} trials, "
      f"last score {record.eas:.1f}")

# Step 4: the robustness battery; a small spec keeps this quick.  The
# default spec sweeps ten unseen tracks, the edge starts, and both noise
# levels (518 cells).
spec = S.BatterySpec(seen_seed=0, unseen_seeds=(1,), noise_sigmas=(0.05,), t_cutoff=150)
agent = S.run_battery(agent, spec)
version, cells = agent.eval.rows[-1]
print(f"battery at v{version}: {len(cells)}/{len(agent.eval.columns)} cells, "
      f"mean score {sum(cells.values()) / len(cells):.1f}")

# Step 5: persist, reload, keep driving.  The directory holds the
# program, weights, instructions, demos, log, and evaluation matrix.
with tempfile.TemporaryDirectory() as scratch:
    home = Path(scratch) / "tutorial"
    S.persist(agent, home)
    print("saved:", sorted(p.name for p in home.iterdir()))
    back = S.load(home)
    assert back.weight_hash == agent.weight_hash

agent = S.mark_submitted(agent)
print(f"submitted at v{agent.version}; the session is now read-only")
