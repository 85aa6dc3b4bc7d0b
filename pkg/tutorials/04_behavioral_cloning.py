"""Clone a driver from its demonstrations, structured and dense.

Training is plain behavioral cloning: minimize mean squared action error
over demonstration frames with Adam on deterministic batches.  The same
trainer fits two very different parameter spaces: the handful of edge
weights in a structured policy, and a 58x80x3 dense network.  The dense
net fits the data tighter; the structured policy keeps its meaning.
"""

from steerlab.demos import demo_set_from_episodes
from steerlab.dense import DensePolicy
from steerlab.drivers import dense_driver, graph_driver, scripted_driver
from steerlab.observation import ACTION_NAMES
from steerlab.pgdl import compile_source
from steerlab.sim import StartConfig, run_rollout
from steerlab.track import generate_track
from steerlab.training import (
    DensePolicyAdapter,
    StructuredPolicyAdapter,
    TrainConfig,
    train,
)

# Record two demonstrations with the scripted driver: one from the grid,
# one from a slightly offset restart further around the loop.
track = generate_track(seed=0)
episodes = []
for i, start in enumerate((StartConfig(0, 0.0, 0.0, 40.0),
                           StartConfig(150, 0.05, 0.0, 40.0))):
    rec = run_rollout(scripted_driver(), track, start=start, t_cutoff=400)
    episodes.append((f"demo-{i}", rec.observations, rec.actions))
demos = demo_set_from_episodes(episodes, ACTION_NAMES)
print(f"dataset: {len(demos)} frames from {len(episodes)} demonstrations")

PROGRAM = """\
obs tile_x[8]
obs tile_theta[8]
obs speed
param tile_count = 8.0 frozen
param center_gain = 0.5
param bend_gain = -0.3
param cruise = 0.45
param pedal_gain = 0.5
param brake_gain = 0.5
node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node speed_error = cruise - speed
action steer = center_gain * off_center + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
"""

config = TrainConfig(seed=0)

policy = compile_source(PROGRAM)
adapter = StructuredPolicyAdapter(policy.structure, policy.weights)
report = train(adapter, demos, config)
print(f"structured: loss {report.losses[0]:.4f} -> {report.final_loss:.4f} "
      f"in {report.wall_time_s:.1f}s")
print("  learned weights:", [round(float(w), 3) for w in adapter.get_params()])

dense = DensePolicy.initialize(seed=0)
dense_adapter = DensePolicyAdapter(dense)
dense_report = train(dense_adapter, demos, config)
print(f"dense:      loss {dense_report.losses[0]:.4f} -> {dense_report.final_loss:.4f} "
      f"in {dense_report.wall_time_s:.1f}s")

# Both clones drive the teaching track; scores land near the teacher's.
teacher = run_rollout(scripted_driver(), track)
cloned = run_rollout(graph_driver(policy.structure, policy.weights), track)
dense_run = run_rollout(dense_driver(dense), track)
print(f"scores: teacher {teacher.eas:.1f}, structured clone {cloned.eas:.1f}, "
      f"dense clone {dense_run.eas:.1f}")
