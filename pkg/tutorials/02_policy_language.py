"""Write a policy as text, compile it, and read back its summary.

The policy language is the text form of a structured policy: observation
declarations, named parameters (optionally frozen), intermediate nodes,
and clipped actions.  The compiler turns a program into the same graph
objects the previous tutorial built by hand, so everything downstream
(evaluation, gradients, training) is shared.
"""

from steerlab.graph import evaluate, validate_structure
from steerlab.pgdl import check, compile_source, format_program, parse, render_summary

SOURCE = """\
obs tile_x[8]
obs speed

param tile_count = 8.0 frozen
param center_gain = 0.4
param cruise = 0.55

node off_center   =   tile_count*mean(tile_x)
node speed_error = cruise - speed

action steer = 0.0 - center_gain * off_center clip(-1.0, 1.0)
action accelerate = 2.0 * relu(speed_error) clip(0.0, 1.0)
action brake = 2.0 * relu(0.0 - speed_error) clip(0.0, 1.0)
"""

# The checker runs the full diagnostic pass without building anything.
for diag in check(parse(SOURCE).program):
    print("diagnostic:", diag)

policy = compile_source(SOURCE)
print("actions:", policy.action_names)
print("weights:", policy.weights.values.tolist())
print("frozen: ", policy.weights.frozen.tolist())
print("graph validation:", validate_structure(policy.structure) or "clean")

# The compiled graph is an ordinary structure; feed it observations.
obs = {"tile_x": [0.1] * 8, "speed": 0.3}
action, _ = evaluate(policy.structure, policy.weights, obs)
print("action at 0.3 speed, drifted right:", [round(float(a), 3) for a in action])

# The formatter produces the one canonical spelling of a program; running
# it twice changes nothing.
pretty = format_program(parse(SOURCE).program)
print("--- formatted ---")
print(pretty, end="")
assert format_program(parse(pretty).program) == pretty

# And every program can describe itself in plain words.
print("--- summary ---")
print(render_summary(parse(SOURCE).program))
