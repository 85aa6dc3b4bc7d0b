"""Turn plain-language instructions into a policy structure.

Restructuring asks a language model to design the policy program for the
current instruction set; the reply is parsed, compiled, and validated,
with one round of repair feedback if the first attempt fails.  This
script replays committed recordings, so it runs without any network or
credentials; swap in HttpBackend.from_env() to query a live endpoint.
"""

from pathlib import Path

from steerlab.restructure import ReplayBackend, restructure

REPLAY = Path(__file__).resolve().parent.parent / "fixtures" / "replay"

backend = ReplayBackend.load(REPLAY)

# A single instruction in, a full driving policy out.
result = restructure(["follow the center line"], backend)
print("--- generated program ---")
print(result.policy.source, end="")
print("--- summary ---")
print(result.summary)
print()

# Instructions compose: the speed rule conditions the target on the
# corner flags while the centering term stays.
combined = restructure(
    ["follow the center line", "slow down in front of curves"], backend)
print("with the speed instruction, weights become:")
print(" ", combined.policy.weights.values.tolist())
print()

# Every attempt is recorded: model, prompt digest, reply, timing.
two_stage = restructure(["hug the inside of corners"], backend)
print(f"corner request took {len(two_stage.transcripts)} attempts:")
for n, t in enumerate(two_stage.transcripts, start=1):
    print(f"  attempt {n}: model {t.model}, {len(t.response)} chars")
