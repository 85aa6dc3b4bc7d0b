"""Regenerate the recorded structure-generation fixtures.

Usage: python3 tools/make_replay_fixtures.py

Rewrites fixtures/replay/*.json by running the real generation loop against
the scripted responses below.  Each recording stores the exact outgoing
message list plus the response, and the replay backend keys on a digest of
those messages, so any change to the prompt assets invalidates every
recording.  That is deliberate (a stale fixture must fail loudly, not mask
prompt drift), and rerunning this script is the one-step repair.

Every scenario is verified before it is written: the loop must consume all
scripted responses, the compiled policy must drive a full lap on a few
generated tracks, and the program must check without warnings.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

from steerlab.drivers import graph_driver
from steerlab.pgdl import check, parse
from steerlab.restructure import restructure
from steerlab.sim import run_rollout
from steerlab.track import generate_track

OUT_DIR = Path(__file__).resolve().parents[1] / "fixtures" / "replay"

SMOKE_SEEDS = (0, 1, 2)


@dataclass
class Scenario:
    slug: str
    instructions: list[str]
    responses: list[str]  # consumed in order; all but the last may fail


class ScriptedBackend:
    """Feeds canned responses to the loop and records each exchange."""

    model = "recorded"
    settings = {"recorded": True}

    def __init__(self, responses):
        self.queue = list(responses)
        self.recorded = []

    def complete(self, messages):
        if not self.queue:
            raise AssertionError("loop asked for more responses than scripted")
        response = self.queue.pop(0)
        self.recorded.append((list(messages), response))
        return response


# ---------------------------------------------------------------------------
# Scripted responses.  Each follows the four-section format the system
# prompt demands; a few carry leading or trailing prose on purpose, since
# the parser must tolerate it.

RESPONSE_STAY_ON_ROAD = """\
[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): how far the car sits from the center line, recovered from the tile lateral offsets
 * road_bend (scalar, latent): which way the road ahead curves
 * near_edge (scalar, latent): how far beyond the road edge the car has drifted
 * target_speed (scalar, latent): desired speed, reduced when near the edge
 * speed_error (scalar, latent): gap between target and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
The policy keeps the car on the road by steering toward the center line and slowing down whenever it drifts near the edge. The average lateral offset of the tiles ahead measures how far the car is from the center, and the average relative heading measures which way the road bends. Steering chases the center with a correction for the bend. The same lateral measure feeds the speed controller: when its magnitude passes the road edge, the target speed drops below the cruising value, and the throttle and brake close the gap between the target and the current speed.

[Connections]
 * off_center (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(tile_x); the frozen tile count undoes the averaging so the scale matches a single tile offset
    - no bias term because a centered car should read zero
 * road_bend (scalar, latent)
    - depends on tile_theta (positively correlated)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * near_edge (scalar, latent)
    - depends on off_center (positively correlated through its magnitude)
    - can be computed as relu(abs(off_center) - tile_count * road_edge), zero while the car stays inside the road
 * target_speed (scalar, latent)
    - depends on near_edge (negatively correlated)
    - can be computed as cruise - edge_caution * near_edge
 * speed_error (scalar, latent)
    - depends on target_speed (positively correlated), speed (negatively correlated)
    - can be computed as target_speed - speed, no bias term
 * steer (scalar, action)
    - depends on off_center (positively correlated), road_bend (negatively correlated)
    - linear combination center_gain * off_center + bend_gain * road_bend, no bias term
 * accelerate (scalar, action)
    - depends on speed_error (positively correlated)
    - can be computed as tile_count * pedal_gain * relu(speed_error), one-sided so it never fights the brake
 * brake (scalar, action)
    - depends on speed_error (negatively correlated)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs speed

param tile_count = 8.0 frozen
param road_edge = 0.2 frozen
param center_gain = 0.5
param bend_gain = -0.3
param cruise = 0.45
param edge_caution = 0.4
param pedal_gain = 0.5
param brake_gain = 0.5

node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node near_edge = relu(abs(off_center) - tile_count * road_edge)
node target_speed = cruise - edge_caution * near_edge
node speed_error = target_speed - speed

action steer = center_gain * off_center + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
```
"""

RESPONSE_CENTER_LINE = """\
[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): distance from the center line
 * road_bend (scalar, latent): signed curvature of the road ahead
 * speed_error (scalar, latent): gap between cruise and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
The policy tracks the center line. The averaged lateral offsets of the tiles ahead measure how far the car sits from the center, and steering chases that measure back to zero with a correction for the bend of the road so the car turns into curves instead of overshooting them. Speed control holds a single cruising speed with one-sided throttle and brake terms.

[Connections]
 * off_center (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(tile_x); the frozen tile count undoes the averaging so the scale matches a single tile offset
    - no bias term because a centered car should read zero
 * road_bend (scalar, latent)
    - depends on tile_theta (positively correlated)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * speed_error (scalar, latent)
    - depends on speed (negatively correlated)
    - can be computed as cruise - speed
 * steer (scalar, action)
    - depends on off_center (positively correlated), road_bend (negatively correlated)
    - linear combination center_gain * off_center + bend_gain * road_bend, no bias term
 * accelerate (scalar, action)
    - depends on speed_error (positively correlated)
    - can be computed as tile_count * pedal_gain * relu(speed_error), one-sided so it never fights the brake
 * brake (scalar, action)
    - depends on speed_error (negatively correlated)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
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
```
"""

RESPONSE_CENTER_SLOW = """\
Here is the plan for a policy that follows the center line and slows down
ahead of curves.

[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * tile_border (vector of 8, observed): sharp-corner flags for the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): distance from the center line
 * road_bend (scalar, latent): signed curvature of the road ahead
 * curve_ahead (scalar, latent): unsigned curvature of the road ahead
 * corner_share (scalar, latent): fraction of upcoming tiles flagged as sharp corners
 * target_speed (scalar, latent): cruising speed reduced by upcoming curvature, floored at a crawl
 * speed_error (scalar, latent): gap between target and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
Steering pulls the car toward the center line: the averaged tile offsets give the distance from the center, and the averaged relative headings give the bend, which steers with the opposite sign so the car turns into the curve. Speed control follows the second instruction: the unsigned curvature of the window ahead and the share of sharp-corner tiles both lower the target speed below the cruising value, with a floor so the car never stalls mid-corner, and the pedals close the gap between target and current speed.

[Connections]
 * off_center (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(tile_x); the frozen tile count restores single-tile scale
    - no bias term because a centered car should read zero
 * road_bend (scalar, latent)
    - depends on tile_theta (positively correlated)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * curve_ahead (scalar, latent)
    - depends on tile_theta (positively correlated through magnitude)
    - can be computed as tile_count * mean(abs(tile_theta))
 * corner_share (scalar, latent)
    - depends on tile_border (positively correlated)
    - can be computed as mean(tile_border), already in [0, 1]
 * target_speed (scalar, latent)
    - depends on curve_ahead (negatively correlated), corner_share (negatively correlated)
    - can be computed as max(cruise - curve_caution * curve_ahead - corner_caution * corner_share, crawl_speed)
 * speed_error (scalar, latent)
    - depends on target_speed (positively correlated), speed (negatively correlated)
    - can be computed as target_speed - speed
 * steer (scalar, action)
    - depends on off_center (positively correlated), road_bend (negatively correlated)
    - linear combination center_gain * off_center + bend_gain * road_bend, no bias term
 * accelerate (scalar, action)
    - depends on speed_error (positively correlated)
    - can be computed as tile_count * pedal_gain * relu(speed_error)
 * brake (scalar, action)
    - depends on speed_error (negatively correlated)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs tile_border[8]
obs speed

param tile_count = 8.0 frozen
param center_gain = 0.5
param bend_gain = -0.3
param cruise = 0.5
param curve_caution = 0.4
param corner_caution = 0.2
param crawl_speed = 0.2 frozen
param pedal_gain = 0.5
param brake_gain = 0.5

node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node curve_ahead = tile_count * mean(abs(tile_theta))
node corner_share = mean(tile_border)
node target_speed = max(cruise - curve_caution * curve_ahead - corner_caution * corner_share, crawl_speed)
node speed_error = target_speed - speed

action steer = center_gain * off_center + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
```
"""

RESPONSE_SLOW_CURVES = """\
[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * tile_border (vector of 8, observed): sharp-corner flags for the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): distance from the center line
 * road_bend (scalar, latent): signed curvature of the road ahead
 * curve_ahead (scalar, latent): unsigned curvature of the road ahead
 * corner_share (scalar, latent): fraction of upcoming tiles flagged as sharp corners
 * base_target (scalar, latent): cruise speed trimmed by curvature, floored at a crawl
 * target_speed (scalar, latent): the corner speed when a sharp corner is in sight, the trimmed cruise otherwise
 * speed_error (scalar, latent): gap between target and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
Slowing down in front of curves is a speed rule, so the policy builds its target speed from two look-ahead signals. The unsigned curvature of the tile window trims the cruising speed continuously, with a crawl floor so the car never stalls, and the sharp-corner flags switch the target to a dedicated corner speed the moment a flagged tile enters the window. Braking then falls out of the gap between the target and the current speed before the curve starts, and the throttle restores cruise on the way out. Steering stays a plain center-chasing rule with a bend correction.

[Connections]
 * off_center (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(tile_x), no bias term
 * road_bend (scalar, latent)
    - depends on tile_theta (positively correlated)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * curve_ahead (scalar, latent)
    - depends on tile_theta (positively correlated through magnitude)
    - can be computed as tile_count * mean(abs(tile_theta))
 * corner_share (scalar, latent)
    - depends on tile_border (positively correlated)
    - can be computed as mean(tile_border), already in [0, 1]
 * base_target (scalar, latent)
    - depends on curve_ahead (negatively correlated)
    - can be computed as max(cruise - curve_caution * curve_ahead, crawl_speed)
 * target_speed (scalar, latent)
    - depends on corner_share (negatively correlated), base_target
    - can be computed using `select` on corner_share - corner_trigger: corner_speed when positive, base_target otherwise
 * speed_error (scalar, latent)
    - can be computed as target_speed - speed
 * steer (scalar, action)
    - depends on off_center (positively correlated), road_bend (negatively correlated)
    - linear combination center_gain * off_center + bend_gain * road_bend, no bias term
 * accelerate (scalar, action)
    - depends on speed_error (positively correlated)
    - can be computed as tile_count * pedal_gain * relu(speed_error)
 * brake (scalar, action)
    - depends on speed_error (negatively correlated)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs tile_border[8]
obs speed

param tile_count = 8.0 frozen
param center_gain = 0.5
param bend_gain = -0.3
param cruise = 0.5
param curve_caution = 0.4
param corner_speed = 0.25
param corner_trigger = 0.1 frozen
param crawl_speed = 0.2 frozen
param pedal_gain = 0.5
param brake_gain = 0.5

node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node curve_ahead = tile_count * mean(abs(tile_theta))
node corner_share = mean(tile_border)
node base_target = max(cruise - curve_caution * curve_ahead, crawl_speed)
node target_speed = select(corner_share - corner_trigger, corner_speed, base_target)
node speed_error = target_speed - speed

action steer = center_gain * off_center + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
```
"""

RESPONSE_GREY_TRACK = """\
[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): how far the car sits from the center of the track
 * road_bend (scalar, latent): signed curvature of the track ahead
 * outside_margin (scalar, latent): how far past the track edge the car has drifted
 * speed_error (scalar, latent): gap between cruise and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
Staying within the track means keeping the lateral offset small, so steering chases the center of the track with a correction for the bend ahead. As a second line of defense the policy measures how far the car has drifted past the track edge; that margin is zero anywhere inside the track and grows linearly outside it, and it feeds straight into the brake so the car sheds speed whenever it is about to leave the grey surface.

[Connections]
 * off_center (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(tile_x); the frozen tile count undoes the averaging
    - no bias term because a centered car should read zero
 * road_bend (scalar, latent)
    - depends on tile_theta (positively correlated)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * outside_margin (scalar, latent)
    - depends on off_center (positively correlated through its magnitude)
    - can be computed as relu(abs(off_center) - track_edge), zero while the car stays inside the track
 * speed_error (scalar, latent)
    - depends on speed (negatively correlated)
    - can be computed as cruise - speed
 * steer (scalar, action)
    - depends on off_center (positively correlated), road_bend (negatively correlated)
    - linear combination center_gain * off_center + bend_gain * road_bend, no bias term
 * accelerate (scalar, action)
    - depends on speed_error (positively correlated)
    - can be computed as tile_count * pedal_gain * relu(speed_error)
 * brake (scalar, action)
    - depends on speed_error (negatively correlated), outside_margin (positively correlated)
    - can be computed as tile_count * brake_gain * relu(-speed_error) + edge_brake * outside_margin

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs speed

param tile_count = 8.0 frozen
param track_edge = 0.2 frozen
param center_gain = 0.5
param bend_gain = -0.3
param cruise = 0.45
param edge_brake = 0.5
param pedal_gain = 0.5
param brake_gain = 0.5

node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node outside_margin = relu(abs(off_center) - track_edge)
node speed_error = cruise - speed

action steer = center_gain * off_center + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) + edge_brake * outside_margin clip(0.0, 1.0)
```
"""

RESPONSE_DESIRED_SPEED = """\
[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): distance from the center line
 * road_bend (scalar, latent): signed curvature of the road ahead
 * speed_error (scalar, latent): gap between the desired speed and the current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
The instruction fixes the speed: 70 on the 0 to 100 scale is 0.7 after normalization, so the desired speed is declared as a frozen parameter at 0.7 rather than something training should move. The throttle opens in proportion to how far the car is below that setpoint and the brake engages in proportion to how far it is above, which regulates the car at the requested speed. Steering is not constrained by the instruction, so it keeps a standard center-chasing rule with a bend correction to hold the road at that pace.

[Connections]
 * off_center (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(tile_x), no bias term
 * road_bend (scalar, latent)
    - depends on tile_theta (positively correlated)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * speed_error (scalar, latent)
    - depends on speed (negatively correlated)
    - can be computed as desired_speed - speed; desired_speed is frozen at 0.7 because the user named the value
 * steer (scalar, action)
    - depends on off_center (positively correlated), road_bend (negatively correlated)
    - linear combination center_gain * off_center + bend_gain * road_bend, no bias term
 * accelerate (scalar, action)
    - depends on speed_error (positively correlated)
    - can be computed as tile_count * pedal_gain * relu(speed_error)
 * brake (scalar, action)
    - depends on speed_error (negatively correlated)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs speed

param tile_count = 8.0 frozen
param desired_speed = 0.7 frozen
param center_gain = 0.5
param bend_gain = -0.3
param pedal_gain = 0.5
param brake_gain = 0.5

node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node speed_error = desired_speed - speed

action steer = center_gain * off_center + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
```
"""

RESPONSE_VERBOSE_MIDDLE = """\
[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_middle (scalar, latent): how far the car sits from the middle of the road
 * road_bend (scalar, latent): signed curvature of the road ahead
 * near_grass (scalar, latent): how far the car has drifted past the safe margin toward the grass
 * target_speed (scalar, latent): cruise speed, reduced while near the grass
 * speed_error (scalar, latent): gap between target and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
The instructions ask for the middle of the road at all times, turning included, so the lateral target is always the middle: steering chases the averaged tile offset back to zero and the bend correction only rotates the car through the curve, it never shifts the aimed-for line toward the inside. Because the road is surrounded by grass, the policy also watches how close it has drifted to the edge; past a safe margin the target speed drops below cruise, which slows the car until it has worked its way back to the middle.

[Connections]
 * off_middle (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(tile_x); the frozen tile count undoes the averaging
    - no bias term so the rule always aims at the exact middle
 * road_bend (scalar, latent)
    - depends on tile_theta (positively correlated)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * near_grass (scalar, latent)
    - depends on off_middle (positively correlated through its magnitude)
    - can be computed as relu(abs(off_middle) - grass_margin), zero while safely in the middle
 * target_speed (scalar, latent)
    - depends on near_grass (negatively correlated)
    - can be computed as cruise - caution * near_grass
 * speed_error (scalar, latent)
    - can be computed as target_speed - speed
 * steer (scalar, action)
    - depends on off_middle (positively correlated), road_bend (negatively correlated)
    - linear combination middle_gain * off_middle + bend_gain * road_bend; the bend gain is kept small so centering dominates, as asked
 * accelerate (scalar, action)
    - depends on speed_error (positively correlated)
    - can be computed as tile_count * pedal_gain * relu(speed_error)
 * brake (scalar, action)
    - depends on speed_error (negatively correlated)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs speed

param tile_count = 8.0 frozen
param grass_margin = 0.2 frozen
param middle_gain = 0.5
param bend_gain = -0.2
param caution = 0.4
param cruise = 0.45
param pedal_gain = 0.5
param brake_gain = 0.5

node off_middle = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node near_grass = relu(abs(off_middle) - grass_margin)
node target_speed = cruise - caution * near_grass
node speed_error = target_speed - speed

action steer = middle_gain * off_middle + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
```
"""

RESPONSE_FAST = """\
[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): distance from the center line
 * road_bend (scalar, latent): signed curvature ahead
 * bend_strength (scalar, latent): unsigned curvature ahead
 * target_speed (scalar, latent): top speed reduced by upcoming curvature
 * speed_error (scalar, latent): gap between target and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
The policy drives as fast as the road allows. It holds full throttle whenever the car is below the target speed and brakes hard once the car overshoots it by a margin. The target starts from a learned top speed and is reduced by the strength of the curvature ahead, since corners are the only reason to slow down. Steering keeps the racing line with a strong centering term and an equally strong bend correction so the car can carry speed through curves.

[Connections]
 * off_center (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(tile_x), no bias term
 * road_bend (scalar, latent)
    - depends on tile_theta (positively correlated)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * bend_strength (scalar, latent)
    - depends on tile_theta (positively correlated through magnitude)
    - can be computed as tile_count * mean(abs(tile_theta))
 * target_speed (scalar, latent)
    - depends on bend_strength (negatively correlated)
    - can be computed as top_speed - bend_brake * bend_strength
 * speed_error (scalar, latent)
    - can be computed as target_speed - speed
 * steer (scalar, action)
    - depends on off_center (positively correlated), road_bend (negatively correlated)
    - linear combination center_gain * off_center + bend_gain * road_bend
 * accelerate (scalar, action)
    - depends on speed_error (positively correlated)
    - can be computed using `select` on speed_error: full throttle below target, none above
 * brake (scalar, action)
    - depends on speed_error (negatively correlated)
    - can be computed using `select` on -speed_error - brake_deadband: full brake only well past the target

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs speed

param tile_count = 8.0 frozen
param center_gain = 0.5
param bend_gain = -0.5
param top_speed = 0.5
param bend_brake = 0.5
param brake_deadband = 0.1 frozen

node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node bend_strength = tile_count * mean(abs(tile_theta))
node target_speed = top_speed - bend_brake * bend_strength
node speed_error = target_speed - speed

action steer = center_gain * off_center + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = select(speed_error, 1.0, 0.0) clip(0.0, 1.0)
action brake = select(-speed_error - brake_deadband, 1.0, 0.0) clip(0.0, 1.0)
```

The bang-bang pedals trade smoothness for pace; the learned top_speed and
bend_brake still let training move the speed profile.
"""

RESPONSE_CORNERS = """\
[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * tile_border (vector of 8, observed): sharp-corner flags for the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): distance from the center line
 * road_bend (scalar, latent): signed curvature ahead
 * corner_ahead (scalar, latent): share of upcoming tiles flagged as sharp corners
 * target_speed (scalar, latent): cruise speed, or the corner speed when a sharp corner is in sight
 * speed_error (scalar, latent): gap between target and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
The policy watches the sharp-corner flags in the tile window ahead. As soon as any flagged tile enters the window the target speed switches from the cruising value to a lower corner speed, which makes the car brake before the corner; once the last flagged tile leaves the window the target switches back and the car accelerates out. Steering is the usual center-chasing rule with a bend correction.

[Connections]
 * off_center (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(tile_x), no bias term
 * road_bend (scalar, latent)
    - depends on tile_theta (positively correlated)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * corner_ahead (scalar, latent)
    - depends on tile_border (positively correlated)
    - can be computed as mean(tile_border); any flagged tile makes it at least one eighth
 * target_speed (scalar, latent)
    - depends on corner_ahead (negatively correlated)
    - can be computed using `select` on corner_ahead - corner_trigger: corner_speed when positive, cruise otherwise
 * speed_error (scalar, latent)
    - can be computed as target_speed - speed
 * steer (scalar, action)
    - linear combination center_gain * off_center + bend_gain * road_bend
 * accelerate (scalar, action)
    - depends on speed_error (positively correlated)
    - can be computed as tile_count * pedal_gain * relu(speed_error)
 * brake (scalar, action)
    - depends on speed_error (negatively correlated)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs tile_border[8]
obs speed

param tile_count = 8.0 frozen
param center_gain = 0.5
param bend_gain = -0.3
param cruise = 0.5
param corner_speed = 0.3
param corner_trigger = 0.1 frozen
param pedal_gain = 0.5
param brake_gain = 0.5

node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node corner_ahead = mean(tile_border)
node target_speed = select(corner_ahead - corner_trigger, corner_speed, cruise)
node speed_error = target_speed - speed

action steer = center_gain * off_center + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
```
"""

RESPONSE_STRAIGHT = """\
[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * speed (scalar, observed): normalized speed
 * near_weights (vector of 8, latent): fixed emphasis on the nearest tiles
 * misalignment (scalar, latent): heading error against the road, weighted toward the nearest tiles
 * off_center (scalar, latent): distance from the center line
 * road_bend (scalar, latent): signed curvature ahead
 * bend_strength (scalar, latent): unsigned curvature ahead
 * is_straight (scalar, latent): positive while the road ahead is straight
 * straight_steer (scalar, latent): steering used on straight road
 * curve_steer (scalar, latent): steering used in bends
 * speed_error (scalar, latent): gap between cruise and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
The instruction is about straight road, so the policy first decides whether the road ahead is straight by testing the unsigned curvature of the tile window against a small threshold. On straight road, steering is dominated by the car's own misalignment: a fixed weight vector emphasizes the headings of the nearest tiles, and steering works that weighted heading error back to zero, with a centering term so the car does not drift sideways while holding itself straight. In bends the policy falls back to the ordinary center-chasing rule with a bend correction. Speed control holds a cruising speed throughout.

[Connections]
 * near_weights (vector of 8, latent)
    - fixed emphasis profile built with `stack`, using only 1, 0.5, and 0 so nearer tiles dominate
 * misalignment (scalar, latent)
    - depends on tile_theta (positively correlated), near_weights
    - can be computed as tile_count * mean(near_weights * tile_theta); the elementwise product applies the emphasis before averaging
 * off_center (scalar, latent)
    - can be computed as tile_count * mean(tile_x), no bias term
 * road_bend (scalar, latent)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * bend_strength (scalar, latent)
    - depends on tile_theta (positively correlated through magnitude)
    - can be computed as tile_count * mean(abs(tile_theta))
 * is_straight (scalar, latent)
    - depends on bend_strength (negatively correlated)
    - can be computed as straight_limit - bend_strength, positive only on straight road
 * straight_steer (scalar, latent)
    - depends on misalignment (negatively correlated), off_center (positively correlated)
    - linear combination align_gain * misalignment + center_gain * off_center with align_gain negative
 * curve_steer (scalar, latent)
    - linear combination center_gain * off_center + bend_gain * road_bend
 * speed_error (scalar, latent)
    - can be computed as cruise - speed
 * steer (scalar, action)
    - can be computed using `select` on is_straight: straight_steer on straight road, curve_steer in bends
 * accelerate (scalar, action)
    - can be computed as tile_count * pedal_gain * relu(speed_error)
 * brake (scalar, action)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs speed

param tile_count = 8.0 frozen
param straight_limit = 0.1 frozen
param align_gain = -0.5
param center_gain = 0.5
param bend_gain = -0.3
param cruise = 0.5
param pedal_gain = 0.5
param brake_gain = 0.5

node near_weights = stack(1.0, 1.0, 1.0, 0.5, 0.5, 0.0, 0.0, 0.0)
node misalignment = tile_count * mean(near_weights * tile_theta)
node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node bend_strength = tile_count * mean(abs(tile_theta))
node is_straight = straight_limit - bend_strength
node straight_steer = align_gain * misalignment + center_gain * off_center
node curve_steer = center_gain * off_center + bend_gain * road_bend
node speed_error = cruise - speed

action steer = select(is_straight, straight_steer, curve_steer) clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
```
"""

RESPONSE_TURN_CORNER = """\
The instruction is short, so it is read as: take corners dependably, slowing
for them and steering firmly through them.

[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * tile_border (vector of 8, observed): sharp-corner flags for the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): distance from the center line
 * road_bend (scalar, latent): signed curvature ahead
 * corner_ahead (scalar, latent): share of upcoming tiles flagged as sharp corners
 * in_corner (scalar, latent): positive while a sharp corner is in the window
 * target_speed (scalar, latent): cruise speed, or the corner speed when a corner is in sight
 * speed_error (scalar, latent): gap between target and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
Turning a corner needs two things: enough steering to follow the bend and little enough speed to hold the line. Steering keeps the centering term and uses a strong bend correction so the car commits to the turn. The sharp-corner flags in the window drive the speed side: while any corner is in sight the target speed switches from cruise down to a corner speed, which brakes the car into the turn and lets it accelerate away once the corner clears the window.

[Connections]
 * off_center (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(tile_x), no bias term
 * road_bend (scalar, latent)
    - depends on tile_theta (positively correlated)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * corner_ahead (scalar, latent)
    - depends on tile_border (positively correlated)
    - can be computed as mean(tile_border)
 * in_corner (scalar, latent)
    - depends on corner_ahead (positively correlated)
    - can be computed as corner_ahead - corner_trigger
 * target_speed (scalar, latent)
    - depends on in_corner (negatively correlated)
    - can be computed using `select` on in_corner: corner_slow when positive, cruise otherwise
 * speed_error (scalar, latent)
    - can be computed as target_speed - speed
 * steer (scalar, action)
    - depends on off_center (positively correlated), road_bend (negatively correlated)
    - linear combination center_gain * off_center + turn_gain * road_bend with a strong turn gain
 * accelerate (scalar, action)
    - can be computed as tile_count * pedal_gain * relu(speed_error)
 * brake (scalar, action)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs tile_border[8]
obs speed

param tile_count = 8.0 frozen
param center_gain = 0.5
param turn_gain = -0.5
param cruise = 0.45
param corner_slow = 0.3
param corner_trigger = 0.1 frozen
param pedal_gain = 0.5
param brake_gain = 0.5

node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node corner_ahead = mean(tile_border)
node in_corner = corner_ahead - corner_trigger
node target_speed = select(in_corner, corner_slow, cruise)
node speed_error = target_speed - speed

action steer = center_gain * off_center + turn_gain * road_bend clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
```
"""

RESPONSE_RECOVER = """\
[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * speed (scalar, observed): normalized speed
 * first_tile (vector of 8, latent): fixed mask selecting the nearest tile
 * nearest_x (scalar, latent): lateral offset at the nearest tile
 * off_track (scalar, latent): how far beyond the road edge the car sits; positive means off the road
 * off_center (scalar, latent): average distance from the center line
 * road_bend (scalar, latent): signed curvature ahead
 * normal_steer (scalar, latent): steering used while on the road
 * recovery_steer (scalar, latent): stronger steering used while off the road
 * target_speed (scalar, latent): cruise speed on the road, recovery speed off it
 * speed_error (scalar, latent): gap between target and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
The policy runs two regimes and switches between them with the off-track test. The nearest tile's lateral offset, recovered with a fixed selection mask, tells how far the car is from the center right now; when its magnitude passes the road edge the car is on grass. On the road, steering chases the center line with a bend correction and the car holds its cruise speed. Off the road, a stronger steering rule pulls straight back toward the center and the target speed drops to a slow recovery speed until the car is inside the edges again.

[Connections]
 * first_tile (vector of 8, latent)
    - fixed mask built with `stack`: 1 for the nearest tile, 0 elsewhere
 * nearest_x (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(first_tile * tile_x); the mask zeroes every other tile and the tile count undoes the averaging
 * off_track (scalar, latent)
    - depends on nearest_x (positively correlated through magnitude)
    - can be computed as abs(nearest_x) - road_edge, positive only beyond the edge
 * off_center (scalar, latent)
    - can be computed as tile_count * mean(tile_x)
 * road_bend (scalar, latent)
    - can be computed as tile_count * mean(tile_theta)
 * normal_steer (scalar, latent)
    - linear combination center_gain * off_center + bend_gain * road_bend
 * recovery_steer (scalar, latent)
    - depends on nearest_x (positively correlated)
    - can be computed as tile_count * recovery_gain * nearest_x, a hard pull toward the center
 * target_speed (scalar, latent)
    - can be computed using `select` on off_track: recovery_speed when off the road, cruise otherwise
 * speed_error (scalar, latent)
    - can be computed as target_speed - speed
 * steer (scalar, action)
    - can be computed using `select` on off_track: recovery_steer when off the road, normal_steer otherwise
 * accelerate (scalar, action)
    - can be computed as tile_count * pedal_gain * relu(speed_error)
 * brake (scalar, action)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs speed

param tile_count = 8.0 frozen
param road_edge = 0.2 frozen
param center_gain = 0.5
param bend_gain = -0.3
param recovery_gain = 0.5
param cruise = 0.5
param recovery_speed = 0.2
param pedal_gain = 0.5
param brake_gain = 0.5

node first_tile = stack(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
node nearest_x = tile_count * mean(first_tile * tile_x)
node off_track = abs(nearest_x) - road_edge
node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node normal_steer = center_gain * off_center + bend_gain * road_bend
node recovery_steer = tile_count * recovery_gain * nearest_x
node target_speed = select(off_track, recovery_speed, cruise)
node speed_error = target_speed - speed

action steer = select(off_track, recovery_steer, normal_steer) clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
```
"""

RESPONSE_BOOTSTRAP = """\
No user instructions were given, so this policy encodes standard defensive
driving: follow the center of the road, slow down for curves and sharp
corners, and otherwise hold a moderate cruising speed.

[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * tile_border (vector of 8, observed): sharp-corner flags for the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): distance from the center line
 * road_bend (scalar, latent): signed curvature ahead
 * bend_strength (scalar, latent): unsigned curvature ahead
 * corner_ahead (scalar, latent): share of upcoming tiles flagged as sharp corners
 * target_speed (scalar, latent): cruise speed reduced by curvature and corners
 * speed_error (scalar, latent): gap between target and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
Steering chases the center of the road: the averaged lateral offsets of the tiles ahead pull the car back over the center line, and the averaged relative heading counter-steers into bends. The target speed starts from a cruising value and is lowered by both the unsigned curvature ahead and the share of sharp-corner tiles, so the car slows before demanding stretches without any explicit instruction to do so. The throttle switches fully on below the target speed, and the brake engages once the car overshoots the target by a small margin.

[Connections]
 * off_center (scalar, latent)
    - depends on tile_x (positively correlated)
    - can be computed as tile_count * mean(tile_x); the frozen tile count undoes the averaging
    - no bias term because a centered car should read zero
 * road_bend (scalar, latent)
    - depends on tile_theta (positively correlated)
    - can be computed as tile_count * mean(tile_theta), no bias term
 * bend_strength (scalar, latent)
    - depends on tile_theta (positively correlated through magnitude)
    - can be computed as mean(abs(tile_theta))
 * corner_ahead (scalar, latent)
    - depends on tile_border (positively correlated)
    - can be computed as mean(tile_border)
 * target_speed (scalar, latent)
    - depends on bend_strength (negatively correlated), corner_ahead (negatively correlated)
    - linear combination cruise - bend_caution * bend_strength - corner_caution * corner_ahead
 * speed_error (scalar, latent)
    - can be computed as target_speed - speed
 * steer (scalar, action)
    - depends on off_center (positively correlated), road_bend (negatively correlated)
    - linear combination center_gain * off_center + bend_gain * road_bend, no bias term
 * accelerate (scalar, action)
    - depends on speed_error (positively correlated)
    - can be computed using `select` on speed_error: full throttle below target, none above
 * brake (scalar, action)
    - depends on speed_error (negatively correlated)
    - can be computed using `select` on -speed_error - brake_deadband with a moderate braking strength

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs tile_border[8]
obs speed

param tile_count = 8.0 frozen
param center_gain = 0.5
param bend_gain = -0.3
param cruise = 0.5
param bend_caution = 0.4
param corner_caution = 0.2
param pedal_gain = 0.5
param brake_deadband = 0.05 frozen

node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node bend_strength = mean(abs(tile_theta))
node corner_ahead = mean(tile_border)
node target_speed = cruise - bend_caution * bend_strength - corner_caution * corner_ahead
node speed_error = target_speed - speed

action steer = center_gain * off_center + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = select(speed_error, 1.0, 0.0) clip(0.0, 1.0)
action brake = select(-speed_error - brake_deadband, pedal_gain, 0.0) clip(0.0, 1.0)
```
"""

RESPONSE_HUG_BROKEN = """\
[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): distance from the center line
 * road_bend (scalar, latent): signed curvature ahead
 * bend_strength (scalar, latent): unsigned curvature ahead
 * speed_now (scalar, latent): smoothed current speed
 * inside_line (scalar, latent): lateral target shifted toward the inside of the bend
 * target_speed (scalar, latent): cruise speed reduced by curvature
 * speed_error (scalar, latent): gap between target and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
To hug the inside of corners the policy shifts its lateral target toward the inside of the bend instead of holding the exact center line. The signed curvature ahead gives the bend direction, and a small fraction of it becomes the lateral target, so in a left-hand bend the car aims left of center and mirror-wise for right-hand bends. Steering chases that shifted target with the usual bend correction, and the speed controller trims the cruise speed by the strength of the curvature.

[Connections]
 * off_center (scalar, latent)
    - can be computed as tile_count * mean(tile_x)
 * road_bend (scalar, latent)
    - can be computed as tile_count * mean(tile_theta)
 * bend_strength (scalar, latent)
    - can be computed as mean(abs(tile_theta))
 * speed_now (scalar, latent)
    - can be computed as mean(speed) to smooth the reading
 * inside_line (scalar, latent)
    - depends on road_bend (positively correlated)
    - can be computed as cut_gain * road_bend
 * target_speed (scalar, latent)
    - can be computed as cruise - bend_caution * bend_strength
 * speed_error (scalar, latent)
    - can be computed as target_speed - speed_now
 * steer (scalar, action)
    - depends on off_center (positively correlated), inside_line (negatively correlated), road_bend (negatively correlated)
    - can be computed as center_gain * (off_center - inside_line) + bend_gain * road_bend
 * accelerate (scalar, action)
    - can be computed as tile_count * pedal_gain * relu(speed_error)
 * brake (scalar, action)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs speed

param tile_count = 8.0 frozen
param center_gain = 0.5
param bend_gain = -0.3
param cut_gain = 0.3
param cruise = 0.45
param bend_caution = 0.4
param pedal_gain = 0.5
param brake_gain = 0.5

node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node bend_strength = mean(abs(tile_theta))
node speed_now = mean(speed)
node inside_line = cut_gain * road_bend
node target_speed = cruise - bend_caution * bend_strength
node speed_error = target_speed - speed_now

action steer = center_gain * (off_center - inside_line) + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
```
"""

RESPONSE_HUG_FIXED = """\
The error was applying `mean` to the scalar speed input; speed needs no
smoothing, so the fix drops that node and uses speed directly.

[Variables]
 * tile_x (vector of 8, observed): lateral offsets of the tiles ahead
 * tile_theta (vector of 8, observed): relative headings of the tiles ahead
 * speed (scalar, observed): normalized speed
 * off_center (scalar, latent): distance from the center line
 * road_bend (scalar, latent): signed curvature ahead
 * bend_strength (scalar, latent): unsigned curvature ahead
 * inside_line (scalar, latent): lateral target shifted toward the inside of the bend
 * target_speed (scalar, latent): cruise speed reduced by curvature
 * speed_error (scalar, latent): gap between target and current speed
 * steer (scalar, action): steering command
 * accelerate (scalar, action): throttle command
 * brake (scalar, action): brake command

[Structure Description]
To hug the inside of corners the policy shifts its lateral target toward the inside of the bend instead of holding the exact center line. The signed curvature ahead gives the bend direction, and a small fraction of it becomes the lateral target, so in a left-hand bend the car aims left of center and mirror-wise for right-hand bends. Steering chases that shifted target with the usual bend correction, and the speed controller trims the cruise speed by the strength of the curvature.

[Connections]
 * off_center (scalar, latent)
    - can be computed as tile_count * mean(tile_x)
 * road_bend (scalar, latent)
    - can be computed as tile_count * mean(tile_theta)
 * bend_strength (scalar, latent)
    - can be computed as mean(abs(tile_theta))
 * inside_line (scalar, latent)
    - depends on road_bend (positively correlated)
    - can be computed as cut_gain * road_bend
 * target_speed (scalar, latent)
    - can be computed as cruise - bend_caution * bend_strength
 * speed_error (scalar, latent)
    - can be computed as target_speed - speed
 * steer (scalar, action)
    - depends on off_center (positively correlated), inside_line (negatively correlated), road_bend (negatively correlated)
    - can be computed as center_gain * (off_center - inside_line) + bend_gain * road_bend
 * accelerate (scalar, action)
    - can be computed as tile_count * pedal_gain * relu(speed_error)
 * brake (scalar, action)
    - can be computed as tile_count * brake_gain * relu(-speed_error)

[Code]
```pgdl
obs tile_x[8]
obs tile_theta[8]
obs speed

param tile_count = 8.0 frozen
param center_gain = 0.5
param bend_gain = -0.3
param cut_gain = 0.3
param cruise = 0.45
param bend_caution = 0.4
param pedal_gain = 0.5
param brake_gain = 0.5

node off_center = tile_count * mean(tile_x)
node road_bend = tile_count * mean(tile_theta)
node bend_strength = mean(abs(tile_theta))
node inside_line = cut_gain * road_bend
node target_speed = cruise - bend_caution * bend_strength
node speed_error = target_speed - speed

action steer = center_gain * (off_center - inside_line) + bend_gain * road_bend clip(-1.0, 1.0)
action accelerate = tile_count * pedal_gain * relu(speed_error) clip(0.0, 1.0)
action brake = tile_count * brake_gain * relu(-speed_error) clip(0.0, 1.0)
```
"""


# The grey-track, desired-speed, verbose-middle, fast, straight, and
# turn-corner scenarios keep one instruction set each and differ only in how
# the wish is phrased: terse and abstract, terse with a number, long-winded,
# second person, third person, and a garbled fragment.  Together they pin down
# that phrasing alone never breaks the pipeline.
SCENARIOS = [
    Scenario("stay-on-road", ["stay on the road"], [RESPONSE_STAY_ON_ROAD]),
    Scenario("center-line", ["follow the center line"], [RESPONSE_CENTER_LINE]),
    Scenario("center-slow-curves",
             ["follow the center line", "slow down in front of curves"],
             [RESPONSE_CENTER_SLOW]),
    Scenario("slow-curves", ["slow down in front of curves"],
             [RESPONSE_SLOW_CURVES]),
    Scenario("grey-track", ["Stay within the grey track"],
             [RESPONSE_GREY_TRACK]),
    Scenario("desired-speed", ["Desired speed is 70."],
             [RESPONSE_DESIRED_SPEED]),
    Scenario("verbose-middle",
             ["when turning prioritize the middle of the road rather than the"
              " inside of the bend. this will limit your chances of hitting"
              " grass. in general, try to stay in the middle of the road since"
              " you are surrounded by grass"],
             [RESPONSE_VERBOSE_MIDDLE]),
    Scenario("fast", ["speed up to go as fast as you can"], [RESPONSE_FAST]),
    Scenario("straight", ["Keep the car straight on a straight road"],
             [RESPONSE_STRAIGHT]),
    Scenario("turn-corner", ["Turn a corner"], [RESPONSE_TURN_CORNER]),
    Scenario("corners",
             ["brake before sharp corners and accelerate out of them"],
             [RESPONSE_CORNERS]),
    Scenario("recover",
             ["if the car drifts off the road, steer back to the center and slow down until it recovers"],
             [RESPONSE_RECOVER]),
    Scenario("bootstrap", [], [RESPONSE_BOOTSTRAP]),
    Scenario("hug-corners", ["hug the inside of corners"],
             [RESPONSE_HUG_BROKEN, RESPONSE_HUG_FIXED]),
]


def main() -> int:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for stale in OUT_DIR.glob("*.json"):
        stale.unlink()

    tracks = [generate_track(seed) for seed in SMOKE_SEEDS]
    for index, scenario in enumerate(SCENARIOS, start=1):
        backend = ScriptedBackend(scenario.responses)
        result = restructure(scenario.instructions, backend)
        if backend.queue:
            raise AssertionError(f"{scenario.slug}: unconsumed scripted responses")

        diagnostics = check(parse(result.parsed.pgdl).program)
        if diagnostics:
            raise AssertionError(f"{scenario.slug}: final program has diagnostics: {diagnostics}")

        driver = graph_driver(result.policy.structure, result.policy.weights)
        values = []
        for track in tracks:
            record = run_rollout(driver, track, record_frames=False)
            if record.termination != "finished":
                raise AssertionError(
                    f"{scenario.slug}: policy did not finish on seed {track.seed}")
            values.append(round(record.eas, 1))

        for attempt, (messages, response) in enumerate(backend.recorded, start=1):
            name = f"{index:02d}-{scenario.slug}"
            if len(backend.recorded) > 1:
                name += f"-attempt{attempt}"
            payload = {
                "scenario": scenario.slug,
                "attempt": attempt,
                "instructions": scenario.instructions,
                "messages": messages,
                "response": response,
            }
            out = OUT_DIR / f"{name}.json"
            out.write_text(json.dumps(payload, indent=1, ensure_ascii=False) + "\n",
                           encoding="utf-8")
        print(f"{scenario.slug:20s} attempts={len(backend.recorded)} eas={values}")
    print(f"wrote {len(list(OUT_DIR.glob('*.json')))} recordings to {OUT_DIR}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
