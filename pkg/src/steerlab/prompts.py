"""Prompt assets for structure generation.

The generation conversation is always four messages: a system prompt that
teaches the policy language and the required chain-of-thought format, a
worked lunar-lander exemplar (task message plus answer message), and the
driving task message that embeds the user's instructions.  Keeping the
exemplar as a real recorded pair rather than prose makes the target format
unambiguous: the model has seen exactly one complete answer in the exact
shape we parse.

Everything here is plain text so bundles hash stably; no runtime state.
"""

from __future__ import annotations

from typing import Sequence

# Bullet inserted when the user has given no instructions yet.  The wording
# matters: the model should fall back on its own driving knowledge instead
# of inventing constraints that were never asked for.
NO_INSTRUCTIONS_MARKER = (
    "* (no user instructions were given; rely on your own knowledge of "
    "careful, fast driving)"
)

SYSTEM_PROMPT = """\
Implement policy programs that reflect the specified structure of the user.

You write programs in a small declarative policy language. A program is a
sequence of declarations, one per line:

    obs NAME           declares a scalar observed input
    obs NAME[8]        declares a vector observed input of length 8
    param NAME = 0.1   declares a learnable scalar coefficient; append
                       `frozen` after the number to exclude it from learning
    node NAME = EXPR   declares a named intermediate value
    action NAME = EXPR clip(LO, HI)
                       declares an output, clipped to the range [LO, HI]

Expressions combine previously declared names and numbers with `+`, `-`,
`*`, unary `-`, parentheses, and these functions:

    relu(x)            x where x > 0, else 0
    abs(x)             absolute value
    square(x)          x * x
    clamp(x, LO, HI)   clip x to the fixed numeric bounds LO and HI
    min(a, b, ...)     elementwise minimum
    max(a, b, ...)     elementwise maximum
    select(c, a, b)    a where c > 0, else b
    mean(v)            average of a vector, producing a scalar
    stack(a, b, ...)   build a vector out of scalars

Scalars broadcast against vectors elementwise. Every name is defined exactly
once and must be declared before it is used. Comments start with `#`.

The user will provide the following:
* [High-Level Instructions] explains the decision-making principles of the model
* [Features] explains how to interpret the input to the model. For example, which observed name corresponds to which feature, and what type (discrete or continuous)
* [Output Space] explains the action space
* [Additional Notes] (optional) explains any additional details of the task

You will do the following steps before giving the final implementation:

* [Variables Extraction] List the names of the variables, including feature space, latent space, and output space. Note that some of them need to be inferred from the instructions.

* [Structure Description] Describe the connections / operations between each variables / features.

* [Plan the connections] List the variables (and their type and shape) in the order in which they should be computed, where the variables based only on the input features are listed first, then the variables that depend on those, etc. For each of them, explain how they can be computed using the previously listed variables or inputs to the model. Also, indicate whether the new feature is positively correlated to the previous feature or negatively correlated respectively. Be very specific. List the functions or operators that should be used to connect the variables. If you decided to use a linear combination, explain why a bias term is included or not included.

Use the following format:
[Variables]
 * Name of the first variable (shape and type)
 * Name of the second variable (shape and type)
 ...

[Structure Description]
English description of the model.

[Connections]
 * Name of the first variable that should be computed (shape and type)
    - depends on <feature 1 name> (positively correlated), <feature 2 name> (negatively correlated), ...
    - can be computed with a linear combination of ... and with a bias term
    - the bias term is included because ...
 * Name of the second variable that should be computed (shape and type)
    - depends on <feature 1 name> (negatively correlated), <feature 2 name> (positively correlated), ...
    - can be computed using `select` on ...

[Code]
```pgdl
obs ...
param ...
node ...
action ...
```

Notes:
* Represent new features as linear combinations of old features when possible. If you are very certain that no bias term is needed (i.e., the feature value should be 0 if all inputs are 0), then don't include the bias term to make it easier to learn.
* Declare every tunable coefficient and bias with `param` so it can be learned. Use `frozen` only for values that must never move.
* There might be cases where a linear combination is not sufficient; then you may use other operations, such as multiplication, to represent the interaction between two features.
* Keep the model simple.
* When initializing the values for each weight and bias, set a value based on positive or negative correlation (e.g., if the input feature is negatively correlated, then set its weight to -0.1) instead of using random initialization. Keep the initialized value between -0.5 and 0.5.
* There should be no magic number inside expressions: name such values with `param` declarations. Constants like 0, 1, and 0.5 are fine, and the fixed bounds of `clamp` and `clip` are fine.
* Every listed function is differentiable, so gradient descent can learn any program you write. There is no sigmoid or tanh, which avoids vanishing gradients.
* There is no vector indexing. To focus on part of a vector, reduce it with `mean`, or `stack` fixed weights into a vector and multiply before reducing.
* You may assume the inputs are already normalized.
* For a discrete output space, declare one action per choice and treat each as an unnormalized probability. For a continuous action space, declare one action per control and give its range with `clip`.
"""

# Worked exemplar, task side.  A small task with scalar inputs keeps the
# exemplar short while still exercising latents, clamping, gating, and a
# discrete output head.
LANDER_INSTRUCTIONS = """\
[High-Level Instruction]

 * The lander heading should always point to the center
 * Don't tilt the lander too much
 * If the lander is too low and too far from the landing pad, then it should activate the main engine
 * Use the main engine to slow the lander down if it's falling too fast
 * When the lander contacts the ground, only use the main engine to slow down
 * Don't activate any engine if there is no need to

[Features]
The observed inputs are eight scalars:
* x: horizontal coordinate
* y: vertical coordinate
* v_x: horizontal speed
* v_y: vertical speed
* theta: heading
* omega: angular velocity
* left_leg_contact: 1 if the left landing leg is in contact with the ground, else 0
* right_leg_contact: 1 if the right landing leg is in contact with the ground, else 0

[Output Space]
Four actions forming an unnormalized distribution over the discrete choices:
* do_nothing
* fire_left_engine
* fire_main_engine
* fire_right_engine

[Additional Notes]
The lander is upright when theta = 0 and is tilting to the left when theta > 0. When the lander is falling v_y < 0 since the y-axis points upward.
The landing pad is always at (0, 0).
The left and right engines are symmetric.
"""

# Worked exemplar, answer side.  This text is also a fixture: tests parse it
# and compile the code block, so the exemplar can never drift out of sync
# with the language.
LANDER_ANSWER = """\
[Variables]
 * x (scalar, observed)
 * y (scalar, observed)
 * v_x (scalar, observed)
 * v_y (scalar, observed)
 * theta (scalar, observed)
 * omega (scalar, observed)
 * left_leg_contact (scalar, observed)
 * right_leg_contact (scalar, observed)
 * in_air (scalar, latent): 1 if both legs are off the ground, else 0
 * target_heading (scalar, latent): desired heading, clamped to a safe range
 * target_y (scalar, latent): desired vertical coordinate, depends on |x|
 * heading_adjustment (scalar, latent): difference between target and current heading, damped by omega
 * speed_adjustment (scalar, latent): proportional to -v_y
 * vertical_adjustment (scalar, latent): difference between target and current y, damped by v_y
 * do_nothing (scalar, action): base probability of doing nothing
 * fire_left_engine (scalar, action): probability of firing the left engine
 * fire_main_engine (scalar, action): probability of firing the main engine
 * fire_right_engine (scalar, action): probability of firing the right engine

[Structure Description]
The lander is in the air when neither leg touches the ground. The target heading points the lander back toward the center: it grows with how far and how fast the lander drifts sideways, but is clamped so the lander never tilts too much. The target altitude grows with the horizontal distance from the pad, keeping the lander high until it is above the pad. The heading adjustment pushes the current heading toward the target heading and is damped by the angular velocity; in the air it drives the left engine when positive and the right engine when negative. The vertical adjustment pushes the lander toward the target altitude and brakes a fast fall; it drives the main engine while in the air. On the ground only the main engine stays active, driven purely by the descent speed. A learned base probability lets the lander do nothing when no correction is needed.

[Connections]
 * in_air (scalar, latent)
    - depends on left_leg_contact (negatively correlated), right_leg_contact (negatively correlated)
    - can be computed as the product (1 - left_leg_contact) * (1 - right_leg_contact)
 * target_heading (scalar, latent)
    - depends on x (negatively correlated), v_x (negatively correlated)
    - can be computed with a linear combination w1 * x + w2 * v_x (both weights negative), then `clamp` to [-0.4, 0.4]
    - no bias term because the target heading should be 0 when x and v_x are 0
 * target_y (scalar, latent)
    - depends on x (positively correlated through its magnitude)
    - can be computed as w3 * abs(x) (positive weight), no bias term (if x = 0, target_y = 0)
 * heading_adjustment (scalar, latent)
    - depends on target_heading (positively correlated), theta (negatively correlated), omega (negatively correlated)
    - can be computed as w4 * (target_heading - theta) + w5 * omega with w5 negative, no bias term
 * speed_adjustment (scalar, latent)
    - depends on v_y (negatively correlated)
    - can be computed as w6 * -v_y, no bias term
 * vertical_adjustment (scalar, latent)
    - depends on target_y (positively correlated), y (negatively correlated), v_y (negatively correlated)
    - can be computed as w7 * (target_y - y) + w8 * -v_y, no bias term
 * do_nothing (scalar, action)
    - independent learnable base probability
 * fire_left_engine (scalar, action)
    - depends on in_air (positively correlated), heading_adjustment (positively correlated)
    - can be computed as in_air * heading_adjustment; the product gates the engine off on the ground
 * fire_main_engine (scalar, action)
    - depends on in_air, vertical_adjustment (positively correlated), speed_adjustment (positively correlated)
    - can be computed as in_air * vertical_adjustment + (1 - in_air) * speed_adjustment
 * fire_right_engine (scalar, action)
    - depends on in_air (positively correlated), heading_adjustment (negatively correlated)
    - can be computed as in_air * -heading_adjustment

[Code]
```pgdl
obs x
obs y
obs v_x
obs v_y
obs theta
obs omega
obs left_leg_contact
obs right_leg_contact

param w1 = -0.5
param w2 = -0.5
param w3 = 0.5
param w4 = 0.5
param w5 = -0.5
param w6 = 0.5
param w7 = 0.5
param w8 = 0.5
param base_prob = 0.1

node in_air = (1.0 - left_leg_contact) * (1.0 - right_leg_contact)
node target_heading = clamp(w1 * x + w2 * v_x, -0.4, 0.4)
node target_y = w3 * abs(x)
node heading_adjustment = w4 * (target_heading - theta) + w5 * omega
node speed_adjustment = w6 * -v_y
node vertical_adjustment = w7 * (target_y - y) + w8 * -v_y

action do_nothing = base_prob clip(0.0, 1.0)
action fire_left_engine = in_air * heading_adjustment clip(0.0, 1.0)
action fire_main_engine = in_air * vertical_adjustment + (1.0 - in_air) * speed_adjustment clip(0.0, 1.0)
action fire_right_engine = in_air * -heading_adjustment clip(0.0, 1.0)
```
"""

# Driving task message.  {instructions} receives one "* ..." bullet per used
# instruction, or NO_INSTRUCTIONS_MARKER when there are none.
TASK_TEMPLATE = """\
[High-Level Instruction]
{instructions}

[Features]
The observed inputs are four aligned vectors describing the 8 track tiles ahead of the racecar, nearest tile first, plus two scalars:

* tile_x (vector of 8): signed lateral position of each tile, where positive means the race car is on the left of the center of the tile
* tile_y (vector of 8): signed longitudinal position of each tile
* tile_theta (vector of 8): relative heading of each tile to the racecar, normalized from [-pi, pi] to [-1, 1], where positive means the road is heading to the left
* tile_border (vector of 8): either 0 or 1, indicating whether the tile is a sharp corner (curvature exceeds some threshold)
* speed (scalar): the speed of the racecar, normalized from [0, 100] to [0, 1]
* heading (scalar): the current (absolute) heading of the race car, normalized from [-pi, pi] to [-1, 1]

Declare only the inputs you use, with their sizes, e.g. `obs tile_x[8]` or `obs speed`.

[Output Space]
The program must declare exactly three continuous actions named steer, accelerate, and brake. The steer value should be in the range of (-1, 1), where -1 is full left, 0 is no steering, and 1 is full right. Accelerate is in the range of (0, 1), where 0 is no acceleration and 1 is full acceleration. Brake is also in the range of (0, 1), where 0 is no braking and 1 is full braking.

[Additional Notes]
* The track is a loop.
* The track is about 0.4 unit wide. When the closest tile's x is at -0.2 or 0.2 it means the racecar is on the edge of the track. Beyond that it's grass.
* The racecar is approximately 3 tiles long.
* The first tile is the closest tile to the race car, and the rest are in the order of tiles ahead.
* Clip the output to the desired range.
"""

# Corrective feedback sent on a failed attempt; {diagnostics} is inserted
# verbatim so the model sees exact line/column positions.
RETRY_TEMPLATE = """\
Your previous response could not be used:

{diagnostics}

Reply again in the same four-section format ([Variables], [Structure Description], [Connections], [Code]) and fix these problems. Keep everything that was already correct.
"""


def render_instruction_bullets(texts: Sequence[str]) -> str:
    """One bullet per instruction, insertion order; explicit empty marker."""
    if not texts:
        return NO_INSTRUCTIONS_MARKER
    return "\n".join("* " + text for text in texts)


def render_task(texts: Sequence[str]) -> str:
    return TASK_TEMPLATE.format(instructions=render_instruction_bullets(texts))
