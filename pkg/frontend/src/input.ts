/**
 * Controller capture with a keyboard fallback.
 *
 * The gamepad mapping follows the standard layout: left stick steers,
 * the left and right triggers are brake and gas, one face button stops
 * the episode and another restarts it.  Without a pad, arrows or WASD
 * plus space (stop) and R (restart) produce the same readings.  All
 * outputs are pre-clip values inside the action ranges: steer in
 * [-1, 1], pedals in [0, 1].
 */

export interface ControlReading {
  steer: number;
  accelerate: number;
  brake: number;
  reset: boolean;
  stop: boolean;
}

/** The slice of the Gamepad API the binding reads. */
export interface GamepadLike {
  axes: ReadonlyArray<number>;
  buttons: ReadonlyArray<{ pressed: boolean; value: number }>;
}

export const IDLE_READING: ControlReading = {
  steer: 0, accelerate: 0, brake: 0, reset: false, stop: false,
};

const STEER_AXIS = 0;
const BRAKE_TRIGGER = 6; // left trigger
const GAS_TRIGGER = 7; // right trigger
const STOP_BUTTON = 0; // A
const RESET_BUTTON = 1; // B
const DEADZONE = 0.08;

const clamp = (v: number, lo: number, hi: number): number =>
  Math.min(hi, Math.max(lo, v));

function readPad(pad: GamepadLike): ControlReading {
  const raw = pad.axes[STEER_AXIS] ?? 0;
  const steer = Math.abs(raw) < DEADZONE ? 0 : clamp(raw, -1, 1);
  return {
    steer,
    accelerate: clamp(pad.buttons[GAS_TRIGGER]?.value ?? 0, 0, 1),
    brake: clamp(pad.buttons[BRAKE_TRIGGER]?.value ?? 0, 0, 1),
    stop: pad.buttons[STOP_BUTTON]?.pressed ?? false,
    reset: pad.buttons[RESET_BUTTON]?.pressed ?? false,
  };
}

export class InputBinding {
  private keysDown = new Set<string>();
  private lastSource: "gamepad" | "keyboard" = "keyboard";

  /** Feed keydown/keyup events here; keys are KeyboardEvent.key values. */
  keyEvent(key: string, down: boolean): void {
    const normalized = key.length === 1 ? key.toLowerCase() : key;
    if (down) this.keysDown.add(normalized);
    else this.keysDown.delete(normalized);
  }

  private readKeyboard(): ControlReading {
    const k = this.keysDown;
    const left = k.has("ArrowLeft") || k.has("a");
    const right = k.has("ArrowRight") || k.has("d");
    return {
      steer: (right ? 1 : 0) - (left ? 1 : 0),
      accelerate: k.has("ArrowUp") || k.has("w") ? 1 : 0,
      brake: k.has("ArrowDown") || k.has("s") ? 1 : 0,
      stop: k.has(" "),
      reset: k.has("r"),
    };
  }

  /** Sample once; pass the connected pad or null for the fallback. */
  read(pad: GamepadLike | null): ControlReading {
    if (pad !== null) {
      this.lastSource = "gamepad";
      return readPad(pad);
    }
    this.lastSource = "keyboard";
    return this.readKeyboard();
  }

  get usingKeyboard(): boolean {
    return this.lastSource === "keyboard";
  }

  /** One line for the HUD telling the user which controls are live. */
  legend(): string {
    return this.lastSource === "gamepad"
      ? "gamepad: left stick steers, right trigger gas, left trigger brake, A stop, B restart"
      : "keyboard: arrows or WASD drive, space stop, R restart";
  }
}
