/**
 * Single source of truth for everything the panels draw.
 *
 * Every displayed number lives here and every field here is copied from
 * a server payload; the views never compute state of their own.  Mode is
 * the one client-side notion, and it only moves along the legal spokes:
 * idle out to recording, rolling-out, or training, and straight back.
 */

import type { Snapshot, TrialPoint } from "./api.js";
import { NOMINAL_START, type StartConfig } from "./protocol.js";

export type Mode = "idle" | "recording" | "rolling-out" | "training";

export const SUBMIT_TEST_MINIMUM = 4;

const LEGAL_MOVES: Record<Mode, readonly Mode[]> = {
  idle: ["recording", "rolling-out", "training"],
  recording: ["idle"],
  "rolling-out": ["idle"],
  training: ["idle"],
};

export interface Notice {
  rule: string;
  detail: string;
}

export interface ViewState {
  snapshot: Snapshot | null;
  mode: Mode;
  start: StartConfig;
  summary: string | null;
  history: TrialPoint[];
  notice: Notice | null;
  baseline: boolean;
  gamepadConnected: boolean;
  lastEas: number | null;
}

export class Store {
  readonly state: ViewState;
  private listeners = new Set<(state: ViewState) => void>();

  constructor(baseline = false) {
    this.state = {
      snapshot: null,
      mode: "idle",
      start: { ...NOMINAL_START },
      summary: null,
      history: [],
      notice: null,
      baseline,
      gamepadConnected: false,
      lastEas: null,
    };
  }

  subscribe(listener: (state: ViewState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  setMode(next: Mode): void {
    const from = this.state.mode;
    if (from === next) return;
    if (!LEGAL_MOVES[from].includes(next)) {
      throw new Error(`illegal mode transition ${from} -> ${next}`);
    }
    this.state.mode = next;
    this.emit();
  }

  setSnapshot(snapshot: Snapshot): void {
    this.state.snapshot = snapshot;
    this.emit();
  }

  setSummary(summary: string | null): void {
    this.state.summary = summary;
    this.emit();
  }

  setHistory(history: TrialPoint[]): void {
    this.state.history = history;
    this.emit();
  }

  setNotice(notice: Notice | null): void {
    this.state.notice = notice;
    this.emit();
  }

  setGamepad(connected: boolean): void {
    this.state.gamepadConnected = connected;
    this.emit();
  }

  setLastEas(value: number | null): void {
    this.state.lastEas = value;
    this.emit();
  }

  /** Trial drives of the current version, as the server counts them. */
  get testsDriven(): number {
    return this.state.snapshot?.rollouts ?? 0;
  }

  get canSubmit(): boolean {
    const snap = this.state.snapshot;
    if (snap === null || snap.submitted) return false;
    return snap.rollouts >= SUBMIT_TEST_MINIMUM;
  }

  /** Gate text while submission is blocked, null once it is open. */
  get gateMessage(): string | null {
    const snap = this.state.snapshot;
    if (snap === null || snap.submitted) return null;
    if (snap.rollouts >= SUBMIT_TEST_MINIMUM) return null;
    return `please test the agent at least ${SUBMIT_TEST_MINIMUM} times`
      + ` (${snap.rollouts} of ${SUBMIT_TEST_MINIMUM} so far)`;
  }
}
