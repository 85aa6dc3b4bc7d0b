/**
 * Drives one realtime episode over the length-prefixed socket.
 *
 * The driver owns the message loop: it answers every demo frame with a
 * control sample tagged by that frame's step, forwards stop and restart
 * flags during rollouts, and settles when the server sends episode-end.
 * A dropped wire before the end rejects with StreamLost so the caller
 * can show a notice; the server discards partial demos on disconnect,
 * so nothing half-recorded survives on either side.
 */

import {
  packMessage,
  unpackMessages,
  type EpisodeEnd,
  type EpisodeStart,
  type FramePacket,
  type StartConfig,
  type WireError,
} from "./protocol.js";
import type { ControlReading } from "./input.js";

export interface Wire {
  send(data: ArrayBuffer): void;
  close(): void;
  onMessage(fn: (data: ArrayBuffer) => void): void;
  onClose(fn: () => void): void;
}

export type WireFactory = (path: string) => Promise<Wire>;

export class StreamLost extends Error {}

export interface RunOptions {
  mode: "demo" | "rollout";
  trackSeed?: number;
  tCutoff?: number;
  start?: StartConfig;
}

export interface EpisodeEvents {
  onStart?(msg: EpisodeStart): void;
  onFrame?(frame: FramePacket): void;
  onEnd?(msg: EpisodeEnd): void;
  onError?(err: WireError): void;
}

export interface EpisodeOutcome {
  end: EpisodeEnd;
  /** Frames rendered for the episode that actually ended (resets restart it). */
  frames: number;
  episodes: number;
}

export class EpisodeDriver {
  constructor(private connect: WireFactory) {}

  async run(
    sessionId: string,
    options: RunOptions,
    controls: () => ControlReading,
    events: EpisodeEvents = {},
  ): Promise<EpisodeOutcome> {
    const wire = await this.connect(`/api/v1/sessions/${sessionId}/stream`);
    return await new Promise<EpisodeOutcome>((resolve, reject) => {
      let frames = 0;
      let episodes = 0;
      let resetHeld = false;
      let settled = false;

      const finish = (settle: () => void): void => {
        if (settled) return;
        settled = true;
        settle();
        wire.close();
      };

      wire.onMessage((data) => {
        let batch;
        try {
          batch = unpackMessages(data);
        } catch (err) {
          finish(() => reject(err));
          return;
        }
        for (const msg of batch) {
          switch (msg.type) {
            case "episode-start":
              episodes += 1;
              frames = 0;
              events.onStart?.(msg);
              break;
            case "frame": {
              frames += 1;
              events.onFrame?.(msg);
              const reading = controls();
              // Holding restart should fire once, not once per frame.
              const reset = reading.reset && !resetHeld;
              resetHeld = reading.reset;
              if (options.mode === "demo") {
                wire.send(packMessage({
                  type: "control",
                  step: msg.step,
                  steer: reading.steer,
                  accelerate: reading.accelerate,
                  brake: reading.brake,
                  ...(reset ? { reset: true } : {}),
                  ...(reading.stop ? { stop: true } : {}),
                }));
              } else if (reading.stop || reset) {
                wire.send(packMessage({
                  type: "control",
                  step: msg.step,
                  steer: 0,
                  accelerate: 0,
                  brake: 0,
                  ...(reset ? { reset: true } : {}),
                  ...(reading.stop ? { stop: true } : {}),
                }));
              }
              break;
            }
            case "episode-end":
              events.onEnd?.(msg);
              finish(() => resolve({ end: msg, frames, episodes }));
              break;
            case "error":
              events.onError?.(msg);
              break;
          }
        }
      });
      wire.onClose(() => finish(() =>
        reject(new StreamLost("the realtime stream dropped mid-episode"))));

      wire.send(packMessage({
        type: "start",
        mode: options.mode,
        track_seed: options.trackSeed ?? 0,
        ...(options.tCutoff !== undefined ? { t_cutoff: options.tCutoff } : {}),
        ...(options.start !== undefined ? { start: options.start } : {}),
      }));
    });
  }
}

/** Factory for real browser sockets. */
export function webSocketWire(baseUrl: string): WireFactory {
  return (path) => new Promise<Wire>((resolve, reject) => {
    const url = baseUrl.replace(/^http/, "ws") + path;
    const socket = new WebSocket(url);
    socket.binaryType = "arraybuffer";
    socket.onopen = () => resolve({
      send: (data) => socket.send(data),
      close: () => socket.close(),
      onMessage: (fn) => {
        socket.onmessage = (event) => fn(event.data as ArrayBuffer);
      },
      onClose: (fn) => {
        socket.onclose = () => fn();
      },
    });
    socket.onerror = () => reject(new StreamLost("cannot open the realtime stream"));
  });
}
