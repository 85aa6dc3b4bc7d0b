/**
 * Wire types and framing for the realtime stream.
 *
 * Every websocket payload is one or more length-prefixed JSON messages:
 * a 4-byte big-endian byte length followed by UTF-8 text.  The server
 * may batch several messages into a single binary frame, so decoding
 * always returns a list.
 */

export interface CarPose {
  x: number;
  y: number;
  heading: number;
  speed: number;
  distance_to_center: number;
  angle_to_track: number;
}

export interface TileInfo {
  index: number;
  x: number;
  y: number;
  heading: number;
  border: boolean;
}

export interface TrackGeometry {
  seed: number;
  n_tiles: number;
  half_width: number;
  centers: [number, number][];
  headings: number[];
  border: boolean[];
}

export interface StartConfig {
  tile: number;
  lateral: number;
  heading_offset: number;
  speed: number;
}

export const NOMINAL_START: StartConfig = {
  tile: 0, lateral: 0, heading_offset: 0, speed: 40,
};

export interface FramePacket {
  type: "frame";
  version: number;
  mode: string;
  episode: number;
  step: number;
  car: CarPose;
  tiles: TileInfo[];
  covered: number;
  eas: number;
}

export interface EpisodeStart {
  type: "episode-start";
  mode: string;
  episode: number;
  version: number;
  t_cutoff: number;
  start: StartConfig;
  track: TrackGeometry;
}

export interface EpisodeEnd {
  type: "episode-end";
  mode: string;
  episode: number;
  termination: string;
  steps: number;
  n_cutoff: number;
  eas: number;
  version: number;
  rollouts?: number;
  demo_job?: string;
  demo_steps?: number;
}

export interface WireError {
  type: "error";
  rule: string;
  detail: string;
}

export type ServerMessage = FramePacket | EpisodeStart | EpisodeEnd | WireError;

export interface StartMessage {
  type: "start";
  mode: "demo" | "rollout";
  track_seed?: number;
  t_cutoff?: number;
  start?: StartConfig;
}

export interface ControlMessage {
  type: "control";
  step: number;
  steer: number;
  accelerate: number;
  brake: number;
  reset?: boolean;
  stop?: boolean;
}

export type ClientMessage = StartMessage | ControlMessage;

const encoder = new TextEncoder();
const decoder = new TextDecoder("utf-8", { fatal: false });

/** Encode one message as a length-prefixed binary frame. */
export function packMessage(payload: unknown): ArrayBuffer {
  const body = encoder.encode(JSON.stringify(payload));
  const out = new Uint8Array(4 + body.byteLength);
  new DataView(out.buffer).setUint32(0, body.byteLength, false);
  out.set(body, 4);
  return out.buffer;
}

/** Decode every message in a binary frame; rejects truncated framing. */
export function unpackMessages(data: ArrayBuffer): ServerMessage[] {
  const view = new DataView(data);
  const messages: ServerMessage[] = [];
  let offset = 0;
  while (offset < data.byteLength) {
    if (offset + 4 > data.byteLength) {
      throw new Error("truncated length prefix");
    }
    const size = view.getUint32(offset, false);
    offset += 4;
    if (offset + size > data.byteLength) {
      throw new Error("message body shorter than its prefix");
    }
    const text = decoder.decode(new Uint8Array(data, offset, size));
    messages.push(JSON.parse(text) as ServerMessage);
    offset += size;
  }
  return messages;
}
