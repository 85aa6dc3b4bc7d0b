"""Drive the teaching service over HTTP and the realtime socket.

The service wraps sessions in a small JSON API plus a websocket stream
for live driving.  This script runs the app in-process with a test
client, so nothing binds a port; `steerlab serve --config service.json`
runs the same app for real browsers.
"""

import json
import struct
import tempfile
from pathlib import Path

from starlette.testclient import TestClient

from steerlab.service import ServiceConfig, create_app

REPLAY = Path(__file__).resolve().parent.parent / "fixtures" / "replay"


def send(ws, payload):
    raw = json.dumps(payload).encode("utf-8")
    ws.send_bytes(struct.pack(">I", len(raw)) + raw)


def recv(ws):
    raw = ws.receive_bytes()
    size = struct.unpack(">I", raw[:4])[0]
    return json.loads(raw[4:4 + size].decode("utf-8"))


scratch = tempfile.TemporaryDirectory()
config = ServiceConfig(session_root=Path(scratch.name) / "sessions",
                       backend="replay", replay_dir=REPLAY,
                       pace_s=0.0, sample_timeout_s=2.0)

with TestClient(create_app(config)) as client:
    r = client.post("/api/v1/sessions", json={
        "session": "walkthrough", "kind": "structured",
        "instructions": ["follow the center line"]})
    print("created:", r.json()["session"], "version", r.json()["version"])

    # Record one demonstration over the socket: read a frame, answer with
    # a control sample, stop after 240 steps.  A browser client does the
    # same thing with gamepad axes; here a tiny proportional controller
    # stands in for the human.
    with client.websocket_connect("/api/v1/sessions/walkthrough/stream") as ws:
        send(ws, {"type": "start", "mode": "demo", "track_seed": 0, "t_cutoff": 300})
        msg = recv(ws)  # episode header with the full track geometry
        print("episode on", msg["track"]["n_tiles"], "tiles")
        while True:
            msg = recv(ws)
            if msg["type"] != "frame":
                break
            car = msg["car"]
            steer = max(-1.0, min(1.0, -2.0 * car["distance_to_center"]
                                       - 1.0 * car["angle_to_track"]))
            send(ws, {"type": "control", "step": msg["step"],
                      "steer": steer,
                      "accelerate": 0.8 if car["speed"] < 65.0 else 0.0,
                      "brake": 0.0,
                      "stop": msg["step"] >= 240})
        print("episode end:", msg["termination"], "after", msg["steps"], "steps")
        demo_job = msg["demo_job"]

    # Stopping queued a background job that saves the demo and retrains.
    while True:
        job = client.get(f"/api/v1/sessions/walkthrough/jobs/{demo_job}").json()
        if job["status"] in ("done", "failed"):
            break
    state = client.get("/api/v1/sessions/walkthrough").json()
    print("demos:", [d["id"] for d in state["demos"]], "version", state["version"])

    # Training again explicitly, waiting for the job inline.
    r = client.post("/api/v1/sessions/walkthrough/train", params={"wait": 1},
                    json={"config": {"batches": 100}})
    print("train job:", r.json()["status"], "progress", r.json()["progress"])

    # Watch the trained agent drive one rollout, one frame per step.
    with client.websocket_connect("/api/v1/sessions/walkthrough/stream") as ws:
        send(ws, {"type": "start", "mode": "rollout", "track_seed": 0, "t_cutoff": 150})
        recv(ws)
        frames = 0
        while True:
            msg = recv(ws)
            if msg["type"] != "frame":
                break
            frames += 1
        print(f"rollout: {frames} frames, score {msg['eas']:.1f}")

scratch.cleanup()
