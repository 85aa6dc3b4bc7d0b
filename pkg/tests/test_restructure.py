"""Structure generation: prompt assembly, response parsing, retry loop, backends."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steerlab.drivers import graph_driver
from steerlab.graph import validate_structure
from steerlab.observation import ACTION_NAMES
from steerlab.pgdl import ActionDecl, Bin, Call, Neg, NodeDecl, Ref, check, parse
from steerlab.prompts import (
    LANDER_ANSWER,
    LANDER_INSTRUCTIONS,
    NO_INSTRUCTIONS_MARKER,
    SYSTEM_PROMPT,
    render_task,
)
from steerlab.restructure import (
    ENV_MODEL,
    ENV_URL,
    HttpBackend,
    Instruction,
    InstructionSet,
    LlmTranscript,
    ParsedResponse,
    ReplayBackend,
    ResponseFormatError,
    RestructureError,
    build_prompt,
    message_digest,
    parse_response,
    restructure,
)
from steerlab.sim import run_rollout
from steerlab.track import generate_track

from conftest import FIXTURES

REPLAY = FIXTURES / "replay"
PROMPTS = FIXTURES / "prompts"


def _recordings():
    return [json.loads(p.read_text()) for p in sorted(REPLAY.glob("*.json"))]


def _scenario_instructions():
    """slug -> instruction texts, from the committed recordings."""
    table = {}
    for rec in _recordings():
        table[rec["scenario"]] = rec["instructions"]
    return table


class QueueBackend:
    """Test stub: hands out canned responses in order."""

    model = "stub"
    settings = {}

    def __init__(self, responses):
        self.queue = list(responses)
        self.seen = []

    def complete(self, messages):
        self.seen.append(list(messages))
        return self.queue.pop(0)


# ---------------------------------------------------------------------------
# Prompt assembly

class TestBuildPrompt:
    def test_equal_instruction_sets_build_identical_bundles(self):
        texts = ["go fast", "stay centered"]
        a = build_prompt(texts)
        b = build_prompt(InstructionSet((
            Instruction("i1", "go fast"), Instruction("i2", "stay centered"))))
        assert a == b
        assert a.digest == b.digest
        assert build_prompt(list(reversed(texts))).digest != a.digest

    def test_unused_instructions_stay_out_of_the_prompt(self):
        bundle = build_prompt(InstructionSet((
            Instruction("keep", "hold the center line"),
            Instruction("drop", "drive backwards", used=False))))
        assert "hold the center line" in bundle.task
        assert "drive backwards" not in bundle.task

    def test_instruction_texts_appear_in_insertion_order(self):
        bundle = build_prompt(["first rule", "second rule"])
        assert bundle.task.index("first rule") < bundle.task.index("second rule")

    def test_empty_instruction_set_gets_an_explicit_marker(self):
        bundle = build_prompt([])
        assert "no user instructions" in bundle.task
        assert NO_INSTRUCTIONS_MARKER in bundle.task
        golden = (PROMPTS / "task-empty.golden.txt").read_text(encoding="utf-8")
        assert bundle.task == golden

    def test_task_template_matches_the_golden_file(self):
        rendered = render_task(["follow the center line", "slow down in front of curves"])
        golden = (PROMPTS / "task-two-instructions.golden.txt").read_text(encoding="utf-8")
        assert rendered == golden

    def test_task_template_pins_the_interface_wording(self):
        task = render_task(["x"])
        for phrase in (
            "-1 is full left",
            "1 is full right",
            "positive means the race car is on the left of the center of the tile",
            "positive means the road is heading to the left",
            "The track is a loop.",
            "about 0.4 unit wide",
            "approximately 3 tiles long",
            "normalized from [0, 100] to [0, 1]",
        ):
            assert phrase in task

    def test_bundle_message_order_is_fixed(self):
        bundle = build_prompt(["x"])
        roles = [m["role"] for m in bundle.messages]
        assert roles == ["system", "user", "assistant", "user"]
        contents = [m["content"] for m in bundle.messages]
        assert contents == [SYSTEM_PROMPT, LANDER_INSTRUCTIONS, LANDER_ANSWER, bundle.task]


# ---------------------------------------------------------------------------
# Response parsing

class TestParseResponse:
    def test_exemplar_answer_parses_and_compiles(self):
        parsed = parse_response(LANDER_ANSWER)
        assert parsed.variables and parsed.description and parsed.connections
        result = parse(parsed.pgdl)
        assert check(result.program) == []
        from steerlab.pgdl import compile_source
        policy = compile_source(parsed.pgdl)
        assert policy.structure.action_names == [
            "do_nothing", "fire_left_engine", "fire_main_engine", "fire_right_engine"]

    def test_recorded_fixtures_have_four_nonempty_sections(self):
        recordings = _recordings()
        assert len(recordings) >= 15
        for rec in recordings:
            parsed = parse_response(rec["response"])
            assert parsed.variables
            assert parsed.description
            assert parsed.connections
            assert parsed.pgdl.strip()

    def test_missing_section_error_names_the_section(self):
        text = LANDER_ANSWER.replace("[Structure Description]", "[Strategy]")
        with pytest.raises(ResponseFormatError, match=r"\[Structure Description\]"):
            parse_response(text)

    def test_trailing_prose_after_the_fence_is_ignored(self):
        noisy = LANDER_ANSWER + "\nLet me know if the gating needs adjusting.\n"
        assert parse_response(noisy).pgdl == parse_response(LANDER_ANSWER).pgdl

    def test_leading_prose_before_the_sections_is_ignored(self):
        noisy = "Sure, here is the implementation plan.\n\n" + LANDER_ANSWER
        assert parse_response(noisy) == parse_response(LANDER_ANSWER)

    def test_multiple_code_fences_are_ambiguous(self):
        noisy = LANDER_ANSWER + "\nAlternatively:\n```pgdl\nobs speed\n```\n"
        with pytest.raises(ResponseFormatError, match="2 fenced code blocks"):
            parse_response(noisy)

    def test_missing_fence_is_reported_against_the_code_section(self):
        text = LANDER_ANSWER.replace("```pgdl\n", "").replace("```", "")
        with pytest.raises(ResponseFormatError, match=r"\[Code\]"):
            parse_response(text)

    @settings(max_examples=25, deadline=None)
    @given(st.text(alphabet="abcdefghij \n.,", max_size=80),
           st.text(alphabet="abcdefghij \n.,", max_size=80))
    def test_surrounding_prose_never_changes_the_parse(self, prefix, suffix):
        parsed = parse_response(prefix + "\n" + LANDER_ANSWER + suffix)
        assert parsed.pgdl == parse_response(LANDER_ANSWER).pgdl
        assert parsed.variables == parse_response(LANDER_ANSWER).variables


# ---------------------------------------------------------------------------
# Instruction bookkeeping

class TestInstructionSet:
    def test_duplicate_ids_are_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            InstructionSet((Instruction("a", "x"), Instruction("a", "y")))

    def test_mutators_are_pure_and_ordered(self):
        base = InstructionSet()
        one = base.add(Instruction("a", "first"))
        two = one.add(Instruction("b", "second"))
        assert len(base) == 0 and len(two) == 2
        assert two.used_texts() == ["first", "second"]
        off = two.set_used("a", False)
        assert off.used_texts() == ["second"]
        assert two.used_texts() == ["first", "second"]  # original untouched
        assert off.remove("a").used_texts() == ["second"]
        with pytest.raises(KeyError):
            two.remove("missing")
        with pytest.raises(KeyError):
            two.set_used("missing", True)

    def test_instruction_json_roundtrip(self):
        ins = Instruction("a", "go", used=False, created_at="2026-01-01T00:00:00+00:00")
        assert Instruction.from_json(ins.to_json()) == ins


# ---------------------------------------------------------------------------
# Replay backend

class TestReplayBackend:
    def test_loads_the_committed_recordings(self):
        backend = ReplayBackend.load(REPLAY)
        assert len(backend.responses) == len(list(REPLAY.glob("*.json")))

    def test_digest_miss_is_a_hard_error(self):
        backend = ReplayBackend.load(REPLAY)
        with pytest.raises(RestructureError, match="never fall back"):
            backend.complete([{"role": "user", "content": "unrecorded"}])

    def test_missing_directory_is_an_error(self, tmp_path):
        with pytest.raises(RestructureError, match="not found"):
            ReplayBackend.load(tmp_path / "nope")
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(RestructureError, match="no replay recordings"):
            ReplayBackend.load(empty)


# ---------------------------------------------------------------------------
# The generation loop against the committed recordings

def _transitive_refs(program):
    """Declared name -> every name reachable through its expression."""
    def refs(expr):
        if isinstance(expr, Ref):
            return {expr.name}
        if isinstance(expr, Neg):
            return refs(expr.operand)
        if isinstance(expr, Bin):
            return refs(expr.left) | refs(expr.right)
        if isinstance(expr, Call):
            out = set()
            for arg in expr.args:
                out |= refs(arg)
            return out
        return set()

    direct = {}
    for decl in program.decls:
        if isinstance(decl, (NodeDecl, ActionDecl)):
            direct[decl.name] = refs(decl.expr)
    closed = {}
    def close(name):
        if name in closed:
            return closed[name]
        closed[name] = set()
        for dep in direct.get(name, ()):
            closed[name] |= {dep} | close(dep)
        return closed[name]
    return {name: close(name) for name in direct}


# One wish per style of phrasing: terse and abstract, terse with a number,
# long-winded, second person, third person, and a garbled fragment.
PHRASING_VARIANTS = (
    "Stay within the grey track",
    "Desired speed is 70.",
    "when turning prioritize the middle of the road rather than the inside of"
    " the bend. this will limit your chances of hitting grass. in general, try"
    " to stay in the middle of the road since you are surrounded by grass",
    "speed up to go as fast as you can",
    "Keep the car straight on a straight road",
    "Turn a corner",
)


class TestRestructure:
    def test_stay_on_road_compiles_with_a_lateral_offset_latent(self):
        backend = ReplayBackend.load(REPLAY)
        result = restructure(["stay on the road"], backend)
        assert sorted(result.policy.structure.action_names) == sorted(ACTION_NAMES)
        assert validate_structure(result.policy.structure) == []
        assert len(result.transcripts) == 1
        assert result.summary == result.parsed.description
        assert "center" in result.summary

        reach = _transitive_refs(result.policy.program)
        node_names = {d.name for d in result.policy.program.decls if isinstance(d, NodeDecl)}
        lateral_latents = {n for n in node_names if "tile_x" in reach[n]}
        assert lateral_latents, "expected a latent derived from the lateral offsets"
        assert reach["steer"] & lateral_latents, "steer should consume a lateral latent"
        # the same latent also shapes the pedals, one structure serving both
        assert (reach["accelerate"] | reach["brake"]) & lateral_latents

    def test_every_recorded_scenario_compiles_validates_and_drives(self):
        backend = ReplayBackend.load(REPLAY)
        track = generate_track(0)
        for slug, instructions in sorted(_scenario_instructions().items()):
            result = restructure(instructions, backend)
            assert validate_structure(result.policy.structure) == [], slug
            assert sorted(result.policy.structure.action_names) == sorted(ACTION_NAMES), slug
            source = parse(result.policy.source)
            assert check(source.program) == [], slug
            driver = graph_driver(result.policy.structure, result.policy.weights)
            record = run_rollout(driver, track, t_cutoff=250, record_frames=False)
            assert record.n_cutoff > 0, slug

    def test_each_phrasing_variant_reaches_a_clean_policy(self):
        recorded = {tuple(v) for v in _scenario_instructions().values()}
        backend = ReplayBackend.load(REPLAY)
        for text in PHRASING_VARIANTS:
            assert (text,) in recorded, text
            result = restructure([text], backend)
            assert check(parse(result.policy.source).program) == [], text
            assert sorted(result.policy.structure.action_names) == sorted(ACTION_NAMES)

    def test_differently_phrased_centering_wishes_share_the_lateral_latent(self):
        backend = ReplayBackend.load(REPLAY)
        for wish in ("stay on the road", "follow the center line",
                     PHRASING_VARIANTS[0], PHRASING_VARIANTS[2]):
            result = restructure([wish], backend)
            reach = _transitive_refs(result.policy.program)
            assert "tile_x" in reach["steer"], wish

    def test_slow_curves_switches_the_speed_target_on_corner_flags(self):
        backend = ReplayBackend.load(REPLAY)
        result = restructure(["slow down in front of curves"], backend)
        reach = _transitive_refs(result.policy.program)
        assert "tile_border" in reach["brake"]
        assert "tile_border" in reach["accelerate"]
        switches = [d.name for d in result.policy.program.decls
                    if isinstance(d, NodeDecl) and isinstance(d.expr, Call)
                    and d.expr.op == "select"]
        assert any("tile_border" in reach[n] for n in switches)

    def test_empty_instruction_set_replays_the_bootstrap_recording(self):
        backend = ReplayBackend.load(REPLAY)
        result = restructure([], backend)
        assert sorted(result.policy.structure.action_names) == sorted(ACTION_NAMES)
        assert len(result.transcripts) == 1

    def test_two_stage_recording_retries_once_and_succeeds(self):
        backend = ReplayBackend.load(REPLAY)
        result = restructure(["hug the inside of corners"], backend)
        assert len(result.transcripts) == 2
        assert "mean(speed)" in result.transcripts[0].response
        assert "cut_gain" in result.policy.param_names
        assert result.transcripts[0].bundle_digest != result.transcripts[1].bundle_digest

    def test_retry_transcript_digest_matches_the_recorded_conversation(self):
        recordings = {rec["attempt"]: rec for rec in _recordings()
                      if rec["scenario"] == "hug-corners"}
        backend = ReplayBackend.load(REPLAY)
        result = restructure(recordings[1]["instructions"], backend)
        for attempt, transcript in enumerate(result.transcripts, start=1):
            assert transcript.bundle_digest == message_digest(recordings[attempt]["messages"])

    def test_retry_feedback_carries_the_diagnostics_verbatim(self):
        bad = LANDER_ANSWER.replace("node target_y = w3 * abs(x)",
                                    "node target_y = w3 * mean(x)")
        good = _recordings()[0]["response"]  # any valid driving program
        backend = QueueBackend([bad, good])
        restructure(["stay on the road"], backend)
        followup = backend.seen[1]
        assert len(followup) == len(backend.seen[0]) + 2
        assert followup[-2]["role"] == "assistant"
        assert followup[-2]["content"] == bad
        assert followup[-1]["role"] == "user"
        assert "mean needs a vector input" in followup[-1]["content"]

    def test_wrong_action_names_are_rejected_with_feedback(self):
        wrong = LANDER_ANSWER  # compiles, but lander actions are not driving actions
        backend = QueueBackend([wrong, wrong, wrong])
        with pytest.raises(RestructureError) as err:
            restructure(["stay on the road"], backend)
        assert len(err.value.transcripts) == 3
        assert "must declare exactly the actions" in err.value.problems[0]

    def test_unknown_observation_names_are_rejected(self):
        source = ("obs lidar[8]\n"
                  "param g = 0.5\n"
                  "action steer = g * mean(lidar) clip(-1.0, 1.0)\n"
                  "action accelerate = 0.5 clip(0.0, 1.0)\n"
                  "action brake = 0.0 * mean(lidar) clip(0.0, 1.0)\n")
        response = ("[Variables]\n * lidar\n[Structure Description]\nDrive.\n"
                    "[Connections]\n * steer from lidar\n[Code]\n```pgdl\n"
                    + source + "```\n")
        backend = QueueBackend([response] * 3)
        with pytest.raises(RestructureError) as err:
            restructure([], backend)
        assert "unknown observation names: lidar" in err.value.problems[0]

    def test_exhaustion_returns_every_transcript(self):
        backend = QueueBackend(["", "", ""])
        with pytest.raises(RestructureError, match="after 3 attempts") as err:
            restructure(["anything"], backend)
        assert len(err.value.transcripts) == 3
        assert len(err.value.problems) == 3
        assert all(t.response == "" for t in err.value.transcripts)

    def test_transcript_json_roundtrip(self):
        t = LlmTranscript(model="m", bundle_digest="d", settings={"temperature": 0.0},
                          response="r", latency_s=1.5,
                          timestamp="2026-01-01T00:00:00+00:00", cost_estimate=0.01)
        assert LlmTranscript.from_json(t.to_json()) == t


# ---------------------------------------------------------------------------
# HTTP backend

class _CannedHandler(BaseHTTPRequestHandler):
    captured = {}

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        _CannedHandler.captured = {
            "body": json.loads(self.rfile.read(length)),
            "auth": self.headers.get("Authorization"),
        }
        reply = json.dumps({"choices": [{"message": {"content": "canned text"}}]})
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(reply.encode())

    def log_message(self, *args):
        pass


class TestHttpBackend:
    def test_from_env_requires_url_and_model(self):
        with pytest.raises(RestructureError, match=ENV_URL):
            HttpBackend.from_env({})
        backend = HttpBackend.from_env({ENV_URL: "http://x", ENV_MODEL: "m"})
        assert backend.api_key is None
        assert backend.timeout_s == 600.0

    def test_posts_messages_and_extracts_the_reply(self):
        server = HTTPServer(("127.0.0.1", 0), _CannedHandler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_port}/v1/chat"
            backend = HttpBackend(url=url, model="test-model", api_key="sekrit")
            messages = [{"role": "user", "content": "hi"}]
            assert backend.complete(messages) == "canned text"
            sent = _CannedHandler.captured
            assert sent["auth"] == "Bearer sekrit"
            assert sent["body"]["model"] == "test-model"
            assert sent["body"]["messages"] == messages
            assert sent["body"]["temperature"] == 0.0
        finally:
            server.shutdown()
            server.server_close()
