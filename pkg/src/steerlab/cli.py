"""Command line front ends.

Subcommands, one per workflow:

    steerlab pgdl check <file>            parse + static checks
    steerlab pgdl compile <file> --out P  write a policy file
    steerlab pgdl fmt <file>              canonical formatting in place
    steerlab train --policy P --demos D --seed N
    steerlab sim rollout --policy P --track-seed N --start nominal|edge:<i> --noise 0|1|2
    steerlab restructure --session <dir> [--replay <fixtures>]
    steerlab serve --config <file>

Exit codes: 0 success, 1 the input was rejected (diagnostics printed),
2 operational failure (missing files, backend errors).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import session as sessions
from .demos import DemoError, load_frames, merge_demo_sets
from .drivers import graph_driver
from .pgdl import PgdlError, check, compile_source, load_policy, parse, save_policy
from .pgdl.syntax import ERROR, format_program
from .restructure import (
    HttpBackend,
    ReplayBackend,
    RestructureError,
    restructure,
)
from .sim import (
    MAX_STEPS,
    NOISE_SIGMAS,
    NOMINAL_START,
    NoiseSpec,
    SimError,
    edge_case_starts,
    run_rollout,
    save_rollout,
)
from .track import generate_track
from .training import StructuredPolicyAdapter, TrainConfig, TrainError, train

# Failures of these kinds are reported as one line, not a traceback.
# RestructureError lands here only for setup problems (missing fixtures,
# unset env vars); failed generation attempts are handled where they can
# still write their transcripts.
_EXPECTED = (OSError, ValueError, DemoError, TrainError, SimError,
             sessions.SessionError, RestructureError)


# ---------------------------------------------------------------------------
# pgdl


def _cmd_pgdl_check(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8")
    result = parse(text)
    diags = list(result.diagnostics)
    if result.ok:
        diags.extend(check(result.program))
    for d in diags:
        print(f"{args.file}:{d}")
    return 1 if any(d.severity == ERROR for d in diags) else 0


def _cmd_pgdl_compile(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8")
    try:
        policy = compile_source(text)
    except PgdlError as err:
        print(f"{args.file}: {err}", file=sys.stderr)
        return 1
    save_policy(args.out, policy)
    print(f"compiled {args.file} -> {args.out}"
          f" ({len(policy.weights.values)} weights)")
    return 0


def _cmd_pgdl_fmt(args) -> int:
    path = Path(args.file)
    text = path.read_text(encoding="utf-8")
    result = parse(text)
    if not result.ok:
        for d in result.diagnostics:
            print(f"{args.file}:{d}")
        return 1
    canonical = format_program(result.program)
    if canonical != text:
        path.write_text(canonical, encoding="utf-8")
        print(f"formatted {args.file}")
    return 0


# ---------------------------------------------------------------------------
# train


def _cmd_train(args) -> int:
    policy = load_policy(args.policy)
    files = sorted(Path(args.demos).glob("*.frames"))
    if not files:
        raise DemoError(f"{args.demos}: no .frames files to train on")
    demos = merge_demo_sets([load_frames(f) for f in files])
    config = TrainConfig(seed=args.seed)
    if args.batches is not None:
        config = replace(config, batches=args.batches)
    if args.batch_size is not None:
        config = replace(config, batch_size=args.batch_size)

    weights = policy.weights.copy()
    adapter = StructuredPolicyAdapter(policy.structure, weights)
    report = train(adapter, demos, config)

    out = args.out or args.policy
    save_policy(out, replace(policy, weights=weights))
    print(f"trained on {len(demos)} rows from {len(files)} demo files"
          f" ({config.batches} batches, seed {config.seed})")
    print(f"final loss {report.final_loss:.6f}"
          f"  wall {report.wall_time_s:.1f}s  checksum {report.checksum[:12]}")
    print(f"wrote {out}")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write("batch,loss\n")
            for index, loss in enumerate(report.losses):
                fh.write(f"{index},{loss!r}\n")
        print(f"wrote {args.report}")
    return 0


# ---------------------------------------------------------------------------
# sim rollout


def _parse_start(text: str, track):
    if text == "nominal":
        return NOMINAL_START
    if text.startswith("edge:"):
        grid = edge_case_starts(track)
        index = int(text[len("edge:"):])
        if not 0 <= index < len(grid):
            raise ValueError(f"edge index {index} outside 0..{len(grid) - 1}")
        return grid[index]
    raise ValueError(f"start must be nominal or edge:<i>, got {text!r}")


def _cmd_sim_rollout(args) -> int:
    policy = load_policy(args.policy)
    driver = graph_driver(policy.structure, policy.weights)
    track = generate_track(args.track_seed)
    start = _parse_start(args.start, track)
    noise = None
    if args.noise:
        noise = NoiseSpec(sigma=NOISE_SIGMAS[args.noise - 1], seed=args.noise_seed)
    record = run_rollout(driver, track, start=start, noise=noise,
                         t_cutoff=args.t_cutoff,
                         record_frames=args.out is not None)
    sigma = 0.0 if noise is None else noise.sigma
    print(f"track {args.track_seed} ({track.n_tiles} tiles)"
          f"  start {args.start}  noise sigma {sigma:g}")
    print(f"{record.termination} after {record.steps} steps:"
          f" {record.n_cutoff}/{record.n_total} tiles, EAS {record.eas:.3f}")
    if args.out is not None:
        save_rollout(args.out, record)
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# restructure


def _write_transcripts(directory: Path, transcripts) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for number, transcript in enumerate(transcripts, start=1):
        path = directory / f"attempt-{number:02d}.json"
        path.write_text(json.dumps(transcript.to_json(), indent=2) + "\n",
                        encoding="utf-8")


def _cmd_restructure(args) -> int:
    directory = Path(args.session)
    agent = sessions.load(directory)
    if agent.kind == sessions.DENSE:
        raise sessions.SessionError(
            "a dense baseline session has no instruction structure to regenerate")
    backend = (ReplayBackend.load(args.replay) if args.replay
               else HttpBackend.from_env())
    out_dir = Path(args.transcripts) if args.transcripts else directory / "transcripts"
    try:
        result = restructure(agent.instructions, backend)
    except RestructureError as err:
        _write_transcripts(out_dir, err.transcripts)
        print(f"restructure failed: {err}", file=sys.stderr)
        for number, problem in enumerate(err.problems, start=1):
            print(f"attempt {number}: {problem}", file=sys.stderr)
        print(f"transcripts in {out_dir}", file=sys.stderr)
        return 1
    _write_transcripts(out_dir, result.transcripts)
    print(f"{len(result.transcripts)} attempt(s); transcripts in {out_dir}",
          file=sys.stderr)
    print(result.summary, file=sys.stderr)
    # The regenerated program goes to stdout so it can be piped to a file.
    sys.stdout.write(result.policy.source)
    return 0


# ---------------------------------------------------------------------------
# serve


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_config

    config = load_config(args.config)
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=config.port)
    return 0


# ---------------------------------------------------------------------------
# Argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steerlab", description="Teachable driving agent tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    pgdl = sub.add_parser("pgdl", help="policy language tools")
    pgdl_sub = pgdl.add_subparsers(dest="pgdl_command", required=True)
    p = pgdl_sub.add_parser("check", help="parse and run the static checks")
    p.add_argument("file")
    p.set_defaults(handler=_cmd_pgdl_check)
    p = pgdl_sub.add_parser("compile", help="compile a program to a policy file")
    p.add_argument("file")
    p.add_argument("--out", required=True, help="policy file to write")
    p.set_defaults(handler=_cmd_pgdl_compile)
    p = pgdl_sub.add_parser("fmt", help="rewrite a program in canonical form")
    p.add_argument("file")
    p.set_defaults(handler=_cmd_pgdl_fmt)

    p = sub.add_parser("train", help="fit a policy's weights to demonstrations")
    p.add_argument("--policy", required=True, help="policy file to train")
    p.add_argument("--demos", required=True, help="directory of .frames files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batches", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--out", help="trained policy file (default: in place)")
    p.add_argument("--report", help="write the per-batch loss table as CSV")
    p.set_defaults(handler=_cmd_train)

    sim = sub.add_parser("sim", help="simulator tools")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)
    p = sim_sub.add_parser("rollout", help="drive a policy around a track")
    p.add_argument("--policy", required=True)
    p.add_argument("--track-seed", type=int, default=0)
    p.add_argument("--start", default="nominal", metavar="nominal|edge:<i>")
    p.add_argument("--noise", type=int, choices=(0, 1, 2), default=0,
                   help="actuation noise level (0 off)")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--t-cutoff", type=int, default=MAX_STEPS)
    p.add_argument("--out", help="save the rollout frames")
    p.set_defaults(handler=_cmd_sim_rollout)

    p = sub.add_parser(
        "restructure",
        help="regenerate a session's policy structure from its instructions")
    p.add_argument("--session", required=True, help="session directory")
    p.add_argument("--replay", help="replay fixture directory (default: live backend)")
    p.add_argument("--transcripts",
                   help="where to write attempt transcripts"
                        " (default: <session>/transcripts)")
    p.set_defaults(handler=_cmd_restructure)

    p = sub.add_parser("serve", help="run the teaching service")
    p.add_argument("--config", required=True, help="service config JSON")
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(handler=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except PgdlError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except _EXPECTED as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
