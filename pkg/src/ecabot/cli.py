"""Command-line driver: chat REPL, script replay, analytics, HTTP server.

Exit codes: 0 success, 1 assertion or data failure (store diff mismatch,
malformed transcript), 2 configuration errors (missing files, bad flags).
"""

from __future__ import annotations

import argparse
import difflib
import os
import sys
from pathlib import Path

from .analytics import (
    load_reference_matrices,
    render_csv,
    render_report,
    stages_from_transcript,
    transitions,
)
from .assets import script_path
from .config import load_config
from .engine import RuleStore, rule_from_dict, serialize_rules
from .environment import load_environment
from .errors import ConfigError, EcabotError, ProviderError
from .orchestrator import Orchestrator, run_script
from .providers import ProviderBundle, load_script


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EcabotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecabot",
        description="Conversational authoring of event-condition-action automations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    chat = sub.add_parser("chat", help="interactive turn loop on stdin/stdout")
    chat.add_argument("--scenario", default=None, help="fixture name (default: from script)")
    chat.add_argument("--provider", choices=("scripted", "remote"), default="scripted")
    chat.add_argument("--script", default=None, help="script file for the scripted provider")
    chat.add_argument("--endpoint", default=None, help="remote chat-completions base URL")
    chat.add_argument("--model", default=None, help="remote model name")
    chat.add_argument("--fixtures", default=None, help="directory of environment fixtures")
    chat.add_argument("--transcript", default=None, help="write turn log as JSON lines on exit")
    chat.set_defaults(handler=_cmd_chat)

    replay = sub.add_parser("replay", help="run a scripted conversation end to end")
    replay.add_argument("--script", required=True)
    replay.add_argument("--fixtures", default=None)
    replay.add_argument("--assert-store", default=None, help="golden rules file to diff against")
    replay.add_argument("--transcript", default=None)
    replay.set_defaults(handler=_cmd_replay)

    analyze = sub.add_parser("analyze", help="stage-transition report from transcripts")
    analyze.add_argument("--transcripts", required=True, help="directory of .jsonl transcripts")
    analyze.add_argument("--csv", default=None, help="also write the matrix as CSV")
    analyze.add_argument(
        "--reference",
        action="store_true",
        help="include the published reference cells in the report",
    )
    analyze.set_defaults(handler=_cmd_analyze)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--listen", default=None, help="host:port (default 127.0.0.1:8750)")
    serve.add_argument("--provider", choices=("scripted", "remote"), default=None)
    serve.add_argument("--script", default=None)
    serve.add_argument("--endpoint", default=None)
    serve.add_argument("--model", default=None)
    serve.add_argument("--fixtures", default=None)
    serve.add_argument("--cascade-limit", type=int, default=None)
    serve.add_argument("--config", default=None, help="JSON config file")
    serve.set_defaults(handler=_cmd_serve)

    return parser


def _resolve_script(name_or_path: str) -> Path:
    path = Path(name_or_path)
    if path.is_file():
        return path
    try:
        return script_path(name_or_path)
    except ConfigError:
        raise ConfigError(f"script file not found: {name_or_path}")


def _load_env(scenario: str, fixtures: str | None):
    if fixtures is not None:
        return load_environment(Path(fixtures) / f"{scenario}.json")
    return load_environment(scenario)


def _use_color() -> bool:
    return sys.stdout.isatty() and "NO_COLOR" not in os.environ


def _stage_tag(stage_value: str) -> str:
    if _use_color():
        return f"\x1b[36m[{stage_value}]\x1b[0m"
    return f"[{stage_value}]"


def _cmd_chat(args: argparse.Namespace) -> int:
    if args.provider == "scripted":
        if not args.script:
            raise ConfigError("scripted provider needs --script")
        script = load_script(_resolve_script(args.script))
        scenario = args.scenario or script.scenario or "vr-museum"
        bundle = ProviderBundle.scripted(script)
        seeds = script.seed_automations
    else:
        if not (args.endpoint and args.model):
            raise ConfigError("remote provider needs --endpoint and --model")
        if not os.environ.get("ECABOT_API_KEY"):
            raise ConfigError("remote provider needs ECABOT_API_KEY set")
        scenario = args.scenario or "vr-museum"
        bundle = ProviderBundle.remote(args.endpoint, args.model)
        seeds = []

    env = _load_env(scenario, args.fixtures)
    store = RuleStore()
    for raw in seeds:
        store.add_rule(rule_from_dict(raw), env)
    orchestrator = Orchestrator(scenario, env, store, bundle)
    state = orchestrator.new_state("chat")

    print(f"scenario: {scenario} (end with Ctrl-D)")
    interactive = sys.stdin.isatty()
    while True:
        if interactive:
            try:
                text = input("you> ")
            except EOFError:
                break
        else:
            text = sys.stdin.readline()
            if not text:
                break
        text = text.strip()
        if not text:
            continue
        try:
            turn = orchestrator.step(state, text)
        except ProviderError as exc:
            print(f"{_stage_tag('error')} {exc}", file=sys.stderr)
            continue
        print(f"{_stage_tag(turn.stage.value)} {turn.message}")

    if args.transcript:
        _write_transcript(state, args.transcript)
    print(f"{len(store)} automation(s) in store", file=sys.stderr)
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    script = load_script(_resolve_script(args.script))
    scenario = script.scenario or "vr-museum"
    env = _load_env(scenario, args.fixtures)
    state, store, _, _ = run_script(script, env=env)
    for record in state.turn_log:
        print(f"{_stage_tag(record.turn.stage.value)} {record.turn.message}")
    serialized = serialize_rules(store)
    if args.transcript:
        _write_transcript(state, args.transcript)
    if args.assert_store:
        golden_path = Path(args.assert_store)
        if not golden_path.is_file():
            raise ConfigError(f"golden store not found: {golden_path}")
        golden = golden_path.read_text(encoding="utf-8").strip()
        if serialized != golden:
            print("store mismatch:", file=sys.stderr)
            diff = difflib.unified_diff(
                [golden], [serialized], fromfile=str(golden_path), tofile="replayed", lineterm=""
            )
            for line in diff:
                print(line, file=sys.stderr)
            return 1
        print("store matches golden", file=sys.stderr)
    else:
        print(serialized)
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    directory = Path(args.transcripts)
    if not directory.is_dir():
        raise ConfigError(f"transcripts directory not found: {directory}")
    conversations = []
    for path in sorted(directory.iterdir()):
        if path.suffix not in (".jsonl", ".ndjson"):
            continue
        lines = path.read_text(encoding="utf-8").splitlines()
        try:
            stages = stages_from_transcript(lines, where=str(path))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        if stages:
            conversations.append(stages)
    matrix = transitions(conversations)
    reference = load_reference_matrices() if args.reference else None
    sys.stdout.write(render_report(matrix, reference))
    if args.csv:
        Path(args.csv).write_text(render_csv(matrix), encoding="utf-8", newline="")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    overrides = {
        "listen": args.listen,
        "provider": args.provider,
        "script": args.script,
        "endpoint": args.endpoint,
        "model": args.model,
        "fixtures_dir": args.fixtures,
        "cascade_limit": args.cascade_limit,
    }
    config = load_config(path=args.config, overrides=overrides)
    if config.provider == "scripted":
        config.script = str(_resolve_script(config.script))
    from .service import create_app
    import uvicorn

    host, port = config.host_port()
    app = create_app(config)
    print(f"listening on http://{host}:{port}", file=sys.stderr)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def _write_transcript(state, out: str) -> None:
    lines = state.transcript_lines()
    Path(out).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


if __name__ == "__main__":
    sys.exit(main())
