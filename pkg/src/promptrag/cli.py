"""Command-line interface.

Exit codes: 0 success, 1 configuration error, 2 partial failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .corpus import DatasetError
from .judge import DEFAULT_JUDGE_MODEL
from .mock import MockBehavior, load_behavior
from .modelclient import ConfigError, GenParams, ModelEndpointConfig, probe
from .reporting import RunLockedError, render_table, run_lock
from .runner import EndpointUnreachable, RunConfig, Runner
from .templates import TemplateError, load_template_dir, registry
from .verify import PUBLISHED, FixtureError, published_path, verify_tables

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2
MOCK_URL = "http://mock.invalid/v1"
DEFAULT_JUDGE_URL = "https://api.openai.com/v1"


def _endpoint_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("endpoints")
    g.add_argument("--model-url", action="append", default=[], help="generator base URL (repeatable)")
    g.add_argument("--model-name", action="append", default=[], help="generator model name (repeatable)")
    g.add_argument("--model-key-env", default="MODEL_API_KEY", help="env var holding the generator key; '' for none")
    g.add_argument("--judge-url", default=None)
    g.add_argument("--judge-model", default=DEFAULT_JUDGE_MODEL)
    g.add_argument("--judge-key-env", default="JUDGE_API_KEY", help="env var holding the judge key; '' for none")
    g.add_argument("--timeout", type=float, default=120.0, help="per-request timeout in seconds")
    g.add_argument("--max-retries", type=int, default=2)


def _run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", type=Path, required=True, help="JSONL dataset file")
    p.add_argument("--templates", default=None, help="comma-separated template ids (default: all)")
    p.add_argument("--template-dir", type=Path, default=None, help="directory of extra template files")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="sample --limit instances with this seed")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--judge-concurrency", type=int, default=1)
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--max-tokens", type=int, default=1024)
    p.add_argument("--cache-dir", type=Path, default=Path(".promptrag-cache"))
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--mock", action="store_true", help="use in-process mock endpoints")
    p.add_argument("--mock-behavior", type=Path, default=None, help="JSON mock behavior file")
    p.add_argument("--fixed-clock", action="store_true", help="deterministic timings and timestamps")
    p.add_argument("--skip-judge", action="store_true")
    p.add_argument("--top-k", type=int, default=None, help="rows shown in the printed table")
    _endpoint_args(p)


def _model_configs(args, mock: bool) -> list[ModelEndpointConfig]:
    names = args.model_name or (["mock-model"] if mock else [])
    urls = args.model_url or ([MOCK_URL] if mock else [])
    if not names:
        raise ConfigError("--model-name is required")
    if not urls:
        raise ConfigError("--model-url is required")
    if len(urls) not in (1, len(names)):
        raise ConfigError("give one --model-url, or one per --model-name")
    if len(urls) == 1:
        urls = urls * len(names)
    key_env = None if mock else (args.model_key_env or None)
    return [
        ModelEndpointConfig(u, n, key_env, args.timeout, args.max_retries) for u, n in zip(urls, names)
    ]


def _judge_config(args, mock: bool) -> ModelEndpointConfig:
    url = args.judge_url or (MOCK_URL if mock else DEFAULT_JUDGE_URL)
    key_env = None if mock else (args.judge_key_env or None)
    return ModelEndpointConfig(url, args.judge_model, key_env, args.timeout, args.max_retries)


def build_config(args, require_judge: bool = True) -> RunConfig:
    mock = args.mock or args.mock_behavior is not None
    behavior = None
    if mock:
        behavior = load_behavior(args.mock_behavior) if args.mock_behavior else MockBehavior()
    skip = getattr(args, "skip_judge", False)
    return RunConfig(
        dataset=args.dataset,
        models=_model_configs(args, mock),
        judge=None if (skip and not require_judge) else _judge_config(args, mock),
        template_ids=[t.strip() for t in args.templates.split(",") if t.strip()] if args.templates else None,
        template_dir=args.template_dir,
        gen_params=GenParams(args.temperature, args.max_tokens),
        concurrency=args.concurrency,
        judge_concurrency=args.judge_concurrency,
        limit=args.limit,
        seed=args.seed,
        repeats=args.repeats,
        cache_dir=args.cache_dir,
        out_dir=args.out,
        skip_judge=skip,
        mock=behavior,
        fixed_clock=args.fixed_clock,
    )


def _print_tables(result, top_k) -> None:
    for name, board in result.leaderboards.items():
        print(f"\n== {name} ==")
        print(render_table(board, top_k=top_k), end="")
    print(f"\ncells: {result.cell_count}  failed: {result.n_failed}")


def cmd_list_templates(args) -> int:
    templates = registry()
    if args.template_dir:
        templates += load_template_dir(args.template_dir)
    for t in templates:
        flag = " (reconstructed)" if t.reconstructed else ""
        print(f"{t.id:<46} {t.category.value:<16} {t.context_mode.value:<11} {t.doc_label_style.value}{flag}")
    return EXIT_OK


def cmd_probe(args) -> int:
    mock = False
    status = EXIT_OK
    targets = _model_configs(args, mock) if args.model_name or args.model_url else []
    if args.judge_url:
        targets.append(_judge_config(args, mock))
    if not targets:
        raise ConfigError("nothing to probe: give --model-url/--model-name or --judge-url")
    for cfg in targets:
        rep = probe(cfg)
        if rep.reachable:
            print(f"{cfg.model_name} @ {cfg.base_url}: reachable (reports model {rep.reported_model!r})")
        else:
            print(f"{cfg.model_name} @ {cfg.base_url}: UNREACHABLE ({rep.error})")
            status = EXIT_CONFIG
    return status


def cmd_run(args) -> int:
    config = build_config(args, require_judge=False)
    with Runner(config) as runner:
        result = runner.run()
        if result is None:
            print(f"generated {runner.generation_calls} cell(s); judging skipped")
            return EXIT_OK
    _print_tables(result, args.top_k)
    print(f"exports written under {config.out_dir}")
    return result.exit_code


def cmd_judge(args) -> int:
    config = build_config(args)
    with Runner(config) as runner:
        lock = run_lock(config.out_dir)
        try:
            n = runner.judge_stage(force=args.force)
            result = runner.report()
        finally:
            lock.release()
    print(f"judged {n} cell(s)")
    _print_tables(result, args.top_k)
    return result.exit_code


def cmd_report(args) -> int:
    config = build_config(args)
    with Runner(config) as runner:
        lock = run_lock(config.out_dir)
        try:
            result = runner.report()
        finally:
            lock.release()
    _print_tables(result, args.top_k)
    return result.exit_code


def cmd_verify_tables(args) -> int:
    fixtures = args.fixtures or [str(published_path(n)) for n in PUBLISHED]
    ok = True
    for f in fixtures:
        report = verify_tables(f, tolerance=args.tolerance)
        print(report.format() if args.verbose or not report.passed else report.format().splitlines()[0])
        for c in report.failures:
            print(f"  residual too large: {c.prompt_method} ({c.residual:+.4f})")
        ok &= report.passed
    return EXIT_OK if ok else EXIT_PARTIAL


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptrag", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list-templates", help="show the template registry")
    p.add_argument("--template-dir", type=Path, default=None)
    p.set_defaults(func=cmd_list_templates)

    p = sub.add_parser("probe", help="check that endpoints answer")
    _endpoint_args(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("run", help="generate, judge and export the full matrix")
    _run_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("judge", help="(re-)judge cached generations and export")
    _run_args(p)
    p.add_argument("--force", action="store_true", help="re-judge cells that already have scores")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("report", help="re-export leaderboards from the cache")
    _run_args(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify-tables", help="check efficiency = accuracy / time in published tables")
    p.add_argument("fixtures", nargs="*", help="fixture CSV files (default: the shipped tables)")
    p.add_argument("--tolerance", type=float, default=0.002)
    p.set_defaults(func=cmd_verify_tables)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, DatasetError, TemplateError, FixtureError, RunLockedError, EndpointUnreachable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted; rerun the same command to resume", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
