"""Command-line surface: run, metrics, plot, validate-config, make-config, serve."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Sequence

from pydantic import ValidationError

from .config import get_settings
from .config_loader import (
    DEFAULT_PRESET,
    PRESETS,
    config_schema,
    dump_config,
    load_config,
    preset,
    resolve_config,
)
from .contracts.experiment import SSL_KIND_ALIASES, ExperimentConfig, config_hash
from .contracts.metrics import (
    AccuracyMatrix,
    MetricsReport,
    TableEntry,
    single_task_from_csv,
)
from .errors import EXIT_NO_COMMAND, EXIT_OK, ConfigError, KaizenError, MetricsError, RuntimeFailure
from .eval_metrics import build_report, render_table, summarize_reports
from .experiment import expand_sweep, load_run, run_experiment
from .logging import get_logger
from .plotting import PLOT_KINDS, plot_runs
from .version import get_version_info

logger = get_logger(__name__)


def _json_out(payload: Any) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _text_out(title: str, items: dict[str, Any]) -> None:
    print(title)
    for key, value in items.items():
        print(f"{key}: {value}")


def _load_run_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.preset:
        return preset(args.preset)
    if not args.config:
        raise ConfigError("a config file or --preset is required")
    return load_config(Path(args.config))


def _handle_run(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    if args.output_dir:
        config = config.model_copy(update={"output_dir": Path(args.output_dir)})
    configs = expand_sweep(
        config,
        strategies=args.strategy or (),
        ssl_kinds=args.ssl_kind or (),
        replay_fractions=args.replay_fraction or (),
    )
    runs = []
    for item in configs:
        result = run_experiment(item, force=args.force, resume=args.resume)
        runs.append(
            {
                "name": item.name,
                "run_dir": str(result.run_dir),
                "config_hash": result.config_hash,
                "summary": result.summary.model_dump(mode="json") if result.summary else None,
            }
        )
        if args.format == "text":
            print(f"{item.name} -> {result.run_dir}")
            print((result.run_dir / "table.txt").read_text(encoding="utf-8"), end="")
    if args.format == "json":
        _json_out({"count": len(runs), "runs": runs})
    return EXIT_OK


def _read_matrix(path: Path, single_task: list[float] | None) -> AccuracyMatrix | MetricsReport:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".csv":
        return AccuracyMatrix.from_csv(text, single_task=single_task)
    data = json.loads(text)
    if isinstance(data, dict) and "final_accuracy" in data:
        return MetricsReport.model_validate(data)
    matrix = AccuracyMatrix.model_validate(data)
    if single_task is not None:
        matrix = matrix.with_single_task(single_task)
    return matrix


def _handle_metrics(args: argparse.Namespace) -> int:
    single_task = None
    if args.single_task:
        try:
            single_task = single_task_from_csv(Path(args.single_task).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise MetricsError(f"{args.single_task}: {exc}") from exc

    reports: list[tuple[Path, MetricsReport]] = []
    problems: list[dict[str, str]] = []
    for name in args.matrices:
        path = Path(name)
        try:
            loaded = _read_matrix(path, single_task)
            report = loaded if isinstance(loaded, MetricsReport) else build_report(loaded)
            reports.append((path, report))
        except ValidationError as exc:
            problems += [
                {"file": name, "field": ".".join(map(str, e["loc"])) or "<root>", "message": e["msg"]}
                for e in exc.errors()
            ]
        except (OSError, ValueError, KaizenError) as exc:
            problems.append({"file": name, "field": "<file>", "message": str(exc)})
    if problems:
        raise MetricsError(f"{len(problems)} schema problem(s) in the inputs", details={"errors": problems})

    summary = summarize_reports([report for _, report in reports])
    table = render_table(
        [TableEntry(strategy=args.strategy, ssl_kind=args.ssl_kind, summary=summary)]
    )
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for path, report in reports:
            (out / f"{path.stem}.metrics.json").write_text(
                report.model_dump_json(indent=2) + "\n", encoding="utf-8"
            )
        (out / "table.txt").write_text(table, encoding="utf-8")
    if args.format == "json":
        _json_out(
            {
                "reports": {str(p): r.model_dump(mode="json") for p, r in reports},
                "summary": summary.model_dump(mode="json"),
            }
        )
    else:
        print(table, end="")
    return EXIT_OK


def _handle_plot(args: argparse.Namespace) -> int:
    runs = [load_run(Path(d)) for d in args.runs]
    out = plot_runs(args.kind, runs, Path(args.output))
    if args.format == "json":
        _json_out({"kind": args.kind, "output": str(out), "runs": len(runs)})
    else:
        print(f"wrote {out}")
    return EXIT_OK


def _handle_validate(args: argparse.Namespace) -> int:
    config = load_config(Path(args.config))
    resolved = resolve_config(config)
    payload = {
        "valid": True,
        "name": config.name,
        "config_hash": config_hash(resolved),
        "epochs_per_task": resolved.resolved_epochs(),
    }
    if args.format == "json":
        _json_out(payload)
    else:
        _text_out(f"{args.config}: ok", payload)
    return EXIT_OK


def _handle_make_config(args: argparse.Namespace) -> int:
    text = config_schema() + "\n" if args.schema else dump_config(preset(args.preset))
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        print(text, end="")
    return EXIT_OK


def _handle_version(args: argparse.Namespace) -> int:
    payload = asdict(get_version_info())
    if args.format == "json":
        _json_out(payload)
    else:
        _text_out("kaizen version", payload)
    return EXIT_OK


def _handle_serve(args: argparse.Namespace) -> int:
    import uvicorn

    settings = get_settings()
    uvicorn.run(
        "apps.api.main:app",
        host=args.host or settings.api_host,
        port=args.port or settings.api_port,
        log_level=settings.log_level.lower(),
    )
    return EXIT_OK


def _add_format(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=("text", "json"), default="text", help="Output format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kaizen",
        description="Continual self-supervised learning experiments.",
    )
    subparsers = parser.add_subparsers(dest="command")

    run_parser = subparsers.add_parser("run", help="Run an experiment config")
    run_parser.add_argument("config", nargs="?", help="YAML experiment config")
    run_parser.add_argument("--preset", choices=sorted(PRESETS), help="Use a shipped preset")
    run_parser.add_argument("--output-dir", help="Override the output directory")
    run_parser.add_argument("--force", action="store_true", help="Replace an existing run directory")
    run_parser.add_argument("--resume", action="store_true", help="Continue from checkpoints")
    run_parser.add_argument(
        "--strategy",
        action="append",
        choices=("kaizen", "cassle", "no_distill"),
        help="Sweep over strategies (repeatable)",
    )
    run_parser.add_argument(
        "--ssl-kind",
        action="append",
        choices=sorted(set(SSL_KIND_ALIASES.values())),
        help="Sweep over SSL methods (repeatable)",
    )
    run_parser.add_argument(
        "--replay-fraction", action="append", type=float, help="Sweep over replay fractions (repeatable)"
    )
    _add_format(run_parser)
    run_parser.set_defaults(func=_handle_run)

    metrics_parser = subparsers.add_parser("metrics", help="Compute FA/CA/F/FT from matrix files")
    metrics_parser.add_argument("matrices", nargs="+", help="Accuracy matrix CSV/JSON or report JSON files")
    metrics_parser.add_argument("--single-task", help="Single-task accuracy CSV for forward transfer")
    metrics_parser.add_argument("--output-dir", help="Write metrics and table files here")
    metrics_parser.add_argument("--strategy", default="-", help="Strategy label for the table")
    metrics_parser.add_argument("--ssl-kind", default="-", help="SSL label for the table")
    _add_format(metrics_parser)
    metrics_parser.set_defaults(func=_handle_metrics)

    plot_parser = subparsers.add_parser("plot", help="Plot figures from run directories")
    plot_parser.add_argument("runs", nargs="+", help="Run directories")
    plot_parser.add_argument("--kind", choices=PLOT_KINDS, default="average")
    plot_parser.add_argument("--output", required=True, help="Image file to write")
    _add_format(plot_parser)
    plot_parser.set_defaults(func=_handle_plot)

    validate_parser = subparsers.add_parser("validate-config", help="Validate a config file")
    validate_parser.add_argument("config", help="YAML experiment config")
    _add_format(validate_parser)
    validate_parser.set_defaults(func=_handle_validate)

    make_parser = subparsers.add_parser("make-config", help="Print a full-default config")
    make_parser.add_argument("--preset", choices=sorted(PRESETS), default=DEFAULT_PRESET)
    make_parser.add_argument("--schema", action="store_true", help="Print the JSON schema instead")
    make_parser.add_argument("--output", help="Write to a file instead of stdout")
    make_parser.set_defaults(func=_handle_make_config)

    version_parser = subparsers.add_parser("version", help="Show version/build metadata")
    _add_format(version_parser)
    version_parser.set_defaults(func=_handle_version)

    serve_parser = subparsers.add_parser("serve", help="Serve the metrics HTTP API")
    serve_parser.add_argument("--host", help="Bind address (default KAIZEN_API_HOST)")
    serve_parser.add_argument("--port", type=int, help="Port (default KAIZEN_API_PORT)")
    serve_parser.set_defaults(func=_handle_serve)

    return parser


def _report(args: argparse.Namespace, exc: KaizenError) -> int:
    if getattr(args, "format", "text") == "json":
        _json_out(exc.to_payload())
    else:
        print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
        for item in exc.details.get("errors", []):
            location = " ".join(str(v) for k, v in item.items() if k != "message")
            print(f"  - {location}: {item['message']}", file=sys.stderr)
    return exc.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(list(argv) if argv is not None else None)

    handler = getattr(args, "func", None)
    if handler is None:
        parser.print_help()
        return EXIT_NO_COMMAND

    try:
        return int(handler(args))
    except KaizenError as exc:
        return _report(args, exc)
    except Exception as exc:
        logger.error("command failed | command=%s", args.command, exc_info=exc)
        failure = RuntimeFailure(str(exc) or type(exc).__name__, details={"type": type(exc).__name__})
        return _report(args, failure)


if __name__ == "__main__":
    raise SystemExit(main())
