"""Command-line entry points: pack, sample, bench, serve."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import bench as bench_mod
from . import pack as pack_mod
from . import sampler as sampler_mod
from .server import EpisodeServer
from .tasks import ConfigError, load_task_config


def _cmd_pack_ingest(args: argparse.Namespace) -> int:
    pack = pack_mod.ingest(args.source, args.res, name=args.name)
    pack_mod.write_pack(pack, args.out)
    print(f"packed {pack.total_samples} samples in {pack.num_classes} classes -> {args.out}")
    return 0


def _cmd_pack_slim(args: argparse.Namespace) -> int:
    pack = pack_mod.read_pack(args.pack)
    slimmed = pack_mod.slim(pack, args.max_per_class)
    out = args.out or args.pack
    pack_mod.write_pack(slimmed, out)
    print(f"slimmed to {slimmed.total_samples} samples (max {args.max_per_class}/class) -> {out}")
    return 0


def _cmd_pack_split(args: argparse.Namespace) -> int:
    pack = pack_mod.read_pack(args.pack)
    spec = pack_mod.SplitSpec(train=args.train, val=args.val, test=args.test)
    out_dir = Path(args.out_dir or args.pack)
    parts = pack_mod.split_by_class(pack, spec)
    for part, name in zip(parts, ("train", "val", "test")):
        pack_mod.write_pack(part, out_dir / name)
        print(f"{name}: {part.num_classes} classes, {part.total_samples} samples")
    return 0


def _cmd_pack_stats(args: argparse.Namespace) -> int:
    report = pack_mod.stats(pack_mod.read_pack(args.pack))
    data = asdict(report)
    data["resolution"] = list(report.resolution)
    print(json.dumps(data, sort_keys=True, indent=2))
    return 0


def _cmd_sample(args: argparse.Namespace) -> int:
    pack = pack_mod.read_pack(args.pack)
    config = load_task_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for episode in sampler_mod.sample_eval_suite(pack, config, args.count):
        sampler_mod.write_episode(episode, out / f"episode_{episode.episode_index:06d}.json")
    print(f"wrote {args.count} episode manifests to {out}")
    return 0


def _cmd_bench_run(args: argparse.Namespace) -> int:
    plan = bench_mod.load_plan(args.plan)
    report = bench_mod.run_benchmark(plan)
    Path(args.out).write_text(bench_mod.report_to_csv(report), encoding="utf-8")
    print(f"wrote {len(report.rows)} rows to {args.out}")
    return 1 if report.has_errors else 0


def _cmd_bench_render(args: argparse.Namespace) -> int:
    report = bench_mod.report_from_csv(Path(args.report).read_text(encoding="utf-8"))
    print(bench_mod.render_report(report, format=args.format))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    host, _, port = args.bind.rpartition(":")
    pack = pack_mod.read_pack(args.pack)
    config = load_task_config(args.config)
    server = EpisodeServer(pack, config, host=host or "127.0.0.1", port=int(port),
                           idle_timeout=args.idle_timeout)
    bound_host, bound_port = server.address
    print(f"listening on {bound_host}:{bound_port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfsl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_pack = sub.add_parser("pack", help="build and inspect dataset packs")
    pack_sub = p_pack.add_subparsers(dest="pack_command", required=True)

    p = pack_sub.add_parser("ingest", help="pack a directory of class-labeled images")
    p.add_argument("source")
    p.add_argument("--res", type=int, required=True, help="target square resolution")
    p.add_argument("--out", required=True, help="output pack directory")
    p.add_argument("--name", default=None)
    p.set_defaults(func=_cmd_pack_ingest)

    p = pack_sub.add_parser("slim", help="keep at most N samples per class")
    p.add_argument("pack")
    p.add_argument("--max-per-class", type=int, required=True)
    p.add_argument("--out", default=None, help="output pack directory (default: in place)")
    p.set_defaults(func=_cmd_pack_slim)

    p = pack_sub.add_parser("split", help="class-disjoint train/val/test split")
    p.add_argument("pack")
    p.add_argument("--train", type=int, required=True)
    p.add_argument("--val", type=int, required=True)
    p.add_argument("--test", type=int, required=True)
    p.add_argument("--out-dir", default=None, help="directory for train/ val/ test/ packs")
    p.set_defaults(func=_cmd_pack_split)

    p = pack_sub.add_parser("stats", help="suitability report for a pack")
    p.add_argument("pack")
    p.set_defaults(func=_cmd_pack_stats)

    p = sub.add_parser("sample", help="write episode manifests for a task family")
    p.add_argument("--pack", required=True)
    p.add_argument("--config", required=True, help="task config JSON file")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory for manifests")
    p.set_defaults(func=_cmd_sample)

    p_bench = sub.add_parser("bench", help="run and render benchmark grids")
    bench_sub = p_bench.add_subparsers(dest="bench_command", required=True)

    p = bench_sub.add_parser("run", help="execute a benchmark plan")
    p.add_argument("--plan", required=True, help="plan JSON file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_bench_run)

    p = bench_sub.add_parser("render", help="render a report CSV")
    p.add_argument("report")
    p.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    p.set_defaults(func=_cmd_bench_render)

    p = sub.add_parser("serve", help="stream episodes over TCP")
    p.add_argument("--pack", required=True)
    p.add_argument("--config", required=True, help="task config JSON file")
    p.add_argument("--bind", default="127.0.0.1:0", help="HOST:PORT (port 0 picks one)")
    p.add_argument("--idle-timeout", type=float, default=300.0)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (pack_mod.IngestError, pack_mod.EmptySource, pack_mod.SplitError,
            bench_mod.PlanError, ConfigError, sampler_mod.NotEnoughClasses,
            sampler_mod.NotEnoughSamples, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
