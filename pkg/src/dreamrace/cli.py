"""Command-line entry point: ``dreamrace {train,eval,render-trajectory,plot-metrics,grad-check}``."""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys

import yaml

from .errors import ConfigurationError, DreamraceError


def parse_assignment(text: str) -> tuple[str, str, object]:
    """``section.key=value`` with the value parsed as YAML (so ``3``, ``1e-4``, ``[0, 1]`` work)."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigurationError(f"override {text!r} must look like section.key=value")
    lhs, rhs = text.split("=", 1)
    section, key = lhs.split(".", 1)
    return section.strip(), key.strip(), yaml.safe_load(rhs)


def overrides_from(assignments) -> dict:
    out: dict = {}
    for text in assignments or ():
        section, key, value = parse_assignment(text)
        out.setdefault(section, {})[key] = value
    return out


def single_threaded():
    """Limit BLAS pools to one thread so float reductions run in a fixed order."""
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=1)


def cmd_train(args) -> int:
    from .config import load_config
    from .trainer import train

    overrides = overrides_from(args.set)
    if args.output_dir:
        overrides.setdefault("run", {})["output_dir"] = args.output_dir
    cfg = load_config(args.config, overrides)
    seeds = [args.seed] if args.seed is not None else list(cfg.run.seeds)
    ctx = single_threaded() if args.single_threaded else contextlib.nullcontext()
    with ctx:
        for seed in seeds:
            run_dir = train(cfg, seed, resume=args.resume)
            print(run_dir)
    return 0


def cmd_eval(args) -> int:
    from .config import load_config
    from .evaluate import evaluate

    if args.policy == "checkpoint" and not args.checkpoint:
        raise ConfigurationError("eval needs --checkpoint unless --policy random")
    config = load_config(args.config, overrides_from(args.set)) if args.policy == "random" else None
    report = evaluate(
        checkpoint=args.checkpoint if args.policy == "checkpoint" else None,
        track=args.track,
        episodes=args.episodes,
        mode=args.mode,
        out_dir=args.out,
        seed=args.seed,
        config=config,
    )
    summary = {k: v for k, v in report.items() if k != "episodes_detail"}
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_render(args) -> int:
    from .visualize import render_trajectory

    written = render_trajectory(args.file, args.out, arrow_every=args.arrow_every, frames=not args.no_frames)
    for key, value in written.items():
        print(f"{key}: {value}")
    return 0


def cmd_plot(args) -> int:
    from .visualize import export_metric_series

    for kind, path in export_metric_series(args.run_dir, args.out).items():
        print(f"{kind}: {path}")
    return 0


def cmd_grad_check(args) -> int:
    from .gradsuite import TOLERANCE, format_report, run_suite

    report = run_suite(args.only or None, tolerance=args.tolerance or TOLERANCE)
    print(format_report(report))
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dreamrace", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one or all configured seeds")
    t.add_argument("--config", default="default", help="YAML file or bundled config name (default: default)")
    t.add_argument("--seed", type=int, help="train only this seed")
    t.add_argument("--single-threaded", action="store_true", help="one BLAS thread, for bitwise reproducibility")
    t.add_argument("--resume", action="store_true", help="continue from the run directory's checkpoint")
    t.add_argument("--output-dir", help="output root (overrides run.output_dir and DREAMRACE_OUTPUT_ROOT)")
    t.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config key")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint or the random policy")
    e.add_argument("--checkpoint")
    e.add_argument("--policy", choices=("checkpoint", "random"), default="checkpoint")
    e.add_argument("--track", help="track preset name or YAML path (default: the trained track)")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--mode", choices=("mean", "sample"), default="mean")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="directory for report.json and per-episode trajectories")
    e.add_argument("--config", default="default", help="config for --policy random")
    e.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    e.set_defaults(fn=cmd_eval)

    r = sub.add_parser("render-trajectory", help="frames, overhead path with camera arrows, speed series")
    r.add_argument("file")
    r.add_argument("--out", required=True)
    r.add_argument("--arrow-every", type=int, default=10)
    r.add_argument("--no-frames", action="store_true", help="skip the onboard frames")
    r.set_defaults(fn=cmd_render)

    m = sub.add_parser("plot-metrics", help="export metric series as CSV for external plotting")
    m.add_argument("run_dir")
    m.add_argument("--out", help="output directory (default: <run-dir>/series)")
    m.set_defaults(fn=cmd_plot)

    g = sub.add_parser("grad-check", help="finite-difference check of every op, network and loss")
    g.add_argument("--only", nargs="*", help="run only these checks")
    g.add_argument("--tolerance", type=float)
    g.set_defaults(fn=cmd_grad_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (DreamraceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
