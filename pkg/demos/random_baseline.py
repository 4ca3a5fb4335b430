"""How well does flailing do? Uniform random actions on every bundled track.

This is the floor a learned controller has to beat: the learning-contrast
acceptance check compares against exactly this harness (10 mean-mode
episodes from the per-seed evaluation seeds).

    python3 demos/random_baseline.py --seeds 0 1 2
"""
import argparse

from dreamrace.agents import RandomAgent
from dreamrace.config import RunConfig
from dreamrace.env.track import PRESETS
from dreamrace.evaluate import evaluate_agent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--episodes", type=int, default=10)
    args = ap.parse_args()
    cfg = RunConfig()
    print(f"{'track':<16}{'seed':>5}{'return':>10}{'std':>8}{'gates':>7}")
    for name in PRESETS:
        for seed in args.seeds:
            s, _ = evaluate_agent(RandomAgent(), cfg, args.episodes, seed, track=name)
            print(f"{name:<16}{seed:>5}{s['return_mean']:>10.3f}{s['return_std']:>8.3f}{s['gates_mean']:>7.2f}")


if __name__ == "__main__":
    main()
