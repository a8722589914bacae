"""Time episode rollouts on the native kernel against the pure-Python path.

Usage::

    python benchmarks/bench_rollout.py [--episodes 50] [--repeat 3]

Both paths run the same programs on the same seeds; the script also checks
that their totals agree exactly before reporting timings.
"""

from __future__ import annotations

import argparse
import time

from policyevo import reference_policy_text, rollout, sim
from policyevo.lang.generate import random_program
from policyevo.lang.parser import parse


def _time(programs, seeds, native: bool, repeat: int) -> tuple[float, list[float]]:
    best = float("inf")
    totals: list[float] = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        totals = [rollout.rollout_program(p, s, native=native).total_reward for p in programs for s in seeds]
        best = min(best, time.perf_counter() - t0)
    return best, totals


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=50)
    ap.add_argument("--programs", type=int, default=5, help="random programs besides the reference policy")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    programs = [parse(reference_policy_text())] + [random_program(s) for s in range(args.programs)]
    seeds = sim.episode_seeds(0, args.episodes)
    n = len(programs) * len(seeds)

    py_time, py_totals = _time(programs, seeds, False, args.repeat)
    print(f"python : {py_time:8.3f}s  {n / py_time:9.1f} episodes/s")
    if not rollout.HAVE_KERNEL:
        print("native : not built (install with a C compiler and Cython to enable)")
        return 0
    nat_time, nat_totals = _time(programs, seeds, True, args.repeat)
    print(f"native : {nat_time:8.3f}s  {n / nat_time:9.1f} episodes/s")
    print(f"speedup: {py_time / nat_time:.1f}x over {n} episodes (best of {args.repeat})")
    if nat_totals != py_totals:
        print("MISMATCH: native and python totals differ")
        return 1
    print("totals identical on both paths")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
