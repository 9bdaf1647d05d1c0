"""Compiled vs pure-numpy kernels.

Each backend runs in its own interpreter (the switch is read at import time):

    python3 benchmarks/bench_kernels.py            # both, prints a table
    python3 benchmarks/bench_kernels.py --repeat 5 --json bench.json
"""
import argparse
import json
import os
import subprocess
import sys
import time

CASES = {
    # one extremal of the barrier-free model over t = 20
    "extremal": "from lindblad_geo.integrator import integrate_extremal\n"
                "z = ExtremalPoint(0.0, math.pi/4, 0.0, ReducedCostate(1.0, -1.0, 2.0))\n"
                "def run():\n"
                "    return integrate_extremal(z, P, (0.0, 20.0), Tolerances()).y_end\n",
    # extremal plus two Jacobi fields and the conjugate-point scan
    "conjugate": "from lindblad_geo.analysis import conjugate_time, normalize_to_level\n"
                 "z = normalize_to_level(ExtremalPoint(0.0, math.pi/4, 0.0, ReducedCostate(0.5, 1.0, 2.0)), P)\n"
                 "def run():\n"
                 "    return np.array([conjugate_time(z, P, 20.0, Tolerances())[0]])\n",
    # Grusin return map, numeric
    "return_map": "from lindblad_geo.grusin import return_map_numeric\n"
                  "def run():\n"
                  "    return np.array([return_map_numeric(0.5, 0.8).delta_theta])\n",
}

PRELUDE = """
import math, sys, time, json
import numpy as np
from lindblad_geo import BACKEND, DissipationParams, ExtremalPoint, ReducedCostate
from lindblad_geo.integrator import Tolerances
P = DissipationParams(2.5, 2.0)
"""

RUNNER = """
t0 = time.perf_counter(); first = run(); warm = time.perf_counter() - t0
ts = []
for _ in range({repeat}):
    t0 = time.perf_counter(); out = run(); ts.append(time.perf_counter() - t0)
print(json.dumps({{"backend": BACKEND, "first": warm, "best": min(ts), "result": [float(v) for v in np.ravel(out)]}}))
"""


def run_case(name, pure, repeat):
    env = dict(os.environ, LINDBLAD_GEO_PURE="1" if pure else "0")
    src = PRELUDE + CASES[name] + RUNNER.format(repeat=repeat)
    out = subprocess.run([sys.executable, "-c", src], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--cases", nargs="*", default=list(CASES))
    ap.add_argument("--json", metavar="PATH")
    args = ap.parse_args(argv)

    rows = []
    for name in args.cases:
        fast = run_case(name, False, args.repeat)
        slow = run_case(name, True, args.repeat)
        diff = max(abs(a - b) for a, b in zip(fast["result"], slow["result"]))
        rows.append({"case": name, "numba_s": fast["best"], "numba_first_s": fast["first"],
                     "pure_s": slow["best"], "speedup": slow["best"] / fast["best"], "max_abs_diff": diff})

    print(f"{'case':<12}{'numba [s]':>12}{'first [s]':>12}{'pure [s]':>12}{'speedup':>10}{'|diff|':>11}")
    for r in rows:
        print(f"{r['case']:<12}{r['numba_s']:>12.4f}{r['numba_first_s']:>12.3f}{r['pure_s']:>12.3f}"
              f"{r['speedup']:>10.1f}{r['max_abs_diff']:>11.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)
    return rows


if __name__ == "__main__":
    main()
