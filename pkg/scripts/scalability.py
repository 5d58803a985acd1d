"""Time agent extraction against formation size for a solved rod.

    python3 scripts/scalability.py runs/case1/solution.json --agents 5 50 500 5000
"""

import argparse
import json
import time

import numpy as np

from rodplan import io
from rodplan import transcription as tr


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("solution")
    p.add_argument("--agents", type=int, nargs="+", default=[5, 50, 500, 5000])
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args()
    fields = io.load_solution(args.solution)
    t = np.linspace(0.0, fields.t_f, args.samples)
    rows = []
    for n_v in args.agents:
        best = np.inf
        for _ in range(args.repeats):
            start = time.perf_counter()
            traj = tr.extract_agents(fields, n_v, t)
            best = min(best, time.perf_counter() - start)
        rows.append({"agents": n_v, "seconds": best, "per_agent": best / n_v,
                     "max_speed": float(np.linalg.norm(traj.v, axis=-1).max()),
                     "max_rate": float(np.linalg.norm(traj.omega, axis=-1).max())})
        print(f"{n_v:6d} agents  {best * 1e3:9.3f} ms  {best / n_v * 1e6:8.2f} us/agent")
    print(json.dumps(rows, indent=1))


if __name__ == "__main__":
    main()
