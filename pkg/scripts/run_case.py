"""Solve a bundled case study, verify it and write plot data.

    python3 scripts/run_case.py case1 --output runs/case1
"""

import argparse
import logging
from pathlib import Path

from rodplan import cli


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("scenario", help="bundled name (case1, case2, line) or YAML path")
    p.add_argument("--output", type=Path, default=None)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = args.output or Path("runs") / Path(args.scenario).stem
    code = cli.solve_command(args.scenario, out)
    ns = cli.build_parser().parse_args(["plotdata", str(out / "solution.json"), "--scenario", args.scenario])
    for path in cli.plotdata_command(out / "solution.json", out / "plot", ns):
        print("wrote", path)
    raise SystemExit(code)


if __name__ == "__main__":
    main()
