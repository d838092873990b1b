"""End-to-end benchmark run: solve, simulate and verify the standard model.

Writes the benchmark problem file and every CSV artifact into an output
directory (default ./benchmark_out).

    python scripts/run_benchmark.py [outdir] [--paths 20000] [--seed 42]
"""

import argparse
import json
import sys
from pathlib import Path

from lqstack.cli import main as cli_main

BENCHMARK = {
    "A": 0.1, "B1": 1.0, "B2": 1.0, "C": 0.2, "D1": 0.0, "D2": 0.0, "h": 1.0,
    "Q1": 1.0, "R1": 1.0, "Q2": 1.0, "R2": 1.0, "G1": 1.0, "G2": 1.0,
    "x0": 1.0, "T": 1.0, "steps": 200,
}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("outdir", nargs="?", default="benchmark_out")
    parser.add_argument("--paths", type=int, default=20000)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "benchmark.json"
    model_path.write_text(json.dumps(BENCHMARK, indent=2))

    common = ["--model", str(model_path), "--out", str(out),
              "--paths", str(args.paths), "--seed", str(args.seed)]
    for command in ("validate", "solve", "simulate", "verify"):
        print(f"--- lqstack {command}")
        code = cli_main([command, *common])
        if code != 0:
            print(f"{command} exited with {code}", file=sys.stderr)
            return code
    print(f"artifacts in {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
