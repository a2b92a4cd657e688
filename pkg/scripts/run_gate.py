"""Optimize a gate config and print a short convergence summary.

    python3 scripts/run_gate.py configs/cnot.yaml --profile desk --output-dir runs/cnot_desk
"""
import argparse
import json
import sys
from pathlib import Path

from bandkrotov.cli import main as cli_main
from bandkrotov.io import read_csv


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--profile", default=None)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--threads", type=int, default=None)
    args = p.parse_args(argv)

    out = Path(args.output_dir or f"runs/{Path(args.config).stem}_{args.profile or 'default'}")
    cmd = ["optimize", "--config", args.config, "--output-dir", str(out)]
    if args.profile:
        cmd += ["--profile", args.profile]
    if args.threads:
        cmd += ["--threads", str(args.threads)]
    code = cli_main(cmd)

    man = json.loads((out / "manifest.json").read_text())
    tr = read_csv(out / "trace.csv")
    print(f"{'iter':>5} {'avg_fidelity':>13} {'oob_pre_1':>10} {'oob_pre_2':>10}")
    step = max(1, len(tr["iter"]) // 15)
    for i in list(range(0, len(tr["iter"]), step)) + [len(tr["iter"]) - 1]:
        print(f"{int(tr['iter'][i]):5d} {tr['avg_fidelity'][i]:13.6f} "
              f"{tr['out_of_band_1'][i]:10.2e} {tr['out_of_band_2'][i]:10.2e}")
    print(f"termination: {man['termination_reason']}  exit code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
