"""Frozen-pump Raman transfer with and without a Stokes band limit.

Runs ``transfer_allpass.yaml`` and ``transfer_banded.yaml`` and lists the
spectral peaks of the optimized Stokes field above 1e-4 relative power.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from bandkrotov.cli import main as cli_main
from bandkrotov.io import read_csv
from bandkrotov.spectral import spectral_bands

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def peaks(run_dir, column="power_2", threshold=1e-4):
    spec = read_csv(Path(run_dir) / "spectra.csv")
    om, P = spec["omega_cm"], spec[column]
    out = []
    for lo, hi, pk in spectral_bands(om, P, threshold):
        out.append((pk, float(np.interp(pk, om, P) / P.max())))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--output-dir", default="runs/spurious_band")
    args = p.parse_args(argv)
    root = Path(args.output_dir)
    for name in ("transfer_allpass", "transfer_banded"):
        run = root / name
        cli_main(["optimize", "--config", str(CONFIGS / f"{name}.yaml"), "--output-dir", str(run)])
        man = json.loads((run / "manifest.json").read_text())
        print(f"{name}: transfer {man['final_avg_fidelity']:.4f}")
        for om, rel in peaks(run):
            print(f"    peak {om:9.1f} cm-1  relative power {rel:.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
