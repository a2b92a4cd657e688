"""Collect plot-ready tables from an ``optimize`` output directory.

Writes ``figure_fields.csv`` (fields in the time domain), ``figure_spectra.csv``
(normalized power next to the pass masks) and ``figure_convergence.csv``
(yield, suppressed out-of-band fraction and residuals per iteration).
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from bandkrotov.io import read_csv, write_columns


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("run_dir")
    args = p.parse_args(argv)
    run = Path(args.run_dir)

    fields = read_csv(run / "fields.csv")
    write_columns(run / "figure_fields.csv", fields)

    spec = read_csv(run / "spectra.csv")
    masks = read_csv(run / "masks.csv")
    cols = {"omega_cm": spec["omega_cm"]}
    for key in [k for k in spec if k.startswith("power_")]:
        i = key.split("_")[1]
        P = spec[key]
        cols[f"power_norm_{i}"] = P / P.max() if np.any(P) else P
        cols[f"mask_{i}"] = np.interp(spec["omega_cm"], masks["omega_cm"], masks[f"mask_{i}"])
    write_columns(run / "figure_spectra.csv", cols)

    tr = read_csv(run / "trace.csv")
    keep = ("iter", "avg_fidelity", "yield_sum_sq", "out_of_band_1", "out_of_band_2",
            "residual_1", "residual_2")
    write_columns(run / "figure_convergence.csv", {k: tr[k] for k in keep})
    print(f"wrote figure tables in {run}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
