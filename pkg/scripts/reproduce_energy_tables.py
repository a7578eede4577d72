#!/usr/bin/env python3
"""Recompute the published energy tables from the 0.08 nJ/synapse model.

Emits a CSV comparing printed values with the model's predictions and the
headline savings figures.
"""

import argparse
import csv
from pathlib import Path

from mccsim.energy import (
    EnergyModel,
    load_table1,
    load_table3,
    round_deep_uj,
    sparsity_saving,
    table3_energy_uj,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--output-dir", default="out/tables")
    args = ap.parse_args()
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = EnergyModel()

    with open(out / "table1_model_vs_printed.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "mac_used", "energy_model_uJ", "energy_printed_uJ", "abs_err_uJ"])
        for row in load_table1():
            got = row.mac_used * model.e_synapse_uj
            w.writerow([row.model, row.mac_used, f"{got:.5f}", row.energy_uJ,
                        f"{abs(got - row.energy_uJ):.5f}"])

    with open(out / "table3_model_vs_printed.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["block", "column", "mac_k", "energy_model_uJ", "energy_printed_uJ"])
        for blk in load_table3():
            for col, mac_k, uj in (
                ("mcc", blk.mac_mcc_k, blk.energy_mcc_uJ),
                ("baseline", blk.mac_base_k, blk.energy_base_uJ),
                ("saving", blk.saving_mac_k, blk.saving_uJ),
            ):
                w.writerow([blk.block_id, col, mac_k, round_deep_uj(table3_energy_uj(mac_k)), uj])

    dense = sparsity_saving(397284, 236757)
    sparse = sparsity_saving(397284, 236757, activity_fraction=0.128)
    print(f"dense saving:  {round_deep_uj(dense.saving_uJ)} uJ ({dense.saving_pct:.1f}%)")
    print(f"sparse saving: {round_deep_uj(sparse.saving_uJ)} uJ ({sparse.saving_pct:.1f}%)")
    print(f"per-training-run (50k updates): {dense.saving_uJ * 50_000:.4g} uJ dense, "
          f"{sparse.saving_uJ * 50_000:.4g} uJ sparse")
    print(f"tables written to {out}")


if __name__ == "__main__":
    main()
