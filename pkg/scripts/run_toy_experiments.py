#!/usr/bin/env python3
"""Train the toy AV models and reproduce the activity/energy comparison.

Writes learning curves, the activity comparison, the quantized-export
energy report, and the resilience sweep into --output-dir.
"""

import argparse
import csv
import json
from pathlib import Path

from mccsim.energy import EnergyModel, energy_from_trace, latency_from_trace
from mccsim.fixedpoint import Q3_12
from mccsim.network import shallow_av_spec
from mccsim.neuron import TransferKind, TransferMode
from mccsim.toy import (
    RESILIENCE_CFG,
    FloatNetwork,
    LossConfigL2,
    ToyAvSpec,
    evaluate_fx,
    export_quantized,
    make_toy_av,
    resilience_experiment,
    train_supervised,
)

HGF = TransferMode(TransferKind.HALF_GAUSSIAN_REFERENCE)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=1500)
    ap.add_argument("--gamma", type=float, default=1e-4)
    ap.add_argument("--output-dir", default="out/toy")
    args = ap.parse_args()

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = make_toy_av(ToyAvSpec(seed=args.seed))

    summary = {}
    for mode in ("mcc", "baseline"):
        model = FloatNetwork(shallow_av_spec(mode=mode, seed=args.seed, transfer=HGF))
        result = train_supervised(model, data, LossConfigL2(gamma=args.gamma), epochs=args.epochs)
        with open(out / f"curves_{mode}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "loss", "hard_firing_fraction"])
            for e in range(args.epochs):
                w.writerow([e, result.loss_curve[e], result.activity_curve[e]])
        net = export_quantized(model, Q3_12)
        mse, trace = evaluate_fx(net, data)
        report = energy_from_trace(trace, EnergyModel())
        summary[mode] = {
            "final_loss": float(result.loss_curve[-1]),
            "hard_firing_fraction": result.final_activity,
            "fx_mse": mse,
            "fx_activity": trace.activity,
            "fx_not_firing_pct": 100.0 * trace.not_firing,
            "energy_uJ": report.energy_uJ,
            "latency_us": latency_from_trace(trace),
            "mac_total": trace.mac_total,
            "mac_used": trace.synapse_events,
        }
        print(f"{mode}: {json.dumps(summary[mode])}")

    # damage study on fault-aware-trained models
    res = {}
    for mode in ("mcc", "baseline"):
        model = FloatNetwork(shallow_av_spec(mode=mode, seed=args.seed, transfer=HGF))
        train_supervised(model, data, RESILIENCE_CFG, epochs=args.epochs)
        net = export_quantized(model, Q3_12)
        rows = resilience_experiment(net, data, n_items=24)
        res[mode] = rows
        with open(out / f"resilience_{mode}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["fraction", "mse_mean", "mse_sd", "activity_mean"])
            for r in rows:
                w.writerow([r["fraction"], r["mse_mean"], r["mse_sd"], r["activity_mean"]])
        print(f"{mode} resilience: " + "; ".join(
            f"{r['fraction']:.2f}->mse {r['mse_mean']:.4f}" for r in rows))

    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()
