"""Command-line surface: simulation, energy estimation, toy experiments.

Exit codes: 0 success, 1 validation failure (e.g. golden-table violations,
bad model files), 2 bad input or configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from .energy import (
    EnergyModel,
    check_tables,
    energy_from_trace,
    latency_from_trace,
    load_table1,
    load_table3,
    round_deep_uj,
    sparsity_saving,
    table3_energy_uj,
)
from .fixedpoint import FxSample, MulQuant, QFormat, fx_from_real
from .modelio import ModelFileError, load_model, save_model
from .network import build_network, infer, shallow_av_spec, table1_concat_spec
from .neuron import TransferKind, TransferMode


def _parse_qformat(text: str) -> QFormat:
    text = text.strip()
    if text.upper().startswith("Q"):
        intpart, frac = text[1:].split(".")
        return QFormat(int(intpart) + int(frac) + 1, int(frac))
    total, frac = text.split(",")
    return QFormat(int(total), int(frac))


def _parse_widths(text: str) -> list[int]:
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def _write_csv(path: Path, header: list[str], rows, deterministic: bool) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        if not deterministic:
            f.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _transfer(args) -> TransferMode:
    kind = TransferKind.RELU6_HARDWARE if args.transfer == "relu6" else TransferKind.HALF_GAUSSIAN_REFERENCE
    return TransferMode(kind)


def _build_from_args(args):
    if getattr(args, "model", None):
        return load_model(args.model)
    if args.spec == "shallow-av":
        spec = shallow_av_spec(mode=args.mode, qformat=_parse_qformat(args.qformat),
                               seed=args.seed)
    else:
        spec = table1_concat_spec(qformat=_parse_qformat(args.qformat), seed=args.seed)
    return build_network(spec)


def _load_sequences(path: str, net) -> list:
    doc = json.loads(Path(path).read_text())
    fmt = net.spec.qformat
    dataset = []
    for seq in doc["sequences"]:
        frames = []
        n_steps = len(next(iter(seq.values())))
        for t in range(n_steps):
            frames.append(
                {name: tuple(fx_from_real(v, fmt) for v in steps[t]) for name, steps in seq.items()}
            )
        dataset.append(frames)
    return dataset


def _zero_sequences(net, steps: int, sequences: int) -> list:
    fmt = net.spec.qformat
    frame = {s.name: tuple(FxSample(0, fmt) for _ in range(s.input_width)) for s in net.spec.streams}
    return [[dict(frame) for _ in range(steps)] for _ in range(sequences)]


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    net = _build_from_args(args)
    if args.input:
        dataset = _load_sequences(args.input, net)
    else:
        dataset = _zero_sequences(net, args.steps, args.sequences)
    quant = MulQuant(args.mul_quant)
    outputs, trace = infer(net, dataset, quant)
    report = energy_from_trace(trace, EnergyModel())
    report.latency_us = latency_from_trace(trace, EnergyModel())
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        (i, t, *[o.value for o in fused])
        for i, seq in enumerate(outputs)
        for t, fused in enumerate(seq)
    ]
    width = len(rows[0]) - 2 if rows else 0
    _write_csv(out / "outputs.csv", ["item", "step", *[f"y{j}" for j in range(width)]],
               rows, args.deterministic)
    doc = report.to_dict()
    doc.update(activity=trace.activity, not_firing=trace.not_firing)
    (out / "energy.json").write_text(json.dumps(doc, indent=2) + "\n")
    _write_csv(out / "energy.csv", list(doc), [tuple(doc.values())], args.deterministic)
    print(
        f"events={trace.synapse_events}/{trace.mac_total} "
        f"energy={report.energy_uJ:.6g} uJ latency={report.latency_us:.4g} us "
        f"activity={trace.activity:.3f}"
    )
    return 0


def cmd_estimate_energy(args) -> int:
    model = EnergyModel()
    energy = table3_energy_uj(args.mac_k, model)
    print(f"{round_deep_uj(energy)} uJ ({energy:.4f} uJ at {model.e_synapse_nj} nJ/synapse)")
    if args.baseline_mac_k is not None:
        base = table3_energy_uj(args.baseline_mac_k, model)
        rep = sparsity_saving(base, energy, args.activity, args.dense_activity,
                              args.training_updates)
        print(
            f"baseline {round_deep_uj(base)} uJ, saving {round_deep_uj(rep.saving_uJ)} uJ "
            f"({rep.saving_pct:.1f}%)"
        )
        if args.training_updates > 1:
            print(f"training saving ~ {rep.saving_uJ * args.training_updates:.6g} uJ")
    return 0


def cmd_train_toy(args) -> int:
    from .toy import (
        LossConfigL2,
        FloatNetwork,
        ToyAvSpec,
        evaluate_fx,
        export_quantized,
        make_toy_av,
        train_supervised,
    )

    spec = shallow_av_spec(
        mode=args.mode, seed=args.seed,
        transfer=TransferMode(TransferKind.HALF_GAUSSIAN_REFERENCE),
    )
    data = make_toy_av(ToyAvSpec(seed=args.seed))
    model = FloatNetwork(spec)
    cfg = LossConfigL2(gamma=args.gamma)
    result = train_supervised(model, data, cfg, epochs=args.epochs)
    out = Path(args.output_dir)
    _write_csv(
        out / "curves.csv",
        ["epoch", "loss", "activity"],
        [(e, result.loss_curve[e], result.activity_curve[e]) for e in range(args.epochs)],
        args.deterministic,
    )
    fmt = _parse_qformat(args.qformat)
    net = export_quantized(model, fmt)
    save_model(net, out, name="model")
    mse, trace = evaluate_fx(net, data)
    summary = {
        "mode": args.mode,
        "gamma": args.gamma,
        "final_loss": float(result.loss_curve[-1]),
        "final_activity": result.final_activity,
        "fx_mse": mse,
        "fx_activity": trace.activity,
        "qformat": str(fmt),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return 0


def cmd_quantize_sweep(args) -> int:
    from .toy import (
        LossConfigL2,
        FloatNetwork,
        ToyAvSpec,
        bitwidth_sweep,
        make_toy_av,
        train_supervised,
    )

    widths = _parse_widths(args.widths)
    if min(widths) < 5:
        print("widths must be >= 5 bits", file=sys.stderr)
        return 2
    spec = shallow_av_spec(mode=args.mode, seed=args.seed,
                           transfer=TransferMode(TransferKind.HALF_GAUSSIAN_REFERENCE))
    data = make_toy_av(ToyAvSpec(seed=args.seed))
    model = FloatNetwork(spec)
    train_supervised(model, data, LossConfigL2(gamma=args.gamma), epochs=args.epochs)
    rows = bitwidth_sweep(model, data, widths)
    _write_csv(
        Path(args.output_dir) / "bitwidth_sweep.csv",
        ["width", "qformat", "mse"],
        [(r["width"], r["qformat"], r["mse"]) for r in rows],
        args.deterministic,
    )
    for r in rows:
        print(f"{r['width']:2d} bits ({r['qformat']}): mse={r['mse']:.6f}")
    return 0


def cmd_resilience(args) -> int:
    from .toy import (
        LossConfigL2,
        FloatNetwork,
        ToyAvSpec,
        export_quantized,
        make_toy_av,
        resilience_experiment,
        train_supervised,
    )

    fractions = [float(x) for x in args.fractions.split(",")]
    if any(not 0 <= f <= 1 for f in fractions):
        print("fractions must lie in [0, 1]", file=sys.stderr)
        return 2
    data = make_toy_av(ToyAvSpec(seed=args.seed))
    if args.model:
        net = load_model(args.model)
    else:
        spec = shallow_av_spec(mode=args.mode, seed=args.seed,
                               transfer=TransferMode(TransferKind.HALF_GAUSSIAN_REFERENCE))
        model = FloatNetwork(spec)
        cfg = LossConfigL2(gamma=args.gamma, unit_dropout=args.unit_dropout)
        train_supervised(model, data, cfg, epochs=args.epochs)
        net = export_quantized(model, _parse_qformat(args.qformat))
    rows = resilience_experiment(net, data, fractions, n_seeds=args.kill_seeds,
                                 base_seed=args.seed)
    _write_csv(
        Path(args.output_dir) / "resilience.csv",
        ["fraction", "mse_mean", "mse_sd", "activity_mean"],
        [(r["fraction"], r["mse_mean"], r["mse_sd"], r["activity_mean"]) for r in rows],
        args.deterministic,
    )
    for r in rows:
        print(
            f"kill {r['fraction']:.2f}: mse={r['mse_mean']:.6f}+-{r['mse_sd']:.6f} "
            f"activity={r['activity_mean']:.3f}"
        )
    return 0


def cmd_check_tables(args) -> int:
    t1 = load_table1(args.table1) if args.table1 else None
    t3 = load_table3(args.table3) if args.table3 else None
    bad = check_tables(t1, t3)
    if bad:
        for line in bad:
            print(f"VIOLATION: {line}", file=sys.stderr)
        return 1
    n1 = len(t1 if t1 is not None else load_table1())
    n3 = len(t3 if t3 is not None else load_table3())
    print(f"golden tables consistent ({n1} shallow rows, {n3} deep blocks)")
    return 0


# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, output: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--qformat", default="16,12", help="total,frac or Qm.n (default Q3.12)")
    p.add_argument("--mode", choices=["mcc", "baseline"], default="mcc")
    p.add_argument("--transfer", choices=["relu6", "hgf"], default="relu6")
    p.add_argument("--deterministic", action="store_true",
                   help="suppress the timestamp header in CSV outputs")
    if output:
        p.add_argument("--output-dir", default="out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mccsim")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run fixed-point inference and report energy")
    _add_common(p)
    p.add_argument("--model", help="model JSON produced by save/train")
    p.add_argument("--spec", choices=["shallow-av", "table1-concat"], default="shallow-av")
    p.add_argument("--input", help="JSON file with a 'sequences' list")
    p.add_argument("--zero-input", action="store_true")
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--sequences", type=int, default=1)
    p.add_argument("--mul-quant", choices=[m.value for m in MulQuant], default="shift")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("estimate-energy", help="closed-form energy from MAC counts")
    p.add_argument("--mac-k", type=float, required=True, help="MAC count in thousands")
    p.add_argument("--baseline-mac-k", type=float)
    p.add_argument("--activity", type=float, help="observed activity fraction for sparsity scaling")
    p.add_argument("--dense-activity", type=float, default=0.2)
    p.add_argument("--training-updates", type=int, default=1)
    p.set_defaults(fn=cmd_estimate_energy)

    p = sub.add_parser("train-toy", help="train the float toy model and export fixed point")
    _add_common(p)
    p.add_argument("--gamma", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=1500)
    p.set_defaults(fn=cmd_train_toy)

    p = sub.add_parser("quantize-sweep", help="bit-width sweep of the toy task MSE")
    _add_common(p)
    p.add_argument("--widths", default="8:16", help="lo:hi or comma list")
    p.add_argument("--gamma", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=1500)
    p.set_defaults(fn=cmd_quantize_sweep)

    p = sub.add_parser("resilience", help="random cell-killing sweep")
    _add_common(p)
    p.add_argument("--model", help="evaluate this model instead of training one")
    p.add_argument("--fractions", default="0,0.12,0.24,0.36")
    p.add_argument("--kill-seeds", type=int, default=5)
    p.add_argument("--gamma", type=float, default=1e-4)
    p.add_argument("--unit-dropout", type=float, default=0.1,
                   help="cell silencing rate during damage-aware training")
    p.add_argument("--epochs", type=int, default=1500)
    p.set_defaults(fn=cmd_resilience)

    p = sub.add_parser("check-tables", help="validate the golden energy tables")
    p.add_argument("--table1")
    p.add_argument("--table3")
    p.set_defaults(fn=cmd_check_tables)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ModelFileError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
