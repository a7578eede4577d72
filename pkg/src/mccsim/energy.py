"""Energy, latency and savings accounting for zero-skip CCPU inference.

Every active MAC (a nonzero synaptic signal times its weight, including
the hardcoded-1 bias input) costs one synapse-energy quantum: the MAC
unit's dynamic power times its cycle count times the clock period, 0.08
nJ at the prototype operating point.  Skipped (zero-signal) MACs cost
nothing; the fixed-point adder is combinational and free.

Latency assumes the fully parallel layout: all neurons of a layer run
concurrently, each serially walking its active basal inputs plus the
bias, so a layer costs (max active fan-in + 1) * mac_cycles cycles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path

from .trace import ActivityTrace


@dataclass(frozen=True)
class EnergyModel:
    mac_dynamic_power_mw: float = 2.0
    mac_cycles: int = 4
    clock_period_ns: float = 10.0
    e_synapse_nj: float = 0.08

    def __post_init__(self):
        derived = self.mac_dynamic_power_mw * self.mac_cycles * self.clock_period_ns * 1e-3
        if not math.isclose(self.e_synapse_nj, derived, rel_tol=1e-12):
            raise ValueError(
                f"e_synapse_nj {self.e_synapse_nj} inconsistent with "
                f"power x cycles x period = {derived} nJ"
            )

    @property
    def e_synapse_uj(self) -> float:
        return self.e_synapse_nj * 1e-3


@dataclass(frozen=True)
class LayerShape:
    """One conv layer: 3D input/output arrays, square kernel."""

    in_shape: tuple[int, int, int]   # width, height, channels
    out_shape: tuple[int, int, int]
    kernel: int
    stride: int = 1
    has_bias: bool = True

    def __post_init__(self):
        iw, ih, _ = self.in_shape
        ow, oh, oc = self.out_shape
        if min(self.out_shape) == 0:
            return  # degenerate empty output is allowed and counts zero MACs
        if self.kernel <= 0 or self.stride <= 0:
            raise ValueError("kernel and stride must be positive")
        for i_dim, o_dim in ((iw, ow), (ih, oh)):
            valid = (i_dim - self.kernel) // self.stride + 1
            same = -(-i_dim // self.stride)  # ceil
            if o_dim not in (valid, same):
                raise ValueError(
                    f"output dim {o_dim} inconsistent with input {i_dim}, "
                    f"kernel {self.kernel}, stride {self.stride}"
                )


def conv_mac_count(shape: LayerShape) -> int:
    """MACs for one conv layer: out_w*out_h*out_c*(k^2*in_c + bias)."""
    ow, oh, oc = shape.out_shape
    if min(shape.out_shape) == 0:
        return 0
    per_site = shape.kernel ** 2 * shape.in_shape[2] + (1 if shape.has_bias else 0)
    return ow * oh * oc * per_site


@dataclass
class EnergyReport:
    mac_total: int = 0
    mac_used: int = 0
    energy_uJ: float = 0.0
    latency_us: float | None = None
    baseline_energy_uJ: float | None = None
    saving_uJ: float | None = None
    saving_pct: float | None = None
    training_multiplier: int = 1

    @property
    def training_energy_uJ(self) -> float:
        return self.energy_uJ * self.training_multiplier

    def to_dict(self) -> dict:
        return {
            "mac_total": self.mac_total,
            "mac_used": self.mac_used,
            "energy_uJ": self.energy_uJ,
            "latency_us": self.latency_us,
            "baseline_energy_uJ": self.baseline_energy_uJ,
            "saving_uJ": self.saving_uJ,
            "saving_pct": self.saving_pct,
            "training_multiplier": self.training_multiplier,
        }


def round_deep_uj(x: float) -> int:
    """Integer microjoules, half-up: the deep-table presentation."""
    return int(Decimal(repr(x)).quantize(Decimal("1"), rounding=ROUND_HALF_UP))


def round_shallow_uj(x: float) -> float:
    """Three decimals, half-up: the shallow-table presentation."""
    return float(Decimal(repr(x)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def energy_from_trace(trace: ActivityTrace, model: EnergyModel = EnergyModel()) -> EnergyReport:
    """Energy of one trace: every recorded synapse event costs e_synapse."""
    return EnergyReport(
        mac_total=trace.mac_total,
        mac_used=trace.synapse_events,
        energy_uJ=trace.synapse_events * model.e_synapse_uj,
    )


def latency_from_trace(
    trace: ActivityTrace,
    model: EnergyModel = EnergyModel(),
    schedule: str = "fully_parallel",
) -> float:
    """Inference latency in microseconds under the fully parallel layout.

    cycles = sum over layers of (max active basal fan-in + 1 bias) *
    mac_cycles.  On merged traces the per-layer fan-ins are worst cases,
    so this is the slowest single inference.
    """
    if schedule != "fully_parallel":
        raise ValueError(f"unknown schedule {schedule!r}")
    if not trace.per_layer_active_fanin:
        raise ValueError("trace has no per-layer fan-in data")
    cycles = sum((f + 1) * model.mac_cycles for f in trace.per_layer_active_fanin.values())
    return cycles * model.clock_period_ns * 1e-3


def table3_energy_uj(mac_count_k: float, model: EnergyModel = EnergyModel()) -> float:
    """Energy in µJ for a MAC count given in thousands: mac_k * 0.08."""
    return mac_count_k * model.e_synapse_nj


def sparsity_saving(
    baseline_energy_uJ: float,
    mcc_energy_uJ: float,
    activity_fraction: float | None = None,
    dense_activity_reference: float = 0.2,
    training_multiplier: int = 1,
) -> EnergyReport:
    """Savings versus a baseline, optionally rescaling a dense MCC energy
    by observed sparsity: mcc_sparse = mcc_dense * activity / reference.
    """
    if activity_fraction is not None:
        if not 0.0 < activity_fraction <= 1.0:
            raise ValueError("activity_fraction must be in (0, 1]")
        mcc_energy_uJ = mcc_energy_uJ * (activity_fraction / dense_activity_reference)
    saving = baseline_energy_uJ - mcc_energy_uJ
    return EnergyReport(
        energy_uJ=mcc_energy_uJ,
        baseline_energy_uJ=baseline_energy_uJ,
        saving_uJ=saving,
        saving_pct=100.0 * saving / baseline_energy_uJ if baseline_energy_uJ else 0.0,
        training_multiplier=training_multiplier,
    )


# ---------------------------------------------------------------------------
# golden tables


@dataclass(frozen=True)
class Table1Row:
    model: str
    params: int
    not_firing_pct: float
    mac_total: int
    mac_used: int
    energy_uJ: float
    latency_us: float


@dataclass(frozen=True)
class Table3Block:
    block_id: int
    in_shape: tuple[int, int, int]
    out_shape: tuple[int, int, int]
    mac_mcc_k: int
    mac_base_k: int
    saving_mac_k: int
    energy_mcc_uJ: int
    energy_base_uJ: int
    saving_uJ: int
    corrupt_source: bool = False
    mac_mcc_k_printed: int | None = None


def _data_path(name: str) -> Path:
    return Path(str(resources.files("mccsim") / "data" / name))


def _parse_shape(text: str) -> tuple[int, int, int]:
    w, h, c = (int(x) for x in text.split("x"))
    return (w, h, c)


def load_table1(path: str | Path | None = None) -> list[Table1Row]:
    path = Path(path) if path else _data_path("table1_shallow.csv")
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(
                Table1Row(
                    model=rec["model"],
                    params=int(rec["params"]),
                    not_firing_pct=float(rec["not_firing_pct"]),
                    mac_total=int(rec["mac_total"]),
                    mac_used=int(rec["mac_used"]),
                    energy_uJ=float(rec["energy_uJ"]),
                    latency_us=float(rec["latency_us"]),
                )
            )
    return rows


def load_table3(path: str | Path | None = None) -> list[Table3Block]:
    path = Path(path) if path else _data_path("table3_deep.csv")
    blocks = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            blocks.append(
                Table3Block(
                    block_id=int(rec["block_id"]),
                    in_shape=_parse_shape(rec["in_shape"]),
                    out_shape=_parse_shape(rec["out_shape"]),
                    mac_mcc_k=int(rec["mac_mcc_k"]),
                    mac_base_k=int(rec["mac_base_k"]),
                    saving_mac_k=int(rec["saving_mac_k"]),
                    energy_mcc_uJ=int(rec["energy_mcc_uJ"]),
                    energy_base_uJ=int(rec["energy_base_uJ"]),
                    saving_uJ=int(rec["saving_uJ"]),
                    corrupt_source=rec.get("corrupt_source", "0") == "1",
                    mac_mcc_k_printed=int(rec["mac_mcc_k_printed"])
                    if rec.get("mac_mcc_k_printed")
                    else None,
                )
            )
    return blocks


def check_tables(
    table1: list[Table1Row] | None = None,
    table3: list[Table3Block] | None = None,
    model: EnergyModel = EnergyModel(),
) -> list[str]:
    """Validate the published energy tables against the linear model.

    Returns a list of violations (empty means all checks pass):
    * shallow rows: |mac_used * e - energy| <= 0.002 µJ,
    * deep blocks: |mac_k * 0.08 - energy| <= 1 µJ for the MCC, baseline
      and saving columns,
    * deep blocks: baseline - MCC == saving within ±1 for energy, and for
      MACs except in the block flagged as corrupt in the source.
    """
    table1 = table1 if table1 is not None else load_table1()
    table3 = table3 if table3 is not None else load_table3()
    bad = []
    for row in table1:
        got = row.mac_used * model.e_synapse_uj
        if abs(got - row.energy_uJ) > 0.002:
            bad.append(
                f"table1 {row.model}: {row.mac_used} MACs -> {got:.5f} µJ, "
                f"printed {row.energy_uJ}"
            )
    for blk in table3:
        pairs = [
            ("mcc", blk.mac_mcc_k, blk.energy_mcc_uJ),
            ("baseline", blk.mac_base_k, blk.energy_base_uJ),
            ("saving", blk.saving_mac_k, blk.saving_uJ),
        ]
        for name, mac_k, uj in pairs:
            got = table3_energy_uj(mac_k, model)
            if abs(got - uj) > 1.0:
                bad.append(
                    f"table3 block {blk.block_id} {name}: {mac_k}k MACs -> "
                    f"{got:.2f} µJ, printed {uj}"
                )
        if abs((blk.energy_base_uJ - blk.energy_mcc_uJ) - blk.saving_uJ) > 1:
            bad.append(f"table3 block {blk.block_id}: energy saving column inconsistent")
        if not blk.corrupt_source:
            if abs((blk.mac_base_k - blk.mac_mcc_k) - blk.saving_mac_k) > 1:
                bad.append(f"table3 block {blk.block_id}: MAC saving column inconsistent")
    return bad
