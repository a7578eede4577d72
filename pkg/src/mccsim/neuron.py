"""The two-point CCPU and the point-neuron baseline.

A CCPU integrates a receptive-field drive r (basal MAC over its inputs)
and a context drive c (proximal + distal + universal, clamped), couples
them through the modulatory transfer t = r*(r + 2c) + c + c*|r| and feeds
the result to the clipped activation.  The rearranged transfer is
algebraically equal to r^2 + 2rc + c*(1 + |r|) but needs only two
multiplies: 2c is a saturating one-bit shift and c*(1+|r|) distributes to
c + c*|r|.

Both a bit-exact fixed-point path and a float reference path are
provided; the float path additionally offers the smooth half-Gaussian
gate used for gradient-based training.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .fixedpoint import (
    FxSample,
    MulQuant,
    QFormat,
    abs_raw,
    add_raw,
    clamp_raw,
    mul_raw,
    sat_raw,
)
from .trace import ActivityTrace

MAX_WEIGHTS = 1023
CLIP = 6


class TransferKind(str, enum.Enum):
    RELU6_HARDWARE = "relu6"
    HALF_GAUSSIAN_REFERENCE = "hgf"
    POINT_BASELINE = "point"


@dataclass(frozen=True)
class TransferMode:
    kind: TransferKind = TransferKind.RELU6_HARDWARE
    sigma: float = 2.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass
class CcpuSpec:
    """One neuron's weights: basal receptive field, bias, context pathways.

    The universal pathway follows the hardware bias convention: its last
    weight is the bias applied to a hardcoded input of 1.
    """

    basal_weights: tuple[FxSample, ...]
    bias: FxSample
    ctx_weights_proximal: tuple[FxSample, ...] = ()
    ctx_weights_distal: tuple[FxSample, ...] = ()
    ctx_weights_universal: tuple[FxSample, ...] = ()
    mode: TransferMode = field(default_factory=TransferMode)

    def __post_init__(self):
        n = (
            len(self.basal_weights)
            + len(self.ctx_weights_proximal)
            + len(self.ctx_weights_distal)
            + len(self.ctx_weights_universal)
        )
        if n > MAX_WEIGHTS:
            raise ValueError(f"{n} weights exceed the {MAX_WEIGHTS}-weight memory capacity")
        fmt = self.bias.fmt
        for group in (
            self.basal_weights,
            self.ctx_weights_proximal,
            self.ctx_weights_distal,
            self.ctx_weights_universal,
        ):
            for w in group:
                if w.fmt != fmt:
                    raise ValueError("all weights of a neuron must share one format")

    @property
    def fmt(self) -> QFormat:
        return self.bias.fmt

    @property
    def fan_in(self) -> int:
        return len(self.basal_weights)

    @property
    def n_weights(self) -> int:
        """All weights excluding the basal bias (which has its own memory slot)."""
        return (
            len(self.basal_weights)
            + len(self.ctx_weights_proximal)
            + len(self.ctx_weights_distal)
            + len(self.ctx_weights_universal)
        )


@dataclass(frozen=True)
class NeuronOutput:
    value: FxSample
    fired: bool
    r_drive: FxSample
    c_drive: FxSample


# ---------------------------------------------------------------------------
# fixed-point path (raw kernels + FxSample wrappers)


def mac_raw(
    input_raws,
    weight_raws,
    bias_raw: int,
    fmt: QFormat,
    trace: ActivityTrace | None = None,
    quant: MulQuant = MulQuant.SHIFT,
) -> tuple[int, int]:
    """Zero-skip saturating MAC; returns (accumulator_raw, active_fanin).

    Inputs accumulate in order, bias last.  A zero input skips its multiply
    entirely: no event, no cycle.  The bias input is hardcoded to 1 and
    always propagates.
    """
    acc = 0
    active = 0
    skipped = 0
    for x, w in zip(input_raws, weight_raws):
        if x == 0:
            skipped += 1
            continue
        active += 1
        p, _ = mul_raw(x, w, fmt, quant)
        acc, _ = add_raw(acc, p, fmt)
    acc, _ = add_raw(acc, bias_raw, fmt)
    if trace is not None:
        trace.add_active(active + 1)  # +1: the bias retrieval is one MAC
        trace.add_skipped(skipped)
    return acc, active


def ctx_mac_raw(
    input_raws,
    weight_raws,
    fmt: QFormat,
    trace: ActivityTrace | None = None,
    quant: MulQuant = MulQuant.SHIFT,
) -> int:
    """Zero-skip weighted sum without bias, for the context pathways."""
    acc = 0
    active = 0
    skipped = 0
    for x, w in zip(input_raws, weight_raws):
        if x == 0:
            skipped += 1
            continue
        active += 1
        p, _ = mul_raw(x, w, fmt, quant)
        acc, _ = add_raw(acc, p, fmt)
    if trace is not None:
        trace.add_active(active)
        trace.add_skipped(skipped)
    return acc


def mac_rf(
    inputs,
    spec: CcpuSpec,
    trace: ActivityTrace | None = None,
    layer: str = "",
    quant: MulQuant = MulQuant.SHIFT,
) -> FxSample:
    """Basal receptive-field drive: r = sum(x_i * w_i) + bias, zero-skipping."""
    if len(inputs) != len(spec.basal_weights):
        raise ValueError(f"expected {len(spec.basal_weights)} inputs, got {len(inputs)}")
    fmt = spec.fmt
    raw, active = mac_raw(
        [x.raw for x in inputs],
        [w.raw for w in spec.basal_weights],
        spec.bias.raw,
        fmt,
        trace,
        quant,
    )
    if trace is not None:
        trace.note_basal(layer, active, len(inputs))
    return FxSample(raw, fmt)


def clamp6_raw(v: int, fmt: QFormat) -> int:
    bound = CLIP << fmt.frac_bits
    lo = max(-bound, fmt.raw_min)
    hi = min(bound, fmt.raw_max)
    return clamp_raw(v, lo, hi)


def relu6_raw(v: int, fmt: QFormat) -> int:
    hi = min(CLIP << fmt.frac_bits, fmt.raw_max)
    return clamp_raw(v, 0, hi)


def integrate_context_raw(cp: int, cd: int, cu: int, fmt: QFormat) -> int:
    """c = clamp(cp + cd + cu, -6, +6) with saturating adds."""
    s, _ = add_raw(cp, cd, fmt)
    s, _ = add_raw(s, cu, fmt)
    return clamp6_raw(s, fmt)


def integrate_context(cp: FxSample, cd: FxSample, cu: FxSample) -> FxSample:
    if not (cp.fmt == cd.fmt == cu.fmt):
        raise ValueError("context drives must share one format")
    return FxSample(integrate_context_raw(cp.raw, cd.raw, cu.raw, cp.fmt), cp.fmt)


def transfer_drive_raw(r: int, c: int, fmt: QFormat, quant: MulQuant = MulQuant.SHIFT) -> int:
    """t = r*(r + 2c) + c + c*|r|, requantized once at the block output.

    The block keeps the double-width partial products internally (the two
    multiplier outputs feed the adder tree at full precision), so the
    rearranged form stays algebraically equal to r^2 + 2rc + c*(1 + |r|);
    the single output requantization truncates like the multiplier and
    saturates to the operand format.  The upper-half compatibility mode
    instead chains the literal 16-bit units.
    """
    if quant is MulQuant.UPPER_HALF:
        c2, _ = add_raw(c, c, fmt)
        s, _ = add_raw(r, c2, fmt)
        m1, _ = mul_raw(r, s, fmt, quant)
        m2, _ = mul_raw(c, abs_raw(r, fmt), fmt, quant)
        t, _ = add_raw(m1, c, fmt)
        t, _ = add_raw(t, m2, fmt)
        return t
    f = fmt.frac_bits
    t_wide = r * (r + 2 * c) + (c << f) + c * abs(r)  # scale 2^-2f, exact
    return sat_raw(t_wide >> f, fmt)[0]


def modulatory_transfer(
    r: FxSample,
    c: FxSample,
    mode: TransferMode,
    quant: MulQuant = MulQuant.SHIFT,
) -> FxSample:
    """Fixed-point modulatory output p(t); only the ReLU6 gate exists in hardware."""
    if mode.kind is TransferKind.HALF_GAUSSIAN_REFERENCE:
        raise ValueError("half-Gaussian transfer is unsupported in fixed-point mode")
    if r.fmt != c.fmt:
        raise ValueError(f"format mismatch: {r.fmt} vs {c.fmt}")
    fmt = r.fmt
    if mode.kind is TransferKind.POINT_BASELINE:
        return FxSample(relu6_raw(r.raw, fmt), fmt)
    t = transfer_drive_raw(r.raw, c.raw, fmt, quant)
    return FxSample(relu6_raw(t, fmt), fmt)


def ccpu_forward(
    inputs,
    cp: FxSample,
    cd: FxSample,
    cu: FxSample,
    spec: CcpuSpec,
    trace: ActivityTrace | None = None,
    layer: str = "",
    quant: MulQuant = MulQuant.SHIFT,
) -> NeuronOutput:
    """Full CCPU evaluation: basal MAC, context integration, modulation, activation.

    The activation block re-applies the ReLU6 clip; in relu6 mode this is
    idempotent on the already-clipped modulatory output.  Both blocks are
    kept for hardware fidelity.
    """
    fmt = spec.fmt
    r = mac_rf(inputs, spec, trace, layer, quant)
    c = integrate_context(cp, cd, cu)
    m = modulatory_transfer(r, c, spec.mode, quant)
    value = FxSample(relu6_raw(m.raw, fmt), fmt)
    fired = value.raw != 0
    if trace is not None:
        trace.note_neuron(fired)
    return NeuronOutput(value=value, fired=fired, r_drive=r, c_drive=c)


def point_forward(
    inputs,
    spec: CcpuSpec,
    trace: ActivityTrace | None = None,
    layer: str = "",
    quant: MulQuant = MulQuant.SHIFT,
) -> NeuronOutput:
    """Point-neuron baseline: clipped ReLU of the basal MAC, contexts ignored.

    Zero-skip accounting is identical to the CCPU path, so the baseline
    energy also honors zeros; its higher firing rate is emergent.
    """
    fmt = spec.fmt
    r = mac_rf(inputs, spec, trace, layer, quant)
    value = FxSample(relu6_raw(r.raw, fmt), fmt)
    fired = value.raw != 0
    if trace is not None:
        trace.note_neuron(fired)
    zero = FxSample(0, fmt)
    return NeuronOutput(value=value, fired=fired, r_drive=r, c_drive=zero)


# ---------------------------------------------------------------------------
# float reference path


def transfer_drive_float(r: float, c: float) -> float:
    """t = r*(r + 2c) + c + c*|r| == r^2 + 2rc + c(1 + |r|)."""
    return r * (r + 2.0 * c) + c + c * abs(r)


def transfer_drive_grad(r: float, c: float) -> tuple[float, float]:
    """(dt/dr, dt/dc); dt/dr uses sign(r), valid away from r == 0."""
    sgn = 1.0 if r > 0 else -1.0 if r < 0 else 0.0
    return 2.0 * r + 2.0 * c + c * sgn, 2.0 * r + 1.0 + abs(r)


def relu6_float(t: float) -> float:
    return 0.0 if t < 0.0 else CLIP if t > CLIP else t


def half_gaussian_float(t: float, sigma: float = 2.0) -> float:
    """Smooth gate: 0 for t <= 0, else 6*(1 - exp(-t^2 / (2 sigma^2))).

    Same support and [0, 6] range as the hardware ReLU6 gate, but
    differentiable, for the float training path.
    """
    if t <= 0.0:
        return 0.0
    return CLIP * (1.0 - math.exp(-(t * t) / (2.0 * sigma * sigma)))


def half_gaussian_grad(t: float, sigma: float = 2.0) -> float:
    if t <= 0.0:
        return 0.0
    return CLIP * (t / (sigma * sigma)) * math.exp(-(t * t) / (2.0 * sigma * sigma))


def modulatory_transfer_float(r: float, c: float, mode: TransferMode) -> float:
    if mode.kind is TransferKind.POINT_BASELINE:
        return relu6_float(r)
    t = transfer_drive_float(r, c)
    if mode.kind is TransferKind.HALF_GAUSSIAN_REFERENCE:
        return half_gaussian_float(t, mode.sigma)
    return relu6_float(t)
