"""Q-format signed fixed-point arithmetic mirroring the CCPU datapath.

All values are two's-complement integers of ``total_bits`` width scaled by
2^-frac_bits.  The Q format is runtime data so the 16-bit Q3.12 inference
path and the 11-bit Q3.7 quantized-export path share one implementation.

Raw-integer kernels (``add_raw``, ``mul_raw``, ...) carry the semantics;
``FxSample`` and the ``fx_*`` functions are thin validated wrappers.  The
raw kernels exist so exhaustive grid tests and the network inner loop do
not pay object-construction costs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction


class MulQuant(str, enum.Enum):
    """Requantization rule for the double-width multiplier result.

    SHIFT keeps the operand Q format (arithmetic shift by frac_bits, then
    saturate): the datapath stays closed under multiplication.  UPPER_HALF
    takes the upper total_bits of the product, which silently rescales the
    format; it is provided only as a compatibility mode for trace
    comparison against hardware that implements the literal rule.
    """

    SHIFT = "shift"
    UPPER_HALF = "upper-half"


@dataclass(frozen=True)
class QFormat:
    """Signed fixed-point format: 1 sign bit, total-frac-1 integer bits, frac fraction bits."""

    total_bits: int
    frac_bits: int

    def __post_init__(self):
        if not 2 <= self.total_bits <= 32:
            raise ValueError(f"total_bits must be in [2, 32], got {self.total_bits}")
        if self.frac_bits < 0:
            raise ValueError(f"frac_bits must be >= 0, got {self.frac_bits}")
        if self.total_bits < self.frac_bits + 1:
            raise ValueError(
                f"need at least a sign bit: total_bits={self.total_bits} < frac_bits+1"
            )

    @property
    def raw_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def precision(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def min_value(self) -> float:
        return self.raw_min * self.precision

    @property
    def max_value(self) -> float:
        return self.raw_max * self.precision

    @property
    def one_raw(self) -> int:
        """Raw encoding of 1.0 (may exceed raw_max for formats without integer bits)."""
        return 1 << self.frac_bits

    @property
    def hex_digits(self) -> int:
        return (self.total_bits + 3) // 4

    def __str__(self) -> str:
        return f"Q{self.total_bits - self.frac_bits - 1}.{self.frac_bits}"


Q3_12 = QFormat(16, 12)
Q3_7 = QFormat(11, 7)


class OverflowDirection(str, enum.Enum):
    NONE = "none"
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class OverflowFlag:
    direction: OverflowDirection = OverflowDirection.NONE

    @property
    def occurred(self) -> bool:
        return self.direction is not OverflowDirection.NONE


OVF_NONE = OverflowFlag(OverflowDirection.NONE)
OVF_POS = OverflowFlag(OverflowDirection.POSITIVE)
OVF_NEG = OverflowFlag(OverflowDirection.NEGATIVE)

_FLAG_BY_DIR = {0: OVF_NONE, 1: OVF_POS, -1: OVF_NEG}


# ---------------------------------------------------------------------------
# raw-integer kernels; direction is -1 / 0 / +1


def sat_raw(v: int, fmt: QFormat) -> tuple[int, int]:
    """Clamp an unbounded integer to the format range."""
    if v > fmt.raw_max:
        return fmt.raw_max, 1
    if v < fmt.raw_min:
        return fmt.raw_min, -1
    return v, 0


def add_raw(a: int, b: int, fmt: QFormat) -> tuple[int, int]:
    """Saturating two's-complement add.

    pos+pos wrapping negative saturates to raw_max; neg+neg wrapping
    positive saturates to raw_min.  Mixed signs never overflow, so a plain
    range check is equivalent to the hardware sign-pattern rule.
    """
    return sat_raw(a + b, fmt)


def mul_raw(a: int, b: int, fmt: QFormat, quant: MulQuant = MulQuant.SHIFT) -> tuple[int, int]:
    """Saturating multiply with the double-width product requantized.

    SHIFT: arithmetic right shift by frac_bits (truncation toward -inf),
    then saturate.  UPPER_HALF: arithmetic right shift by total_bits; the
    result of two in-range operands always fits, so it never saturates.
    """
    full = a * b
    if quant is MulQuant.UPPER_HALF:
        return full >> fmt.total_bits, 0
    return sat_raw(full >> fmt.frac_bits, fmt)


def abs_raw(a: int, fmt: QFormat) -> int:
    """|a| with abs(raw_min) saturating to raw_max."""
    v = -a if a < 0 else a
    return fmt.raw_max if v > fmt.raw_max else v


def clamp_raw(v: int, lo: int, hi: int) -> int:
    return lo if v < lo else hi if v > hi else v


def round_half_even_shift(v: int, shift: int) -> int:
    """Divide by 2^shift rounding ties to even (shift >= 0)."""
    if shift <= 0:
        return v << -shift
    q, r = divmod(v, 1 << shift)
    half = 1 << (shift - 1)
    if r > half or (r == half and q & 1):
        q += 1
    return q


def quantize_real(x, fmt: QFormat) -> int:
    """Nearest representable raw value (ties to even), saturating out of range."""
    scaled = Fraction(x) * fmt.one_raw
    return sat_raw(round(scaled), fmt)[0]


def requant_raw(raw: int, src: QFormat, dst: QFormat) -> int:
    """Convert between formats: round-to-nearest-even on dropped bits, saturate on range."""
    return sat_raw(round_half_even_shift(raw, src.frac_bits - dst.frac_bits), dst)[0]


# ---------------------------------------------------------------------------
# sample-level API


@dataclass(frozen=True)
class FxSample:
    """One fixed-point number: raw two's-complement integer plus its format."""

    raw: int
    fmt: QFormat

    def __post_init__(self):
        if not self.fmt.raw_min <= self.raw <= self.fmt.raw_max:
            raise ValueError(f"raw {self.raw} does not fit {self.fmt}")

    @property
    def value(self) -> float:
        return self.raw * self.fmt.precision

    @property
    def exact(self) -> Fraction:
        return Fraction(self.raw, self.fmt.one_raw)

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"FxSample({fx_to_hex(self)}={self.value}, {self.fmt})"


def fx_from_real(x, fmt: QFormat) -> FxSample:
    """Quantize a real number: nearest representable, saturating beyond range."""
    return FxSample(quantize_real(x, fmt), fmt)


def fx_zero(fmt: QFormat) -> FxSample:
    return FxSample(0, fmt)


def _check_fmt(a: FxSample, b: FxSample) -> None:
    if a.fmt != b.fmt:
        raise ValueError(f"format mismatch: {a.fmt} vs {b.fmt}")


def fx_add(a: FxSample, b: FxSample) -> tuple[FxSample, OverflowFlag]:
    _check_fmt(a, b)
    raw, d = add_raw(a.raw, b.raw, a.fmt)
    return FxSample(raw, a.fmt), _FLAG_BY_DIR[d]


def fx_mul(a: FxSample, b: FxSample, quant: MulQuant = MulQuant.SHIFT) -> tuple[FxSample, OverflowFlag]:
    _check_fmt(a, b)
    raw, d = mul_raw(a.raw, b.raw, a.fmt, quant)
    return FxSample(raw, a.fmt), _FLAG_BY_DIR[d]


def fx_abs(a: FxSample) -> FxSample:
    return FxSample(abs_raw(a.raw, a.fmt), a.fmt)


def fx_requantize(a: FxSample, to: QFormat) -> FxSample:
    return FxSample(requant_raw(a.raw, a.fmt, to), to)


def fx_to_hex(a: FxSample) -> str:
    """Hexadecimal text form of the raw bits, masked to total_bits."""
    mask = (1 << a.fmt.total_bits) - 1
    return f"0x{a.raw & mask:0{a.fmt.hex_digits}X}"


def fx_from_hex(text: str, fmt: QFormat) -> FxSample:
    raw = int(text, 16) & ((1 << fmt.total_bits) - 1)
    if raw >= 1 << (fmt.total_bits - 1):
        raw -= 1 << fmt.total_bits
    return FxSample(raw, fmt)
