"""CCPU drive, context integration, modulatory transfer, activation."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mccsim.fixedpoint import (
    Q3_7,
    Q3_12,
    fx_from_real,
    mul_raw,
)
from mccsim.neuron import (
    CcpuSpec,
    TransferKind,
    TransferMode,
    ccpu_forward,
    half_gaussian_float,
    integrate_context,
    mac_rf,
    modulatory_transfer,
    point_forward,
    relu6_raw,
    transfer_drive_float,
    transfer_drive_raw,
)
from mccsim.trace import ActivityTrace


def fx(x, fmt=Q3_12):
    return fx_from_real(x, fmt)


def make_spec(weights, bias, mode=TransferMode(), fmt=Q3_12, **ctx):
    return CcpuSpec(
        basal_weights=tuple(fx(w, fmt) for w in weights),
        bias=fx(bias, fmt),
        mode=mode,
        **ctx,
    )


def direct_drive_raw(r, c, fmt):
    """Independent route: the textbook form r^2 + 2rc + c(1 + |r|) in exact
    integers at double precision, then one output requantization."""
    f = fmt.frac_bits
    t_wide = r * r + 2 * r * c + c * (fmt.one_raw + abs(r))
    t = t_wide >> f
    return max(fmt.raw_min, min(fmt.raw_max, t))


class TestMacRf:
    def test_all_zero_inputs_bias_only(self):
        spec = make_spec([1, 1, 1], 0.5)
        trace = ActivityTrace()
        r = mac_rf([fx(0)] * 3, spec, trace)
        assert r.value == 0.5
        assert trace.synapse_events == 1  # the bias event
        assert trace.mac_total == 4

    def test_weighted_sum(self):
        spec = make_spec([0.5, 0.25], 0.0)
        trace = ActivityTrace()
        r = mac_rf([fx(1.0), fx(2.0)], spec, trace)
        assert r.value == 1.0
        assert trace.synapse_events == 3

    def test_accumulator_saturates(self):
        spec = make_spec([7.9, 7.9], 0.0)
        r = mac_rf([fx(7.9), fx(7.9)], spec, ActivityTrace())
        assert r.value == 7.999755859375

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mac_rf([fx(1.0)], make_spec([1, 1], 0.0), ActivityTrace())


class TestIntegrateContext:
    def test_zeros(self):
        assert integrate_context(fx(0), fx(0), fx(0)).raw == 0

    def test_positive_clip(self):
        assert integrate_context(fx(3.0), fx(3.0), fx(3.0)).value == 6.0

    def test_negative_clip(self):
        assert integrate_context(fx(-4.0), fx(-4.0), fx(0)).value == -6.0


class TestModulatoryTransfer:
    def test_zero_context_collapses_to_square(self):
        out = modulatory_transfer(fx(1.0), fx(0.0), TransferMode())
        assert out.value == 1.0

    def test_amplification_clips_at_six(self):
        # T(2, 1) = 4 + 4 + 1*(1+2) = 11
        out = modulatory_transfer(fx(2.0), fx(1.0), TransferMode())
        assert out.value == 6.0

    def test_suppression_gates_to_zero(self):
        # T(1, -2) = 1 - 4 + (-2)*2 = -7
        out = modulatory_transfer(fx(1.0), fx(-2.0), TransferMode())
        assert out.raw == 0

    def test_half_gaussian_rejected_in_fixed_point(self):
        mode = TransferMode(TransferKind.HALF_GAUSSIAN_REFERENCE)
        with pytest.raises(ValueError):
            modulatory_transfer(fx(1.0), fx(0.0), mode)


class TestCcpuForward:
    def test_everything_zero(self):
        spec = make_spec([1.0], 0.0)
        out = ccpu_forward([fx(0)], fx(0), fx(0), fx(0), spec, ActivityTrace())
        assert out.value.raw == 0 and not out.fired

    def test_unit_drive(self):
        spec = make_spec([1.0], 0.0)
        out = ccpu_forward([fx(1.0)], fx(0), fx(0), fx(0), spec, ActivityTrace())
        assert out.value.value == 1.0 and out.fired

    def test_proximal_context_amplifies(self):
        # T(1, 1) = 1 + 2 + 1*(1+1) = 5
        spec = make_spec([1.0], 0.0)
        out = ccpu_forward([fx(1.0)], fx(1.0), fx(0), fx(0), spec, ActivityTrace())
        assert out.value.value == 5.0
        assert out.c_drive.value == 1.0 and out.r_drive.value == 1.0

    def test_fired_iff_nonzero(self):
        spec = make_spec([1.0], 0.0)
        trace = ActivityTrace()
        for x, cp in [(0.5, 0.0), (0.0, 0.0), (1.0, -6.0)]:
            out = ccpu_forward([fx(x)], fx(cp), fx(0), fx(0), spec, trace)
            assert out.fired == (out.value.raw != 0)
        assert trace.neurons_total == 3


class TestPointForward:
    def test_identity(self):
        out = point_forward([fx(1.0)], make_spec([1.0], 0.0), ActivityTrace())
        assert out.value.value == 1.0

    def test_relu_gates_negative(self):
        out = point_forward([fx(1.0)], make_spec([-1.0], 0.0), ActivityTrace())
        assert out.value.raw == 0 and not out.fired

    def test_clip_at_six(self):
        # 2 * 7.9 saturates to 7.9998 then clips at 6
        out = point_forward([fx(2.0)], make_spec([7.9], 0.0), ActivityTrace())
        assert out.value.value == 6.0


class TestRearrangementIdentity:
    @given(
        st.fractions(min_value=-8, max_value=8),
        st.fractions(min_value=-8, max_value=8),
    )
    def test_exact_in_rationals(self, r, c):
        lhs = r * (r + 2 * c) + c + c * abs(r)
        rhs = r * r + 2 * r * c + c * (1 + abs(r))
        assert lhs == rhs

    def test_random_float_pairs_exact_in_rationals(self):
        # float evaluation orders round differently; exactness holds in the
        # rationals the floats denote (the acceptance suite runs 1e6 pairs)
        rng = np.random.default_rng(3)
        for rf, cf in rng.uniform(-8, 8, size=(1000, 2)):
            r, c = Fraction(float(rf)), Fraction(float(cf))
            assert r * (r + 2 * c) + c + c * abs(r) == r * r + 2 * r * c + c * (1 + abs(r))

    def test_fixed_point_grid_sample_within_2_ulp(self):
        # full exhaustive Q3.7 grid runs in the acceptance suite
        rng = np.random.default_rng(5)
        pairs = rng.integers(Q3_7.raw_min, Q3_7.raw_max + 1, size=(20_000, 2))
        for r, c in pairs:
            a = transfer_drive_raw(int(r), int(c), Q3_7)
            b = direct_drive_raw(int(r), int(c), Q3_7)
            assert abs(a - b) <= 2, (r, c, a, b)


class TestTransferProperties:
    def test_zero_context_neutrality_exhaustive_q3_7(self):
        for r in range(Q3_7.raw_min, Q3_7.raw_max + 1):
            t = transfer_drive_raw(r, 0, Q3_7)
            sq, _ = mul_raw(r, r, Q3_7)
            assert relu6_raw(t, Q3_7) == relu6_raw(sq, Q3_7)

    def test_context_monotone_for_nonneg_r(self):
        rs = np.linspace(0.0, 6.0, 25)
        cs = np.linspace(-6.0, 6.0, 49)
        for r in rs:
            vals = [transfer_drive_float(r, c) for c in cs]
            assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_suppression_reachable_for_nonneg_r(self):
        # some c in [-6, 0) silences every r in [0, 2]
        for r in np.linspace(0.0, 2.0, 41):
            assert any(
                transfer_drive_float(r, c) <= 0 for c in np.linspace(-6.0, -0.005, 200)
            ), r

    def test_negative_unit_r_is_context_insensitive(self):
        # dT/dc = 2r + 1 + |r| vanishes at r = -1: context cannot gate it
        for c in np.linspace(-6.0, 6.0, 25):
            assert transfer_drive_float(-1.0, c) == 1.0


class TestHalfGaussian:
    def test_support_and_range(self):
        assert half_gaussian_float(-1.0) == 0.0
        assert half_gaussian_float(0.0) == 0.0
        ts = np.linspace(0.01, 8, 400)
        vals = [half_gaussian_float(t) for t in ts]
        assert all(0 < v < 6 for v in vals)
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert half_gaussian_float(1e9) == pytest.approx(6.0)

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            TransferMode(sigma=0.0)


class TestCcpuSpecValidation:
    def test_capacity(self):
        with pytest.raises(ValueError):
            make_spec([0.0] * 1024, 0.0)

    def test_mixed_formats_rejected(self):
        with pytest.raises(ValueError):
            CcpuSpec(basal_weights=(fx(1.0, Q3_12),), bias=fx(0.0, Q3_7))
