"""Energy constant, trace accounting, conv counts, golden tables."""

import pytest

from mccsim.energy import (
    EnergyModel,
    LayerShape,
    check_tables,
    conv_mac_count,
    energy_from_trace,
    latency_from_trace,
    load_table1,
    load_table3,
    round_deep_uj,
    round_shallow_uj,
    sparsity_saving,
    table3_energy_uj,
)
from mccsim.trace import ActivityTrace


class TestEnergyModel:
    def test_synapse_constant_derivation(self):
        m = EnergyModel()
        assert m.mac_dynamic_power_mw * m.mac_cycles * m.clock_period_ns == 80.0  # pJ
        assert m.e_synapse_nj == 0.08
        assert m.e_synapse_uj == 8e-5

    def test_inconsistent_constant_rejected(self):
        with pytest.raises(ValueError):
            EnergyModel(e_synapse_nj=0.1)

    def test_scaled_model(self):
        m = EnergyModel(mac_dynamic_power_mw=1.0, e_synapse_nj=0.04)
        assert m.e_synapse_nj == pytest.approx(0.04)


class TestEnergyFromTrace:
    def _trace(self, events):
        return ActivityTrace(synapse_events=events, mac_total=events)

    def test_mcc_shallow_row(self):
        rep = energy_from_trace(self._trace(2306))
        assert rep.energy_uJ == pytest.approx(0.18448)
        assert round_shallow_uj(rep.energy_uJ) == 0.184

    def test_baseline_shallow_row(self):
        rep = energy_from_trace(self._trace(9522))
        assert rep.energy_uJ == pytest.approx(0.76176)

    def test_zero(self):
        assert energy_from_trace(self._trace(0)).energy_uJ == 0.0

    def test_additive_under_merge(self):
        a = ActivityTrace(synapse_events=123, mac_total=200)
        b = ActivityTrace(synapse_events=77, mac_total=100)
        merged = a.merge(b)
        assert energy_from_trace(merged).energy_uJ == pytest.approx(
            energy_from_trace(a).energy_uJ + energy_from_trace(b).energy_uJ
        )


class TestLatency:
    def test_single_layer_fanin_22(self):
        t = ActivityTrace(per_layer_active_fanin={"a/L0": 22})
        assert latency_from_trace(t) == pytest.approx(0.92)

    def test_bias_only_layer(self):
        t = ActivityTrace(per_layer_active_fanin={"a/L0": 0})
        assert latency_from_trace(t) == pytest.approx(0.04)

    def test_monotone_in_fanin(self):
        lo = ActivityTrace(per_layer_active_fanin={"a/L0": 5, "a/L1": 3})
        hi = ActivityTrace(per_layer_active_fanin={"a/L0": 6, "a/L1": 3})
        assert latency_from_trace(hi) > latency_from_trace(lo)

    def test_missing_data_rejected(self):
        with pytest.raises(ValueError):
            latency_from_trace(ActivityTrace())


class TestConvMacCount:
    def test_hand_counted_2x2_stride2(self):
        shape = LayerShape((4, 4, 1), (2, 2, 1), kernel=2, stride=2)
        assert conv_mac_count(shape) == 20

    def test_empty_output(self):
        assert conv_mac_count(LayerShape((4, 4, 1), (0, 0, 0), kernel=2)) == 0

    def test_same_padded_block(self):
        shape = LayerShape((32, 32, 32), (16, 16, 32), kernel=3, stride=2)
        assert conv_mac_count(shape) == 2_367_488

    def test_inconsistent_shape_rejected(self):
        with pytest.raises(ValueError):
            LayerShape((4, 4, 1), (3, 3, 1), kernel=2, stride=2)


class TestTable3Energy:
    def test_first_block(self):
        assert round_deep_uj(table3_energy_uj(9699)) == 776

    def test_big_block(self):
        assert round_deep_uj(table3_energy_uj(620757)) == 49661

    def test_unit(self):
        assert table3_energy_uj(1) == pytest.approx(0.08)


class TestSparsitySaving:
    def test_sparse_mcc_vs_baseline(self):
        rep = sparsity_saving(397284, 151525)
        assert rep.saving_uJ == pytest.approx(245759)
        assert rep.saving_pct == pytest.approx(61.86, abs=0.01)

    def test_mid_table_row(self):
        rep = sparsity_saving(198642, 121337)
        assert rep.saving_uJ == pytest.approx(77305)
        assert rep.saving_pct == pytest.approx(38.9, abs=0.05)

    def test_no_saving_when_equal(self):
        rep = sparsity_saving(100.0, 100.0, activity_fraction=0.2)
        assert rep.saving_uJ == 0.0

    def test_activity_scaling(self):
        rep = sparsity_saving(397284, 236757, activity_fraction=0.128)
        assert rep.energy_uJ == pytest.approx(236757 * 0.64)
        assert rep.saving_uJ == pytest.approx(245759, abs=1.0)

    def test_bad_activity_rejected(self):
        with pytest.raises(ValueError):
            sparsity_saving(1.0, 1.0, activity_fraction=0.0)


class TestGoldenTables:
    def test_shipped_tables_consistent(self):
        assert check_tables() == []

    def test_table1_rows(self):
        rows = {r.model: r for r in load_table1()}
        assert rows["mcc"].params == 10685 and rows["mine"].params == 10685
        assert rows["mine-concat"].params == 16331
        assert rows["mcc"].mac_used == 2306
        # the firing comparison the savings rest on: MCC is quietest
        assert rows["mcc"].not_firing_pct > rows["mine-attention-baseline"].not_firing_pct
        # latency and energy orderings
        assert rows["mcc"].latency_us < rows["mine-attention-baseline"].latency_us
        assert rows["mcc"].energy_uJ < rows["mine-attention-baseline"].energy_uJ

    def test_table3_saving_identities(self):
        for blk in load_table3():
            assert abs((blk.energy_base_uJ - blk.energy_mcc_uJ) - blk.saving_uJ) <= 1
            if not blk.corrupt_source:
                assert abs((blk.mac_base_k - blk.mac_mcc_k) - blk.saving_mac_k) <= 1

    def test_corrupt_block_flagged_and_energy_derived(self):
        blk = [b for b in load_table3() if b.corrupt_source]
        assert len(blk) == 1
        blk = blk[0]
        assert blk.mac_mcc_k_printed == 295946846
        assert blk.mac_mcc_k == 2959463
        assert round_deep_uj(table3_energy_uj(blk.mac_mcc_k)) == blk.energy_mcc_uJ

    def test_perturbed_table_caught(self):
        rows = load_table1()
        bad = rows[:-1] + [
            type(rows[-1])(
                model=rows[-1].model,
                params=rows[-1].params,
                not_firing_pct=rows[-1].not_firing_pct,
                mac_total=rows[-1].mac_total,
                mac_used=rows[-1].mac_used + 100,
                energy_uJ=rows[-1].energy_uJ,
                latency_us=rows[-1].latency_us,
            )
        ]
        assert check_tables(bad, load_table3())
