"""Toy data, float trainer, surrogate, quantized export."""

from types import SimpleNamespace

import numpy as np
import pytest
import torch

from mccsim.fixedpoint import QFormat, Q3_12
from mccsim.network import NetworkSpec, StreamSpec, infer, shallow_av_spec
from mccsim.neuron import TransferKind, TransferMode
from mccsim.toy import (
    FloatNetwork,
    LossConfigL2,
    ToyAvSpec,
    bitwidth_sweep,
    evaluate_fx,
    export_quantized,
    firing_surrogate,
    hard_firing_fraction,
    make_toy_av,
    quantization_format,
    resilience_experiment,
    train_supervised,
)

HGF = TransferMode(TransferKind.HALF_GAUSSIAN_REFERENCE)


class TestToyData:
    def test_shapes_and_determinism(self):
        a = make_toy_av(ToyAvSpec(n_sequences=8, seq_len=3, seed=5))
        b = make_toy_av(ToyAvSpec(n_sequences=8, seq_len=3, seed=5))
        assert a.audio.shape == (8, 3, 22) and a.video.shape == (8, 3, 50)
        assert torch.equal(a.clean, b.clean) and torch.equal(a.audio, b.audio)

    def test_silence_structure(self):
        d = make_toy_av(ToyAvSpec(seed=0))
        silent = (d.clean.sum(-1) == 0).double().mean()
        assert 0.2 < float(silent) < 0.6  # real silence stretches exist
        assert float(d.clean.min()) == 0.0 and float(d.clean.max()) <= 1.0

    def test_fx_dataset_layout(self):
        d = make_toy_av(ToyAvSpec(n_sequences=2, seq_len=2))
        ds = d.to_fx_dataset(Q3_12)
        assert len(ds) == 2 and len(ds[0]) == 2
        assert len(ds[0][0]["audio"]) == 22 and len(ds[0][0]["video"]) == 50


class TestFiringSurrogate:
    def test_deeply_negative_drives(self):
        eps = firing_surrogate([torch.full((100,), -1e3, dtype=torch.float64)])
        assert float(eps) == pytest.approx(0.0, abs=1e-12)

    def test_zero_drives_give_half(self):
        eps = firing_surrogate([torch.zeros(10, dtype=torch.float64)])
        assert float(eps) == pytest.approx(0.5)

    def test_symmetric_pair(self):
        eps = firing_surrogate([torch.tensor([-1.0, 1.0], dtype=torch.float64)], k=10.0)
        assert float(eps) == pytest.approx(0.5, abs=1e-4)

    def test_sharpness_approaches_hard_count(self):
        rng = np.random.default_rng(0)
        mags = rng.uniform(0.05, 2.0, 500)  # bounded away from zero
        t = torch.from_numpy(mags * rng.choice([-1.0, 1.0], 500))
        hard = hard_firing_fraction([t])
        loose = abs(float(firing_surrogate([t], 2.0)) - hard)
        sharp = abs(float(firing_surrogate([t], 1000.0)) - hard)
        assert sharp < 1e-9 and loose > 1e-5


class TestTrainer:
    def test_linear_regression_sanity(self):
        # gamma=0, one point neuron, y = 2x: the weight converges to 2
        spec = NetworkSpec(
            streams=(StreamSpec("x", 1, (1,)),), mode="baseline", memory=None, seed=0
        )
        model = FloatNetwork(spec)
        x = torch.linspace(0.1, 1.0, 64, dtype=torch.float64).reshape(64, 1, 1)
        data = SimpleNamespace(inputs=lambda: {"x": x}, clean=2.0 * x)
        res = train_supervised(
            model, data, LossConfigL2(gamma=0.0, weight_decay=0.0), epochs=800
        )
        assert res.loss_curve[-1] < 1e-4
        assert model.params["s0_l0_w"].item() == pytest.approx(2.0, abs=0.05)

    def test_divergence_aborts_with_diagnostic(self):
        model = FloatNetwork(shallow_av_spec(mode="baseline", transfer=HGF))
        with torch.no_grad():
            model.params["s0_l0_w"][0, 0] = float("nan")
        data = make_toy_av(ToyAvSpec(n_sequences=4, seq_len=2))
        with pytest.raises(RuntimeError, match="diverged"):
            train_supervised(model, data, LossConfigL2(), epochs=2)

    def test_fixed_seed_reproduces_curves(self):
        data = make_toy_av(ToyAvSpec(n_sequences=8, seq_len=2))
        curves = []
        for _ in range(2):
            model = FloatNetwork(shallow_av_spec(mode="mcc", seed=3, transfer=HGF))
            res = train_supervised(model, data, LossConfigL2(), epochs=30)
            curves.append(res.loss_curve)
        assert np.array_equal(curves[0], curves[1])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LossConfigL2(gamma=-1.0)
        with pytest.raises(ValueError):
            LossConfigL2(unit_dropout=1.0)


class TestExport:
    def test_wide_format_tracks_float(self):
        data = make_toy_av(ToyAvSpec(n_sequences=4, seq_len=3))
        model = FloatNetwork(shallow_av_spec(mode="mcc", seed=0, transfer=HGF))
        train_supervised(model, data, LossConfigL2(), epochs=60)
        wide = QFormat(30, 26)  # Q3.26: the datapath's range, fine precision
        net = export_quantized(model, wide)
        with torch.no_grad():
            fl, _ = model(data.inputs(), kind=TransferKind.RELU6_HARDWARE)
        outs, _ = infer(net, data.to_fx_dataset(wide))
        dev = max(
            abs(o.value - fl[i, t, j].item())
            for i, seq in enumerate(outs)
            for t, fo in enumerate(seq)
            for j, o in enumerate(fo)
        )
        assert dev < 1e-4

    def test_exported_parameter_count_matches(self):
        model = FloatNetwork(shallow_av_spec(mode="mcc", seed=1, transfer=HGF))
        net = export_quantized(model, Q3_12)
        assert net.parameter_count() == 10685
        assert sum(p.numel() for p in model.parameters()) == 10685

    def test_quantization_format_family(self):
        assert quantization_format(16) == Q3_12
        assert str(quantization_format(11)) == "Q3.7"
        with pytest.raises(ValueError):
            quantization_format(4)

    def test_bitwidth_sweep_rows(self):
        data = make_toy_av(ToyAvSpec(n_sequences=2, seq_len=2))
        model = FloatNetwork(shallow_av_spec(mode="baseline", seed=0, transfer=HGF))
        rows = bitwidth_sweep(model, data, widths=(8, 16))
        assert [r["width"] for r in rows] == [8, 16]
        assert all(r["mse"] >= 0 for r in rows)


class TestResilienceExperiment:
    def test_full_killing_silences_everything(self):
        data = make_toy_av(ToyAvSpec(n_sequences=2, seq_len=2))
        model = FloatNetwork(shallow_av_spec(mode="mcc", seed=0, transfer=HGF))
        net = export_quantized(model, Q3_12)
        rows = resilience_experiment(net, data, fractions=(1.0,), n_seeds=2)
        # all hidden cells dead; only output neurons can still fire
        assert rows[0]["activity_mean"] < 44 / 128

    def test_zero_fraction_matches_unkilled(self):
        data = make_toy_av(ToyAvSpec(n_sequences=2, seq_len=2))
        model = FloatNetwork(shallow_av_spec(mode="mcc", seed=0, transfer=HGF))
        net = export_quantized(model, Q3_12)
        mse, _ = evaluate_fx(net, data)
        rows = resilience_experiment(net, data, fractions=(0.0,), n_seeds=3)
        assert rows[0]["mse_mean"] == pytest.approx(mse)
        assert rows[0]["mse_sd"] == pytest.approx(0.0)
