"""Weight-image layout, model round-trips, file validation."""

import json

import numpy as np
import pytest

from mccsim.fixedpoint import Q3_7, Q3_12, fx_from_real
from mccsim.modelio import (
    ModelFileError,
    decode_word,
    encode_word,
    load_model,
    read_weight_image,
    save_model,
    write_weight_image,
)
from mccsim.neuron import CcpuSpec, TransferKind, TransferMode
from mccsim.network import (
    NetworkSpec,
    StreamSpec,
    build_network,
    kill_cells,
    shallow_av_spec,
    step,
)


def random_frame(net, rng):
    return {
        s.name: tuple(fx_from_real(v, net.spec.qformat) for v in rng.uniform(-1, 1, s.input_width))
        for s in net.spec.streams
    }


class TestWordEncoding:
    def test_q3_12_word(self):
        assert encode_word(0x1000, Q3_12) == b"\x00\x10"
        assert decode_word(b"\x00\x10", Q3_12) == 0x1000

    def test_negative_sign_extension_q3_7(self):
        raw = -1024  # 11-bit minimum, stored sign-extended in 16 bits
        data = encode_word(raw, Q3_7)
        assert data == b"\x00\xfc"
        assert decode_word(data, Q3_7) == raw

    def test_out_of_range_word_rejected(self):
        with pytest.raises(ModelFileError):
            decode_word(b"\x00\x08", Q3_7)  # 0x0800 needs 12 bits


class TestWeightImage:
    def test_single_neuron_block_bytes(self, tmp_path):
        spec = NetworkSpec(streams=(StreamSpec("a", 1, (1,)),), mode="baseline", memory=None)
        net = build_network(spec)
        net.layers[0][0][0] = CcpuSpec(
            basal_weights=(fx_from_real(1.0, Q3_12),),
            bias=fx_from_real(0.5, Q3_12),
            mode=TransferMode(TransferKind.POINT_BASELINE),
        )
        path = tmp_path / "img.bin"
        write_weight_image(net, path)
        # weight 1.0 = 0x1000, bias 0.5 = 0x0800 in the last location
        assert path.read_bytes() == bytes([0x00, 0x10, 0x00, 0x08])

    def test_truncated_image_rejected(self, tmp_path):
        net = build_network(shallow_av_spec())
        path = tmp_path / "img.bin"
        write_weight_image(net, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ModelFileError):
            read_weight_image(net, path)

    def test_oversized_fan_in_rejected_at_construction(self):
        spec = NetworkSpec(streams=(StreamSpec("a", 1024, (1,)),), mode="baseline", memory=None)
        with pytest.raises(ValueError):
            build_network(spec)  # 1024 weights + bias = 1025-word block


class TestModelRoundTrip:
    @pytest.mark.parametrize("mode", ["mcc", "baseline"])
    def test_bit_identical_outputs(self, tmp_path, mode):
        net = build_network(shallow_av_spec(mode=mode, seed=13))
        path = save_model(net, tmp_path)
        loaded = load_model(path)
        assert loaded.parameter_count() == net.parameter_count()
        rng = np.random.default_rng(0)
        wm_a = wm_b = None
        for _ in range(20):
            frame = random_frame(net, rng)
            a, wm_a, _ = step(net, frame, wm_a)
            b, wm_b, _ = step(loaded, frame, wm_b)
            assert [o.raw for s in sorted(a) for o in a[s]] == [
                o.raw for s in sorted(b) for o in b[s]
            ]

    def test_q3_7_round_trip(self, tmp_path):
        net = build_network(shallow_av_spec(qformat=Q3_7, seed=1))
        loaded = load_model(save_model(net, tmp_path))
        frame = random_frame(net, np.random.default_rng(1))
        a, _, _ = step(net, frame)
        b, _, _ = step(loaded, frame)
        assert [o.raw for s in sorted(a) for o in a[s]] == [
            o.raw for s in sorted(b) for o in b[s]
        ]

    def test_dead_cells_survive_round_trip(self, tmp_path):
        net = kill_cells(build_network(shallow_av_spec(seed=2)), 0.25, seed=7)
        loaded = load_model(save_model(net, tmp_path))
        assert loaded.dead == net.dead

    def test_block_count_mismatch_rejected(self, tmp_path):
        net = build_network(shallow_av_spec())
        path = save_model(net, tmp_path)
        doc = json.loads(path.read_text())
        doc["blocks"] += 1
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFileError):
            load_model(path)

    def test_schema_violation_rejected(self, tmp_path):
        net = build_network(shallow_av_spec())
        path = save_model(net, tmp_path)
        doc = json.loads(path.read_text())
        del doc["spec"]["qformat"]
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFileError):
            load_model(path)
