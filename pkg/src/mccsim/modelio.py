"""Model persistence honoring the hardware weight-memory layout.

The weight image is a flat binary of per-neuron blocks in the multiplexed
data-loading order (stream-major, then layer, then neuron index).  Each
block holds the neuron's weights as little-endian two's-complement words
in application order -- basal inputs, then the proximal, distal and
universal context taps -- with the bias in the last used location.  Words
narrower than a whole number of bytes (e.g. the 11-bit Q3.7 format) are
stored right-aligned with sign extension.  Memory-bank units follow the
neuron blocks, one block each (extraction row, then decay, bias last).

The JSON sidecar captures everything needed to rebuild the network
skeleton; loading rebuilds the skeleton and streams the image back in.
"""

from __future__ import annotations

import json
from pathlib import Path

from .fixedpoint import FxSample, QFormat
from .neuron import CcpuSpec, TransferKind, TransferMode
from .network import (
    MemoryInstance,
    MemorySpec,
    NetworkInstance,
    NetworkSpec,
    StreamSpec,
    build_network,
)

BLOCK_CAPACITY_WORDS = 1024  # 1023 weights + 1 bias

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    """Schema violation, truncated image, or block/neuron mismatch."""


def word_bytes(fmt: QFormat) -> int:
    return (fmt.total_bits + 7) // 8


def encode_word(raw: int, fmt: QFormat) -> bytes:
    nbytes = word_bytes(fmt)
    return (raw & ((1 << (8 * nbytes)) - 1)).to_bytes(nbytes, "little")


def decode_word(data: bytes, fmt: QFormat) -> int:
    raw = int.from_bytes(data, "little")
    width = 8 * word_bytes(fmt)
    if raw >= 1 << (width - 1):
        raw -= 1 << width
    if not fmt.raw_min <= raw <= fmt.raw_max:
        raise ModelFileError(f"word 0x{int.from_bytes(data, 'little'):X} out of {fmt} range")
    return raw


def _neuron_words(spec: CcpuSpec) -> list[int]:
    words = [w.raw for w in spec.basal_weights]
    words += [w.raw for w in spec.ctx_weights_proximal]
    words += [w.raw for w in spec.ctx_weights_distal]
    words += [w.raw for w in spec.ctx_weights_universal]
    words.append(spec.bias.raw)  # bias in the last used location
    return words


def _block_layout(net: NetworkInstance) -> list[int]:
    """Word count of every block in image order."""
    sizes = []
    for s, l, i in net.neuron_coords():
        sizes.append(len(_neuron_words(net.layers[s][l][i])))
    if net.memory is not None:
        for row in net.memory.extract_weights:
            sizes.append(len(row) + 2)  # + decay + bias
    return sizes


def write_weight_image(net: NetworkInstance, path: str | Path) -> None:
    fmt = net.spec.qformat
    blob = bytearray()
    for s, l, i in net.neuron_coords():
        words = _neuron_words(net.layers[s][l][i])
        if len(words) > BLOCK_CAPACITY_WORDS:
            raise ModelFileError(f"block of {len(words)} words exceeds capacity")
        for raw in words:
            blob += encode_word(raw, fmt)
    if net.memory is not None:
        for row, bias in zip(net.memory.extract_weights, net.memory.extract_bias):
            words = [w.raw for w in row] + [net.memory.decay.raw, bias.raw]
            if len(words) > BLOCK_CAPACITY_WORDS:
                raise ModelFileError(f"memory block of {len(words)} words exceeds capacity")
            for raw in words:
                blob += encode_word(raw, fmt)
    Path(path).write_bytes(bytes(blob))


def read_weight_image(net: NetworkInstance, path: str | Path) -> NetworkInstance:
    """Overwrite a skeleton's weights from an image; shapes must match."""
    fmt = net.spec.qformat
    nb = word_bytes(fmt)
    data = Path(path).read_bytes()
    sizes = _block_layout(net)
    if any(sz > BLOCK_CAPACITY_WORDS for sz in sizes):
        raise ModelFileError("a block exceeds the 1024-word capacity")
    expected = sum(sizes) * nb
    if len(data) != expected:
        raise ModelFileError(f"weight image has {len(data)} bytes, expected {expected}")

    pos = 0

    def take() -> FxSample:
        nonlocal pos
        raw = decode_word(data[pos : pos + nb], fmt)
        pos += nb
        return FxSample(raw, fmt)

    layers = []
    for s in range(len(net.spec.streams)):
        stream_layers = []
        for l in range(net.spec.n_layers):
            neurons = []
            for old in net.layers[s][l]:
                basal = tuple(take() for _ in old.basal_weights)
                cp = tuple(take() for _ in old.ctx_weights_proximal)
                cd = tuple(take() for _ in old.ctx_weights_distal)
                cu = tuple(take() for _ in old.ctx_weights_universal)
                bias = take()
                neurons.append(
                    CcpuSpec(
                        basal_weights=basal,
                        bias=bias,
                        ctx_weights_proximal=cp,
                        ctx_weights_distal=cd,
                        ctx_weights_universal=cu,
                        mode=old.mode,
                    )
                )
            stream_layers.append(neurons)
        layers.append(stream_layers)

    memory = None
    if net.memory is not None:
        rows, biases, decay = [], [], None
        for row in net.memory.extract_weights:
            rows.append([take() for _ in row])
            decay = take()
            biases.append(take())
        memory = MemoryInstance(extract_weights=rows, extract_bias=biases, decay=decay)
    return NetworkInstance(net.spec, layers, memory, net.dead)


def _spec_to_json(spec: NetworkSpec) -> dict:
    return {
        "streams": [
            {"name": s.name, "input_width": s.input_width, "layer_widths": list(s.layer_widths)}
            for s in spec.streams
        ],
        "mode": spec.mode,
        "qformat": {"total_bits": spec.qformat.total_bits, "frac_bits": spec.qformat.frac_bits},
        "seed": spec.seed,
        "transfer": {"kind": spec.transfer.kind.value, "sigma": spec.transfer.sigma},
        "ctx_layers": list(spec.ctx_layers) if spec.ctx_layers is not None else None,
        "memory": (
            {"units": spec.memory.units, "source_layer": spec.memory.source_layer}
            if spec.memory is not None
            else None
        ),
    }


def _spec_from_json(doc: dict) -> NetworkSpec:
    try:
        streams = tuple(
            StreamSpec(s["name"], int(s["input_width"]), tuple(int(w) for w in s["layer_widths"]))
            for s in doc["streams"]
        )
        mem = doc["memory"]
        return NetworkSpec(
            streams=streams,
            mode=doc["mode"],
            qformat=QFormat(int(doc["qformat"]["total_bits"]), int(doc["qformat"]["frac_bits"])),
            seed=int(doc["seed"]),
            transfer=TransferMode(TransferKind(doc["transfer"]["kind"]), float(doc["transfer"]["sigma"])),
            ctx_layers=tuple(doc["ctx_layers"]) if doc["ctx_layers"] is not None else None,
            memory=MemorySpec(int(mem["units"]), int(mem["source_layer"])) if mem else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"bad model file schema: {exc}") from exc


def save_model(net: NetworkInstance, directory: str | Path, name: str = "model") -> Path:
    """Write <name>.json plus the <name>.bin weight image; returns the JSON path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    image = f"{name}.bin"
    write_weight_image(net, directory / image)
    doc = {
        "format_version": FORMAT_VERSION,
        "spec": _spec_to_json(net.spec),
        "weight_image": image,
        "blocks": len(_block_layout(net)),
        "dead": sorted(list(c) for c in net.dead),
    }
    path = directory / f"{name}.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def load_model(path: str | Path) -> NetworkInstance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"not a JSON model file: {exc}") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFileError(f"unsupported format_version {doc.get('format_version')!r}")
    spec = _spec_from_json(doc["spec"])
    skeleton = build_network(spec)
    expected_blocks = len(_block_layout(skeleton))
    if doc.get("blocks") != expected_blocks:
        raise ModelFileError(
            f"model file lists {doc.get('blocks')} blocks, network has {expected_blocks}"
        )
    net = read_weight_image(skeleton, path.parent / doc["weight_image"])
    dead = frozenset(tuple(c) for c in doc.get("dead", []))
    return NetworkInstance(net.spec, net.layers, net.memory, dead)
