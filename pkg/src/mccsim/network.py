"""Multi-stream layered CCPU graph with cross-stream context and brief memory.

Topology and context convention
-------------------------------
Streams are evaluated depth-synchronously.  At layer l a neuron's basal
inputs are its own stream's layer-l input (the raw stream input at l=0,
otherwise the previous layer's outputs).  Context pathways tap signals
that are already available within the step, so the only state carried
across timesteps is the universal context:

* proximal (cp): weights over the own stream's layer-l input,
* distal (cd):   weights over the adjacent streams' layer-l inputs,
* universal (cu): per-neuron read-out of the brief working memory.

The brief memory is a small bank of leaky units fed by the fired outputs
of the memory-mapped layer of every stream: mem' = clamp(We.src + be +
decay*mem), cu_i = clamp(wu_i.mem' + bu_i).  Memory events are charged to
the step that consumes the universal context, so a step started from the
initial (no-history) state performs no memory work at all; this also
makes "reset the working memory" and "behave exactly like t=0" the same
operation.

Baseline mode instantiates point neurons on the identical topology with
every context pathway removed.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .fixedpoint import FxSample, MulQuant, QFormat, Q3_12, fx_from_real
from .neuron import (
    CcpuSpec,
    TransferKind,
    TransferMode,
    ccpu_forward,
    clamp6_raw,
    ctx_mac_raw,
    point_forward,
)
from .fixedpoint import add_raw, mul_raw
from .trace import ActivityTrace

_SHORTHAND = re.compile(r"^(\d+)i((?::\d+)+?):(\d+)o$")


@dataclass(frozen=True)
class StreamSpec:
    name: str
    input_width: int
    layer_widths: tuple[int, ...]

    def __post_init__(self):
        if self.input_width <= 0 or not self.layer_widths:
            raise ValueError(f"stream {self.name}: empty shape")
        if any(w <= 0 for w in self.layer_widths):
            raise ValueError(f"stream {self.name}: nonpositive layer width")

    @classmethod
    def parse(cls, name: str, shorthand: str) -> "StreamSpec":
        """Parse the compact form, e.g. '22i:24:12:6:22o'."""
        m = _SHORTHAND.match(shorthand)
        if not m:
            raise ValueError(f"bad stream shorthand {shorthand!r}")
        hidden = tuple(int(x) for x in m.group(2).strip(":").split(":"))
        return cls(name, int(m.group(1)), hidden + (int(m.group(3)),))

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]

    def fan_in(self, layer: int) -> int:
        return self.input_width if layer == 0 else self.layer_widths[layer - 1]


@dataclass(frozen=True)
class MemorySpec:
    """Brief cross-modal working memory: `units` leaky units reading the
    fired outputs of `source_layer` (negative indices from the end,
    default: deepest hidden layer) of every stream."""

    units: int = 20
    source_layer: int = -2

    def __post_init__(self):
        if self.units <= 0:
            raise ValueError("memory needs at least one unit")


@dataclass(frozen=True)
class NetworkSpec:
    streams: tuple[StreamSpec, ...]
    mode: str = "mcc"  # "mcc" | "baseline"
    qformat: QFormat = Q3_12
    seed: int = 0
    transfer: TransferMode = field(default_factory=TransferMode)
    ctx_layers: tuple[int, ...] | None = None  # None: all hidden layers
    memory: MemorySpec | None = field(default_factory=MemorySpec)

    def __post_init__(self):
        if self.mode not in ("mcc", "baseline"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.streams:
            raise ValueError("need at least one stream")
        depths = {len(s.layer_widths) for s in self.streams}
        if len(depths) != 1:
            raise ValueError("all streams must have the same number of layers")
        if len({s.output_width for s in self.streams}) != 1:
            raise ValueError("fused stream output layers must have equal width")
        if len({s.name for s in self.streams}) != len(self.streams):
            raise ValueError("duplicate stream names")
        for l in self.context_layers():
            if not 0 <= l < self.n_layers:
                raise ValueError(f"ctx layer {l} out of range")
        if self.memory is not None:
            self.memory_source_layer()  # validates the index

    @property
    def n_layers(self) -> int:
        return len(self.streams[0].layer_widths)

    def context_layers(self) -> tuple[int, ...]:
        if self.mode != "mcc":
            return ()
        if self.ctx_layers is not None:
            return self.ctx_layers
        return tuple(range(self.n_layers - 1))

    def memory_source_layer(self) -> int:
        assert self.memory is not None
        idx = self.memory.source_layer
        if idx < 0:
            idx += self.n_layers
        if not 0 <= idx < self.n_layers:
            raise ValueError("memory source layer out of range")
        return idx

    def has_memory(self) -> bool:
        return self.mode == "mcc" and self.memory is not None

    def memory_source_width(self) -> int:
        return sum(s.layer_widths[self.memory_source_layer()] for s in self.streams)

    def neighbours(self, stream_idx: int) -> tuple[int, ...]:
        """Adjacent streams in declaration order (both neighbours for interior streams)."""
        out = []
        if stream_idx > 0:
            out.append(stream_idx - 1)
        if stream_idx + 1 < len(self.streams):
            out.append(stream_idx + 1)
        return tuple(out)

    def distal_fan_in(self, stream_idx: int, layer: int) -> int:
        return sum(self.streams[j].fan_in(layer) for j in self.neighbours(stream_idx))


@dataclass(frozen=True)
class WeightInit:
    scheme: str = "uniform-fanin"  # U(-gain/sqrt(fanin), +gain/sqrt(fanin)), quantized
    gain: float = 1.0


@dataclass
class MemoryInstance:
    extract_weights: list[list[FxSample]]  # units x source_width
    extract_bias: list[FxSample]
    decay: FxSample


class NetworkInstance:
    """All neuron specs plus the memory bank; immutable during inference."""

    def __init__(self, spec: NetworkSpec, layers, memory: MemoryInstance | None, dead=frozenset()):
        self.spec = spec
        self.layers = layers  # layers[stream_idx][layer_idx] -> list[CcpuSpec]
        self.memory = memory
        self.dead = frozenset(dead)

    # -- structure ---------------------------------------------------------

    def layer_key(self, stream_idx: int, layer: int) -> str:
        return f"{self.spec.streams[stream_idx].name}/L{layer}"

    def neuron_coords(self):
        """Stream-major, layer-major, index order (the data-loading order)."""
        for s in range(len(self.spec.streams)):
            for l in range(self.spec.n_layers):
                for i in range(len(self.layers[s][l])):
                    yield (s, l, i)

    def hidden_coords(self):
        last = self.spec.n_layers - 1
        return [c for c in self.neuron_coords() if c[1] != last]

    @property
    def n_neurons(self) -> int:
        return sum(len(self.layers[s][l]) for s in range(len(self.spec.streams))
                   for l in range(self.spec.n_layers))

    def flat_index(self, coord) -> int:
        idx = 0
        for c in self.neuron_coords():
            if c == coord:
                return idx
            idx += 1
        raise KeyError(coord)

    def parameter_count(self) -> int:
        """Trainable parameters: basal weights+biases, context weights, and
        the memory bank (extraction weights+biases, decay, per-neuron
        universal taps+bias)."""
        n = 0
        for s, l, i in self.neuron_coords():
            spec = self.layers[s][l][i]
            n += len(spec.basal_weights) + 1
            n += len(spec.ctx_weights_proximal) + len(spec.ctx_weights_distal)
            n += len(spec.ctx_weights_universal)
        if self.memory is not None:
            n += sum(len(row) for row in self.memory.extract_weights)
            n += len(self.memory.extract_bias) + 1  # +1: decay scalar
        return n


@dataclass
class WorkingMemoryState:
    """State after a step: the memory bank, the universal context the last
    step consumed (all-zero before any history exists), and the fired
    memory-source outputs pending consumption by the next step."""

    mem: tuple[FxSample, ...]
    cu_vector: tuple[FxSample, ...]
    pending_src: tuple[FxSample, ...] | None = None

    @classmethod
    def initial(cls, net: NetworkInstance) -> "WorkingMemoryState":
        fmt = net.spec.qformat
        m = net.spec.memory.units if net.spec.has_memory() else 0
        zero = FxSample(0, fmt)
        return cls(mem=(zero,) * m, cu_vector=(zero,) * net.n_neurons, pending_src=None)


def build_network(spec: NetworkSpec, init: WeightInit = WeightInit()) -> NetworkInstance:
    """Allocate all neurons with deterministic seed-derived weights."""
    if init.scheme != "uniform-fanin":
        raise ValueError(f"unknown init scheme {init.scheme!r}")
    rng = np.random.default_rng(spec.seed)
    fmt = spec.qformat
    mcc = spec.mode == "mcc"
    ctx_layers = set(spec.context_layers())
    mem_taps = spec.memory.units + 1 if spec.has_memory() else 0  # taps + bias

    def draw(n, fan):
        bound = init.gain / np.sqrt(max(fan, 1))
        return [fx_from_real(v, fmt) for v in rng.uniform(-bound, bound, n)]

    layers = []
    for s, stream in enumerate(spec.streams):
        stream_layers = []
        for l, width in enumerate(stream.layer_widths):
            fan = stream.fan_in(l)
            neurons = []
            for _ in range(width):
                w = draw(fan + 1, fan)
                neurons.append(
                    CcpuSpec(
                        basal_weights=tuple(w[:-1]),
                        bias=w[-1],
                        mode=spec.transfer if mcc else TransferMode(TransferKind.POINT_BASELINE),
                    )
                )
            stream_layers.append(neurons)
        layers.append(stream_layers)

    if mcc:
        for s, stream in enumerate(spec.streams):
            for l in range(spec.n_layers):
                in_ctx = l in ctx_layers
                fan_p = stream.fan_in(l)
                fan_d = spec.distal_fan_in(s, l)
                for i, n in enumerate(layers[s][l]):
                    cp = tuple(draw(fan_p, fan_p)) if in_ctx else ()
                    cd = tuple(draw(fan_d, fan_d)) if in_ctx and fan_d else ()
                    cu = tuple(draw(mem_taps, mem_taps)) if mem_taps else ()
                    layers[s][l][i] = replace(n, ctx_weights_proximal=cp,
                                              ctx_weights_distal=cd,
                                              ctx_weights_universal=cu)

    memory = None
    if spec.has_memory():
        src_w = spec.memory_source_width()
        memory = MemoryInstance(
            extract_weights=[draw(src_w, src_w) for _ in range(spec.memory.units)],
            extract_bias=draw(spec.memory.units, src_w),
            decay=fx_from_real(0.5, fmt),
        )

    return NetworkInstance(spec, layers, memory)


# ---------------------------------------------------------------------------
# evaluation


def _refresh_memory(net: NetworkInstance, wm: WorkingMemoryState, trace: ActivityTrace,
                    quant: MulQuant) -> tuple[tuple[FxSample, ...], tuple[FxSample, ...]]:
    """Consume the pending fired outputs: update the memory bank and
    broadcast the universal context.  All events are charged here."""
    fmt = net.spec.qformat
    src = [x.raw for x in wm.pending_src]
    mem_new = []
    for row, b, old in zip(net.memory.extract_weights, net.memory.extract_bias, wm.mem):
        acc = ctx_mac_raw(src, [w.raw for w in row], fmt, trace, quant)
        acc, _ = add_raw(acc, b.raw, fmt)
        trace.add_active(1)  # bias input is hardcoded 1
        if old.raw != 0:
            leak, _ = mul_raw(net.memory.decay.raw, old.raw, fmt, quant)
            acc, _ = add_raw(acc, leak, fmt)
            trace.add_active(1)
        else:
            trace.add_skipped(1)
        mem_new.append(FxSample(clamp6_raw(acc, fmt), fmt))

    mem_raws = [x.raw for x in mem_new]
    cu = []
    for s, l, i in net.neuron_coords():
        taps = net.layers[s][l][i].ctx_weights_universal
        if not taps:
            cu.append(FxSample(0, fmt))
            continue
        acc = ctx_mac_raw(mem_raws, [w.raw for w in taps[:-1]], fmt, trace, quant)
        acc, _ = add_raw(acc, taps[-1].raw, fmt)
        trace.add_active(1)
        cu.append(FxSample(clamp6_raw(acc, fmt), fmt))
    return tuple(mem_new), tuple(cu)


def step(
    net: NetworkInstance,
    inputs: dict[str, tuple[FxSample, ...]],
    wm: WorkingMemoryState | None = None,
    quant: MulQuant = MulQuant.SHIFT,
) -> tuple[dict[str, tuple[FxSample, ...]], WorkingMemoryState, ActivityTrace]:
    """One synchronous timestep over all streams.

    Phase A evaluates every layer depth-first across streams using the
    universal context derived from the previous step's fired outputs;
    phase B records this step's fired memory-source outputs for the next
    step.
    """
    spec = net.spec
    fmt = spec.qformat
    if wm is None:
        wm = WorkingMemoryState.initial(net)
    trace = ActivityTrace()
    zero = FxSample(0, fmt)

    for s_spec in spec.streams:
        got = inputs.get(s_spec.name)
        if got is None or len(got) != s_spec.input_width:
            raise ValueError(f"stream {s_spec.name}: expected {s_spec.input_width} inputs")

    if spec.has_memory() and wm.pending_src is not None:
        mem, cu_vec = _refresh_memory(net, wm, trace, quant)
    else:
        mem, cu_vec = wm.mem, wm.cu_vector

    ctx_layers = set(spec.context_layers())
    acts: list[list[tuple[FxSample, ...]]] = [[] for _ in spec.streams]
    flat = 0
    cu_index = {}
    for c in net.neuron_coords():
        cu_index[c] = flat
        flat += 1

    for l in range(spec.n_layers):
        layer_inputs = [
            inputs[st.name] if l == 0 else acts[s][l - 1]
            for s, st in enumerate(spec.streams)
        ]
        for s, st in enumerate(spec.streams):
            x_own = layer_inputs[s]
            x_adj: tuple[FxSample, ...] = ()
            if l in ctx_layers:
                for j in spec.neighbours(s):
                    x_adj = x_adj + tuple(layer_inputs[j])
            key = net.layer_key(s, l)
            outs = []
            for i, nspec in enumerate(net.layers[s][l]):
                if (s, l, i) in net.dead:
                    outs.append(zero)
                    trace.note_neuron(False)
                    continue
                if nspec.mode.kind is TransferKind.POINT_BASELINE:
                    out = point_forward(x_own, nspec, trace, key, quant)
                else:
                    if l in ctx_layers and nspec.ctx_weights_proximal:
                        cp = FxSample(
                            ctx_mac_raw([x.raw for x in x_own],
                                        [w.raw for w in nspec.ctx_weights_proximal],
                                        fmt, trace, quant), fmt)
                    else:
                        cp = zero
                    if l in ctx_layers and nspec.ctx_weights_distal:
                        cd = FxSample(
                            ctx_mac_raw([x.raw for x in x_adj],
                                        [w.raw for w in nspec.ctx_weights_distal],
                                        fmt, trace, quant), fmt)
                    else:
                        cd = zero
                    cu = cu_vec[cu_index[(s, l, i)]] if nspec.ctx_weights_universal else zero
                    out = ccpu_forward(x_own, cp, cd, cu, nspec, trace, key, quant)
                outs.append(out.value)
            acts[s].append(tuple(outs))

    outputs = {st.name: acts[s][-1] for s, st in enumerate(spec.streams)}

    pending = None
    if spec.has_memory():
        src_l = spec.memory_source_layer()
        flat_src: list[FxSample] = []
        for s in range(len(spec.streams)):
            flat_src.extend(acts[s][src_l])
        pending = tuple(flat_src)
    wm_next = WorkingMemoryState(mem=mem, cu_vector=cu_vec, pending_src=pending)
    return outputs, wm_next, trace


def fuse_outputs(outputs: dict[str, tuple[FxSample, ...]]) -> tuple[FxSample, ...]:
    """Elementwise saturating add of the stream outputs (the enhancement head)."""
    streams = list(outputs.values())
    fmt = streams[0][0].fmt
    fused = []
    for i in range(len(streams[0])):
        acc = streams[0][i].raw
        for other in streams[1:]:
            acc, _ = add_raw(acc, other[i].raw, fmt)
        fused.append(FxSample(acc, fmt))
    return tuple(fused)


def infer(
    net: NetworkInstance,
    dataset,
    quant: MulQuant = MulQuant.SHIFT,
):
    """Run sequences through the network, merging traces.

    ``dataset`` is a sequence of items; each item is a sequence of
    timesteps; each timestep maps stream name -> input vector.  Every item
    starts from a fresh working memory.  Returns (per-item lists of fused
    outputs, aggregate ActivityTrace).
    """
    if not dataset:
        raise ValueError("empty dataset")
    total = ActivityTrace()
    results = []
    for item in dataset:
        wm = WorkingMemoryState.initial(net)
        fused_seq = []
        for frame in item:
            outputs, wm, tr = step(net, frame, wm, quant)
            total = total.merge(tr)
            fused_seq.append(fuse_outputs(outputs))
        results.append(fused_seq)
    return results, total


def kill_cells(net: NetworkInstance, fraction: float, seed: int = 0) -> NetworkInstance:
    """Permanently silence a uniformly chosen fraction of hidden neurons.

    Dead cells output zero, run no MACs (their events vanish from both
    used and total counts) and still count as present-but-silent in the
    activity statistics.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    hidden = net.hidden_coords()
    k = int(round(fraction * len(hidden)))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(hidden), size=k, replace=False) if k else []
    dead = set(net.dead)
    dead.update(hidden[int(j)] for j in chosen)
    return NetworkInstance(net.spec, copy.deepcopy(net.layers), copy.deepcopy(net.memory), dead)


# ---------------------------------------------------------------------------
# canonical shapes


def shallow_av_spec(
    mode: str = "mcc",
    qformat: QFormat = Q3_12,
    seed: int = 0,
    transfer: TransferMode = TransferMode(),
) -> NetworkSpec:
    """The shallow audio-visual network: audio 22i:24:12:6:22o, video
    50i:24:12:6:22o, context on the hidden layers, 20-unit brief memory
    fed by the deepest hidden layer.  In mcc mode this counts 10685
    trainable parameters."""
    return NetworkSpec(
        streams=(
            StreamSpec.parse("audio", "22i:24:12:6:22o"),
            StreamSpec.parse("video", "50i:24:12:6:22o"),
        ),
        mode=mode,
        qformat=qformat,
        seed=seed,
        transfer=transfer,
        memory=MemorySpec(units=20, source_layer=-2),
    )


def table1_concat_spec(qformat: QFormat = Q3_12, seed: int = 0) -> NetworkSpec:
    """Attention-free concatenation baseline: one fused point-neuron
    stream over the concatenated 72-dim audio+video features.  Hidden
    widths are chosen to reproduce the published 16331-parameter count
    (the original layout is not public)."""
    return NetworkSpec(
        streams=(StreamSpec.parse("av", "72i:115:51:27:22o"),),
        mode="baseline",
        qformat=qformat,
        seed=seed,
        memory=None,
    )
