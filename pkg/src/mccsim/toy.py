"""Desk-scale float training and quantization experiments.

Training happens in float64 with the smooth half-Gaussian gate standing
in for the hardware ReLU6 (same support, same [0, 6] range); fixed point
is inference-only.  The float network mirrors the fixed-point instance
structure one-to-one so a trained model exports to a bit-exact
``NetworkInstance`` by quantizing each weight.

The toy task mirrors the shallow audio-visual layout without the speech
corpora: reconstruct a clean 22-dim signal from a noisy 22-dim "audio"
stream and a correlated 50-dim "video" stream, over short sequences so
the brief memory has something to remember.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch
from torch import nn

from .fixedpoint import FxSample, QFormat, fx_from_real
from .network import MemoryInstance, NetworkInstance, NetworkSpec, infer, kill_cells
from .neuron import CcpuSpec, TransferKind, TransferMode
from .trace import ActivityTrace

CLIP = 6.0
RAIL = 8.0  # the Q3.x accumulator range the fixed-point datapath saturates to


# ---------------------------------------------------------------------------
# synthetic audio-visual data


@dataclass(frozen=True)
class ToyAvSpec:
    n_sequences: int = 64
    seq_len: int = 6
    clean_dim: int = 22
    video_dim: int = 50
    audio_noise: float = 0.8
    video_noise: float = 0.02
    voice_on_prob: float = 0.6
    voice_persistence: float = 0.75
    seed: int = 0


class ToyAvData:
    def __init__(self, audio: torch.Tensor, video: torch.Tensor, clean: torch.Tensor):
        self.audio = audio  # [n, T, 22]
        self.video = video  # [n, T, 50]
        self.clean = clean  # [n, T, 22]

    @property
    def n_sequences(self) -> int:
        return self.audio.shape[0]

    def subset(self, n: int) -> "ToyAvData":
        return ToyAvData(self.audio[:n], self.video[:n], self.clean[:n])

    def inputs(self) -> dict[str, torch.Tensor]:
        return {"audio": self.audio, "video": self.video}

    def to_fx_dataset(self, fmt: QFormat) -> list[list[dict[str, tuple[FxSample, ...]]]]:
        items = []
        for i in range(self.n_sequences):
            seq = []
            for t in range(self.audio.shape[1]):
                seq.append(
                    {
                        "audio": tuple(fx_from_real(v, fmt) for v in self.audio[i, t].tolist()),
                        "video": tuple(fx_from_real(v, fmt) for v in self.video[i, t].tolist()),
                    }
                )
            items.append(seq)
        return items


def make_toy_av(spec: ToyAvSpec = ToyAvSpec()) -> ToyAvData:
    """Speech-like sequences: a persistent per-dim binary mask times a slow
    amplitude walk, all gated by a persistent on/off voice-activity state,
    so whole frames go silent for stretches and per-dim targets are
    bimodal like time-frequency masks.  Audio carries the clean signal
    plus heavy always-on white noise; video is a fixed random linear view
    of the clean signal with light noise, so the cross-stream and memory
    pathways carry the activity cue the noisy audio lacks."""
    rng = np.random.default_rng(spec.seed)
    n, T, d = spec.n_sequences, spec.seq_len, spec.clean_dim
    amp = np.empty((n, T, 1))
    amp[:, 0] = rng.uniform(0.6, 1.0, (n, 1))
    mask = np.empty((n, T, d))
    mask[:, 0] = rng.uniform(size=(n, d)) < 0.5
    gate = np.empty((n, T))
    gate[:, 0] = rng.uniform(size=n) < spec.voice_on_prob
    for t in range(1, T):
        amp[:, t] = np.clip(amp[:, t - 1] + 0.1 * rng.standard_normal((n, 1)), 0.4, 1.0)
        flip = rng.uniform(size=(n, d)) < 0.2
        mask[:, t] = np.where(flip, 1.0 - mask[:, t - 1], mask[:, t - 1])
        keep = rng.uniform(size=n) < spec.voice_persistence
        resample = rng.uniform(size=n) < spec.voice_on_prob
        gate[:, t] = np.where(keep, gate[:, t - 1], resample)
    z = mask * amp * gate[:, :, None]
    audio = z + spec.audio_noise * rng.standard_normal(z.shape)
    proj = rng.uniform(-1, 1, (spec.video_dim, d)) / math.sqrt(d)
    video = z @ proj.T + spec.video_noise * rng.standard_normal((n, T, spec.video_dim))
    return ToyAvData(torch.from_numpy(audio), torch.from_numpy(video), torch.from_numpy(z))


# ---------------------------------------------------------------------------
# float reference network (structure mirrors NetworkInstance)


def relu6_t(t: torch.Tensor) -> torch.Tensor:
    return torch.clamp(t, 0.0, CLIP)


def half_gaussian_t(t: torch.Tensor, sigma: float) -> torch.Tensor:
    pos = CLIP * (1.0 - torch.exp(-(t * t) / (2.0 * sigma * sigma)))
    return torch.where(t > 0, pos, torch.zeros_like(t))


class FloatNetwork(nn.Module):
    """Float64 twin of the fixed-point network, for gradient training.

    Every accumulator output is railed to the Q3.x range (+-8) exactly
    where the hardware saturates, so a trained model stays inside the
    datapath's dynamic range and exports faithfully.  init_gain 0.5 starts
    the modulatory drives below the half-Gaussian saturation knee; a
    full-scale start leaves most units in the flat tail of the gate where
    gradients vanish.
    """

    def __init__(self, spec: NetworkSpec, seed: int | None = None, init_gain: float = 0.5):
        super().__init__()
        self.spec = spec
        gen = torch.Generator().manual_seed(spec.seed if seed is None else seed)

        def uniform(shape, fan):
            bound = init_gain / math.sqrt(max(fan, 1))
            return nn.Parameter((torch.rand(shape, generator=gen, dtype=torch.float64) * 2 - 1) * bound)

        self.params = nn.ParameterDict()
        ctx = set(spec.context_layers())
        for s, stream in enumerate(spec.streams):
            for l, width in enumerate(stream.layer_widths):
                fan = stream.fan_in(l)
                self.params[f"s{s}_l{l}_w"] = uniform((width, fan), fan)
                self.params[f"s{s}_l{l}_b"] = uniform((width,), fan)
                if l in ctx:
                    self.params[f"s{s}_l{l}_cp"] = uniform((width, fan), fan)
                    fan_d = spec.distal_fan_in(s, l)
                    if fan_d:
                        self.params[f"s{s}_l{l}_cd"] = uniform((width, fan_d), fan_d)
        if spec.has_memory():
            m = spec.memory.units
            src = spec.memory_source_width()
            n_neurons = sum(w for st in spec.streams for w in st.layer_widths)
            self.params["mem_w"] = uniform((m, src), src)
            self.params["mem_b"] = uniform((m,), src)
            self.params["mem_decay"] = nn.Parameter(
                torch.tensor(0.5 * init_gain, dtype=torch.float64)
            )
            self.params["uni_w"] = uniform((n_neurons, m), m + 1)
            self.params["uni_b"] = uniform((n_neurons,), m + 1)
        # flat offsets of each (stream, layer) block in neuron order
        self._offsets = {}
        flat = 0
        for s, stream in enumerate(spec.streams):
            for l, width in enumerate(stream.layer_widths):
                self._offsets[(s, l)] = (flat, flat + width)
                flat += width

    def _gate(self, t: torch.Tensor, kind: TransferKind) -> torch.Tensor:
        if kind is TransferKind.HALF_GAUSSIAN_REFERENCE:
            return half_gaussian_t(t, self.spec.transfer.sigma)
        return relu6_t(t)

    def forward(
        self,
        inputs: dict[str, torch.Tensor],
        kind: TransferKind | None = None,
        unit_masks: dict[tuple[int, int], torch.Tensor] | None = None,
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Returns (fused outputs [B, T, out], per-evaluation drive list).

        Drives are the modulatory pre-activations t (the basal drive r for
        point neurons), one tensor per (stream, layer, step): the inputs
        to the firing surrogate and the hard firing count.  unit_masks
        optionally silences units per (stream, layer) the way dead cells
        do, for damage-robust training.
        """
        spec = self.spec
        kind = kind if kind is not None else spec.transfer.kind
        mcc = spec.mode == "mcc"
        ctx = set(spec.context_layers())
        P = self.params
        streams = [inputs[s.name] for s in spec.streams]
        B, T = streams[0].shape[0], streams[0].shape[1]
        fused_steps, drives = [], []
        mem = None
        src_prev = None
        rail = lambda v: torch.clamp(v, -RAIL, RAIL)
        for t_idx in range(T):
            if spec.has_memory() and src_prev is not None:
                fresh = src_prev @ P["mem_w"].mT + P["mem_b"]
                if mem is not None:
                    fresh = fresh + P["mem_decay"] * mem
                mem = torch.clamp(rail(fresh), -CLIP, CLIP)
                cu_flat = torch.clamp(
                    rail(mem @ P["uni_w"].mT + P["uni_b"]), -CLIP, CLIP
                )
            else:
                cu_flat = None
            acts: list[list[torch.Tensor]] = [[] for _ in spec.streams]
            for l in range(spec.n_layers):
                layer_in = [
                    streams[s][:, t_idx] if l == 0 else acts[s][l - 1]
                    for s in range(len(spec.streams))
                ]
                for s in range(len(spec.streams)):
                    x = layer_in[s]
                    mask = unit_masks.get((s, l)) if unit_masks else None
                    r = rail(x @ P[f"s{s}_l{l}_w"].mT + P[f"s{s}_l{l}_b"])
                    if not mcc:
                        drives.append(r)
                        y = relu6_t(r)
                        acts[s].append(y * mask if mask is not None else y)
                        continue
                    c = torch.zeros_like(r)
                    if l in ctx:
                        c = c + rail(x @ P[f"s{s}_l{l}_cp"].mT)
                        key = f"s{s}_l{l}_cd"
                        if key in P:
                            x_adj = torch.cat(
                                [layer_in[j] for j in spec.neighbours(s)], dim=-1
                            )
                            c = rail(c + rail(x_adj @ P[key].mT))
                    if cu_flat is not None:
                        lo, hi = self._offsets[(s, l)]
                        c = rail(c + cu_flat[:, lo:hi])
                    c = torch.clamp(c, -CLIP, CLIP)
                    t_drive = r * (r + 2.0 * c) + c + c * torch.abs(r)
                    drives.append(t_drive)
                    y = self._gate(t_drive, kind)
                    acts[s].append(y * mask if mask is not None else y)
            fused_steps.append(rail(sum(acts[s][-1] for s in range(len(spec.streams)))))
            if spec.has_memory():
                src_l = spec.memory_source_layer()
                src_prev = torch.cat([acts[s][src_l] for s in range(len(spec.streams))], dim=-1)
        return torch.stack(fused_steps, dim=1), drives


# ---------------------------------------------------------------------------
# loss pieces


@dataclass(frozen=True)
class LossConfigL2:
    """Supervised loss: beta * E[SE] + gamma * E[firing surrogate], with
    the Adam step size and its cosine decay as trainer defaults."""

    beta: float = 1.0
    gamma: float = 1e-4
    surrogate_k: float = 10.0
    lr: float = 0.02
    cosine_lr: bool = True
    weight_decay: float = 1e-3  # keeps per-layer gain low enough to quantize well
    unit_dropout: float = 0.0  # random hidden-cell silencing during training

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not 0.0 <= self.unit_dropout < 1.0:
            raise ValueError("unit_dropout must be in [0, 1)")


def logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def logistic_surrogate_grad(t: float, k: float = 10.0) -> float:
    s = 1.0 / (1.0 + math.exp(-k * t))
    return k * s * (1.0 - s)


def firing_surrogate(drives: list[torch.Tensor], k: float = 10.0) -> torch.Tensor:
    """Differentiable firing-count proxy: mean of sigmoid(k * t)."""
    flat = torch.cat([d.reshape(-1) for d in drives])
    return torch.sigmoid(k * flat).mean()


def hard_firing_fraction(drives: list[torch.Tensor]) -> float:
    flat = torch.cat([d.reshape(-1) for d in drives])
    return float((flat > 0).double().mean())


@dataclass
class TrainResult:
    model: FloatNetwork
    loss_curve: np.ndarray
    activity_curve: np.ndarray

    @property
    def final_activity(self) -> float:
        return float(self.activity_curve[-1])


def train_supervised(
    model: FloatNetwork,
    data: ToyAvData,
    cfg: LossConfigL2 = LossConfigL2(),
    epochs: int = 1500,
) -> TrainResult:
    """Full-batch Adam on beta*SE + gamma*surrogate; records per-epoch loss
    and the hard (not surrogate) firing fraction."""
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = (
        torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=epochs)
        if cfg.cosine_lr
        else None
    )
    losses = np.empty(epochs)
    activity = np.empty(epochs)
    inputs = data.inputs()
    spec = model.spec
    mask_gen = torch.Generator().manual_seed(spec.seed + 0x5EED)
    hidden = [
        (s, l, spec.streams[s].layer_widths[l])
        for s in range(len(spec.streams))
        for l in range(spec.n_layers - 1)
    ]
    for e in range(epochs):
        masks = None
        if cfg.unit_dropout > 0.0:
            masks = {
                (s, l): (
                    torch.rand(w, generator=mask_gen, dtype=torch.float64) >= cfg.unit_dropout
                ).double()
                for s, l, w in hidden
            }
        fused, drives = model(inputs, unit_masks=masks)
        se = torch.mean((fused - data.clean) ** 2)
        loss = cfg.beta * se + cfg.gamma * firing_surrogate(drives, cfg.surrogate_k)
        if not torch.isfinite(loss):
            raise RuntimeError(
                f"training diverged at epoch {e}: loss={loss.item()!r}, se={se.item()!r}"
            )
        opt.zero_grad()
        loss.backward()
        opt.step()
        if sched is not None:
            sched.step()
        losses[e] = loss.item()
        activity[e] = hard_firing_fraction(drives)
    return TrainResult(model=model, loss_curve=losses, activity_curve=activity)


def evaluate_float_mse(model: FloatNetwork, data: ToyAvData, kind: TransferKind | None = None) -> float:
    with torch.no_grad():
        fused, _ = model(data.inputs(), kind=kind)
        return float(torch.mean((fused - data.clean) ** 2))


# ---------------------------------------------------------------------------
# quantization-aware export and sweeps


def export_quantized(model: FloatNetwork, fmt: QFormat) -> NetworkInstance:
    """Quantize every trained weight into a bit-exact inference network.

    The fixed-point network always runs the hardware ReLU6 gate; the
    half-Gaussian is a float-only training device.
    """
    spec = model.spec
    fx_spec = replace(
        spec,
        qformat=fmt,
        transfer=TransferMode(TransferKind.RELU6_HARDWARE, spec.transfer.sigma),
    )
    P = model.params
    ctx = set(spec.context_layers())
    mcc = spec.mode == "mcc"

    def q(tensor) -> tuple[FxSample, ...]:
        return tuple(fx_from_real(v, fmt) for v in tensor.detach().tolist())

    flat = 0
    layers = []
    for s, stream in enumerate(spec.streams):
        stream_layers = []
        for l, width in enumerate(stream.layer_widths):
            w = P[f"s{s}_l{l}_w"]
            b = P[f"s{s}_l{l}_b"]
            neurons = []
            for i in range(width):
                kwargs = {}
                if mcc and l in ctx:
                    kwargs["ctx_weights_proximal"] = q(P[f"s{s}_l{l}_cp"][i])
                    if f"s{s}_l{l}_cd" in P:
                        kwargs["ctx_weights_distal"] = q(P[f"s{s}_l{l}_cd"][i])
                if spec.has_memory():
                    taps = q(P["uni_w"][flat + i])
                    kwargs["ctx_weights_universal"] = taps + (
                        fx_from_real(P["uni_b"][flat + i].item(), fmt),
                    )
                neurons.append(
                    CcpuSpec(
                        basal_weights=q(w[i]),
                        bias=fx_from_real(b[i].item(), fmt),
                        mode=fx_spec.transfer
                        if mcc
                        else TransferMode(TransferKind.POINT_BASELINE),
                        **kwargs,
                    )
                )
            flat += width
            stream_layers.append(neurons)
        layers.append(stream_layers)

    memory = None
    if spec.has_memory():
        memory = MemoryInstance(
            extract_weights=[list(q(row)) for row in P["mem_w"]],
            extract_bias=list(q(P["mem_b"])),
            decay=fx_from_real(P["mem_decay"].item(), fmt),
        )
    return NetworkInstance(fx_spec, layers, memory)


def evaluate_fx(
    net: NetworkInstance, data: ToyAvData, n_items: int | None = None
) -> tuple[float, ActivityTrace]:
    """Fixed-point MSE against the clean targets, plus the activity trace."""
    if n_items is not None:
        data = data.subset(n_items)
    dataset = data.to_fx_dataset(net.spec.qformat)
    outputs, trace = infer(net, dataset)
    err = 0.0
    count = 0
    for i, seq in enumerate(outputs):
        for t, fused in enumerate(seq):
            target = data.clean[i, t]
            for j, fx in enumerate(fused):
                err += (fx.value - float(target[j])) ** 2
                count += 1
    return err / count, trace


def quantization_format(width: int) -> QFormat:
    """Width sweep convention: keep the sign and three integer bits."""
    if width < 5:
        raise ValueError("widths below 5 bits leave no fraction bits")
    return QFormat(width, width - 4)


def bitwidth_sweep(
    model: FloatNetwork,
    data: ToyAvData,
    widths=range(8, 17),
    n_items: int | None = None,
) -> list[dict]:
    rows = []
    for w in widths:
        fmt = quantization_format(w)
        mse, _ = evaluate_fx(export_quantized(model, fmt), data, n_items)
        rows.append({"width": w, "qformat": str(fmt), "mse": mse})
    return rows


# training recipe for damage studies: both architectures see random cell
# silencing during training, matching the deployment condition under test
RESILIENCE_CFG = LossConfigL2(unit_dropout=0.1)


def resilience_experiment(
    net: NetworkInstance,
    data: ToyAvData,
    fractions=(0.0, 0.12, 0.24, 0.36),
    n_seeds: int = 5,
    base_seed: int = 0,
    n_items: int | None = None,
) -> list[dict]:
    """Kill random hidden cells at each fraction (mean +- sd over seeds)
    and measure fixed-point MSE and activity."""
    rows = []
    for f in fractions:
        mses, acts = [], []
        for s in range(n_seeds):
            killed = kill_cells(net, f, seed=base_seed + s)
            mse, trace = evaluate_fx(killed, data, n_items)
            mses.append(mse)
            acts.append(trace.activity)
        rows.append(
            {
                "fraction": f,
                "mse_mean": float(np.mean(mses)),
                "mse_sd": float(np.std(mses)),
                "activity_mean": float(np.mean(acts)),
            }
        )
    return rows
