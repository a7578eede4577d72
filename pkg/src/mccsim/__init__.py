"""Bit-exact CCPU hardware model, zero-skip energy estimator, toy trainers."""

from .fixedpoint import (
    FxSample,
    MulQuant,
    OverflowDirection,
    OverflowFlag,
    Q3_7,
    Q3_12,
    QFormat,
    fx_abs,
    fx_add,
    fx_from_hex,
    fx_from_real,
    fx_mul,
    fx_requantize,
    fx_to_hex,
)
from .neuron import (
    CcpuSpec,
    NeuronOutput,
    TransferKind,
    TransferMode,
    ccpu_forward,
    integrate_context,
    mac_rf,
    modulatory_transfer,
    point_forward,
)
from .network import (
    MemorySpec,
    NetworkInstance,
    NetworkSpec,
    StreamSpec,
    WeightInit,
    WorkingMemoryState,
    build_network,
    fuse_outputs,
    infer,
    kill_cells,
    shallow_av_spec,
    step,
    table1_concat_spec,
)
from .energy import (
    EnergyModel,
    EnergyReport,
    LayerShape,
    check_tables,
    conv_mac_count,
    energy_from_trace,
    latency_from_trace,
    sparsity_saving,
    table3_energy_uj,
)
from .trace import ActivityTrace

__version__ = "0.1.0"
