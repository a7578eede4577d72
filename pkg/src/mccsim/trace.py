"""Per-inference event log for the zero-skip energy and latency accounting.

A MAC site is any (input, weight) application point including the
hardcoded-1 bias input.  Sites whose input signal is exactly zero are
skipped by the hardware (no switching activity): they count toward
``mac_total`` but not ``synapse_events``.

Latency is governed by the serial weight-memory FSM of each neuron, which
walks the basal receptive-field inputs plus the bias; context multiplies
run on the dedicated context circuit and are not on the critical path, so
``per_layer_active_fanin`` tracks only active basal inputs (bias excluded,
added by the latency model).
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class ActivityTrace:
    synapse_events: int = 0
    mac_total: int = 0
    neurons_fired: int = 0
    neurons_total: int = 0
    per_layer_active_fanin: dict[str, int] = field(default_factory=dict)
    per_layer_basal_mac: dict[str, int] = field(default_factory=dict)

    def add_active(self, n: int = 1) -> None:
        self.synapse_events += n
        self.mac_total += n

    def add_skipped(self, n: int = 1) -> None:
        self.mac_total += n

    def note_basal(self, layer: str, active_fanin: int, fanin: int) -> None:
        """Record one neuron's basal pass: active (nonzero) inputs out of fanin."""
        prev = self.per_layer_active_fanin.get(layer, 0)
        if active_fanin > prev:
            self.per_layer_active_fanin[layer] = active_fanin
        elif layer not in self.per_layer_active_fanin:
            self.per_layer_active_fanin[layer] = active_fanin
        self.per_layer_basal_mac[layer] = self.per_layer_basal_mac.get(layer, 0) + fanin + 1

    def note_neuron(self, fired: bool) -> None:
        self.neurons_total += 1
        if fired:
            self.neurons_fired += 1

    @property
    def activity(self) -> float:
        """Fraction of neuron evaluations that fired."""
        if self.neurons_total == 0:
            return 0.0
        return self.neurons_fired / self.neurons_total

    @property
    def not_firing(self) -> float:
        return 1.0 - self.activity

    def merge(self, other: "ActivityTrace") -> "ActivityTrace":
        """Associative aggregate: counts add, worst-case fan-ins take the max."""
        out = ActivityTrace(
            synapse_events=self.synapse_events + other.synapse_events,
            mac_total=self.mac_total + other.mac_total,
            neurons_fired=self.neurons_fired + other.neurons_fired,
            neurons_total=self.neurons_total + other.neurons_total,
            per_layer_active_fanin=dict(self.per_layer_active_fanin),
            per_layer_basal_mac=dict(self.per_layer_basal_mac),
        )
        for k, v in other.per_layer_active_fanin.items():
            out.per_layer_active_fanin[k] = max(out.per_layer_active_fanin.get(k, 0), v)
        for k, v in other.per_layer_basal_mac.items():
            out.per_layer_basal_mac[k] = out.per_layer_basal_mac.get(k, 0) + v
        return out
