"""Operation counts for spiking forward passes and their dense twins.

Spiking layers perform no multiplications: inputs are binary, so a synapse
fires an accumulate (one addition) per spike, with per-lag kernel weights
folded into the synapse table. Counts therefore split per layer into

* synaptic_adds: accumulations triggered by input spikes. A spike entering
  a fully connected kernel layer at step s contributes one add per output
  neuron per remaining kernel lag, min(kernel_window, S-1-s) of them; its
  own output spikes schedule refractory adds the same way (state_adds). A
  spike entering a leaky layer contributes one add per output neuron; a
  spike at graph node m spreads over n_filters * sum_k nnz(A_hat^k[:, m])
  accumulators.
* state_adds: membrane bookkeeping. Leaky neurons update their potential
  once per step they are driven; mode "gated" charges only steps where the
  layer receives any spike (graph layers: only nodes within hop reach of a
  spiking node), mode "strict" charges every neuron every step.

The dense twin of a model is the same stack of layer shapes running on
dense activations: every unit performs one multiply-accumulate per input
per step, activity notwithstanding. For a fully connected layer that is
n_in * n_out MACs per step; for the graph layer each node combines its
hops+1 propagated features into n_filters outputs. Energy estimates use
45 nm CMOS figures: 0.9 pJ per add, 3.7 pJ per multiply.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .layers import LifFcLayer, LifGraphLayer, SrmFcLayer
from .topology import normalized_adjacency

ENERGY_PJ_ADD = 0.9
ENERGY_PJ_MULT = 3.7


@dataclasses.dataclass
class LayerOps:
    name: str
    kind: str
    synaptic_adds: int
    state_adds: int
    mults: int

    @property
    def adds(self) -> int:
        return self.synaptic_adds + self.state_adds


@dataclasses.dataclass
class OpCount:
    layers: list

    @property
    def adds(self) -> int:
        return sum(layer.adds for layer in self.layers)

    @property
    def mults(self) -> int:
        return sum(layer.mults for layer in self.layers)

    def energy_pj(self) -> float:
        return self.adds * ENERGY_PJ_ADD + self.mults * ENERGY_PJ_MULT


def _remaining_lags(window, n_steps) -> np.ndarray:
    """min(window, S-1-s) for s = 0..S-1: adds a spike at s still causes."""
    s = np.arange(n_steps)
    return np.minimum(window, n_steps - 1 - s)


def _srm_ops(name, layer: SrmFcLayer, cache, mode) -> LayerOps:
    # no per-step membrane bookkeeping here, so gated and strict coincide
    spikes_in = cache.inputs
    spikes_out = cache.spikes
    n_steps = spikes_in.shape[-1]
    lags = _remaining_lags(layer.srm.kernel_window, n_steps)
    in_events = spikes_in.sum(axis=(0, 1))
    out_events = spikes_out.sum(axis=(0, 1))
    synaptic = int(round((in_events * lags).sum())) * layer.n_out
    refractory = int(round((out_events * lags).sum()))
    return LayerOps(name, layer.kind, synaptic, refractory, 0)


def _lif_fc_ops(name, layer: LifFcLayer, cache, mode) -> LayerOps:
    spikes_in = cache.inputs
    n_batch, _, n_steps = spikes_in.shape
    synaptic = int(round(spikes_in.sum())) * layer.n_out
    if mode == "strict":
        driven_steps = n_batch * n_steps
    else:
        driven_steps = int((spikes_in.sum(axis=1) > 0).sum())
    return LayerOps(name, layer.kind, synaptic, driven_steps * layer.n_out, 0)


def _bool_hop_powers(graph, hops):
    """Nonzero patterns of A_hat^0..A_hat^hops; entries are nonnegative, so
    boolean reachability matches the numeric support exactly."""
    a = normalized_adjacency(graph) != 0
    powers = [np.eye(graph.n_nodes, dtype=bool)]
    for _ in range(hops):
        powers.append(powers[-1] @ a)
    return powers


def _graph_ops(name, layer: LifGraphLayer, cache, mode) -> LayerOps:
    spikes_in = cache.inputs  # (B, M, S)
    n_batch, n_nodes, n_steps = spikes_in.shape
    powers = _bool_hop_powers(layer.graph, layer.hops)
    fanout = np.zeros(n_nodes)  # accumulators one spike at node m touches
    for p in powers:
        fanout += p.sum(axis=0)
    synaptic = int(round((spikes_in.sum(axis=(0, 2)) * fanout).sum())) * layer.n_filters
    if mode == "strict":
        driven = n_batch * n_nodes * n_steps
    else:
        # node q is driven at step s iff some spiking node m reaches it
        # within hops steps: OR of the hop supports, applied per column
        reach_any = powers[0].copy()
        for p in powers[1:]:
            reach_any |= p
        hit = np.einsum("qm,bms->bqs", reach_any.astype(np.float64), spikes_in)
        driven = int((hit > 0).sum())
    return LayerOps(name, layer.kind, synaptic, driven * layer.n_filters, 0)


def count_snn_ops(model, X, mode="gated") -> OpCount:
    """Run the model's forward pass and count event-driven operations.

    X is one grid (N, T) or a batch (B, N, T); counts sum over the batch.
    """
    if mode not in ("gated", "strict"):
        raise ValueError(f"unknown counting mode {mode!r}")
    outs = model.forward(X)
    rows = []
    for prefix, layers, caches in (
        ("time", model.time_layers, outs.caches_time),
        ("loc", model.loc_layers, outs.caches_loc),
    ):
        for i, (layer, cache) in enumerate(zip(layers, caches)):
            name = f"{prefix}{i}"
            if isinstance(layer, SrmFcLayer):
                rows.append(_srm_ops(name, layer, cache, mode))
            elif isinstance(layer, LifGraphLayer):
                rows.append(_graph_ops(name, layer, cache, mode))
            elif isinstance(layer, LifFcLayer):
                rows.append(_lif_fc_ops(name, layer, cache, mode))
            else:
                raise TypeError(f"no operation model for layer kind {layer.kind!r}")
    return OpCount(rows)


def count_dense_ops(model, n_samples=1) -> OpCount:
    """Closed-form MAC count of the dense twin over n_samples inputs."""
    rows = []
    for prefix, layers in (("time", model.time_layers), ("loc", model.loc_layers)):
        n_steps = model.n_steps if prefix == "time" else model.n_taxels
        for i, layer in enumerate(layers):
            name = f"{prefix}{i}"
            if isinstance(layer, LifGraphLayer):
                macs = layer.n_nodes * (layer.hops + 1) * layer.n_filters * n_steps
            else:
                macs = layer.n_in * layer.n_out * n_steps
            macs *= n_samples
            rows.append(LayerOps(name, f"dense_{layer.kind}", macs, 0, macs))
    return OpCount(rows)


def energy_ratio(snn: OpCount, dense: OpCount) -> float:
    """Dense-twin energy divided by spiking energy (higher is better)."""
    spiking = snn.energy_pj()
    if spiking == 0.0:
        return float("inf")
    return dense.energy_pj() / spiking
