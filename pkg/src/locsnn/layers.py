"""Spiking layers with batched forward passes, reverse-mode backward passes,
and single-column steppers for streaming.

All forwards take activations of shape (B, C, S) with the recurrence axis
last; whether S means time bins or ordered locations is the caller's
arrangement. Every per-step quantity is computed column by column with the
same array expressions the streaming steppers use, so running a stepper to
S reproduces the batch forward bit for bit.

Backward passes propagate through the hard threshold with the configured
surrogate and through reset/refractory terms exactly as unrolled; with
``relaxed=True`` forwards emit the surrogate primitive instead of binary
spikes, which makes the same backward code the true gradient (used by the
finite-difference checks).
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .neurons import (
    LifParams,
    SrmParams,
    SurrogateSpec,
    refractory_table,
    response_filter,
    response_table,
    surrogate_grad,
    surrogate_primitive,
)
from .topology import normalized_adjacency


def xavier_uniform(rng, n_out, n_in):
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


def _as_batch3(x):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        return arr[None, ...], True
    if arr.ndim != 3:
        raise ValueError(f"expected (C, S) or (B, C, S), got shape {arr.shape}")
    return arr, False


def _lif_unroll(drive_fn, n_steps, n_batch, width, params, surrogate, relaxed):
    """Shared leaky-recurrence unroll; drive_fn(s) yields the (B, P) drive."""
    u = np.zeros((n_batch, width, n_steps))
    o = np.zeros((n_batch, width, n_steps))
    u_prev = np.zeros((n_batch, width))
    o_prev = np.zeros((n_batch, width))
    for s in range(n_steps):
        u_s = params.decay * u_prev * (1.0 - o_prev) + drive_fn(s)
        if relaxed:
            o_s = surrogate_primitive(u_s, params.threshold, surrogate)
        else:
            o_s = (u_s >= params.threshold).astype(np.float64)
        u[:, :, s] = u_s
        o[:, :, s] = o_s
        u_prev, o_prev = u_s, o_s
    return u, o


def _lif_backward(u, o, g_out, params, surrogate):
    """Gradient of the loss w.r.t. the per-step drive of a leaky layer.

    The reset path contributes both -decay*u through the spike and
    decay*(1-o) through the potential, with the spike's derivative taken
    from the surrogate.
    """
    n_steps = u.shape[-1]
    sg = surrogate_grad(u, params.threshold, surrogate)
    g_drive = np.zeros_like(u)
    g_u_next = np.zeros(u.shape[:2])
    for s in range(n_steps - 1, -1, -1):
        g_o = np.array(g_out[:, :, s], dtype=np.float64, copy=True)
        if s < n_steps - 1:
            g_o += g_u_next * (-params.decay * u[:, :, s])
        g_u = g_o * sg[:, :, s]
        if s < n_steps - 1:
            g_u += g_u_next * (params.decay * (1.0 - o[:, :, s]))
        g_drive[:, :, s] = g_u
        g_u_next = g_u
    return g_drive


def _anticausal_filter(g, table):
    """sum_d table[d] * g[..., s + d]; adjoint of response_filter for
    kernels with table[0] == 0."""
    rev = response_filter(g[..., ::-1], table)
    return rev[..., ::-1]


@dataclasses.dataclass
class SrmCache:
    inputs: np.ndarray
    filtered: np.ndarray
    potentials: np.ndarray
    spikes: np.ndarray


class SrmFcLayer:
    """Fully connected kernel-neuron layer (no bias, per the potential sum)."""

    kind = "srm_fc"

    def __init__(self, n_in, n_out, srm: SrmParams, surrogate: SurrogateSpec, rng):
        self.n_in = n_in
        self.n_out = n_out
        self.srm = srm
        self.surrogate = surrogate
        self.weights = xavier_uniform(rng, n_out, n_in)
        self._eps = response_table(srm)
        self._eta = refractory_table(srm)

    def parameters(self):
        return {"weights": self.weights}

    def forward(self, x, relaxed=False):
        x, _ = _as_batch3(x)
        n_batch, n_in, n_steps = x.shape
        if n_in != self.n_in:
            raise ValueError(f"layer expects {self.n_in} channels, got {n_in}")
        window = self.srm.kernel_window
        filtered = response_filter(x, self._eps)
        u = np.zeros((n_batch, self.n_out, n_steps))
        o = np.zeros((n_batch, self.n_out, n_steps))
        eta_acc = np.zeros((n_batch, self.n_out, n_steps))
        for s in range(n_steps):
            u_s = filtered[:, :, s] @ self.weights.T + eta_acc[:, :, s]
            if relaxed:
                o_s = surrogate_primitive(u_s, self.srm.threshold, self.surrogate)
            else:
                o_s = (u_s >= self.srm.threshold).astype(np.float64)
            u[:, :, s] = u_s
            o[:, :, s] = o_s
            hi = min(n_steps, s + 1 + window)
            if hi > s + 1:
                eta_acc[:, :, s + 1:hi] += o_s[:, :, None] * self._eta[1:hi - s]
        return o, SrmCache(inputs=x, filtered=filtered, potentials=u, spikes=o)

    def backward(self, g_out, cache: SrmCache):
        u, o = cache.potentials, cache.spikes
        n_steps = u.shape[-1]
        window = self.srm.kernel_window
        sg = surrogate_grad(u, self.srm.threshold, self.surrogate)
        g_u = np.zeros_like(u)
        for s in range(n_steps - 1, -1, -1):
            tot = np.array(g_out[:, :, s], dtype=np.float64, copy=True)
            hi = min(n_steps, s + 1 + window)
            if hi > s + 1:
                tot += g_u[:, :, s + 1:hi] @ self._eta[1:hi - s]
            g_u[:, :, s] = tot * sg[:, :, s]
        g_w = np.einsum("bps,bcs->pc", g_u, cache.filtered)
        g_fil = np.einsum("pc,bps->bcs", self.weights, g_u)
        g_x = _anticausal_filter(g_fil, self._eps)
        return g_x, {"weights": g_w}

    def init_state(self, n_batch):
        window = self.srm.kernel_window
        return {
            "ring": np.zeros((n_batch, self.n_in, window + 1)),  # past inputs, ring[., ., d] = x(s-d)
            "eta_pending": np.zeros((n_batch, self.n_out, window + 1)),
            "step": 0,
        }

    def step(self, state, x_col, relaxed=False):
        """Advance one recurrence step; returns the layer's output column."""
        window = self.srm.kernel_window
        ring = state["ring"]
        ring[:, :, 1:] = ring[:, :, :-1]
        ring[:, :, 0] = x_col
        s = state["step"]
        fil = np.zeros(x_col.shape, dtype=np.float64)
        for d in range(1, min(window + 1, s + 1)):
            fil += self._eps[d] * ring[:, :, d]
        pend = state["eta_pending"]
        u_s = fil @ self.weights.T + pend[:, :, 0]
        if relaxed:
            o_s = surrogate_primitive(u_s, self.srm.threshold, self.surrogate)
        else:
            o_s = (u_s >= self.srm.threshold).astype(np.float64)
        pend[:, :, :-1] = pend[:, :, 1:]
        pend[:, :, -1] = 0.0
        pend[:, :, :window] += o_s[:, :, None] * self._eta[1:window + 1]
        state["step"] = s + 1
        return o_s


@dataclasses.dataclass
class LifCache:
    inputs: np.ndarray
    potentials: np.ndarray
    spikes: np.ndarray


class LifFcLayer:
    """Fully connected leaky layer: drive(s) = W x(s) + b."""

    kind = "lif_fc"

    def __init__(self, n_in, n_out, lif: LifParams, surrogate: SurrogateSpec, rng):
        self.n_in = n_in
        self.n_out = n_out
        self.lif = lif
        self.surrogate = surrogate
        self.weights = xavier_uniform(rng, n_out, n_in)
        self.bias = np.zeros(n_out)

    def parameters(self):
        return {"weights": self.weights, "bias": self.bias}

    def forward(self, x, relaxed=False):
        x, _ = _as_batch3(x)
        n_batch, n_in, n_steps = x.shape
        if n_in != self.n_in:
            raise ValueError(f"layer expects {self.n_in} channels, got {n_in}")
        drive = lambda s: x[:, :, s] @ self.weights.T + self.bias
        u, o = _lif_unroll(drive, n_steps, n_batch, self.n_out, self.lif, self.surrogate, relaxed)
        return o, LifCache(inputs=x, potentials=u, spikes=o)

    def backward(self, g_out, cache: LifCache):
        g_drive = _lif_backward(cache.potentials, cache.spikes, g_out, self.lif, self.surrogate)
        g_w = np.einsum("bps,bcs->pc", g_drive, cache.inputs)
        g_b = g_drive.sum(axis=(0, 2))
        g_x = np.einsum("pc,bps->bcs", self.weights, g_drive)
        return g_x, {"weights": g_w, "bias": g_b}

    def init_state(self, n_batch):
        return {
            "u": np.zeros((n_batch, self.n_out)),
            "o": np.zeros((n_batch, self.n_out)),
        }

    def step(self, state, x_col, relaxed=False):
        u_s = self.lif.decay * state["u"] * (1.0 - state["o"]) + (x_col @ self.weights.T + self.bias)
        if relaxed:
            o_s = surrogate_primitive(u_s, self.lif.threshold, self.surrogate)
        else:
            o_s = (u_s >= self.lif.threshold).astype(np.float64)
        state["u"], state["o"] = u_s, o_s
        return o_s


@dataclasses.dataclass
class GraphCache:
    inputs: np.ndarray
    hops: np.ndarray  # (B, M, H+1, S) propagated node features
    potentials: np.ndarray
    spikes: np.ndarray


class LifGraphLayer:
    """Leaky layer driven by topology-adaptive propagation over a fixed
    graph: drive(s) = sum_k (A_hat^k x(s)) outer W_k + b, one scalar feature
    per node in, ``n_filters`` features per node out.

    Output spikes are flattened node-major: index m * n_filters + f.
    """

    kind = "lif_graph"

    def __init__(self, graph, n_filters, hops, lif: LifParams, surrogate: SurrogateSpec, rng):
        self.graph = graph
        self.n_nodes = graph.n_nodes
        self.n_filters = n_filters
        self.hops = hops
        self.lif = lif
        self.surrogate = surrogate
        self.hop_weights = xavier_uniform(rng, n_filters, hops + 1).T.copy()  # (H+1, F)
        self.bias = np.zeros(n_filters)
        self._a_hat_t = normalized_adjacency(graph).T.copy()

    @property
    def n_out(self):
        return self.n_nodes * self.n_filters

    @property
    def n_in(self):
        return self.n_nodes

    def parameters(self):
        return {"hop_weights": self.hop_weights, "bias": self.bias}

    def _drive_col(self, x_col):
        """(B, M) node spikes -> (B, M, H+1) hop stack and (B, M*F) drive."""
        n_batch = x_col.shape[0]
        hops = np.empty((n_batch, self.n_nodes, self.hops + 1))
        p = x_col
        for k in range(self.hops + 1):
            if k > 0:
                p = p @ self._a_hat_t
            hops[:, :, k] = p
        drive = hops @ self.hop_weights  # (B, M, F)
        drive += self.bias
        return hops, drive.reshape(n_batch, -1)

    def forward(self, x, relaxed=False):
        x, _ = _as_batch3(x)
        n_batch, n_nodes, n_steps = x.shape
        if n_nodes != self.n_nodes:
            raise ValueError(f"graph has {self.n_nodes} nodes, features have {n_nodes}")
        hop_stack = np.zeros((n_batch, self.n_nodes, self.hops + 1, n_steps))

        def drive(s):
            hops, d = self._drive_col(x[:, :, s])
            hop_stack[:, :, :, s] = hops
            return d

        u, o = _lif_unroll(drive, n_steps, n_batch, self.n_out, self.lif, self.surrogate, relaxed)
        return o, GraphCache(inputs=x, hops=hop_stack, potentials=u, spikes=o)

    def backward(self, g_out, cache: GraphCache):
        g_drive = _lif_backward(cache.potentials, cache.spikes, g_out, self.lif, self.surrogate)
        n_batch, _, n_steps = g_drive.shape
        g_df = g_drive.reshape(n_batch, self.n_nodes, self.n_filters, n_steps)
        g_hw = np.einsum("bmfs,bmks->kf", g_df, cache.hops)
        g_b = g_df.sum(axis=(0, 1, 3))
        return None, {"hop_weights": g_hw, "bias": g_b}

    def init_state(self, n_batch):
        return {
            "u": np.zeros((n_batch, self.n_out)),
            "o": np.zeros((n_batch, self.n_out)),
        }

    def step(self, state, x_col, relaxed=False):
        _, drive = self._drive_col(x_col)
        u_s = self.lif.decay * state["u"] * (1.0 - state["o"]) + drive
        if relaxed:
            o_s = surrogate_primitive(u_s, self.lif.threshold, self.surrogate)
        else:
            o_s = (u_s >= self.lif.threshold).astype(np.float64)
        state["u"], state["o"] = u_s, o_s
        return o_s
