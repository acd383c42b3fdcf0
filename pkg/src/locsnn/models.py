"""The two hybrid spiking architectures.

Both pair a time-recurrent branch with a location-recurrent branch over the
same grid. The time branch consumes columns of X (spatial profiles, one per
time bin); the location branch consumes the transposed grid with its taxel
axis permuted by a location order, so each location step presents one
taxel's full spike train as the channel vector.

* HybridSrmFc: two fully connected kernel-neuron layers per branch. The
  class read-out concatenates both branches' output spike grids and takes
  the class with the largest spike count.
* HybridLifGnn: a leaky graph layer (spatial MST or temporal chain/dense
  graph) followed by fully connected leaky layers per branch. Per-branch
  label vectors are the output spikes averaged over the recurrence axis and
  are fused by mean or elementwise max; the read-out is the fused argmax.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .layers import LifFcLayer, LifGraphLayer, SrmFcLayer
from .neurons import LifParams, SrmParams, SurrogateSpec
from .topology import (
    LocationOrder,
    build_spatial_graph,
    build_temporal_graph,
    default_taxel_coords,
    make_order,
)
CHECKPOINT_VERSION = 1


def spike_counts(out: np.ndarray) -> np.ndarray:
    """Sum spikes over the recurrence axis: (B, K, S) -> (B, K)."""
    return out.sum(axis=-1)


def concat_predict(out_time: np.ndarray, out_loc: np.ndarray) -> np.ndarray:
    """Class with the largest combined spike count; ties go to the lowest
    class index. Accepts (K, S) pairs or batched (B, K, S) pairs."""
    if out_time.ndim == 2:
        counts = out_time.sum(axis=-1) + out_loc.sum(axis=-1)
        return int(np.argmax(counts))
    counts = spike_counts(out_time) + spike_counts(out_loc)
    return np.argmax(counts, axis=1)


def fuse(label_time: np.ndarray, label_loc: np.ndarray, mode: str = "mean") -> np.ndarray:
    """Combine the two branches' label vectors elementwise."""
    if mode == "mean":
        return 0.5 * (label_time + label_loc)
    if mode == "max":
        return np.maximum(label_time, label_loc)
    raise ValueError(f"unknown fusion mode {mode!r}")


def fuse_backward(g_fused, label_time, label_loc, mode: str):
    """Route the fused gradient back to the branches (max: winner takes it,
    ties to the time branch)."""
    if mode == "mean":
        return 0.5 * g_fused, 0.5 * g_fused
    if mode == "max":
        win_time = label_time >= label_loc
        return g_fused * win_time, g_fused * (~win_time)
    raise ValueError(f"unknown fusion mode {mode!r}")


def _loc_arrange(X: np.ndarray, order: LocationOrder) -> np.ndarray:
    """(B, N, T) -> (B, T, N) with taxels visited in the order's sequence."""
    return np.ascontiguousarray(X[:, order.indices, :].transpose(0, 2, 1))


def _chain_forward(layers, x, relaxed):
    caches = []
    for layer in layers:
        x, cache = layer.forward(x, relaxed=relaxed)
        caches.append(cache)
    return x, caches


def _chain_backward(layers, caches, g_out, prefix, grads):
    g = g_out
    for i in range(len(layers) - 1, -1, -1):
        g, layer_grads = layers[i].backward(g, caches[i])
        for name, val in layer_grads.items():
            grads[f"{prefix}{i}.{name}"] = val
    return grads


def _chain_params(layers, prefix, out):
    for i, layer in enumerate(layers):
        for name, val in layer.parameters().items():
            out[f"{prefix}{i}.{name}"] = val
    return out


@dataclasses.dataclass
class HybridSrmOutputs:
    out_time: np.ndarray  # (B, K, T)
    out_loc: np.ndarray   # (B, K, N)
    caches_time: list
    caches_loc: list


class HybridSrmFc:
    """Kernel-neuron hybrid with fully connected branches."""

    model_kind = "hybrid_srm_fc"

    def __init__(self, n_taxels, n_steps, n_classes, hidden=32,
                 srm: SrmParams | None = None, surrogate: SurrogateSpec | None = None,
                 order: LocationOrder | None = None, seed=0):
        self.n_taxels = n_taxels
        self.n_steps = n_steps
        self.n_classes = n_classes
        self.hidden = hidden
        self.srm = srm or SrmParams()
        self.surrogate = surrogate or SurrogateSpec("exponential", 2.0)
        self.order = order or make_order("identity", n_taxels)
        if self.order.n_taxels != n_taxels:
            raise ValueError(
                f"location order covers {self.order.n_taxels} taxels, model has {n_taxels}"
            )
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.time_layers = [
            SrmFcLayer(n_taxels, hidden, self.srm, self.surrogate, rng),
            SrmFcLayer(hidden, n_classes, self.srm, self.surrogate, rng),
        ]
        self.loc_layers = [
            SrmFcLayer(n_steps, hidden, self.srm, self.surrogate, rng),
            SrmFcLayer(hidden, n_classes, self.srm, self.surrogate, rng),
        ]

    def parameters(self):
        out = {}
        _chain_params(self.time_layers, "time", out)
        _chain_params(self.loc_layers, "loc", out)
        return out

    def forward(self, X, relaxed=False) -> HybridSrmOutputs:
        X = self._coerce(X)
        out_time, caches_time = _chain_forward(self.time_layers, X, relaxed)
        out_loc, caches_loc = _chain_forward(self.loc_layers, _loc_arrange(X, self.order), relaxed)
        return HybridSrmOutputs(out_time, out_loc, caches_time, caches_loc)

    def forward_time(self, X) -> np.ndarray:
        """Time branch alone: (B, N, T) -> (B, K, T) output spikes."""
        out, _ = _chain_forward(self.time_layers, self._coerce(X), False)
        return out

    def forward_loc(self, X) -> np.ndarray:
        """Location branch alone: (B, N, T) -> (B, K, N) output spikes."""
        out, _ = _chain_forward(self.loc_layers, _loc_arrange(self._coerce(X), self.order), False)
        return out

    def _coerce(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None, ...]
        self._check_shape(X)
        return X

    def backward(self, outputs: HybridSrmOutputs, g_time, g_loc):
        grads = {}
        _chain_backward(self.time_layers, outputs.caches_time, g_time, "time", grads)
        _chain_backward(self.loc_layers, outputs.caches_loc, g_loc, "loc", grads)
        return grads

    def predict(self, X) -> np.ndarray:
        outs = self.forward(X)
        return concat_predict(outs.out_time, outs.out_loc)

    def _check_shape(self, X):
        if X.shape[1] != self.n_taxels or X.shape[2] != self.n_steps:
            raise ValueError(
                f"stream grid {X.shape[1]}x{X.shape[2]} does not match model "
                f"{self.n_taxels}x{self.n_steps}"
            )

    def config(self):
        return {
            "n_taxels": self.n_taxels, "n_steps": self.n_steps, "n_classes": self.n_classes,
            "hidden": self.hidden, "threshold": self.srm.threshold, "tau_s": self.srm.tau_s,
            "tau_r": self.srm.tau_r, "kernel_window": self.srm.kernel_window,
            "surrogate": self.surrogate.family, "surrogate_scale": self.surrogate.scale,
            "order_kind": self.order.kind, "seed": self.seed,
        }


@dataclasses.dataclass
class HybridGnnOutputs:
    out_time: np.ndarray    # (B, K, T)
    out_loc: np.ndarray     # (B, K, N)
    label_time: np.ndarray  # (B, K) spikes averaged over time
    label_loc: np.ndarray   # (B, K) spikes averaged over locations
    fused: np.ndarray       # (B, K)
    caches_time: list
    caches_loc: list


class HybridLifGnn:
    """Leaky graph-network hybrid: spatial-graph branch over time and
    temporal-graph branch over ordered locations."""

    model_kind = "hybrid_lif_gnn"

    def __init__(self, n_taxels, n_steps, n_classes, coords=None, filters=64,
                 fc_widths=(128, 256), hops=3, alpha=0.8, beta=0.8, threshold=0.5,
                 temporal_mode="sparse", fusion="mean",
                 surrogate: SurrogateSpec | None = None,
                 order: LocationOrder | None = None, seed=0):
        self.n_taxels = n_taxels
        self.n_steps = n_steps
        self.n_classes = n_classes
        self.filters = filters
        self.fc_widths = tuple(fc_widths)
        self.hops = hops
        self.temporal_mode = temporal_mode
        self.fusion = fusion
        self.surrogate = surrogate or SurrogateSpec("rectangular", 1.0)
        self.order = order or make_order("identity", n_taxels)
        if self.order.n_taxels != n_taxels:
            raise ValueError(
                f"location order covers {self.order.n_taxels} taxels, model has {n_taxels}"
            )
        self.coords = np.asarray(coords, dtype=np.float64) if coords is not None \
            else default_taxel_coords(n_taxels)
        if len(self.coords) != n_taxels:
            raise ValueError(f"{len(self.coords)} coordinates for {n_taxels} taxels")
        self.alpha = alpha
        self.beta = beta
        self.threshold = threshold
        self.seed = seed
        if fusion not in ("mean", "max"):
            raise ValueError(f"unknown fusion mode {fusion!r}")

        self.spatial_graph = build_spatial_graph(self.coords)
        self.temporal_graph = build_temporal_graph(n_steps, temporal_mode)
        lif_t = LifParams(decay=alpha, threshold=threshold)
        lif_l = LifParams(decay=beta, threshold=threshold)
        rng = np.random.default_rng(seed)
        self.time_layers = self._build_branch(
            rng, self.spatial_graph, n_taxels, lif_t)
        self.loc_layers = self._build_branch(
            rng, self.temporal_graph, n_steps, lif_l)

    def _build_branch(self, rng, graph, n_nodes, lif):
        layers = [LifGraphLayer(graph, self.filters, self.hops, lif, self.surrogate, rng)]
        width = n_nodes * self.filters
        for fc in self.fc_widths:
            layers.append(LifFcLayer(width, fc, lif, self.surrogate, rng))
            width = fc
        layers.append(LifFcLayer(width, self.n_classes, lif, self.surrogate, rng))
        return layers

    def parameters(self):
        out = {}
        _chain_params(self.time_layers, "time", out)
        _chain_params(self.loc_layers, "loc", out)
        return out

    def forward(self, X, relaxed=False) -> HybridGnnOutputs:
        X = self._coerce(X)
        out_time, caches_time = _chain_forward(self.time_layers, X, relaxed)
        out_loc, caches_loc = _chain_forward(self.loc_layers, _loc_arrange(X, self.order), relaxed)
        label_time = out_time.mean(axis=2)
        label_loc = out_loc.mean(axis=2)
        fused = fuse(label_time, label_loc, self.fusion)
        return HybridGnnOutputs(out_time, out_loc, label_time, label_loc, fused,
                                caches_time, caches_loc)

    def backward(self, outputs: HybridGnnOutputs, g_label_time, g_label_loc):
        """Backward from gradients w.r.t. the per-branch label vectors."""
        g_time = np.repeat(g_label_time[:, :, None], self.n_steps, axis=2) / self.n_steps
        g_loc = np.repeat(g_label_loc[:, :, None], self.n_taxels, axis=2) / self.n_taxels
        grads = {}
        _chain_backward(self.time_layers, outputs.caches_time, g_time, "time", grads)
        _chain_backward(self.loc_layers, outputs.caches_loc, g_loc, "loc", grads)
        return grads

    def forward_time(self, X) -> np.ndarray:
        """Time branch alone: (B, N, T) -> (B, K, T) output spikes."""
        out, _ = _chain_forward(self.time_layers, self._coerce(X), False)
        return out

    def forward_loc(self, X) -> np.ndarray:
        """Location branch alone: (B, N, T) -> (B, K, N) output spikes."""
        out, _ = _chain_forward(self.loc_layers, _loc_arrange(self._coerce(X), self.order), False)
        return out

    def _coerce(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None, ...]
        if X.shape[1] != self.n_taxels or X.shape[2] != self.n_steps:
            raise ValueError(
                f"stream grid {X.shape[1]}x{X.shape[2]} does not match model "
                f"{self.n_taxels}x{self.n_steps}"
            )
        return X

    def predict(self, X) -> np.ndarray:
        outs = self.forward(X)
        return np.argmax(outs.fused, axis=1)

    def config(self):
        return {
            "n_taxels": self.n_taxels, "n_steps": self.n_steps, "n_classes": self.n_classes,
            "filters": self.filters, "fc_widths": list(self.fc_widths), "hops": self.hops,
            "alpha": self.alpha, "beta": self.beta, "threshold": self.threshold,
            "temporal_mode": self.temporal_mode, "fusion": self.fusion,
            "surrogate": self.surrogate.family, "surrogate_scale": self.surrogate.scale,
            "order_kind": self.order.kind, "seed": self.seed,
        }


def save_model(path, model) -> None:
    """Write a self-describing checkpoint: JSON header plus 64-bit weights."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "model": model.model_kind,
        "config": model.config(),
    }
    arrays = {f"param:{k}": v for k, v in model.parameters().items()}
    arrays["order_permutation"] = model.order.permutation
    if isinstance(model, HybridLifGnn):
        arrays["coords"] = model.coords
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_model(path):
    """Rebuild a model from a checkpoint written by save_model."""
    path = Path(path)
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        cfg = meta["config"]
        order = LocationOrder(cfg["order_kind"], data["order_permutation"].astype(np.int64))
        common = dict(
            n_taxels=cfg["n_taxels"], n_steps=cfg["n_steps"], n_classes=cfg["n_classes"],
            order=order, seed=cfg["seed"],
        )
        if meta["model"] == HybridSrmFc.model_kind:
            model = HybridSrmFc(
                hidden=cfg["hidden"],
                srm=SrmParams(cfg["threshold"], cfg["tau_s"], cfg["tau_r"], cfg["kernel_window"]),
                surrogate=SurrogateSpec(cfg["surrogate"], cfg["surrogate_scale"]),
                **common,
            )
        elif meta["model"] == HybridLifGnn.model_kind:
            model = HybridLifGnn(
                coords=data["coords"], filters=cfg["filters"], fc_widths=cfg["fc_widths"],
                hops=cfg["hops"], alpha=cfg["alpha"], beta=cfg["beta"],
                threshold=cfg["threshold"], temporal_mode=cfg["temporal_mode"],
                fusion=cfg["fusion"],
                surrogate=SurrogateSpec(cfg["surrogate"], cfg["surrogate_scale"]),
                **common,
            )
        else:
            raise ValueError(f"unknown model kind {meta['model']!r}")
        params = model.parameters()
        for key in data.files:
            if key.startswith("param:"):
                name = key[len("param:"):]
                if name not in params:
                    raise ValueError(f"checkpoint parameter {name!r} has no home")
                if params[name].shape != data[key].shape:
                    raise ValueError(
                        f"checkpoint parameter {name!r} has shape {data[key].shape}, "
                        f"model expects {params[name].shape}"
                    )
                params[name][...] = data[key]
    return model
