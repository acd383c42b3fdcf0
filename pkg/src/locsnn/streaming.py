"""Anytime classification over growing prefixes of a spike grid.

The time branch of a hybrid is causal in real time, so it advances
incrementally: each new time bin feeds one column through the layer
steppers. The location branch's recurrence runs across taxels, with time
bins as input channels, so it cannot be stepped by time; it is recomputed
each step on the grid observed so far with the unseen bins left at zero.
At t = n_steps the padded grid is the full grid and both branches agree
with the batch forward pass bit for bit.

Two read-outs per hybrid: the plain one combines the branches the same way
the batch predictor does, and a time-weighted one shifts trust from the
time branch toward the location branch as the stream completes.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .models import HybridSrmFc, fuse
from .validation import check_spike_grid

WEIGHTINGS = (None, "none", "sigmoid", "linear")


@dataclasses.dataclass
class CountStep:
    """Per-bin state of a streamed count-readout hybrid."""

    t: int                    # bins consumed so far, 1-based
    counts_time: np.ndarray   # (K,) output spikes of the time branch
    counts_loc: np.ndarray    # (K,) of the location branch on the padded prefix
    prediction: int


@dataclasses.dataclass
class LabelStep:
    """Per-bin state of a streamed label-vector hybrid."""

    t: int
    label_time: np.ndarray    # (K,) running mean of time-branch output columns
    label_loc: np.ndarray     # (K,) location-branch label on the padded prefix
    fused: np.ndarray         # (K,)
    prediction: int


def sigmoid_weight(t, n_steps, sharpness=6.0):
    """Location-branch weight omega(t) = 1 / (1 + exp(-sharpness*(t/T - 1))).

    Rises toward the end of the stream and reaches exactly 0.5 at t = T for
    every sharpness, where both branches carry equal weight.
    """
    return 1.0 / (1.0 + math.exp(-sharpness * (t / n_steps - 1.0)))


def padded_prefix(grid, t):
    """Copy of the grid with every bin at index >= t zeroed."""
    n_steps = grid.shape[-1]
    if not 1 <= t <= n_steps:
        raise ValueError(f"stream position {t} outside 1..{n_steps}")
    out = np.zeros_like(grid)
    out[..., :t] = grid[..., :t]
    return out


def _check_weighting(weighting):
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown time weighting {weighting!r}")
    return None if weighting == "none" else weighting


def stream_counts(model: HybridSrmFc, grid, weighting=None, sharpness=6.0):
    """Stream a grid through a count-readout hybrid, one time bin at a time.

    weighting None predicts from the summed counts, matching the batch
    predictor at t = n_steps; "sigmoid" predicts from
    (1 - omega)*counts_time + omega*counts_loc.
    """
    weighting = _check_weighting(weighting)
    grid = check_spike_grid(grid, model.n_taxels, model.n_steps).astype(np.float64)
    n_steps = model.n_steps
    states = [layer.init_state(1) for layer in model.time_layers]
    counts_time = np.zeros(model.n_classes)
    steps = []
    for t in range(1, n_steps + 1):
        col = grid[None, :, t - 1]
        for layer, state in zip(model.time_layers, states):
            col = layer.step(state, col)
        counts_time += col[0]
        out_loc = model.forward_loc(padded_prefix(grid, t)[None])[0]
        counts_loc = out_loc.sum(axis=1)
        if weighting == "sigmoid":
            w = sigmoid_weight(t, n_steps, sharpness)
            score = (1.0 - w) * counts_time + w * counts_loc
        else:
            score = counts_time + counts_loc
        steps.append(CountStep(t, counts_time.copy(), counts_loc, int(np.argmax(score))))
    return steps


def stream_labels(model, grid, weighting=None, zeta=2.0):
    """Stream a grid through a label-vector hybrid, one time bin at a time.

    The time-branch label at t is the mean of its first t output columns.
    weighting None fuses with the model's fusion mode; "linear" blends
    label_time*(1 - t/(zeta*T)) + label_loc*(t/(zeta*T)), which at t = T
    with zeta = 2 weighs the branches equally.
    """
    weighting = _check_weighting(weighting)
    if zeta <= 1.0:
        raise ValueError(f"zeta must exceed 1 so the blend stays convex, got {zeta}")
    grid = check_spike_grid(grid, model.n_taxels, model.n_steps).astype(np.float64)
    n_steps = model.n_steps
    states = [layer.init_state(1) for layer in model.time_layers]
    summed = np.zeros(model.n_classes)
    steps = []
    for t in range(1, n_steps + 1):
        col = grid[None, :, t - 1]
        for layer, state in zip(model.time_layers, states):
            col = layer.step(state, col)
        summed += col[0]
        label_time = summed / t
        out_loc = model.forward_loc(padded_prefix(grid, t)[None])[0]
        label_loc = out_loc.mean(axis=1)
        if weighting == "linear":
            frac = t / (zeta * n_steps)
            fused = label_time * (1.0 - frac) + label_loc * frac
        else:
            fused = fuse(label_time, label_loc, model.fusion)
        steps.append(LabelStep(t, label_time, label_loc, fused, int(np.argmax(fused))))
    return steps


def stream(model, grid, weighting=None, sharpness=6.0, zeta=2.0):
    """Dispatch to the streaming algorithm matching the model family."""
    if isinstance(model, HybridSrmFc):
        return stream_counts(model, grid, weighting, sharpness)
    return stream_labels(model, grid, weighting, zeta)


def recompute_counts(model: HybridSrmFc, grid, t):
    """Reference for the incremental path: run the batch forward on the
    padded prefix and count the first t output columns. The time branch is
    causal, so this matches the stepper exactly."""
    grid = check_spike_grid(grid, model.n_taxels, model.n_steps).astype(np.float64)
    padded = padded_prefix(grid, t)[None]
    counts_time = model.forward_time(padded)[0][:, :t].sum(axis=1)
    counts_loc = model.forward_loc(padded)[0].sum(axis=1)
    return counts_time, counts_loc


def recompute_labels(model, grid, t):
    """Reference for the incremental path of the label-vector hybrid."""
    grid = check_spike_grid(grid, model.n_taxels, model.n_steps).astype(np.float64)
    padded = padded_prefix(grid, t)[None]
    label_time = model.forward_time(padded)[0][:, :t].mean(axis=1)
    label_loc = model.forward_loc(padded)[0].mean(axis=1)
    return label_time, label_loc
