"""Spiking neuron primitives.

Two neuron families, each usable along either recurrence axis:

* Kernel neurons (SRM): the membrane potential is a sum of a spike-response
  kernel over presynaptic firing and a negative refractory kernel over the
  neuron's own firing. Time-recurrent and location-recurrent variants run
  the identical summation over time bins or over ordered taxels.
* Leaky neurons (LIF): ``u(s) = decay * u(s-1) * (1 - spiked(s-1)) + I(s)``
  with a hard threshold; the multiplicative reset zeroes the potential on
  the step after a spike.

Kernels are evaluated on an integer lag table and truncated past
``kernel_window`` steps, so every forward pass touches a bounded history.
"""

from __future__ import annotations

import dataclasses

import numpy as np


@dataclasses.dataclass
class SrmParams:
    """Kernel-neuron parameters. ``kernel_window`` counts lag steps; None
    resolves to 8 * max(tau_s, tau_r) rounded."""

    threshold: float = 1.0
    tau_s: float = 2.0
    tau_r: float = 2.0
    kernel_window: int | None = None

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.tau_s <= 0 or self.tau_r <= 0:
            raise ValueError("kernel time constants must be positive")
        if self.kernel_window is None:
            self.kernel_window = int(round(8 * max(self.tau_s, self.tau_r)))
        if self.kernel_window < 1:
            raise ValueError(f"kernel_window must be >= 1, got {self.kernel_window}")


@dataclasses.dataclass
class LifParams:
    """Leaky-neuron parameters; ``decay`` plays the role of alpha on the
    time axis and beta on the location axis."""

    decay: float = 0.8
    threshold: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.decay <= 1.0):
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")
        if self.threshold <= 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")


@dataclasses.dataclass
class SurrogateSpec:
    """Pseudo-derivative used in place of the threshold's zero gradient.

    ``rectangular``: 1/scale inside a band of width ``scale`` around the
    threshold. ``exponential``: scale/2 * exp(-scale * |u - threshold|).
    Both integrate to one over the potential axis.
    """

    family: str = "rectangular"
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in ("rectangular", "exponential"):
            raise ValueError(f"unknown surrogate family {self.family!r}")
        if self.scale <= 0:
            raise ValueError(f"surrogate scale must be positive, got {self.scale}")


def spike_response_kernel(s, tau_s, window=None):
    """Presynaptic kernel (s/tau_s) * exp(1 - s/tau_s); zero for s < 0 and
    beyond the truncation window. Peaks at exactly 1 when s == tau_s."""
    s = np.asarray(s, dtype=np.float64)
    with np.errstate(over="ignore"):
        val = (s / tau_s) * np.exp(1.0 - s / tau_s)
    mask = s >= 0
    if window is not None:
        mask &= s <= window
    out = np.where(mask, val, 0.0)
    return out if out.ndim else float(out)


def refractory_kernel(s, tau_r, threshold, window=None):
    """Self-inhibition kernel -2 * threshold * (s/tau_r) * exp(1 - s/tau_r);
    zero for s < 0 and beyond the truncation window."""
    s = np.asarray(s, dtype=np.float64)
    with np.errstate(over="ignore"):
        val = -2.0 * threshold * (s / tau_r) * np.exp(1.0 - s / tau_r)
    mask = s >= 0
    if window is not None:
        mask &= s <= window
    out = np.where(mask, val, 0.0)
    return out if out.ndim else float(out)


def response_table(params: SrmParams) -> np.ndarray:
    """Spike-response kernel sampled at integer lags 0..kernel_window."""
    lags = np.arange(params.kernel_window + 1)
    return spike_response_kernel(lags, params.tau_s, params.kernel_window)


def refractory_table(params: SrmParams) -> np.ndarray:
    """Refractory kernel sampled at integer lags 0..kernel_window."""
    lags = np.arange(params.kernel_window + 1)
    return refractory_kernel(lags, params.tau_r, params.threshold, params.kernel_window)


def surrogate_grad(u, threshold, spec: SurrogateSpec):
    """Pseudo-derivative of the spike nonlinearity at potential u."""
    u = np.asarray(u, dtype=np.float64)
    d = u - threshold
    if spec.family == "rectangular":
        out = np.where(np.abs(d) < spec.scale / 2.0, 1.0 / spec.scale, 0.0)
    else:
        out = (spec.scale / 2.0) * np.exp(-spec.scale * np.abs(d))
    return out if out.ndim else float(out)


def surrogate_primitive(u, threshold, spec: SurrogateSpec):
    """Smooth spike value in [0, 1] whose derivative is surrogate_grad.

    This is the relaxed forward used by the finite-difference gradient
    checks; the spiking forward uses the hard threshold instead.
    """
    u = np.asarray(u, dtype=np.float64)
    d = u - threshold
    if spec.family == "rectangular":
        out = np.clip(d / spec.scale + 0.5, 0.0, 1.0)
    else:
        with np.errstate(over="ignore"):
            lo = 0.5 * np.exp(spec.scale * d)
            hi = 1.0 - 0.5 * np.exp(-spec.scale * d)
        out = np.where(d < 0, lo, hi)
    return out if out.ndim else float(out)


def tlif_step(u_prev, spiked_prev, drive, params: LifParams):
    """One time-step of the leaky recurrence.

    Returns (u, spiked) where u = decay * u_prev * (1 - spiked_prev) + drive
    and spiked = (u >= threshold). Accepts scalars or arrays.
    """
    u_prev = np.asarray(u_prev, dtype=np.float64)
    gate = 1.0 - np.asarray(spiked_prev, dtype=np.float64)
    u = params.decay * u_prev * gate + np.asarray(drive, dtype=np.float64)
    spiked = u >= params.threshold
    if u.ndim == 0:
        return float(u), bool(spiked)
    return u, spiked


def llif_step(u_prev, spiked_prev, drive, params: LifParams):
    """One location-step of the leaky recurrence; u_prev and spiked_prev
    belong to the predecessor location in the configured order. The update
    rule is identical to tlif_step with decay read as beta."""
    return tlif_step(u_prev, spiked_prev, drive, params)


def lif_grid_scan(grid, params: LifParams, step_axis=-1):
    """Run the leaky recurrence across one axis of a dense drive grid.

    State is carried per index of the remaining axis. Returns
    (potentials, spikes) with the same shape as ``grid``. Scanning axis 0
    of a transposed grid reproduces, transposed, the scan of axis 1 of the
    original: the recurrence itself is axis-agnostic.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-d grid, got shape {grid.shape}")
    moved = np.moveaxis(grid, step_axis, -1)
    n_chan, n_steps = moved.shape
    potentials = np.zeros_like(moved)
    spikes = np.zeros_like(moved)
    u = np.zeros(n_chan)
    spiked = np.zeros(n_chan, dtype=bool)
    for s in range(n_steps):
        u, spiked = tlif_step(u, spiked, moved[:, s], params)
        potentials[:, s] = u
        spikes[:, s] = spiked
    return np.moveaxis(potentials, -1, step_axis), np.moveaxis(spikes, -1, step_axis)


@dataclasses.dataclass
class SrmTrace:
    """Everything a kernel-neuron forward pass records for reuse: the
    response-filtered inputs, per-step potentials, and emitted spikes."""

    potentials: np.ndarray  # (B, P, S)
    spikes: np.ndarray      # (B, P, S), float 0/1 (or relaxed values)
    filtered: np.ndarray    # (B, C, S) response-filtered presynaptic activity


def response_filter(inputs: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Causal correlation of spike trains with a kernel lag table.

    out[..., s] = sum_d table[d] * inputs[..., s - d], accumulated in
    ascending lag order so a per-step ring-buffer evaluation reproduces the
    result bit for bit.
    """
    out = np.zeros(inputs.shape, dtype=np.float64)
    n_steps = inputs.shape[-1]
    for d in range(1, min(len(table), n_steps)):
        out[..., d:] += table[d] * inputs[..., :-d]
    return out


def srm_forward(inputs, weights, params: SrmParams, surrogate: SurrogateSpec | None = None,
                relaxed: bool = False) -> SrmTrace:
    """Unroll one kernel-neuron layer along its recurrence axis.

    Args:
        inputs: presynaptic spikes, shape (C, S) or (B, C, S); S is the
            recurrence axis (time bins or ordered locations).
        weights: synaptic matrix of shape (P, C).
        params: kernel-neuron parameters.
        surrogate: required when relaxed=True.
        relaxed: replace the hard threshold by the surrogate primitive so
            the whole unroll is differentiable.

    Returns:
        SrmTrace with potentials and spikes of shape (B, P, S) (the batch
        axis is squeezed back out for 2-d inputs).
    """
    arr = np.asarray(inputs, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None, ...]
    if arr.ndim != 3:
        raise ValueError(f"inputs must have shape (C, S) or (B, C, S), got {arr.shape}")
    weights = np.asarray(weights, dtype=np.float64)
    n_batch, n_in, n_steps = arr.shape
    if weights.ndim != 2 or weights.shape[1] != n_in:
        raise ValueError(f"weights shape {weights.shape} does not map {n_in} inputs")
    if relaxed and surrogate is None:
        raise ValueError("relaxed forward needs a surrogate spec")
    n_out = weights.shape[0]
    eps_tab = response_table(params)
    eta_tab = refractory_table(params)
    window = params.kernel_window

    filtered = response_filter(arr, eps_tab)
    potentials = np.zeros((n_batch, n_out, n_steps))
    spikes = np.zeros((n_batch, n_out, n_steps))
    eta_acc = np.zeros((n_batch, n_out, n_steps))
    for s in range(n_steps):
        u_s = filtered[:, :, s] @ weights.T + eta_acc[:, :, s]
        if relaxed:
            o_s = surrogate_primitive(u_s, params.threshold, surrogate)
        else:
            o_s = (u_s >= params.threshold).astype(np.float64)
        potentials[:, :, s] = u_s
        spikes[:, :, s] = o_s
        hi = min(n_steps, s + 1 + window)
        if hi > s + 1:
            eta_acc[:, :, s + 1:hi] += o_s[:, :, None] * eta_tab[1:hi - s]
    if squeeze:
        return SrmTrace(potentials[0], spikes[0], filtered[0])
    return SrmTrace(potentials, spikes, filtered)
