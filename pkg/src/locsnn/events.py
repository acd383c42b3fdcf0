"""Event-stream data model, on-disk formats, and synthetic generators.

A sample is a dense binary grid of shape (N taxels, T time bins); an event
file stores it sparsely as ``taxel time_bin`` pairs under a one-line header.
A dataset is a directory of one subdirectory per class with a flat key-value
manifest at its root:

    <root>/manifest.cfg
    <root>/<class>/<sample>.evt

Event files and grids use 0-based taxel and time-bin indices.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .errors import DataError, MalformedRecordError
from .validation import check_spike_grid

MANIFEST_NAME = "manifest.cfg"

# Published stream shapes for the tactile benchmarks this engine targets:
# name -> (n_taxels, n_steps, n_classes, n_samples, bin_width seconds).
KNOWN_DATASETS = {
    "objects-v1": (78, 325, 36, 900, 0.02),
    "containers-v1": (78, 325, 20, 800, 0.02),
    "slip": (78, 150, 2, 100, 0.001),
    "objects-v0": (39, 250, 36, 720, 0.02),
    "containers-v0": (39, 325, 20, 300, 0.02),
}


@dataclasses.dataclass
class EventStream:
    """One sample: binary spike grid plus its label and identity."""

    spikes: np.ndarray  # uint8, shape (N, T)
    label: int
    sample_id: str = ""

    @property
    def n_taxels(self) -> int:
        return self.spikes.shape[0]

    @property
    def n_steps(self) -> int:
        return self.spikes.shape[1]


@dataclasses.dataclass
class TransposedStream:
    """The same grid viewed as (T, N): time bins become the channel axis
    and the taxel axis is the one a location-recurrent layer steps along."""

    spikes: np.ndarray  # uint8, shape (T, N)
    label: int
    sample_id: str = ""


@dataclasses.dataclass
class DatasetMeta:
    name: str
    n_taxels: int
    n_steps: int
    n_classes: int
    bin_width: float


def transpose(stream: EventStream) -> TransposedStream:
    """Reindex a stream so that out[t][n] == in[n][t]."""
    return TransposedStream(
        spikes=np.ascontiguousarray(stream.spikes.T),
        label=stream.label,
        sample_id=stream.sample_id,
    )


def _parse_kv(path: Path) -> dict:
    """Parse a flat ``key = value`` file; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def read_manifest(root) -> DatasetMeta:
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        raise DataError(f"missing manifest: {path}")
    kv = _parse_kv(path)
    try:
        return DatasetMeta(
            name=kv.get("name", Path(root).name),
            n_taxels=int(kv["N"]),
            n_steps=int(kv["T"]),
            n_classes=int(kv["K"]),
            bin_width=float(kv.get("bin_width", 1.0)),
        )
    except KeyError as exc:
        raise DataError(f"{path}: manifest missing key {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: bad manifest value ({exc})") from exc


def write_manifest(root, meta: DatasetMeta) -> None:
    path = Path(root) / MANIFEST_NAME
    path.write_text(
        f"name = {meta.name}\n"
        f"N = {meta.n_taxels}\n"
        f"T = {meta.n_steps}\n"
        f"K = {meta.n_classes}\n"
        f"bin_width = {meta.bin_width:g}\n"
    )


def read_event_file(path) -> tuple[np.ndarray, float, int]:
    """Read one event file.

    Returns (grid of shape (N, T_file), bin_width, label). The header line is
    ``N T bin_width label``; each following line is ``taxel time_bin``.
    Multiple events landing in one bin collapse to a single spike.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read event file: {path} ({exc})") from exc
    if not lines:
        raise MalformedRecordError(path, 1, "empty file, expected header")
    head = lines[0].split()
    if len(head) != 4:
        raise MalformedRecordError(path, 1, f"header must be 'N T bin_width label', got {lines[0]!r}")
    try:
        n_taxels, n_steps = int(head[0]), int(head[1])
        bin_width = float(head[2])
        label = int(head[3])
    except ValueError:
        raise MalformedRecordError(path, 1, f"non-numeric header field in {lines[0]!r}")
    if n_taxels <= 0 or n_steps <= 0:
        raise MalformedRecordError(path, 1, f"non-positive grid shape {n_taxels}x{n_steps}")
    grid = np.zeros((n_taxels, n_steps), dtype=np.uint8)
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split()
        if len(parts) != 2:
            raise MalformedRecordError(path, lineno, f"expected 'taxel time_bin', got {raw!r}")
        try:
            taxel, t = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedRecordError(path, lineno, f"non-integer record {raw!r}")
        if taxel < 0 or taxel >= n_taxels:
            raise MalformedRecordError(path, lineno, f"taxel {taxel} outside [0, {n_taxels})")
        if t < 0 or t >= n_steps:
            raise MalformedRecordError(path, lineno, f"time bin {t} outside [0, {n_steps})")
        grid[taxel, t] = 1
    return grid, bin_width, label


def write_event_file(path, stream: EventStream, bin_width: float = 1.0) -> None:
    grid = check_spike_grid(stream.spikes)
    taxels, times = np.nonzero(grid)
    with open(path, "w") as fh:
        fh.write(f"{grid.shape[0]} {grid.shape[1]} {bin_width:g} {stream.label}\n")
        for n, t in zip(taxels, times):
            fh.write(f"{n} {t}\n")


def _fit_length(grid: np.ndarray, n_steps: int) -> np.ndarray:
    """Zero-pad or truncate the time axis to exactly n_steps bins."""
    have = grid.shape[1]
    if have == n_steps:
        return grid
    if have > n_steps:
        return grid[:, :n_steps]
    out = np.zeros((grid.shape[0], n_steps), dtype=grid.dtype)
    out[:, :have] = grid
    return out


def load_dataset(root) -> tuple[list[EventStream], DatasetMeta]:
    """Load every ``<root>/<class>/*.evt`` file described by the manifest.

    Streams come back in sorted (class dir, file name) order, binarized and
    padded or truncated to the manifest's T. Labels are taken from the file
    headers and must fall in [0, K).
    """
    root = Path(root)
    meta = read_manifest(root)
    streams = []
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    for class_dir in class_dirs:
        for path in sorted(class_dir.glob("*.evt")):
            grid, _bin_width, label = read_event_file(path)
            if grid.shape[0] != meta.n_taxels:
                raise DataError(
                    f"{path}: file declares {grid.shape[0]} taxels, manifest says {meta.n_taxels}"
                )
            if label < 0 or label >= meta.n_classes:
                raise DataError(f"{path}: label {label} outside [0, {meta.n_classes})")
            grid = _fit_length(grid, meta.n_steps)
            streams.append(EventStream(spikes=grid, label=label, sample_id=f"{class_dir.name}/{path.stem}"))
    if not streams:
        raise DataError(f"no event files found under {root}")
    return streams, meta


def write_dataset(root, streams: list[EventStream], meta: DatasetMeta) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_manifest(root, meta)
    for stream in streams:
        class_dir = root / f"class{stream.label:02d}"
        class_dir.mkdir(exist_ok=True)
        name = stream.sample_id.replace("/", "_") or f"sample{id(stream)}"
        write_event_file(class_dir / f"{name}.evt", stream, bin_width=meta.bin_width)


@dataclasses.dataclass
class SynthSpec:
    """Rate-coded synthetic task: class k drives its own taxel subset at
    rate_hi inside a class-specific window, everything else at rate_lo."""

    n_taxels: int
    n_steps: int
    n_classes: int
    samples_per_class: int
    rate_hi: float = 0.5
    rate_lo: float = 0.05
    seed: int = 0


def gen_synthetic(spec: SynthSpec) -> list[EventStream]:
    """Generate a deterministic, seeded rate-pattern classification task."""
    if not (0.0 <= spec.rate_lo < spec.rate_hi <= 1.0):
        raise ValueError(f"need 0 <= rate_lo < rate_hi <= 1, got {spec.rate_lo}, {spec.rate_hi}")
    if spec.n_classes > spec.n_taxels:
        raise ValueError(
            f"cannot assign disjoint taxel subsets: {spec.n_classes} classes > {spec.n_taxels} taxels"
        )
    if spec.n_classes < 1 or spec.samples_per_class < 1:
        raise ValueError("need at least one class and one sample per class")
    rng = np.random.default_rng(spec.seed)
    groups = np.array_split(rng.permutation(spec.n_taxels), spec.n_classes)
    window_len = max(1, spec.n_steps // 2)
    span = spec.n_steps - window_len
    streams = []
    for k in range(spec.n_classes):
        start = round(k * span / max(spec.n_classes - 1, 1)) if span > 0 else 0
        for i in range(spec.samples_per_class):
            grid = (rng.random((spec.n_taxels, spec.n_steps)) < spec.rate_lo)
            hot = rng.random((len(groups[k]), window_len)) < spec.rate_hi
            grid[np.ix_(groups[k], np.arange(start, start + window_len))] = hot
            streams.append(
                EventStream(spikes=grid.astype(np.uint8), label=k, sample_id=f"synth-{k}-{i}")
            )
    return streams


@dataclasses.dataclass
class LateBurstSpec:
    """Timing-only task: every class uses all taxels at the same background
    rate and fires one dense burst late in the stream; classes differ only
    in which late window holds the burst, so spike counts and the spatial
    footprint carry no class signal."""

    n_taxels: int
    n_steps: int
    n_classes: int
    samples_per_class: int
    late_start: int
    rate_bg: float = 0.08
    rate_burst: float = 0.9
    seed: int = 0


def gen_late_burst(spec: LateBurstSpec) -> list[EventStream]:
    if not (0 < spec.late_start < spec.n_steps):
        raise ValueError(f"late_start must sit inside (0, {spec.n_steps})")
    width = (spec.n_steps - spec.late_start) // spec.n_classes
    if width < 1:
        raise ValueError("late region too short for one window per class")
    rng = np.random.default_rng(spec.seed)
    streams = []
    for k in range(spec.n_classes):
        lo = spec.late_start + k * width
        for i in range(spec.samples_per_class):
            grid = rng.random((spec.n_taxels, spec.n_steps)) < spec.rate_bg
            grid[:, lo:lo + width] = rng.random((spec.n_taxels, width)) < spec.rate_burst
            streams.append(
                EventStream(spikes=grid.astype(np.uint8), label=k, sample_id=f"burst-{k}-{i}")
            )
    return streams
