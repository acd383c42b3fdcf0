"""Losses, optimizers, and the training loops for both hybrids.

Gradients flow through the unrolled spiking dynamics by the layers'
reverse-mode backward passes with surrogate derivatives at the thresholds;
nothing here depends on an autodiff framework. The kernel-neuron hybrid
trains on a weighted spike-count loss with RMSProp; the graph hybrid trains
on a squared error against one-hot labels with Adam plus multiplicative
learning-rate decay.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .models import HybridLifGnn, HybridSrmFc, concat_predict, fuse_backward, spike_counts


@dataclasses.dataclass
class SpikeCountTargets:
    """Desired output spike counts for the correct and the other classes."""

    true_count: float
    false_count: float


def default_targets(domain: float) -> SpikeCountTargets:
    """true = ceil(0.5 * domain), false = ceil(0.03 * domain), where domain
    is the length of the output axis the counts accumulate over."""
    return SpikeCountTargets(math.ceil(0.5 * domain), math.ceil(0.03 * domain))


def targets_for_labels(y, n_classes, targets: SpikeCountTargets) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    out = np.full((len(y), n_classes), float(targets.false_count))
    out[np.arange(len(y)), y] = float(targets.true_count)
    return out


def loss_location_counts(out_loc, target_counts) -> float:
    """0.5 * sum_k (location spike count - target)^2 for one sample."""
    counts = np.asarray(out_loc).sum(axis=-1)
    d = counts - np.asarray(target_counts, dtype=np.float64)
    return float(0.5 * (d * d).sum())


def loss_weighted_counts(out_time, out_loc, lam, target_counts) -> float:
    """0.5 * sum_k ((time count + lam * location count) - target)^2.

    With lam = 1 this equals the count loss of the concatenated grid."""
    counts = np.asarray(out_time).sum(axis=-1) + lam * np.asarray(out_loc).sum(axis=-1)
    d = counts - np.asarray(target_counts, dtype=np.float64)
    return float(0.5 * (d * d).sum())


def loss_mse(fused, target_vec) -> float:
    """Squared distance between the fused label vector and the one-hot
    target for one sample (no averaging over classes)."""
    d = np.asarray(target_vec, dtype=np.float64) - np.asarray(fused, dtype=np.float64)
    return float((d * d).sum())


def one_hot(y, n_classes) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), y] = 1.0
    return out


class RmsProp:
    """Root-mean-square propagation with optional L2 weight decay."""

    def __init__(self, params: dict, lr=0.01, rho=0.9, eps=1e-8, l2=0.0):
        self.params = params
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.l2 = l2
        self.sq = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict):
        for name, p in self.params.items():
            g = grads[name]
            if self.l2:
                g = g + self.l2 * p
            self.sq[name] = self.rho * self.sq[name] + (1.0 - self.rho) * g * g
            p -= self.lr * g / (np.sqrt(self.sq[name]) + self.eps)

    def end_epoch(self):
        pass


class Adam:
    """Adam with a multiplicative per-epoch learning-rate decay."""

    def __init__(self, params: dict, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8, lr_decay=1.0):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.lr_decay = lr_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / b1c
            v_hat = self.v[name] / b2c
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def end_epoch(self):
        self.lr *= self.lr_decay


@dataclasses.dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 0.01
    l2: float = 0.0
    lam: float = 1.0
    lr_decay: float = 1.0
    target_true: float | None = None   # None: ceil(0.5 * domain)
    target_false: float | None = None  # None: ceil(0.03 * domain)
    seed: int = 0


@dataclasses.dataclass
class EpochStats:
    round: int
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float


def _resolve_targets(model, cfg: TrainConfig) -> SpikeCountTargets:
    domain = model.n_steps + cfg.lam * model.n_taxels
    base = default_targets(domain)
    return SpikeCountTargets(
        base.true_count if cfg.target_true is None else cfg.target_true,
        base.false_count if cfg.target_false is None else cfg.target_false,
    )


def _srm_batch(model: HybridSrmFc, Xb, yb, cfg, targets):
    outs = model.forward(Xb)
    tau = targets_for_labels(yb, model.n_classes, targets)
    counts = spike_counts(outs.out_time) + cfg.lam * spike_counts(outs.out_loc)
    delta = counts - tau
    loss = float(0.5 * (delta * delta).sum(axis=1).mean())
    n_batch = len(yb)
    g_time = np.broadcast_to((delta / n_batch)[:, :, None], outs.out_time.shape)
    g_loc = np.broadcast_to((cfg.lam * delta / n_batch)[:, :, None], outs.out_loc.shape)
    grads = model.backward(outs, g_time, g_loc)
    preds = concat_predict(outs.out_time, outs.out_loc)
    return loss, preds, grads


def _gnn_batch(model: HybridLifGnn, Xb, yb, cfg, _targets):
    outs = model.forward(Xb)
    target = one_hot(yb, model.n_classes)
    diff = outs.fused - target
    loss = float((diff * diff).sum(axis=1).mean())
    g_fused = 2.0 * diff / len(yb)
    g_lt, g_ll = fuse_backward(g_fused, outs.label_time, outs.label_loc, model.fusion)
    grads = model.backward(outs, g_lt, g_ll)
    preds = np.argmax(outs.fused, axis=1)
    return loss, preds, grads


def build_optimizer(model, cfg: TrainConfig):
    if isinstance(model, HybridSrmFc):
        return RmsProp(model.parameters(), lr=cfg.lr, l2=cfg.l2)
    return Adam(model.parameters(), lr=cfg.lr, lr_decay=cfg.lr_decay)


def evaluate(model, X, y, batch_size=64) -> float:
    """Mean prediction accuracy over a labelled set."""
    X = np.asarray(X)
    y = np.asarray(y)
    hits = 0
    for lo in range(0, len(X), batch_size):
        preds = model.predict(X[lo:lo + batch_size].astype(np.float64))
        hits += int((preds == y[lo:lo + batch_size]).sum())
    return hits / len(y)


def train_model(model, X, y, cfg: TrainConfig, eval_set=None, round_index=0,
                log=None) -> list[EpochStats]:
    """Train in place for cfg.epochs; returns one stats row per epoch.

    eval_set is an optional (X_test, y_test) pair scored after each epoch;
    without it test_acc is reported as nan.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) != len(y):
        raise ValueError(f"{len(X)} samples but {len(y)} labels")
    batch_fn = _srm_batch if isinstance(model, HybridSrmFc) else _gnn_batch
    targets = _resolve_targets(model, cfg)
    optimizer = build_optimizer(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(X))
        losses = []
        hits = 0
        for lo in range(0, len(X), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, preds, grads = batch_fn(model, X[idx], y[idx], cfg, targets)
            optimizer.step(grads)
            losses.append(loss * len(idx))
            hits += int((preds == y[idx]).sum())
        optimizer.end_epoch()
        test_acc = float("nan")
        if eval_set is not None:
            test_acc = evaluate(model, eval_set[0], eval_set[1])
        row = EpochStats(
            round=round_index,
            epoch=epoch,
            train_loss=float(np.sum(losses) / len(X)),
            train_acc=hits / len(X),
            test_acc=test_acc,
        )
        history.append(row)
        if log is not None:
            log(row)
    return history


def split_stratified(y, train_frac, rng) -> tuple[np.ndarray, np.ndarray]:
    """Shuffled per-class split keeping class proportions on both sides."""
    y = np.asarray(y, dtype=np.int64)
    if not (0.0 < train_frac < 1.0):
        raise ValueError(f"train fraction must lie in (0, 1), got {train_frac}")
    train_idx, test_idx = [], []
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(len(members))]
        n_train = int(round(train_frac * len(members)))
        if n_train < 1 or len(members) - n_train < 1:
            raise ValueError(
                f"class {cls} has {len(members)} samples, cannot split {train_frac:.0%}/"
                f"{1 - train_frac:.0%} with both sides non-empty"
            )
        train_idx.append(members[:n_train])
        test_idx.append(members[n_train:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


@dataclasses.dataclass
class ProtocolResult:
    history: list          # EpochStats across all rounds
    round_accuracies: list
    mean_accuracy: float
    last_model: object = None  # the model trained in the final round


def run_protocol(model_factory, X, y, cfg: TrainConfig, rounds=5, train_frac=0.8,
                 log=None) -> ProtocolResult:
    """Independent rounds of split/init/train; reports the mean final test
    accuracy, the protocol the reported numbers use.

    model_factory(seed) must return a freshly initialised model.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    history = []
    accs = []
    model = None
    for r in range(rounds):
        rng = np.random.default_rng(cfg.seed + 1000 * r)
        train_idx, test_idx = split_stratified(y, train_frac, rng)
        model = model_factory(cfg.seed + r)
        round_cfg = dataclasses.replace(cfg, seed=cfg.seed + r)
        rows = train_model(
            model, X[train_idx], y[train_idx], round_cfg,
            eval_set=(X[test_idx], y[test_idx]), round_index=r, log=log,
        )
        history.extend(rows)
        accs.append(rows[-1].test_acc)
    return ProtocolResult(history, accs, float(np.mean(accs)), model)


def write_metrics_csv(path, rows: list[EpochStats]) -> None:
    with open(path, "w") as fh:
        fh.write("round,epoch,train_loss,train_acc,test_acc\n")
        for row in rows:
            fh.write(
                f"{row.round},{row.epoch},{row.train_loss:.10g},"
                f"{row.train_acc:.10g},{row.test_acc:.10g}\n"
            )
