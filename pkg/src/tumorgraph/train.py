"""Adam optimization under categorical cross-entropy, with epoch
bookkeeping and early stopping on validation loss.

Each epoch shuffles the training set by (seed, epoch), walks mini-batches
(final partial batch kept), applies per-sample augmentation seeded by
(seed, epoch, sample index), and takes one Adam step per batch. Metrics
are then computed in a dedicated evaluation pass (training=False, no
augmentation), so recorded numbers never mix dropout noise or stale
mini-batch averages.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import augment as aug
from . import graph as graph_mod
from . import metrics as metrics_mod
from .errors import NumericError, ShapeError
from .tensor import Tensor, backward, no_grad, record

_SHUFFLE_TAG = 32452843
_DROPOUT_TAG = 49979687

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    """Resolved training hyperparameters; every field lands in the run report."""

    learning_rate: float = 3e-5
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 3
    min_delta: float = 0.0
    policy: str = "full_finetune"
    seed: int = 0
    augment: aug.AugmentConfig | None = field(default_factory=aug.AugmentConfig)
    deterministic: bool = True
    # Optional capacity-test hook: stop once train accuracy reaches this.
    stop_at_train_accuracy: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.policy not in graph_mod.TRAINABLE_POLICIES:
            raise ValueError(f"unknown trainable policy {self.policy!r}")


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    train_precision: float
    train_recall: float
    val_loss: float
    val_accuracy: float
    val_precision: float
    val_recall: float


@dataclass(frozen=True)
class EarlyStopState:
    best: float = math.inf
    since_improvement: int = 0


def early_stop(state, val_loss, patience, min_delta=0.0):
    """Advance the early-stop rule; returns (new state, stop?).

    Improvement means val_loss < best - min_delta; the counter resets on
    improvement and stopping fires exactly when it reaches ``patience``.
    """
    if val_loss < state.best - min_delta:
        return EarlyStopState(best=val_loss, since_improvement=0), False
    since = state.since_improvement + 1
    return EarlyStopState(best=state.best, since_improvement=since), since >= patience


def categorical_crossentropy(probs, onehot):
    """Mean negative log-probability of the true class.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the log; the
    gradient is zero outside the clamp window.
    """
    target = onehot.data if isinstance(onehot, Tensor) else np.asarray(onehot, dtype=probs.dtype)
    if probs.data.ndim != 2 or target.shape != probs.data.shape:
        raise ShapeError(
            f"cross-entropy needs matching (N, K) rows, got {tuple(probs.shape)} "
            f"and {tuple(target.shape)}"
        )
    n = probs.shape[0]
    lo = np.asarray(PROB_CLAMP, dtype=probs.dtype)
    hi = np.asarray(1.0 - PROB_CLAMP, dtype=probs.dtype)
    clamped = np.clip(probs.data, lo, hi)
    inside = (probs.data > lo) & (probs.data < hi)
    loss = -(target * np.log(clamped)).sum() / n

    def backward_fn(grad):
        if probs.requires_grad:
            probs.accumulate_grad(grad * np.where(inside, -target / clamped, 0.0) / n)

    return record(np.asarray(loss, dtype=probs.dtype), (probs,), backward_fn, "crossentropy")


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, in place on ``params``.

    ``params`` maps name -> Tensor (or ndarray); ``grads`` maps the same
    names to gradient arrays. Raises NumericError naming any parameter
    whose gradient is not finite.
    """
    state.t += 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        p = params[name]
        data = p.data if isinstance(p, Tensor) else p
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(data)
            state.v[name] = np.zeros_like(data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def _batch_slices(n, batch_size):
    for start in range(0, n, batch_size):
        yield slice(start, min(start + batch_size, n))


def _assemble(planes):
    # (B, H, W) single-channel planes -> NHWC with the gray channel replicated
    return np.repeat(planes[:, :, :, None], 3, axis=3)


def _evaluate(g, weights, samples, batch_size):
    """Loss/accuracy/macro precision/recall with training=False, no augmentation."""
    n = len(samples)
    preds = np.empty(n, dtype=np.int64)
    total_nll = 0.0
    onehots = np.eye(3, dtype=np.float32)[samples.labels]
    with no_grad():
        for sl in _batch_slices(n, batch_size):
            probs = graph_mod.forward(g, weights, _assemble(samples.images[sl]), training=False)
            preds[sl] = probs.data.argmax(axis=1)
            clamped = np.clip(probs.data, PROB_CLAMP, 1.0 - PROB_CLAMP)
            total_nll += -(onehots[sl] * np.log(clamped)).sum()
    cm = metrics_mod.confusion(preds, samples.labels)
    precision, recall = metrics_mod.precision_recall(cm, "macro")
    return (
        float(total_nll / n),
        metrics_mod.accuracy(cm),
        precision,
        recall,
        cm,
    )


def fit(g, store, train_set, val_set, cfg):
    """Train the graph on SampleSets; returns (history, store).

    The store is updated in place. History holds one EpochRecord per
    completed epoch; training stops at max_epochs or when validation loss
    fails to improve for ``patience`` epochs.
    """
    if not g.has_head:
        raise ShapeError("fit needs a graph with the head attached")
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("fit needs non-empty train and validation sets")

    trainable = graph_mod.trainable_names(g, cfg.policy)
    params = {
        name: Tensor(store[name], requires_grad=name in trainable)
        for name in store.names()
    }
    opt = AdamState()
    stopper = EarlyStopState()
    history = []
    n = len(train_set)

    for epoch in range(cfg.max_epochs):
        order = np.random.default_rng(
            np.random.SeedSequence([_SHUFFLE_TAG, cfg.seed, epoch])
        ).permutation(n)
        step_in_epoch = 0
        for sl in _batch_slices(n, cfg.batch_size):
            idx = order[sl]
            planes = train_set.images[idx]
            if cfg.augment is not None:
                planes = np.stack([
                    aug.apply_affine(
                        plane,
                        aug.sample_params(cfg.augment, plane.shape,
                                          aug.stream_rng(cfg.seed, epoch, int(i))),
                        cfg.augment,
                    )
                    for plane, i in zip(planes, idx)
                ])
            batch = _assemble(planes)
            onehot = np.eye(3, dtype=np.float32)[train_set.labels[idx]]

            drop_rng = np.random.default_rng(
                np.random.SeedSequence([_DROPOUT_TAG, cfg.seed, epoch, step_in_epoch])
            )
            for t in params.values():
                t.zero_grad()
            probs = graph_mod.forward(g, params, batch, training=True, rng=drop_rng)
            loss = categorical_crossentropy(probs, onehot)
            if not np.isfinite(loss.data):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, batch {step_in_epoch}"
                )
            backward(loss)
            grads = {
                name: t.grad for name, t in params.items()
                if t.requires_grad and t.grad is not None
            }
            adam_step(params, grads, opt, cfg.learning_rate)
            step_in_epoch += 1

        train_stats = _evaluate(g, params, train_set, cfg.batch_size)
        val_stats = _evaluate(g, params, val_set, cfg.batch_size)
        history.append(EpochRecord(
            epoch=epoch,
            train_loss=train_stats[0], train_accuracy=train_stats[1],
            train_precision=train_stats[2], train_recall=train_stats[3],
            val_loss=val_stats[0], val_accuracy=val_stats[1],
            val_precision=val_stats[2], val_recall=val_stats[3],
        ))

        stopper, stop = early_stop(stopper, val_stats[0], cfg.patience, cfg.min_delta)
        if cfg.stop_at_train_accuracy is not None and train_stats[1] >= cfg.stop_at_train_accuracy:
            break
        if stop:
            break

    for name, t in params.items():
        store.set(name, t.data)
    return history, store


def predict_probabilities(g, store, planes, batch_size=32):
    """Class probabilities for (N, H, W) normalized planes."""
    out = np.empty((planes.shape[0], 3), dtype=np.float32)
    with no_grad():
        for sl in _batch_slices(planes.shape[0], batch_size):
            probs = graph_mod.forward(g, store, _assemble(planes[sl]), training=False)
            out[sl] = probs.data
    return out


def evaluate_samples(g, weights, samples, batch_size=32):
    """Public evaluation pass: returns (loss, MetricsRecord, confusion matrix)."""
    loss, _, _, _, cm = _evaluate(g, weights, samples, batch_size)
    return loss, metrics_mod.summarize(cm), cm


__all__ = [
    "TrainConfig", "AdamState", "EpochRecord", "EarlyStopState",
    "early_stop", "categorical_crossentropy", "adam_step", "fit",
    "predict_probabilities", "evaluate_samples",
]
