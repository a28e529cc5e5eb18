"""SGD training with the step learning-rate schedule and per-layer multipliers.

The optimizer minimizes the batch-summed distribution loss. The final dense
layer trains with 10x the learning rate and 100x the weight decay; batch-norm
scale/shift parameters are exempt from weight decay. Everything is
deterministic in (dataset, spec, config): weight init and batch shuffling
derive from config.seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .checkpoint import Checkpoint
from .data import expand
from .distributions import (
    batch_loss_graph,
    batch_loss_value,
    chebyshev,
    kl_loss,
    pearson,
)
from .errors import ConfigurationError, NumericalError, UndefinedCorrelationError
from .network import Network, init_weights

LOSS_KINDS = ("euclidean", "euclidean_sq", "kl")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    base_lr: float = 0.001
    lr_step: int = 4000
    lr_factor: float = 0.1
    max_iter: int = 17000
    weight_decay: float = 0.0005
    last_layer_lr_mult: float = 10.0
    last_layer_decay_mult: float = 100.0
    momentum: float = 0.9
    loss: str = "euclidean"
    augment_factor: int = 1
    seed: int = 0
    eval_every: int = 500

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be >= 2 (batch norm), got {self.batch_size}")
        for name in ("base_lr", "lr_step", "max_iter", "last_layer_lr_mult",
                     "last_layer_decay_mult", "eval_every"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.lr_factor < 1.0:
            raise ConfigurationError(f"lr_factor must be in (0,1), got {self.lr_factor}")
        if self.weight_decay < 0 or self.momentum < 0:
            raise ConfigurationError("weight_decay and momentum must be >= 0")
        if self.loss not in LOSS_KINDS:
            raise ConfigurationError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.augment_factor < 1:
            raise ConfigurationError(f"augment_factor must be >= 1, got {self.augment_factor}")


def lr_at(config, iteration):
    """Step schedule: base_lr * lr_factor ** floor(iteration / lr_step)."""
    if not 0 <= iteration < config.max_iter:
        raise ConfigurationError(
            f"iteration {iteration} outside [0, {config.max_iter})")
    return config.base_lr * config.lr_factor ** (iteration // config.lr_step)


@dataclass
class EvalPoint:
    iteration: int
    train_loss: float
    test_loss: float
    test_pc: float        # nan when the correlation is undefined
    test_kl: float
    test_chebyshev: float


@dataclass
class MetricsLog:
    points: list = field(default_factory=list)

    def append(self, point):
        if self.points and point.iteration <= self.points[-1].iteration:
            raise ConfigurationError("metrics iterations must be strictly increasing")
        self.points.append(point)

    def to_csv(self):
        rows = ["iter,train_loss,test_loss,test_pc,test_kl,test_chebyshev"]
        for p in self.points:
            rows.append(f"{p.iteration},{p.train_loss!r},{p.test_loss!r},"
                        f"{p.test_pc!r},{p.test_kl!r},{p.test_chebyshev!r}")
        return "\n".join(rows) + "\n"

    def save_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


@dataclass
class EvalRecord:
    n: int
    pc: float                 # nan when undefined
    pc_error: str | None
    mean_kl: float
    mean_chebyshev: float
    mean_loss: float
    loss_kind: str


def sgd_step(records, velocities, config, iteration):
    """One momentum-SGD update: v <- mu v - lr (g + wd w); w <- w + v."""
    lr = lr_at(config, iteration)
    for rec in records:
        g = rec.tensor.grad
        if g is None:
            g = np.zeros_like(rec.tensor.data)
        if not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite gradient at iteration {iteration} in parameter {rec.name}")
        lr_l = lr * (config.last_layer_lr_mult if rec.last_layer else 1.0)
        if rec.kind in ("bn_gamma", "bn_beta"):
            wd = 0.0
        else:
            wd = config.weight_decay * (config.last_layer_decay_mult if rec.last_layer else 1.0)
        v = velocities.get(rec.name)
        if v is None:
            v = np.zeros_like(rec.tensor.data)
            velocities[rec.name] = v
        v *= config.momentum
        v -= lr_l * (g + wd * rec.tensor.data)
        rec.tensor.data += v


def _batch_arrays(dataset, indices):
    images = np.stack([dataset.samples[i].image for i in indices]).astype(np.float32)
    targets = np.stack([dataset.samples[i].distribution for i in indices]).astype(np.float32)
    return images, targets


def predict_distributions(net, dataset, indices, batch_size=64):
    """Eval-mode predicted distributions for the given sample indices."""
    preds = []
    with ad.no_grad():
        for start in range(0, len(indices), batch_size):
            chunk = indices[start:start + batch_size]
            images, _ = _batch_arrays(dataset, chunk)
            out = net.forward(images, mode="eval")
            preds.append(out.distribution.data.astype(np.float64))
    return np.concatenate(preds, axis=0)


def evaluate(net, dataset, indices, loss_kind="euclidean", batch_size=64):
    """Eval-mode metrics over one split: PC, mean KL, mean Chebyshev, mean loss."""
    if not indices:
        raise ConfigurationError("evaluate needs a non-empty split")
    preds = predict_distributions(net, dataset, indices, batch_size)
    targets = np.stack([dataset.samples[i].distribution for i in indices])
    labels = dataset.scale.values
    pred_scores = preds @ labels
    true_scores = np.array([dataset.samples[i].mean_score for i in indices])

    pc, pc_error = math.nan, None
    try:
        pc = pearson(pred_scores, true_scores)
    except UndefinedCorrelationError as exc:
        pc_error = str(exc)

    mean_kl = float(np.mean([kl_loss(t, p) for t, p in zip(targets, preds)]))
    mean_cheb = float(np.mean([chebyshev(p, t) for p, t in zip(preds, targets)]))
    mean_loss = batch_loss_value(loss_kind, preds, targets)
    return EvalRecord(n=len(indices), pc=pc, pc_error=pc_error, mean_kl=mean_kl,
                      mean_chebyshev=mean_cheb, mean_loss=mean_loss, loss_kind=loss_kind)


def _check_images(dataset, spec):
    want = (3, spec.input_size, spec.input_size)
    for i in dataset.train_idx + dataset.test_idx:
        got = dataset.samples[i].image.shape
        if tuple(got) != want:
            raise ConfigurationError(
                f"sample {i} image shape {got} does not match network input {want}")


def _epoch_batches(train_idx, batch_size, rng):
    perm = rng.permutation(len(train_idx))
    batches = []
    for start in range(0, len(perm), batch_size):
        chunk = [train_idx[j] for j in perm[start:start + batch_size]]
        if len(chunk) >= 2:   # batch norm needs at least 2
            batches.append(chunk)
    return batches


def train(dataset, spec, config):
    """Full training run; returns the final checkpoint and the metrics log."""
    if not dataset.train_idx or not dataset.test_idx:
        raise ConfigurationError("train needs non-empty train and test splits")
    ds = expand(dataset, config.augment_factor, seed=config.seed)
    _check_images(ds, spec)

    net = Network(spec)
    init_weights(net, config.seed)
    records = net.param_records()
    velocities = {}
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0xBA7C)))
    log = MetricsLog()

    batches = []
    pos = 0
    for it in range(config.max_iter):
        if pos >= len(batches):
            batches = _epoch_batches(ds.train_idx, config.batch_size, shuffle_rng)
            pos = 0
        batch_idx = batches[pos]
        pos += 1

        images, targets = _batch_arrays(ds, batch_idx)
        out = net.forward(images, mode="train")
        loss = batch_loss_graph(config.loss, out.distribution, targets)
        if not np.isfinite(loss.data):
            raise NumericalError(f"non-finite loss at iteration {it}")
        for rec in records:
            rec.tensor.grad = None
        loss.backward()
        sgd_step(records, velocities, config, it)

        if (it + 1) % config.eval_every == 0 or it + 1 == config.max_iter:
            tr = evaluate(net, ds, ds.train_idx, loss_kind=config.loss)
            te = evaluate(net, ds, ds.test_idx, loss_kind=config.loss)
            log.append(EvalPoint(
                iteration=it + 1,
                train_loss=tr.mean_loss,
                test_loss=te.mean_loss,
                test_pc=te.pc,
                test_kl=te.mean_kl,
                test_chebyshev=te.mean_chebyshev,
            ))
    return Checkpoint.from_network(net, iteration=config.max_iter), log


def train_mean_regression(dataset, spec, config):
    """Single-label baseline: the same backbone with a scalar head.

    Minimizes the batch-mean squared error between the head output and the
    mean score (mean, not sum: score targets sit around 3 and a summed loss
    blows up under the final-layer rate multiplier). Used to contrast
    distribution training against mean-score regression; returns the
    checkpoint and a list of (iteration, train_mse).
    """
    if spec.num_labels != 1:
        raise ConfigurationError("mean regression needs a num_labels=1 spec")
    if not dataset.train_idx or not dataset.test_idx:
        raise ConfigurationError("train needs non-empty train and test splits")
    ds = expand(dataset, config.augment_factor, seed=config.seed)
    _check_images(ds, spec)

    net = Network(spec)
    init_weights(net, config.seed)
    records = net.param_records()
    velocities = {}
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0xBA7C)))
    history = []

    batches = []
    pos = 0
    for it in range(config.max_iter):
        if pos >= len(batches):
            batches = _epoch_batches(ds.train_idx, config.batch_size, shuffle_rng)
            pos = 0
        batch_idx = batches[pos]
        pos += 1

        images = np.stack([ds.samples[i].image for i in batch_idx]).astype(np.float32)
        scores = np.array([ds.samples[i].mean_score for i in batch_idx], dtype=np.float32)
        out = net.forward(images, mode="train")
        diff = ad.sub(ad.reshape(out.logits, (len(batch_idx),)), ad.Tensor(scores))
        loss = ad.scale(ad.tsum(ad.mul(diff, diff)), 0.5 / len(batch_idx))
        if not np.isfinite(loss.data):
            raise NumericalError(f"non-finite loss at iteration {it}")
        for rec in records:
            rec.tensor.grad = None
        loss.backward()
        sgd_step(records, velocities, config, it)
        if (it + 1) % config.eval_every == 0 or it + 1 == config.max_iter:
            history.append((it + 1, float(loss.data)))
    return Checkpoint.from_network(net, iteration=config.max_iter), history


def predict_scalar_scores(net, dataset, indices, batch_size=64):
    """Eval-mode scalar-head predictions (mean-regression baseline)."""
    preds = []
    with ad.no_grad():
        for start in range(0, len(indices), batch_size):
            chunk = indices[start:start + batch_size]
            images = np.stack([dataset.samples[i].image for i in chunk]).astype(np.float32)
            out = net.forward(images, mode="eval")
            preds.append(out.logits.data[:, 0].astype(np.float64))
    return np.concatenate(preds)
