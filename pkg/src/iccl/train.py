"""Mini-batch Adam loop shared by the distance regressor and NFPL."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgument, TrainingDiverged

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    # None trains on every example each epoch; an int draws that many
    # without replacement, which keeps an epoch affordable on the
    # ~500k pairs of a 1000-node pretraining set
    examples_per_epoch: int | None = None
    lr_decay: float = 1.0  # multiplicative, applied after every epoch
    finetune_learning_rate: float = 1e-4
    finetune_epochs: int = 50
    dtype: str = "float32"
    db_floor: float = -150.0

    def __post_init__(self):
        if not self.learning_rate > 0 or not self.finetune_learning_rate > 0:
            raise InvalidArgument("learning rates must be positive")
        if self.batch_size < 1:
            raise InvalidArgument("batch size must be >= 1")
        if self.epochs < 0 or self.finetune_epochs < 0:
            raise InvalidArgument("epoch counts must be >= 0")
        if self.examples_per_epoch is not None and self.examples_per_epoch < 1:
            raise InvalidArgument("examples_per_epoch must be >= 1")

    def finetune(self) -> TrainConfig:
        """Config for the second stage: lower rate, own epoch budget, shifted seed."""
        return replace(
            self,
            learning_rate=self.finetune_learning_rate,
            epochs=self.finetune_epochs,
            seed=self.seed + 1,
        )


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = np.asarray(g, dtype=p.dtype)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def fit(params, n_examples: int, loss_and_grad, config: TrainConfig, label: str = "train"):
    """Run ``config.epochs`` epochs of Adam on ``params`` in place.

    ``loss_and_grad(indices)`` returns the mean loss over those examples
    and its gradient blocks. Returns the per-epoch mean training loss.

    Raises:
        TrainingDiverged: a batch loss is NaN or infinite.
    """
    if n_examples < 1:
        raise InvalidArgument("nothing to train on")
    rng = np.random.default_rng(config.seed)
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    per_epoch = n_examples if config.examples_per_epoch is None else min(config.examples_per_epoch, n_examples)
    trace = []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n_examples)[:per_epoch]
        total = 0.0
        for start in range(0, per_epoch, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grad(idx)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            opt.step(params, grads)
            total += loss * len(idx)
        trace.append(total / per_epoch)
        opt.lr *= config.lr_decay
        log.info("%s epoch %d/%d loss %.4g (%.1fs)", label, epoch + 1, config.epochs, trace[-1],
                 time.perf_counter() - t0)
    return trace
