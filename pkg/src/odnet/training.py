"""Loss, Adam/AdamW updates, the inverse-time schedule, and the training loop.

Training is full-batch by default (desk-scale datasets are small); set
``batch_size`` for mini-batching over function indices. POD trunk members
hold no trainable tensors, so they are frozen by construction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericError, ShapeError

OPTIMIZERS = ("adam", "adamw")


@dataclass
class TrainConfig:
    epochs: int = 5000
    optimizer: str = "adam"
    lr0: float = 1e-3
    gamma: float = 0.5
    decay_step: int = 0  # 0 -> epochs // 5
    weight_decay: float = 1e-4
    batch_size: int = 0  # 0 -> full batch
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr0 < 0.0:
            raise ConfigError("lr0 must be nonnegative")
        if self.gamma < 0.0:
            raise ConfigError("gamma must be >= 0")
        if self.weight_decay < 0.0:
            raise ConfigError("weight_decay must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    def effective_decay_step(self) -> int:
        if self.decay_step >= 1:
            return int(self.decay_step)
        return max(1, self.epochs // 5)


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    lrs: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    param_hash: str = ""

    @property
    def epochs_run(self):
        return len(self.losses)

    def mean_epoch_seconds(self) -> float:
        return float(np.mean(self.epoch_seconds)) if self.epoch_seconds else 0.0

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("epoch,loss,lr,seconds\n")
            for e, (loss, lr, sec) in enumerate(zip(self.losses, self.lrs, self.epoch_seconds)):
                fh.write(f"{e},{loss:.17g},{lr:.17g},{sec:.6g}\n")


def mse_loss(pred: ad.Tensor, target, tape: ad.Tape | None = None) -> ad.Tensor:
    """Mean over all entries of the squared difference."""
    target = ad.as_tensor(target)
    if pred.data.shape != target.data.shape:
        raise ShapeError(
            f"mse_loss: prediction shape {pred.data.shape} != target shape {target.data.shape}"
        )
    diff = ad.sub(pred, target, tape)
    return ad.mean_all(ad.mul(diff, diff, tape), tape)


def inverse_time_lr(lr0: float, gamma: float, step_interval: int, step: int) -> float:
    """lr0 / (1 + gamma * floor(step / step_interval))."""
    return lr0 / (1.0 + gamma * (int(step) // int(step_interval)))


class Adam:
    """Adam with bias correction; state tensors match parameter shapes."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            step = lr * m_hat / (np.sqrt(v_hat) + self.eps)
            step += self._decay_term(p, lr)
            p.data -= step

    def _decay_term(self, p, lr):
        return 0.0


class AdamW(Adam):
    """Adam plus decoupled weight decay, applied to weights but not biases."""

    def __init__(self, params, weight_decay: float = 1e-4, decay_params=(), **kwargs):
        super().__init__(params, **kwargs)
        self.weight_decay = weight_decay
        self._decay_ids = {id(p) for p in decay_params}

    def _decay_term(self, p, lr):
        if id(p) in self._decay_ids and self.weight_decay != 0.0:
            return lr * self.weight_decay * p.data
        return 0.0


def make_optimizer(model, cfg: TrainConfig):
    if cfg.optimizer == "adamw":
        return AdamW(
            model.parameters(),
            weight_decay=cfg.weight_decay,
            decay_params=model.weight_tensors(),
        )
    return Adam(model.parameters())


def train(model, u_samples, v_targets, y_locations, cfg: TrainConfig) -> TrainReport:
    """Full forward -> MSE -> backward -> optimizer-step epochs.

    Aborts with NumericError (carrying the epoch index and the partial
    report) as soon as the loss stops being finite.
    """
    u = np.asarray(u_samples, dtype=np.float64)
    v = np.asarray(v_targets, dtype=np.float64)
    y = np.asarray(y_locations, dtype=np.float64)
    if u.shape[0] != v.shape[0]:
        raise ShapeError(f"got {u.shape[0]} inputs but {v.shape[0]} targets")
    optimizer = make_optimizer(model, cfg)
    report = TrainReport()
    decay_every = cfg.effective_decay_step()
    rng = np.random.default_rng(cfg.seed)
    n = u.shape[0]
    batch = n if cfg.batch_size <= 0 else min(cfg.batch_size, n)

    u_full = ad.Tensor(u)
    v_full = ad.Tensor(v)
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        lr = inverse_time_lr(cfg.lr0, cfg.gamma, decay_every, epoch)
        if batch == n:
            epoch_loss = _step(model, optimizer, u_full, v_full, y, lr)
        else:
            order = rng.permutation(n)
            total = 0.0
            for lo in range(0, n, batch):
                sel = order[lo: lo + batch]
                loss = _step(model, optimizer, ad.Tensor(u[sel]), ad.Tensor(v[sel]), y, lr)
                total += loss * sel.size
            epoch_loss = total / n
        elapsed = time.perf_counter() - start
        if not np.isfinite(epoch_loss):
            err = NumericError(f"training loss became non-finite at epoch {epoch}")
            err.epoch = epoch
            err.report = report
            raise err
        report.losses.append(epoch_loss)
        report.lrs.append(lr)
        report.epoch_seconds.append(elapsed)
    if hasattr(model, "parameter_hash"):
        report.param_hash = model.parameter_hash()
    return report


def _step(model, optimizer, u_t, v_t, y, lr) -> float:
    tape = ad.Tape()
    pred = model.predict(u_t, y, tape)
    loss = mse_loss(pred, v_t, tape)
    value = float(loss.data)
    if not np.isfinite(value):
        return value
    model.zero_grad()
    tape.backward(loss)
    optimizer.step(lr)
    return value
