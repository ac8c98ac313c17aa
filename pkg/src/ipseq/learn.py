"""Offline training and per-sample online updates.

Losses are mean teacher-forced negative log-probability per target token
(nats/token). A zero learning rate is a legal setting and must leave
parameters bit-identical -- the demo-safe configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass
class TrainConfig:
    optimizer: str = "sgd"  # or "adadelta"
    learning_rate: float = 0.1
    batch_size: int = 16
    epochs: int = 10
    gradient_clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in ("sgd", "adadelta"):
            raise ValueError(f"unknown optimizer: {self.optimizer}")


@dataclass
class UpdateReport:
    loss_before: float
    loss_after: float


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, store):
        if self.lr == 0.0:
            return  # identity, bit-exact
        for _, p in store.items():
            p.data -= self.lr * p.grad

    def state_tensors(self):
        return {}


class Adadelta:
    """Standard Adadelta (accumulated squared grads and updates)."""

    def __init__(self, lr=1.0, rho=0.95, eps=1e-6):
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self._sq_grad = {}
        self._sq_delta = {}

    def step(self, store):
        if self.lr == 0.0:
            return
        for name, p in store.items():
            g = p.grad
            eg = self._sq_grad.setdefault(name, np.zeros_like(p.data))
            ed = self._sq_delta.setdefault(name, np.zeros_like(p.data))
            eg *= self.rho
            eg += (1 - self.rho) * g * g
            delta = -np.sqrt(ed + self.eps) / np.sqrt(eg + self.eps) * g
            ed *= self.rho
            ed += (1 - self.rho) * delta * delta
            p.data += self.lr * delta

    def state_tensors(self):
        out = {}
        for name, v in self._sq_grad.items():
            out[f"opt/adadelta/sq_grad/{name}"] = v
        for name, v in self._sq_delta.items():
            out[f"opt/adadelta/sq_delta/{name}"] = v
        return out

    def load_state(self, tensors):
        for key, value in tensors.items():
            if key.startswith("opt/adadelta/sq_grad/"):
                self._sq_grad[key[len("opt/adadelta/sq_grad/"):]] = np.array(value)
            elif key.startswith("opt/adadelta/sq_delta/"):
                self._sq_delta[key[len("opt/adadelta/sq_delta/"):]] = np.array(value)


def make_optimizer(config):
    if config.optimizer == "sgd":
        return SGD(config.learning_rate)
    return Adadelta(config.learning_rate)


def clip_gradients(store, max_norm):
    """Scale all gradients so the global norm is at most ``max_norm``."""
    if max_norm is None or max_norm <= 0:
        return 1.0
    norm = store.global_grad_norm()
    if norm <= max_norm:
        return 1.0
    factor = max_norm / norm
    for _, p in store.items():
        p.grad *= factor
    return factor


def sample_loss(model, source, target_ids):
    """Per-token mean negative log-probability as a tape scalar."""
    logprob = model.sequence_logprob(source, target_ids)
    return ad.scale(logprob, -1.0 / len(target_ids))


@dataclass
class TrainResult:
    loss_curve: list = field(default_factory=list)  # (epoch, batch, loss)

    def curve_lines(self):
        return "\n".join(f"{e}\t{b}\t{loss:.6f}" for e, b, loss in self.loss_curve)


def train(model, pairs, config, log_fn=None):
    """Train on (source, target_ids) pairs; returns the loss curve.

    ``source`` entries are whatever ``model.encode`` accepts (token ids or
    feature matrices). Deterministic for a fixed seed.
    """
    if not pairs:
        raise ValueError("training corpus is empty")
    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(config)
    result = TrainResult()
    n = len(pairs)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for batch_no, start in enumerate(range(0, n, config.batch_size), 1):
            batch = [pairs[i] for i in order[start : start + config.batch_size]]
            model.params.zero_grads()
            total = 0.0
            for source, target_ids in batch:
                loss = sample_loss(model, source, target_ids)
                total += float(loss.data)
                ad.backward(loss, np.asarray(1.0 / len(batch)))
            batch_loss = total / len(batch)
            clip_gradients(model.params, config.gradient_clip_norm)
            optimizer.step(model.params)
            result.loss_curve.append((epoch, batch_no, batch_loss))
            if log_fn:
                log_fn(f"{epoch}\t{batch_no}\t{batch_loss:.6f}")
    return result, optimizer


def online_update(model, source, target_ids, config):
    """One gradient step on a single validated sample."""
    with ad.no_grad():
        before = float(sample_loss(model, source, target_ids).data)
    if config.learning_rate == 0.0:
        return UpdateReport(loss_before=before, loss_after=before)
    model.params.zero_grads()
    loss = sample_loss(model, source, target_ids)
    ad.backward(loss, np.asarray(1.0))
    clip_gradients(model.params, config.gradient_clip_norm)
    make_optimizer(config).step(model.params)
    with ad.no_grad():
        after = float(sample_loss(model, source, target_ids).data)
    return UpdateReport(loss_before=before, loss_after=after)
