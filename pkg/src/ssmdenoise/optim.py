"""Adam optimizer with milestone learning-rate decay, global-norm
gradient clipping, and a central-difference gradient checker.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Adam:
    """Bias-corrected Adam over a list of parameter Tensors.

    The schedule multiplies the base learning rate by `factor` once for
    every passed milestone epoch (set via :meth:`set_epoch`).
    """

    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8,
                 milestones=(20, 35), factor=0.5):
        self.params = list(params)
        self.base_lr = lr
        self.betas = betas
        self.eps = eps
        self.milestones = tuple(sorted(milestones))
        self.factor = factor
        self.epoch = 0
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def set_epoch(self, epoch: int):
        self.epoch = int(epoch)

    @property
    def lr(self) -> float:
        drops = sum(1 for ms in self.milestones if self.epoch >= ms)
        return self.base_lr * self.factor**drops

    def step(self):
        b1, b2 = self.betas
        self.step_count += 1
        t = self.step_count
        lr = self.lr
        bc1 = 1.0 - b1**t
        bc2 = 1.0 - b2**t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if not np.all(np.isfinite(update)):
                raise ArithmeticError("non-finite Adam update")
            p.data -= update.astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


def grad_check(fn, inputs, eps=1e-5, kink_margin=None) -> float:
    """Max relative error between autodiff and central differences.

    `fn` maps the list of input Tensors to a scalar Tensor; inputs must
    be float64.  `kink_margin` optionally rejects sample points within
    that distance of zero (for kinked activations) by raising ValueError
    so the caller can resample.
    """
    for x in inputs:
        if x.dtype != np.float64:
            raise ValueError("grad_check requires float64 inputs")
        if kink_margin is not None and np.any(np.abs(x.data) < kink_margin):
            raise ValueError("sample point too close to a kink; resample")
    for x in inputs:
        x.zero_grad()
    out = fn(inputs)
    if out.size != 1:
        raise ValueError("fn must return a scalar")
    out.backward()
    worst = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        flat = x.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = fn(inputs).item()
            flat[i] = orig - eps
            lo = fn(inputs).item()
            flat[i] = orig
            numeric = (hi - lo) / (2 * eps)
            denom = max(abs(numeric), abs(analytic.reshape(-1)[i]), 1e-8)
            worst = max(worst, abs(numeric - analytic.reshape(-1)[i]) / denom)
    return worst


def grad_check_sampled(fn, inputs, rng, n_samples=30, eps=1e-5) -> float:
    """Like grad_check but probing a random subset of coordinates."""
    for x in inputs:
        x.zero_grad()
    out = fn(inputs)
    out.backward()
    grads = [x.grad if x.grad is not None else np.zeros_like(x.data) for x in inputs]
    sizes = np.array([x.size for x in inputs])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(n_samples, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat_idx in sorted(int(p) for p in picks):
        which = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        local = flat_idx - offsets[which]
        x = inputs[which]
        flat = x.data.reshape(-1)
        orig = flat[local]
        flat[local] = orig + eps
        hi = fn(inputs).item()
        flat[local] = orig - eps
        lo = fn(inputs).item()
        flat[local] = orig
        numeric = (hi - lo) / (2 * eps)
        analytic = grads[which].reshape(-1)[local]
        denom = max(abs(numeric), abs(analytic), 1e-6)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
