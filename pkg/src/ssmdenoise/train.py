"""Training and evaluation loops.

A training run samples clean patches from a pool of cubes (with random
flip/crop augmentation), degrades each patch with a freshly derived
seed, and minimizes the batch-mean squared Frobenius distance between
the prediction and the clean patch with Adam under the milestone
learning-rate schedule.  All sampling flows through one sequential
generator keyed by the run seed, so two runs with the same config are
bit-identical and ablation pairs consume identical patch streams.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .metrics import MetricsReport, evaluate_pair
from .model import (ModelConfig, ModelWeights, denoise_cube, forward,
                    init_model, parameter_count, parameters, validate_input_shape)
from .noise import NoiseSpec, degrade
from .optim import Adam, clip_grad_norm
from .rng import Rng
from .tensor import NonFiniteError, Tensor


class TrainingDiverged(ArithmeticError):
    def __init__(self, step, msg):
        super().__init__(f"training diverged at step {step}: {msg}")
        self.step = step


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    lr: float = 3e-4
    milestones: tuple = (20, 35)
    lr_factor: float = 0.5
    epochs: int = 45
    steps_per_epoch: int = 100
    batch_size: int = 14
    patch: tuple = (31, 64, 64)  # (bands, rows, cols)
    seed: int = 0
    grad_clip: float = 5.0
    dtype: str = "f32"  # f64 for oracle/grad-check runs

    def __post_init__(self):
        validate_input_shape(self.model, self.patch)

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "f64" else np.float32


@dataclass
class RunLog:
    losses: list = field(default_factory=list)  # per-step batch loss
    epoch_lrs: list = field(default_factory=list)
    val_reports: list = field(default_factory=list)  # per-epoch MetricsReport
    batch_hashes: list = field(default_factory=list)  # first 10 batches
    parameter_count: int = 0
    wall_time: float = 0.0

    def loss_csv(self) -> str:
        lines = ["step,loss"]
        lines += [f"{i},{v:.8g}" for i, v in enumerate(self.losses)]
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        out = [f"parameters: {self.parameter_count}",
               f"steps: {len(self.losses)}",
               f"wall_time_s: {self.wall_time:.1f}"]
        if self.losses:
            out.append(f"final_loss: {self.losses[-1]:.6g}")
        for i, rep in enumerate(self.val_reports, 1):
            out.append(f"val_epoch_{i}: {rep}")
        return "\n".join(out) + "\n"


def sample_patch(cube: np.ndarray, patch, rng: Rng):
    """Random crop plus random row/col flips."""
    pb, ph, pw = patch
    nb, nh, nw = cube.shape
    if nb < pb or nh < ph or nw < pw:
        raise ValueError(f"cube {cube.shape} smaller than patch {patch}")
    b0 = int(rng.integers(0, nb - pb + 1))
    h0 = int(rng.integers(0, nh - ph + 1))
    w0 = int(rng.integers(0, nw - pw + 1))
    out = cube[b0 : b0 + pb, h0 : h0 + ph, w0 : w0 + pw]
    if rng.uniform() < 0.5:
        out = out[:, ::-1, :]
    if rng.uniform() < 0.5:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


def _make_batch(cubes, cfg: TrainConfig, data_rng: Rng):
    clean, noisy = [], []
    for _ in range(cfg.batch_size):
        cube = cubes[int(data_rng.integers(0, len(cubes)))]
        patch = sample_patch(cube, cfg.patch, data_rng)
        noise_seed = int(data_rng.integers(0, 2**63))
        deg, _ = degrade(patch, cfg.noise, seed=noise_seed)
        clean.append(patch)
        noisy.append(deg)
    dt = cfg.np_dtype
    return (np.stack(clean).astype(dt)[:, None],
            np.stack(noisy).astype(dt)[:, None])


def frobenius_loss(pred: Tensor, clean: Tensor) -> Tensor:
    """Batch mean of the squared Frobenius norm of the residual."""
    diff = pred - clean
    return diff.square().sum(axis=(1, 2, 3, 4)).mean()


def train(cfg: TrainConfig, cubes, val_pair=None, weights: ModelWeights = None):
    """Run the full loop; returns (ModelWeights, RunLog).

    `cubes` is a list of clean (bands, rows, cols) arrays; `val_pair` an
    optional (clean, noisy) pair scored after every epoch.
    """
    t0 = time.time()
    mw = weights if weights is not None else init_model(cfg.model, cfg.seed, dtype=cfg.np_dtype)
    params = parameters(mw)
    opt = Adam(params, lr=cfg.lr, milestones=cfg.milestones, factor=cfg.lr_factor)
    log = RunLog(parameter_count=parameter_count(mw))
    data_rng = Rng(cfg.seed).spawn(0xDA7A)

    step = 0
    for epoch in range(cfg.epochs):
        opt.set_epoch(epoch)
        log.epoch_lrs.append(opt.lr)
        for _ in range(cfg.steps_per_epoch):
            clean_np, noisy_np = _make_batch(cubes, cfg, data_rng)
            if step < 10:
                h = hashlib.sha256(clean_np.tobytes() + noisy_np.tobytes()).hexdigest()
                log.batch_hashes.append(h)
            try:
                pred = forward(mw, Tensor(noisy_np))
                loss = frobenius_loss(pred, Tensor(clean_np))
                loss_val = loss.item()
                if not np.isfinite(loss_val):
                    raise NonFiniteError("non-finite loss")
                opt.zero_grad()
                loss.backward(seed=np.ones((), dtype=clean_np.dtype))
                clip_grad_norm(params, cfg.grad_clip)
                opt.step()
            except (NonFiniteError, ArithmeticError) as exc:
                raise TrainingDiverged(step, str(exc)) from exc
            log.losses.append(loss_val)
            step += 1
        if val_pair is not None:
            clean, noisy = val_pair
            log.val_reports.append(evaluate_pair(clean, denoise_cube(mw, noisy)))
    log.wall_time = time.time() - t0
    return mw, log


def evaluate(mw: ModelWeights, pairs):
    """Denoise each (clean, noisy) pair; returns (reports, aggregate)."""
    reports = []
    for clean, noisy in pairs:
        if clean.shape != noisy.shape:
            raise ValueError(f"pair shape mismatch: {clean.shape} vs {noisy.shape}")
        reports.append(evaluate_pair(clean, denoise_cube(mw, noisy)))
    agg = MetricsReport(
        psnr=float(np.mean([r.psnr for r in reports])),
        ssim=float(np.mean([r.ssim for r in reports])),
        sam=float(np.mean([r.sam for r in reports])),
    )
    return reports, agg


ABLATION_AXES = ("scan-scheme", "bidirectional", "residual", "width")


def ablation_variants(axis: str, cfg: TrainConfig):
    """Matched config pairs (or the width series) for one ablation axis."""
    if axis == "scan-scheme":
        sweep = replace(cfg, model=replace(cfg.model, scan_schemes=("SWEEP",) * 6))
        return [("sscs", cfg), ("sweep", sweep)]
    if axis == "bidirectional":
        uni = replace(cfg, model=replace(cfg.model, bidirectional=False))
        return [("bidirectional", cfg), ("unidirectional", uni)]
    if axis == "residual":
        nores = replace(cfg, model=replace(cfg.model, res_blocks=0))
        return [("residual", cfg), ("no-residual", nores)]
    if axis == "width":
        out = []
        for c in (8, 12, 20, 24, 32):
            out.append((f"width-{c}", replace(cfg, model=replace(cfg.model, base_channels=c, channels=None))))
        return out
    raise ValueError(f"unknown ablation axis '{axis}'; expected one of {ABLATION_AXES}")


def ablation_run(axis: str, cfg: TrainConfig, cubes, val_pair=None):
    """Train every variant on identical patch streams; returns labelled runs."""
    runs = []
    for label, variant in ablation_variants(axis, cfg):
        mw, log = train(variant, cubes, val_pair=val_pair)
        runs.append((label, mw, log))
    hashes = {tuple(log.batch_hashes) for _, _, log in runs}
    if len(hashes) != 1:
        raise AssertionError("ablation variants consumed different patch streams")
    return runs


def ablation_table(runs) -> str:
    lines = ["label,parameters,final_loss,val_psnr,val_ssim,val_sam"]
    for label, mw, log in runs:
        rep = log.val_reports[-1] if log.val_reports else None
        lines.append(",".join([
            label,
            str(log.parameter_count),
            f"{log.losses[-1]:.6g}" if log.losses else "",
            f"{rep.psnr:.3f}" if rep else "",
            f"{rep.ssim:.5f}" if rep else "",
            f"{rep.sam:.5f}" if rep else "",
        ]))
    return "\n".join(lines) + "\n"
