"""Mixture noise synthesis and a low-rank synthetic clean-cube generator.

Cubes are (bands, rows, cols) float arrays in [0, 1].  The degradation
composes, in order: per-band Gaussian noise (sigma drawn per band on the
0-255 scale and divided by 255), salt-and-pepper impulse noise on a
third of the bands, additive column stripes on a third of the bands,
and zeroed dead columns on a third of the bands, followed by clipping
to [0, 1].  Everything is a pure function of (input, spec, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .rng import Rng

BAND_FRACTION = 3  # "1/3 of the bands", floor rounding


@dataclass
class NoiseSpec:
    sigma_max: float = 95.0  # 0-255 scale; per-band sigma ~ U[0, sigma_max]
    gaussian: bool = True
    impulse: bool = True
    impulse_range: tuple = (0.10, 0.70)  # fraction of pixels replaced, per band
    stripes: bool = True
    stripe_column_range: tuple = (0.05, 0.15)  # fraction of whole columns
    stripe_amplitude: float = 0.25  # offsets ~ U[-amp, amp]
    deadlines: bool = True
    deadline_column_range: tuple = (0.05, 0.15)
    seed: int = 0

    def __post_init__(self):
        for lo, hi in (self.impulse_range, self.stripe_column_range, self.deadline_column_range):
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError("fractions must lie in [0, 1]")

    @staticmethod
    def gaussian_only(sigma_max, seed=0):
        return NoiseSpec(sigma_max=sigma_max, impulse=False, stripes=False,
                         deadlines=False, seed=seed)

    @staticmethod
    def disabled(seed=0):
        return NoiseSpec(sigma_max=0.0, gaussian=False, impulse=False,
                         stripes=False, deadlines=False, seed=seed)


@dataclass
class DegradeReport:
    """Realized draw of one degradation, for logging and statistics."""

    sigma_per_band: np.ndarray = None  # 0-255 scale
    impulse_bands: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    impulse_fractions: np.ndarray = field(default_factory=lambda: np.array([]))
    stripe_bands: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    stripe_columns: dict = field(default_factory=dict)  # band -> column indices
    deadline_bands: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    deadline_columns: dict = field(default_factory=dict)


def _affected_bands(rng: Rng, n_bands: int) -> np.ndarray:
    k = n_bands // BAND_FRACTION
    return np.sort(rng.choice(n_bands, size=k, replace=False))


def _column_subset(rng: Rng, n_cols: int, frac_range) -> np.ndarray:
    q = rng.uniform(*frac_range)
    k = int(round(q * n_cols))
    return np.sort(rng.choice(n_cols, size=k, replace=False))


def degrade(x: np.ndarray, spec: NoiseSpec, seed=None, clip=True):
    """Apply the mixture degradation; returns (noisy, DegradeReport)."""
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("empty cube")
    nb, nh, nw = x.shape
    rng = Rng(spec.seed if seed is None else seed)
    y = x.astype(np.float64).copy()
    report = DegradeReport()

    g = rng.spawn(1)
    if spec.gaussian:
        sigma = g.uniform(0.0, spec.sigma_max, size=nb)
        report.sigma_per_band = sigma
        y += (sigma / 255.0)[:, None, None] * g.normal(size=(nb, nh, nw))

    g = rng.spawn(2)
    if spec.impulse:
        bands = _affected_bands(g, nb)
        fracs = g.uniform(*spec.impulse_range, size=bands.size)
        report.impulse_bands, report.impulse_fractions = bands, fracs
        for b, p in zip(bands, fracs):
            n_pix = int(round(p * nh * nw))
            flat = g.choice(nh * nw, size=n_pix, replace=False)
            vals = (g.uniform(size=n_pix) < 0.5).astype(np.float64)  # 0 or 1 equiprobably
            plane = y[b].reshape(-1)
            plane[flat] = vals

    g = rng.spawn(3)
    if spec.stripes:
        bands = _affected_bands(g, nb)
        report.stripe_bands = bands
        for b in bands:
            cols = _column_subset(g, nw, spec.stripe_column_range)
            report.stripe_columns[int(b)] = cols
            offsets = g.uniform(-spec.stripe_amplitude, spec.stripe_amplitude, size=cols.size)
            y[b][:, cols] += offsets[None, :]

    g = rng.spawn(4)
    if spec.deadlines:
        bands = _affected_bands(g, nb)
        report.deadline_bands = bands
        for b in bands:
            cols = _column_subset(g, nw, spec.deadline_column_range)
            report.deadline_columns[int(b)] = cols
            y[b][:, cols] = 0.0

    if clip:
        np.clip(y, 0.0, 1.0, out=y)
    return y.astype(x.dtype if x.dtype in (np.float32, np.float64) else np.float64), report


def synth_clean_cube(bands: int, h: int, w: int, rank: int, seed: int) -> np.ndarray:
    """Low-rank smooth cube: sum of r (abundance map x spectrum) terms.

    Spectra are cumulative-sum-smoothed noise mapped into [0.05, 0.95];
    abundance maps are softmax-normalized low-frequency random fields, so
    every voxel is a convex combination of spectrum values and the
    band-unfolded matrix has rank at most r.
    """
    if not 1 <= rank <= min(bands, h * w):
        raise ValueError(f"rank must be in [1, min(bands, h*w)], got {rank}")
    rng = Rng(seed)
    spectra = np.empty((rank, bands))
    for j in range(rank):
        s = np.cumsum(rng.normal(size=bands))
        span = s.max() - s.min()
        s = (s - s.min()) / (span if span > 0 else 1.0)
        spectra[j] = 0.05 + 0.90 * s
    fields = np.empty((rank, h, w))
    sigma = max(min(h, w) / 6.0, 1.0)
    for j in range(rank):
        fields[j] = gaussian_filter(rng.normal(size=(h, w)), sigma=sigma, mode="reflect")
    fields *= 3.0 / max(fields.std(), 1e-12)
    e = np.exp(fields - fields.max(axis=0, keepdims=True))
    abundance = e / e.sum(axis=0, keepdims=True)  # (r, h, w), sums to 1
    cube = np.einsum("jb,jhw->bhw", spectra, abundance)
    return cube
