"""Synthetic common-corruption generator.

Ten distortion kinds at five severity levels each, generated procedurally
(no external texture assets). Severity tables are module-level constants;
callers can serialize them alongside experiment configs.
"""

import numpy as np
from dataclasses import dataclass
from scipy.fft import dctn, idctn
from scipy.ndimage import convolve, gaussian_filter

from .seeding import derive_rng

CORRUPTION_KINDS = (
    "gaussian_noise",
    "shot_noise",
    "impulse_noise",
    "gaussian_blur",
    "motion_blur",
    "jpeg_like_blocking",
    "contrast",
    "brightness",
    "pixelate",
    "frost_like_overlay",
)

# severity 1..5 parameter tables (implementer-chosen; noise kinds must give
# strictly increasing mean distortion)
SEVERITY_TABLES = {
    "gaussian_noise": [0.04, 0.06, 0.08, 0.09, 0.10],        # sigma
    "shot_noise": [500.0, 250.0, 100.0, 75.0, 50.0],          # photons at full scale
    "impulse_noise": [0.01, 0.02, 0.03, 0.05, 0.07],          # salt/pepper fraction
    "gaussian_blur": [0.4, 0.6, 0.8, 1.1, 1.5],               # sigma, pixels
    "motion_blur": [3, 5, 7, 9, 12],                          # kernel length, pixels
    "jpeg_like_blocking": [6, 5, 4, 3, 2],                    # DCT coeffs kept per axis
    "contrast": [0.75, 0.6, 0.45, 0.3, 0.2],                  # contrast multiplier
    "brightness": [0.06, 0.12, 0.18, 0.24, 0.30],             # additive shift
    "pixelate": [2, 3, 4, 5, 6],                              # downsample factor
    "frost_like_overlay": [(0.95, 0.15), (0.90, 0.22), (0.85, 0.30), (0.80, 0.38), (0.75, 0.45)],
}


@dataclass
class CorruptionSpec:
    kind: str
    severity: int

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValueError(f"unknown corruption kind: {self.kind!r}")
        if not 1 <= self.severity <= 5:
            raise ValueError(f"severity must be in [1, 5], got {self.severity}")


def _gaussian_noise(x, sigma, rng):
    return x + sigma * rng.standard_normal(x.shape).astype(np.float32)


def _shot_noise(x, photons, rng):
    return rng.poisson(x * photons).astype(np.float32) / photons


def _impulse_noise(x, frac, rng):
    out = x.copy()
    mask = rng.random(x.shape) < frac
    salt = rng.random(x.shape) < 0.5
    out[mask & salt] = 1.0
    out[mask & ~salt] = 0.0
    return out


def _gaussian_blur(x, sigma, rng):
    return gaussian_filter(x, sigma=(0, sigma, sigma))


def _motion_blur(x, length, rng):
    # line kernel at a seeded angle, accumulated onto a length x length grid
    angle = rng.uniform(0, np.pi)
    k = np.zeros((length, length), dtype=np.float64)
    t = np.linspace(-(length - 1) / 2, (length - 1) / 2, 4 * length)
    rows = np.clip(np.round(t * np.sin(angle) + (length - 1) / 2).astype(int), 0, length - 1)
    cols = np.clip(np.round(t * np.cos(angle) + (length - 1) / 2).astype(int), 0, length - 1)
    np.add.at(k, (rows, cols), 1.0)
    k /= k.sum()
    return np.stack([convolve(ch, k, mode="nearest") for ch in x]).astype(np.float32)


def _jpeg_like_blocking(x, keep, rng, block=8):
    c, h, w = x.shape
    ph, pw = -h % block, -w % block
    padded = np.pad(x, ((0, 0), (0, ph), (0, pw)), mode="edge")
    hh, ww = padded.shape[1] // block, padded.shape[2] // block
    blocks = padded.reshape(c, hh, block, ww, block).transpose(0, 1, 3, 2, 4)
    coef = dctn(blocks, axes=(-2, -1), norm="ortho")
    coef[..., keep:, :] = 0.0
    coef[..., :, keep:] = 0.0
    rec = idctn(coef, axes=(-2, -1), norm="ortho")
    rec = rec.transpose(0, 1, 3, 2, 4).reshape(c, hh * block, ww * block)
    return rec[:, :h, :w].astype(np.float32)


def _contrast(x, mult, rng):
    mean = x.mean(axis=(1, 2), keepdims=True)
    return (x - mean) * mult + mean


def _brightness(x, shift, rng):
    return x + shift


def _pixelate(x, factor, rng):
    h, w = x.shape[1:]
    small = x[:, ::factor, ::factor]
    big = np.repeat(np.repeat(small, factor, axis=1), factor, axis=2)
    return big[:, :h, :w]


def _frost_like_overlay(x, params, rng):
    keep, amount = params
    h, w = x.shape[1:]
    tex = np.abs(rng.standard_normal((h, w)))
    tex = gaussian_filter(tex, sigma=1.0) ** 1.5
    tex = (tex - tex.min()) / max(tex.max() - tex.min(), 1e-8)
    return keep * x + amount * tex[None].astype(np.float32)


_APPLY = {
    "gaussian_noise": _gaussian_noise,
    "shot_noise": _shot_noise,
    "impulse_noise": _impulse_noise,
    "gaussian_blur": _gaussian_blur,
    "motion_blur": _motion_blur,
    "jpeg_like_blocking": _jpeg_like_blocking,
    "contrast": _contrast,
    "brightness": _brightness,
    "pixelate": _pixelate,
    "frost_like_overlay": _frost_like_overlay,
}


def corrupt(x: np.ndarray, spec: CorruptionSpec, seed: int, param=None) -> np.ndarray:
    """Apply one corruption to a (C, H, W) image in [0, 1].

    Deterministic for fixed (spec, seed). `param` overrides the severity
    table entry (e.g. sigma=0 for a no-op gaussian_noise).
    """
    if spec.kind not in _APPLY:
        raise ValueError(f"unknown corruption kind: {spec.kind!r}")
    x = np.asarray(x, dtype=np.float32)
    if param is None:
        param = SEVERITY_TABLES[spec.kind][spec.severity - 1]
    rng = derive_rng(seed, "corrupt", spec.kind, spec.severity)
    out = _APPLY[spec.kind](x, param, rng)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def corrupt_batch(images: np.ndarray, spec: CorruptionSpec, seed: int) -> np.ndarray:
    """Corrupt each image of an (N, C, H, W) batch with per-example seeds."""
    return np.stack([corrupt(img, spec, seed * 100003 + i) for i, img in enumerate(images)])
