"""Vicinal sample constructors: Mixup, Manifold Mixup, VarMixup, VarERM.

Pair-level functions take LabeledExample-like (image, label) pairs and
return VicinalSample records; the *_batch functions are what trainers call
and operate on torch tensors. Input-space and latent-space mixing share the
same convex-combination expression, so a do-nothing autoencoder makes the
latent variants collapse onto their input-space counterparts exactly.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .seeding import derive_rng
from .vae import encode_mean, module_dtype


@dataclass
class MixupConfig:
    eta: float = 1.0
    source: str = "input_space"  # input_space | latent_space | hidden_space
    force_lambda: float = None   # pin lambda (reduction experiments); None = sample

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.source not in ("input_space", "latent_space", "hidden_space"):
            raise ValueError(f"unknown mixup source: {self.source!r}")
        if self.force_lambda is not None and not 0 <= self.force_lambda <= 1:
            raise ValueError("force_lambda must be in [0, 1]")


@dataclass
class VicinalSample:
    x_mix: np.ndarray
    y_mix: np.ndarray
    lam: float


def sample_lambda(cfg: MixupConfig, seed) -> float:
    """One draw from Beta(eta, eta) (or the pinned value)."""
    if cfg.force_lambda is not None:
        return float(cfg.force_lambda)
    return float(derive_rng(seed, "lambda").beta(cfg.eta, cfg.eta))


def sample_lambda_batch(cfg: MixupConfig, n: int, seed) -> np.ndarray:
    """Per-example lambda vector for one batch."""
    if cfg.force_lambda is not None:
        return np.full(n, cfg.force_lambda, dtype=np.float64)
    return derive_rng(seed, "lambda").beta(cfg.eta, cfg.eta, size=n)


def _one_hot_row(label, num_classes):
    row = np.zeros(num_classes, dtype=np.float32)
    row[int(label)] = 1.0
    return row


def _as_pair(ex):
    if hasattr(ex, "image"):
        return np.asarray(ex.image, dtype=np.float32), int(ex.label)
    img, lab = ex
    return np.asarray(img, dtype=np.float32), int(lab)


def mixup_pair(a, b, lam, num_classes=10) -> VicinalSample:
    """x' = lam*x_a + (1-lam)*x_b, y' = lam*y_a + (1-lam)*y_b."""
    xa, ya = _as_pair(a)
    xb, yb = _as_pair(b)
    if xa.shape != xb.shape:
        raise ValueError(f"shape mismatch: {xa.shape} vs {xb.shape}")
    if not 0 <= lam <= 1:
        raise ValueError("lambda must be in [0, 1]")
    lam = float(lam)
    x = np.float32(lam) * xa + np.float32(1.0 - lam) * xb
    y = np.float32(lam) * _one_hot_row(ya, num_classes) + np.float32(1.0 - lam) * _one_hot_row(yb, num_classes)
    return VicinalSample(x, y, lam)


def varmixup_pair(a, b, lam, vae, num_classes=10) -> VicinalSample:
    """Mix encoder means, decode the mixture: x' = dec(lam*enc(x_a) + (1-lam)*enc(x_b))."""
    xa, ya = _as_pair(a)
    xb, yb = _as_pair(b)
    if xa.shape != xb.shape:
        raise ValueError(f"shape mismatch: {xa.shape} vs {xb.shape}")
    if not 0 <= lam <= 1:
        raise ValueError("lambda must be in [0, 1]")
    lam = float(lam)
    dtype = module_dtype(vae)
    with torch.no_grad():
        mu = encode_mean(vae, torch.as_tensor(np.stack([xa, xb]), dtype=dtype))
        z = torch.tensor(lam, dtype=dtype) * mu[0] + torch.tensor(1.0 - lam, dtype=dtype) * mu[1]
        x = vae.decode(z[None])[0].cpu().numpy()
    y = np.float32(lam) * _one_hot_row(ya, num_classes) + np.float32(1.0 - lam) * _one_hot_row(yb, num_classes)
    return VicinalSample(x.astype(np.float32), y, lam)


def varerm_sample(a, vae, num_classes=10) -> VicinalSample:
    """Reconstruction sample: (dec(enc(x_a)), one_hot(y_a), lam=1)."""
    xa, ya = _as_pair(a)
    dtype = module_dtype(vae)
    with torch.no_grad():
        mu = encode_mean(vae, torch.as_tensor(xa[None], dtype=dtype))
        x = vae.decode(mu)[0].cpu().numpy()
    return VicinalSample(x.astype(np.float32), _one_hot_row(ya, num_classes), 1.0)


def _bc(lam, like):
    """Broadcast a per-example lambda vector against a batch tensor."""
    return lam.reshape(-1, *([1] * (like.ndim - 1)))


def mixup_batch(x, y_onehot, lam, perm):
    """Batchwise mixup against a permutation of the same batch.

    x: (N, ...) tensor; y_onehot: (N, K); lam: (N,) tensor; perm: (N,) index.
    """
    lam = lam.to(x.dtype)
    lb = _bc(lam, x)
    x_mix = lb * x + (1.0 - lb) * x[perm]
    y_mix = lam[:, None] * y_onehot + (1.0 - lam[:, None]) * y_onehot[perm]
    return x_mix, y_mix


def varmixup_batch(x, y_onehot, lam, perm, vae):
    """Batchwise VarMixup: mix encoder means, decode, mix labels."""
    mu, _ = vae.encode(x)
    lam = lam.to(mu.dtype)
    z = lam[:, None] * mu + (1.0 - lam[:, None]) * mu[perm]
    x_mix = vae.decode(z)
    y_mix = lam[:, None] * y_onehot + (1.0 - lam[:, None]) * y_onehot[perm]
    return x_mix, y_mix


def varerm_batch(x, vae):
    """Deterministic reconstruction of every image in the batch."""
    mu, _ = vae.encode(x)
    return vae.decode(mu)


def manifold_mixup_batch(model, batch_a, batch_b, lam, k):
    """Forward to layer k, convex-combine hidden states, forward the rest.

    batch_a/batch_b: (x, y_onehot) pairs; lam: (N,) tensor; returns
    (logits, mixed labels). k=0 mixes the inputs themselves.
    """
    xa, ya = batch_a
    xb, yb = batch_b
    ha = model.hidden(xa, k)
    hb = model.hidden(xb, k)
    lb = _bc(lam, ha)
    h = lb * ha + (1.0 - lb) * hb
    logits = model.forward_from(h, k)
    y_mix = lam[:, None] * ya + (1.0 - lam[:, None]) * yb
    return logits, y_mix
