"""MMD-VAE: Gaussian conv encoder, sigmoid decoder, multi-bandwidth RBF MMD
against a standard-normal prior, standard and adversarial training.

Training minimizes  gamma * MMD(q(z) || p(z)) + MSE(x_hat, x),  the
minimization form of the MMD-VAE objective with a unit-variance Gaussian
likelihood. MMD is estimated per step between reparameterized encodings of
the batch and an equal number of fresh prior draws.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import checkpoint as ckpt
from .seeding import derive_seed


def default_bandwidths(latent_dim: int):
    """Squared RBF bandwidths scaled by latent dimension."""
    return [c * latent_dim for c in (0.25, 0.5, 1.0, 2.0, 4.0)]


@dataclass
class VaeConfig:
    latent_dim: int = 32
    mmd_weight: float = None  # None -> calibrated on the first batch
    bandwidths: list = None   # squared bandwidths; None -> default_bandwidths(d)
    epochs: int = 30
    batch_size: int = 128
    lr: float = 1e-3
    base_channels: int = 16
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.latent_dim < 2:
            raise ValueError("latent_dim must be >= 2")
        if self.mmd_weight is not None and self.mmd_weight <= 0:
            raise ValueError("mmd_weight must be > 0 (or None for auto)")
        if self.bandwidths is not None and any(b <= 0 for b in self.bandwidths):
            raise ValueError("bandwidths must be > 0")

    def resolved_bandwidths(self):
        return list(self.bandwidths) if self.bandwidths is not None else default_bandwidths(self.latent_dim)


def _conv_out(size, n=3):
    sizes = [size]
    for _ in range(n):
        sizes.append((sizes[-1] + 2 * 1 - 3) // 2 + 1)  # k=3, s=2, p=1
    return sizes


class Vae(nn.Module):
    """Conv encoder to (mu, logvar); mirrored transpose-conv decoder with a
    sigmoid head so decoded images always land in [0, 1]."""

    def __init__(self, input_shape=(3, 32, 32), latent_dim=32, base_channels=16):
        super().__init__()
        c, h, w = input_shape
        self.input_shape = tuple(input_shape)
        self.latent_dim = latent_dim
        ch = [c, base_channels, 2 * base_channels, 4 * base_channels]
        hs, ws = _conv_out(h), _conv_out(w)

        enc = []
        for i in range(3):
            enc += [nn.Conv2d(ch[i], ch[i + 1], 3, stride=2, padding=1), nn.ReLU()]
        self.enc_conv = nn.Sequential(*enc)
        flat = ch[3] * hs[3] * ws[3]
        self.enc_mu = nn.Linear(flat, latent_dim)
        self.enc_logvar = nn.Linear(flat, latent_dim)
        # start with a tight posterior (sigma ~ e^-2) so the decoder sees the
        # mean code rather than unit noise early in training; with the default
        # init the reparameterized z is noise-dominated and the decoder settles
        # on reconstructing the dataset mean image.
        nn.init.zeros_(self.enc_logvar.weight)
        nn.init.constant_(self.enc_logvar.bias, -4.0)

        self.dec_fc = nn.Linear(latent_dim, flat)
        self._dec_shape = (ch[3], hs[3], ws[3])
        dec = []
        for i in range(3, 0, -1):
            # output_padding chosen so each layer exactly inverts its conv size
            op_h = hs[i - 1] - (2 * hs[i] - 1)
            op_w = ws[i - 1] - (2 * ws[i] - 1)
            dec.append(nn.ConvTranspose2d(ch[i], ch[i - 1], 3, stride=2, padding=1,
                                          output_padding=(op_h, op_w)))
            if i > 1:
                dec.append(nn.ReLU())
        self.dec_conv = nn.Sequential(*dec)
        self.gamma = None  # set by training (config weight or calibration)

    def encode(self, x):
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(f"input shape {tuple(x.shape[1:])} != trained resolution {self.input_shape}")
        h = self.enc_conv(x).flatten(1)
        return self.enc_mu(h), self.enc_logvar(h)

    def decode(self, z):
        if z.shape[-1] != self.latent_dim:
            raise ValueError(f"latent dimension {z.shape[-1]} != {self.latent_dim}")
        h = self.dec_fc(z).reshape(z.shape[0], *self._dec_shape)
        return torch.sigmoid(self.dec_conv(h))

    def reparameterize(self, mu, logvar, noise):
        return mu + torch.exp(0.5 * logvar) * noise


class IdentityVae(nn.Module):
    """Flatten/reshape autoencoder stub: encode is the identity up to shape.

    Used to check that latent-space constructions collapse to their
    input-space counterparts when the VAE does nothing.
    """

    def __init__(self, input_shape=(3, 32, 32)):
        super().__init__()
        self.input_shape = tuple(input_shape)
        self.latent_dim = int(np.prod(input_shape))

    def encode(self, x):
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(f"input shape {tuple(x.shape[1:])} != {self.input_shape}")
        mu = x.flatten(1)
        return mu, torch.full_like(mu, -60.0)  # ~zero variance

    def decode(self, z):
        if z.shape[-1] != self.latent_dim:
            raise ValueError(f"latent dimension {z.shape[-1]} != {self.latent_dim}")
        return z.reshape(z.shape[0], *self.input_shape)

    def reparameterize(self, mu, logvar, noise):
        return mu + torch.exp(0.5 * logvar) * noise


def module_dtype(m, fallback=torch.float32):
    p = next(m.parameters(), None)
    return p.dtype if p is not None else fallback


def encode_mean(vae, x) -> torch.Tensor:
    """Encoder mean head only — no sampling. Accepts numpy or torch batches."""
    if not torch.is_tensor(x):
        x = torch.as_tensor(x, dtype=module_dtype(vae))
    mu, _ = vae.encode(x)
    return mu


def decode_mean(vae, z) -> torch.Tensor:
    """Decoder mean head — deterministic image in [0, 1]."""
    if not torch.is_tensor(z):
        z = torch.as_tensor(z)
    return vae.decode(z)


def _pairwise_sq_dists(a, b):
    # cdist is fine here, but the explicit expansion keeps float64 exactness
    # under control and differentiates cleanly
    a2 = (a * a).sum(1, keepdim=True)
    b2 = (b * b).sum(1, keepdim=True)
    d2 = a2 + b2.T - 2.0 * a @ b.T
    return d2.clamp_min(0)


def _kernel(a, b, bandwidths):
    d2 = _pairwise_sq_dists(a, b)
    k = torch.zeros_like(d2)
    for s2 in bandwidths:
        k = k + torch.exp(-d2 / (2.0 * s2))
    return k


def mmd(x, y, bandwidths=(1.0,), biased=True):
    """MMD^2 estimate between sample sets (rows) under a sum of RBF kernels.

    `bandwidths` are squared kernel widths: k(a,b) = exp(-|a-b|^2 / (2*s2)).
    Biased estimator: mean k(x,x') + mean k(y,y') - 2 mean k(x,y) >= 0.
    """
    if not torch.is_tensor(x):
        x = torch.as_tensor(x, dtype=torch.float64)
    if not torch.is_tensor(y):
        y = torch.as_tensor(y, dtype=torch.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    n, m = x.shape[0], y.shape[0]
    if n < 1 or m < 1:
        raise ValueError("mmd needs nonempty sample sets")
    kxx, kyy, kxy = _kernel(x, x, bandwidths), _kernel(y, y, bandwidths), _kernel(x, y, bandwidths)
    if biased:
        return kxx.mean() + kyy.mean() - 2.0 * kxy.mean()
    if n < 2 or m < 2:
        raise ValueError("unbiased mmd needs >= 2 samples per set")
    sum_xx = (kxx.sum() - kxx.diagonal().sum()) / (n * (n - 1))
    sum_yy = (kyy.sum() - kyy.diagonal().sum()) / (m * (m - 1))
    return sum_xx + sum_yy - 2.0 * kxy.mean()


def vae_loss(vae, batch, cfg: VaeConfig, gamma=None, noise=None, prior_z=None):
    """gamma * MMD(z_samples, prior_draws) + reconstruction MSE.

    `noise`/`prior_z` inject the reparameterization and prior randomness so
    callers can freeze them (adversarial training reuses one draw across
    inner PGD iterates). gamma=None falls back to cfg.mmd_weight, then to
    the VAE's calibrated value.
    """
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    if gamma is None:
        gamma = cfg.mmd_weight if cfg.mmd_weight is not None else getattr(vae, "gamma", None)
    if gamma is None:
        raise ValueError("gamma unresolved: set cfg.mmd_weight or calibrate the VAE first")
    mu, logvar = vae.encode(batch)
    if noise is None:
        noise = torch.randn_like(mu)
    if prior_z is None:
        prior_z = torch.randn_like(mu)
    z = vae.reparameterize(mu, logvar, noise)
    recon = vae.decode(z)
    rec_loss = F.mse_loss(recon, batch)
    if gamma == 0:
        return rec_loss
    return gamma * mmd(z, prior_z, cfg.resolved_bandwidths()) + rec_loss


def _calibrate_gamma(vae, first_batch, cfg, gen):
    """Pick gamma so the MMD term starts within one order of magnitude of
    the reconstruction term; frozen for the rest of training."""
    if cfg.mmd_weight is not None:
        return float(cfg.mmd_weight)
    with torch.no_grad():
        mu, logvar = vae.encode(first_batch)
        noise = torch.randn(mu.shape, generator=gen, dtype=mu.dtype)
        prior = torch.randn(mu.shape, generator=gen, dtype=mu.dtype)
        z = vae.reparameterize(mu, logvar, noise)
        rec = F.mse_loss(vae.decode(z), first_batch).item()
        m = mmd(z, prior, cfg.resolved_bandwidths()).item()
    return float(np.clip(rec / max(m, 1e-8), 1e-3, 1e4))


def _epoch_batches(dataset, cfg, epoch, dtype):
    from .data import batches  # local import to keep module load light

    for xb, _ in batches(dataset, cfg.batch_size, seed=derive_seed(cfg.seed, "vae-data", epoch), shuffle=True):
        yield torch.as_tensor(xb, dtype=dtype)


def _train_vae_impl(dataset, cfg: VaeConfig, budget=None, out_dir=None):
    from .attacks import pgd_on_loss  # deferred: attacks imports models only

    dtype = torch.float64 if cfg.dtype == "float64" else torch.float32
    with torch.random.fork_rng():
        torch.manual_seed(derive_seed(cfg.seed, "vae-init"))
        vae = Vae(dataset.image_shape, cfg.latent_dim, cfg.base_channels)
    vae = vae.to(dtype)
    gen = torch.Generator().manual_seed(derive_seed(cfg.seed, "vae-noise"))
    opt = torch.optim.Adam(vae.parameters(), lr=cfg.lr)

    first = torch.as_tensor(dataset.images[: cfg.batch_size], dtype=dtype)
    vae.gamma = _calibrate_gamma(vae, first, cfg, gen)

    history = []
    for epoch in range(cfg.epochs):
        total, count = 0.0, 0
        for xb in _epoch_batches(dataset, cfg, epoch, dtype):
            noise = torch.randn((xb.shape[0], cfg.latent_dim), generator=gen, dtype=dtype)
            prior = torch.randn((xb.shape[0], cfg.latent_dim), generator=gen, dtype=dtype)
            if budget is not None and budget.epsilon > 0:
                def adv_loss(x_pert):
                    return vae_loss(vae, x_pert, cfg, gamma=vae.gamma, noise=noise, prior_z=prior)

                vae.eval()
                xb = pgd_on_loss(adv_loss, xb, budget)
                vae.train()
            opt.zero_grad()
            loss = vae_loss(vae, xb, cfg, gamma=vae.gamma, noise=noise, prior_z=prior)
            if not torch.isfinite(loss):
                raise RuntimeError(f"VAE training diverged (loss={loss.item()}) at epoch {epoch}")
            loss.backward()
            opt.step()
            total += loss.item() * xb.shape[0]
            count += xb.shape[0]
        history.append(total / count)
    vae.eval()
    vae.history = history
    if out_dir is not None:
        save_vae(os.path.join(out_dir, "vae.ckpt.npz"), vae, cfg, extra={"history": history, "adversarial": budget is not None})
        with open(os.path.join(out_dir, "vae_curve.json"), "w") as f:
            json.dump({"loss": history, "gamma": vae.gamma}, f, indent=2)
    return vae


def train_vae(dataset, cfg: VaeConfig, out_dir=None) -> Vae:
    """Standard MMD-VAE training; deterministic per (cfg, seed)."""
    return _train_vae_impl(dataset, cfg, budget=None, out_dir=out_dir)


def train_vae_adversarial(dataset, cfg: VaeConfig, budget, out_dir=None) -> Vae:
    """Train on PGD-perturbed batches that maximize the VAE's own loss.

    The reparameterization/prior noise is drawn once per step and reused
    across inner PGD iterates, so a zero-epsilon budget reduces exactly to
    plain training.
    """
    return _train_vae_impl(dataset, cfg, budget=budget, out_dir=out_dir)


def save_vae(path, vae: Vae, cfg: VaeConfig, extra=None):
    meta = {"gamma": vae.gamma, **(extra or {})}
    config = {
        "input_shape": list(vae.input_shape),
        "latent_dim": vae.latent_dim,
        "base_channels": cfg.base_channels,
        "vae_config": {k: v for k, v in vars(cfg).items()},
    }
    return ckpt.save_checkpoint(path, "vae", config, vae, meta)


def load_vae(path) -> Vae:
    header, _ = ckpt.load_checkpoint(path)
    cfgd = header["config"]
    vae = Vae(tuple(cfgd["input_shape"]), cfgd["latent_dim"], cfgd["base_channels"])
    dtype = cfgd.get("vae_config", {}).get("dtype", "float32")
    if dtype == "float64":
        vae = vae.double()
    ckpt.load_checkpoint(path, vae)
    vae.gamma = header["metadata"].get("gamma")
    vae.eval()
    return vae
