"""Risk-minimization trainers: ERM, Mixup, Manifold Mixup, VarERM,
VarMixup, AT, IAT — plus empirical/adversarial risk estimation.

Every source of randomness lives in its own derived stream (data order,
lambda draws, pairing permutations, layer choice), so trainers that ignore
a stream leave the others untouched. That is what makes the reduction
relations (mixup at lambda=1 vs ERM, AT at eps=0 vs ERM, latent variants
under a do-nothing autoencoder vs their input-space twins) hold as exact
parameter-trajectory equalities rather than approximate ones.
"""

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import checkpoint as ckpt
from .attacks import AT_TRAIN_BUDGET, AttackBudget, pgd
from .data import batches, one_hot
from .models import cross_entropy
from .seeding import derive_rng, derive_seed
from .vae import load_vae
from .vicinal import (MixupConfig, manifold_mixup_batch, mixup_batch,
                      sample_lambda_batch, varerm_batch, varmixup_batch)

TRAINERS = ("erm", "mixup", "manifold_mixup", "varerm", "varmixup", "at", "iat")

# relative epoch budgets from the evaluation protocol; scaled by epoch_scale
BASE_EPOCHS = {"erm": 100, "mixup": 150, "manifold_mixup": 150,
               "varerm": 150, "varmixup": 150, "at": 250, "iat": 350}


@dataclass
class TrainConfig:
    trainer: str = "erm"
    epochs: int = 20
    batch_size: int = 128
    lr: float = 1e-3
    mixup: MixupConfig = field(default_factory=MixupConfig)
    attack: AttackBudget = None
    vae_checkpoint: str = None
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.trainer not in TRAINERS:
            raise ValueError(f"unknown trainer: {self.trainer!r} (choose from {TRAINERS})")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class RiskReport:
    empirical_risk: float
    adversarial_empirical_risk: float
    curves: dict = None


def _resolve_vae(cfg: TrainConfig, vae):
    if vae is not None:
        return vae
    if cfg.vae_checkpoint:
        return load_vae(cfg.vae_checkpoint)
    raise ValueError(f"trainer {cfg.trainer!r} needs a VAE (pass one or set vae_checkpoint)")


def _mix_draws(cfg, n, epoch, bi, tag=""):
    lam = sample_lambda_batch(cfg.mixup, n, derive_seed(cfg.seed, "mixup" + tag, epoch, bi))
    perm = derive_rng(cfg.seed, "perm" + tag, epoch, bi).permutation(n)
    return lam, perm


def train(dataset, model, cfg: TrainConfig, vae=None, out_dir=None):
    """Run one trainer over the dataset; returns (model, run record).

    Deterministic per (cfg, seed) in single-threaded mode. Persists a
    checkpoint plus run record JSON when out_dir is given.
    """
    dtype = torch.float64 if cfg.dtype == "float64" else torch.float32
    model = model.to(dtype)
    if cfg.trainer in ("varerm", "varmixup"):
        vae = _resolve_vae(cfg, vae)
        vae = vae.to(dtype) if any(True for _ in vae.parameters()) else vae
        vae.eval()
    if cfg.trainer in ("at", "iat") and cfg.attack is None:
        cfg.attack = AT_TRAIN_BUDGET

    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    num_classes = dataset.num_classes
    history = {"loss": [], "accuracy": []}
    t0 = time.time()

    for epoch in range(cfg.epochs):
        model.train()
        tot_loss, tot_correct, tot_n = 0.0, 0, 0
        data_stream = batches(dataset, cfg.batch_size,
                              seed=derive_seed(cfg.seed, "data", epoch), shuffle=True)
        for bi, (xb_np, yb_np) in enumerate(data_stream):
            xb = torch.as_tensor(xb_np, dtype=dtype)
            yb = torch.as_tensor(yb_np)
            Y = torch.as_tensor(one_hot(yb_np, num_classes), dtype=dtype)
            n = xb.shape[0]

            if cfg.trainer == "erm":
                logits = model(xb)
                loss = cross_entropy(logits, Y)
            elif cfg.trainer == "mixup":
                lam, perm = _mix_draws(cfg, n, epoch, bi)
                lam_t = torch.as_tensor(lam, dtype=dtype)
                x_mix, y_mix = mixup_batch(xb, Y, lam_t, torch.as_tensor(perm))
                logits = model(x_mix)
                loss = cross_entropy(logits, y_mix)
            elif cfg.trainer == "manifold_mixup":
                lam, perm = _mix_draws(cfg, n, epoch, bi)
                k = int(derive_rng(cfg.seed, "mmlayer", epoch, bi).integers(0, model.num_hidden + 1))
                lam_t = torch.as_tensor(lam, dtype=dtype)
                perm_t = torch.as_tensor(perm)
                logits, y_mix = manifold_mixup_batch(model, (xb, Y), (xb[perm_t], Y[perm_t]), lam_t, k)
                loss = cross_entropy(logits, y_mix)
            elif cfg.trainer == "varerm":
                with torch.no_grad():
                    x_rec = varerm_batch(xb, vae)
                logits = model(x_rec)
                loss = cross_entropy(logits, Y)
            elif cfg.trainer == "varmixup":
                lam, perm = _mix_draws(cfg, n, epoch, bi)
                lam_t = torch.as_tensor(lam, dtype=dtype)
                with torch.no_grad():
                    x_mix, y_mix = varmixup_batch(xb, Y, lam_t, torch.as_tensor(perm), vae)
                logits = model(x_mix)
                loss = cross_entropy(logits, y_mix)
            elif cfg.trainer == "at":
                loss, logits = at_step(model, (xb, yb), cfg.attack, return_logits=True)
            else:  # iat
                loss, logits = iat_step(model, (xb, yb), cfg.attack, cfg.mixup,
                                        seed=derive_seed(cfg.seed, "iat", epoch, bi),
                                        return_logits=True)

            if not torch.isfinite(loss):
                raise RuntimeError(f"training diverged (loss={loss.item()}) at epoch {epoch}, batch {bi}")
            opt.zero_grad()
            loss.backward()
            opt.step()

            tot_loss += loss.item() * n
            with torch.no_grad():
                tot_correct += int((logits.argmax(dim=1) == yb).sum())
            tot_n += n
        history["loss"].append(tot_loss / tot_n)
        history["accuracy"].append(tot_correct / tot_n)

    model.eval()
    record = {
        "trainer": cfg.trainer,
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "lr": cfg.lr,
        "dtype": cfg.dtype,
        "history": history,
        "wall_clock_sec": time.time() - t0,
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, f"model_{cfg.trainer}.ckpt.npz")
        mc = getattr(model, "config", None)
        ckpt.save_checkpoint(path, "model",
                             {"model": vars(mc) if mc else {}, "train": _cfg_dict(cfg)},
                             model, {"trainer": cfg.trainer, "seed": cfg.seed,
                                     "epochs": cfg.epochs, "final_loss": history["loss"][-1]})
        record["checkpoint"] = path
        with open(os.path.join(out_dir, f"run_{cfg.trainer}.json"), "w") as f:
            json.dump(record, f, indent=2)
    return model, record


def _cfg_dict(cfg: TrainConfig):
    d = dict(vars(cfg))
    d["mixup"] = vars(cfg.mixup)
    d["attack"] = vars(cfg.attack) if cfg.attack else None
    return d


def at_step(model, batch, budget: AttackBudget, return_logits=False):
    """Adversarial-training step loss: cross-entropy on the PGD inner max."""
    xb, yb = batch
    Y = torch.as_tensor(one_hot(np.asarray(yb), _num_classes(model)), dtype=xb.dtype)
    x_adv = pgd(model, xb, yb, budget)
    logits = model(x_adv)
    loss = cross_entropy(logits, Y)
    return (loss, logits) if return_logits else loss


def iat_step(model, batch, budget: AttackBudget, mixup_cfg: MixupConfig, seed=0, return_logits=False):
    """Interpolated adversarial training: mean of a mixup loss on the clean
    batch and a mixup loss on its PGD-perturbed version (two-half scheme)."""
    xb, yb = batch
    n = xb.shape[0]
    K = _num_classes(model)
    Y = torch.as_tensor(one_hot(np.asarray(yb), K), dtype=xb.dtype)

    lam1 = torch.as_tensor(sample_lambda_batch(mixup_cfg, n, derive_seed(seed, "clean")), dtype=xb.dtype)
    perm1 = torch.as_tensor(derive_rng(seed, "clean-perm").permutation(n))
    x1, y1 = mixup_batch(xb, Y, lam1, perm1)
    loss_clean = cross_entropy(model(x1), y1)

    x_adv = pgd(model, xb, yb, budget)
    lam2 = torch.as_tensor(sample_lambda_batch(mixup_cfg, n, derive_seed(seed, "adv")), dtype=xb.dtype)
    perm2 = torch.as_tensor(derive_rng(seed, "adv-perm").permutation(n))
    x2, y2 = mixup_batch(x_adv, Y, lam2, perm2)
    logits2 = model(x2)
    loss_adv = cross_entropy(logits2, y2)

    loss = 0.5 * loss_clean + 0.5 * loss_adv
    return (loss, logits2) if return_logits else loss


def _num_classes(model):
    cfg = getattr(model, "config", None)
    if cfg is not None:
        return cfg.num_classes
    # fall back to the last linear layer's width
    last = [m for m in model.modules() if isinstance(m, torch.nn.Linear)][-1]
    return last.out_features


def estimate_risks(model, dataset, budget: AttackBudget, batch_size=256) -> RiskReport:
    """Empirical risk by plain evaluation; adversarial risk as the
    per-example maximum loss along the PGD trajectory (start included), so
    the inner max can never fall below the clean loss."""
    model.eval()
    dtype = next(model.parameters()).dtype
    clean_sum, adv_sum, n_total = 0.0, 0.0, 0

    for xb_np, yb_np in batches(dataset, batch_size):
        xb = torch.as_tensor(xb_np, dtype=dtype)
        yb = torch.as_tensor(yb_np)

        def per_example(xt):
            return torch.nn.functional.cross_entropy(model(xt), yb, reduction="none")

        with torch.no_grad():
            clean = per_example(xb)
        best = clean.clone()
        if budget.epsilon > 0:
            xt = xb.clone()
            for _ in range(budget.steps):
                xt = xt.detach().requires_grad_(True)
                losses = per_example(xt)
                (g,) = torch.autograd.grad(losses.mean(), xt)
                with torch.no_grad():
                    xt = xt + budget.alpha * torch.sign(g)
                    xt = torch.clamp(xt, xb - budget.epsilon, xb + budget.epsilon)
                    xt = torch.clamp(xt, *budget.clamp)
                    best = torch.maximum(best, per_example(xt))
        clean_sum += float(clean.sum())
        adv_sum += float(best.sum())
        n_total += len(xb)
    return RiskReport(clean_sum / n_total, adv_sum / n_total)
