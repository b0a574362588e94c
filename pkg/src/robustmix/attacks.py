"""Adversarial example generation under an L-infinity budget.

All attacks are oblivious to inference-time defenses: they see the base
model (plus the VAE, for the adaptive variant) and never an inference
policy. Projection uses clamp-to-interval form, so projecting an already
feasible point returns it bit-unchanged, and a zero budget returns the
input exactly.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .models import cross_entropy
from .seeding import derive_seed


@dataclass
class AttackBudget:
    epsilon: float
    alpha: float
    steps: int
    clamp: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.steps > 0 and self.alpha <= 0:
            raise ValueError("alpha must be > 0 when steps > 0")


# evaluation profiles: the 10-step/alpha=epsilon literal reading, plus the
# small-step variant, since both step sizes appear in the protocol
EVAL_PROFILES = {
    "fgsm": AttackBudget(8 / 255, 8 / 255, 1),
    "pgd10": AttackBudget(8 / 255, 8 / 255, 10),
    "pgd10-fine": AttackBudget(8 / 255, 2 / 255, 10),
    "pgd50": AttackBudget(8 / 255, 2 / 255, 50),
}

# training-time inner-max budget for adversarial training
AT_TRAIN_BUDGET = AttackBudget(8 / 255, 2 / 255, 10)


def _as_tensor(x):
    return x if torch.is_tensor(x) else torch.as_tensor(np.asarray(x, dtype=np.float32))


def project(x, x0, epsilon, clamp=(0.0, 1.0)):
    """Project x onto the L-inf ball of radius epsilon around x0, then the
    valid pixel range. Identity (bitwise) on feasible points."""
    out = torch.clamp(x, x0 - epsilon, x0 + epsilon)
    return torch.clamp(out, clamp[0], clamp[1])


def pgd_on_loss(loss_fn, x, budget: AttackBudget, seed=0, random_start=False, ascend=True):
    """Signed-gradient iteration on an arbitrary scalar loss of the input.

    loss_fn: batch tensor -> scalar. Maximizes when ascend else minimizes.
    """
    x0 = _as_tensor(x).detach()
    if budget.epsilon == 0:
        return x0.clone()
    if random_start:
        gen = torch.Generator().manual_seed(derive_seed(seed, "pgd-start"))
        delta = (torch.rand(x0.shape, generator=gen, dtype=x0.dtype) * 2 - 1) * budget.epsilon
        xt = project(x0 + delta, x0, budget.epsilon, budget.clamp)
    else:
        xt = x0.clone()
    sign = 1.0 if ascend else -1.0
    for _ in range(budget.steps):
        xt = xt.detach().requires_grad_(True)
        with torch.enable_grad():  # callers may attack from inside no_grad eval loops
            loss = loss_fn(xt)
        (g,) = torch.autograd.grad(loss, xt)
        with torch.no_grad():
            xt = xt + sign * budget.alpha * torch.sign(g)
            xt = project(xt, x0, budget.epsilon, budget.clamp)
    return xt.detach()


def _frozen_eval(model):
    class _Ctx:
        def __enter__(self):
            self.was_training = model.training
            model.eval()

        def __exit__(self, *a):
            if self.was_training:
                model.train()

    return _Ctx()


def fgsm(model, x, y, epsilon, loss_fn=cross_entropy):
    """Single signed-gradient step of size epsilon."""
    budget = AttackBudget(epsilon, max(epsilon, 1e-12), 1)
    return pgd(model, x, y, budget, loss_fn=loss_fn)


def pgd(model, x, y, budget: AttackBudget, seed=0, random_start=False, loss_fn=cross_entropy):
    """Untargeted PGD: iterated signed ascent on the loss, projected to the
    epsilon-ball each step. Starts at x itself unless random_start."""
    y = y if torch.is_tensor(y) else torch.as_tensor(np.asarray(y))
    with _frozen_eval(model):
        return pgd_on_loss(lambda xt: loss_fn(model(xt), y), x, budget, seed, random_start, ascend=True)


def pgd_targeted(model, x, target_class, budget: AttackBudget, seed=0, random_start=False):
    """Targeted PGD: signed descent on the loss toward the target class."""
    t = target_class if torch.is_tensor(target_class) else torch.as_tensor(np.asarray(target_class))
    with _frozen_eval(model):
        return pgd_on_loss(lambda xt: cross_entropy(model(xt), t), x, budget, seed, random_start, ascend=False)


def second_likely_targets(model, x):
    """The runner-up class of each clean prediction (targeted-attack choice)."""
    with torch.no_grad(), _frozen_eval(model):
        logits = model(_as_tensor(x))
    return logits.topk(2, dim=1).indices[:, 1]


@dataclass
class AdaptiveConfig:
    n_adaptive: int = 1
    lambda_mi: float = 0.5
    pool: object = None  # Dataset whose examples supply the x_s draws

    def __post_init__(self):
        if self.n_adaptive < 1:
            raise ValueError("n_adaptive must be >= 1")
        if not 0 <= self.lambda_mi <= 1:
            raise ValueError("lambda_mi must be in [0, 1]")


def adaptive_pgd_varmi(model, vae, x, y, budget: AttackBudget, cfg: AdaptiveConfig, seed=0):
    """PGD through the full latent-mixing inference pipeline.

    Each step backpropagates through model(decode(lam*enc(x) +
    (1-lam)*enc(x_s)))) and sums the loss over n_adaptive pool draws; the
    pool excludes the class predicted on the *clean* input, fixed at attack
    start. Exact autograd end to end — no straight-through shortcuts.
    """
    if cfg.pool is None or len(cfg.pool) == 0:
        raise ValueError("adaptive attack needs a nonempty sample pool")
    x0 = _as_tensor(x).detach()
    y = y if torch.is_tensor(y) else torch.as_tensor(np.asarray(y))
    dtype = x0.dtype

    pool_images = torch.as_tensor(cfg.pool.images, dtype=dtype)
    pool_labels = np.asarray(cfg.pool.labels)
    with torch.no_grad(), _frozen_eval(model):
        pred = model(x0).argmax(dim=1).cpu().numpy()
    per_class = [np.flatnonzero(pool_labels != c) for c in range(int(pool_labels.max()) + 1)]
    for n in range(len(x0)):
        if len(per_class[pred[n]]) == 0:
            raise ValueError(f"pool has no examples outside predicted class {pred[n]}")

    rng = np.random.default_rng(derive_seed(seed, "adaptive-pool"))
    lam = cfg.lambda_mi

    def step_loss(xt):
        mu_x, _ = vae.encode(xt)
        total = None
        for _ in range(cfg.n_adaptive):
            idx = np.array([per_class[pred[n]][rng.integers(len(per_class[pred[n]]))]
                            for n in range(len(xt))])
            with torch.no_grad():
                mu_s, _ = vae.encode(pool_images[idx])
            mixed = vae.decode(lam * mu_x + (1.0 - lam) * mu_s)
            loss = cross_entropy(model(mixed), y)
            total = loss if total is None else total + loss
        return total

    with _frozen_eval(model):
        return pgd_on_loss(step_loss, x0, budget, seed, random_start=False, ascend=True)


def spsa(model, x, y, budget: AttackBudget, spsa_samples=128, perturbation_scale=0.01, seed=0, chunk=16):
    """Gradient-free PGD: per-step gradient estimated from loss differences
    over antithetic Rademacher perturbation pairs."""
    if spsa_samples < 1:
        raise ValueError("spsa_samples must be >= 1")
    x0 = _as_tensor(x).detach()
    if budget.epsilon == 0:
        return x0.clone()
    y = y if torch.is_tensor(y) else torch.as_tensor(np.asarray(y))
    gen = torch.Generator().manual_seed(derive_seed(seed, "spsa"))
    delta = perturbation_scale
    xt = x0.clone()
    with _frozen_eval(model), torch.no_grad():
        for _ in range(budget.steps):
            g = torch.zeros_like(xt)
            done = 0
            while done < spsa_samples:
                k = min(chunk, spsa_samples - done)
                v = torch.randint(0, 2, (k,) + tuple(xt.shape), generator=gen, dtype=xt.dtype) * 2 - 1
                for j in range(k):
                    lp = F.cross_entropy(model(torch.clamp(xt + delta * v[j], *budget.clamp)), y, reduction="none")
                    lm = F.cross_entropy(model(torch.clamp(xt - delta * v[j], *budget.clamp)), y, reduction="none")
                    coef = (lp - lm) / (2 * delta)
                    g += coef.reshape(-1, *([1] * (xt.ndim - 1))) * v[j]
                done += k
            g /= spsa_samples
            xt = xt + budget.alpha * torch.sign(g)
            xt = project(xt, x0, budget.epsilon, budget.clamp)
    return xt.detach()
