"""Evaluation battery: oblivious adversarial accuracy, calibration (ECE),
local linearity, corruption robustness, and latent sample statistics.

The oblivious protocol is structural here: adversarial tensors are always
generated from the base model before any inference policy is consulted, so
a policy change can never alter the attack inputs.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import torch
import torch.nn.functional as F

from .attacks import AttackBudget, adaptive_pgd_varmi, fgsm, pgd, spsa
from .corruptions import CORRUPTION_KINDS, CorruptionSpec, corrupt_batch
from .data import batches
from .inference import InferencePolicy, predict
from .seeding import derive_rng, derive_seed
from .vae import encode_mean, module_dtype


@dataclass
class CalibrationReport:
    ece: float
    bins: list  # (count, accuracy, mean confidence) per bin
    M: int


@dataclass
class RobustnessReport:
    clean_accuracy: float = None
    attack_accuracy: dict = field(default_factory=dict)      # name -> accuracy
    corruption_accuracy: dict = field(default_factory=dict)  # kind -> [sev1..sev5]
    corruption_mean: float = None
    linearity_curve: dict = field(default_factory=dict)      # epsilon -> mean gamma

    def to_dict(self):
        return {
            "clean_accuracy": self.clean_accuracy,
            "attack_accuracy": self.attack_accuracy,
            "corruption_accuracy": self.corruption_accuracy,
            "corruption_mean": self.corruption_mean,
            "linearity_curve": self.linearity_curve,
        }


def _defended_argmax(model, x_adv, policy, vae):
    return predict(model, x_adv, policy, vae=vae).argmax(dim=1)


def oblivious_eval(model, policy: InferencePolicy, dataset, budget: AttackBudget,
                   vae=None, attack="pgd", seed=0, batch_size=64, limit=None):
    """Accuracy of the defended prediction on adversarial examples crafted
    against the *base* model only (the attacker ignores the defense)."""
    model.eval()
    dtype = module_dtype(model)
    correct, total = 0, 0
    for xb_np, yb_np in batches(dataset, batch_size):
        if limit is not None and total >= limit:
            break
        xb = torch.as_tensor(xb_np, dtype=dtype)
        yb = torch.as_tensor(yb_np)
        # attack phase: base model only — the policy is not in scope here
        if budget.epsilon == 0 or attack == "none":
            x_adv = xb
        elif attack == "pgd":
            x_adv = pgd(model, xb, yb, budget, seed=derive_seed(seed, "attack", total))
        elif attack == "fgsm":
            x_adv = fgsm(model, xb, yb, budget.epsilon)
        elif attack == "spsa":
            x_adv = spsa(model, xb, yb, budget, seed=derive_seed(seed, "attack", total))
        else:
            raise ValueError(f"unknown oblivious attack {attack!r}")
        # scoring phase: defense sees only the finished adversarial tensors
        with torch.no_grad():
            picks = _defended_argmax(model, x_adv, policy, vae)
        correct += int((picks == yb).sum())
        total += len(yb)
    return correct / total


def adaptive_eval(model, vae, policy: InferencePolicy, dataset, budget: AttackBudget,
                  adaptive_cfg, seed=0, batch_size=32, limit=None):
    """Accuracy under the adaptive attack that differentiates through the
    latent-mixing pipeline. Not oblivious — the attacker knows the defense."""
    model.eval()
    dtype = module_dtype(model)
    correct, total = 0, 0
    for xb_np, yb_np in batches(dataset, batch_size):
        if limit is not None and total >= limit:
            break
        xb = torch.as_tensor(xb_np, dtype=dtype)
        yb = torch.as_tensor(yb_np)
        x_adv = adaptive_pgd_varmi(model, vae, xb, yb, budget, adaptive_cfg,
                                   seed=derive_seed(seed, "adaptive", total))
        with torch.no_grad():
            picks = _defended_argmax(model, x_adv, policy, vae)
        correct += int((picks == yb).sum())
        total += len(yb)
    return correct / total


def ece(confidences, predictions, labels, M=15) -> CalibrationReport:
    """Expected calibration error over M equal-width confidence bins."""
    confidences = np.asarray(confidences, dtype=np.float64)
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(confidences) == 0:
        raise ValueError("ece needs at least one example")
    if M < 1:
        raise ValueError("M must be >= 1")
    if confidences.min() < 0 or confidences.max() > 1:
        raise ValueError("confidences must lie in [0, 1]")
    n = len(confidences)
    bin_idx = np.minimum((confidences * M).astype(int), M - 1)
    bins, total = [], 0.0
    for m in range(M):
        mask = bin_idx == m
        count = int(mask.sum())
        if count == 0:
            bins.append((0, 0.0, 0.0))
            continue
        acc = float((predictions[mask] == labels[mask]).mean())
        conf = float(confidences[mask].mean())
        total += (count / n) * abs(acc - conf)
        bins.append((count, acc, conf))
    return CalibrationReport(ece=total, bins=bins, M=M)


def confidences_from_outputs(outputs, labels):
    """(confidence, prediction, label) arrays from averaged model outputs."""
    probs = outputs if torch.is_tensor(outputs) else torch.as_tensor(outputs)
    conf, pred = probs.max(dim=1)
    return conf.cpu().numpy(), pred.cpu().numpy(), np.asarray(labels)


def _linearity_search(per_loss, x, epsilon, inner_steps, seed, warm_delta=None):
    """Best-so-far signed ascent on |L(x+d) - L(x) - d.grad L(x)| over the
    L-inf ball. Returns (per-example gamma, best delta)."""
    x = x.detach()
    n = x.shape[0]
    xg = x.clone().requires_grad_(True)
    base = per_loss(xg)
    (grad0,) = torch.autograd.grad(base.sum(), xg)
    base = base.detach()
    grad0 = grad0.detach()

    if epsilon == 0:
        return torch.zeros(n, dtype=x.dtype), torch.zeros_like(x)

    if warm_delta is None:
        rng = derive_rng(seed, "linearity-start")
        delta = torch.as_tensor(rng.uniform(-epsilon, epsilon, size=tuple(x.shape)), dtype=x.dtype)
    else:
        delta = warm_delta.clone().clamp(-epsilon, epsilon)

    def gap(d):
        lin = (d * grad0).flatten(1).sum(dim=1)
        return per_loss(x + d) - base - lin

    alpha = epsilon / 8
    best_gamma = gap(delta).abs().detach()
    best_delta = delta.clone()
    for _ in range(inner_steps):
        delta = delta.detach().requires_grad_(True)
        g = gap(delta).abs()
        (dgrad,) = torch.autograd.grad(g.sum(), delta)
        with torch.no_grad():
            delta = torch.clamp(delta + alpha * torch.sign(dgrad), -epsilon, epsilon)
            cur = gap(delta).abs()
            better = cur > best_gamma
            best_gamma = torch.where(better, cur, best_gamma)
            bmask = better.reshape(-1, *([1] * (x.ndim - 1)))
            best_delta = torch.where(bmask, delta, best_delta)
    return best_gamma, best_delta


def local_linearity_error(model, x, y, epsilon, inner_steps=20, seed=0, loss_fn=None, warm_delta=None):
    """Per-example local-linearity gap gamma(epsilon, x, y).

    loss_fn overrides the default per-example cross-entropy through the
    model (used for analytic toys); it maps a batch to per-example losses.
    """
    if loss_fn is None:
        model.eval()

        def loss_fn(xt):
            return F.cross_entropy(model(xt), y, reduction="none")

    gamma, delta = _linearity_search(loss_fn, x, epsilon, inner_steps, seed, warm_delta)
    return gamma, delta


def local_linearity_curve(model, x, y, eps_grid=None, inner_steps=20, seed=0, loss_fn=None):
    """Mean gamma over a sorted epsilon grid, warm-starting each ball's
    search from the previous maximizer (gives monotone curves)."""
    if eps_grid is None:
        eps_grid = [e / 255 for e in (1, 2, 4, 8, 16)]
    eps_grid = sorted(eps_grid)
    curve, warm = {}, None
    for eps in eps_grid:
        gamma, warm = local_linearity_error(model, x, y, eps, inner_steps, seed, loss_fn, warm_delta=warm)
        curve[eps] = float(gamma.mean())
    return curve


def corruption_eval(model, dataset, kinds=CORRUPTION_KINDS, severities=(1, 2, 3, 4, 5),
                    policy=None, vae=None, seed=0, limit=None, batch_size=256):
    """Accuracy per (corruption kind, severity) plus the grand mean."""
    if len(kinds) == 0:
        raise ValueError("corruption kinds must be nonempty")
    model.eval()
    dtype = module_dtype(model)
    images = dataset.images if limit is None else dataset.images[:limit]
    labels = dataset.labels if limit is None else dataset.labels[:limit]
    policy = policy or InferencePolicy()
    matrix = {}
    for kind in kinds:
        row = []
        for sev in severities:
            spec = CorruptionSpec(kind, sev)
            correct = 0
            for start in range(0, len(images), batch_size):
                xb = corrupt_batch(images[start:start + batch_size], spec,
                                   derive_seed(seed, kind, sev, start))
                x_t = torch.as_tensor(xb, dtype=dtype)
                with torch.no_grad():
                    picks = predict(model, x_t, policy, vae=vae).argmax(dim=1).cpu().numpy()
                correct += int((picks == labels[start:start + batch_size]).sum())
            row.append(correct / len(images))
        matrix[kind] = row
    mean = float(np.mean([a for row in matrix.values() for a in row]))
    return matrix, mean


def _gaussian_fit(feats):
    feats = np.asarray(feats, dtype=np.float64)
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    return mu, cov


def frechet_distance(mu_a, cov_a, mu_b, cov_b, eps=1e-6):
    """|mu_a-mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)), with diagonal loading."""
    mu_a, mu_b = np.atleast_1d(mu_a), np.atleast_1d(mu_b)
    cov_a = np.atleast_2d(cov_a) + eps * np.eye(len(mu_a))
    cov_b = np.atleast_2d(cov_b) + eps * np.eye(len(mu_b))
    covmean = scipy.linalg.sqrtm(cov_a @ cov_b)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    d2 = float(((mu_a - mu_b) ** 2).sum() + np.trace(cov_a + cov_b - 2.0 * covmean))
    return max(d2, 0.0)


def latent_stat_distance(set_a, set_b, vae=None, batch_size=256):
    """Fréchet distance between Gaussian fits of VAE-encoded means.

    A stand-in for heavyweight feature-space sample statistics: with
    vae=None the raw (flattened) vectors are compared directly.
    """

    def featurize(images):
        arr = np.asarray(images, dtype=np.float32)
        if vae is None:
            return arr.reshape(len(arr), -1).astype(np.float64)
        dtype = module_dtype(vae)
        chunks = []
        with torch.no_grad():
            for start in range(0, len(arr), batch_size):
                mu = encode_mean(vae, torch.as_tensor(arr[start:start + batch_size], dtype=dtype))
                chunks.append(mu.cpu().numpy().astype(np.float64))
        return np.concatenate(chunks)

    fa, fb = featurize(set_a), featurize(set_b)
    if len(fa) < 2 or len(fb) < 2:
        raise ValueError("latent_stat_distance needs >= 2 samples per set")
    return frechet_distance(*_gaussian_fit(fa), *_gaussian_fit(fb))
