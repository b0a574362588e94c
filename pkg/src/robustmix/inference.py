"""Inference-time defenses: plain prediction, MI-OL, and VarMI.

MI-OL mixes the input with pool samples drawn from every class except the
predicted one and averages the model outputs; VarMI does the same mixing in
the latent space of a trained VAE. Both run through one shared driver so
they differ only in the mixing function — with a do-nothing autoencoder
they are the same computation, bit for bit.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .seeding import derive_rng
from .vae import encode_mean, module_dtype

VARIANTS = ("plain", "mi_ol", "var_mi")


@dataclass
class InferencePolicy:
    variant: str = "plain"
    lambda_mi: float = 0.5   # mixing weight on the defended input
    n_mi: int = 30           # pool draws averaged per prediction
    pool: object = None      # Dataset supplying x_s
    seed: int = 0
    average: str = "probs"   # probs | logits

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown inference variant: {self.variant!r}")
        if not 0 <= self.lambda_mi <= 1:
            raise ValueError("lambda_mi must be in [0, 1]")
        if self.n_mi < 1:
            raise ValueError("n_mi must be >= 1")
        if self.average not in ("probs", "logits"):
            raise ValueError("average must be 'probs' or 'logits'")
        if self.variant != "plain" and (self.pool is None or len(self.pool) == 0):
            raise ValueError(f"variant {self.variant!r} needs a nonempty pool")


@dataclass
class Pool:
    """Uniform sampler over the examples of a dataset outside one class."""

    dataset: object
    indices: np.ndarray

    def __len__(self):
        return len(self.indices)

    def draw(self, rng, n):
        # without replacement when the pool is large enough
        replace = n > len(self.indices)
        return self.indices[rng.choice(len(self.indices), size=n, replace=replace)]


def build_pool_other_labels(dataset, predicted_class: int) -> Pool:
    """All examples whose label differs from the predicted class."""
    idx = np.flatnonzero(np.asarray(dataset.labels) != predicted_class)
    if len(idx) == 0:
        raise ValueError(f"no pool examples outside predicted class {predicted_class}")
    return Pool(dataset, idx)


def _out_head(logits, average):
    return F.softmax(logits, dim=1) if average == "probs" else logits


def plain_predict(model, x, average="probs"):
    """Eval-mode forward pass, optionally mapped to probabilities."""
    model.eval()
    if not torch.is_tensor(x):
        x = torch.as_tensor(np.asarray(x), dtype=module_dtype(model))
    with torch.no_grad():
        return _out_head(model(x), average)


def _mi_predict(model, x, policy: InferencePolicy, make_mixed, return_draws=False):
    """Shared MI driver: pool construction, seeded draws, averaging.

    make_mixed(x_i, xs) -> model input batch of len(xs) mixing one defended
    example against the drawn pool samples.
    """
    model.eval()
    if not torch.is_tensor(x):
        x = torch.as_tensor(np.asarray(x), dtype=module_dtype(model))
    ds = policy.pool
    pool_images = torch.as_tensor(ds.images, dtype=x.dtype)
    with torch.no_grad():
        pred = model(x).argmax(dim=1).cpu().numpy()
        rows, draws = [], []
        for i in range(len(x)):
            pool = build_pool_other_labels(ds, int(pred[i]))
            rng = derive_rng(policy.seed, "mi-draw", i)
            idx = pool.draw(rng, policy.n_mi)
            mixed = make_mixed(x[i], pool_images[torch.as_tensor(idx)])
            outs = _out_head(model(mixed), policy.average)
            rows.append(outs.mean(dim=0))
            if return_draws:
                draws.append(outs)
    out = torch.stack(rows)
    return (out, draws) if return_draws else out


def mi_ol_predict(model, x, policy: InferencePolicy, return_draws=False):
    """Average model outputs on lam*x + (1-lam)*x_s over pool draws x_s."""
    if policy.lambda_mi == 1.0:
        # mixing weight endpoint: exactly the plain model output
        return plain_predict(model, x, policy.average)
    lam = policy.lambda_mi

    def make_mixed(x_i, xs):
        return lam * x_i[None] + (1.0 - lam) * xs

    return _mi_predict(model, x, policy, make_mixed, return_draws)


def varmi_predict(model, vae, x, policy: InferencePolicy, return_draws=False):
    """MI in latent space: average outputs on dec(lam*enc(x) + (1-lam)*enc(x_s))."""
    lam = policy.lambda_mi
    if lam == 1.0:
        # endpoint: model on the deterministic reconstruction, pool-free
        model.eval()
        if not torch.is_tensor(x):
            x = torch.as_tensor(np.asarray(x), dtype=module_dtype(model))
        with torch.no_grad():
            return _out_head(model(vae.decode(encode_mean(vae, x))), policy.average)

    def make_mixed(x_i, xs):
        mu_i = encode_mean(vae, x_i[None])
        mu_s = encode_mean(vae, xs)
        return vae.decode(lam * mu_i + (1.0 - lam) * mu_s)

    return _mi_predict(model, x, policy, make_mixed, return_draws)


def predict(model, x, policy: InferencePolicy, vae=None):
    """Dispatch on the policy variant; returns (N, K) averaged outputs."""
    if policy.variant == "plain":
        return plain_predict(model, x, policy.average)
    if policy.variant == "mi_ol":
        return mi_ol_predict(model, x, policy)
    if vae is None:
        raise ValueError("var_mi policy needs a VAE")
    return varmi_predict(model, vae, x, policy)
