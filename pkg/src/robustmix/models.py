"""Desk-scale differentiable models plus gradient verification.

Both architectures expose the same contract: `forward` to logits,
`hidden(k)` for the representation entering mixable layer k (0 = the input
itself), and `forward_from(k, h)` to resume the computation — which is what
Manifold Mixup needs. No dropout anywhere, so train-mode forward is a
deterministic function of (parameters, input).
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .seeding import derive_rng, derive_seed

ARCHITECTURES = ("small_cnn", "thin_resnet")

_ACTIVATIONS = {"relu": nn.ReLU, "softplus": nn.Softplus}


@dataclass
class ModelConfig:
    architecture: str = "thin_resnet"
    num_classes: int = 10
    width: float = 1.0
    seed: int = 0
    in_channels: int = 3
    activation: str = "relu"  # "softplus" gives a kink-free variant

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture: {self.architecture!r}")
        if self.width <= 0:
            raise ValueError("width multiplier must be > 0")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation: {self.activation!r}")


class _Parted(nn.Module):
    """Shared plumbing: a model split into sequential mixable parts.

    parts[0..n-1] compose to the full forward pass; hidden(k) runs the
    first k parts, forward_from(k, h) runs the rest.
    """

    def __init__(self):
        super().__init__()
        self.parts = nn.ModuleList()

    @property
    def num_hidden(self):
        # mixable layer indices are 0..num_hidden
        return len(self.parts) - 1

    def hidden(self, x, k: int):
        if not 0 <= k <= self.num_hidden:
            raise ValueError(f"hidden layer {k} out of range [0, {self.num_hidden}]")
        h = x
        for part in self.parts[:k]:
            h = part(h)
        return h

    def forward_from(self, h, k: int):
        if not 0 <= k <= self.num_hidden:
            raise ValueError(f"hidden layer {k} out of range [0, {self.num_hidden}]")
        for part in self.parts[k:]:
            h = part(h)
        return h

    def forward(self, x):
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        return self.forward_from(x, 0)


class SmallCnn(_Parted):
    """Two conv blocks and two dense layers; MNIST-sized by default."""

    def __init__(self, num_classes=10, width=1.0, in_channels=1, activation="relu"):
        super().__init__()
        act = _ACTIVATIONS[activation]
        c1, c2 = max(int(32 * width), 4), max(int(64 * width), 4)
        self.parts.append(nn.Sequential(
            nn.Conv2d(in_channels, c1, 3, padding=1), act(), nn.MaxPool2d(2)))
        self.parts.append(nn.Sequential(
            nn.Conv2d(c1, c2, 3, padding=1), act(), nn.MaxPool2d(2)))
        self.parts.append(nn.Sequential(
            nn.AdaptiveAvgPool2d(7), nn.Flatten(),
            nn.Linear(c2 * 49, max(int(128 * width), 8)), act(),
            nn.Linear(max(int(128 * width), 8), num_classes)))


class BasicBlock(nn.Module):
    def __init__(self, cin, cout, stride, act):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.act = act()
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=stride, bias=False), nn.BatchNorm2d(cout))
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.act(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.act(out + self.shortcut(x))


class ThinResnet(_Parted):
    """Three-stage residual net, one basic block per stage.

    width=0.5 gives 8/16/32 channels — small enough to train on one CPU
    core at useful batch sizes while keeping the residual/BN structure.
    """

    def __init__(self, num_classes=10, width=1.0, in_channels=3, activation="relu"):
        super().__init__()
        act = _ACTIVATIONS[activation]
        c = max(int(16 * width), 4)
        stem = nn.Sequential(nn.Conv2d(in_channels, c, 3, padding=1, bias=False),
                             nn.BatchNorm2d(c), act())
        self.parts.append(nn.Sequential(stem, BasicBlock(c, c, 1, act)))
        self.parts.append(BasicBlock(c, 2 * c, 2, act))
        self.parts.append(nn.Sequential(
            BasicBlock(2 * c, 4 * c, 2, act),
            nn.AdaptiveAvgPool2d(1), nn.Flatten(), nn.Linear(4 * c, num_classes)))


def build_model(cfg: ModelConfig) -> _Parted:
    """Construct an architecture with seed-deterministic initial weights."""
    with torch.random.fork_rng():
        torch.manual_seed(derive_seed(cfg.seed, "init", cfg.architecture))
        if cfg.architecture == "small_cnn":
            model = SmallCnn(cfg.num_classes, cfg.width, cfg.in_channels, cfg.activation)
        else:
            model = ThinResnet(cfg.num_classes, cfg.width, cfg.in_channels, cfg.activation)
    model.config = cfg
    return model


def cross_entropy(logits, soft_labels):
    """Mean -sum(y * log_softmax(logits)); y may be soft or integer labels.

    Integer labels are converted to one-hot rows, so both entries share one
    computation path (linearity in the label argument then holds exactly).
    """
    if soft_labels.dtype in (torch.int64, torch.int32):
        soft_labels = F.one_hot(soft_labels.long(), logits.shape[1]).to(logits.dtype)
    if soft_labels.shape != logits.shape:
        raise ValueError(f"shape mismatch: logits {tuple(logits.shape)} vs labels {tuple(soft_labels.shape)}")
    return -(soft_labels * F.log_softmax(logits, dim=1)).sum(dim=1).mean()


def grad_input(model, loss_fn, x, y):
    """Gradient of the mean loss w.r.t. the input batch."""
    x = x.detach().requires_grad_(True)
    loss = loss_fn(model(x), y)
    (g,) = torch.autograd.grad(loss, x)
    return g


def finite_diff_check(model, loss_fn, batch, h=1e-3, probes=10, seed=0):
    """Max relative error between analytic input-gradients and central
    finite differences over `probes` random coordinates."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    if h <= 0:
        raise ValueError("h must be > 0")
    x, y = batch
    rng = derive_rng(seed, "fdcheck")
    analytic = grad_input(model, loss_fn, x, y)
    worst = 0.0
    flat = x.reshape(-1)
    for idx in rng.choice(flat.numel(), size=min(probes, flat.numel()), replace=False):
        xp = x.detach().clone().reshape(-1)
        xm = xp.clone()
        xp[idx] += h
        xm[idx] -= h
        with torch.no_grad():
            lp = loss_fn(model(xp.reshape(x.shape)), y).item()
            lm = loss_fn(model(xm.reshape(x.shape)), y).item()
        fd = (lp - lm) / (2 * h)
        a = analytic.reshape(-1)[idx].item()
        worst = max(worst, abs(a - fd) / (abs(a) + 1e-8))
    return worst


def load_model(path):
    """Rebuild a model from a checkpoint's config echo and load its state."""
    from . import checkpoint as ckpt

    header, _ = ckpt.load_checkpoint(path)
    mcfg = header["config"].get("model")
    if not mcfg:
        raise ckpt.CheckpointError(f"{path}: checkpoint carries no model config")
    model = build_model(ModelConfig(**mcfg))
    if header["config"].get("train", {}).get("dtype") == "float64":
        model = model.double()
    ckpt.load_checkpoint(path, model)
    model.eval()
    return model


def flat_parameters(model) -> torch.Tensor:
    return torch.nn.utils.parameters_to_vector(model.parameters())


def load_flat_parameters(model, vec):
    torch.nn.utils.vector_to_parameters(
        torch.as_tensor(vec, dtype=next(model.parameters()).dtype), model.parameters())
