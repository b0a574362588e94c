import numpy as np
import pytest
import torch

import robustmix as rm


@pytest.fixture(scope="session", autouse=True)
def single_thread():
    # deterministic CPU math for the exact-equality tests
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_data():
    """Small synthetic CIFAR-shaped train/test pair shared across tests."""
    return rm.synthetic_dataset(300, 60, seed=7)


@pytest.fixture(scope="session")
def mnist_like():
    """28x28 single-channel synthetic data (MNIST-shaped)."""
    spec = rm.SyntheticSpec(shape=(1, 28, 28))
    return rm.synthetic_dataset(2000, 200, seed=11, spec=spec)


@pytest.fixture(scope="session")
def small_model(tiny_data):
    m = rm.build_model(rm.ModelConfig("thin_resnet", width=0.5, seed=3))
    m.eval()
    return m


@pytest.fixture(scope="session")
def tiny_vae(tiny_data):
    train, _ = tiny_data
    cfg = rm.VaeConfig(latent_dim=8, epochs=2, batch_size=64, seed=5, base_channels=8)
    return rm.train_vae(train, cfg)


@pytest.fixture(scope="session")
def good_vae(mnist_like):
    """A VAE trained past the mean-image plateau: reconstructions keep class
    structure instead of collapsing to the dataset mean."""
    train, _ = mnist_like
    cfg = rm.VaeConfig(latent_dim=32, epochs=30, lr=2e-3, seed=5, base_channels=16)
    vae = rm.train_vae(train, cfg)
    vae.eval()
    return vae


@pytest.fixture(scope="session")
def attack_data():
    """Enough data for a classifier the attacks can actually break."""
    return rm.synthetic_dataset(1000, 200, seed=7)


@pytest.fixture(scope="session")
def trained_model(attack_data):
    train, _ = attack_data
    m = rm.build_model(rm.ModelConfig("thin_resnet", width=0.5, seed=3))
    m, _ = rm.train(train, m, rm.TrainConfig(trainer="erm", epochs=8, batch_size=64, seed=0))
    m.eval()
    return m


@pytest.fixture()
def torch_batch(tiny_data):
    train, _ = tiny_data
    x = torch.as_tensor(train.images[:16])
    y = torch.as_tensor(train.labels[:16])
    return x, y
