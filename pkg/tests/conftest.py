import numpy as np
import pytest

from aeshap.autoencoder import AEConfig, init_model


def random_model(d, hidden=(6, 3, 6), seed=0, bias_scale=0.1):
    """Seeded model with non-zero biases so no layer is trivially centred."""
    model = init_model(AEConfig(hidden_layers=hidden, seed=seed), d)
    rng = np.random.default_rng(seed + 1000)
    for b in model.biases:
        b[:] = rng.normal(0.0, bias_scale, size=b.shape)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
