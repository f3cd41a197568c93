import numpy as np
import pytest

from e2f.diffusion import MlpDenoiser, TrainConfig, train_denoiser
from helpers import TOY_CONTRAST, blob_sequence, volume_for


@pytest.fixture(scope="session")
def toy_model():
    """A small conditional denoiser trained on drifting-blob sequences.

    Shared across tests; training is seeded, so the model is identical on
    every run.
    """
    pairs = [(seq.data, volume_for(seq))
             for seq in (blob_sequence(100 + i) for i in range(30))]
    model = MlpDenoiser(hidden=16, seed=0)
    train_denoiser(pairs, model,
                   TrainConfig(iterations=4000, learning_rate=0.01, seed=5))
    return model


@pytest.fixture(scope="session")
def toy_contrast():
    return TOY_CONTRAST
