import numpy as np
import pytest

from mfa_delivery.biometrics import FACE, VOICE, VerifierModel, extract_embedding, train_fusion_denoiser
from mfa_delivery.synth import SyntheticPopulation


@pytest.fixture(scope="session")
def population():
    return SyntheticPopulation(seed=3)


@pytest.fixture(scope="session")
def models():
    rng = np.random.default_rng(17)
    return VerifierModel.random(rng, FACE), VerifierModel.random(rng, VOICE)


@pytest.fixture(scope="session")
def denoiser(population):
    rng = np.random.default_rng(23)
    train = [population.pair(population.new_identity(rng), rng) for _ in range(200)]
    return train_fusion_denoiser(train, 2 * population.latent_dim)


@pytest.fixture(scope="session")
def genuine_pairs(population, models):
    """200 (reference face emb, reference voice emb, probe face, probe voice) tuples."""
    rng = np.random.default_rng(29)
    out = []
    for _ in range(200):
        ident = population.new_identity(rng)
        f0, v0 = population.pair(ident, rng)
        f1, v1 = population.pair(ident, rng)
        out.append((extract_embedding(models[0], f0), extract_embedding(models[1], v0), f1, v1))
    return out


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
