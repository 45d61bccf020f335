"""Seeded synthetic face/voice population.

Each identity is a pair of latent vectors; a sample is

    clip(0.5 + B (identity + identity_scale * intra_scale * xi) + pixel_noise * eta, 0, 1)

with ``B`` an orthonormal D x latent_dim basis per modality.  Clean data
therefore sits near a low-dimensional affine subspace, which is the
structure the fusion denoiser exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .biometrics import (
    FACE,
    FACE_SHAPE,
    VOICE,
    VOICE_SHAPE,
    FusionDenoiser,
    VerifierModel,
    train_fusion_denoiser,
)


@dataclass(frozen=True)
class Identity:
    face: np.ndarray = field(repr=False)
    voice: np.ndarray = field(repr=False)


@dataclass
class SyntheticPopulation:
    seed: int
    latent_dim: int = 48
    identity_scale: float = 0.15
    intra_scale: float = 0.15
    pixel_noise: float = 0.002
    face_dim: int = FACE_SHAPE[0] * FACE_SHAPE[1]
    voice_dim: int = VOICE_SHAPE[0] * VOICE_SHAPE[1]

    def __post_init__(self) -> None:
        rng = np.random.default_rng([self.seed, 0xB10])
        self.face_basis = np.linalg.qr(rng.standard_normal((self.face_dim, self.latent_dim)))[0]
        self.voice_basis = np.linalg.qr(rng.standard_normal((self.voice_dim, self.latent_dim)))[0]

    def new_identity(self, rng: np.random.Generator) -> Identity:
        k = self.latent_dim
        return Identity(
            self.identity_scale * rng.standard_normal(k),
            self.identity_scale * rng.standard_normal(k),
        )

    def _sample(self, basis: np.ndarray, latent: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        z = latent + self.identity_scale * self.intra_scale * rng.standard_normal(latent.size)
        x = 0.5 + basis @ z + self.pixel_noise * rng.standard_normal(basis.shape[0])
        return np.clip(x, 0.0, 1.0)

    def face(self, ident: Identity, rng: np.random.Generator) -> np.ndarray:
        return self._sample(self.face_basis, ident.face, rng)

    def voice(self, ident: Identity, rng: np.random.Generator) -> np.ndarray:
        return self._sample(self.voice_basis, ident.voice, rng)

    def pair(self, ident: Identity, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        return self.face(ident, rng), self.voice(ident, rng)


@dataclass
class BiometricSetup:
    """Population, verifiers and a trained denoiser, all derived from one seed."""

    population: SyntheticPopulation
    face_model: VerifierModel
    voice_model: VerifierModel
    denoiser: FusionDenoiser


def build_setup(seed: int, train_pairs: int = 200, rank: int | None = None) -> BiometricSetup:
    pop = SyntheticPopulation(seed)
    rng = np.random.default_rng([seed, 0x5E7])
    face_model = VerifierModel.random(rng, FACE)
    voice_model = VerifierModel.random(rng, VOICE)
    train = [pop.pair(pop.new_identity(rng), rng) for _ in range(train_pairs)]
    denoiser = train_fusion_denoiser(train, rank or 2 * pop.latent_dim)
    return BiometricSetup(pop, face_model, voice_model, denoiser)
