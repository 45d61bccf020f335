"""Face/voice verification factor and the fusion denoiser.

Samples are flat float vectors in [0, 1] (32x32 grayscale face crops and
32x32 mel-spectrogram patches by default).  A verifier is a fixed linear map
followed by L2 normalisation; two embeddings match when their cosine
similarity reaches a threshold.

The denoiser is the linear analogue of an audio-visual reconstruction
network: it projects the concatenated (face, voice) vector onto the top
principal subspace of clean training data.  Coordinates are weighted so the
quantity it minimises is ``lam_face * MSE_face + lam_voice * MSE_voice``.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DecodeError, DegenerateInput, DimensionMismatch

FACE = "face"
VOICE = "voice"
FACE_SHAPE = (32, 32)
VOICE_SHAPE = (32, 32)
EMBED_DIM = 64

_MODALITY_CODE = {FACE: 0, VOICE: 1, "embedding": 2}
_CODE_MODALITY = {v: k for k, v in _MODALITY_CODE.items()}
_SAMPLE_MAGIC = b"MFAS"
_EMBED_MAGIC = b"MFAE"


class RankWarning(UserWarning):
    """Requested denoiser rank exceeded the rank of the training data."""


def as_sample(values, length: Optional[int] = None) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if length is not None and x.size != length:
        raise DimensionMismatch(f"sample has {x.size} values, expected {length}")
    if x.size and (np.nanmin(x) < 0.0 or np.nanmax(x) > 1.0 or np.isnan(x).any()):
        raise ValueError("sample values must lie in [0, 1]")
    return x


def normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise DegenerateInput("cannot normalise a zero vector")
    return v / n


# ---------------------------------------------------------------------------
# verifier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifierModel:
    W: np.ndarray = field(repr=False)
    modality: str

    def __post_init__(self) -> None:
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2:
            raise ValueError("W must be a matrix")
        if np.linalg.matrix_rank(W) < W.shape[0]:
            raise ValueError("verifier rows must be linearly independent")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.W.shape[0]

    @classmethod
    def random(cls, rng: np.random.Generator, modality: str, embed_dim: int = EMBED_DIM,
               input_dim: int = 1024) -> "VerifierModel":
        """Seeded Gaussian projection with zero-mean rows (blind to global brightness)."""
        W = rng.standard_normal((embed_dim, input_dim)) / np.sqrt(input_dim)
        W -= W.mean(axis=1, keepdims=True)
        return cls(W, modality)


def extract_embedding(model: VerifierModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != model.dim:
        raise DimensionMismatch(f"{model.modality} model expects {model.dim} values, got {x.size}")
    y = model.W @ x
    if np.linalg.norm(y) <= 1e-12 * np.linalg.norm(x):
        raise DegenerateInput("sample lies in the null space of the verifier")
    return y / np.linalg.norm(y)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"embedding shapes differ: {a.shape} vs {b.shape}")
    return float(np.clip(a @ b, -1.0, 1.0))


def verify_pair(reference: np.ndarray, probe: np.ndarray, threshold: float) -> bool:
    return cosine_similarity(reference, probe) >= threshold


# ---------------------------------------------------------------------------
# decision
# ---------------------------------------------------------------------------

FACTORS = ("subkey", "face", "voice")


@dataclass(frozen=True)
class AuthResult:
    accepted: bool
    factors: dict = field(default_factory=dict)
    reason: Optional[str] = None


def fuse_decision(subkey_ok: bool, face_ok: bool, voice_ok: bool) -> AuthResult:
    report = dict(zip(FACTORS, (bool(subkey_ok), bool(face_ok), bool(voice_ok))))
    failed = [name for name in FACTORS if not report[name]]
    return AuthResult(not failed, report, failed[0] if failed else None)


# ---------------------------------------------------------------------------
# fusion denoiser
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FusionDenoiser:
    basis: np.ndarray = field(repr=False)  # r x (D_f + D_v), orthonormal rows
    mean: np.ndarray = field(repr=False)  # sample mean, unweighted coordinates
    lam_face: float
    lam_voice: float
    face_dim: int

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    @property
    def scale(self) -> np.ndarray:
        d_v = self.mean.size - self.face_dim
        return np.concatenate([
            np.full(self.face_dim, np.sqrt(self.lam_face / self.face_dim)),
            np.full(d_v, np.sqrt(self.lam_voice / d_v)),
        ])

    def reconstruct_joint(self, joint: np.ndarray) -> np.ndarray:
        """Project concatenated vector(s) onto the subspace; no clamping."""
        s = self.scale
        dev = (joint - self.mean) * s
        rec = (dev @ self.basis.T) @ self.basis
        with np.errstate(divide="ignore", invalid="ignore"):
            back = np.where(s > 0, rec / np.where(s > 0, s, 1.0), 0.0)
        return self.mean + back


def _stack_pairs(pairs: Iterable[tuple]) -> np.ndarray:
    rows = [np.concatenate([np.ravel(f), np.ravel(v)]) for f, v in pairs]
    if not rows:
        raise ValueError("no training pairs")
    return np.asarray(rows, dtype=np.float64)


def train_fusion_denoiser(pairs: Sequence[tuple], rank: int, lam_face: float = 1.0,
                          lam_voice: float = 1.0) -> FusionDenoiser:
    if lam_face < 0 or lam_voice < 0 or lam_face + lam_voice == 0:
        raise ValueError("loss weights must be non-negative and not both zero")
    pairs = list(pairs)
    face_dim = np.ravel(pairs[0][0]).size
    X = _stack_pairs(pairs)
    n, D = X.shape
    if not 1 <= rank <= D:
        raise ValueError(f"rank must be in [1, {D}]")
    if n < rank:
        raise ValueError(f"need at least {rank} samples, got {n}")
    mean = X.mean(axis=0)
    proto = FusionDenoiser(np.zeros((0, D)), mean, float(lam_face), float(lam_voice), face_dim)
    Z = (X - mean) * proto.scale
    _, sv, Vt = np.linalg.svd(Z, full_matrices=False)
    tol = sv.max(initial=0.0) * 1e-10
    data_rank = int((sv > tol).sum())
    if rank > data_rank:
        warnings.warn(f"rank {rank} exceeds data rank {data_rank}; using {data_rank}",
                      RankWarning, stacklevel=2)
        rank = max(data_rank, 1)
    return FusionDenoiser(Vt[:rank].copy(), mean, float(lam_face), float(lam_voice), face_dim)


def defender_reconstruct(d: FusionDenoiser, face, voice) -> tuple[np.ndarray, np.ndarray]:
    face = np.asarray(face, dtype=np.float64).reshape(-1)
    voice = np.asarray(voice, dtype=np.float64).reshape(-1)
    if face.size != d.face_dim or face.size + voice.size != d.mean.size:
        raise DimensionMismatch("sample dimensions do not match the denoiser")
    out = np.clip(d.reconstruct_joint(np.concatenate([face, voice])), 0.0, 1.0)
    return out[: d.face_dim], out[d.face_dim :]


def fusion_objective(d: FusionDenoiser, pairs: Sequence[tuple]) -> float:
    """``lam_face * MSE_face + lam_voice * MSE_voice`` of the unclamped reconstruction."""
    X = _stack_pairs(pairs)
    R = d.reconstruct_joint(X)
    err = (X - R) ** 2
    return float(d.lam_face * err[:, : d.face_dim].mean() + d.lam_voice * err[:, d.face_dim :].mean())


# ---------------------------------------------------------------------------
# serialisation: 16-byte header (magic, rows, cols, modality) + float32 LE
# ---------------------------------------------------------------------------


def _pack(magic: bytes, arr: np.ndarray, modality: str, shape: tuple[int, int]) -> bytes:
    header = magic + struct.pack("<III", shape[0], shape[1], _MODALITY_CODE[modality])
    return header + np.asarray(arr, dtype="<f4").reshape(-1).tobytes()


def _unpack(magic: bytes, data: bytes) -> tuple[np.ndarray, str, tuple[int, int]]:
    if len(data) < 16 or data[:4] != magic:
        raise DecodeError("BadHeader", "array header")
    rows, cols, code = struct.unpack_from("<III", data, 4)
    body = data[16:]
    if len(body) != 4 * rows * cols or code not in _CODE_MODALITY:
        raise DecodeError("Truncated", "array body")
    return np.frombuffer(body, dtype="<f4").astype(np.float64), _CODE_MODALITY[code], (rows, cols)


def sample_to_bytes(x: np.ndarray, modality: str) -> bytes:
    x = np.asarray(x).reshape(-1)
    shape = FACE_SHAPE if modality == FACE else VOICE_SHAPE
    if x.size != shape[0] * shape[1]:
        shape = (1, x.size)
    return _pack(_SAMPLE_MAGIC, x, modality, shape)


def sample_from_bytes(data: bytes) -> tuple[np.ndarray, str]:
    arr, modality, _ = _unpack(_SAMPLE_MAGIC, data)
    return arr, modality


def embedding_to_bytes(e: np.ndarray) -> bytes:
    e = np.asarray(e).reshape(-1)
    return _pack(_EMBED_MAGIC, e, "embedding", (1, e.size))


def embedding_from_bytes(data: bytes) -> np.ndarray:
    arr, _, _ = _unpack(_EMBED_MAGIC, data)
    # float32 storage perturbs the norm at 1e-7; restore the unit-norm invariant
    return normalize(arr)


def pack_biometrics(face: np.ndarray, voice: np.ndarray) -> bytes:
    f, v = sample_to_bytes(face, FACE), sample_to_bytes(voice, VOICE)
    return struct.pack(">I", len(f)) + f + v


def unpack_biometrics(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) < 4:
        raise DecodeError("Truncated", "biometric bundle")
    (n,) = struct.unpack_from(">I", data)
    face, fm = sample_from_bytes(data[4 : 4 + n])
    voice, vm = sample_from_bytes(data[4 + n :])
    if (fm, vm) != (FACE, VOICE):
        raise DecodeError("BadField", "biometric bundle modalities")
    return face, voice


@dataclass(frozen=True)
class BiometricSuite:
    """Models and operating points the robot uses for the two biometric factors."""

    face_model: VerifierModel
    voice_model: VerifierModel
    denoiser: Optional[FusionDenoiser]
    face_threshold: float
    voice_threshold: float

    def embed(self, face, voice, defended: bool = True) -> tuple[np.ndarray, np.ndarray]:
        if defended and self.denoiser is not None:
            face, voice = defender_reconstruct(self.denoiser, face, voice)
        return extract_embedding(self.face_model, face), extract_embedding(self.voice_model, voice)
