"""Gradient-sign attacks against the linear cosine verifier.

The attacker maximises ``J(x) = 1 - cos(normalize(W x), reference)``, i.e.
pushes a probe's embedding away from the enrolled one.  All three attacks
step along ``sign(grad J)``; a zero gradient coordinate does not move.
The attack functions accept any object with a ``loss_and_grad(x)`` method.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .biometrics import VerifierModel
from .errors import DegenerateInput, DimensionMismatch

# |W x| below this fraction of |x| is treated as exactly zero
_DEGENERATE = 1e-12


@dataclass(frozen=True)
class AttackConfig:
    alpha: float
    epsilon: float = 0.0
    steps: int = 1
    clamp_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.epsilon < 0:
            raise ValueError("alpha and epsilon must be non-negative")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        lo, hi = self.clamp_range
        if lo > hi:
            raise ValueError("empty clamp range")


@dataclass(frozen=True)
class LossContext:
    model: VerifierModel
    reference: np.ndarray

    def __post_init__(self) -> None:
        ref = np.asarray(self.reference, dtype=np.float64).reshape(-1)
        if ref.size != self.model.embed_dim:
            raise DimensionMismatch("reference embedding does not match the model")
        if abs(np.linalg.norm(ref) - 1.0) > 1e-9:
            raise ValueError("reference embedding must be unit norm")
        object.__setattr__(self, "reference", ref)

    def loss_and_grad(self, x) -> tuple[float, np.ndarray]:
        return loss_and_grad(self, x)


def loss_and_grad(ctx: LossContext, x) -> tuple[float, np.ndarray]:
    """Loss ``1 - cos`` and its exact gradient through the map and the normalisation."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != ctx.model.dim:
        raise DimensionMismatch(f"expected {ctx.model.dim} values, got {x.size}")
    y = ctx.model.W @ x
    n = np.linalg.norm(y)
    if n <= _DEGENERATE * np.linalg.norm(x):
        raise DegenerateInput("W x = 0; the normalised embedding is undefined")
    e = y / n
    c = float(e @ ctx.reference)
    # d/dx cos = W^T (ref - c e) / |y|
    grad = -(ctx.model.W.T @ (ctx.reference - c * e)) / n
    return 1.0 - c, grad


def fgsm(ctx, x, cfg: AttackConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    _, g = ctx.loss_and_grad(x)
    lo, hi = cfg.clamp_range
    return np.clip(x + cfg.alpha * np.sign(g), lo, hi)


def _project(x_t: np.ndarray, x0: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    lo, hi = cfg.clamp_range
    return np.clip(x_t, np.maximum(lo, x0 - cfg.epsilon), np.minimum(hi, x0 + cfg.epsilon))


def pgd(ctx, x, cfg: AttackConfig, rng: np.random.Generator,
        trace: Optional[list] = None) -> np.ndarray:
    """Projected gradient ascent from a uniform random start in the eps-ball."""
    x0 = np.asarray(x, dtype=np.float64).reshape(-1)
    x_t = _project(x0 + rng.uniform(-cfg.epsilon, cfg.epsilon, x0.shape), x0, cfg)
    if trace is not None:
        trace.append(x_t.copy())
    for _ in range(cfg.steps):
        _, g = ctx.loss_and_grad(x_t)
        x_t = _project(x_t + cfg.alpha * np.sign(g), x0, cfg)
        if trace is not None:
            trace.append(x_t.copy())
    return x_t


def bim(ctx, x, cfg: AttackConfig, trace: Optional[list] = None) -> np.ndarray:
    """Iterated FGSM starting exactly at ``x``, clipped to range and eps-ball."""
    x0 = np.asarray(x, dtype=np.float64).reshape(-1)
    x_t = x0.copy()
    for _ in range(cfg.steps):
        _, g = ctx.loss_and_grad(x_t)
        x_t = _project(x_t + cfg.alpha * np.sign(g), x0, cfg)
        if trace is not None:
            trace.append(x_t.copy())
    return x_t


ATTACKS = ("fgsm", "pgd", "bim")


def run_attack(name: str, ctx: LossContext, x, cfg: AttackConfig,
               rng: np.random.Generator) -> np.ndarray:
    if name == "fgsm":
        return fgsm(ctx, x, cfg)
    if name == "pgd":
        return pgd(ctx, x, cfg, rng)
    if name == "bim":
        return bim(ctx, x, cfg)
    raise ValueError(f"unknown attack {name!r}")
