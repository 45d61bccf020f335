"""Verification metrics over genuine/impostor similarity scores.

A pair is predicted "same person" when its score is >= the threshold.
Counting is done in integers so the results are exact rationals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyScores


@dataclass(frozen=True)
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __init__(self, genuine, impostor) -> None:
        object.__setattr__(self, "genuine", np.asarray(genuine, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "impostor", np.asarray(impostor, dtype=np.float64).reshape(-1))

    def check(self) -> None:
        if self.genuine.size == 0 or self.impostor.size == 0:
            raise EmptyScores("need at least one genuine and one impostor score")


def compute_accuracy(s: ScoreSet, threshold: float) -> float:
    s.check()
    correct = int((s.genuine >= threshold).sum()) + int((s.impostor < threshold).sum())
    return correct / (s.genuine.size + s.impostor.size)


def compute_roc_auc(s: ScoreSet) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """ROC over every distinct score; returns (fpr, tpr, thresholds, auc).

    Tied scores cross the threshold together, so the trapezoid area equals
    P(genuine > impostor) + 0.5 P(tie).
    """
    s.check()
    P, N = s.genuine.size, s.impostor.size
    thresholds = np.unique(np.concatenate([s.genuine, s.impostor]))[::-1]
    g, i = np.sort(s.genuine), np.sort(s.impostor)
    tp = P - np.searchsorted(g, thresholds, side="left")
    fp = N - np.searchsorted(i, thresholds, side="left")
    tp = np.concatenate([[0], tp]).astype(np.int64)
    fp = np.concatenate([[0], fp]).astype(np.int64)
    area2 = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = area2 / (2 * P * N)
    return fp / N, tp / P, np.concatenate([[np.inf], thresholds]), auc


def _far_frr_sweep(s: ScoreSet):
    s.check()
    P, N = s.genuine.size, s.impostor.size
    t = np.concatenate([np.unique(np.concatenate([s.genuine, s.impostor])), [np.inf]])
    far_n = N - np.searchsorted(np.sort(s.impostor), t, side="left")
    frr_n = np.searchsorted(np.sort(s.genuine), t, side="left")
    return t, far_n / N, frr_n / P, far_n * P - frr_n * N  # last: sign of FAR - FRR


def eer_with_threshold(s: ScoreSet) -> tuple[float, float]:
    t, far, frr, diff = _far_frr_sweep(s)
    k = int(np.argmax(diff <= 0))  # diff[0] > 0 always; diff[-1] < 0 always
    if diff[k] == 0:
        return float(far[k]), float(t[k])
    frac = diff[k - 1] / (diff[k - 1] - diff[k])
    rate = far[k - 1] + frac * (far[k] - far[k - 1])
    hi = t[k] if np.isfinite(t[k]) else t[k - 1]
    return float(rate), float(t[k - 1] + frac * (hi - t[k - 1]))


def compute_eer(s: ScoreSet) -> float:
    """Rate at which FAR and FRR cross, interpolating linearly between thresholds."""
    return eer_with_threshold(s)[0]


def calibrate_threshold(s: ScoreSet) -> float:
    """Operating threshold at the EER point; mid-gap when the sets separate."""
    s.check()
    lo_gen, hi_imp = float(s.genuine.min()), float(s.impostor.max())
    if lo_gen > hi_imp:
        return 0.5 * (lo_gen + hi_imp)
    return eer_with_threshold(s)[1]
