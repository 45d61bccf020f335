"""Attack sweep over the seeded evaluation set: original vs defended pipelines.

Sweep file (JSON, ``"version": 1``)::

    {"version": 1, "seed": 5, "attacks": ["fgsm", "pgd", "bim"],
     "alphas": [0.01, 0.02, 0.05], "epsilon_ratio": 2.0, "steps": 10,
     "identities": 200, "default_alpha": 0.02}

Each identity contributes one genuine pair (a fresh sample of the enrolled
person, attacked) and one impostor pair (a clean sample of someone else).
Scores are cosine similarities to the enrolled references; the ``fused``
score is the mean of the face and voice scores.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .attacks import ATTACKS, AttackConfig, LossContext, run_attack
from .biometrics import defender_reconstruct, extract_embedding
from .errors import ScenarioError
from .metrics import ScoreSet, calibrate_threshold, compute_accuracy, compute_eer, compute_roc_auc
from .synth import build_setup

SWEEP_VERSION = 1
PIPELINES = ("original", "defended")
MODALITIES = ("fused", "face", "voice")


@dataclass
class Sweep:
    seed: int = 5
    attacks: tuple[str, ...] = ATTACKS
    alphas: tuple[float, ...] = (0.01, 0.02, 0.05)
    epsilon_ratio: float = 2.0
    steps: int = 10
    identities: int = 200
    default_alpha: float = 0.02

    def __post_init__(self) -> None:
        self.attacks = tuple(self.attacks)
        self.alphas = tuple(float(a) for a in self.alphas)
        bad = [a for a in self.attacks if a not in ATTACKS]
        if bad:
            raise ScenarioError(f"unknown attacks {bad}")
        if self.identities < 2 or self.steps < 1 or any(a < 0 for a in self.alphas):
            raise ScenarioError("need identities >= 2, steps >= 1 and non-negative alphas")
        if self.default_alpha not in self.alphas:
            raise ScenarioError("default_alpha must be one of the swept alphas")

    def config(self, alpha: float) -> AttackConfig:
        return AttackConfig(alpha=alpha, epsilon=self.epsilon_ratio * alpha, steps=self.steps)

    @classmethod
    def from_dict(cls, d: dict, seed: Optional[int] = None) -> "Sweep":
        if d.get("version") != SWEEP_VERSION:
            raise ScenarioError(f"unsupported sweep version {d.get('version')!r}")
        known = {"seed", "attacks", "alphas", "epsilon_ratio", "steps", "identities", "default_alpha"}
        unknown = set(d) - known - {"version"}
        if unknown:
            raise ScenarioError(f"unknown sweep keys {sorted(unknown)}")
        kw = {k: d[k] for k in known if k in d}
        if seed is not None:
            kw["seed"] = seed
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path, seed: Optional[int] = None) -> "Sweep":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()), seed)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from None


@dataclass
class EvalReport:
    data: dict

    @property
    def ok(self) -> bool:
        return bool(self.data["ok"])

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    def eer(self, attack: str, alpha: float, pipeline: str, modality: str = "fused") -> float:
        for r in self.data["records"]:
            if (r["attack"], r["alpha"], r["pipeline"], r["modality"]) == (attack, alpha, pipeline, modality):
                return r["eer"]
        raise KeyError((attack, alpha, pipeline, modality))

    def summary(self) -> str:
        d = self.data
        lines = [f"attack evaluation seed={d['seed']} ({d['genuine']} genuine / {d['impostor']} impostor pairs)",
                 f"{'attack':<6} {'alpha':>6} {'pipeline':<9} {'acc':>7} {'auc':>7} {'eer':>7}"]
        for r in d["records"]:
            if r["modality"] == "fused":
                lines.append(f"{r['attack']:<6} {r['alpha']:>6.3f} {r['pipeline']:<9} "
                             f"{r['accuracy']:>7.4f} {r['auc']:>7.4f} {r['eer']:>7.4f}")
        for name, ok in sorted(d["checks"].items()):
            lines.append(f"  {'PASS' if ok else 'FAIL'}  {name}")
        return "\n".join(lines)


def _scores(refs, probes, setup, defended):
    out = np.empty((len(probes), 2))
    for k, (f, v) in enumerate(probes):
        if defended:
            f, v = defender_reconstruct(setup.denoiser, f, v)
        out[k, 0] = refs[k][0] @ extract_embedding(setup.face_model, f)
        out[k, 1] = refs[k][1] @ extract_embedding(setup.voice_model, v)
    return np.clip(out, -1.0, 1.0)


def _metrics(gen: np.ndarray, imp: np.ndarray, thresholds: dict) -> dict:
    out = {}
    for m, (g, i) in {
        "fused": (gen.mean(axis=1), imp.mean(axis=1)),
        "face": (gen[:, 0], imp[:, 0]),
        "voice": (gen[:, 1], imp[:, 1]),
    }.items():
        s = ScoreSet(g, i)
        out[m] = {
            "accuracy": compute_accuracy(s, thresholds[m]),
            "auc": compute_roc_auc(s)[3],
            "eer": compute_eer(s),
        }
    return out


def run_attack_eval(sweep: Sweep, defended: bool = True) -> EvalReport:
    """Metrics per (attack, alpha, pipeline, modality), plus a clean baseline.

    ``defended=False`` evaluates the original pipeline only.
    """
    setup = build_setup(sweep.seed)
    pop = setup.population
    rng = np.random.default_rng([sweep.seed, 0xE7A1])
    n = sweep.identities
    ids = [pop.new_identity(rng) for _ in range(n)]
    refs = []
    for ident in ids:
        f, v = pop.pair(ident, rng)
        refs.append((extract_embedding(setup.face_model, f), extract_embedding(setup.voice_model, v)))
    genuine = [pop.pair(ident, rng) for ident in ids]
    impostor = [pop.pair(ids[(k + 1 + int(rng.integers(n - 1))) % n], rng) for k in range(n)]

    pipelines = PIPELINES if defended else PIPELINES[:1]
    clean, imp_scores, thresholds = {}, {}, {}
    for p in pipelines:
        clean[p] = _scores(refs, genuine, setup, p == "defended")
        imp_scores[p] = _scores(refs, impostor, setup, p == "defended")
        g, i = clean[p], imp_scores[p]
        thresholds[p] = {
            "fused": calibrate_threshold(ScoreSet(g.mean(axis=1), i.mean(axis=1))),
            "face": calibrate_threshold(ScoreSet(g[:, 0], i[:, 0])),
            "voice": calibrate_threshold(ScoreSet(g[:, 1], i[:, 1])),
        }

    records = []

    def add(attack, alpha, cfg, p, gen):
        for m, vals in _metrics(gen, imp_scores[p], thresholds[p]).items():
            records.append({"attack": attack, "alpha": alpha, "epsilon": cfg[0], "steps": cfg[1],
                            "pipeline": p, "modality": m, **vals})

    for p in pipelines:
        add("none", 0.0, (0.0, 0), p, clean[p])
    for attack in sweep.attacks:
        for alpha in sweep.alphas:
            cfg = sweep.config(alpha)
            arng = np.random.default_rng([sweep.seed, ATTACKS.index(attack), int(round(alpha * 1e6))])
            adv = []
            for k, (f, v) in enumerate(genuine):
                adv.append((
                    run_attack(attack, LossContext(setup.face_model, refs[k][0]), f, cfg, arng),
                    run_attack(attack, LossContext(setup.voice_model, refs[k][1]), v, cfg, arng),
                ))
            for p in pipelines:
                add(attack, alpha, (cfg.epsilon, cfg.steps), p, _scores(refs, adv, setup, p == "defended"))

    curves = {
        attack: {p: [r["accuracy"] for r in records
                     if r["attack"] == attack and r["pipeline"] == p and r["modality"] == "fused"]
                 for p in pipelines}
        for attack in sweep.attacks
    }
    data = {
        "version": SWEEP_VERSION,
        "seed": sweep.seed,
        "sweep": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(sweep).items()},
        "genuine": n,
        "impostor": n,
        "thresholds": thresholds,
        "records": records,
        "accuracy_curves": {"alphas": list(sweep.alphas), "curves": curves},
    }
    report = EvalReport(data)
    data["checks"] = _checks(report, sweep, pipelines)
    data["ok"] = all(data["checks"].values())
    return report


def _checks(report: EvalReport, sweep: Sweep, pipelines) -> dict:
    checks = {}
    clean = report.eer("none", 0.0, "original")
    for attack in sweep.attacks:
        for alpha in sweep.alphas:
            if alpha >= 0.02:
                checks[f"{attack}@{alpha:g} raises original EER"] = report.eer(attack, alpha, "original") > clean
        if "defended" in pipelines:
            a = sweep.default_alpha
            checks[f"{attack}@{a:g} defended EER < original"] = (
                report.eer(attack, a, "defended") < report.eer(attack, a, "original"))
    return checks
