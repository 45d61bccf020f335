"""Wall-clock timing of the crypto primitives.

Reference values were measured on a single-board computer, so they are
printed next to ours for orientation only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import crypto

# seconds per operation on the reference embedded hardware
REFERENCE_S = {
    "setup": 1.419,
    "ecdh_agree": 0.458,
    "sign": 0.053,
    "verify": None,
    "seal": 0.087,
    "open": 0.016,
}


@dataclass(frozen=True)
class BenchRow:
    name: str
    iterations: int
    median_s: float
    p95_s: float
    reference_s: Optional[float]


def _time(fn: Callable[[], object], iters: int) -> np.ndarray:
    fn()  # warm-up
    out = np.empty(iters)
    for i in range(iters):
        t0 = time.perf_counter()
        fn()
        out[i] = time.perf_counter() - t0
    return out


def bench_crypto(iters: int = 200, payload: int = 1024, seed: int = 0) -> list[BenchRow]:
    """Median and p95 per primitive over ``iters`` runs (``iters >= 100``)."""
    if iters < 100:
        raise ValueError("need at least 100 iterations")
    rng = np.random.default_rng(seed)
    signer = crypto.gen_signing_keypair(rng)
    mine, theirs = crypto.EphemeralKeyPair.generate(rng), crypto.EphemeralKeyPair.generate(rng)
    peer = theirs.public_bytes
    key = rng.bytes(crypto.KEY_LEN)
    msg = rng.bytes(payload)
    sig = crypto.sign(signer, msg)
    box = crypto.seal(key, msg, b"bench", rng)

    cases = {
        "setup": lambda: crypto.gen_signing_keypair(rng),
        "ecdh_agree": lambda: crypto.kdf(crypto.agree(mine, peer), b"bench"),
        "sign": lambda: crypto.sign(signer, msg),
        "verify": lambda: crypto.verify(signer.public, msg, sig),
        "seal": lambda: crypto.seal(key, msg, b"bench", rng),
        "open": lambda: crypto.open_box(key, box, b"bench"),
    }
    rows = []
    for name, fn in cases.items():
        t = _time(fn, iters)
        rows.append(BenchRow(name, iters, float(np.median(t)), float(np.percentile(t, 95)), REFERENCE_S[name]))
    return rows


def format_table(rows: list[BenchRow]) -> str:
    lines = [f"{'primitive':<11} {'iters':>6} {'median ms':>10} {'p95 ms':>10} {'reference s':>12}"]
    for r in rows:
        ref = "-" if r.reference_s is None else f"{r.reference_s:.3f}"
        lines.append(f"{r.name:<11} {r.iterations:>6} {r.median_s * 1e3:>10.3f} {r.p95_s * 1e3:>10.3f} {ref:>12}")
    lines.append("reference: embedded-board figures, informational only")
    return "\n".join(lines)
