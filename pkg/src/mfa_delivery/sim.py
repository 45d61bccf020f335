"""Deterministic protocol simulator with a scripted network adversary.

A :class:`Scenario` lists sessions (registrations and deliveries) for a
seeded population.  Public-channel messages pass through an
:class:`Adversary` that can observe, drop, replay, tamper with, inject or
re-key them according to per-session actions.  Every active attack
*substitutes* the genuine message, so any accept in an attacked session is
a false accept.

Scenario file (JSON, ``"version": 1``)::

    {"version": 1, "name": "demo", "seed": 7, "clients": 2, "robots": 1,
     "plan": {"register_all": true, "auth_rounds": 1},
     "suite": {"kind": "adversary", "repeat": 1},
     "sessions": [
        {"client": 0, "kind": "auth", "expect": "not-accept",
         "adversary": [{"op": "tamper", "msg": "MAU1", "field": "q_s", "byte": 3, "bit": 1}]}
     ]}

``plan`` and ``suite`` are optional generators whose sessions come before
the explicit list.  ``expect`` is one of ``accept``, ``reject``, ``abort``,
``not-accept`` (auth) or ``registered``, ``abort`` (register).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import crypto
from .biometrics import BiometricSuite, cosine_similarity, extract_embedding
from .crypto import POINT_LEN, EphemeralKeyPair
from .errors import MfaError, ScenarioError
from .metrics import ScoreSet, calibrate_threshold
from .protocol import Client, Robot, Server, ServerPhase, ClientPhase, derive_subkey
from .registry import Registry
from .synth import BiometricSetup, Identity, build_setup
from .wire import (
    BY_NAME,
    MAU1,
    MAU2,
    MAU3,
    MRC1,
    MRC2,
    MRC3,
    PUBLIC,
    PUBLIC_TYPES,
    SECURE,
    Envelope,
    Message,
    Transcript,
    decode,
    encode_canonical,
    encode_raw,
    raw_fields,
    signing_bytes,
    split_raw,
    with_signature,
)

SCENARIO_VERSION = 1
REPORT_VERSION = 1

OPS = ("observe", "drop", "replay", "tamper", "inject", "mitm_swap_key", "substitute")
REG_MESSAGES = ("MRC1", "MRC2", "MRC3")
AUTH_MESSAGES = ("MAU1", "MAU2", "MAU3")
EXPECT = {
    "register": ("registered", "abort"),
    "auth": ("accept", "reject", "abort", "not-accept"),
}
_Q_FIELDS = {"MRC1": "q_c", "MRC2": "q_s", "MAU1": "q_s", "MAU2": "q_c"}


# ---------------------------------------------------------------------------
# scenario model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Action:
    op: str
    msg: str = ""
    field: str = ""
    byte: int = 0
    bit: int = 0
    from_session: Optional[int] = None
    body: bytes = b""  # substitute: the exact message to deliver

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        unknown = set(d) - {"op", "msg", "field", "byte", "bit", "from_session", "body"}
        if unknown:
            raise ScenarioError(f"unknown action keys {sorted(unknown)}")
        d = dict(d)
        try:
            d["body"] = bytes.fromhex(d.get("body", ""))
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(str(exc)) from None

    def to_dict(self) -> dict:
        d = {"op": self.op}
        if self.msg:
            d["msg"] = self.msg
        if self.op == "tamper":
            d.update(field=self.field, byte=self.byte, bit=self.bit)
        if self.from_session is not None:
            d["from_session"] = self.from_session
        if self.body:
            d["body"] = self.body.hex()
        return d

    @property
    def active(self) -> bool:
        return self.op != "observe"


@dataclass(frozen=True)
class SessionPlan:
    client: int
    kind: str
    expect: str
    adversary: tuple[Action, ...] = ()
    presenter: str = "genuine"
    robot: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SessionPlan":
        unknown = set(d) - {"client", "kind", "expect", "adversary", "presenter", "robot"}
        if unknown:
            raise ScenarioError(f"unknown session keys {sorted(unknown)}")
        try:
            return cls(
                client=int(d["client"]),
                kind=d["kind"],
                expect=d.get("expect", "registered" if d["kind"] == "register" else "accept"),
                adversary=tuple(Action.from_dict(a) for a in d.get("adversary", [])),
                presenter=d.get("presenter", "genuine"),
                robot=int(d.get("robot", 0)),
            )
        except KeyError as exc:
            raise ScenarioError(f"session is missing {exc}") from None

    def to_dict(self) -> dict:
        d = {"client": self.client, "kind": self.kind, "expect": self.expect}
        if self.adversary:
            d["adversary"] = [a.to_dict() for a in self.adversary]
        if self.presenter != "genuine":
            d["presenter"] = self.presenter
        if self.robot:
            d["robot"] = self.robot
        return d

    @property
    def attacked(self) -> bool:
        return any(a.active for a in self.adversary) or self.presenter != "genuine"


@dataclass
class Scenario:
    name: str
    seed: int
    clients: int
    robots: int = 1
    sessions: list[SessionPlan] = field(default_factory=list)
    defended: bool = True

    @classmethod
    def from_dict(cls, d: dict, seed: Optional[int] = None) -> "Scenario":
        if d.get("version") != SCENARIO_VERSION:
            raise ScenarioError(f"unsupported scenario version {d.get('version')!r}")
        sc = cls(
            name=str(d.get("name", "scenario")),
            seed=int(seed if seed is not None else d.get("seed", 0)),
            clients=int(d.get("clients", 1)),
            robots=int(d.get("robots", 1)),
            defended=bool(d.get("defended", True)),
        )
        plan = d.get("plan")
        if plan:
            sc.sessions += plan_sessions(sc.clients, bool(plan.get("register_all", True)),
                                         int(plan.get("auth_rounds", 0)))
        suite = d.get("suite")
        if suite:
            if suite.get("kind") != "adversary":
                raise ScenarioError(f"unknown suite {suite.get('kind')!r}")
            sc.sessions += adversary_suite(int(suite.get("repeat", 1)), offset=len(sc.sessions),
                                           clients=sc.clients)
        sc.sessions += [SessionPlan.from_dict(s) for s in d.get("sessions", [])]
        validate(sc)
        return sc

    @classmethod
    def load(cls, path: str | Path, seed: Optional[int] = None) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from None
        return cls.from_dict(data, seed)

    def to_dict(self) -> dict:
        return {
            "version": SCENARIO_VERSION,
            "name": self.name,
            "seed": self.seed,
            "clients": self.clients,
            "robots": self.robots,
            "defended": self.defended,
            "sessions": [s.to_dict() for s in self.sessions],
        }


def plan_sessions(clients: int, register_all: bool = True, auth_rounds: int = 1) -> list[SessionPlan]:
    out = [SessionPlan(c, "register", "registered") for c in range(clients)] if register_all else []
    for _ in range(auth_rounds):
        out += [SessionPlan(c, "auth", "accept") for c in range(clients)]
    return out


def validate(sc: Scenario) -> None:
    if sc.clients < 1 or sc.robots < 1:
        raise ScenarioError("need at least one client and one robot")
    sent: list[set[str]] = []
    for i, s in enumerate(sc.sessions):
        where = f"session {i}"
        if s.kind not in EXPECT:
            raise ScenarioError(f"{where}: unknown kind {s.kind!r}")
        if s.expect not in EXPECT[s.kind]:
            raise ScenarioError(f"{where}: expect {s.expect!r} is not valid for {s.kind}")
        if not 0 <= s.client < sc.clients:
            raise ScenarioError(f"{where}: no client {s.client}")
        if not 0 <= s.robot < sc.robots:
            raise ScenarioError(f"{where}: no robot {s.robot}")
        if s.presenter not in ("genuine", "impostor"):
            raise ScenarioError(f"{where}: presenter must be genuine or impostor")
        allowed = REG_MESSAGES if s.kind == "register" else AUTH_MESSAGES
        for a in s.adversary:
            if a.op not in OPS:
                raise ScenarioError(f"{where}: unknown op {a.op!r}")
            if a.op == "observe":
                continue
            if a.msg not in PUBLIC_TYPES:
                raise ScenarioError(f"{where}: {a.msg!r} is not a public-channel message")
            if a.msg not in allowed:
                raise ScenarioError(f"{where}: {a.msg} does not occur in a {s.kind} session")
            if a.op == "tamper" and a.field not in dict(BY_NAME[a.msg].LAYOUT):
                raise ScenarioError(f"{where}: {a.msg} has no field {a.field!r}")
            if a.op == "mitm_swap_key" and a.msg not in _Q_FIELDS:
                raise ScenarioError(f"{where}: {a.msg} carries no public key")
            if a.op == "substitute":
                try:
                    ok = decode(a.body).name == a.msg
                except MfaError:
                    ok = False
                if not ok:
                    raise ScenarioError(f"{where}: substitute body is not a well-formed {a.msg}")
            if a.op == "replay":
                j = a.from_session
                if j is None or not 0 <= j < i:
                    raise ScenarioError(f"{where}: replay needs an earlier from_session")
                if a.msg not in sent[j]:
                    raise ScenarioError(f"{where}: session {j} never carries {a.msg}")
        targets = [a.msg for a in s.adversary if a.active]
        if len(targets) != len(set(targets)):
            raise ScenarioError(f"{where}: at most one active action per message")
        sent.append(set(allowed))


# ---------------------------------------------------------------------------
# adversary suite
# ---------------------------------------------------------------------------


def _attack_variants(msgs: tuple[str, ...], donor: int, rep: int) -> list[tuple[Action, ...]]:
    out = []
    for name in msgs:
        cls = BY_NAME[name]
        for fname, _ in cls.LAYOUT:
            out.append((Action("tamper", name, fname, byte=3 * rep + 1, bit=rep % 8),))
        out.append((Action("replay", name, from_session=donor),))
        out.append((Action("drop", name),))
        out.append((Action("inject", name),))
        if name in _Q_FIELDS:
            out.append((Action("mitm_swap_key", name),))
    return out


def adversary_suite(repeat: int = 1, offset: int = 0, clients: int = 2) -> list[SessionPlan]:
    """Every public message attacked every way, each followed by an honest session.

    Client 0 carries the delivery attacks; client 1 is re-registered under
    each registration attack.  Replays use the most recent completed
    session of the same kind.
    """
    if clients < 2:
        raise ScenarioError("the adversary suite needs at least two clients")
    out = [SessionPlan(0, "register", "registered"), SessionPlan(1, "register", "registered"),
           SessionPlan(0, "auth", "accept")]
    last_reg, last_auth = offset + 1, offset + 2
    for rep in range(repeat):
        for actions in _attack_variants(AUTH_MESSAGES, last_auth, rep):
            out.append(SessionPlan(0, "auth", "not-accept", actions))
            out.append(SessionPlan(0, "auth", "accept"))
            last_auth = offset + len(out) - 1
        for actions in _attack_variants(REG_MESSAGES, last_reg, rep):
            out.append(SessionPlan(1, "register", "abort", actions))
            out.append(SessionPlan(1, "register", "registered"))
            last_reg = offset + len(out) - 1
            out.append(SessionPlan(1, "auth", "accept"))
        out.append(SessionPlan(0, "auth", "not-accept", presenter="impostor"))
    return out


# ---------------------------------------------------------------------------
# network adversary
# ---------------------------------------------------------------------------


class Adversary:
    """Interprets per-session actions on the public channel and records traffic."""

    def __init__(self, rng: np.random.Generator) -> None:
        self.rng = rng
        self.signing = crypto.gen_signing_keypair(rng)
        self.recorded: dict[int, dict[str, bytes]] = {}
        self.log: list[dict] = []

    def _point(self) -> bytes:
        return EphemeralKeyPair.generate(self.rng).public_bytes

    def _forge(self, name: str) -> bytes:
        cls = BY_NAME[name]
        values = {}
        for fname, kind in cls.LAYOUT:
            if kind == "sig":
                continue
            if kind == POINT_LEN and fname.startswith("q_"):
                values[fname] = self._point()
            elif isinstance(kind, int):
                values[fname] = self.rng.bytes(kind)
            else:
                key = self.rng.bytes(32)
                values[fname] = crypto.seal(key, self.rng.bytes(48), b"", self.rng).to_bytes()
        msg: Message = cls(**values)
        if msg.signed:
            msg = with_signature(msg, crypto.sign(self.signing, signing_bytes(msg)))
        return encode_canonical(msg)

    def intercept(self, session: int, actions: tuple[Action, ...], body: bytes) -> Optional[bytes]:
        name = decode(body).name
        self.recorded.setdefault(session, {})[name] = body
        for a in actions:
            if not a.active or a.msg != name:
                continue
            self.log.append({"session": session, "op": a.op, "msg": name})
            if a.op == "drop":
                return None
            if a.op == "replay":
                return self.recorded[a.from_session][name]
            if a.op == "inject":
                return self._forge(name)
            if a.op == "substitute":
                return a.body
            if a.op == "tamper":
                tag, parts = split_raw(body)
                pos = [f for f, _ in BY_NAME[name].LAYOUT].index(a.field)
                part = bytearray(parts[pos])
                part[a.byte % len(part)] ^= 1 << (a.bit % 8)
                parts[pos] = bytes(part)
                return encode_raw(tag, parts)
            if a.op == "mitm_swap_key":
                tag, parts = split_raw(body)
                pos = [f for f, _ in BY_NAME[name].LAYOUT].index(_Q_FIELDS[name])
                parts[pos] = self._point()
                return encode_raw(tag, parts)
        return body


class Network:
    """Ordered delivery with a logical clock; the public side is transcribed."""

    def __init__(self, transcript: Transcript, adversary: Adversary) -> None:
        self.transcript = transcript
        self.adversary = adversary
        self.seq = 0
        self.clock = 0

    def _tick(self) -> tuple[int, int]:
        self.seq += 1
        self.clock += 10
        return self.seq, self.clock

    def public(self, sender: str, receiver: str, msg: Message, session: int,
               actions: tuple[Action, ...]) -> Optional[bytes]:
        env = Envelope.wrap(PUBLIC, sender, receiver, *self._tick(), msg)
        self.transcript.append(env)
        out = self.adversary.intercept(session, actions, env.body)
        if out is not None and out != env.body:
            self.transcript.append(Envelope(PUBLIC, "adversary", receiver, *self._tick(), out))
        return out

    def secure(self, sender: str, receiver: str, msg: Message) -> Message:
        # built for the channel check only; nothing is logged
        Envelope.wrap(SECURE, sender, receiver, 0, self.clock, msg)
        return msg


# ---------------------------------------------------------------------------
# world
# ---------------------------------------------------------------------------


def calibrate_suite(setup: BiometricSetup, seed: int, n: int = 100,
                    defended: bool = True) -> BiometricSuite:
    """Pick per-modality thresholds from a held-out clean calibration set."""
    pop, rng = setup.population, np.random.default_rng([seed, 0xCA1])
    base = BiometricSuite(setup.face_model, setup.voice_model, setup.denoiser, 0.0, 0.0)
    ids = [pop.new_identity(rng) for _ in range(n)]
    refs = [pop.pair(i, rng) for i in ids]
    refs = [(extract_embedding(base.face_model, f), extract_embedding(base.voice_model, v)) for f, v in refs]
    gen, imp = [], []
    for k, ident in enumerate(ids):
        for target, bucket in ((ident, gen), (ids[(k + 1) % n], imp)):
            fe, ve = base.embed(*pop.pair(target, rng), defended=defended)
            bucket.append((cosine_similarity(refs[k][0], fe), cosine_similarity(refs[k][1], ve)))
    gen, imp = np.array(gen), np.array(imp)
    tf = calibrate_threshold(ScoreSet(gen[:, 0], imp[:, 0]))
    tv = calibrate_threshold(ScoreSet(gen[:, 1], imp[:, 1]))
    return BiometricSuite(setup.face_model, setup.voice_model, setup.denoiser, tf, tv)


class World:
    def __init__(self, seed: int, clients: int, robots: int = 1, defended: bool = True) -> None:
        self.seed = seed
        self.setup = build_setup(seed)
        self.suite = calibrate_suite(self.setup, seed, defended=defended)
        streams = np.random.SeedSequence([seed, 0xD1]).spawn(3)
        self.rng = np.random.default_rng(streams[0])  # protocol randomness
        self.bio_rng = np.random.default_rng(streams[1])  # presented samples
        self.adv_rng = np.random.default_rng(streams[2])
        pop = self.setup.population
        self.registry = Registry(rng=self.rng)
        self.server = Server(crypto.gen_signing_keypair(self.rng), self.registry, self.suite, self.rng)
        self.robots = []
        for _ in range(robots):
            robot = Robot(self.suite, defended=defended)
            mrr2, _ = self.server.handle_rr1(robot.begin_enrolment())
            robot.handle_rr2(mrr2)
            self.robots.append(robot)
        self.clients = [Client(crypto.gen_signing_keypair(self.rng), self.server.public_bytes, self.rng)
                        for _ in range(clients)]
        self.identities: list[Identity] = [pop.new_identity(self.bio_rng) for _ in range(clients)]

    def sample(self, client: int, impostor: bool = False):
        pop = self.setup.population
        ident = pop.new_identity(self.bio_rng) if impostor else self.identities[client]
        return pop.pair(ident, self.bio_rng)


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


@dataclass
class Report:
    data: dict
    timings: dict = field(default_factory=dict)  # wall clock; not persisted

    @property
    def ok(self) -> bool:
        return bool(self.data["ok"])

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        d = self.data
        s = d["summary"]
        lines = [
            f"scenario {d['scenario']} seed={d['seed']}: {s['sessions']} sessions, "
            f"{s['accept']} accept, {s['reject']} reject, {s['abort']} abort, {s['registered']} registered",
            f"attacked sessions: {s['attacked']}, false accepts: {s['false_accepts']}, "
            f"expectation mismatches: {s['mismatches']}",
        ]
        for name, ok in sorted(d["invariants"].items()):
            lines.append(f"  {'PASS' if ok else 'FAIL'}  {name}")
        return "\n".join(lines)


class _ChainOracle:
    """Independent fold of recorded (lambda, mu) steps per client."""

    def __init__(self) -> None:
        self.base: dict[int, tuple[bytes, bytes]] = {}
        self.steps: dict[int, list[tuple[bytes, bytes]]] = {}
        self.uids: dict[int, list[bytes]] = {}

    def enrolled(self, rid: int, uid: bytes, key: bytes) -> None:
        self.base[rid], self.steps[rid], self.uids[rid] = (uid, key), [], [uid]

    def __call__(self, rid: int, lam: bytes, mu: bytes, from_previous: bool) -> None:
        if from_previous:
            self.steps[rid].pop()
        self.steps[rid].append((lam, mu))
        self.uids[rid].append(self.fold(rid)[0])

    def fold(self, rid: int, upto: Optional[int] = None) -> tuple[bytes, bytes]:
        uid, key = (np.frombuffer(b, dtype=np.uint8).copy() for b in self.base[rid])
        for lam, mu in self.steps[rid][:upto]:
            uid ^= np.frombuffer(mu, dtype=np.uint8)
            key ^= np.frombuffer(lam, dtype=np.uint8)
        return uid.tobytes(), key.tobytes()


def _field_values(bodies: dict[str, bytes]) -> set[bytes]:
    out = set()
    for body in bodies.values():
        msg = decode(body)
        for name, raw in raw_fields(msg).items():
            if name != "sig":
                out.add(raw)
    return out


def run_scenario(sc: Scenario, transcript: Optional[Transcript] = None) -> tuple[Report, Transcript]:
    validate(sc)
    t_start = time.perf_counter()
    world = World(sc.seed, sc.clients, sc.robots, sc.defended)
    transcript = transcript or Transcript({"scenario": sc.name, "seed": str(sc.seed)})
    adversary = Adversary(world.adv_rng)
    net = Network(transcript, adversary)
    oracle = _ChainOracle()
    world.registry.observers.append(oracle)
    rid_of: dict[int, int] = {}

    records, checks = [], {
        "subkey_agreement": True,
        "secrets_erased": True,
        "chain_algebra": True,
        "transcript_public_only": True,
        "recovery_after_attack": True,
        "pseudonym_freshness": True,
        "unlinkability": True,
    }
    honest_bodies: dict[int, list[dict[str, bytes]]] = {}
    pending_recovery: set[int] = set()
    session_times = []

    for i, plan in enumerate(sc.sessions):
        t0 = time.perf_counter()
        client = world.clients[plan.client]
        if plan.kind == "register":
            outcome, reason, sent = _register(world, net, i, plan)
            if outcome == "registered":
                rec = world.registry.get(world.registry.clients[-1].rid)
                rid_of[plan.client] = rec.rid
                oracle.enrolled(rec.rid, rec.uid, rec.key_lt)
        else:
            outcome, reason, sent, agree = _authenticate(world, net, i, plan)
            checks["subkey_agreement"] &= agree
        session_times.append(time.perf_counter() - t0)

        live = world.server.inspect_secrets() or client.inspect_secrets() or any(
            r.inspect_secrets() for r in world.robots)
        checks["secrets_erased"] &= not live

        ok = outcome == plan.expect or (plan.expect == "not-accept" and outcome in ("reject", "abort"))
        records.append({
            "index": i,
            "client": plan.client,
            "kind": plan.kind,
            "expect": plan.expect,
            "outcome": outcome,
            "reason": reason,
            "attacked": plan.attacked,
            "ok": ok,
        })
        if plan.kind == "auth" and not plan.attacked and outcome == "accept":
            honest_bodies.setdefault(plan.client, []).append(sent)
        if plan.attacked:
            pending_recovery.add(plan.client)
        elif plan.client in pending_recovery:
            if plan.kind == "auth" and outcome != "accept" and plan.expect == "accept":
                checks["recovery_after_attack"] = False
            if plan.kind == "auth" or outcome == "registered":
                pending_recovery.discard(plan.client)

    for c, rid in rid_of.items():
        rec = world.registry.get(rid)
        checks["chain_algebra"] &= (rec.uid, rec.key_lt) == oracle.fold(rid)
        if rec.prev is not None:
            checks["chain_algebra"] &= rec.prev == oracle.fold(rid, -1)
    for rid, uids in oracle.uids.items():
        checks["pseudonym_freshness"] &= len(set(uids)) == len(uids)
    checks["transcript_public_only"] = all(e.channel == PUBLIC for e in transcript.entries)
    checks["unlinkability"] = _unlinkable(honest_bodies, oracle, transcript)

    summary = {k: sum(r["outcome"] == k for r in records) for k in ("accept", "reject", "abort", "registered")}
    summary.update(
        sessions=len(records),
        attacked=sum(r["attacked"] for r in records),
        false_accepts=sum(r["attacked"] and r["outcome"] == "accept" for r in records),
        mismatches=sum(not r["ok"] for r in records),
        adversary_actions=len(adversary.log),
    )
    checks["no_false_accept"] = summary["false_accepts"] == 0
    data = {
        "version": REPORT_VERSION,
        "scenario": sc.name,
        "seed": sc.seed,
        "thresholds": {"face": world.suite.face_threshold, "voice": world.suite.voice_threshold},
        "sessions": records,
        "invariants": checks,
        "summary": summary,
        "ok": summary["mismatches"] == 0 and all(checks.values()),
    }
    times = np.array(session_times) if session_times else np.zeros(1)
    timings = {
        "total_s": time.perf_counter() - t_start,
        "session_median_s": float(np.median(times)),
        "session_p95_s": float(np.percentile(times, 95)),
    }
    return Report(data, timings), transcript


def _unlinkable(bodies: dict[int, list[dict[str, bytes]]], oracle: _ChainOracle,
                transcript: Transcript) -> bool:
    for runs in bodies.values():
        values = [_field_values(r) for r in runs]
        for a, b in zip(values, values[1:]):
            if a & b:
                return False
    wire = b"".join(e.body for e in transcript.entries)
    return not any(uid in wire for uids in oracle.uids.values() for uid in uids)


def _deliver(body: Optional[bytes], expected: type[Message]) -> Message:
    if body is None:
        raise _Timeout()
    msg = decode(body)
    if not isinstance(msg, expected):
        raise ScenarioError(f"expected {expected.__name__}, got {type(msg).__name__}")
    return msg


class _Timeout(Exception):
    pass


def _register(world: World, net: Network, i: int, plan: SessionPlan):
    client = world.clients[plan.client]
    name = f"client:{plan.client}"
    sent: dict[str, bytes] = {}
    m1, csess = client.begin_registration()
    ssess = None
    stage = "server"
    try:
        body = net.public(name, "server", m1, i, plan.adversary)
        sent["MRC1"] = encode_canonical(m1)
        m2, ssess = world.server.handle_rc1(_deliver(body, MRC1), client.public_bytes)
        sent["MRC2"] = encode_canonical(m2)
        body = net.public("server", name, m2, i, plan.adversary)
        stage = "client"
        m3 = client.handle_rc2(csess, _deliver(body, MRC2), *world.sample(plan.client))
        sent["MRC3"] = encode_canonical(m3)
        body = net.public(name, "server", m3, i, plan.adversary)
        stage = "server"
        world.server.handle_rc3(ssess, _deliver(body, MRC3))
    except _Timeout:
        csess.abort("timeout")
        if ssess is not None:
            ssess.abort("timeout")
        return "abort", "timeout", sent
    except MfaError as exc:
        csess.abort("peer aborted")
        if ssess is not None:
            ssess.abort("peer aborted")
        return "abort", f"{stage}:{type(exc).__name__}", sent
    return "registered", None, sent


def _authenticate(world: World, net: Network, i: int, plan: SessionPlan):
    """One delivery.  Returns (outcome, reason, honest bodies sent, subkey agreement)."""
    client = world.clients[plan.client]
    robot = world.robots[plan.robot]
    server = world.server
    name = f"client:{plan.client}"
    sent: dict[str, bytes] = {}
    if not client.registered:
        return "abort", "client:NotRegistered", sent, True
    try:
        m1, ssess = server.begin_auth(client.package_uid, robot.pid)
    except MfaError as exc:
        return "abort", f"server:{type(exc).__name__}", sent, True
    sent["MAU1"] = encode_canonical(m1)
    stage = "client"
    try:
        body = net.public("server", name, m1, i, plan.adversary)
        m2, csess = client.handle_au1(_deliver(body, MAU1))
        sent["MAU2"] = encode_canonical(m2)
        body = net.public(name, "server", m2, i, plan.adversary)
        stage = "server"
        m3 = server.handle_au2(ssess, _deliver(body, MAU2))
        sent["MAU3"] = encode_canonical(m3)
    except _Timeout:
        server.abort(ssess, "timeout")
        client.abort("timeout")
        return "abort", "timeout", sent, True
    except MfaError as exc:
        server.abort(ssess, "peer aborted")
        client.abort("peer aborted")
        return "abort", f"{stage}:{type(exc).__name__}", sent, True

    # the robot is dispatched as soon as the index is issued
    mau4 = net.secure("server", f"robot:{plan.robot}", server.dispatch_robot(ssess))
    expected = derive_subkey(crypto.key_to_chars(mau4.session_key, robot.n), mau4.chosen_index)
    robot.handle_au4(mau4)
    del mau4
    client_note = None
    try:
        body = net.public("server", name, m3, i, plan.adversary)
        client.handle_au3(client.session, _deliver(body, MAU3))
    except _Timeout:
        client.abort("timeout")
        client_note = "timeout"
    except MfaError as exc:
        client_note = f"client:{type(exc).__name__}"
    spoken = client.spoken_subkey() if client.session.phase is ClientPhase.DONE else ""
    agree = not spoken or spoken == expected
    result, response = robot.verify(spoken, *world.sample(plan.client, plan.presenter == "impostor"))
    server.finalize(ssess, net.secure(f"robot:{plan.robot}", "server", response))
    assert ssess.phase is ServerPhase.DONE
    if result.accepted:
        return "accept", None, sent, agree
    reason = f"robot:{result.reason}"
    if client_note:
        reason = f"{client_note};{reason}"
    return "reject", reason, sent, agree


# ---------------------------------------------------------------------------
# transcript replay
# ---------------------------------------------------------------------------


def _client_of(env: Envelope) -> int:
    for end in (env.sender, env.receiver):
        if end.startswith("client:"):
            return int(end.split(":", 1)[1])
    raise ScenarioError(f"envelope {env.seq} has no client endpoint")


def replay_scenario(sc: Scenario, recorded: Transcript) -> Scenario:
    """``sc`` extended with one fresh session per distinct recorded message.

    Each replay session delivers the recorded bytes in place of the genuine
    message and must not accept.  A registration replay is followed by an
    honest re-registration and a delivery, an auth replay by a delivery, so
    recovery is checked as well.
    """
    out = Scenario(f"{sc.name}+replay", sc.seed, sc.clients, sc.robots, list(sc.sessions), sc.defended)
    seen = set()
    for env in recorded:
        if env.body in seen:
            continue
        seen.add(env.body)
        try:
            name = decode(env.body).name
        except MfaError:
            continue
        c = _client_of(env)
        act = (Action("substitute", name, body=env.body),)
        if name in REG_MESSAGES:
            out.sessions += [SessionPlan(c, "register", "abort", act),
                             SessionPlan(c, "register", "registered"), SessionPlan(c, "auth", "accept")]
        else:
            out.sessions += [SessionPlan(c, "auth", "not-accept", act), SessionPlan(c, "auth", "accept")]
    validate(out)
    return out


def run_replay(sc: Scenario, recorded: Transcript) -> tuple[Report, Transcript]:
    """Rebuild the recorded world from ``sc`` and feed every recorded message into fresh sessions.

    Raises ScenarioError if ``sc`` does not reproduce the recorded transcript.
    """
    report, transcript = run_scenario(replay_scenario(sc, recorded))
    n = len(recorded)
    if [e.to_bytes() for e in transcript.entries[:n]] != [e.to_bytes() for e in recorded.entries]:
        raise ScenarioError("transcript was not produced by this scenario and seed")
    replayed = report.data["sessions"][len(sc.sessions):]
    attacked = [r for r in replayed if r["attacked"]]
    report.data["replay"] = {
        "recorded_messages": n,
        "replayed_sessions": len(attacked),
        "accepted": sum(r["outcome"] in ("accept", "registered") for r in attacked),
    }
    report.data["ok"] = report.data["ok"] and report.data["replay"]["accepted"] == 0
    return report, transcript
