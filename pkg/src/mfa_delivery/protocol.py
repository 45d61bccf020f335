"""Server, client and robot state machines.

Robot enrolment (MRR1/MRR2) and client registration (MRC1..MRC3) set up
long-term material; each delivery then runs MAU1..MAU3 on the public
channel, MAU4 and the robot's response on the secure link.

Handlers validate a message completely before touching any state.  A
failure raises (a subclass of) :class:`MfaError`, aborts the session and
erases its secrets; long-term state (registry, client pseudonym chain) is
left as it was.
"""

from __future__ import annotations

import enum
import hmac
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import crypto
from .biometrics import (
    AuthResult,
    BiometricSuite,
    cosine_similarity,
    embedding_from_bytes,
    embedding_to_bytes,
    extract_embedding,
    fuse_decision,
    pack_biometrics,
    unpack_biometrics,
)
from .crypto import SYSTEM_RNG, EphemeralKeyPair, RandomSource, SigningKeyPair
from .errors import (
    AuthFailure,
    BadSignature,
    ChannelError,
    DegenerateInput,
    IndexOutOfRange,
    InvalidPoint,
    MfaError,
    PhaseError,
    TidMismatch,
    UidMismatch,
)
from .registry import ClientRecord, Registry, RobotRecord
from .wire import (
    KEY_LT_LEN,
    LAMBDA_LEN,
    MAU1,
    MAU2,
    MAU3,
    MAU4,
    MRC1,
    MRC2,
    MRC3,
    MRR1,
    MRR2,
    MU_LEN,
    SECURE,
    TID_LEN,
    UID_LEN,
    Message,
    RobotResponse,
    signing_bytes,
    with_signature,
)

DEFAULT_N = 16
DEFAULT_K = 6
SYSTEM_PARAMS = b"P-256/ECDSA-SHA256/ECDH-HKDF-SHA256/AES-256-GCM"

_REG_CONTEXT = b"mfa-delivery registration"
_AUTH_CONTEXT = b"mfa-delivery authentication"


def _ad(cls: type[Message], name: str) -> bytes:
    """Associated data binding a sealed field to its message type and slot."""
    return bytes([cls.TAG]) + name.encode()


def _sign(sk: SigningKeyPair, msg: Message) -> Message:
    return with_signature(msg, crypto.sign(sk, signing_bytes(msg)))


def _check_sig(pk: bytes, msg: Message) -> None:
    if msg.sig is None or not crypto.verify(pk, signing_bytes(msg), msg.sig):
        raise BadSignature(f"{msg.name} signature does not verify")


def _session_key(eph: EphemeralKeyPair, peer: bytes, context: bytes, q_c: bytes, q_s: bytes) -> bytes:
    return crypto.kdf(crypto.agree(eph, peer), context + q_c + q_s)


class _Secrets:
    """Named mutable buffers that can be zeroed in place."""

    def __init__(self) -> None:
        self._slots: dict[str, bytearray] = {}

    def put(self, name: str, value: bytes) -> None:
        self.wipe(name)
        self._slots[name] = bytearray(value)

    def get(self, name: str) -> bytes:
        buf = self._slots.get(name)
        if buf is None:
            raise crypto.ErasedSecret(f"{name} is not available")
        return bytes(buf)

    def has(self, name: str) -> bool:
        return name in self._slots

    def wipe(self, name: str) -> None:
        buf = self._slots.pop(name, None)
        if buf is not None:
            buf[:] = bytes(len(buf))

    def wipe_all(self) -> None:
        for name in list(self._slots):
            self.wipe(name)

    def live(self) -> dict[str, bytes]:
        return {k: bytes(v) for k, v in self._slots.items()}


# ---------------------------------------------------------------------------
# subkey
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubkeyIndex:
    positions: tuple[int, ...]
    n: int = DEFAULT_N

    def __post_init__(self) -> None:
        pos = tuple(sorted(int(p) for p in self.positions))
        if len(set(pos)) != len(pos):
            raise ValueError("index positions must be distinct")
        if pos and (pos[0] < 0 or pos[-1] >= self.n):
            raise IndexOutOfRange(f"positions must lie in [0, {self.n})")
        if len(pos) > self.n:
            raise ValueError("more positions than key characters")
        object.__setattr__(self, "positions", pos)

    @property
    def k(self) -> int:
        return len(self.positions)

    def to_bytes(self) -> bytes:
        return bytes(self.positions)


def sample_index(rng: RandomSource, n: int = DEFAULT_N, k: int = DEFAULT_K) -> SubkeyIndex:
    """``k`` distinct positions in ``[0, n)``, uniform without replacement."""
    if not 1 <= k <= n <= 256:
        raise ValueError("need 1 <= k <= n <= 256")
    limit = 256 - 256 % n
    chosen: list[int] = []
    while len(chosen) < k:
        for b in rng.bytes(2 * k):
            if b < limit and b % n not in chosen:
                chosen.append(b % n)
                if len(chosen) == k:
                    break
    return SubkeyIndex(tuple(chosen), n)


def derive_subkey(keychars: str, index: SubkeyIndex | tuple | list | set) -> str:
    """Characters of ``keychars`` at the chosen positions, in ascending order."""
    positions = index.positions if isinstance(index, SubkeyIndex) else sorted(index)
    if any(p < 0 or p >= len(keychars) for p in positions):
        raise IndexOutOfRange(f"positions must lie in [0, {len(keychars)})")
    return "".join(keychars[p] for p in positions)


# ---------------------------------------------------------------------------
# sessions
# ---------------------------------------------------------------------------


class ServerPhase(enum.Enum):
    AWAIT_AU2 = "AwaitAU2"
    AWAIT_ROBOT = "AwaitRobot"
    DONE = "Done"
    ABORTED = "Aborted"


class ClientPhase(enum.Enum):
    AWAIT_AU1 = "AwaitAU1"
    AWAIT_AU3 = "AwaitAU3"
    DONE = "Done"
    ABORTED = "Aborted"


class RegPhase(enum.Enum):
    AWAIT_RC2 = "AwaitRC2"
    AWAIT_RC3 = "AwaitRC3"
    DONE = "Done"
    ABORTED = "Aborted"


@dataclass(eq=False)
class _Session:
    secrets: _Secrets = field(default_factory=_Secrets, repr=False)
    eph: Optional[EphemeralKeyPair] = field(default=None, repr=False)
    error: Optional[str] = None

    def _erase(self) -> None:
        self.secrets.wipe_all()
        if self.eph is not None:
            self.eph.erase()

    def inspect_secrets(self) -> dict[str, bytes]:
        """Secret material still held by this session (empty once finished)."""
        out = self.secrets.live()
        if self.eph is not None and not self.eph.erased:
            out["ephemeral"] = b"live"
        return out


@dataclass(eq=False)
class ServerRegSession(_Session):
    phase: RegPhase = RegPhase.AWAIT_RC3
    client_pk: bytes = b""
    tid_s: bytes = b""
    uid: bytes = b""

    def abort(self, reason: str = "aborted") -> None:
        if self.phase not in (RegPhase.DONE, RegPhase.ABORTED):
            self.phase, self.error = RegPhase.ABORTED, reason
        self._erase()


@dataclass(eq=False)
class ClientRegSession(_Session):
    phase: RegPhase = RegPhase.AWAIT_RC2
    tid_c: bytes = b""
    q_c: bytes = b""

    def abort(self, reason: str = "aborted") -> None:
        if self.phase not in (RegPhase.DONE, RegPhase.ABORTED):
            self.phase, self.error = RegPhase.ABORTED, reason
        self._erase()


@dataclass(eq=False)
class ServerSession(_Session):
    """Server side of one delivery authentication."""

    phase: ServerPhase = ServerPhase.AWAIT_AU2
    rid: int = -1
    pid: bytes = b""
    uid: bytes = b""  # pseudonym the session is bound to
    epoch_flag: str = "current"
    q_s: bytes = b""
    tid: bytes = b""
    index: Optional[SubkeyIndex] = None
    result: Optional[bool] = None

    def abort(self, reason: str = "aborted") -> None:
        if self.phase not in (ServerPhase.DONE, ServerPhase.ABORTED):
            self.phase, self.error = ServerPhase.ABORTED, reason
        self._erase()


@dataclass(eq=False)
class ClientSession(_Session):
    phase: ClientPhase = ClientPhase.AWAIT_AU1
    tid: bytes = b""
    q_c: bytes = b""
    index: Optional[SubkeyIndex] = None
    subkey: str = ""

    def abort(self, reason: str = "aborted") -> None:
        if self.phase not in (ClientPhase.DONE, ClientPhase.ABORTED):
            self.phase, self.error = ClientPhase.ABORTED, reason
        self._erase()


# ---------------------------------------------------------------------------
# server
# ---------------------------------------------------------------------------


class Server:
    def __init__(self, signing: SigningKeyPair, registry: Registry, suite: BiometricSuite,
                 rng: RandomSource = SYSTEM_RNG, n: int = DEFAULT_N, k: int = DEFAULT_K) -> None:
        self.signing = signing
        self.registry = registry
        self.suite = suite
        self.rng = rng
        self.n, self.k = n, k
        self._active: dict[int, ServerSession] = {}

    @property
    def public_bytes(self) -> bytes:
        return self.signing.public_bytes

    # -- robots -----------------------------------------------------------

    def handle_rr1(self, m: MRR1, channel: str = SECURE) -> tuple[MRR2, RobotRecord]:
        if channel != SECURE:
            raise ChannelError("robot enrolment must use the secure channel")
        rec = self.registry.create_robot_record()
        return MRR2(k_long=rec.k_long, pid=rec.pid, tid=rec.tid), rec

    # -- registration -----------------------------------------------------

    def handle_rc1(self, m: MRC1, client_pk: bytes) -> tuple[MRC2, ServerRegSession]:
        _check_sig(client_pk, m)
        crypto.decode_point(m.q_c)
        sess = ServerRegSession(client_pk=bytes(client_pk))
        try:
            sess.eph = EphemeralKeyPair.generate(self.rng)
            q_s = sess.eph.public_bytes
            key = _session_key(sess.eph, m.q_c, _REG_CONTEXT, m.q_c, q_s)
            sess.eph.erase()
            sess.secrets.put("session_key", key)
            uid, key_lt = self.registry.draw_uid(), self.rng.bytes(KEY_LT_LEN)
            sess.uid = uid
            sess.secrets.put("key_lt", key_lt)
            sess.tid_s = self.rng.bytes(TID_LEN)
            body = MRC2(
                q_s=q_s,
                tid_s=sess.tid_s,
                sealed_tid_c=crypto.seal(key, m.tid_c, _ad(MRC2, "sealed_tid_c"), self.rng).to_bytes(),
                sealed_uid_key=crypto.seal(key, uid + key_lt, _ad(MRC2, "sealed_uid_key"),
                                           self.rng).to_bytes(),
            )
        except MfaError as exc:
            sess.abort(type(exc).__name__)
            raise
        return _sign(self.signing, body), sess

    def handle_rc3(self, sess: ServerRegSession, m: MRC3) -> ClientRecord:
        if sess.phase is not RegPhase.AWAIT_RC3:
            raise PhaseError(f"registration session is {sess.phase.value}")
        try:
            _check_sig(sess.client_pk, m)
            key = sess.secrets.get("session_key")
            tid = crypto.open_box(key, m.sealed_tid_s, _ad(MRC3, "sealed_tid_s"))
            if not hmac.compare_digest(tid, sess.tid_s):
                raise TidMismatch("tid_s echo does not match")
            raw = crypto.open_box(key, m.sealed_biometrics, _ad(MRC3, "sealed_biometrics"))
            face, voice = unpack_biometrics(raw)
            del raw
            face_emb = embedding_to_bytes(extract_embedding(self.suite.face_model, face))
            voice_emb = embedding_to_bytes(extract_embedding(self.suite.voice_model, voice))
            face.fill(0.0)
            voice.fill(0.0)
            rec = self.registry.create_client_record(
                sess.client_pk, face_emb, voice_emb, uid=sess.uid, key_lt=sess.secrets.get("key_lt")
            )
        except MfaError as exc:
            sess.abort(type(exc).__name__)
            raise
        sess.phase = RegPhase.DONE
        sess._erase()
        return rec

    # -- authentication ---------------------------------------------------

    def begin_auth(self, uid: bytes, pid: bytes) -> tuple[MAU1, ServerSession]:
        """Start a delivery for the package addressed to ``uid`` using robot ``pid``."""
        rec, flag = self.registry.lookup_client(uid)
        self.registry.robot(pid)
        old = self._active.pop(rec.rid, None)
        if old is not None:
            old.abort("superseded")
        key_lt = rec.key_lt if flag == "current" else rec.prev[1]
        sess = ServerSession(rid=rec.rid, pid=bytes(pid), uid=bytes(uid), epoch_flag=flag)
        sess.eph = EphemeralKeyPair.generate(self.rng)
        sess.q_s = sess.eph.public_bytes
        lam = self.rng.bytes(LAMBDA_LEN)
        sess.secrets.put("lambda", lam)
        body = MAU1(
            q_s=sess.q_s,
            sealed_lambda=crypto.seal(key_lt, lam, _ad(MAU1, "sealed_lambda"), self.rng).to_bytes(),
        )
        self._active[rec.rid] = sess
        return _sign(self.signing, body), sess

    def handle_au2(self, sess: ServerSession, m: MAU2) -> MAU3:
        if sess.phase is not ServerPhase.AWAIT_AU2:
            raise PhaseError(f"server session is {sess.phase.value}")
        rec = self.registry.get(sess.rid)
        try:
            _check_sig(rec.client_pk, m)
            key = _session_key(sess.eph, m.q_c, _AUTH_CONTEXT, m.q_c, sess.q_s)
            plain = crypto.open_box(key, m.sealed_uid_mu, _ad(MAU2, "sealed_uid_mu"))
            if len(plain) != UID_LEN + MU_LEN:
                raise AuthFailure("uid||mu has the wrong length")
            uid_dec, mu = plain[:UID_LEN], plain[UID_LEN:]
            if not hmac.compare_digest(uid_dec, sess.uid):
                raise UidMismatch("decrypted uid does not match the session")
        except MfaError as exc:
            self._close(sess, exc)
            raise
        sess.eph.erase()
        sess.secrets.put("session_key", key)
        sess.tid = bytes(m.tid)
        sess.index = sample_index(self.rng, self.n, self.k)
        box = crypto.seal(key, sess.tid + sess.index.to_bytes(), _ad(MAU3, "sealed_tid_index"), self.rng)
        self.registry.ratchet(sess.rid, sess.secrets.get("lambda"), mu,
                              from_previous=sess.epoch_flag == "previous")
        sess.secrets.wipe("lambda")
        sess.phase = ServerPhase.AWAIT_ROBOT
        return MAU3(sealed_tid_index=box.to_bytes())

    def dispatch_robot(self, sess: ServerSession) -> MAU4:
        """Hand the robot what it needs to check all three factors (secure link only)."""
        if sess.phase is not ServerPhase.AWAIT_ROBOT:
            raise PhaseError(f"server session is {sess.phase.value}")
        rec = self.registry.get(sess.rid)
        robot = self.registry.robot(sess.pid)
        sealed = []
        for label, name in ((b"face", "face_embedding_sealed"), (b"voice", "voice_embedding_sealed")):
            emb = self.registry.open_at_rest(rec.face_emb if label == b"face" else rec.voice_emb, label)
            sealed.append(crypto.seal(robot.k_long, emb, _ad(MAU4, name), self.rng).to_bytes())
        return MAU4(
            session_key=sess.secrets.get("session_key"),
            chosen_index=sess.index.positions,
            face_embedding_sealed=sealed[0],
            voice_embedding_sealed=sealed[1],
        )

    def finalize(self, sess: ServerSession, response: RobotResponse) -> None:
        if sess.phase is not ServerPhase.AWAIT_ROBOT:
            raise PhaseError(f"server session is {sess.phase.value}")
        sess.result = bool(response.accept)
        if sess.result:
            self.registry.confirm_epoch(sess.rid)
        sess.phase = ServerPhase.DONE
        self._close(sess)

    def abort(self, sess: ServerSession, reason: str = "timeout") -> None:
        self._close(sess, reason=reason)

    def _close(self, sess: ServerSession, exc: Exception | None = None, reason: str = "aborted") -> None:
        sess.abort(type(exc).__name__ if exc is not None else reason)
        if self._active.get(sess.rid) is sess:
            del self._active[sess.rid]

    def active_session(self, rid: int) -> Optional[ServerSession]:
        return self._active.get(rid)

    def inspect_secrets(self) -> dict[str, bytes]:
        out = {}
        for rid, sess in self._active.items():
            out.update({f"{rid}:{k}": v for k, v in sess.inspect_secrets().items()})
        return out


# ---------------------------------------------------------------------------
# client
# ---------------------------------------------------------------------------


class Client:
    def __init__(self, signing: SigningKeyPair, server_pk: bytes, rng: RandomSource = SYSTEM_RNG,
                 n: int = DEFAULT_N) -> None:
        self.signing = signing
        self.server_pk = bytes(server_pk)
        self.rng = rng
        self.n = n
        self.uid: Optional[bytes] = None
        self.key_lt: Optional[bytes] = None
        self.prev: Optional[tuple[bytes, bytes]] = None
        self.session: Optional[ClientSession] = None

    @property
    def public_bytes(self) -> bytes:
        return self.signing.public_bytes

    @property
    def registered(self) -> bool:
        return self.uid is not None

    @property
    def package_uid(self) -> bytes:
        """Pseudonym written on the next package.

        While the last ratchet is unconfirmed the server may or may not have
        applied it; the pre-ratchet pseudonym is known to it either way.
        """
        if self.uid is None:
            raise PhaseError("client is not registered")
        return self.prev[0] if self.prev is not None else self.uid

    # -- registration -----------------------------------------------------

    def begin_registration(self) -> tuple[MRC1, ClientRegSession]:
        sess = ClientRegSession()
        sess.eph = EphemeralKeyPair.generate(self.rng)
        sess.q_c = sess.eph.public_bytes
        sess.tid_c = self.rng.bytes(TID_LEN)
        return _sign(self.signing, MRC1(q_c=sess.q_c, tid_c=sess.tid_c)), sess

    def handle_rc2(self, sess: ClientRegSession, m: MRC2, face, voice) -> MRC3:
        if sess.phase is not RegPhase.AWAIT_RC2:
            raise PhaseError(f"registration session is {sess.phase.value}")
        try:
            _check_sig(self.server_pk, m)
            key = _session_key(sess.eph, m.q_s, _REG_CONTEXT, sess.q_c, m.q_s)
            tid = crypto.open_box(key, m.sealed_tid_c, _ad(MRC2, "sealed_tid_c"))
            if not hmac.compare_digest(tid, sess.tid_c):
                raise TidMismatch("tid_c echo does not match")
            plain = crypto.open_box(key, m.sealed_uid_key, _ad(MRC2, "sealed_uid_key"))
            if len(plain) != UID_LEN + KEY_LT_LEN:
                raise AuthFailure("uid||key has the wrong length")
        except MfaError as exc:
            sess.abort(type(exc).__name__)
            raise
        self.uid, self.key_lt, self.prev = plain[:UID_LEN], plain[UID_LEN:], None
        body = MRC3(
            sealed_biometrics=crypto.seal(key, pack_biometrics(face, voice),
                                          _ad(MRC3, "sealed_biometrics"), self.rng).to_bytes(),
            sealed_tid_s=crypto.seal(key, m.tid_s, _ad(MRC3, "sealed_tid_s"), self.rng).to_bytes(),
        )
        sess.phase = RegPhase.DONE
        sess._erase()
        return _sign(self.signing, body)

    # -- authentication ---------------------------------------------------

    def handle_au1(self, m: MAU1) -> tuple[MAU2, ClientSession]:
        if self.uid is None:
            raise PhaseError("client is not registered")
        _check_sig(self.server_pk, m)
        if self.session is not None:
            self.session.abort("superseded")
            self.session = None
        # the server may address either the current or the retained pair
        pairs = [(self.uid, self.key_lt, False)]
        if self.prev is not None:
            pairs.insert(0, (self.prev[0], self.prev[1], True))
        lam = base = None
        for uid, key_lt, from_prev in pairs:
            try:
                lam = crypto.open_box(key_lt, m.sealed_lambda, _ad(MAU1, "sealed_lambda"))
            except AuthFailure:
                continue
            base = (uid, key_lt, from_prev)
            break
        if base is None or len(lam) != LAMBDA_LEN:
            raise AuthFailure("lambda does not open under any held key")
        sess = ClientSession()
        sess.eph = EphemeralKeyPair.generate(self.rng)
        sess.q_c = sess.eph.public_bytes
        try:
            key = _session_key(sess.eph, m.q_s, _AUTH_CONTEXT, sess.q_c, m.q_s)
        except InvalidPoint:
            sess.abort("InvalidPoint")
            raise
        sess.eph.erase()
        sess.secrets.put("session_key", key)
        sess.tid = self.rng.bytes(TID_LEN)
        mu = self.rng.bytes(MU_LEN)
        uid, key_lt, _ = base
        body = MAU2(
            q_c=sess.q_c,
            sealed_uid_mu=crypto.seal(key, uid + mu, _ad(MAU2, "sealed_uid_mu"), self.rng).to_bytes(),
            tid=sess.tid,
        )
        out = _sign(self.signing, body)
        # ratchet once, as the message leaves
        self.prev = (uid, key_lt)
        self.uid, self.key_lt = crypto.xor_bytes(uid, mu), crypto.xor_bytes(key_lt, lam)
        sess.phase = ClientPhase.AWAIT_AU3
        self.session = sess
        return out, sess

    def handle_au3(self, sess: ClientSession, m: MAU3) -> SubkeyIndex:
        if sess.phase is not ClientPhase.AWAIT_AU3:
            raise PhaseError(f"client session is {sess.phase.value}")
        try:
            key = sess.secrets.get("session_key")
            plain = crypto.open_box(key, m.sealed_tid_index, _ad(MAU3, "sealed_tid_index"))
            if not hmac.compare_digest(plain[:TID_LEN], sess.tid):
                raise TidMismatch("MAU3 belongs to another session")
            index = SubkeyIndex(tuple(plain[TID_LEN:]), self.n)
        except (MfaError, ValueError) as exc:
            self._close(sess, type(exc).__name__)
            raise
        sess.index = index
        sess.subkey = derive_subkey(crypto.key_to_chars(key, self.n), index)
        self.prev = None  # the server has ratcheted too
        sess.phase = ClientPhase.DONE
        self._close(sess)
        return index

    def spoken_subkey(self) -> str:
        """What the user says to the robot ("" when no index arrived)."""
        sess = self.session
        return sess.subkey if sess is not None else ""

    def abort(self, reason: str = "timeout") -> None:
        if self.session is not None:
            self._close(self.session, reason)

    def _close(self, sess: ClientSession, reason: str = "done") -> None:
        sess.abort(reason)

    def inspect_secrets(self) -> dict[str, bytes]:
        return self.session.inspect_secrets() if self.session is not None else {}


# ---------------------------------------------------------------------------
# robot
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class RobotTask:
    index: SubkeyIndex
    face_ref: np.ndarray = field(repr=False)
    voice_ref: np.ndarray = field(repr=False)
    face_threshold: float
    voice_threshold: float
    secrets: _Secrets = field(default_factory=_Secrets, repr=False)
    result: Optional[AuthResult] = None

    @property
    def consumed(self) -> bool:
        return self.result is not None


def robot_verify(task: RobotTask, spoken_subkey: str, face, voice, suite: BiometricSuite,
                 defended: bool = True) -> AuthResult:
    """Check subkey, face and voice; all three must pass.  Consumes ``task``."""
    if task.consumed:
        raise PhaseError("robot task already used")
    expected = derive_subkey(crypto.key_to_chars(task.secrets.get("session_key"), task.index.n),
                             task.index)
    subkey_ok = hmac.compare_digest(str(spoken_subkey).encode(), expected.encode())
    try:
        face_e, voice_e = suite.embed(face, voice, defended=defended)
        face_ok = cosine_similarity(task.face_ref, face_e) >= task.face_threshold
        voice_ok = cosine_similarity(task.voice_ref, voice_e) >= task.voice_threshold
    except (DegenerateInput, ValueError):
        face_ok = voice_ok = False
    task.result = fuse_decision(subkey_ok, face_ok, voice_ok)
    task.secrets.wipe_all()
    return task.result


class Robot:
    def __init__(self, suite: BiometricSuite, defended: bool = True, n: int = DEFAULT_N) -> None:
        self.suite = suite
        self.defended = defended
        self.n = n
        self.record: Optional[RobotRecord] = None
        self.task: Optional[RobotTask] = None

    @property
    def pid(self) -> bytes:
        if self.record is None:
            raise PhaseError("robot is not enrolled")
        return self.record.pid

    def begin_enrolment(self) -> MRR1:
        return MRR1(system_params=SYSTEM_PARAMS)

    def handle_rr2(self, m: MRR2) -> None:
        self.record = RobotRecord(pid=m.pid, tid=m.tid, k_long=m.k_long)

    def handle_au4(self, m: MAU4) -> RobotTask:
        if self.record is None:
            raise PhaseError("robot is not enrolled")
        k = self.record.k_long
        face = embedding_from_bytes(crypto.open_box(k, m.face_embedding_sealed,
                                                    _ad(MAU4, "face_embedding_sealed")))
        voice = embedding_from_bytes(crypto.open_box(k, m.voice_embedding_sealed,
                                                     _ad(MAU4, "voice_embedding_sealed")))
        task = RobotTask(SubkeyIndex(m.chosen_index, self.n),
                         face, voice, self.suite.face_threshold, self.suite.voice_threshold)
        task.secrets.put("session_key", m.session_key)
        if self.task is not None:
            self.task.secrets.wipe_all()
        self.task = task
        return task

    def verify(self, spoken_subkey: str, face, voice) -> tuple[AuthResult, RobotResponse]:
        if self.task is None:
            raise PhaseError("no delivery task")
        task, self.task = self.task, None
        result = robot_verify(task, spoken_subkey, face, voice, self.suite, self.defended)
        return result, RobotResponse(accept=result.accepted)

    def inspect_secrets(self) -> dict[str, bytes]:
        return self.task.secrets.live() if self.task is not None else {}
