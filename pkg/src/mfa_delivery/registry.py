"""Server-side records: clients with their ratcheted (UID, KEY) pair, and robots."""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal, Optional

from . import crypto
from .crypto import SYSTEM_RNG, RandomSource, xor_bytes
from .errors import DecodeError, DuplicateKey, UnknownUID
from .wire import K_LONG_LEN, KEY_LT_LEN, LAMBDA_LEN, MU_LEN, PID_LEN, TID_LEN, UID_LEN

Epoch = Literal["current", "previous"]

SNAPSHOT_HEADER = "mfa-delivery-registry v1"


@dataclass(frozen=True)
class ClientRecord:
    rid: int
    uid: bytes
    key_lt: bytes
    prev: Optional[tuple[bytes, bytes]]
    client_pk: bytes
    face_emb: bytes  # sealed at rest
    voice_emb: bytes
    epoch: int = 0


@dataclass(frozen=True)
class RobotRecord:
    pid: bytes
    tid: bytes
    k_long: bytes


def ratchet(record: ClientRecord, lam: bytes, mu: bytes, from_previous: bool = False) -> ClientRecord:
    """XOR-advance the pseudonym chain by one step.

    With ``from_previous`` the step starts from the retained previous pair,
    discarding an unconfirmed current pair (desync recovery).
    """
    if len(lam) != LAMBDA_LEN or len(mu) != MU_LEN:
        raise ValueError("lambda must be 32 bytes and mu 16 bytes")
    if from_previous:
        if record.prev is None:
            raise ValueError("no previous pair to ratchet from")
        base_uid, base_key = record.prev
        base_epoch = record.epoch - 1
    else:
        base_uid, base_key = record.uid, record.key_lt
        base_epoch = record.epoch
    return replace(
        record,
        uid=xor_bytes(base_uid, mu),
        key_lt=xor_bytes(base_key, lam),
        prev=(base_uid, base_key),
        epoch=base_epoch + 1,
    )


def confirm_epoch(record: ClientRecord) -> ClientRecord:
    return record if record.prev is None else replace(record, prev=None)


class Registry:
    """Single logical owner of all server state; mutations are serialized."""

    def __init__(self, storage_key: bytes | None = None, rng: RandomSource = SYSTEM_RNG) -> None:
        self.rng = rng
        self.storage_key = storage_key if storage_key is not None else rng.bytes(32)
        self._clients: dict[int, ClientRecord] = {}
        self._by_uid: dict[bytes, tuple[int, Epoch]] = {}
        self._robots: dict[bytes, RobotRecord] = {}
        self._lock = threading.RLock()
        # called as f(rid, lam, mu, from_previous) after every ratchet
        self.observers: list = []

    # -- clients ----------------------------------------------------------

    def _index(self, rec: ClientRecord) -> None:
        for uid, flag in ((rec.uid, "current"), (rec.prev[0] if rec.prev else None, "previous")):
            if uid is None:
                continue
            owner = self._by_uid.get(uid)
            if owner is not None and owner[0] != rec.rid:
                raise DuplicateKey(f"uid {uid.hex()} already in use")
        old = self._clients.get(rec.rid)
        if old is not None:
            self._by_uid.pop(old.uid, None)
            if old.prev is not None:
                self._by_uid.pop(old.prev[0], None)
        self._by_uid[rec.uid] = (rec.rid, "current")
        if rec.prev is not None:
            self._by_uid[rec.prev[0]] = (rec.rid, "previous")
        self._clients[rec.rid] = rec

    def draw_uid(self) -> bytes:
        """A random pseudonym not currently in use."""
        with self._lock:
            for _ in range(8):
                uid = self.rng.bytes(UID_LEN)
                if uid not in self._by_uid:
                    return uid
            raise DuplicateKey("could not draw a fresh uid")

    def create_client_record(self, client_pk: bytes, face_emb: bytes, voice_emb: bytes,
                             uid: bytes | None = None, key_lt: bytes | None = None) -> ClientRecord:
        """Store a new client; embeddings arrive serialized and are sealed here.

        ``uid``/``key_lt`` may be supplied when they were already issued to the
        client (registration hands them out before the embeddings arrive).
        """
        with self._lock:
            uid = self.draw_uid() if uid is None else bytes(uid)
            if uid in self._by_uid:
                raise DuplicateKey(f"uid {uid.hex()} already in use")
            key_lt = self.rng.bytes(KEY_LT_LEN) if key_lt is None else bytes(key_lt)
            if len(uid) != UID_LEN or len(key_lt) != KEY_LT_LEN:
                raise ValueError("uid must be 16 bytes and key 32 bytes")
            rec = ClientRecord(
                rid=len(self._clients),
                uid=uid,
                key_lt=key_lt,
                prev=None,
                client_pk=bytes(client_pk),
                face_emb=self.seal_at_rest(face_emb, b"face"),
                voice_emb=self.seal_at_rest(voice_emb, b"voice"),
            )
            self._index(rec)
            return rec

    def seal_at_rest(self, data: bytes, label: bytes) -> bytes:
        return crypto.seal(self.storage_key, data, b"at-rest:" + label, self.rng).to_bytes()

    def open_at_rest(self, sealed: bytes, label: bytes) -> bytes:
        return crypto.open_box(self.storage_key, sealed, b"at-rest:" + label)

    def lookup_client(self, uid: bytes) -> tuple[ClientRecord, Epoch]:
        with self._lock:
            hit = self._by_uid.get(bytes(uid))
            if hit is None:
                raise UnknownUID(bytes(uid).hex())
            return self._clients[hit[0]], hit[1]

    def get(self, rid: int) -> ClientRecord:
        return self._clients[rid]

    def ratchet(self, rid: int, lam: bytes, mu: bytes, from_previous: bool = False) -> ClientRecord:
        with self._lock:
            rec = ratchet(self._clients[rid], lam, mu, from_previous)
            self._index(rec)
        for fn in self.observers:
            fn(rid, bytes(lam), bytes(mu), from_previous)
        return rec

    def confirm_epoch(self, rid: int) -> ClientRecord:
        with self._lock:
            rec = confirm_epoch(self._clients[rid])
            self._index(rec)
            return rec

    @property
    def clients(self) -> tuple[ClientRecord, ...]:
        return tuple(self._clients.values())

    # -- robots -----------------------------------------------------------

    def create_robot_record(self) -> RobotRecord:
        with self._lock:
            while True:
                pid = self.rng.bytes(PID_LEN)
                if pid not in self._robots:
                    break
            rec = RobotRecord(pid=pid, tid=self.rng.bytes(TID_LEN), k_long=self.rng.bytes(K_LONG_LEN))
            self._robots[pid] = rec
            return rec

    def robot(self, pid: bytes) -> RobotRecord:
        return self._robots[pid]

    @property
    def robots(self) -> tuple[RobotRecord, ...]:
        return tuple(self._robots.values())

    # -- persistence ------------------------------------------------------

    def dumps(self) -> str:
        lines = [SNAPSHOT_HEADER]
        for r in self._clients.values():
            pu, pk = (r.prev[0].hex(), r.prev[1].hex()) if r.prev else ("-", "-")
            lines.append(
                " ".join(
                    ["client", str(r.rid), r.uid.hex(), r.key_lt.hex(), pu, pk,
                     r.client_pk.hex(), r.face_emb.hex(), r.voice_emb.hex(), str(r.epoch)]
                )
            )
        for rb in self._robots.values():
            lines.append(" ".join(["robot", rb.pid.hex(), rb.tid.hex(), rb.k_long.hex()]))
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str, storage_key: bytes, rng: RandomSource = SYSTEM_RNG) -> "Registry":
        lines = text.splitlines()
        if not lines or lines[0] != SNAPSHOT_HEADER:
            raise DecodeError("BadHeader", lines[0] if lines else "empty snapshot")
        reg = cls(storage_key, rng)
        for line in lines[1:]:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "client" and len(parts) == 10:
                _, rid, uid, key, pu, pk, cpk, face, voice, epoch = parts
                prev = None if pu == "-" else (bytes.fromhex(pu), bytes.fromhex(pk))
                reg._index(
                    ClientRecord(int(rid), bytes.fromhex(uid), bytes.fromhex(key), prev,
                                 bytes.fromhex(cpk), bytes.fromhex(face), bytes.fromhex(voice),
                                 int(epoch))
                )
            elif parts[0] == "robot" and len(parts) == 4:
                rb = RobotRecord(*(bytes.fromhex(p) for p in parts[1:]))
                reg._robots[rb.pid] = rb
            else:
                raise DecodeError("BadField", line[:40])
        return reg

    @classmethod
    def load(cls, path: str | Path, storage_key: bytes, rng: RandomSource = SYSTEM_RNG) -> "Registry":
        return cls.loads(Path(path).read_text(), storage_key, rng)
