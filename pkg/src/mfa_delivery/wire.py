"""Canonical message encoding, envelopes and the public-channel transcript.

Encoding of a message body::

    tag (1 byte) || for each field in declared order: len (u16 BE) || bytes

Every field is length-prefixed, including fixed-width ones, so a single
decoder handles all variants.  Signed messages carry the signature as their
last field; the signature covers the encoding with that field omitted (see
:func:`signing_bytes`).
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import ClassVar, Iterator

from .crypto import POINT_LEN, SIG_LEN, Signature
from .errors import ChannelError, DecodeError, EncodeError

MAX_FIELD = 0xFFFF

UID_LEN = 16
TID_LEN = 16
PID_LEN = 16
KEY_LT_LEN = 32
LAMBDA_LEN = 32
MU_LEN = 16
K_LONG_LEN = 32

PUBLIC = "public"
SECURE = "secure"

# field kinds: int = fixed byte width, "var" = any length, plus the
# structured kinds below
_SIG = "sig"
_INDEX = "index"
_BOOL = "bool"
_VAR = "var"


class Message:
    TAG: ClassVar[int]
    CHANNEL: ClassVar[str]
    # (field name, kind) in wire order
    LAYOUT: ClassVar[tuple[tuple[str, object], ...]]

    @property
    def name(self) -> str:
        return type(self).__name__

    @property
    def signed(self) -> bool:
        return any(kind == _SIG for _, kind in self.LAYOUT)


@dataclass(frozen=True)
class MRR1(Message):
    system_params: bytes
    TAG = 0x01
    CHANNEL = SECURE
    LAYOUT = (("system_params", _VAR),)


@dataclass(frozen=True)
class MRR2(Message):
    k_long: bytes
    pid: bytes
    tid: bytes
    TAG = 0x02
    CHANNEL = SECURE
    LAYOUT = (("k_long", K_LONG_LEN), ("pid", PID_LEN), ("tid", TID_LEN))


@dataclass(frozen=True)
class MRC1(Message):
    q_c: bytes
    tid_c: bytes
    sig: Signature | None = None
    TAG = 0x11
    CHANNEL = PUBLIC
    LAYOUT = (("q_c", POINT_LEN), ("tid_c", TID_LEN), ("sig", _SIG))


@dataclass(frozen=True)
class MRC2(Message):
    q_s: bytes
    tid_s: bytes
    sealed_tid_c: bytes
    sealed_uid_key: bytes
    sig: Signature | None = None
    TAG = 0x12
    CHANNEL = PUBLIC
    LAYOUT = (
        ("q_s", POINT_LEN),
        ("tid_s", TID_LEN),
        ("sealed_tid_c", _VAR),
        ("sealed_uid_key", _VAR),
        ("sig", _SIG),
    )


@dataclass(frozen=True)
class MRC3(Message):
    sealed_biometrics: bytes
    sealed_tid_s: bytes
    sig: Signature | None = None
    TAG = 0x13
    CHANNEL = PUBLIC
    LAYOUT = (("sealed_biometrics", _VAR), ("sealed_tid_s", _VAR), ("sig", _SIG))


@dataclass(frozen=True)
class MAU1(Message):
    q_s: bytes
    sealed_lambda: bytes
    sig: Signature | None = None
    TAG = 0x21
    CHANNEL = PUBLIC
    LAYOUT = (("q_s", POINT_LEN), ("sealed_lambda", _VAR), ("sig", _SIG))


@dataclass(frozen=True)
class MAU2(Message):
    q_c: bytes
    sealed_uid_mu: bytes
    tid: bytes
    sig: Signature | None = None
    TAG = 0x22
    CHANNEL = PUBLIC
    LAYOUT = (
        ("q_c", POINT_LEN),
        ("sealed_uid_mu", _VAR),
        ("tid", TID_LEN),
        ("sig", _SIG),
    )


@dataclass(frozen=True)
class MAU3(Message):
    sealed_tid_index: bytes
    TAG = 0x23
    CHANNEL = PUBLIC
    LAYOUT = (("sealed_tid_index", _VAR),)


@dataclass(frozen=True)
class MAU4(Message):
    session_key: bytes
    chosen_index: tuple[int, ...]
    face_embedding_sealed: bytes
    voice_embedding_sealed: bytes
    TAG = 0x24
    CHANNEL = SECURE
    LAYOUT = (
        ("session_key", 32),
        ("chosen_index", _INDEX),
        ("face_embedding_sealed", _VAR),
        ("voice_embedding_sealed", _VAR),
    )


@dataclass(frozen=True)
class RobotResponse(Message):
    accept: bool
    TAG = 0x30
    CHANNEL = SECURE
    LAYOUT = (("accept", _BOOL),)


MESSAGE_TYPES: dict[int, type[Message]] = {
    cls.TAG: cls for cls in (MRR1, MRR2, MRC1, MRC2, MRC3, MAU1, MAU2, MAU3, MAU4, RobotResponse)
}
BY_NAME: dict[str, type[Message]] = {cls.__name__: cls for cls in MESSAGE_TYPES.values()}
PUBLIC_TYPES = frozenset(n for n, c in BY_NAME.items() if c.CHANNEL == PUBLIC)


# ---------------------------------------------------------------------------
# field codecs
# ---------------------------------------------------------------------------


def _field_to_bytes(name: str, kind: object, value: object) -> bytes:
    if kind == _SIG:
        if value is None:
            raise EncodeError(f"{name}: message is unsigned")
        return value.to_bytes()
    if kind == _INDEX:
        try:
            return bytes(value)
        except ValueError as exc:
            raise EncodeError(f"{name}: index entries must fit in one byte") from exc
    if kind == _BOOL:
        return b"\x01" if value else b"\x00"
    raw = bytes(value)
    if isinstance(kind, int) and len(raw) != kind:
        raise EncodeError(f"{name}: expected {kind} bytes, got {len(raw)}")
    return raw


def _field_from_bytes(name: str, kind: object, raw: bytes) -> object:
    if kind == _SIG:
        if len(raw) != SIG_LEN:
            raise DecodeError("BadField", f"{name}: signature must be {SIG_LEN} bytes")
        return Signature.from_bytes(raw)
    if kind == _INDEX:
        return tuple(raw)
    if kind == _BOOL:
        if raw not in (b"\x00", b"\x01"):
            raise DecodeError("BadField", f"{name}: boolean must be 0x00 or 0x01")
        return raw == b"\x01"
    if isinstance(kind, int) and len(raw) != kind:
        raise DecodeError("BadField", f"{name}: expected {kind} bytes, got {len(raw)}")
    return raw


def raw_fields(msg: Message) -> dict[str, bytes]:
    """Field name -> encoded field bytes, in wire order."""
    return {
        name: _field_to_bytes(name, kind, getattr(msg, name)) for name, kind in msg.LAYOUT
    }


def encode_raw(tag: int, parts: list[bytes]) -> bytes:
    out = bytearray([tag])
    for part in parts:
        if len(part) > MAX_FIELD:
            raise EncodeError(f"field of {len(part)} bytes exceeds {MAX_FIELD}")
        out += struct.pack(">H", len(part)) + part
    return bytes(out)


def encode_canonical(msg: Message) -> bytes:
    return encode_raw(msg.TAG, list(raw_fields(msg).values()))


def signing_bytes(msg: Message) -> bytes:
    """Canonical encoding of ``msg`` with its signature field left out."""
    parts = [
        _field_to_bytes(name, kind, getattr(msg, name))
        for name, kind in msg.LAYOUT
        if kind != _SIG
    ]
    return encode_raw(msg.TAG, parts)


def split_raw(data: bytes) -> tuple[int, list[bytes]]:
    """Split an encoding into its tag and raw field list (no type checks)."""
    if not data:
        raise DecodeError("Truncated", "empty input")
    tag, pos, parts = data[0], 1, []
    while pos < len(data):
        if pos + 2 > len(data):
            raise DecodeError("Truncated", "length prefix cut short")
        (n,) = struct.unpack_from(">H", data, pos)
        pos += 2
        if pos + n > len(data):
            raise DecodeError("Truncated", f"field wants {n} bytes")
        parts.append(bytes(data[pos : pos + n]))
        pos += n
    return tag, parts


def decode(data: bytes) -> Message:
    data = bytes(data)
    if not data:
        raise DecodeError("Truncated", "empty input")
    cls = MESSAGE_TYPES.get(data[0])
    if cls is None:
        raise DecodeError("UnknownTag", f"0x{data[0]:02x}")
    _, parts = split_raw(data)
    if len(parts) < len(cls.LAYOUT):
        raise DecodeError("Truncated", f"{cls.__name__} needs {len(cls.LAYOUT)} fields")
    if len(parts) > len(cls.LAYOUT):
        raise DecodeError("TrailingBytes", f"{cls.__name__} has extra data")
    values = {
        name: _field_from_bytes(name, kind, raw)
        for (name, kind), raw in zip(cls.LAYOUT, parts)
    }
    return cls(**values)


def with_signature(msg: Message, sig: Signature) -> Message:
    return replace(msg, sig=sig)


def message_fields(cls: type[Message]) -> list[str]:
    return [f.name for f in fields(cls)]


# ---------------------------------------------------------------------------
# envelopes and transcript
# ---------------------------------------------------------------------------


def _check_channel(tag: int, channel: str) -> None:
    cls = MESSAGE_TYPES.get(tag)
    if channel not in (PUBLIC, SECURE):
        raise ChannelError(f"unknown channel {channel!r}")
    if cls is not None and cls.CHANNEL != channel:
        raise ChannelError(f"{cls.__name__} may only travel on the {cls.CHANNEL} channel")


@dataclass(frozen=True)
class Envelope:
    channel: str
    sender: str
    receiver: str
    seq: int
    time: int
    body: bytes  # canonical encoding; kept raw so tampered bodies survive

    def __post_init__(self) -> None:
        if self.body:
            _check_channel(self.body[0], self.channel)

    @classmethod
    def wrap(cls, channel: str, sender: str, receiver: str, seq: int, time: int,
             msg: Message) -> "Envelope":
        return cls(channel, sender, receiver, seq, time, encode_canonical(msg))

    @property
    def message(self) -> Message:
        return decode(self.body)

    @property
    def type_name(self) -> str:
        cls = MESSAGE_TYPES.get(self.body[0]) if self.body else None
        return cls.__name__ if cls else "?"

    def to_bytes(self) -> bytes:
        s, r = self.sender.encode(), self.receiver.encode()
        return (
            bytes([0 if self.channel == PUBLIC else 1])
            + struct.pack(">H", len(s)) + s
            + struct.pack(">H", len(r)) + r
            + struct.pack(">QQ", self.seq, self.time)
            + self.body
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        try:
            channel = PUBLIC if data[0] == 0 else SECURE
            pos = 1
            (n,) = struct.unpack_from(">H", data, pos)
            sender = data[pos + 2 : pos + 2 + n].decode()
            pos += 2 + n
            (n,) = struct.unpack_from(">H", data, pos)
            receiver = data[pos + 2 : pos + 2 + n].decode()
            pos += 2 + n
            seq, time = struct.unpack_from(">QQ", data, pos)
        except (IndexError, struct.error, UnicodeDecodeError) as exc:
            raise DecodeError("Truncated", "envelope header") from exc
        return cls(channel, sender, receiver, seq, time, bytes(data[pos + 16 :]))


TRANSCRIPT_MAGIC = "mfa-delivery-transcript"
TRANSCRIPT_VERSION = "v1"


class Transcript:
    """Append-only log of public-channel envelopes (what a network attacker sees)."""

    def __init__(self, meta: dict[str, str] | None = None) -> None:
        self.meta = dict(meta or {})
        self._entries: list[Envelope] = []
        self._lock = threading.Lock()

    def append(self, env: Envelope) -> "Transcript":
        if env.channel != PUBLIC:
            raise ChannelError("secure-channel envelopes never enter the transcript")
        with self._lock:
            if self._entries and env.seq <= self._entries[-1].seq:
                raise ValueError("transcript sequence numbers must increase")
            self._entries.append(env)
        return self

    @property
    def entries(self) -> tuple[Envelope, ...]:
        with self._lock:
            return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Envelope]:
        return iter(self.entries)

    def dumps(self) -> str:
        header = " ".join(
            [TRANSCRIPT_MAGIC, TRANSCRIPT_VERSION]
            + [f"{k}={v}" for k, v in sorted(self.meta.items())]
        )
        lines = [header] + [e.to_bytes().hex() for e in self.entries]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "Transcript":
        lines = text.splitlines()
        if not lines:
            raise DecodeError("Truncated", "empty transcript")
        head = lines[0].split()
        if head[:2] != [TRANSCRIPT_MAGIC, TRANSCRIPT_VERSION]:
            raise DecodeError("BadHeader", lines[0])
        meta = dict(item.split("=", 1) for item in head[2:])
        t = cls(meta)
        for line in lines[1:]:
            if line.strip():
                t.append(Envelope.from_bytes(bytes.fromhex(line.strip())))
        return t

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        return cls.loads(Path(path).read_text())


def append_transcript(t: Transcript, e: Envelope) -> Transcript:
    return t.append(e)
