"""Cryptographic primitives composed by the delivery protocol.

Everything runs over NIST P-256 (secp256r1).  Key agreement is ECDH on the
x-coordinate, signatures are ECDSA/SHA-256 with RFC 6979 deterministic
nonces, the KDF is HKDF-SHA256 and symmetric sealing is AES-256-GCM with a
random 96-bit nonce.

Randomness is drawn from any object exposing ``bytes(n)``; a seeded
``numpy.random.Generator`` makes whole protocol runs reproducible, and
:data:`SYSTEM_RNG` is the non-deterministic default.
"""

from __future__ import annotations

import base64
import hashlib
import os
from dataclasses import dataclass, field
from typing import Protocol, Union

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import AuthFailure, ErasedSecret, InvalidPoint, LengthError

CURVE = ec.SECP256R1()
# Domain parameters of P-256 (FIPS 186-4, D.1.2.3).
P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
A = P - 3
B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
Q = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
GX = 0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296
GY = 0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5

POINT_LEN = 33
SCALAR_LEN = 32
SIG_LEN = 64
KEY_LEN = 32
NONCE_LEN = 12
TAG_LEN = 16
DIGEST_LEN = 32

# Crockford base-32: no I, L, O or U.
KEY_ALPHABET = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"
_RFC4648 = "ABCDEFGHIJKLMNOPQRSTUVWXYZ234567"
_TO_CROCKFORD = str.maketrans(_RFC4648, KEY_ALPHABET)


class RandomSource(Protocol):
    def bytes(self, length: int) -> bytes: ...


class _SystemRandom:
    def bytes(self, length: int) -> bytes:
        return os.urandom(length)


SYSTEM_RNG: RandomSource = _SystemRandom()

Point = ec.EllipticCurvePublicKey


# ---------------------------------------------------------------------------
# points and keys
# ---------------------------------------------------------------------------


def encode_point(point: Point) -> bytes:
    return point.public_bytes(
        serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint
    )


def decode_point(data: bytes) -> Point:
    """Parse a SEC1 point, rejecting the identity and anything off-curve."""
    if isinstance(data, ec.EllipticCurvePublicKey):
        return data
    try:
        return ec.EllipticCurvePublicKey.from_encoded_point(CURVE, bytes(data))
    except (ValueError, TypeError) as exc:
        raise InvalidPoint(str(exc) or "invalid point encoding") from exc


def point_xy(point: Point) -> tuple[int, int]:
    numbers = point.public_numbers()
    return numbers.x, numbers.y


def _random_scalar(rng: RandomSource) -> int:
    while True:
        d = int.from_bytes(rng.bytes(SCALAR_LEN), "big")
        if 1 <= d < Q:
            return d


@dataclass(frozen=True)
class SigningKeyPair:
    secret: int
    public: Point = field(repr=False)
    _private: ec.EllipticCurvePrivateKey = field(repr=False, compare=False)

    @classmethod
    def from_secret(cls, secret: int) -> "SigningKeyPair":
        if not 1 <= secret < Q:
            raise ValueError("secret scalar out of range")
        private = ec.derive_private_key(secret, CURVE)
        return cls(secret, private.public_key(), private)

    @property
    def public_bytes(self) -> bytes:
        return encode_point(self.public)


def gen_signing_keypair(rng: RandomSource = SYSTEM_RNG) -> SigningKeyPair:
    return SigningKeyPair.from_secret(_random_scalar(rng))


class EphemeralKeyPair:
    """Per-session ECDH key.  The secret half can be erased exactly once."""

    def __init__(self, secret: int) -> None:
        self._private: ec.EllipticCurvePrivateKey | None = ec.derive_private_key(
            secret, CURVE
        )
        self.public: Point = self._private.public_key()

    @classmethod
    def generate(cls, rng: RandomSource = SYSTEM_RNG) -> "EphemeralKeyPair":
        return cls(_random_scalar(rng))

    @property
    def public_bytes(self) -> bytes:
        return encode_point(self.public)

    @property
    def erased(self) -> bool:
        return self._private is None

    def private_key(self) -> ec.EllipticCurvePrivateKey:
        if self._private is None:
            raise ErasedSecret("ephemeral secret has been erased")
        return self._private

    def erase(self) -> None:
        self._private = None

    def __repr__(self) -> str:
        state = "erased" if self.erased else "live"
        return f"EphemeralKeyPair({encode_point(self.public).hex()[:16]}..., {state})"


# ---------------------------------------------------------------------------
# ECDH + KDF
# ---------------------------------------------------------------------------


def agree(
    mine: Union[EphemeralKeyPair, SigningKeyPair, ec.EllipticCurvePrivateKey],
    theirs: Union[bytes, Point],
) -> bytes:
    """ECDH shared secret: big-endian x-coordinate of ``mine * theirs``."""
    point = decode_point(theirs) if isinstance(theirs, (bytes, bytearray)) else theirs
    if isinstance(mine, EphemeralKeyPair):
        private = mine.private_key()
    elif isinstance(mine, SigningKeyPair):
        private = mine._private
    else:
        private = mine
    return private.exchange(ec.ECDH(), point)


def hkdf_sha256(ikm: bytes, salt: bytes | None, info: bytes, length: int) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(), length=length, salt=salt, info=info
    ).derive(ikm)


def kdf(shared: bytes, context: bytes) -> bytes:
    """Derive a 32-byte symmetric key from an ECDH secret and a context label."""
    if not shared:
        raise ValueError("shared secret must be non-empty")
    return hkdf_sha256(shared, None, context, KEY_LEN)


# ---------------------------------------------------------------------------
# ECDSA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Signature:
    r: int
    s: int

    def to_bytes(self) -> bytes:
        if not (0 <= self.r < 2**256 and 0 <= self.s < 2**256):
            raise ValueError("signature component does not fit in 32 bytes")
        return self.r.to_bytes(32, "big") + self.s.to_bytes(32, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Signature":
        if len(data) != SIG_LEN:
            raise ValueError(f"signature must be {SIG_LEN} bytes")
        return cls(int.from_bytes(data[:32], "big"), int.from_bytes(data[32:], "big"))


_ECDSA = ec.ECDSA(hashes.SHA256(), deterministic_signing=True)


def sign(sk: SigningKeyPair, msg: bytes) -> Signature:
    """ECDSA over SHA-256(msg), nonce derived from (secret, msg) per RFC 6979."""
    der = sk._private.sign(bytes(msg), _ECDSA)
    r, s = decode_dss_signature(der)
    return Signature(r, s)


def verify(pk: Union[bytes, Point], msg: bytes, sig: Signature) -> bool:
    """Never raises: malformed keys or signature components verify as False."""
    try:
        point = decode_point(pk) if isinstance(pk, (bytes, bytearray)) else pk
    except InvalidPoint:
        return False
    if not (1 <= sig.r < Q and 1 <= sig.s < Q):
        return False
    try:
        point.verify(encode_dss_signature(sig.r, sig.s), bytes(msg), _ECDSA)
    except InvalidSignature:
        return False
    return True


# ---------------------------------------------------------------------------
# AEAD
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SealedBox:
    nonce: bytes
    ciphertext: bytes
    tag: bytes

    def to_bytes(self) -> bytes:
        return self.nonce + self.ciphertext + self.tag

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedBox":
        data = bytes(data)
        if len(data) < NONCE_LEN + TAG_LEN:
            raise AuthFailure("sealed box too short")
        return cls(data[:NONCE_LEN], data[NONCE_LEN:-TAG_LEN], data[-TAG_LEN:])


def seal(
    key: bytes, plaintext: bytes, ad: bytes, rng: RandomSource = SYSTEM_RNG
) -> SealedBox:
    if len(key) != KEY_LEN:
        raise LengthError(f"key must be {KEY_LEN} bytes, got {len(key)}")
    nonce = rng.bytes(NONCE_LEN)
    out = AESGCM(bytes(key)).encrypt(nonce, bytes(plaintext), bytes(ad))
    return SealedBox(nonce, out[:-TAG_LEN], out[-TAG_LEN:])


def open_box(key: bytes, box: Union[SealedBox, bytes], ad: bytes) -> bytes:
    """Inverse of :func:`seal`.  Any integrity problem raises AuthFailure."""
    if isinstance(box, (bytes, bytearray)):
        box = SealedBox.from_bytes(box)
    if len(key) != KEY_LEN or len(box.nonce) != NONCE_LEN or len(box.tag) != TAG_LEN:
        raise AuthFailure("malformed key or box")
    try:
        return AESGCM(bytes(key)).decrypt(box.nonce, box.ciphertext + box.tag, bytes(ad))
    except InvalidTag:
        raise AuthFailure("authentication tag mismatch") from None


# ---------------------------------------------------------------------------
# hashing and key rendering
# ---------------------------------------------------------------------------


def digest(msg: bytes) -> bytes:
    return hashlib.sha256(msg).digest()


def key_to_chars(key: bytes, n: int) -> str:
    """First ``n`` Crockford base-32 characters of ``key`` (MSB first)."""
    limit = (8 * len(key)) // 5
    if not 1 <= n <= limit:
        raise LengthError(f"n must be in [1, {limit}], got {n}")
    text = base64.b32encode(bytes(key)).decode("ascii").rstrip("=")
    return text[:n].translate(_TO_CROCKFORD)


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise LengthError(f"xor operands differ in length ({len(a)} vs {len(b)})")
    return bytes(x ^ y for x, y in zip(a, b))
