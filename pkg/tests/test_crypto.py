import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfa_delivery import crypto
from mfa_delivery.crypto import (
    EphemeralKeyPair,
    SealedBox,
    Signature,
    SigningKeyPair,
    agree,
    digest,
    gen_signing_keypair,
    hkdf_sha256,
    kdf,
    key_to_chars,
    open_box,
    seal,
    sign,
    verify,
)
from mfa_delivery.errors import AuthFailure, ErasedSecret, InvalidPoint, LengthError

from . import p256_ref as ref

# RFC 6979 A.2.5, P-256 with SHA-256.
RFC6979_X = 0xC9AFA9D845BA75166B5C215767B1D6934E50C3DB36E89B127B8A622B120F6721
RFC6979_UX = 0x60FED4BA255A9D31C961EB74C6356D68C049B8923B61FA6CE669622E60F29FB6
RFC6979_UY = 0x7903FE1008B8BC99A41AE9E95628BC64F2F1B20C2D7E9F5177A3C294D4462299
RFC6979_SAMPLE = (
    0xEFD48B2AACB6A8FD1140DD9CD45E81D69D2C877B56AAF991C34D0EA84EAF3716,
    0xF7CB1C942D657C41D436C7A1B6E29F65F3E900DBB9AFF4064DC4AB2F843ACDA8,
)
RFC6979_TEST = (
    0xF1ABB023518351CD71D881567B1EA663ED3EFCF6C5132B354F28D3B0B7D38367,
    0x019F4113742A2B14BD25926B49C649155F267E60D3814B4C0CC84250E46F0083,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def test_keypair_on_curve_and_consistent(rng):
    kp = gen_signing_keypair(rng)
    x, y = crypto.point_xy(kp.public)
    assert (y * y - (x ** 3 + crypto.A * x + crypto.B)) % crypto.P == 0
    assert ref.mul(kp.secret, ref.G) == (x, y)
    assert 1 <= kp.secret < crypto.Q


def test_keypairs_distinct(rng):
    assert gen_signing_keypair(rng).secret != gen_signing_keypair(rng).secret


def test_domain_parameters_match_reference():
    assert (crypto.P, crypto.A, crypto.B, crypto.Q) == (ref.P, ref.A, ref.B, ref.N)
    assert (crypto.GX, crypto.GY) == ref.G
    assert ref.on_curve(ref.G)


def test_agree_symmetric(rng):
    a, b = EphemeralKeyPair.generate(rng), EphemeralKeyPair.generate(rng)
    assert agree(a, b.public_bytes) == agree(b, a.public_bytes)


def test_agree_matches_reference_arithmetic(rng):
    a = gen_signing_keypair(rng)
    b = gen_signing_keypair(rng)
    shared = agree(a, b.public_bytes)
    expected_x = ref.mul(a.secret * b.secret % ref.N, ref.G)[0]
    assert shared == expected_x.to_bytes(32, "big")


# RFC 5903 section 8.1 (256-bit random ECP group)
RFC5903_I = 0xC88F01F510D9AC3F70A292DAA2316DE544E9AAB8AFE84049C62A9C57862D1433
RFC5903_GIX = 0xDAD0B65394221CF9B051E1FECA5787D098DFE637FC90B9EF945D0C3772581180
RFC5903_R = 0xC6EF9C5D78AE012A011164ACB397CE2088685D8F06BF9BE0B283AB46476BEE53
RFC5903_GRX = 0xD12DFB5289C8D4F81208B70270398C342296970A0BCCB74C736FC7554494BF63
RFC5903_GIRX = 0xD6840F6B42F6EDAFD13116E0E12565202FEF8E9ECE7DCE03812464D04B9442DE


def test_agree_rfc5903_known_answer():
    i, r = SigningKeyPair.from_secret(RFC5903_I), SigningKeyPair.from_secret(RFC5903_R)
    assert crypto.point_xy(i.public)[0] == RFC5903_GIX
    assert crypto.point_xy(r.public)[0] == RFC5903_GRX
    expected = RFC5903_GIRX.to_bytes(32, "big")
    assert agree(i, r.public_bytes) == expected == agree(r, i.public_bytes)


@pytest.mark.parametrize(
    "bad",
    [
        b"\x00",  # point at infinity
        b"\x02" + b"\x00" * 31 + b"\x01",  # x = 1 has no square root on P-256
        b"\x04" + b"\x01" * 64,  # uncompressed, off-curve
        b"",
        b"\x02" + b"\x11" * 10,
    ],
)
def test_agree_rejects_invalid_points(rng, bad):
    with pytest.raises(InvalidPoint):
        agree(EphemeralKeyPair.generate(rng), bad)


def test_ephemeral_erase_blocks_access(rng):
    e = EphemeralKeyPair.generate(rng)
    e.erase()
    assert e.erased
    with pytest.raises(ErasedSecret):
        agree(e, EphemeralKeyPair.generate(rng).public_bytes)


def test_hkdf_rfc5869_case1():
    okm = hkdf_sha256(
        bytes.fromhex("0b" * 22),
        bytes.fromhex("000102030405060708090a0b0c"),
        bytes.fromhex("f0f1f2f3f4f5f6f7f8f9"),
        42,
    )
    assert okm.hex() == (
        "3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf"
        "34007208d5b887185865"
    )


def test_hkdf_rfc5869_case3_empty_salt_info():
    okm = hkdf_sha256(bytes.fromhex("0b" * 22), b"", b"", 42)
    assert okm.hex() == (
        "8da4e775a563c18f715f802a063c5a31b8a11f5c5ee1879ec3454e5f3c738d2d"
        "9d201395faa4b61a96c8"
    )


def test_kdf_determinism_and_domain_separation():
    shared = bytes(range(32))
    assert kdf(shared, b"auth") == kdf(shared, b"auth")
    assert kdf(shared, b"auth") != kdf(shared, b"reg")
    assert len(kdf(shared, b"auth")) == 32
    with pytest.raises(ValueError):
        kdf(b"", b"auth")


@pytest.mark.parametrize(
    "msg,expected",
    [(b"sample", RFC6979_SAMPLE), (b"test", RFC6979_TEST)],
)
def test_sign_rfc6979_known_answer(msg, expected):
    kp = SigningKeyPair.from_secret(RFC6979_X)
    assert crypto.point_xy(kp.public) == (RFC6979_UX, RFC6979_UY)
    sig = sign(kp, msg)
    assert (sig.r, sig.s) == expected
    # the textbook oracle derives the same nonce and signature
    assert ref.ecdsa_sign(RFC6979_X, msg) == expected


def test_sign_verify_round_trip_and_reference(rng):
    kp = gen_signing_keypair(rng)
    msg = b"M_AU1 body"
    sig = sign(kp, msg)
    assert verify(kp.public_bytes, msg, sig)
    assert ref.ecdsa_verify(crypto.point_xy(kp.public), msg, sig.r, sig.s)


def test_signatures_of_distinct_messages_differ(rng):
    kp = gen_signing_keypair(rng)
    assert sign(kp, b"a") != sign(kp, b"b")


def test_verify_rejects_mutations(rng):
    kp = gen_signing_keypair(rng)
    msg = b"payload"
    sig = sign(kp, msg)
    assert not verify(kp.public_bytes, b"paylobd", sig)
    assert not verify(kp.public_bytes, msg, Signature(sig.r, (sig.s + 1) % crypto.Q))
    assert not verify(kp.public_bytes, msg, Signature(0, sig.s))
    assert not verify(kp.public_bytes, msg, Signature(sig.r, crypto.Q))
    assert not verify(b"\x00", msg, sig)
    other = gen_signing_keypair(rng)
    assert not verify(other.public_bytes, msg, sig)


def test_signature_soundness_property_1000_cases():
    rng = np.random.default_rng(99)
    keys = [gen_signing_keypair(rng) for _ in range(8)]
    for i in range(1000):
        kp = keys[i % len(keys)]
        msg = rng.bytes(int(rng.integers(1, 64)))
        sig = sign(kp, msg)
        assert verify(kp.public_bytes, msg, sig)
        target = int(rng.integers(3))
        if target == 0:
            bit = int(rng.integers(8 * len(msg)))
            mutated = bytearray(msg)
            mutated[bit // 8] ^= 1 << (bit % 8)
            assert not verify(kp.public_bytes, bytes(mutated), sig)
        else:
            raw = bytearray(sig.to_bytes())
            offset = 0 if target == 1 else 32
            bit = int(rng.integers(256))
            raw[offset + bit // 8] ^= 1 << (bit % 8)
            assert not verify(kp.public_bytes, msg, Signature.from_bytes(bytes(raw)))


# AES-256-GCM vectors from the original GCM submission (test cases 13 and 14).
def test_aes_gcm_known_answers():
    key = bytes(32)
    nonce = bytes(12)
    from cryptography.hazmat.primitives.ciphers.aead import AESGCM

    assert AESGCM(key).encrypt(nonce, b"", b"").hex() == "530f8afbc74536b9a963b4f1c4cb738b"
    out = AESGCM(key).encrypt(nonce, bytes(16), b"")
    assert out.hex() == "cea7403d4d606b6e074ec5d3baf39d18" "d0d1c8a799996bf0265b98b5d48ab919"
    # the package's box layout wraps the same primitive
    box = SealedBox(nonce, out[:16], out[16:])
    assert open_box(key, box, b"") == bytes(16)


def test_seal_round_trip(rng):
    key = rng.bytes(32)
    box = seal(key, b"hello", b"ad", rng)
    assert open_box(key, box, b"ad") == b"hello"
    assert open_box(key, box.to_bytes(), b"ad") == b"hello"


def test_open_rejects_wrong_ad_and_key(rng):
    key = rng.bytes(32)
    box = seal(key, b"hello", b"ad", rng)
    with pytest.raises(AuthFailure):
        open_box(key, box, b"ad2")
    with pytest.raises(AuthFailure):
        open_box(rng.bytes(32), box, b"ad")


def test_open_rejects_truncation_and_every_field_mutation(rng):
    key = rng.bytes(32)
    raw = seal(key, b"some plaintext", b"x", rng).to_bytes()
    with pytest.raises(AuthFailure):
        open_box(key, raw[:-1], b"x")
    with pytest.raises(AuthFailure):
        open_box(key, raw[:10], b"x")
    for i in range(len(raw)):
        mutated = bytearray(raw)
        mutated[i] ^= 0x01
        with pytest.raises(AuthFailure):
            open_box(key, bytes(mutated), b"x")


def test_seal_boundaries(rng):
    key = rng.bytes(32)
    assert open_box(key, seal(key, b"", b"", rng), b"") == b""
    big = rng.bytes(1 << 20)
    assert open_box(key, seal(key, big, b"", rng), b"") == big


def test_seal_rejects_short_key(rng):
    with pytest.raises(LengthError):
        seal(b"short", b"x", b"", rng)


def test_seal_nonces_unique(rng):
    key = rng.bytes(32)
    nonces = {seal(key, b"x", b"", rng).nonce for _ in range(2000)}
    assert len(nonces) == 2000


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=256), st.binary(max_size=32))
def test_seal_round_trip_property(pt, ad):
    rng = np.random.default_rng(len(pt))
    key = rng.bytes(32)
    assert open_box(key, seal(key, pt, ad, rng), ad) == pt


def test_digest_known_answers():
    assert digest(b"abc").hex() == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )
    assert digest(b"").hex() == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
    assert digest(b"m") == digest(b"m")
    assert digest(b"m") != digest(b"m\x00")


def _crockford_oracle(key: bytes, n: int) -> str:
    bits = "".join(f"{b:08b}" for b in key)
    return "".join(crypto.KEY_ALPHABET[int(bits[5 * i : 5 * i + 5], 2)] for i in range(n))


def test_key_to_chars_zero_key():
    assert key_to_chars(bytes(32), 4) == "0000"
    assert _crockford_oracle(bytes(32), 4) == "0000"


def test_key_to_chars_matches_bit_oracle(rng):
    for _ in range(50):
        key = rng.bytes(32)
        assert key_to_chars(key, 51) == _crockford_oracle(key, 51)


def test_key_to_chars_length_prefix_and_alphabet(rng):
    key = rng.bytes(32)
    assert len(key_to_chars(key, 16)) == 16
    assert key_to_chars(key, 32).startswith(key_to_chars(key, 16))
    assert not set(key_to_chars(key, 51)) & set("ILOU")


@pytest.mark.parametrize("n", [0, 52, -1])
def test_key_to_chars_range(n):
    with pytest.raises(LengthError):
        key_to_chars(bytes(32), n)
