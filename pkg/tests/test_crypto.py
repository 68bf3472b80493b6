"""Key schedule, cipher and signature tests against an independent reference."""

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from senderkeys import crypto
from senderkeys.crypto import ChainKey, MessageKey

import oracles

VECTORS = Path(__file__).parent / "data" / "crypto_vectors.txt"
ZERO = bytes(32)

# reference outputs computed with tests/oracles.py
ZERO_MK = "3d7afb663124ecbf2c953f863d4fc8796eeb2d372b64aad58697ec5264649cdb"
ZERO_CK = "4ee7be0c7872360ca67414608081e9bd60fd580a7bbd209701d2a5a0b4316d0d"
ZERO_ENC = "39793bd07956c840a929af34a9657f87d141f0b988f56bbff46495e9e11b9234"
ZERO_IV = "3069b12fe443d6d1c89a86f42c7b4c66"


def test_oracle_hmac_matches_known_answer():
    # RFC 4231-style sanity check of the reference itself
    got = oracles.hmac_sha256(b"key", b"The quick brown fox jumps over the lazy dog")
    assert got.hex() == "f7bc83f430538424b13298e6aa6fb143ef4d59a14946175997479dbc2d1a3cd8"


def test_zero_chain_key_frozen_values():
    ck = ChainKey(ZERO, 0)
    assert crypto.kdf_mk(ck).bytes.hex() == ZERO_MK
    assert crypto.kdf_ck(ck).bytes.hex() == ZERO_CK
    key, iv = crypto.expand_mk(MessageKey(ZERO, 0))
    assert key.hex() == ZERO_ENC
    assert iv.hex() == ZERO_IV


def test_indices_follow_chain():
    ck = ChainKey(ZERO, 4)
    assert crypto.kdf_mk(ck).index == 4
    assert crypto.kdf_ck(ck).index == 5


def test_golden_file_matches_oracle():
    lines = VECTORS.read_text().splitlines()
    assert len(lines) >= 20
    seen_zero = False
    for line in lines:
        name, key_hex, _idx, _arrow, *out = line.split()
        key = bytes.fromhex(key_hex)
        seen_zero |= key == ZERO
        if name == "kdf_mk":
            assert oracles.hmac_sha256(key, b"\x01").hex() == out[0]
        elif name == "kdf_ck":
            assert oracles.hmac_sha256(key, b"\x02").hex() == out[0]
        else:
            assert oracles.hkdf_expand(key, b"enc", 32).hex() == out[0]
            assert oracles.hkdf_expand(key, b"iv", 16).hex() == out[1]
    assert seen_zero


def test_golden_file_is_current(tmp_path):
    assert crypto.generate_vectors() == VECTORS.read_text().splitlines()


def test_chain_matches_oracle_for_100_steps():
    seed = bytes(range(32))
    ck = ChainKey(seed, 0)
    for ref_ck, ref_mk in oracles.chain(seed, 100):
        assert ck.bytes == ref_ck
        assert crypto.kdf_mk(ck).bytes == ref_mk
        ck = crypto.kdf_ck(ck)


def test_chain_is_deterministic():
    def walk():
        ck, out = ChainKey(b"\x07" * 32, 0), []
        for _ in range(100):
            out.append(crypto.kdf_mk(ck).bytes)
            ck = crypto.kdf_ck(ck)
        return out

    assert walk() == walk()


def test_domain_separation_over_many_keys():
    outputs = set()
    ck = ChainKey(b"\x11" * 32, 0)
    for _ in range(1000):
        mk, nxt = crypto.kdf_mk(ck), crypto.kdf_ck(ck)
        assert mk.bytes != nxt.bytes
        outputs.add(mk.bytes)
        outputs.add(nxt.bytes)
        ck = nxt
    assert len(outputs) == 2000


@pytest.mark.parametrize("bad", [b"", b"\x00" * 31, b"\x00" * 33])
def test_keys_must_be_32_bytes(bad):
    with pytest.raises(ValueError):
        ChainKey(bad, 0)
    with pytest.raises(ValueError):
        MessageKey(bad, 0)


@settings(max_examples=200, deadline=None)
@given(key=st.binary(min_size=32, max_size=32), m=st.binary(min_size=0, max_size=1024))
def test_enc_dec_roundtrip(key, m):
    mk = MessageKey(key, 0)
    c = crypto.enc(mk, m)
    assert len(c) % crypto.BLOCK_SIZE == 0 and len(c) > len(m)
    assert crypto.dec(mk, c) == m


def test_enc_is_deterministic():
    mk = MessageKey(b"\x42" * 32, 3)
    assert crypto.enc(mk, b"same") == crypto.enc(mk, b"same")


def test_wrong_key_never_returns_plaintext():
    m = b"attack at dawn, bring snacks"
    right = MessageKey(b"\x01" * 32, 0)
    c = crypto.enc(right, m)
    for n in range(100):
        wrong = MessageKey(oracles.hmac_sha256(b"wrong", n.to_bytes(2, "big")), 0)
        try:
            assert crypto.dec(wrong, c) != m
        except crypto.DecryptionError:
            pass


@pytest.mark.parametrize("c", [b"", b"\x00" * 15, b"\x00" * 17])
def test_dec_rejects_bad_lengths(c):
    with pytest.raises(crypto.DecryptionError):
        crypto.dec(MessageKey(ZERO, 0), c)


def test_sign_verify():
    pair = crypto.sig_gen(b"\x05" * 32)
    sigma = crypto.sign(pair.secret, b"payload")
    assert len(sigma) == crypto.SIGNATURE_SIZE
    assert crypto.verify(pair.public, sigma, b"payload")
    assert not crypto.verify(pair.public, sigma, b"payloaD")
    other = crypto.sig_gen(b"\x06" * 32)
    assert not crypto.verify(other.public, sigma, b"payload")


def test_sig_gen_is_deterministic_in_its_seed():
    assert crypto.sig_gen(b"\x09" * 32) == crypto.sig_gen(b"\x09" * 32)
    assert crypto.sig_gen(b"\x09" * 32) != crypto.sig_gen(b"\x0a" * 32)


def test_signatures_are_randomized():
    pair = crypto.sig_gen(b"\x05" * 32)
    assert crypto.sign(pair.secret, b"m") != crypto.sign(pair.secret, b"m")
    nonce = b"\x00" * 32
    assert crypto.sign(pair.secret, b"m", nonce) == crypto.sign(pair.secret, b"m", nonce)


@settings(max_examples=100, deadline=None)
@given(sigma=st.binary(max_size=200), m=st.binary(max_size=64))
def test_verify_is_total(sigma, m):
    pair = crypto.sig_gen(b"\x05" * 32)
    assert crypto.verify(pair.public, sigma, m) in (True, False)
    assert crypto.verify(b"short", sigma, m) is False
