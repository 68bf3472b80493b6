"""Symmetric ratchet primitives, AES-256-CBC and Ed25519 signatures.

Chain keys are ratcheted with HMAC-SHA256 keyed by the chain key over a
single constant byte: 0x01 yields the message key, 0x02 the next chain key.
Message keys are expanded into an AES key and CBC IV with HKDF-Expand.

Signatures are hedged Ed25519: ``sign`` prefixes 32 bytes of caller
randomness to the message, and the signature is ``nonce || ed25519_sig``.
Signing is therefore probabilistic, like the ECDSA the protocol was
deployed with, while key generation stays a deterministic function of the
32-byte seed.
"""

from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, padding
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.kdf.hkdf import HKDFExpand

KEY_SIZE = 32
IV_SIZE = 16
BLOCK_SIZE = 16
SIG_NONCE_SIZE = 32
SIGNATURE_SIZE = SIG_NONCE_SIZE + 64

_MK_CONSTANT = b"\x01"
_CK_CONSTANT = b"\x02"


class DecryptionError(ValueError):
    """Ciphertext length or padding is invalid under the given key."""


@dataclass(frozen=True)
class ChainKey:
    bytes: bytes = field(repr=False)
    index: int = 0

    def __post_init__(self) -> None:
        if len(self.bytes) != KEY_SIZE:
            raise ValueError(f"chain key must be {KEY_SIZE} bytes, got {len(self.bytes)}")
        if self.index < 0:
            raise ValueError("chain index must be non-negative")


@dataclass(frozen=True)
class MessageKey:
    bytes: bytes = field(repr=False)
    index: int = 0

    def __post_init__(self) -> None:
        if len(self.bytes) != KEY_SIZE:
            raise ValueError(f"message key must be {KEY_SIZE} bytes, got {len(self.bytes)}")


@dataclass(frozen=True)
class SigKeyPair:
    public: bytes
    secret: bytes = field(repr=False)


def kdf_mk(ck: ChainKey) -> MessageKey:
    """Message key for the chain position ``ck.index``."""
    return MessageKey(hmac.digest(ck.bytes, _MK_CONSTANT, "sha256"), ck.index)


def kdf_ck(ck: ChainKey) -> ChainKey:
    """One ratchet step: the chain key for ``ck.index + 1``."""
    return ChainKey(hmac.digest(ck.bytes, _CK_CONSTANT, "sha256"), ck.index + 1)


def expand_mk(mk: MessageKey) -> tuple[bytes, bytes]:
    enc_key = HKDFExpand(hashes.SHA256(), KEY_SIZE, b"enc").derive(mk.bytes)
    iv = HKDFExpand(hashes.SHA256(), IV_SIZE, b"iv").derive(mk.bytes)
    return enc_key, iv


def enc(mk: MessageKey, m: bytes) -> bytes:
    key, iv = expand_mk(mk)
    padder = padding.PKCS7(BLOCK_SIZE * 8).padder()
    padded = padder.update(m) + padder.finalize()
    encryptor = Cipher(algorithms.AES(key), modes.CBC(iv)).encryptor()
    return encryptor.update(padded) + encryptor.finalize()


def dec(mk: MessageKey, c: bytes) -> bytes:
    if not c or len(c) % BLOCK_SIZE:
        raise DecryptionError(f"ciphertext length {len(c)} is not a positive multiple of {BLOCK_SIZE}")
    key, iv = expand_mk(mk)
    decryptor = Cipher(algorithms.AES(key), modes.CBC(iv)).decryptor()
    padded = decryptor.update(c) + decryptor.finalize()
    unpadder = padding.PKCS7(BLOCK_SIZE * 8).unpadder()
    try:
        return unpadder.update(padded) + unpadder.finalize()
    except ValueError as exc:
        raise DecryptionError("invalid padding") from exc


def sig_gen(rand: bytes) -> SigKeyPair:
    """Deterministic Ed25519 key pair; ``rand`` is used verbatim as the seed."""
    if len(rand) != KEY_SIZE:
        raise ValueError(f"signature seed must be {KEY_SIZE} bytes")
    sk = Ed25519PrivateKey.from_private_bytes(rand)
    return SigKeyPair(public=sk.public_key().public_bytes_raw(), secret=bytes(rand))


def sign(ssk: bytes, m: bytes, nonce: bytes | None = None) -> bytes:
    if nonce is None:
        nonce = os.urandom(SIG_NONCE_SIZE)
    if len(nonce) != SIG_NONCE_SIZE:
        raise ValueError(f"signature nonce must be {SIG_NONCE_SIZE} bytes")
    return nonce + Ed25519PrivateKey.from_private_bytes(ssk).sign(nonce + m)


def verify(spk: bytes, sigma: bytes, m: bytes) -> bool:
    if len(sigma) != SIGNATURE_SIZE or len(spk) != KEY_SIZE:
        return False
    nonce, raw = sigma[:SIG_NONCE_SIZE], sigma[SIG_NONCE_SIZE:]
    try:
        Ed25519PublicKey.from_public_bytes(spk).verify(raw, nonce + m)
    except (InvalidSignature, ValueError):
        return False
    return True


def fingerprint(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


def generate_vectors(count: int = 24, steps: int = 8) -> list[str]:
    """Golden vector lines: ``name seed_hex index -> output_hex``.

    Seeds are the all-zero key followed by SHA-256 of ``b"vector" || n``.
    Every chain is walked ``steps`` positions, recording the message key,
    the next chain key and the expanded cipher key/IV at each position.
    """
    lines = []
    for n in range(count):
        seed = bytes(KEY_SIZE) if n == 0 else hashlib.sha256(b"vector" + n.to_bytes(4, "big")).digest()
        ck = ChainKey(seed, 0)
        for _ in range(steps):
            mk = kdf_mk(ck)
            nxt = kdf_ck(ck)
            key, iv = expand_mk(mk)
            lines.append(f"kdf_mk {ck.bytes.hex()} {ck.index} -> {mk.bytes.hex()}")
            lines.append(f"kdf_ck {ck.bytes.hex()} {ck.index} -> {nxt.bytes.hex()}")
            lines.append(f"expand_mk {mk.bytes.hex()} {mk.index} -> {key.hex()} {iv.hex()}")
            ck = nxt
    return lines
