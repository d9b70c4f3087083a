"""Identities, signing, hashing, certificates, and the sealed key store.

One fixed default suite: Ed25519 signatures (``scheme_id="ed25519"``) and
SHA-256 digests (``algorithm_id="sha-256"``). Every artifact records the
suite ids so fixtures are bit-exact.
"""

from __future__ import annotations

import hashlib
import os
import random
import threading
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .canonical import canonical_json_bytes
from .errors import SeedError, ValidationError

SCHEME_ID = "ed25519"
HASH_ALGORITHM_ID = "sha-256"
SEED_LENGTH = 32
DIGEST_LENGTH = 32

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw


@dataclass(frozen=True)
class Digest:
    value: bytes
    algorithm_id: str = HASH_ALGORITHM_ID

    @property
    def hex(self) -> str:
        return self.value.hex()


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    private_key: bytes
    scheme_id: str = SCHEME_ID


@dataclass(frozen=True)
class Certificate:
    subject_id: str
    subject_public_key: bytes
    issuer_id: str
    signature: bytes

    def signed_body(self) -> bytes:
        return canonical_json_bytes(
            {
                "type": "certificate",
                "subject_id": self.subject_id,
                "subject_public_key": self.subject_public_key.hex(),
                "issuer_id": self.issuer_id,
            }
        )

    def to_dict(self) -> dict:
        return {
            "type": "certificate",
            "subject_id": self.subject_id,
            "subject_public_key": self.subject_public_key.hex(),
            "issuer_id": self.issuer_id,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Certificate":
        return cls(
            subject_id=doc["subject_id"],
            subject_public_key=bytes.fromhex(doc["subject_public_key"]),
            issuer_id=doc["issuer_id"],
            signature=bytes.fromhex(doc["signature"]),
        )


def generate_keypair(seed: bytes | None = None) -> KeyPair:
    """New Ed25519 pair; deterministic when a 32-byte seed is given."""
    if seed is None:
        priv = Ed25519PrivateKey.generate()
    else:
        if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_LENGTH:
            raise SeedError(f"seed must be exactly {SEED_LENGTH} bytes")
        priv = Ed25519PrivateKey.from_private_bytes(bytes(seed))
    private = priv.private_bytes(
        _RAW, serialization.PrivateFormat.Raw, serialization.NoEncryption()
    )
    public = priv.public_key().public_bytes(_RAW, _RAW_PUB)
    return KeyPair(public_key=public, private_key=private)


def sign(message: bytes, private_key: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(private_key).sign(message)


def verify(message: bytes, signature: bytes, public_key: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def hash_bytes(message: bytes) -> Digest:
    return Digest(value=hashlib.sha256(message).digest())


def issue_certificate(
    issuer: KeyPair, issuer_id: str, subject_id: str, subject_public_key: bytes
) -> Certificate:
    if not subject_id:
        raise ValidationError("certificate subject_id must be non-empty")
    cert = Certificate(
        subject_id=subject_id,
        subject_public_key=subject_public_key,
        issuer_id=issuer_id,
        signature=b"",
    )
    return Certificate(
        subject_id=subject_id,
        subject_public_key=subject_public_key,
        issuer_id=issuer_id,
        signature=sign(cert.signed_body(), issuer.private_key),
    )


def verify_certificate(cert: Certificate, issuer_public_key: bytes) -> bool:
    if not cert.subject_id:
        return False
    return verify(cert.signed_body(), cert.signature, issuer_public_key)


# -- hybrid encryption ---------------------------------------------------------
#
# Payloads addressed to a participant are sealed against their registered
# Ed25519 public key: the key is mapped to its X25519 form, an ephemeral
# X25519 exchange derives an AES-256-GCM key via HKDF-SHA256.
# Blob layout: 0x01 | ephemeral pub (32) | nonce (12) | ciphertext.

_CURVE_P = 2**255 - 19
_HYBRID_VERSION = b"\x01"
_HKDF_INFO = b"carbio-hybrid-v1"


def _ed25519_pub_to_x25519(public_key: bytes) -> bytes:
    # Edwards y -> Montgomery u = (1+y)/(1-y) mod p
    y = int.from_bytes(public_key, "little") & ((1 << 255) - 1)
    u = (1 + y) * pow(1 - y, -1, _CURVE_P) % _CURVE_P
    return u.to_bytes(32, "little")


def _ed25519_seed_to_x25519_private(seed: bytes) -> bytes:
    return hashlib.sha512(seed).digest()[:32]


def _hybrid_key(shared: bytes, eph_pub: bytes, recipient_x_pub: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=None,
        info=_HKDF_INFO + eph_pub + recipient_x_pub,
    ).derive(shared)


def encrypt_for(
    recipient_public_key: bytes,
    plaintext: bytes,
    rng: random.Random | None = None,
) -> bytes:
    """Seal `plaintext` so only the holder of the matching private key reads it.

    `rng` exists for reproducible simulations only; when omitted the ephemeral
    material is drawn from the OS CSPRNG.
    """
    randbytes = rng.randbytes if rng is not None else os.urandom
    eph_priv = X25519PrivateKey.from_private_bytes(randbytes(32))
    eph_pub = eph_priv.public_key().public_bytes(_RAW, _RAW_PUB)
    recipient_x_pub = _ed25519_pub_to_x25519(recipient_public_key)
    shared = eph_priv.exchange(X25519PublicKey.from_public_bytes(recipient_x_pub))
    key = _hybrid_key(shared, eph_pub, recipient_x_pub)
    nonce = randbytes(12)
    ct = AESGCM(key).encrypt(nonce, plaintext, None)
    return _HYBRID_VERSION + eph_pub + nonce + ct


class SealedKeyStore:
    """Private key locked inside the module boundary.

    Models the car's tamper-proof key hardware: callers pass messages in and
    get signatures (or plaintexts) out; the key itself is never exposed.
    Signing requests are serialized internally.
    """

    def __init__(self, entity_id: str, keypair: KeyPair):
        if not entity_id:
            raise ValidationError("entity_id must be non-empty")
        self._entity_id = entity_id
        self._keypair = keypair
        self._lock = threading.Lock()

    @classmethod
    def from_seed(cls, entity_id: str, seed: bytes) -> "SealedKeyStore":
        return cls(entity_id, generate_keypair(seed))

    @property
    def entity_id(self) -> str:
        return self._entity_id

    @property
    def public_key(self) -> bytes:
        return self._keypair.public_key

    @property
    def scheme_id(self) -> str:
        return self._keypair.scheme_id

    def sign(self, message: bytes) -> bytes:
        with self._lock:
            return sign(message, self._keypair.private_key)

    def decrypt(self, blob: bytes) -> bytes:
        if len(blob) < 1 + 32 + 12 + 16 or blob[:1] != _HYBRID_VERSION:
            raise ValidationError("malformed encrypted blob")
        eph_pub, nonce, ct = blob[1:33], blob[33:45], blob[45:]
        with self._lock:
            x_priv = X25519PrivateKey.from_private_bytes(
                _ed25519_seed_to_x25519_private(self._keypair.private_key)
            )
        shared = x_priv.exchange(X25519PublicKey.from_public_bytes(eph_pub))
        recipient_x_pub = _ed25519_pub_to_x25519(self.public_key)
        key = _hybrid_key(shared, eph_pub, recipient_x_pub)
        try:
            return AESGCM(key).decrypt(nonce, ct, None)
        except InvalidTag as exc:
            raise ValidationError("encrypted blob fails authentication") from exc

    def __deepcopy__(self, memo) -> "SealedKeyStore":
        # lock objects cannot be copied; state is otherwise immutable
        return SealedKeyStore(self._entity_id, self._keypair)

    def __repr__(self) -> str:
        return f"SealedKeyStore({self._entity_id!r}, pub={self.public_key.hex()[:12]}...)"
