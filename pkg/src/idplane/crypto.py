"""Cryptographic substrate: signatures, hashing, certificate chains, and the
Merkle-accumulator revocation registry.

Signatures are Ed25519 with deterministic keygen from a 32-byte seed, so
scenario identities are reproducible. The revocation registry is a Merkle tree
over the sorted set of currently valid credential ids, padded with tagged
padding leaves to a power of two; each update bumps an epoch and invalidates
every witness issued for earlier epochs. All values are immutable; operations
return new states.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from . import encoding as enc

SCHEME_ED25519 = "ed25519"
DIGEST_LEN = 32
PUBLIC_KEY_LEN = 32
SECRET_KEY_LEN = 32
SIGNATURE_LEN = 64


class CryptoError(Exception):
    pass


class ElementNotPresent(CryptoError):
    """Accumulator operation on an element outside the private leaf set."""


class EmptySpec(CryptoError):
    """Certificate chain issuance without a root spec."""


class ChainVerificationError(CryptoError):
    """Base for certificate chain failures; carries the failing link index."""

    def __init__(self, index: int, detail: str = ""):
        self.index = index
        super().__init__(f"{type(self).__name__} at link {index}" + (f": {detail}" if detail else ""))


class UntrustedRoot(ChainVerificationError):
    pass


class BrokenLink(ChainVerificationError):
    pass


class Expired(ChainVerificationError):
    pass


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def digest(data: bytes) -> bytes:
    """32-byte collision-resistant digest of already domain-tagged bytes."""
    return sha256(data)


# --- signatures -------------------------------------------------------------


@dataclass(frozen=True)
class Signature:
    bytes_: bytes
    scheme_id: str = SCHEME_ED25519

    def to_bytes(self) -> bytes:
        return enc.encode_bytes(self.bytes_) + enc.encode_str(self.scheme_id)

    @staticmethod
    def read(reader: enc.Reader) -> "Signature":
        return Signature(reader.bytes_(), reader.str_())


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    secret_key: bytes

    @staticmethod
    def from_seed(seed: bytes) -> "KeyPair":
        if len(seed) != SECRET_KEY_LEN:
            raise CryptoError(f"seed must be {SECRET_KEY_LEN} bytes")
        private = Ed25519PrivateKey.from_private_bytes(seed)
        from cryptography.hazmat.primitives.serialization import (
            Encoding,
            PublicFormat,
        )

        public = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return KeyPair(public_key=public, secret_key=seed)

    def sign(self, message: bytes) -> Signature:
        return sign(self.secret_key, message)


@lru_cache(maxsize=4096)
def _private_key(seed: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(seed)


@lru_cache(maxsize=4096)
def _public_key(raw: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(raw)


def sign(secret_key: bytes, message: bytes) -> Signature:
    return Signature(_private_key(secret_key).sign(message))


def verify(public_key: bytes, message: bytes, signature: Signature) -> bool:
    """True iff the signature is valid; never raises on malformed input."""
    if signature.scheme_id != SCHEME_ED25519:
        return False
    if len(signature.bytes_) != SIGNATURE_LEN or len(public_key) != PUBLIC_KEY_LEN:
        return False
    try:
        _public_key(public_key).verify(signature.bytes_, message)
        return True
    except (InvalidSignature, ValueError):
        return False


# --- certificates -----------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    subject_name: str
    subject_public_key: bytes
    issuer_name: str
    valid_from: int
    valid_to: int
    issuer_signature: Signature

    def signing_bytes(self) -> bytes:
        # issuer_signature covers every other field
        return enc.record(
            enc.TAG_CERT,
            enc.encode_str(self.subject_name),
            enc.encode_bytes(self.subject_public_key),
            enc.encode_str(self.issuer_name),
            enc.encode_u64(self.valid_from),
            enc.encode_u64(self.valid_to),
        )

    def to_bytes(self) -> bytes:
        return self.signing_bytes() + self.issuer_signature.to_bytes()

    @staticmethod
    def from_bytes(data: bytes) -> "Certificate":
        reader = enc.Reader(data, expect_tag=enc.TAG_CERT)
        cert = Certificate._read_body(reader)
        reader.done()
        return cert

    @staticmethod
    def _read_body(reader: enc.Reader) -> "Certificate":
        return Certificate(
            subject_name=reader.str_(),
            subject_public_key=reader.bytes_(),
            issuer_name=reader.str_(),
            valid_from=reader.u64(),
            valid_to=reader.u64(),
            issuer_signature=Signature.read(reader),
        )


@dataclass(frozen=True)
class CertSpec:
    """What to certify: a name, a public key, and a validity window."""

    name: str
    public_key: bytes
    valid_from: int
    valid_to: int

    def validate(self) -> None:
        if not self.valid_from < self.valid_to:
            raise CryptoError(f"empty validity window for {self.name!r}")


def chain_to_bytes(chain: Sequence[Certificate]) -> bytes:
    return enc.record(
        enc.TAG_CHAIN, enc.encode_list(enc.encode_bytes(c.to_bytes()) for c in chain)
    )


def chain_from_bytes(data: bytes) -> tuple[Certificate, ...]:
    reader = enc.Reader(data, expect_tag=enc.TAG_CHAIN)
    n = reader.count()
    certs = tuple(Certificate.from_bytes(reader.bytes_()) for _ in range(n))
    reader.done()
    return certs


def issue_certificate_chain(
    root_key: KeyPair,
    root_spec: CertSpec,
    intermediates: Sequence[tuple[CertSpec, KeyPair]] = (),
    leaf: CertSpec | None = None,
) -> tuple[Certificate, ...]:
    """Issue a root-first chain: self-signed root, then each link signed by its
    predecessor's key. Intermediate specs carry keypairs because each one signs
    the next link; the leaf needs only a public key.
    """
    if root_spec is None:
        raise EmptySpec("a root spec is required")
    root_spec.validate()
    if root_spec.public_key != root_key.public_key:
        raise CryptoError("root spec key does not match the signing keypair")

    def make(spec: CertSpec, issuer_name: str, issuer_key: KeyPair) -> Certificate:
        unsigned = Certificate(
            subject_name=spec.name,
            subject_public_key=spec.public_key,
            issuer_name=issuer_name,
            valid_from=spec.valid_from,
            valid_to=spec.valid_to,
            issuer_signature=Signature(b"\x00" * SIGNATURE_LEN),
        )
        sig = issuer_key.sign(unsigned.signing_bytes())
        return Certificate(
            subject_name=spec.name,
            subject_public_key=spec.public_key,
            issuer_name=issuer_name,
            valid_from=spec.valid_from,
            valid_to=spec.valid_to,
            issuer_signature=sig,
        )

    chain = [make(root_spec, root_spec.name, root_key)]
    signer_name, signer_key = root_spec.name, root_key
    for spec, keypair in intermediates:
        spec.validate()
        if spec.public_key != keypair.public_key:
            raise CryptoError(f"spec key mismatch for intermediate {spec.name!r}")
        chain.append(make(spec, signer_name, signer_key))
        signer_name, signer_key = spec.name, keypair
    if leaf is not None:
        leaf.validate()
        chain.append(make(leaf, signer_name, signer_key))
    return tuple(chain)


def verify_certificate_chain(
    chain: Sequence[Certificate], trusted_root: Certificate, now: int
) -> bool:
    """True iff the chain is rooted at trusted_root, every link signature
    verifies, and every validity window contains `now`. Raises UntrustedRoot,
    BrokenLink, or Expired naming the first failing link.
    """
    if not chain:
        raise UntrustedRoot(0, "empty chain")
    if chain[0].to_bytes() != trusted_root.to_bytes():
        raise UntrustedRoot(0)
    for i, cert in enumerate(chain):
        signer = cert if i == 0 else chain[i - 1]
        if cert.issuer_name != signer.subject_name:
            raise BrokenLink(i, "issuer name mismatch")
        if not verify(signer.subject_public_key, cert.signing_bytes(), cert.issuer_signature):
            raise BrokenLink(i)
        if not cert.valid_from <= now < cert.valid_to:
            raise Expired(i)
    return True


# --- Merkle accumulator revocation registry ---------------------------------


@dataclass(frozen=True)
class RevocationRegistryState:
    issuer_did: str
    epoch: int
    root: bytes
    size_hint: int

    def to_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_REVOCATION_STATE,
            enc.encode_str(self.issuer_did),
            enc.encode_u64(self.epoch),
            enc.encode_bytes(self.root),
            enc.encode_u64(self.size_hint),
        )

    @staticmethod
    def from_bytes(data: bytes) -> "RevocationRegistryState":
        reader = enc.Reader(data, expect_tag=enc.TAG_REVOCATION_STATE)
        state = RevocationRegistryState(
            issuer_did=reader.str_(),
            epoch=reader.u64(),
            root=reader.bytes_(),
            size_hint=reader.u64(),
        )
        reader.done()
        return state


@dataclass(frozen=True)
class AccumulatorWitness:
    element: bytes
    epoch: int
    path: tuple[tuple[bytes, int], ...]  # (sibling digest, side); side 0 = sibling left

    SIBLING_LEFT = 0
    SIBLING_RIGHT = 1

    def to_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_WITNESS,
            enc.encode_bytes(self.element),
            enc.encode_u64(self.epoch),
            enc.encode_list(
                enc.encode_bytes(sib) + enc.encode_u64(side) for sib, side in self.path
            ),
        )

    @staticmethod
    def from_bytes(data: bytes) -> "AccumulatorWitness":
        reader = enc.Reader(data, expect_tag=enc.TAG_WITNESS)
        element = reader.bytes_()
        epoch = reader.u64()
        n = reader.count()
        path = tuple((reader.bytes_(), reader.u64()) for _ in range(n))
        reader.done()
        return AccumulatorWitness(element=element, epoch=epoch, path=path)


def _leaf_hash(element: bytes) -> bytes:
    return sha256(bytes([enc.TAG_LEAF]) + element)


def _pad_hash() -> bytes:
    return sha256(bytes([enc.TAG_PAD]))


def _node_hash(left: bytes, right: bytes) -> bytes:
    return sha256(bytes([enc.TAG_NODE]) + left + right)


def _padded_size(n: int) -> int:
    # a lone real leaf still gets one padding sibling
    if n == 0:
        return 1
    size = 2
    while size < n:
        size *= 2
    return size


def _leaf_level(elements: tuple[bytes, ...]) -> list[bytes]:
    size = _padded_size(len(elements))
    level = [_leaf_hash(e) for e in elements]
    level.extend(_pad_hash() for _ in range(size - len(elements)))
    return level


def _root_of(level: list[bytes]) -> bytes:
    while len(level) > 1:
        level = [_node_hash(level[i], level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def _normalize(elements) -> tuple[bytes, ...]:
    return tuple(sorted(set(elements)))


def accumulator_init(
    issuer_did: str, elements=()
) -> tuple[RevocationRegistryState, tuple[bytes, ...]]:
    """Epoch-0 registry over the sorted, deduplicated element set. Returns the
    public state and the issuer-private leaf set."""
    leaves = _normalize(elements)
    root = _root_of(_leaf_level(leaves))
    state = RevocationRegistryState(
        issuer_did=issuer_did, epoch=0, root=root, size_hint=_padded_size(len(leaves))
    )
    return state, leaves


def accumulator_add(
    state: RevocationRegistryState, leaves: tuple[bytes, ...], element: bytes
) -> tuple[RevocationRegistryState, tuple[bytes, ...]]:
    """Next-epoch registry with the element included."""
    new_leaves = _normalize(leaves + (element,))
    root = _root_of(_leaf_level(new_leaves))
    new_state = RevocationRegistryState(
        issuer_did=state.issuer_did,
        epoch=state.epoch + 1,
        root=root,
        size_hint=_padded_size(len(new_leaves)),
    )
    return new_state, new_leaves


def accumulator_revoke(
    state: RevocationRegistryState, leaves: tuple[bytes, ...], element: bytes
) -> tuple[RevocationRegistryState, tuple[bytes, ...]]:
    """Next-epoch registry with the element removed; witnesses for earlier
    epochs no longer verify."""
    if element not in leaves:
        raise ElementNotPresent(element.hex())
    new_leaves = tuple(e for e in leaves if e != element)
    root = _root_of(_leaf_level(new_leaves))
    new_state = RevocationRegistryState(
        issuer_did=state.issuer_did,
        epoch=state.epoch + 1,
        root=root,
        size_hint=_padded_size(len(new_leaves)),
    )
    return new_state, new_leaves


def witness_for(
    state: RevocationRegistryState, leaves: tuple[bytes, ...], element: bytes
) -> AccumulatorWitness:
    """Membership witness for the current epoch."""
    ordered = _normalize(leaves)
    if element not in ordered:
        raise ElementNotPresent(element.hex())
    level = _leaf_level(ordered)
    index = ordered.index(element)
    path: list[tuple[bytes, int]] = []
    while len(level) > 1:
        sibling = index ^ 1
        side = AccumulatorWitness.SIBLING_LEFT if sibling < index else AccumulatorWitness.SIBLING_RIGHT
        path.append((level[sibling], side))
        level = [_node_hash(level[i], level[i + 1]) for i in range(0, len(level), 2)]
        index //= 2
    return AccumulatorWitness(element=element, epoch=state.epoch, path=tuple(path))


def witness_verify(state: RevocationRegistryState, witness: AccumulatorWitness) -> bool:
    """True iff the witness is for the state's epoch and its path recomputes
    the state's root. Returns False on any mismatch."""
    if witness.epoch != state.epoch:
        return False
    acc = _leaf_hash(witness.element)
    for sibling, side in witness.path:
        if side == AccumulatorWitness.SIBLING_LEFT:
            acc = _node_hash(sibling, acc)
        elif side == AccumulatorWitness.SIBLING_RIGHT:
            acc = _node_hash(acc, sibling)
        else:
            return False
    return acc == state.root
