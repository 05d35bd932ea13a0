"""Membership and memberlist credentials, and verifiable presentations.

A membership VC binds (holder DID, network id) under an issuing anchor's
credential-definition key; a memberlist VC enumerates a network's member DIDs
at a roster version. Holders package credentials into challenge-bound
verifiable presentations: a MEMBERSHIP presentation carries exactly one VC plus
its revocation witness (so other memberships are never disclosed), a
SELF_SIGNED presentation carries an opaque payload (certificate bundle or
memberlist) under the presenter's own DID key.

Verification of a membership presentation runs seven checks in a fixed order
so failures are reported deterministically:

  1 challenge nonce matches
  2 presenter signature verifies against the resolved DID document key
  3 presenter is a verinym (anchor-attested)
  4 body conforms to the membership schema and the claim binds the presenter
  5 issuer is on the verifier's trust list and the VC signature verifies under
    the issuer's registered credential-definition key
  6 revocation witness verifies against the current registry state
  7 the claimed network is the expected one
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

from . import crypto
from . import encoding as enc

if TYPE_CHECKING:
    from .registry import DidDocument

VP_MEMBERSHIP = "MEMBERSHIP"
VP_SELF_SIGNED = "SELF_SIGNED"

MEMBERSHIP_SCHEMA_NAME = "membership"
MEMBERLIST_SCHEMA_NAME = "memberlist"
MEMBERSHIP_ATTRS = ("holder_did", "network_id")
MEMBERLIST_ATTRS = ("network_id", "member_dids", "roster_version")

CHECK_NONCE = 1
CHECK_PRESENTER_SIGNATURE = 2
CHECK_VERINYM = 3
CHECK_SCHEMA = 4
CHECK_ISSUER = 5
CHECK_REVOCATION = 6
CHECK_NETWORK = 7

_CHECK_NAMES = {
    CHECK_NONCE: "nonce",
    CHECK_PRESENTER_SIGNATURE: "presenter_signature",
    CHECK_VERINYM: "verinym",
    CHECK_SCHEMA: "schema_conformance",
    CHECK_ISSUER: "issuer_trust",
    CHECK_REVOCATION: "revocation",
    CHECK_NETWORK: "network_match",
}


class CredentialError(Exception):
    pass


class HolderKeyMismatch(CredentialError):
    pass


class MembershipVerificationError(CredentialError):
    """A membership presentation failed; names the first failing check."""

    def __init__(self, check: int, detail: str = ""):
        self.check = check
        name = _CHECK_NAMES.get(check, str(check))
        super().__init__(f"check {check} ({name}) failed" + (f": {detail}" if detail else ""))


class NonceMismatch(CredentialError):
    pass


class NoVerinym(CredentialError):
    pass


class BadSignature(CredentialError):
    pass


class PresenterNotFound(CredentialError):
    pass


@dataclass(frozen=True)
class CredentialSchema:
    schema_id: str
    name: str
    version: str
    attribute_names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.attribute_names)) != len(self.attribute_names):
            raise CredentialError("schema attribute names must be unique")

    def to_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_SCHEMA,
            enc.encode_str(self.schema_id),
            enc.encode_str(self.name),
            enc.encode_str(self.version),
            enc.encode_list(enc.encode_str(a) for a in self.attribute_names),
        )

    @staticmethod
    def from_bytes(data: bytes) -> "CredentialSchema":
        reader = enc.Reader(data, expect_tag=enc.TAG_SCHEMA)
        schema = CredentialSchema(
            schema_id=reader.str_(),
            name=reader.str_(),
            version=reader.str_(),
            attribute_names=tuple(reader.str_() for _ in range(reader.count())),
        )
        reader.done()
        return schema


@dataclass(frozen=True)
class CredentialDefinition:
    cred_def_id: str
    schema_id: str
    issuer_did: str
    authentication_public_key: bytes

    def to_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_CRED_DEF,
            enc.encode_str(self.cred_def_id),
            enc.encode_str(self.schema_id),
            enc.encode_str(self.issuer_did),
            enc.encode_bytes(self.authentication_public_key),
        )

    @staticmethod
    def from_bytes(data: bytes) -> "CredentialDefinition":
        reader = enc.Reader(data, expect_tag=enc.TAG_CRED_DEF)
        cred_def = CredentialDefinition(
            cred_def_id=reader.str_(),
            schema_id=reader.str_(),
            issuer_did=reader.str_(),
            authentication_public_key=reader.bytes_(),
        )
        reader.done()
        return cred_def


@dataclass(frozen=True)
class MembershipCredential:
    credential_id: bytes
    holder_did: str
    network_id: str
    issuer_did: str
    cred_def_id: str
    issuer_signature: crypto.Signature

    def signing_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_MEMBERSHIP_VC,
            enc.encode_bytes(self.credential_id),
            enc.encode_str(self.holder_did),
            enc.encode_str(self.network_id),
            enc.encode_str(self.issuer_did),
            enc.encode_str(self.cred_def_id),
        )

    def to_bytes(self) -> bytes:
        return self.signing_bytes() + self.issuer_signature.to_bytes()

    @staticmethod
    def from_bytes(data: bytes) -> "MembershipCredential":
        reader = enc.Reader(data, expect_tag=enc.TAG_MEMBERSHIP_VC)
        vc = MembershipCredential(
            credential_id=reader.bytes_(),
            holder_did=reader.str_(),
            network_id=reader.str_(),
            issuer_did=reader.str_(),
            cred_def_id=reader.str_(),
            issuer_signature=crypto.Signature.read(reader),
        )
        reader.done()
        return vc


def issue_membership_credential(
    issuer_keys: crypto.KeyPair,
    issuer_did: str,
    cred_def_id: str,
    holder_did: str,
    network_id: str,
    issuance_counter: int,
) -> MembershipCredential:
    """Mint a membership VC; the credential id commits to holder, network, and
    the issuer's monotone issuance counter so re-issued credentials differ."""
    credential_id = crypto.digest(
        enc.record(
            enc.TAG_CREDENTIAL_ID,
            enc.encode_str(holder_did),
            enc.encode_str(network_id),
            enc.encode_u64(issuance_counter),
        )
    )
    unsigned = MembershipCredential(
        credential_id=credential_id,
        holder_did=holder_did,
        network_id=network_id,
        issuer_did=issuer_did,
        cred_def_id=cred_def_id,
        issuer_signature=crypto.Signature(b""),
    )
    return MembershipCredential(
        credential_id=credential_id,
        holder_did=holder_did,
        network_id=network_id,
        issuer_did=issuer_did,
        cred_def_id=cred_def_id,
        issuer_signature=issuer_keys.sign(unsigned.signing_bytes()),
    )


@dataclass(frozen=True)
class MemberlistCredential:
    network_id: str
    member_dids: tuple[str, ...]
    roster_version: int
    issuer_did: str
    cred_def_id: str
    issuer_signature: crypto.Signature

    def signing_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_MEMBERLIST_VC,
            enc.encode_str(self.network_id),
            enc.encode_list(enc.encode_str(d) for d in self.member_dids),
            enc.encode_u64(self.roster_version),
            enc.encode_str(self.issuer_did),
            enc.encode_str(self.cred_def_id),
        )

    def to_bytes(self) -> bytes:
        return self.signing_bytes() + self.issuer_signature.to_bytes()

    @staticmethod
    def from_bytes(data: bytes) -> "MemberlistCredential":
        reader = enc.Reader(data, expect_tag=enc.TAG_MEMBERLIST_VC)
        vc = MemberlistCredential(
            network_id=reader.str_(),
            member_dids=tuple(reader.str_() for _ in range(reader.count())),
            roster_version=reader.u64(),
            issuer_did=reader.str_(),
            cred_def_id=reader.str_(),
            issuer_signature=crypto.Signature.read(reader),
        )
        reader.done()
        return vc


def issue_memberlist_credential(
    issuer_keys: crypto.KeyPair,
    issuer_did: str,
    cred_def_id: str,
    network_id: str,
    member_dids: tuple[str, ...],
    roster_version: int,
) -> MemberlistCredential:
    unsigned = MemberlistCredential(
        network_id=network_id,
        member_dids=member_dids,
        roster_version=roster_version,
        issuer_did=issuer_did,
        cred_def_id=cred_def_id,
        issuer_signature=crypto.Signature(b""),
    )
    return MemberlistCredential(
        network_id=network_id,
        member_dids=member_dids,
        roster_version=roster_version,
        issuer_did=issuer_did,
        cred_def_id=cred_def_id,
        issuer_signature=issuer_keys.sign(unsigned.signing_bytes()),
    )


@dataclass(frozen=True)
class VerifiablePresentation:
    kind: str  # VP_MEMBERSHIP or VP_SELF_SIGNED
    body: bytes
    presenter_did: str
    challenge_nonce: bytes
    presenter_signature: crypto.Signature

    def signing_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_VP,
            enc.encode_str(self.kind),
            enc.encode_bytes(self.body),
            enc.encode_str(self.presenter_did),
            enc.encode_bytes(self.challenge_nonce),
        )

    def to_bytes(self) -> bytes:
        return self.signing_bytes() + self.presenter_signature.to_bytes()

    @staticmethod
    def from_bytes(data: bytes) -> "VerifiablePresentation":
        reader = enc.Reader(data, expect_tag=enc.TAG_VP)
        vp = VerifiablePresentation(
            kind=reader.str_(),
            body=reader.bytes_(),
            presenter_did=reader.str_(),
            challenge_nonce=reader.bytes_(),
            presenter_signature=crypto.Signature.read(reader),
        )
        reader.done()
        return vp


def membership_body(vc: MembershipCredential, witness: crypto.AccumulatorWitness) -> bytes:
    return enc.encode_bytes(vc.to_bytes()) + enc.encode_bytes(witness.to_bytes())


def parse_membership_body(
    body: bytes,
) -> tuple[MembershipCredential, crypto.AccumulatorWitness]:
    reader = enc.Reader(body)
    vc = MembershipCredential.from_bytes(reader.bytes_())
    witness = crypto.AccumulatorWitness.from_bytes(reader.bytes_())
    reader.done()
    return vc, witness


def _sign_vp(
    kind: str, body: bytes, presenter_did: str, keys: crypto.KeyPair, nonce: bytes
) -> VerifiablePresentation:
    unsigned = VerifiablePresentation(
        kind=kind,
        body=body,
        presenter_did=presenter_did,
        challenge_nonce=nonce,
        presenter_signature=crypto.Signature(b""),
    )
    return VerifiablePresentation(
        kind=kind,
        body=body,
        presenter_did=presenter_did,
        challenge_nonce=nonce,
        presenter_signature=keys.sign(unsigned.signing_bytes()),
    )


def build_membership_vp(
    holder_did: str,
    holder_keys: crypto.KeyPair,
    vc: MembershipCredential,
    witness: crypto.AccumulatorWitness,
    challenge_nonce: bytes,
) -> VerifiablePresentation:
    """Presentation carrying exactly the one VC for the requested network; the
    serialization discloses no other membership the holder may have."""
    if vc.holder_did != holder_did:
        raise HolderKeyMismatch(f"credential held by {vc.holder_did}, presenter {holder_did}")
    return _sign_vp(
        VP_MEMBERSHIP, membership_body(vc, witness), holder_did, holder_keys, challenge_nonce
    )


def build_self_signed_vp(
    signer_did: str, signer_keys: crypto.KeyPair, payload: bytes, challenge_nonce: bytes
) -> VerifiablePresentation:
    return _sign_vp(VP_SELF_SIGNED, payload, signer_did, signer_keys, challenge_nonce)


@dataclass(frozen=True)
class VerifiedClaim:
    holder_did: str
    network_id: str
    credential_id: bytes


@dataclass
class VerificationArtifacts:
    """Registry-sourced inputs to presentation verification. Entries are None
    when the corresponding registry read found nothing; the matching check then
    fails with its own index."""

    presenter_doc: Optional["DidDocument"] = None
    presenter_verinym: bool = False
    schema: Optional[CredentialSchema] = None
    cred_def: Optional[CredentialDefinition] = None
    revocation_state: Optional[crypto.RevocationRegistryState] = None


def verify_membership_vp(
    vp: VerifiablePresentation,
    expected_network_id: str,
    challenge_nonce: bytes,
    trusted_issuers: frozenset[tuple[str, str]],  # (anchor did, represented network)
    artifacts: VerificationArtifacts,
) -> VerifiedClaim:
    """Run the seven verification checks in order; raises
    MembershipVerificationError naming the first failing check."""
    if vp.challenge_nonce != challenge_nonce:
        raise MembershipVerificationError(CHECK_NONCE)

    doc = artifacts.presenter_doc
    if doc is None or vp.presenter_did != doc.did:
        raise MembershipVerificationError(CHECK_PRESENTER_SIGNATURE, "presenter unresolved")
    if not crypto.verify(doc.primary_key(), vp.signing_bytes(), vp.presenter_signature):
        raise MembershipVerificationError(CHECK_PRESENTER_SIGNATURE)

    if not artifacts.presenter_verinym:
        raise MembershipVerificationError(CHECK_VERINYM)

    if vp.kind != VP_MEMBERSHIP:
        raise MembershipVerificationError(CHECK_SCHEMA, "not a membership presentation")
    try:
        vc, witness = parse_membership_body(vp.body)
    except enc.DecodeError as e:
        raise MembershipVerificationError(CHECK_SCHEMA, str(e))
    schema = artifacts.schema
    if schema is None or schema.attribute_names != MEMBERSHIP_ATTRS:
        raise MembershipVerificationError(CHECK_SCHEMA, "membership schema unavailable")
    if vc.holder_did != vp.presenter_did:
        raise MembershipVerificationError(CHECK_SCHEMA, "claim does not bind presenter")

    cred_def = artifacts.cred_def
    if (vc.issuer_did, vc.network_id) not in trusted_issuers:
        raise MembershipVerificationError(CHECK_ISSUER, "issuer not on trust list")
    if (
        cred_def is None
        or cred_def.issuer_did != vc.issuer_did
        or cred_def.cred_def_id != vc.cred_def_id
        or cred_def.schema_id != schema.schema_id
    ):
        raise MembershipVerificationError(CHECK_ISSUER, "credential definition mismatch")
    if not crypto.verify(
        cred_def.authentication_public_key, vc.signing_bytes(), vc.issuer_signature
    ):
        raise MembershipVerificationError(CHECK_ISSUER, "issuer signature invalid")

    revocation = artifacts.revocation_state
    if (
        revocation is None
        or revocation.issuer_did != vc.issuer_did
        or witness.element != vc.credential_id
        or not crypto.witness_verify(revocation, witness)
    ):
        raise MembershipVerificationError(CHECK_REVOCATION)

    if vc.network_id != expected_network_id:
        raise MembershipVerificationError(CHECK_NETWORK)

    return VerifiedClaim(
        holder_did=vc.holder_did, network_id=vc.network_id, credential_id=vc.credential_id
    )


def verify_self_signed_vp(
    vp: VerifiablePresentation,
    challenge_nonce: bytes,
    presenter_doc: Optional["DidDocument"],
    presenter_verinym: bool,
) -> bytes:
    """Validate a self-signed presentation against the presenter's registry
    document; returns the payload bytes intact."""
    if presenter_doc is None:
        raise PresenterNotFound(vp.presenter_did)
    if not presenter_verinym:
        raise NoVerinym(vp.presenter_did)
    if vp.challenge_nonce != challenge_nonce:
        raise NonceMismatch()
    if vp.kind != VP_SELF_SIGNED or vp.presenter_did != presenter_doc.did:
        raise BadSignature("presentation does not bind presenter")
    if not crypto.verify(
        presenter_doc.primary_key(), vp.signing_bytes(), vp.presenter_signature
    ):
        raise BadSignature()
    return vp.body
