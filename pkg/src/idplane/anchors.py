"""Trust-anchor services on the identity network.

An anchor validates organizations out-of-band and vouches for them on the
registry: as an organization identity validator (OIV) it attests DID documents
against an evidence whitelist and submits the verinym registration; as a
participant membership validator (PMV) it issues and revokes membership
credentials for the networks it represents, maintains the per-network rosters
and the memberlist credential, and runs the revocation registry (a Merkle
accumulator over currently valid credential ids, re-published to the registry
at every epoch bump).

Issuance and revocation are serialized per anchor so accumulator epochs never
race; holders whose witnesses go stale after someone else's epoch bump come
back for a witness refresh.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Generator, Optional

from . import credentials as creds
from . import crypto
from . import registry
from .actors import Actor, Message


class AnchorError(Exception):
    pass


class EvidenceMismatch(AnchorError):
    pass


class NotRepresented(AnchorError):
    pass


class NoVerinym(AnchorError):
    pass


class NotEligible(AnchorError):
    pass


class NotAMember(AnchorError):
    pass


@dataclass
class TrustAnchorProfile:
    name: str
    did: str
    roles: frozenset[str]
    represented_networks: tuple[str, ...] = ()
    evidence_whitelist: dict[str, bytes] = field(default_factory=dict)  # org name -> key


@dataclass
class MembershipRoster:
    network_id: str
    members: dict[str, bytes] = field(default_factory=dict)  # member DID -> credential id
    version: int = 0


class AnchorService(Actor):
    """One trust anchor (possibly holding both OIV and PMV roles)."""

    def __init__(
        self,
        address: str,
        profile: TrustAnchorProfile,
        keys: crypto.KeyPair,
        pool: registry.PoolInfo,
        eligibility: dict[str, dict[str, str]],  # network -> holder DID -> org name
    ):
        super().__init__(address)
        self.profile = profile
        self.keys = keys
        self.pool = pool
        self.eligibility = eligibility
        self.doc: Optional[registry.DidDocument] = None
        self.rosters: dict[str, MembershipRoster] = {
            net: MembershipRoster(network_id=net) for net in profile.represented_networks
        }
        self.acc_state: Optional[crypto.RevocationRegistryState] = None
        self.acc_leaves: tuple[bytes, ...] = ()
        self.issued: dict[bytes, creds.MembershipCredential] = {}
        self.memberlists: dict[str, creds.MemberlistCredential] = {}
        self.issuance_counter = 0
        self._op_queue: deque = deque()
        self._op_running = False

    @property
    def membership_cred_def_id(self) -> str:
        return cred_def_id_for(self.profile.did, creds.MEMBERSHIP_SCHEMA_NAME)

    @property
    def memberlist_cred_def_id(self) -> str:
        return cred_def_id_for(self.profile.did, creds.MEMBERLIST_SCHEMA_NAME)

    # --- serialized mutating operations -------------------------------------

    def enqueue_serialized(self, label: str, gen_factory) -> None:
        self._op_queue.append((label, gen_factory))
        if not self._op_running:
            self._dequeue_op()

    def _dequeue_op(self) -> None:
        if not self._op_queue:
            return
        self._op_running = True
        label, gen_factory = self._op_queue.popleft()
        self.start_session(label, self._run_serialized(gen_factory))

    def _run_serialized(self, gen_factory) -> Generator:
        try:
            yield from gen_factory()
        finally:
            self._op_running = False
            self._dequeue_op()

    # --- bootstrap ------------------------------------------------------------

    def publish_artifacts(self) -> Generator:
        """Register credential definitions and the epoch-0 revocation registry.
        Run once after the steward has granted this anchor its roles."""
        if registry.ROLE_PMV not in self.profile.roles:
            return
        for schema_name in (creds.MEMBERSHIP_SCHEMA_NAME, creds.MEMBERLIST_SCHEMA_NAME):
            cred_def = creds.CredentialDefinition(
                cred_def_id=cred_def_id_for(self.profile.did, schema_name),
                schema_id=schema_id_for(schema_name),
                issuer_did=self.profile.did,
                authentication_public_key=self.keys.public_key,
            )
            tx = registry.make_transaction(
                registry.KIND_CRED_DEF, cred_def.to_bytes(), self.profile.did, self.keys
            )
            yield from registry.submit_transaction(self.pool, tx)
        state, leaves = crypto.accumulator_init(self.profile.did)
        tx = registry.make_transaction(
            registry.KIND_REVOC_INIT, state.to_bytes(), self.profile.did, self.keys
        )
        receipt = yield from registry.submit_transaction(self.pool, tx)
        if receipt["outcome"] != registry.OUTCOME_APPLIED:
            raise AnchorError(f"revocation init rejected: {receipt['outcome']}")
        self.acc_state, self.acc_leaves = state, leaves
        for net in self.profile.represented_networks:
            self._rebuild_memberlist(net)
        self.trace("anchor.ready", anchor=self.profile.name)

    # --- message handling -------------------------------------------------

    def on_message(self, sender: str, msg: Message) -> None:
        if msg.kind == "anchor.verinym.request":
            self.enqueue_serialized(
                "verinym", lambda s=sender, m=msg: self._register_verinym(s, m)
            )
            return
        if msg.kind == "anchor.vc.request":
            self.enqueue_serialized(
                "issue-vc", lambda s=sender, m=msg: self._issue_membership(s, m)
            )
            return
        if msg.kind == "anchor.memberlist.request":
            self._serve_memberlist(sender, msg)
            return
        if msg.kind == "anchor.witness.request":
            self._refresh_witness(sender, msg)
            return

    # --- OIV: verinym registration ---------------------------------------

    def _register_verinym(self, sender: str, msg: Message) -> Generator:
        org_name = msg.body["org_name"]
        try:
            doc = registry.DidDocument.from_bytes(bytes.fromhex(msg.body["doc"]))
        except Exception:
            self.reply(sender, msg, "anchor.verinym.reply", {"ok": False, "error": "BadDocument"})
            return
        expected = self.profile.evidence_whitelist.get(org_name)
        if expected is None or doc.primary_key() != expected:
            # out-of-band vetting failed: no transaction leaves the anchor
            self.trace("anchor.evidence_mismatch", org=org_name)
            self.reply(
                sender, msg, "anchor.verinym.reply", {"ok": False, "error": "EvidenceMismatch"}
            )
            return
        attested = registry.DidDocument(
            did=doc.did,
            verification_keys=doc.verification_keys,
            service_endpoint=doc.service_endpoint,
            attestations=((self.profile.did, self.keys.sign(doc.attestation_bytes())),),
            version=doc.version,
        )
        tx = registry.make_transaction(
            registry.KIND_NYM, attested.to_bytes(), self.profile.did, self.keys
        )
        try:
            receipt = yield from registry.submit_transaction(self.pool, tx)
        except registry.QuorumUnavailable as e:
            self.reply(sender, msg, "anchor.verinym.reply", {"ok": False, "error": str(e)})
            return
        outcome = receipt["outcome"]
        if outcome not in (registry.OUTCOME_APPLIED, "Duplicate"):
            self.reply(sender, msg, "anchor.verinym.reply", {"ok": False, "error": outcome})
            return
        self.trace("anchor.verinym_registered", org=org_name, did=doc.did, outcome=outcome)
        self.reply(
            sender,
            msg,
            "anchor.verinym.reply",
            {"ok": True, "did": doc.did, "doc": attested.to_bytes().hex(), "outcome": outcome},
        )

    # --- PMV: membership issuance / revocation ------------------------------

    def _issue_membership(self, sender: str, msg: Message) -> Generator:
        holder_did = msg.body["holder_did"]
        network_id = msg.body["network_id"]

        def fail(error: str) -> None:
            self.reply(sender, msg, "anchor.vc.reply", {"ok": False, "error": error})

        if network_id not in self.profile.represented_networks or self.acc_state is None:
            fail("NotRepresented")
            return
        try:
            _, verinym = yield from registry.resolve_did(self.pool, holder_did)
        except registry.NotFound:
            fail("NoVerinym")
            return
        if not verinym:
            fail("NoVerinym")
            return
        if self.eligibility.get(network_id, {}).get(holder_did) is None:
            fail("NotEligible")
            return

        roster = self.rosters[network_id]
        if holder_did in roster.members:
            # idempotent re-issue: same credential, fresh witness, no epoch bump
            credential_id = roster.members[holder_did]
            vc = self.issued[credential_id]
            witness = crypto.witness_for(self.acc_state, self.acc_leaves, credential_id)
            self.reply(
                sender,
                msg,
                "anchor.vc.reply",
                {"ok": True, "vc": vc.to_bytes().hex(), "witness": witness.to_bytes().hex(),
                 "already_member": True},
            )
            return

        self.issuance_counter += 1
        vc = creds.issue_membership_credential(
            issuer_keys=self.keys,
            issuer_did=self.profile.did,
            cred_def_id=self.membership_cred_def_id,
            holder_did=holder_did,
            network_id=network_id,
            issuance_counter=self.issuance_counter,
        )
        new_state, new_leaves = crypto.accumulator_add(
            self.acc_state, self.acc_leaves, vc.credential_id
        )
        tx = registry.make_transaction(
            registry.KIND_REVOC_UPDATE, new_state.to_bytes(), self.profile.did, self.keys
        )
        try:
            receipt = yield from registry.submit_transaction(self.pool, tx)
        except registry.QuorumUnavailable as e:
            fail(str(e))
            return
        if receipt["outcome"] != registry.OUTCOME_APPLIED:
            fail(f"RegistryRejected:{receipt['outcome']}")
            return
        self.acc_state, self.acc_leaves = new_state, new_leaves
        roster.members[holder_did] = vc.credential_id
        roster.version += 1
        self.issued[vc.credential_id] = vc
        self._rebuild_memberlist(network_id)
        witness = crypto.witness_for(self.acc_state, self.acc_leaves, vc.credential_id)
        self.trace(
            "anchor.vc_issued",
            network=network_id,
            holder=holder_did,
            epoch=self.acc_state.epoch,
            roster_version=roster.version,
        )
        self.reply(
            sender,
            msg,
            "anchor.vc.reply",
            {"ok": True, "vc": vc.to_bytes().hex(), "witness": witness.to_bytes().hex()},
        )

    def revoke_membership(self, holder_did: str, network_id: str) -> Generator:
        """Remove the holder's credential from the accumulator (next epoch),
        publish the update, and drop the holder from the roster. Run via
        enqueue_serialized."""
        if network_id not in self.profile.represented_networks:
            raise NotRepresented(network_id)
        roster = self.rosters[network_id]
        if holder_did not in roster.members:
            raise NotAMember(holder_did)
        credential_id = roster.members[holder_did]
        new_state, new_leaves = crypto.accumulator_revoke(
            self.acc_state, self.acc_leaves, credential_id
        )
        tx = registry.make_transaction(
            registry.KIND_REVOC_UPDATE, new_state.to_bytes(), self.profile.did, self.keys
        )
        receipt = yield from registry.submit_transaction(self.pool, tx)
        if receipt["outcome"] != registry.OUTCOME_APPLIED:
            raise AnchorError(f"revocation update rejected: {receipt['outcome']}")
        self.acc_state, self.acc_leaves = new_state, new_leaves
        del roster.members[holder_did]
        roster.version += 1
        self._rebuild_memberlist(network_id)
        self.trace(
            "anchor.revoked",
            network=network_id,
            holder=holder_did,
            epoch=self.acc_state.epoch,
            roster_version=roster.version,
        )

    # --- PMV: read-side services ---------------------------------------------

    def _rebuild_memberlist(self, network_id: str) -> None:
        roster = self.rosters[network_id]
        self.memberlists[network_id] = creds.issue_memberlist_credential(
            issuer_keys=self.keys,
            issuer_did=self.profile.did,
            cred_def_id=self.memberlist_cred_def_id,
            network_id=network_id,
            member_dids=tuple(sorted(roster.members)),
            roster_version=roster.version,
        )

    def _serve_memberlist(self, sender: str, msg: Message) -> None:
        network_id = msg.body["network_id"]
        memberlist = self.memberlists.get(network_id)
        if memberlist is None:
            self.reply(
                sender, msg, "anchor.memberlist.reply", {"ok": False, "error": "NotRepresented"}
            )
            return
        vp = creds.build_self_signed_vp(
            signer_did=self.profile.did,
            signer_keys=self.keys,
            payload=memberlist.to_bytes(),
            challenge_nonce=bytes.fromhex(msg.body["nonce"]),
        )
        self.reply(
            sender, msg, "anchor.memberlist.reply", {"ok": True, "vp": vp.to_bytes().hex()}
        )

    def _refresh_witness(self, sender: str, msg: Message) -> None:
        credential_id = bytes.fromhex(msg.body["credential_id"])
        if self.acc_state is None or credential_id not in self.acc_leaves:
            self.reply(
                sender, msg, "anchor.witness.reply", {"ok": False, "error": "NotAMember"}
            )
            return
        witness = crypto.witness_for(self.acc_state, self.acc_leaves, credential_id)
        self.reply(
            sender, msg, "anchor.witness.reply",
            {"ok": True, "witness": witness.to_bytes().hex()},
        )

    # --- invariants ---------------------------------------------------------

    def roster_accumulator_coherent(self) -> bool:
        """Issuer-side check: the accumulator leaf set equals the union of all
        roster credential ids."""
        roster_ids = sorted(
            cred_id for roster in self.rosters.values() for cred_id in roster.members.values()
        )
        return tuple(roster_ids) == tuple(sorted(self.acc_leaves))


def schema_id_for(schema_name: str) -> str:
    return f"schema:{schema_name}:1"


def cred_def_id_for(issuer_did: str, schema_name: str) -> str:
    return f"creddef:{issuer_did}:{schema_id_for(schema_name)}"


def membership_schema() -> creds.CredentialSchema:
    return creds.CredentialSchema(
        schema_id=schema_id_for(creds.MEMBERSHIP_SCHEMA_NAME),
        name=creds.MEMBERSHIP_SCHEMA_NAME,
        version="1",
        attribute_names=creds.MEMBERSHIP_ATTRS,
    )


def memberlist_schema() -> creds.CredentialSchema:
    return creds.CredentialSchema(
        schema_id=schema_id_for(creds.MEMBERLIST_SCHEMA_NAME),
        name=creds.MEMBERLIST_SCHEMA_NAME,
        version="1",
        attribute_names=creds.MEMBERLIST_ATTRS,
    )


class StewardService(Actor):
    """Genesis steward: registers anchors (verinym + role grants) and the
    credential schemas during bootstrap."""

    def __init__(
        self,
        address: str,
        did: str,
        keys: crypto.KeyPair,
        pool: registry.PoolInfo,
    ):
        super().__init__(address)
        self.did = did
        self.keys = keys
        self.pool = pool

    def bootstrap(
        self, anchor_docs: list[tuple[registry.DidDocument, frozenset[str]]]
    ) -> Generator:
        for schema in (membership_schema(), memberlist_schema()):
            tx = registry.make_transaction(
                registry.KIND_SCHEMA, schema.to_bytes(), self.did, self.keys
            )
            yield from registry.submit_transaction(self.pool, tx)
        for doc, roles in anchor_docs:
            attested = registry.DidDocument(
                did=doc.did,
                verification_keys=doc.verification_keys,
                service_endpoint=doc.service_endpoint,
                attestations=((self.did, self.keys.sign(doc.attestation_bytes())),),
                version=doc.version,
            )
            tx = registry.make_transaction(
                registry.KIND_NYM, attested.to_bytes(), self.did, self.keys
            )
            receipt = yield from registry.submit_transaction(self.pool, tx)
            if receipt["outcome"] != registry.OUTCOME_APPLIED:
                raise AnchorError(f"anchor registration rejected: {receipt['outcome']}")
            for role in sorted(roles):
                tx = registry.make_transaction(
                    registry.KIND_ANCHOR_GRANT,
                    registry.anchor_grant_payload(doc.did, role),
                    self.did,
                    self.keys,
                )
                receipt = yield from registry.submit_transaction(self.pool, tx)
                if receipt["outcome"] != registry.OUTCOME_APPLIED:
                    raise AnchorError(f"role grant rejected: {receipt['outcome']}")
        self.trace("steward.bootstrap_complete", anchors=len(anchor_docs))
