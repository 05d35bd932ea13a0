"""Interoperation identity network: a replicated verifiable data registry.

A pool of N = 3f+1 nodes maintains DID documents, credential schemas,
credential definitions, revocation registry states, and anchor roles. A
designated sequencer orders submitted transactions; a commit receipt requires
acknowledgment signatures from a 2f+1 quorum over (sequence, tx digest). Every
replica folds the same ordered log with the same pure validation rules, so
non-faulty replicas stay byte-identical; invalid transactions commit to the
log as explicit rejections. Reads are open: any client may query, and a result
counts once f+1 replicas return byte-identical answers.

The sequencer is assumed honest (it may crash but not equivocate); Byzantine
ordering is out of scope for this registry.
"""

from __future__ import annotations

import json
import base64
from dataclasses import dataclass, field, replace
from typing import Generator, Optional

from . import crypto
from . import encoding as enc
from .actors import Actor, Gather, Message, Request
from .credentials import (
    CredentialDefinition,
    CredentialError,
    CredentialSchema,
    VerificationArtifacts,
)

ROLE_STEWARD = "STEWARD"
ROLE_OIV = "OIV"
ROLE_PMV = "PMV"
ROLES = (ROLE_STEWARD, ROLE_OIV, ROLE_PMV)
ANCHOR_ROLES = frozenset(ROLES)
VERINYM_ATTESTER_ROLES = frozenset({ROLE_STEWARD, ROLE_OIV})

KIND_NYM = "NYM"
KIND_SCHEMA = "SCHEMA"
KIND_CRED_DEF = "CRED_DEF"
KIND_REVOC_INIT = "REVOC_INIT"
KIND_REVOC_UPDATE = "REVOC_UPDATE"
KIND_ANCHOR_GRANT = "ANCHOR_GRANT"

OUTCOME_APPLIED = "APPLIED"

QUERY_DID = "did"
QUERY_SCHEMA = "schema"
QUERY_CRED_DEF = "cred_def"
QUERY_REVOCATION = "revocation_state"


class RegistryError(Exception):
    pass


class QuorumUnavailable(RegistryError):
    pass


class InconsistentReplicas(RegistryError):
    pass


class NotFound(RegistryError):
    pass


def make_did(iin_id: str, public_key: bytes) -> str:
    suffix = base64.b32encode(crypto.digest(public_key)).decode("ascii").rstrip("=").lower()
    return f"did:iin:{iin_id}:{suffix}"


def did_matches_key(did: str, public_key: bytes) -> bool:
    parts = did.split(":")
    if len(parts) != 4 or parts[0] != "did" or parts[1] != "iin":
        return False
    return make_did(parts[2], public_key) == did


@dataclass(frozen=True)
class DidDocument:
    did: str
    verification_keys: tuple[bytes, ...]
    service_endpoint: str
    attestations: tuple[tuple[str, crypto.Signature], ...]
    version: int = 1

    def primary_key(self) -> bytes:
        return self.verification_keys[0]

    def attestation_bytes(self) -> bytes:
        # what an anchor signs: did + keys + endpoint, independent of version
        return enc.record(
            enc.TAG_ATTESTATION,
            enc.encode_str(self.did),
            enc.encode_list(enc.encode_bytes(k) for k in self.verification_keys),
            enc.encode_str(self.service_endpoint),
        )

    def to_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_DID_DOC,
            enc.encode_str(self.did),
            enc.encode_list(enc.encode_bytes(k) for k in self.verification_keys),
            enc.encode_str(self.service_endpoint),
            enc.encode_list(
                enc.encode_str(signer) + sig.to_bytes() for signer, sig in self.attestations
            ),
            enc.encode_u64(self.version),
        )

    @staticmethod
    def from_bytes(data: bytes) -> "DidDocument":
        reader = enc.Reader(data, expect_tag=enc.TAG_DID_DOC)
        did = reader.str_()
        keys = tuple(reader.bytes_() for _ in range(reader.count()))
        endpoint = reader.str_()
        attestations = tuple(
            (reader.str_(), crypto.Signature.read(reader)) for _ in range(reader.count())
        )
        version = reader.u64()
        reader.done()
        return DidDocument(
            did=did,
            verification_keys=keys,
            service_endpoint=endpoint,
            attestations=attestations,
            version=version,
        )


def new_did_document(
    iin_id: str, keys: crypto.KeyPair, service_endpoint: str
) -> DidDocument:
    did = make_did(iin_id, keys.public_key)
    return DidDocument(
        did=did,
        verification_keys=(keys.public_key,),
        service_endpoint=service_endpoint,
        attestations=(),
    )


@dataclass(frozen=True)
class RegistryTransaction:
    kind: str
    payload: bytes
    submitter_did: str
    submitter_signature: crypto.Signature

    def signing_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_TX,
            enc.encode_str(self.kind),
            enc.encode_bytes(self.payload),
            enc.encode_str(self.submitter_did),
        )

    def to_bytes(self) -> bytes:
        return self.signing_bytes() + self.submitter_signature.to_bytes()

    def digest(self) -> bytes:
        return crypto.digest(self.to_bytes())

    @staticmethod
    def from_bytes(data: bytes) -> "RegistryTransaction":
        reader = enc.Reader(data, expect_tag=enc.TAG_TX)
        tx = RegistryTransaction(
            kind=reader.str_(),
            payload=reader.bytes_(),
            submitter_did=reader.str_(),
            submitter_signature=crypto.Signature.read(reader),
        )
        reader.done()
        return tx


def make_transaction(
    kind: str, payload: bytes, submitter_did: str, submitter_keys: crypto.KeyPair
) -> RegistryTransaction:
    unsigned = RegistryTransaction(
        kind=kind,
        payload=payload,
        submitter_did=submitter_did,
        submitter_signature=crypto.Signature(b""),
    )
    return RegistryTransaction(
        kind=kind,
        payload=payload,
        submitter_did=submitter_did,
        submitter_signature=submitter_keys.sign(unsigned.signing_bytes()),
    )


def anchor_grant_payload(target_did: str, role: str) -> bytes:
    return enc.record(enc.TAG_ANCHOR_GRANT, enc.encode_str(target_did), enc.encode_str(role))


def parse_anchor_grant(payload: bytes) -> tuple[str, str]:
    reader = enc.Reader(payload, expect_tag=enc.TAG_ANCHOR_GRANT)
    target, role = reader.str_(), reader.str_()
    reader.done()
    return target, role


@dataclass(frozen=True)
class RegistryState:
    """Deterministic fold of the ordered transaction log."""

    docs: dict[str, DidDocument] = field(default_factory=dict)
    schemas: dict[str, CredentialSchema] = field(default_factory=dict)
    cred_defs: dict[str, CredentialDefinition] = field(default_factory=dict)
    revocation: dict[str, crypto.RevocationRegistryState] = field(default_factory=dict)
    roles: dict[str, frozenset[str]] = field(default_factory=dict)
    verinym_threshold: int = 1
    applied: frozenset[bytes] = frozenset()

    @staticmethod
    def genesis(
        steward_docs: tuple[DidDocument, ...], verinym_threshold: int = 1
    ) -> "RegistryState":
        return RegistryState(
            docs={d.did: d for d in sorted(steward_docs, key=lambda d: d.did)},
            roles={d.did: frozenset({ROLE_STEWARD}) for d in steward_docs},
            verinym_threshold=verinym_threshold,
        )

    def has_role(self, did: str, role: str) -> bool:
        return role in self.roles.get(did, frozenset())

    def verinym_status(self, did: str) -> bool:
        doc = self.docs.get(did)
        if doc is None:
            return False
        if self.has_role(did, ROLE_STEWARD):
            return True  # genesis stewards are the root of trust
        valid = 0
        for signer, sig in doc.attestations:
            signer_doc = self.docs.get(signer)
            if signer_doc is None:
                continue
            if not (self.roles.get(signer, frozenset()) & VERINYM_ATTESTER_ROLES):
                continue
            if crypto.verify(signer_doc.primary_key(), doc.attestation_bytes(), sig):
                valid += 1
        return valid >= self.verinym_threshold

    def to_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_REGISTRY_STATE,
            enc.encode_list(
                enc.encode_bytes(self.docs[k].to_bytes()) for k in sorted(self.docs)
            ),
            enc.encode_list(
                enc.encode_bytes(self.schemas[k].to_bytes()) for k in sorted(self.schemas)
            ),
            enc.encode_list(
                enc.encode_bytes(self.cred_defs[k].to_bytes()) for k in sorted(self.cred_defs)
            ),
            enc.encode_list(
                enc.encode_bytes(self.revocation[k].to_bytes())
                for k in sorted(self.revocation)
            ),
            enc.encode_list(
                enc.encode_str(did) + enc.encode_list(
                    enc.encode_str(r) for r in sorted(self.roles[did])
                )
                for did in sorted(self.roles)
            ),
            enc.encode_u64(self.verinym_threshold),
            enc.encode_list(enc.encode_bytes(d) for d in sorted(self.applied)),
        )

    def state_hash(self) -> bytes:
        return crypto.digest(self.to_bytes())


def apply_transaction(state: RegistryState, tx: RegistryTransaction) -> tuple[RegistryState, str]:
    """Pure, deterministic validation and application. Returns the next state
    and an outcome: APPLIED, or a rejection reason leaving the state unchanged."""
    submitter_doc = state.docs.get(tx.submitter_did)
    if submitter_doc is not None:
        submitter_key = submitter_doc.primary_key()
    elif tx.kind == KIND_NYM:
        # self-certifying first registration: the submitter is the document
        try:
            doc = DidDocument.from_bytes(tx.payload)
        except enc.DecodeError:
            return state, "BadSignature"
        if doc.did != tx.submitter_did or not doc.verification_keys:
            return state, "BadSignature"
        submitter_key = doc.primary_key()
    else:
        return state, "BadSignature"

    if not crypto.verify(submitter_key, tx.signing_bytes(), tx.submitter_signature):
        return state, "BadSignature"

    if tx.digest() in state.applied:
        return state, "Duplicate"

    if tx.kind == KIND_NYM:
        return _apply_nym(state, tx)
    if tx.kind == KIND_SCHEMA:
        return _apply_schema(state, tx)
    if tx.kind == KIND_CRED_DEF:
        return _apply_cred_def(state, tx)
    if tx.kind == KIND_REVOC_INIT:
        return _apply_revoc_init(state, tx)
    if tx.kind == KIND_REVOC_UPDATE:
        return _apply_revoc_update(state, tx)
    if tx.kind == KIND_ANCHOR_GRANT:
        return _apply_anchor_grant(state, tx)
    return state, "BadSignature"


def _committed(state: RegistryState, tx: RegistryTransaction, **changes) -> tuple[RegistryState, str]:
    return replace(state, applied=state.applied | {tx.digest()}, **changes), OUTCOME_APPLIED


def _apply_nym(state: RegistryState, tx: RegistryTransaction) -> tuple[RegistryState, str]:
    try:
        doc = DidDocument.from_bytes(tx.payload)
    except enc.DecodeError:
        return state, "BadSignature"
    if not doc.verification_keys or not did_matches_key(doc.did, doc.primary_key()):
        return state, "BadSignature"
    for signer, sig in doc.attestations:
        signer_doc = state.docs.get(signer)
        if signer_doc is None or not (
            state.roles.get(signer, frozenset()) & VERINYM_ATTESTER_ROLES
        ):
            return state, "UnauthorizedRole"
        if not crypto.verify(signer_doc.primary_key(), doc.attestation_bytes(), sig):
            return state, "BadSignature"
    existing = state.docs.get(doc.did)
    if existing is not None:
        if doc.version == existing.version:
            return state, "Duplicate"
        if doc.version != existing.version + 1:
            return state, "StaleEpoch"
    return _committed(state, tx, docs={**state.docs, doc.did: doc})


def _apply_schema(state: RegistryState, tx: RegistryTransaction) -> tuple[RegistryState, str]:
    if not (state.roles.get(tx.submitter_did, frozenset()) & ANCHOR_ROLES):
        return state, "UnauthorizedRole"
    try:
        schema = CredentialSchema.from_bytes(tx.payload)
    except (enc.DecodeError, CredentialError):
        return state, "BadSignature"
    if schema.schema_id in state.schemas:
        return state, "DuplicateId"
    return _committed(state, tx, schemas={**state.schemas, schema.schema_id: schema})


def _apply_cred_def(state: RegistryState, tx: RegistryTransaction) -> tuple[RegistryState, str]:
    if not (state.roles.get(tx.submitter_did, frozenset()) & ANCHOR_ROLES):
        return state, "UnauthorizedRole"
    try:
        cred_def = CredentialDefinition.from_bytes(tx.payload)
    except enc.DecodeError:
        return state, "BadSignature"
    if cred_def.cred_def_id in state.cred_defs:
        return state, "DuplicateId"
    return _committed(state, tx, cred_defs={**state.cred_defs, cred_def.cred_def_id: cred_def})


def _apply_revoc_init(state: RegistryState, tx: RegistryTransaction) -> tuple[RegistryState, str]:
    if not state.has_role(tx.submitter_did, ROLE_PMV):
        return state, "UnauthorizedRole"
    try:
        reg = crypto.RevocationRegistryState.from_bytes(tx.payload)
    except enc.DecodeError:
        return state, "BadSignature"
    if reg.issuer_did != tx.submitter_did:
        return state, "UnauthorizedRole"
    if reg.issuer_did in state.revocation:
        return state, "DuplicateId"
    if reg.epoch != 0:
        return state, "StaleEpoch"
    return _committed(state, tx, revocation={**state.revocation, reg.issuer_did: reg})


def _apply_revoc_update(state: RegistryState, tx: RegistryTransaction) -> tuple[RegistryState, str]:
    try:
        reg = crypto.RevocationRegistryState.from_bytes(tx.payload)
    except enc.DecodeError:
        return state, "BadSignature"
    current = state.revocation.get(reg.issuer_did)
    if current is None or reg.issuer_did != tx.submitter_did:
        return state, "UnauthorizedRole"
    if reg.epoch != current.epoch + 1:
        return state, "StaleEpoch"
    return _committed(state, tx, revocation={**state.revocation, reg.issuer_did: reg})


def _apply_anchor_grant(state: RegistryState, tx: RegistryTransaction) -> tuple[RegistryState, str]:
    if not state.has_role(tx.submitter_did, ROLE_STEWARD):
        return state, "UnauthorizedRole"
    try:
        target, role = parse_anchor_grant(tx.payload)
    except enc.DecodeError:
        return state, "BadSignature"
    if role not in ROLES:
        return state, "BadSignature"
    held = state.roles.get(target, frozenset())
    if role in held:
        return state, "Duplicate"
    return _committed(state, tx, roles={**state.roles, target: held | {role}})


def replay_log(
    genesis: RegistryState, entries: list[tuple[int, bytes, str]]
) -> RegistryState:
    """Refold a recorded log (seq, tx bytes, outcome) on a fresh state; the
    recorded outcomes must reproduce exactly."""
    state = genesis
    for seq, tx_bytes, recorded_outcome in entries:
        state, outcome = apply_transaction(state, RegistryTransaction.from_bytes(tx_bytes))
        if outcome != recorded_outcome:
            raise RegistryError(
                f"replay divergence at seq {seq}: {outcome} != {recorded_outcome}"
            )
    return state


def dump_log(entries: list[tuple[int, bytes, str]]) -> str:
    """One JSON record per line; load_log + replay_log reproduce the state."""
    return "".join(
        json.dumps({"seq": seq, "tx": tx.hex(), "outcome": outcome}) + "\n"
        for seq, tx, outcome in entries
    )


def load_log(text: str) -> list[tuple[int, bytes, str]]:
    entries = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        entries.append((obj["seq"], bytes.fromhex(obj["tx"]), obj["outcome"]))
    return entries


# --- pool --------------------------------------------------------------------


@dataclass(frozen=True)
class PoolInfo:
    iin_id: str
    node_addresses: tuple[str, ...]  # sequencer first
    node_public_keys: dict[str, bytes]

    @property
    def n(self) -> int:
        return len(self.node_addresses)

    @property
    def f(self) -> int:
        return (self.n - 1) // 3

    @property
    def write_quorum(self) -> int:
        return 2 * self.f + 1

    @property
    def read_quorum(self) -> int:
        return self.f + 1

    @property
    def sequencer(self) -> str:
        return self.node_addresses[0]


def ack_bytes(seq: int, tx_digest: bytes) -> bytes:
    return enc.record(enc.TAG_ACK, enc.encode_u64(seq), enc.encode_bytes(tx_digest))


class IinNode(Actor):
    """One registry replica; the pool's first node doubles as sequencer."""

    def __init__(
        self,
        address: str,
        node_id: str,
        keys: crypto.KeyPair,
        genesis: RegistryState,
        pool: PoolInfo,
    ):
        super().__init__(address)
        self.node_id = node_id
        self.keys = keys
        self.pool = pool
        self.state = genesis
        self.genesis = genesis
        self.log: list[tuple[int, bytes, str]] = []
        self.next_seq = 0
        self._holdback: dict[int, tuple[bytes, str, Message]] = {}
        self._assign_seq = 0
        self._fetching = False

    @property
    def is_sequencer(self) -> bool:
        return self.address == self.pool.sequencer

    # --- shared apply path ---------------------------------------------------

    def _apply_in_order(self, seq: int, tx_bytes: bytes) -> str:
        assert seq == self.next_seq
        tx = RegistryTransaction.from_bytes(tx_bytes)
        self.state, outcome = apply_transaction(self.state, tx)
        self.log.append((seq, tx_bytes, outcome))
        self.next_seq += 1
        self.trace(
            "registry.commit",
            seq=seq,
            tx_kind=tx.kind,
            submitter=tx.submitter_did,
            outcome=outcome,
        )
        return outcome

    def _ack_body(self, seq: int, tx_bytes: bytes) -> dict:
        tx_digest = crypto.digest(
            RegistryTransaction.from_bytes(tx_bytes).to_bytes()
        )
        sig = self.keys.sign(ack_bytes(seq, tx_digest))
        return {
            "seq": seq,
            "node": self.node_id,
            "address": self.address,
            "tx_digest": tx_digest.hex(),
            "ack": sig.bytes_.hex(),
        }

    # --- message handling ------------------------------------------------

    def on_message(self, sender: str, msg: Message) -> None:
        if msg.kind == "iin.submit":
            if not self.is_sequencer:
                self.reply(sender, msg, "iin.submit.reply", {"error": "NotSequencer"})
                return
            self.start_session("sequence", self._sequence(sender, msg))
            return
        if msg.kind == "iin.order":
            if sender != self.pool.sequencer:
                return
            self._handle_order(sender, msg)
            return
        if msg.kind == "iin.fetch":
            lo, hi = int(msg.body["from"]), int(msg.body["to"])
            entries = [
                [seq, tx.hex(), outcome]
                for seq, tx, outcome in self.log
                if lo <= seq <= hi
            ]
            self.reply(sender, msg, "iin.fetch.reply", {"entries": entries})
            return
        if msg.kind == "iin.query":
            self.reply(sender, msg, "iin.query.reply", {"result": self._query(msg.body).hex()})
            return

    def _sequence(self, client: str, msg: Message) -> Generator:
        tx_bytes = bytes.fromhex(msg.body["tx"])
        seq = self._assign_seq
        self._assign_seq += 1
        outcome = self._apply_in_order(seq, tx_bytes)
        tx_digest = crypto.digest(RegistryTransaction.from_bytes(tx_bytes).to_bytes())
        own_ack = self._ack_body(seq, tx_bytes)

        others = tuple(a for a in self.pool.node_addresses if a != self.address)
        need = self.pool.write_quorum - 1  # own ack counts

        def enough(results: list) -> bool:
            return sum(1 for r in results if self._valid_ack(r, seq, tx_digest)) >= need

        replies = yield Gather(
            tuple((a, "iin.order", {"seq": seq, "tx": msg.body["tx"]}) for a in others),
            timeout=60,
            early=enough,
        )
        acks = [own_ack] + [
            r.body for r in replies if self._valid_ack(r, seq, tx_digest)
        ]
        if len(acks) < self.pool.write_quorum:
            self.reply(client, msg, "iin.submit.reply", {"error": "QuorumUnavailable"})
            return
        self.reply(
            client,
            msg,
            "iin.submit.reply",
            {
                "seq": seq,
                "outcome": outcome,
                "tx_digest": tx_digest.hex(),
                "acks": [
                    [a["address"], a["ack"]] for a in sorted(acks, key=lambda a: a["address"])
                ],
            },
        )

    def _valid_ack(self, reply: Optional[Message], seq: int, tx_digest: bytes) -> bool:
        if reply is None or reply.kind != "iin.ack":
            return False
        body = reply.body
        if body.get("seq") != seq or body.get("tx_digest") != tx_digest.hex():
            return False
        node_key = self.pool.node_public_keys.get(body.get("address", ""))
        if node_key is None:
            return False
        return crypto.verify(
            node_key, ack_bytes(seq, tx_digest), crypto.Signature(bytes.fromhex(body["ack"]))
        )

    def _handle_order(self, sender: str, msg: Message) -> None:
        seq = int(msg.body["seq"])
        tx_hex = msg.body["tx"]
        if seq < self.next_seq:
            self.reply(sender, msg, "iin.ack", self._ack_body(seq, bytes.fromhex(tx_hex)))
            return
        if seq == self.next_seq:
            tx_bytes = bytes.fromhex(tx_hex)
            self._apply_in_order(seq, tx_bytes)
            self.reply(sender, msg, "iin.ack", self._ack_body(seq, tx_bytes))
            self._drain_holdback()
            return
        # gap: hold the order back and catch up from the sequencer
        self._holdback[seq] = (bytes.fromhex(tx_hex), sender, msg)
        if not self._fetching:
            self._fetching = True
            self.start_session("catchup", self._catch_up(seq - 1))

    def _catch_up(self, upto: int) -> Generator:
        try:
            reply = yield Request(
                self.pool.sequencer,
                "iin.fetch",
                {"from": self.next_seq, "to": upto},
                timeout=60,
            )
            if reply is not None and reply.kind == "iin.fetch.reply":
                for seq, tx_hex, _outcome in reply.body["entries"]:
                    if seq == self.next_seq:
                        self._apply_in_order(seq, bytes.fromhex(tx_hex))
                self._drain_holdback()
        finally:
            self._fetching = False

    def _drain_holdback(self) -> None:
        while self.next_seq in self._holdback:
            tx_bytes, sender, msg = self._holdback.pop(self.next_seq)
            seq = self.next_seq
            self._apply_in_order(seq, tx_bytes)
            self.reply(sender, msg, "iin.ack", self._ack_body(seq, tx_bytes))

    # --- open reads --------------------------------------------------------

    def _query(self, body: dict) -> bytes:
        what = body.get("what", "")
        ident = body.get("id", "")
        found = 0
        payload = b""
        verinym = 0
        if what == QUERY_DID:
            doc = self.state.docs.get(ident)
            if doc is not None:
                found, payload = 1, doc.to_bytes()
                verinym = 1 if self.state.verinym_status(ident) else 0
        elif what == QUERY_SCHEMA:
            schema = self.state.schemas.get(ident)
            if schema is not None:
                found, payload = 1, schema.to_bytes()
        elif what == QUERY_CRED_DEF:
            cred_def = self.state.cred_defs.get(ident)
            if cred_def is not None:
                found, payload = 1, cred_def.to_bytes()
        elif what == QUERY_REVOCATION:
            reg = self.state.revocation.get(ident)
            if reg is not None:
                found, payload = 1, reg.to_bytes()
        return enc.record(
            enc.TAG_QUERY_REPLY,
            enc.encode_str(what),
            enc.encode_str(ident),
            enc.encode_u64(found),
            enc.encode_bytes(payload),
            enc.encode_u64(verinym),
        )


def parse_query_reply(data: bytes) -> tuple[str, str, bool, bytes, bool]:
    reader = enc.Reader(data, expect_tag=enc.TAG_QUERY_REPLY)
    what = reader.str_()
    ident = reader.str_()
    found = reader.u64() == 1
    payload = reader.bytes_()
    verinym = reader.u64() == 1
    reader.done()
    return what, ident, found, payload, verinym


# --- client-side pool protocols (run inside an actor session) ----------------


def submit_transaction(pool: PoolInfo, tx: RegistryTransaction) -> Generator:
    """Submit to the sequencer and await a quorum-backed receipt. Returns the
    receipt body; raises QuorumUnavailable when the pool cannot commit."""
    reply = yield Request(pool.sequencer, "iin.submit", {"tx": tx.to_bytes().hex()}, timeout=150)
    if reply is None:
        raise QuorumUnavailable("no reply from sequencer")
    if reply.body.get("error"):
        raise QuorumUnavailable(reply.body["error"])
    receipt = reply.body
    tx_digest = bytes.fromhex(receipt["tx_digest"])
    valid = 0
    for address, sig_hex in receipt.get("acks", []):
        key = pool.node_public_keys.get(address)
        if key is not None and crypto.verify(
            key, ack_bytes(receipt["seq"], tx_digest), crypto.Signature(bytes.fromhex(sig_hex))
        ):
            valid += 1
    if valid < pool.write_quorum:
        raise QuorumUnavailable(f"receipt carries {valid} valid acks")
    return receipt


def quorum_query(pool: PoolInfo, what: str, ident: str) -> Generator:
    """Read from all pool nodes; succeed once f+1 byte-identical replies agree.
    Returns (found, payload, verinym); raises InconsistentReplicas otherwise."""
    threshold = pool.read_quorum

    def agreed(results: list) -> bool:
        counts: dict[str, int] = {}
        for r in results:
            if r is not None and r.kind == "iin.query.reply":
                value = r.body.get("result", "")
                counts[value] = counts.get(value, 0) + 1
                if counts[value] >= threshold:
                    return True
        return False

    replies = yield Gather(
        tuple(
            (addr, "iin.query", {"what": what, "id": ident})
            for addr in pool.node_addresses
        ),
        timeout=90,
        early=agreed,
    )
    counts: dict[str, int] = {}
    for r in replies:
        if r is not None and r.kind == "iin.query.reply":
            value = r.body.get("result", "")
            counts[value] = counts.get(value, 0) + 1
    for value, n in counts.items():
        if n >= threshold:
            _, _, found, payload, verinym = parse_query_reply(bytes.fromhex(value))
            return found, payload, verinym
    raise InconsistentReplicas(f"{what}:{ident} had no {threshold} matching replies")


def resolve_did(pool: PoolInfo, did: str) -> Generator:
    """Resolve a DID document plus its verinym status; raises NotFound."""
    found, payload, verinym = yield from quorum_query(pool, QUERY_DID, did)
    if not found:
        raise NotFound(did)
    return DidDocument.from_bytes(payload), verinym


def read_schema(pool: PoolInfo, schema_id: str) -> Generator:
    found, payload, _ = yield from quorum_query(pool, QUERY_SCHEMA, schema_id)
    if not found:
        raise NotFound(schema_id)
    return CredentialSchema.from_bytes(payload)


def read_cred_def(pool: PoolInfo, cred_def_id: str) -> Generator:
    found, payload, _ = yield from quorum_query(pool, QUERY_CRED_DEF, cred_def_id)
    if not found:
        raise NotFound(cred_def_id)
    return CredentialDefinition.from_bytes(payload)


def read_revocation_state(pool: PoolInfo, issuer_did: str) -> Generator:
    found, payload, _ = yield from quorum_query(pool, QUERY_REVOCATION, issuer_did)
    if not found:
        raise NotFound(issuer_did)
    return crypto.RevocationRegistryState.from_bytes(payload)


def artifacts_from_state(
    state: RegistryState, presenter_did: str, issuer_did: str, schema_id: str, cred_def_id: str
) -> VerificationArtifacts:
    """Local-view artifact bundle for direct (non-networked) verification."""
    return VerificationArtifacts(
        presenter_doc=state.docs.get(presenter_did),
        presenter_verinym=state.verinym_status(presenter_did),
        schema=state.schemas.get(schema_id),
        cred_def=state.cred_defs.get(cred_def_id),
        revocation_state=state.revocation.get(issuer_did),
    )
