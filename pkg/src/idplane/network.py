"""Simulated permissioned network: MSP-style certificate hierarchies per
organization, a shared local ledger holding interoperation policy and foreign
identity records, the configuration-management contract that admits those
records under an all-orgs endorsement policy, and the data-plane proof hook.

The ledger is a single-writer state machine per network; the contract is a
pure function of (state, payload, endorsements), so replaying the block log
reproduces the state exactly. Foreign identity records flip between ACTIVE and
REVOKED only through committed contract transactions; revocation keeps the
record (status flip) for auditability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from . import crypto
from . import encoding as enc
from .actors import Actor, Message

STATUS_ACTIVE = "ACTIVE"
STATUS_REVOKED = "REVOKED"

OUTCOME_APPLIED = "APPLIED"
OUTCOME_NOOP = "NOOP"


class NetworkError(Exception):
    pass


class UnknownOrg(NetworkError):
    pass


class DataProofError(NetworkError):
    """Data-plane verification failure; names the offending organization."""

    def __init__(self, org_id: str, detail: str = ""):
        self.org_id = org_id
        super().__init__(f"{type(self).__name__}({org_id})" + (f": {detail}" if detail else ""))


class NoIdentityRecord(DataProofError):
    pass


class RevokedMember(DataProofError):
    pass


class BadProofSignature(DataProofError):
    pass


class ExpiredCertificate(DataProofError):
    pass


# --- organizations and MSP bundles -------------------------------------------


@dataclass
class PeerIdentity:
    name: str
    keys: crypto.KeyPair
    chain: tuple[crypto.Certificate, ...]  # root first, peer leaf last


@dataclass
class Organization:
    """One org's presence inside one network: an MSP certificate hierarchy and
    the peers enrolled under it."""

    org_id: str
    network_id: str
    root_keys: crypto.KeyPair
    root_cert: crypto.Certificate
    peers: list[PeerIdentity]
    agent_address: str
    cert_lifetime: int
    _seed_fn: Callable[[str], bytes]
    _rotation: int = 0

    @staticmethod
    def create(
        org_id: str,
        network_id: str,
        agent_address: str,
        seed_fn: Callable[[str], bytes],
        peer_count: int,
        now: int,
        cert_lifetime: int,
    ) -> "Organization":
        root_keys = crypto.KeyPair.from_seed(seed_fn(f"msp-root:{network_id}:{org_id}"))
        root_spec = crypto.CertSpec(
            name=f"{network_id}.{org_id}.root",
            public_key=root_keys.public_key,
            valid_from=now,
            valid_to=now + 100 * cert_lifetime,  # roots outlive several leaf rotations
        )
        org = Organization(
            org_id=org_id,
            network_id=network_id,
            root_keys=root_keys,
            root_cert=crypto.issue_certificate_chain(root_keys, root_spec)[0],
            peers=[],
            agent_address=agent_address,
            cert_lifetime=cert_lifetime,
            _seed_fn=seed_fn,
        )
        org._enroll_peers(peer_count, now)
        return org

    def _root_spec(self) -> crypto.CertSpec:
        return crypto.CertSpec(
            name=self.root_cert.subject_name,
            public_key=self.root_cert.subject_public_key,
            valid_from=self.root_cert.valid_from,
            valid_to=self.root_cert.valid_to,
        )

    def _enroll_peers(self, count: int, now: int) -> None:
        self.peers = []
        for i in range(count):
            label = f"peer:{self.network_id}:{self.org_id}:{i}:r{self._rotation}"
            keys = crypto.KeyPair.from_seed(self._seed_fn(label))
            leaf = crypto.CertSpec(
                name=f"{self.network_id}.{self.org_id}.peer{i}",
                public_key=keys.public_key,
                valid_from=now,
                valid_to=now + self.cert_lifetime,
            )
            chain = crypto.issue_certificate_chain(self.root_keys, self._root_spec(), leaf=leaf)
            self.peers.append(PeerIdentity(name=leaf.name, keys=keys, chain=chain))

    def rotate(self, now: int) -> None:
        """Re-enroll every peer with fresh keys and a fresh validity window;
        the root stays put, so the bundle digest changes but the trust root
        does not."""
        self._rotation += 1
        self._enroll_peers(len(self.peers), now)

    def bundle_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_BUNDLE,
            enc.encode_str(self.org_id),
            enc.encode_str(self.network_id),
            enc.encode_list(
                enc.encode_bytes(crypto.chain_to_bytes(p.chain)) for p in self.peers
            ),
        )

    def bundle_digest(self) -> bytes:
        return crypto.digest(self.bundle_bytes())


def parse_bundle(data: bytes) -> tuple[str, str, tuple[tuple[crypto.Certificate, ...], ...]]:
    reader = enc.Reader(data, expect_tag=enc.TAG_BUNDLE)
    org_id = reader.str_()
    network_id = reader.str_()
    chains = tuple(crypto.chain_from_bytes(reader.bytes_()) for _ in range(reader.count()))
    reader.done()
    return org_id, network_id, chains


# --- local ledger -------------------------------------------------------------


@dataclass(frozen=True)
class ForeignIdentityRecord:
    network_id: str
    org_id: str
    bundle: bytes  # canonical bundle payload
    bundle_digest: bytes
    status: str
    synced_at: int

    def content_bytes(self) -> bytes:
        # synced_at is timing metadata, not replicated content
        return (
            enc.encode_str(self.network_id)
            + enc.encode_str(self.org_id)
            + enc.encode_bytes(self.bundle)
            + enc.encode_bytes(self.bundle_digest)
            + enc.encode_str(self.status)
        )


def endorsement_bytes(
    foreign_network: str, foreign_org: str, bundle_digest: bytes, status: str, nonce: bytes
) -> bytes:
    return enc.record(
        enc.TAG_ENDORSEMENT,
        enc.encode_str(foreign_network),
        enc.encode_str(foreign_org),
        enc.encode_bytes(bundle_digest),
        enc.encode_str(status),
        enc.encode_bytes(nonce),
    )


@dataclass(frozen=True)
class BlockEntry:
    seq: int
    foreign_network: str
    foreign_org: str
    bundle: bytes
    status: str
    nonce: bytes
    endorsements: tuple[tuple[str, bytes], ...]
    outcome: str
    tick: int


@dataclass(frozen=True)
class LocalLedgerState:
    network_id: str
    interop_networks: tuple[str, ...]
    trust_entries: tuple[tuple[str, str, str], ...]  # (iin id, anchor did, network)
    admin_keys: dict[str, bytes]  # org id -> endorsement verification key
    foreign: dict[str, ForeignIdentityRecord] = field(default_factory=dict)
    block_log: tuple[BlockEntry, ...] = ()

    @staticmethod
    def record_key(network_id: str, org_id: str) -> str:
        return f"{network_id}/{org_id}"

    def get_record(self, network_id: str, org_id: str) -> Optional[ForeignIdentityRecord]:
        return self.foreign.get(self.record_key(network_id, org_id))

    def records_for(self, network_id: str) -> list[ForeignIdentityRecord]:
        return [
            self.foreign[k]
            for k in sorted(self.foreign)
            if self.foreign[k].network_id == network_id
        ]

    def state_hash(self) -> bytes:
        """Hash of replicated content: policy config plus foreign records
        (bundle, digest, status). Excludes block ordering and sync ticks so
        equivalent interleavings hash identically."""
        return crypto.digest(
            enc.record(
                enc.TAG_LEDGER_STATE,
                enc.encode_str(self.network_id),
                enc.encode_list(enc.encode_str(n) for n in self.interop_networks),
                enc.encode_list(
                    enc.encode_str(i) + enc.encode_str(a) + enc.encode_str(n)
                    for i, a, n in self.trust_entries
                ),
                enc.encode_list(
                    enc.encode_str(org) + enc.encode_bytes(self.admin_keys[org])
                    for org in sorted(self.admin_keys)
                ),
                enc.encode_list(
                    enc.encode_bytes(self.foreign[k].content_bytes())
                    for k in sorted(self.foreign)
                ),
            )
        )


def cmdac_update_foreign_identity(
    state: LocalLedgerState,
    foreign_network: str,
    foreign_org: str,
    bundle: bytes,
    status: str,
    nonce: bytes,
    endorsements: tuple[tuple[str, bytes], ...],
    now: int,
) -> tuple[LocalLedgerState, str]:
    """The configuration-management contract: commit a foreign identity record
    iff every local organization endorsed (network, org, bundle digest, status,
    nonce) with its registered admin key. Identical-content re-commits are
    no-op successes; different content replaces the record."""
    digest = crypto.digest(bundle)
    message = endorsement_bytes(foreign_network, foreign_org, digest, status, nonce)
    provided = dict(endorsements)
    outcome = None
    for org in sorted(state.admin_keys):
        sig = provided.get(org)
        if sig is None:
            outcome = f"MissingEndorsement:{org}"
            break
        if not crypto.verify(state.admin_keys[org], message, crypto.Signature(sig)):
            outcome = f"BadEndorsementSignature:{org}"
            break

    key = state.record_key(foreign_network, foreign_org)
    new_foreign = state.foreign
    if outcome is None:
        existing = state.foreign.get(key)
        if (
            existing is not None
            and existing.bundle == bundle
            and existing.status == status
        ):
            outcome = OUTCOME_NOOP
        else:
            outcome = OUTCOME_APPLIED
            new_foreign = {
                **state.foreign,
                key: ForeignIdentityRecord(
                    network_id=foreign_network,
                    org_id=foreign_org,
                    bundle=bundle,
                    bundle_digest=digest,
                    status=status,
                    synced_at=now,
                ),
            }

    entry = BlockEntry(
        seq=len(state.block_log),
        foreign_network=foreign_network,
        foreign_org=foreign_org,
        bundle=bundle,
        status=status,
        nonce=nonce,
        endorsements=tuple(sorted(endorsements)),
        outcome=outcome,
        tick=now,
    )
    return (
        replace(state, foreign=new_foreign, block_log=state.block_log + (entry,)),
        outcome,
    )


def replay_block_log(genesis: LocalLedgerState, log: tuple[BlockEntry, ...]) -> LocalLedgerState:
    """Refold recorded contract transactions; recorded outcomes must match."""
    state = genesis
    for entry in log:
        state, outcome = cmdac_update_foreign_identity(
            state,
            entry.foreign_network,
            entry.foreign_org,
            entry.bundle,
            entry.status,
            entry.nonce,
            entry.endorsements,
            entry.tick,
        )
        if outcome != entry.outcome:
            raise NetworkError(f"replay divergence at block {entry.seq}: {outcome}")
    return state


def dump_block_log(log: tuple[BlockEntry, ...]) -> str:
    """One JSON record per line; load_block_log + replay_block_log reproduce
    the ledger state."""
    lines = []
    for e in log:
        lines.append(
            json.dumps(
                {
                    "seq": e.seq,
                    "foreign_network": e.foreign_network,
                    "foreign_org": e.foreign_org,
                    "bundle": e.bundle.hex(),
                    "status": e.status,
                    "nonce": e.nonce.hex(),
                    "endorsements": [[org, sig.hex()] for org, sig in e.endorsements],
                    "outcome": e.outcome,
                    "tick": e.tick,
                }
            )
        )
    return "".join(line + "\n" for line in lines)


def load_block_log(text: str) -> tuple[BlockEntry, ...]:
    entries = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        entries.append(
            BlockEntry(
                seq=obj["seq"],
                foreign_network=obj["foreign_network"],
                foreign_org=obj["foreign_org"],
                bundle=bytes.fromhex(obj["bundle"]),
                status=obj["status"],
                nonce=bytes.fromhex(obj["nonce"]),
                endorsements=tuple(
                    (org, bytes.fromhex(sig)) for org, sig in obj["endorsements"]
                ),
                outcome=obj["outcome"],
                tick=obj["tick"],
            )
        )
    return tuple(entries)


class LedgerNode(Actor):
    """Single sequencer for one network's shared ledger: applies contract
    submissions in arrival order and answers policy/record queries."""

    def __init__(self, address: str, genesis: LocalLedgerState):
        super().__init__(address)
        self.state = genesis
        self.genesis = genesis

    def on_message(self, sender: str, msg: Message) -> None:
        if msg.kind == "cmdac.submit":
            body = msg.body
            endorsements = tuple(
                (org, bytes.fromhex(sig)) for org, sig in body["endorsements"]
            )
            self.state, outcome = cmdac_update_foreign_identity(
                self.state,
                body["foreign_network"],
                body["foreign_org"],
                bytes.fromhex(body["bundle"]),
                body["status"],
                bytes.fromhex(body["nonce"]),
                endorsements,
                self.bus.now,
            )
            self.trace(
                "ledger.commit",
                network=self.state.network_id,
                foreign_network=body["foreign_network"],
                foreign_org=body["foreign_org"],
                status=body["status"],
                outcome=outcome,
                endorsers=",".join(sorted(org for org, _ in endorsements)),
                payload_digest=crypto.digest(bytes.fromhex(body["bundle"])).hex(),
            )
            self.reply(
                sender, msg, "cmdac.reply",
                {"outcome": outcome, "seq": len(self.state.block_log) - 1},
            )
            return
        if msg.kind == "ledger.query":
            self.reply(sender, msg, "ledger.reply", self._query(msg.body))
            return

    def _query(self, body: dict) -> dict:
        what = body.get("what", "")
        if what == "interop":
            return {"networks": list(self.state.interop_networks)}
        if what == "trust":
            return {"entries": [list(e) for e in self.state.trust_entries]}
        if what == "record":
            record = self.state.get_record(body["network"], body["org"])
            if record is None:
                return {"found": False}
            return {"found": True, "record": _record_to_body(record)}
        if what == "records":
            return {
                "records": [
                    _record_to_body(r) for r in self.state.records_for(body["network"])
                ]
            }
        return {"error": f"unknown query {what!r}"}


def _record_to_body(record: ForeignIdentityRecord) -> dict:
    return {
        "network_id": record.network_id,
        "org_id": record.org_id,
        "bundle": record.bundle.hex(),
        "bundle_digest": record.bundle_digest.hex(),
        "status": record.status,
        "synced_at": record.synced_at,
    }


def record_from_body(body: dict) -> ForeignIdentityRecord:
    return ForeignIdentityRecord(
        network_id=body["network_id"],
        org_id=body["org_id"],
        bundle=bytes.fromhex(body["bundle"]),
        bundle_digest=bytes.fromhex(body["bundle_digest"]),
        status=body["status"],
        synced_at=body["synced_at"],
    )


# --- data plane hook ----------------------------------------------------------


@dataclass(frozen=True)
class VerificationPolicy:
    source_network_id: str
    required_orgs: tuple[str, ...]

    def __post_init__(self):
        if not self.required_orgs:
            raise NetworkError("verification policy needs at least one signer org")


@dataclass(frozen=True)
class DataProof:
    data: bytes
    signatures: tuple[tuple[str, str, crypto.Signature], ...]  # (org, peer name, sig)


def proof_signing_bytes(data: bytes) -> bytes:
    return enc.record(enc.TAG_DATA_PROOF, enc.encode_bytes(crypto.digest(data)))


def generate_data_proof(
    organizations: dict[str, Organization], data: bytes, policy: VerificationPolicy
) -> DataProof:
    """One peer signature per required org over the data digest."""
    signatures = []
    message = proof_signing_bytes(data)
    for org_id in sorted(policy.required_orgs):
        org = organizations.get(org_id)
        if org is None or not org.peers:
            raise UnknownOrg(org_id)
        peer = org.peers[0]
        signatures.append((org_id, peer.name, peer.keys.sign(message)))
    return DataProof(data=data, signatures=tuple(signatures))


def verify_data_proof(
    ledger_state: LocalLedgerState,
    source_network_id: str,
    proof: DataProof,
    policy: VerificationPolicy,
    now: int,
) -> bool:
    """True iff every required org has an ACTIVE foreign identity record, the
    signing peer's certificate chains (validly, at `now`) to the recorded
    bundle, and its signature over the data digest verifies. Failures raise
    NoIdentityRecord / RevokedMember / ExpiredCertificate / BadProofSignature,
    which callers may convert into a proof-failure resync trigger."""
    message = proof_signing_bytes(proof.data)
    by_org = {org: (peer, sig) for org, peer, sig in proof.signatures}
    for org_id in sorted(policy.required_orgs):
        record = ledger_state.get_record(source_network_id, org_id)
        if record is None:
            raise NoIdentityRecord(org_id)
        if record.status != STATUS_ACTIVE:
            raise RevokedMember(org_id)
        entry = by_org.get(org_id)
        if entry is None:
            raise BadProofSignature(org_id, "no signature supplied")
        peer_name, sig = entry
        _, _, chains = parse_bundle(record.bundle)
        chain = next((c for c in chains if c[-1].subject_name == peer_name), None)
        if chain is None:
            raise BadProofSignature(org_id, f"peer {peer_name} not in recorded bundle")
        try:
            crypto.verify_certificate_chain(chain, chain[0], now)
        except crypto.Expired as e:
            raise ExpiredCertificate(org_id, str(e))
        except crypto.ChainVerificationError as e:
            raise BadProofSignature(org_id, str(e))
        if not crypto.verify(chain[-1].subject_public_key, message, sig):
            raise BadProofSignature(org_id)
    return True
