"""Per-organization identity agent.

The agent is the org's protocol engine for the identity plane:

  step A  configure identity: register the org's DID as a verinym through an
          identity validator, then obtain a membership credential (plus
          revocation witness) from each home network's membership validator;
  step B  validate a foreign network's membership: fetch the memberlist from
          the trusted validator, resolve each member's DID document, challenge
          the member at its service endpoint, and verify the returned
          membership presentation against registry artifacts;
  step C  fetch the member's network-issued certificate bundle as a
          self-signed presentation and check its internal consistency;
  step D  commit the bundle to the local ledger: collect a countersignature
          from every other local org (each validates independently) and submit
          the contract transaction; on a digest mismatch the agent refetches
          and retries up to its retry budget.

A resync trigger (periodic, or proof-failure from the data plane) re-runs
B-D for every network on the interoperation list, updating rotated bundles
and flipping records to REVOKED for members that no longer validate.

One agent serves all of its organization's network memberships: the DID
document has a single service endpoint, and an org that belongs to several
networks holds one credential per network in the same wallet, presenting only
the requested one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Generator, Optional

from . import credentials as creds
from . import crypto
from . import network as net
from . import registry
from .actors import Actor, Gather, Message, Request, Sleep
from .anchors import cred_def_id_for, schema_id_for

PHASE_B = "B"
PHASE_C = "C"
PHASE_D = "D"
PHASE_DONE = "DONE"
PHASE_FAILED = "FAILED"

RESULT_SIGNED = "signed"
RESULT_DIGEST_MISMATCH = "digest_mismatch"
RESULT_VALIDATION_FAILED = "validation_failed"


class AgentError(Exception):
    pass


class PolicyViolation(AgentError):
    """Counterparty network absent from the interoperation list."""


class NoTrustedPMV(AgentError):
    pass


class NotListed(AgentError):
    """Target DID absent from the counterparty memberlist."""


class MemberUnreachable(AgentError):
    pass


class MalformedBundle(AgentError):
    pass


class StaleMemberlist(AgentError):
    pass


class MissingCountersignature(AgentError):
    pass


class CounterpartyValidationFailed(AgentError):
    pass


class RetriesExhausted(AgentError):
    pass


class LedgerUnreachable(AgentError):
    pass


class CommitRejected(AgentError):
    pass


@dataclass
class AgentConfig:
    org_id: str
    address: str
    iin_id: str
    keys: crypto.KeyPair
    pool: registry.PoolInfo
    oiv_address: str
    home_networks: tuple[str, ...]
    home_pmv: dict[str, str]  # home network -> issuing anchor address
    ledgers: dict[str, str]  # home network -> ledger address
    peer_agents: dict[str, dict[str, str]]  # home network -> org id -> agent address
    organizations: dict[str, net.Organization] = field(default_factory=dict)
    retry_limit: int = 3
    retry_backoff: int = 1
    resync_interval: int = 0  # ticks between periodic resyncs; 0 = scripted only


@dataclass
class SyncSession:
    session_id: int
    home_network: str
    counterparty_network: str
    target_did: str
    phase: str = PHASE_B
    attempt: int = 1
    claim: Optional[creds.VerifiedClaim] = None
    bundle_digest: Optional[bytes] = None
    error: Optional[str] = None
    history: list[str] = field(default_factory=list)

    def advance(self, phase: str) -> None:
        # monotone within an attempt; only FAILED may restart at B
        self.phase = phase
        self.history.append(phase)


@dataclass
class CachedIdentity:
    org_id: str
    network_id: str
    did: str
    bundle: bytes
    digest: bytes
    fetched_at: int


class IinAgent(Actor):
    def __init__(self, config: AgentConfig):
        super().__init__(config.address)
        self.config = config
        self.keys = config.keys
        self.org_id = config.org_id
        self.pool = config.pool
        self.did = registry.make_did(config.iin_id, config.keys.public_key)
        self.doc: Optional[registry.DidDocument] = None
        self.wallet: dict[str, tuple[creds.MembershipCredential, crypto.AccumulatorWitness]] = {}
        self.cache: dict[tuple[str, str], CachedIdentity] = {}
        self.did_by_org: dict[tuple[str, str], str] = {}
        self.sync_sessions: list[SyncSession] = []
        self._session_counter = 0
        self._interop_cache: dict[str, tuple[str, ...]] = {}
        self._trust_cache: dict[str, tuple[tuple[str, str, str], ...]] = {}
        self._roster_versions: dict[str, int] = {}

    # --- inbound messages ---------------------------------------------------

    def on_message(self, sender: str, msg: Message) -> None:
        if msg.kind == "agent.membership_vp.request":
            self.start_session("serve-membership-vp", self._serve_membership_vp(sender, msg))
            return
        if msg.kind == "agent.identity_vp.request":
            self._serve_identity_vp(sender, msg)
            return
        if msg.kind == "agent.countersign.request":
            self.start_session("countersign", self._handle_countersign(sender, msg))
            return
        if msg.kind == "agent.resync":
            home = msg.body["network_id"]
            trigger = msg.body.get("trigger", "periodic")
            self.start_session(f"resync:{trigger}", self.resync(home, trigger))
            return

    # --- step A: configure identity -----------------------------------------

    def step_a(self) -> Generator:
        """Register the verinym and obtain a membership VC per home network.
        Safe to re-run: re-registration surfaces as a registry duplicate, and
        re-issuance returns the existing credential with a fresh witness."""
        doc = registry.new_did_document(self.config.iin_id, self.keys, self.address)
        reply = yield Request(
            self.config.oiv_address,
            "anchor.verinym.request",
            {"org_name": self.org_id, "doc": doc.to_bytes().hex()},
            timeout=400,
        )
        if reply is None:
            raise AgentError("identity validator unreachable")
        if not reply.body.get("ok"):
            raise AgentError(reply.body.get("error", "verinym registration failed"))
        self.doc = registry.DidDocument.from_bytes(bytes.fromhex(reply.body["doc"]))
        for network_id in self.config.home_networks:
            reply = yield Request(
                self.config.home_pmv[network_id],
                "anchor.vc.request",
                {"holder_did": self.did, "network_id": network_id},
                timeout=600,
            )
            if reply is None:
                raise AgentError(f"membership validator for {network_id} unreachable")
            if not reply.body.get("ok"):
                raise AgentError(reply.body.get("error", "issuance failed"))
            vc = creds.MembershipCredential.from_bytes(bytes.fromhex(reply.body["vc"]))
            witness = crypto.AccumulatorWitness.from_bytes(bytes.fromhex(reply.body["witness"]))
            self.wallet[network_id] = (vc, witness)
        self.trace("agent.configured", did=self.did, networks=",".join(self.config.home_networks))
        return self.did

    # --- serving counterparties ----------------------------------------------

    def _serve_membership_vp(self, sender: str, msg: Message) -> Generator:
        network_id = msg.body["network_id"]
        nonce = bytes.fromhex(msg.body["nonce"])
        entry = self.wallet.get(network_id)
        if entry is None:
            self.reply(
                sender, msg, "agent.membership_vp.reply",
                {"ok": False, "error": "NoCredential"},
            )
            return
        vc, witness = entry
        witness = yield from self._freshen_witness(network_id, vc, witness)
        vp = creds.build_membership_vp(self.did, self.keys, vc, witness, nonce)
        self.reply(
            sender, msg, "agent.membership_vp.reply",
            {"ok": True, "vp": vp.to_bytes().hex()},
        )

    def _freshen_witness(
        self,
        network_id: str,
        vc: creds.MembershipCredential,
        witness: crypto.AccumulatorWitness,
    ) -> Generator:
        """Witnesses bind to the registry epoch; re-request after any bump. A
        revoked holder's refresh is refused, leaving a stale witness that the
        verifier will reject."""
        try:
            current = yield from registry.read_revocation_state(self.pool, vc.issuer_did)
        except (registry.NotFound, registry.InconsistentReplicas):
            return witness
        if current.epoch == witness.epoch:
            return witness
        reply = yield Request(
            self.config.home_pmv[network_id],
            "anchor.witness.request",
            {"credential_id": vc.credential_id.hex()},
            timeout=120,
        )
        if reply is not None and reply.body.get("ok"):
            witness = crypto.AccumulatorWitness.from_bytes(bytes.fromhex(reply.body["witness"]))
            self.wallet[network_id] = (vc, witness)
        return witness

    def _serve_identity_vp(self, sender: str, msg: Message) -> None:
        network_id = msg.body["network_id"]
        organization = self.config.organizations.get(network_id)
        if organization is None:
            self.reply(
                sender, msg, "agent.identity_vp.reply",
                {"ok": False, "error": "NotAMemberHere"},
            )
            return
        vp = creds.build_self_signed_vp(
            self.did, self.keys, organization.bundle_bytes(), bytes.fromhex(msg.body["nonce"])
        )
        self.reply(
            sender, msg, "agent.identity_vp.reply", {"ok": True, "vp": vp.to_bytes().hex()}
        )

    # --- local ledger views ---------------------------------------------------

    def _ledger_query(self, home_network: str, body: dict) -> Generator:
        reply = yield Request(
            self.config.ledgers[home_network], "ledger.query", body, timeout=120
        )
        if reply is None:
            raise LedgerUnreachable(home_network)
        return reply.body

    def _interop(self, home_network: str) -> Generator:
        cached = self._interop_cache.get(home_network)
        if cached is None:
            body = yield from self._ledger_query(home_network, {"what": "interop"})
            cached = tuple(body["networks"])
            self._interop_cache[home_network] = cached
        return cached

    def _trust_entries(self, home_network: str) -> Generator:
        cached = self._trust_cache.get(home_network)
        if cached is None:
            body = yield from self._ledger_query(home_network, {"what": "trust"})
            cached = tuple((i, a, n) for i, a, n in body["entries"])
            self._trust_cache[home_network] = cached
        return cached

    def _ledger_records(self, home_network: str, foreign_network: str) -> Generator:
        body = yield from self._ledger_query(
            home_network, {"what": "records", "network": foreign_network}
        )
        return [net.record_from_body(b) for b in body["records"]]

    # --- step B: validate membership ------------------------------------------

    def _fetch_memberlist(self, home_network: str, foreign_network: str) -> Generator:
        entries = yield from self._trust_entries(home_network)
        anchor_did = next((a for _, a, n in entries if n == foreign_network), None)
        if anchor_did is None:
            raise NoTrustedPMV(f"no trusted membership validator for {foreign_network}")
        anchor_doc, anchor_verinym = yield from registry.resolve_did(self.pool, anchor_did)
        nonce = self.nonce()
        reply = yield Request(
            anchor_doc.service_endpoint,
            "anchor.memberlist.request",
            {"network_id": foreign_network, "nonce": nonce.hex()},
            timeout=150,
        )
        if reply is None or not reply.body.get("ok"):
            raise NoTrustedPMV(
                f"memberlist for {foreign_network} unavailable"
                + (f": {reply.body.get('error')}" if reply else "")
            )
        vp = creds.VerifiablePresentation.from_bytes(bytes.fromhex(reply.body["vp"]))
        payload = creds.verify_self_signed_vp(vp, nonce, anchor_doc, anchor_verinym)
        memberlist = creds.MemberlistCredential.from_bytes(payload)
        if memberlist.issuer_did != anchor_did or memberlist.network_id != foreign_network:
            raise NoTrustedPMV("memberlist not issued by the trusted validator")
        cred_def = yield from registry.read_cred_def(
            self.pool, cred_def_id_for(anchor_did, creds.MEMBERLIST_SCHEMA_NAME)
        )
        if not crypto.verify(
            cred_def.authentication_public_key,
            memberlist.signing_bytes(),
            memberlist.issuer_signature,
        ):
            raise NoTrustedPMV("memberlist signature invalid")
        previous = self._roster_versions.get(foreign_network)
        if previous is not None and memberlist.roster_version < previous:
            raise StaleMemberlist(
                f"{foreign_network} roster went backwards: {memberlist.roster_version} < {previous}"
            )
        self._roster_versions[foreign_network] = memberlist.roster_version
        self.trace(
            "agent.memberlist",
            network=foreign_network,
            version=memberlist.roster_version,
            members=len(memberlist.member_dids),
        )
        return memberlist

    def _verification_artifacts(
        self,
        vp: creds.VerifiablePresentation,
        presenter_doc: registry.DidDocument,
        presenter_verinym: bool,
    ) -> Generator:
        cred_def_id = issuer_did = None
        try:
            vc, _ = creds.parse_membership_body(vp.body)
            cred_def_id, issuer_did = vc.cred_def_id, vc.issuer_did
        except Exception:
            pass  # verification will fail at the schema check
        schema = cred_def = revocation = None
        try:
            schema = yield from registry.read_schema(
                self.pool, schema_id_for(creds.MEMBERSHIP_SCHEMA_NAME)
            )
        except registry.NotFound:
            pass
        if cred_def_id is not None:
            try:
                cred_def = yield from registry.read_cred_def(self.pool, cred_def_id)
            except registry.NotFound:
                pass
            try:
                revocation = yield from registry.read_revocation_state(self.pool, issuer_did)
            except registry.NotFound:
                pass
        return creds.VerificationArtifacts(
            presenter_doc=presenter_doc,
            presenter_verinym=presenter_verinym,
            schema=schema,
            cred_def=cred_def,
            revocation_state=revocation,
        )

    def _challenge_and_verify(
        self, home_network: str, foreign_network: str, target_did: str
    ) -> Generator:
        """Resolve, challenge, and verify one foreign member's membership
        presentation. Returns (claim, doc, verinym)."""
        doc, verinym = yield from registry.resolve_did(self.pool, target_did)
        nonce = self.nonce()
        reply = yield Request(
            doc.service_endpoint,
            "agent.membership_vp.request",
            {"network_id": foreign_network, "nonce": nonce.hex()},
            timeout=400,
        )
        if reply is None or not reply.body.get("ok"):
            raise MemberUnreachable(target_did)
        vp = creds.VerifiablePresentation.from_bytes(bytes.fromhex(reply.body["vp"]))
        artifacts = yield from self._verification_artifacts(vp, doc, verinym)
        entries = yield from self._trust_entries(home_network)
        trusted = frozenset((anchor, network) for _, anchor, network in entries)
        claim = creds.verify_membership_vp(vp, foreign_network, nonce, trusted, artifacts)
        self.trace(
            "agent.member_validated", network=foreign_network, holder=claim.holder_did
        )
        return claim, doc, verinym

    def _validate_member(
        self,
        home_network: str,
        foreign_network: str,
        target_did: str,
        memberlist: creds.MemberlistCredential,
    ) -> Generator:
        if target_did not in memberlist.member_dids:
            raise NotListed(target_did)
        result = yield from self._challenge_and_verify(
            home_network, foreign_network, target_did
        )
        return result

    # --- step C: fetch network identity ----------------------------------------

    def _fetch_identity(
        self,
        foreign_network: str,
        target_did: str,
        doc: registry.DidDocument,
        verinym: bool,
    ) -> Generator:
        nonce = self.nonce()
        reply = yield Request(
            doc.service_endpoint,
            "agent.identity_vp.request",
            {"network_id": foreign_network, "nonce": nonce.hex()},
            timeout=150,
        )
        if reply is None or not reply.body.get("ok"):
            raise MemberUnreachable(target_did)
        vp = creds.VerifiablePresentation.from_bytes(bytes.fromhex(reply.body["vp"]))
        payload = creds.verify_self_signed_vp(vp, nonce, doc, verinym)
        try:
            org_id, bundle_network, chains = net.parse_bundle(payload)
        except Exception as e:
            raise MalformedBundle(str(e))
        if bundle_network != foreign_network or not chains:
            raise MalformedBundle(f"bundle for {bundle_network!r} with {len(chains)} chains")
        for chain in chains:
            crypto.verify_certificate_chain(chain, chain[0], self.bus.now)
        identity = CachedIdentity(
            org_id=org_id,
            network_id=foreign_network,
            did=target_did,
            bundle=payload,
            digest=crypto.digest(payload),
            fetched_at=self.bus.now,
        )
        self.cache[(foreign_network, target_did)] = identity
        self.did_by_org[(foreign_network, org_id)] = target_did
        self.trace(
            "agent.identity_fetched",
            network=foreign_network,
            org=org_id,
            digest=identity.digest.hex(),
        )
        return identity

    # --- step D: consensus commit ----------------------------------------------

    def _commit_identity(
        self,
        home_network: str,
        foreign_network: str,
        foreign_org: str,
        foreign_did: str,
        bundle: bytes,
        digest: bytes,
        status: str,
    ) -> Generator:
        nonce = self.nonce()
        message = net.endorsement_bytes(foreign_network, foreign_org, digest, status, nonce)
        own_signature = self.keys.sign(message)
        peers = sorted(
            (org, addr)
            for org, addr in self.config.peer_agents[home_network].items()
            if org != self.org_id
        )
        request_body = {
            "home_network": home_network,
            "foreign_network": foreign_network,
            "foreign_org": foreign_org,
            "foreign_did": foreign_did,
            "bundle": bundle.hex(),
            "digest": digest.hex(),
            "status": status,
            "nonce": nonce.hex(),
        }
        replies = yield Gather(
            tuple((addr, "agent.countersign.request", request_body) for _, addr in peers),
            timeout=1500,
        )
        missing = [org for (org, _), r in zip(peers, replies) if r is None]
        if missing:
            raise MissingCountersignature(",".join(missing))
        if any(r.body.get("result") == RESULT_DIGEST_MISMATCH for r in replies):
            theirs = [
                r.body.get("own_digest", "")
                for r in replies
                if r.body.get("result") == RESULT_DIGEST_MISMATCH
            ]
            self.trace(
                "agent.sync.digest_mismatch",
                network=foreign_network,
                org=foreign_org,
                ours=digest.hex(),
                theirs=",".join(theirs),
            )
            return "DIGEST_MISMATCH"
        failed = [
            (org, r.body.get("reason", ""))
            for (org, _), r in zip(peers, replies)
            if r.body.get("result") == RESULT_VALIDATION_FAILED
        ]
        if failed:
            raise CounterpartyValidationFailed(
                ";".join(f"{org}:{reason}" for org, reason in failed)
            )
        endorsements = [[self.org_id, own_signature.bytes_.hex()]] + [
            [org, r.body["sig"]] for (org, _), r in zip(peers, replies)
        ]
        reply = yield Request(
            self.config.ledgers[home_network],
            "cmdac.submit",
            {
                "foreign_network": foreign_network,
                "foreign_org": foreign_org,
                "bundle": bundle.hex(),
                "status": status,
                "nonce": nonce.hex(),
                "endorsements": endorsements,
            },
            timeout=150,
        )
        if reply is None:
            raise LedgerUnreachable(home_network)
        outcome = reply.body["outcome"]
        if outcome not in (net.OUTCOME_APPLIED, net.OUTCOME_NOOP):
            raise CommitRejected(outcome)
        self.trace(
            "agent.committed",
            network=foreign_network,
            org=foreign_org,
            status=status,
            outcome=outcome,
        )
        return outcome

    def _handle_countersign(self, sender: str, msg: Message) -> Generator:
        body = msg.body
        home_network = body["home_network"]
        foreign_network = body["foreign_network"]
        foreign_org = body["foreign_org"]
        foreign_did = body["foreign_did"]
        digest = bytes.fromhex(body["digest"])
        status = body["status"]
        nonce = bytes.fromhex(body["nonce"])

        def respond(result: str, **extra) -> None:
            self.reply(
                sender, msg, "agent.countersign.reply",
                {"result": result, "org": self.org_id, **extra},
            )

        if home_network not in self.config.home_networks:
            respond(RESULT_VALIDATION_FAILED, reason="NotLocal")
            return
        interop = yield from self._interop(home_network)
        if foreign_network not in interop:
            respond(RESULT_VALIDATION_FAILED, reason="PolicyViolation")
            return

        if status == net.STATUS_ACTIVE:
            identity = self.cache.get((foreign_network, foreign_did))
            if identity is None:
                try:
                    memberlist = yield from self._fetch_memberlist(
                        home_network, foreign_network
                    )
                    _, doc, verinym = yield from self._validate_member(
                        home_network, foreign_network, foreign_did, memberlist
                    )
                    identity = yield from self._fetch_identity(
                        foreign_network, foreign_did, doc, verinym
                    )
                except (
                    AgentError,
                    creds.CredentialError,
                    crypto.CryptoError,
                    registry.RegistryError,
                ) as e:
                    self.trace(
                        "agent.countersign_refused",
                        network=foreign_network,
                        org=foreign_org,
                        reason=type(e).__name__,
                    )
                    respond(RESULT_VALIDATION_FAILED, reason=type(e).__name__)
                    return
            if identity.digest != digest:
                # stale copy on one side; drop ours so the retry refetches
                self.cache.pop((foreign_network, foreign_did), None)
                self.trace(
                    "agent.countersign_mismatch",
                    network=foreign_network,
                    org=foreign_org,
                    ours=identity.digest.hex(),
                    theirs=digest.hex(),
                )
                respond(RESULT_DIGEST_MISMATCH, own_digest=identity.digest.hex())
                return
            signature = self.keys.sign(
                net.endorsement_bytes(foreign_network, foreign_org, digest, status, nonce)
            )
            self.trace(
                "agent.countersigned", network=foreign_network, org=foreign_org, status=status
            )
            respond(RESULT_SIGNED, sig=signature.bytes_.hex())
            return

        # REVOKED: endorse only when the member no longer validates here either
        still_valid = False
        try:
            memberlist = yield from self._fetch_memberlist(home_network, foreign_network)
            if foreign_did and foreign_did in memberlist.member_dids:
                yield from self._validate_member(
                    home_network, foreign_network, foreign_did, memberlist
                )
                still_valid = True
        except (
            AgentError,
            creds.CredentialError,
            crypto.CryptoError,
            registry.RegistryError,
        ):
            still_valid = False
        if still_valid:
            respond(RESULT_VALIDATION_FAILED, reason="MemberStillValid")
            return
        records = yield from self._ledger_records(home_network, foreign_network)
        record = next((r for r in records if r.org_id == foreign_org), None)
        if record is None or record.bundle_digest != digest:
            respond(
                RESULT_DIGEST_MISMATCH,
                own_digest=record.bundle_digest.hex() if record else "",
            )
            return
        signature = self.keys.sign(
            net.endorsement_bytes(foreign_network, foreign_org, digest, status, nonce)
        )
        self.trace(
            "agent.countersigned", network=foreign_network, org=foreign_org, status=status
        )
        respond(RESULT_SIGNED, sig=signature.bytes_.hex())

    # --- whole-target sessions ---------------------------------------------

    def _sync_target(
        self,
        home_network: str,
        foreign_network: str,
        target_did: str,
        memberlist: creds.MemberlistCredential,
    ) -> Generator:
        self._session_counter += 1
        session = SyncSession(
            session_id=self._session_counter,
            home_network=home_network,
            counterparty_network=foreign_network,
            target_did=target_did,
        )
        self.sync_sessions.append(session)
        current_memberlist = memberlist
        while True:
            try:
                session.advance(PHASE_B)
                claim, doc, verinym = yield from self._validate_member(
                    home_network, foreign_network, target_did, current_memberlist
                )
                session.claim = claim
                session.advance(PHASE_C)
                identity = yield from self._fetch_identity(
                    foreign_network, target_did, doc, verinym
                )
                session.bundle_digest = identity.digest
                session.advance(PHASE_D)
                outcome = yield from self._commit_identity(
                    home_network,
                    foreign_network,
                    identity.org_id,
                    target_did,
                    identity.bundle,
                    identity.digest,
                    net.STATUS_ACTIVE,
                )
            except creds.MembershipVerificationError as e:
                session.advance(PHASE_FAILED)
                session.error = str(e)
                self.trace(
                    "agent.sync_failed",
                    network=foreign_network,
                    target=target_did,
                    error="MembershipVerificationError",
                    check=e.check,
                )
                return {"status": PHASE_FAILED, "error": "MembershipVerificationError",
                        "check": e.check}
            except (
                AgentError,
                creds.CredentialError,
                crypto.CryptoError,
                registry.RegistryError,
            ) as e:
                session.advance(PHASE_FAILED)
                session.error = str(e)
                self.trace(
                    "agent.sync_failed",
                    network=foreign_network,
                    target=target_did,
                    error=type(e).__name__,
                )
                return {"status": PHASE_FAILED, "error": type(e).__name__}

            if outcome != "DIGEST_MISMATCH":
                session.advance(PHASE_DONE)
                self.trace(
                    "agent.sync_done",
                    network=foreign_network,
                    org=identity.org_id,
                    attempts=session.attempt,
                    outcome=outcome,
                )
                return {
                    "status": PHASE_DONE,
                    "org_id": identity.org_id,
                    "outcome": outcome,
                    "attempts": session.attempt,
                }

            session.advance(PHASE_FAILED)
            session.error = "DigestMismatch"
            if session.attempt >= self.config.retry_limit:
                self.trace(
                    "agent.sync_failed",
                    network=foreign_network,
                    target=target_did,
                    error="RetriesExhausted",
                )
                return {"status": PHASE_FAILED, "error": "RetriesExhausted"}
            session.attempt += 1
            self.cache.pop((foreign_network, target_did), None)
            yield Sleep(self.config.retry_backoff)
            current_memberlist = yield from self._fetch_memberlist(
                home_network, foreign_network
            )

    def _revoke_record(
        self, home_network: str, foreign_network: str, record: net.ForeignIdentityRecord
    ) -> Generator:
        target_did = self.did_by_org.get((foreign_network, record.org_id), "")
        try:
            outcome = yield from self._commit_identity(
                home_network,
                foreign_network,
                record.org_id,
                target_did,
                record.bundle,
                record.bundle_digest,
                net.STATUS_REVOKED,
            )
        except (AgentError, creds.CredentialError, registry.RegistryError) as e:
            self.trace(
                "agent.revoke_failed",
                network=foreign_network,
                org=record.org_id,
                error=type(e).__name__,
            )
            return {"status": PHASE_FAILED, "error": type(e).__name__}
        if outcome == "DIGEST_MISMATCH":
            return {"status": PHASE_FAILED, "error": "DigestMismatch"}
        self.trace("agent.record_revoked", network=foreign_network, org=record.org_id)
        return {"status": PHASE_DONE, "org_id": record.org_id, "outcome": outcome}

    def sync_network(
        self,
        home_network: str,
        foreign_network: str,
        targets: Optional[tuple[str, ...]] = None,
    ) -> Generator:
        """Steps B-D against every listed member of the foreign network (or an
        explicit target subset); a full pass also flips records to REVOKED for
        orgs that no longer validate."""
        interop = yield from self._interop(home_network)
        if foreign_network not in interop:
            self.trace("agent.policy_violation", network=foreign_network)
            raise PolicyViolation(f"{foreign_network} not on interoperation list")
        memberlist = yield from self._fetch_memberlist(home_network, foreign_network)
        dids = tuple(targets) if targets is not None else memberlist.member_dids
        results: dict[str, dict] = {}
        for target_did in dids:
            results[target_did] = yield from self._sync_target(
                home_network, foreign_network, target_did, memberlist
            )
        if targets is None:
            synced_orgs = {
                r["org_id"] for r in results.values() if r["status"] == PHASE_DONE
            }
            records = yield from self._ledger_records(home_network, foreign_network)
            for record in records:
                if record.status == net.STATUS_ACTIVE and record.org_id not in synced_orgs:
                    results[f"revoke:{record.org_id}"] = yield from self._revoke_record(
                        home_network, foreign_network, record
                    )
        return results

    def periodic_resync(self, home_network: str, cycles: int) -> Generator:
        """Run `cycles` periodic resyncs, one every resync_interval ticks.
        Bounded so that a run still reaches quiescence; open-ended periodic
        operation is modeled by scheduled scenario triggers."""
        if self.config.resync_interval <= 0:
            raise AgentError("resync_interval not configured")
        results = []
        for _ in range(cycles):
            yield Sleep(self.config.resync_interval)
            results.append((yield from self.resync(home_network, "periodic")))
        return results

    def resync(self, home_network: str, trigger: str) -> Generator:
        """Re-run B-D for every foreign network on the interoperation list.
        Triggered periodically or by a data-plane proof failure."""
        self.trace("agent.resync", network=home_network, trigger=trigger)
        self.cache.clear()
        interop = yield from self._interop(home_network)
        results = {}
        for foreign_network in interop:
            results[foreign_network] = yield from self.sync_network(
                home_network, foreign_network
            )
        return results

    def prefetch(
        self, home_network: str, foreign_network: str, target_did: str
    ) -> Generator:
        """Run steps B and C for one member without committing, populating the
        countersigner cache."""
        memberlist = yield from self._fetch_memberlist(home_network, foreign_network)
        _, doc, verinym = yield from self._validate_member(
            home_network, foreign_network, target_did, memberlist
        )
        identity = yield from self._fetch_identity(foreign_network, target_did, doc, verinym)
        return identity.digest.hex()

    def validate_org(
        self, home_network: str, foreign_network: str, target_did: str
    ) -> Generator:
        """Directly challenge one foreign org and verify its membership
        presentation (no memberlist gate); used to probe revoked members."""
        try:
            claim, _, _ = yield from self._challenge_and_verify(
                home_network, foreign_network, target_did
            )
            return {"status": "ok", "holder": claim.holder_did, "network": claim.network_id}
        except creds.MembershipVerificationError as e:
            return {
                "status": "failed",
                "error": "MembershipVerificationError",
                "check": e.check,
            }
        except (
            AgentError,
            creds.CredentialError,
            crypto.CryptoError,
            registry.RegistryError,
        ) as e:
            return {"status": "failed", "error": type(e).__name__, "check": 0}
