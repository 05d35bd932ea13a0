"""Deterministic simulated message bus.

Single-threaded discrete-event loop delivering authenticated, sealed envelopes
between registered endpoints. Latency, drops, and scripted faults (drop,
tamper, duplicate, delay) are sampled from a seeded RNG, so identical seed and
fault script reproduce an identical delivery order and an identical trace.

Envelopes are Ed25519-signed over (from, to, seq, kind, ciphertext); payloads
are sealed with a static-static X25519 agreement and ChaCha20Poly1305. Tampered
envelopes fail authentication at delivery and are discarded with a trace event;
the plaintext never appears in bus trace events, only its digest.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from . import crypto
from . import encoding as enc
from .trace import TraceLog


class TransportError(Exception):
    pass


class UnknownEndpoint(TransportError):
    pass


class TickCeilingExceeded(TransportError):
    """Livelock detector: the event queue outran the tick ceiling."""


@dataclass(frozen=True)
class BoxKeyPair:
    public_key: bytes
    secret_key: bytes

    @staticmethod
    def from_seed(seed: bytes) -> "BoxKeyPair":
        private = X25519PrivateKey.from_private_bytes(seed)
        from cryptography.hazmat.primitives.serialization import (
            Encoding,
            PublicFormat,
        )

        public = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return BoxKeyPair(public_key=public, secret_key=seed)


@dataclass(frozen=True)
class Envelope:
    from_: str
    to: str
    seq: int
    kind: str
    ciphertext: bytes
    signature: crypto.Signature

    def signing_bytes(self) -> bytes:
        return enc.record(
            enc.TAG_ENVELOPE,
            enc.encode_str(self.from_),
            enc.encode_str(self.to),
            enc.encode_u64(self.seq),
            enc.encode_str(self.kind),
            enc.encode_bytes(self.ciphertext),
        )


@dataclass
class FaultRule:
    """Match by sender/recipient/message kind; apply to the nth matching
    envelope (occurrence, 1-based), the first `times` matches, or all."""

    action: str  # drop | tamper | duplicate | delay
    from_: str | None = None
    to: str | None = None
    kind: str | None = None
    occurrence: int | None = None
    times: int | None = None
    delay: int = 1
    hits: int = 0

    def matches(self, env: Envelope) -> bool:
        if self.from_ is not None and env.from_ != self.from_:
            return False
        if self.to is not None and env.to != self.to:
            return False
        if self.kind is not None and env.kind != self.kind:
            return False
        self.hits += 1
        if self.occurrence is not None:
            return self.hits == self.occurrence
        if self.times is not None:
            return self.hits <= self.times
        return True

    def label(self) -> str:
        return f"{self.action}:{self.from_ or '*'}>{self.to or '*'}:{self.kind or '*'}"


@dataclass
class BusConfig:
    seed: int = 0
    latency_min: int = 1
    latency_max: int = 3
    drop_rate: float = 0.0
    rules: list[FaultRule] = field(default_factory=list)


_DELIVER = 0
_TIMER = 1


class SimBus:
    """Event loop owning all actors. Actors never block; everything they do is
    a reaction to a delivered envelope or a timer."""

    def __init__(self, config: BusConfig, trace: TraceLog | None = None):
        self.config = config
        self.trace = trace if trace is not None else TraceLog()
        self.now = 0
        self.rng = random.Random(config.seed)
        self._queue: list[tuple[int, int, int, object]] = []
        self._order = 0
        self._seq = 0
        self._timer_ids = 0
        self._cancelled: set[int] = set()
        self._actors: dict[str, object] = {}
        self._sign_keys: dict[str, crypto.KeyPair] = {}
        self._box_keys: dict[str, BoxKeyPair] = {}
        self._pair_ciphers: dict[tuple[str, str], ChaCha20Poly1305] = {}

    # --- registration --------------------------------------------------

    def register(self, actor, sign_keys: crypto.KeyPair, box_keys: BoxKeyPair) -> None:
        address = actor.address
        if address in self._actors:
            raise TransportError(f"duplicate endpoint {address}")
        self._actors[address] = actor
        self._sign_keys[address] = sign_keys
        self._box_keys[address] = box_keys

    def has_endpoint(self, address: str) -> bool:
        return address in self._actors

    # --- sealing ---------------------------------------------------------

    def _cipher_for(self, sender: str, recipient: str) -> ChaCha20Poly1305:
        cached = self._pair_ciphers.get((sender, recipient))
        if cached is not None:
            return cached
        secret = X25519PrivateKey.from_private_bytes(
            self._box_keys[sender].secret_key
        ).exchange(X25519PublicKey.from_public_bytes(self._box_keys[recipient].public_key))
        key = HKDF(
            algorithm=hashes.SHA256(),
            length=32,
            salt=None,
            info=b"idplane-seal:" + sender.encode() + b">" + recipient.encode(),
        ).derive(secret)
        cipher = ChaCha20Poly1305(key)
        self._pair_ciphers[(sender, recipient)] = cipher
        return cipher

    @staticmethod
    def _nonce(seq: int) -> bytes:
        return seq.to_bytes(12, "big")

    def _seal(self, sender: str, recipient: str, seq: int, plaintext: bytes) -> bytes:
        return self._cipher_for(sender, recipient).encrypt(self._nonce(seq), plaintext, None)

    def _unseal(self, env: Envelope) -> bytes | None:
        try:
            return self._cipher_for(env.from_, env.to).decrypt(
                self._nonce(env.seq), env.ciphertext, None
            )
        except InvalidTag:
            return None

    # --- scheduling -------------------------------------------------------

    def _push(self, time: int, kind: int, item) -> None:
        heapq.heappush(self._queue, (time, self._order, kind, item))
        self._order += 1

    def send(self, sender: str, to: str, kind: str, plaintext: bytes) -> int:
        """Seal, sign, and schedule an envelope. Returns its sequence number."""
        if sender not in self._actors:
            raise UnknownEndpoint(sender)
        if to not in self._actors:
            raise UnknownEndpoint(to)
        seq = self._seq
        self._seq += 1
        ciphertext = self._seal(sender, to, seq, plaintext)
        signing = enc.record(
            enc.TAG_ENVELOPE,
            enc.encode_str(sender),
            enc.encode_str(to),
            enc.encode_u64(seq),
            enc.encode_str(kind),
            enc.encode_bytes(ciphertext),
        )
        env = Envelope(
            from_=sender,
            to=to,
            seq=seq,
            kind=kind,
            ciphertext=ciphertext,
            signature=self._sign_keys[sender].sign(signing),
        )
        digest_hex = crypto.digest(ciphertext).hex()
        self.trace.record(
            self.now, sender, "bus.send",
            **{"from": sender, "to": to, "seq": seq, "msg_kind": kind,
               "payload_digest": digest_hex},
        )

        deliveries = 1
        extra_delay = 0
        for rule in self.config.rules:
            if not rule.matches(env):
                continue
            if rule.action == "drop":
                self.trace.record(
                    self.now, "bus", "bus.drop",
                    **{"from": sender, "to": to, "seq": seq, "msg_kind": kind,
                       "rule": rule.label()},
                )
                return seq
            if rule.action == "tamper":
                flipped = bytearray(ciphertext)
                flipped[seq % len(flipped)] ^= 0x01
                env = Envelope(
                    from_=env.from_, to=env.to, seq=env.seq, kind=env.kind,
                    ciphertext=bytes(flipped), signature=env.signature,
                )
                self.trace.record(
                    self.now, "bus", "bus.tamper",
                    **{"from": sender, "to": to, "seq": seq, "msg_kind": kind,
                       "rule": rule.label()},
                )
            elif rule.action == "duplicate":
                deliveries = 2
            elif rule.action == "delay":
                extra_delay += rule.delay

        if self.config.drop_rate > 0 and self.rng.random() < self.config.drop_rate:
            self.trace.record(
                self.now, "bus", "bus.drop",
                **{"from": sender, "to": to, "seq": seq, "msg_kind": kind,
                   "rule": "drop_rate"},
            )
            return seq

        for _ in range(deliveries):
            latency = self.rng.randint(self.config.latency_min, self.config.latency_max)
            self._push(self.now + latency + extra_delay, _DELIVER, env)
        return seq

    def schedule_timer(self, address: str, delay: int, token) -> int:
        self._timer_ids += 1
        timer_id = self._timer_ids
        self._push(self.now + max(1, delay), _TIMER, (timer_id, address, token))
        return timer_id

    def cancel_timer(self, timer_id: int) -> None:
        self._cancelled.add(timer_id)

    # --- event loop -------------------------------------------------------

    def run_until_quiescent(self, tick_ceiling: int = 100_000) -> int:
        """Process the queue in (time, order) sequence until empty. Returns the
        final tick; raises TickCeilingExceeded if events outlive the ceiling."""
        while self._queue:
            time, _, kind, item = heapq.heappop(self._queue)
            if kind == _TIMER and item[0] in self._cancelled:
                self._cancelled.discard(item[0])
                continue
            if time > tick_ceiling:
                raise TickCeilingExceeded(f"event at tick {time} > ceiling {tick_ceiling}")
            self.now = max(self.now, time)
            if kind == _TIMER:
                _, address, token = item
                actor = self._actors.get(address)
                if actor is not None:
                    actor.on_timer(token)
                continue
            env: Envelope = item
            actor = self._actors.get(env.to)
            if actor is None:
                continue
            verify_key = self._sign_keys[env.from_].public_key
            plaintext = None
            if crypto.verify(verify_key, env.signing_bytes(), env.signature):
                plaintext = self._unseal(env)
            if plaintext is None:
                self.trace.record(
                    self.now, env.to, "bus.reject_tampered",
                    **{"from": env.from_, "to": env.to, "seq": env.seq,
                       "msg_kind": env.kind},
                )
                continue
            self.trace.record(
                self.now, env.to, "bus.deliver",
                **{"from": env.from_, "to": env.to, "seq": env.seq,
                   "msg_kind": env.kind,
                   "payload_digest": crypto.digest(env.ciphertext).hex()},
            )
            actor.on_delivery(env.from_, plaintext)
        return self.now

    def pending_events(self) -> int:
        return len(self._queue)
