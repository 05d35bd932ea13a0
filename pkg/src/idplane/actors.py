"""Message-driven actors with generator-based protocol sessions.

Every protocol participant (registry node, trust anchor, agent, ledger) is an
Actor: a state machine that reacts to delivered messages and timers, one event
at a time. Multi-round-trip operations are written as generators that yield
effects (Request, Gather, Sleep, Fire); the actor runtime sends envelopes,
parks the generator, and resumes it when replies or timeouts arrive. Sessions
interleave within an actor but each inbound event is processed atomically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Generator, Optional

DEFAULT_TIMEOUT = 120

Session = Generator  # yields effects, receives results


@dataclass(frozen=True)
class Message:
    kind: str
    body: dict
    request_id: Optional[str] = None
    reply_to: Optional[str] = None

    def to_bytes(self) -> bytes:
        return json.dumps(
            {
                "kind": self.kind,
                "body": self.body,
                "request_id": self.request_id,
                "reply_to": self.reply_to,
            },
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")

    @staticmethod
    def from_bytes(data: bytes) -> "Message":
        obj = json.loads(data.decode("utf-8"))
        return Message(
            kind=obj["kind"],
            body=obj["body"],
            request_id=obj.get("request_id"),
            reply_to=obj.get("reply_to"),
        )


# --- effects yielded by sessions ---------------------------------------------


@dataclass(frozen=True)
class Request:
    """Send one message; resume with the reply Message, or None on timeout."""

    to: str
    kind: str
    body: dict
    timeout: int = DEFAULT_TIMEOUT


@dataclass(frozen=True)
class Gather:
    """Send several messages; resume with a list of replies aligned to the
    requests (None where missing) once `early` is satisfied, all replies are
    in, or the timeout fires."""

    requests: tuple[tuple[str, str, dict], ...]  # (to, kind, body)
    timeout: int = DEFAULT_TIMEOUT
    early: Optional[Callable[[list], bool]] = None


@dataclass(frozen=True)
class Sleep:
    ticks: int


@dataclass(frozen=True)
class Fire:
    """Send without awaiting a reply."""

    to: str
    kind: str
    body: dict
    reply_to: Optional[str] = None


@dataclass
class SessionRecord:
    sid: int
    label: str
    gen: Session
    done: bool = False
    result: object = None
    error: Optional[BaseException] = None


@dataclass
class _SingleWait:
    sid: int
    timer_id: int


@dataclass
class _GatherWait:
    sid: int
    results: list
    index_by_rid: dict[str, int]
    pending: int
    early: Optional[Callable[[list], bool]]
    timer_id: int
    gather_id: int


class Actor:
    """Base class: binds to a bus, dispatches deliveries, and drives sessions."""

    def __init__(self, address: str):
        self.address = address
        self.bus = None
        self.rng = None
        self._sessions: dict[int, SessionRecord] = {}
        self._next_sid = 0
        self._next_rid = 0
        self._waiters: dict[str, _SingleWait] = {}
        self._gathers: dict[int, _GatherWait] = {}
        self._gather_routes: dict[str, tuple[int, int]] = {}
        self._next_gather = 0

    def bind(self, bus, rng) -> None:
        self.bus = bus
        self.rng = rng

    # --- subclass surface --------------------------------------------------

    def on_message(self, sender: str, msg: Message) -> None:
        """Handle a non-reply message. Subclasses dispatch on msg.kind."""

    def on_session_end(self, record: SessionRecord) -> None:
        """Called when a session completes or fails."""

    def on_custom_timer(self, token) -> None:
        pass

    # --- helpers -------------------------------------------------------------

    def trace(self, kind: str, **detail) -> None:
        self.bus.trace.record(self.bus.now, self.address, kind, **detail)

    def nonce(self) -> bytes:
        return self.rng.randbytes(16)

    def reply(self, to: str, request: Message, kind: str, body: dict) -> None:
        msg = Message(kind=kind, body=body, reply_to=request.request_id)
        self.bus.send(self.address, to, kind, msg.to_bytes())

    def start_session(self, label: str, gen: Session) -> SessionRecord:
        self._next_sid += 1
        record = SessionRecord(sid=self._next_sid, label=label, gen=gen)
        self._sessions[record.sid] = record
        self._advance(record.sid, None)
        return record

    def sessions(self) -> list[SessionRecord]:
        return list(self._sessions.values())

    # --- runtime -------------------------------------------------------------

    def _new_rid(self) -> str:
        self._next_rid += 1
        return f"{self.address}#{self._next_rid}"

    def _send_message(self, to: str, kind: str, body: dict, rid: Optional[str]) -> None:
        msg = Message(kind=kind, body=body, request_id=rid)
        self.bus.send(self.address, to, kind, msg.to_bytes())

    def _advance(self, sid: int, value, exc: Optional[BaseException] = None) -> None:
        record = self._sessions.get(sid)
        if record is None or record.done:
            return
        while True:
            try:
                effect = record.gen.throw(exc) if exc is not None else record.gen.send(value)
            except StopIteration as stop:
                record.done = True
                record.result = stop.value
                self.on_session_end(record)
                return
            except Exception as error:  # session-level protocol failure
                record.done = True
                record.error = error
                self.trace(
                    "session.failed",
                    label=record.label,
                    error=type(error).__name__,
                    detail=str(error),
                )
                self.on_session_end(record)
                return
            exc = None
            if isinstance(effect, Fire):
                msg = Message(kind=effect.kind, body=effect.body, reply_to=effect.reply_to)
                self.bus.send(self.address, effect.to, effect.kind, msg.to_bytes())
                value = None
                continue
            if isinstance(effect, Request):
                rid = self._new_rid()
                timer = self.bus.schedule_timer(self.address, effect.timeout, ("req", rid))
                self._waiters[rid] = _SingleWait(sid=sid, timer_id=timer)
                self._send_message(effect.to, effect.kind, effect.body, rid)
                return
            if isinstance(effect, Gather):
                if not effect.requests:
                    value = []
                    continue
                self._next_gather += 1
                gid = self._next_gather
                timer = self.bus.schedule_timer(self.address, effect.timeout, ("gather", gid))
                wait = _GatherWait(
                    sid=sid,
                    results=[None] * len(effect.requests),
                    index_by_rid={},
                    pending=len(effect.requests),
                    early=effect.early,
                    timer_id=timer,
                    gather_id=gid,
                )
                self._gathers[gid] = wait
                for i, (to, kind, body) in enumerate(effect.requests):
                    rid = self._new_rid()
                    wait.index_by_rid[rid] = i
                    self._gather_routes[rid] = (gid, i)
                    self._send_message(to, kind, body, rid)
                return
            if isinstance(effect, Sleep):
                self.bus.schedule_timer(self.address, effect.ticks, ("sleep", sid))
                return
            raise TypeError(f"unknown effect {effect!r} from session {record.label}")

    def on_delivery(self, sender: str, plaintext: bytes) -> None:
        msg = Message.from_bytes(plaintext)
        rid = msg.reply_to
        if rid is not None:
            wait = self._waiters.pop(rid, None)
            if wait is not None:
                self.bus.cancel_timer(wait.timer_id)
                self._advance(wait.sid, msg)
                return
            route = self._gather_routes.pop(rid, None)
            if route is not None:
                gid, index = route
                gather = self._gathers.get(gid)
                if gather is None:
                    return
                if gather.results[index] is None:
                    gather.results[index] = msg
                    gather.pending -= 1
                if gather.pending == 0 or (gather.early and gather.early(gather.results)):
                    self._finish_gather(gid)
                return
            return  # reply to a request that already timed out
        self.on_message(sender, msg)

    def _finish_gather(self, gid: int) -> None:
        gather = self._gathers.pop(gid, None)
        if gather is None:
            return
        self.bus.cancel_timer(gather.timer_id)
        for rid in list(gather.index_by_rid):
            self._gather_routes.pop(rid, None)
        self._advance(gather.sid, gather.results)

    def on_timer(self, token) -> None:
        kind = token[0] if isinstance(token, tuple) else None
        if kind == "req":
            wait = self._waiters.pop(token[1], None)
            if wait is not None:
                self._advance(wait.sid, None)
            return
        if kind == "gather":
            self._finish_gather(token[1])
            return
        if kind == "sleep":
            self._advance(token[1], None)
            return
        self.on_custom_timer(token)
