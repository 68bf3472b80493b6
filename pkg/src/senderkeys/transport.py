"""Simulated delivery service and idealized two-party channels.

The delivery service is a central server that assigns every submission a
sequence number and never delivers on its own: the harness decides who gets
which entry, when, and how often. Two-party channels carry sender-key
distributions only; the adversary may delay them but has no API to read,
alter, inject or reorder them.

Every action is appended to ``trace`` as one line::

    submit seq=<n> kind=<frame|control> from=<id> size=<bytes>
    reject kind=frame from=<id> index=<i> reason=<text>
    deliver seq=<n> to=<id>[ redeliver]
    tp_send <from>-><to> size=<bytes>
    tp_deliver <from>-><to>
"""

from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass, field
from itertools import count
from typing import Callable, Iterable, Union

from .core import ControlMsg, Frame, UserId

Payload = Union[Frame, ControlMsg]


class TransportError(Exception):
    pass


class UnknownSeq(TransportError):
    pass


class AlreadyDelivered(TransportError):
    pass


class EmptyQueue(TransportError):
    pass


class Rejected(TransportError):
    """The server refused a submission; the sender may retry later."""


def payload_bytes(payload: Payload) -> bytes:
    return payload.to_bytes()


@dataclass(frozen=True)
class LogEntry:
    seq: int
    origin: UserId
    payload: Payload
    recipients: frozenset[UserId]


@dataclass
class ServerLog:
    entries: list[LogEntry] = field(default_factory=list)
    delivered: dict[UserId, set[int]] = field(default_factory=dict)

    def dump(self) -> bytes:
        return b"".join(payload_bytes(e.payload) for e in self.entries)


class DeliveryService:
    """Central server with total ordering and explicit, adversarial delivery.

    ``admission`` is an optional hook called with every payload before it is
    logged; it raises ``Rejected`` to refuse it.
    """

    def __init__(self, admission: Callable[[Payload], None] | None = None):
        self.log = ServerLog()
        self.admission = admission
        self.trace: list[str] = []

    def submit(self, payload: Payload, origin: UserId, recipients: Iterable[UserId] = ()) -> int:
        if self.admission is not None:
            try:
                self.admission(payload)
            except Rejected as exc:
                if isinstance(payload, Frame):
                    self.trace.append(f"reject kind=frame from={origin} index={payload.i} reason={exc}")
                else:
                    self.trace.append(f"reject kind=control from={origin} reason={exc}")
                raise
        seq = len(self.log.entries)
        if isinstance(payload, ControlMsg):
            payload = dataclasses.replace(payload, seq=seq)
        entry = LogEntry(seq, origin, payload, frozenset(recipients) - {origin})
        self.log.entries.append(entry)
        kind = "frame" if isinstance(payload, Frame) else "control"
        self.trace.append(f"submit seq={seq} kind={kind} from={origin} size={len(payload_bytes(payload))}")
        return seq

    def entry(self, seq: int) -> LogEntry:
        if not 0 <= seq < len(self.log.entries):
            raise UnknownSeq(f"no log entry {seq}")
        return self.log.entries[seq]

    def deliver(self, to: UserId, seq: int, redeliver: bool = False) -> Payload:
        entry = self.entry(seq)
        seen = self.log.delivered.setdefault(to, set())
        if seq in seen and not redeliver:
            raise AlreadyDelivered(f"entry {seq} already delivered to {to}")
        seen.add(seq)
        self.trace.append(f"deliver seq={seq} to={to}" + (" redeliver" if redeliver else ""))
        return entry.payload

    def pending(self, to: UserId) -> list[int]:
        """Undelivered entries addressed to ``to``, in log order."""
        seen = self.log.delivered.get(to, set())
        return [e.seq for e in self.log.entries if to in e.recipients and e.seq not in seen]


class TwoPartyNetwork:
    """Perfectly secure pairwise channels, FIFO per direction.

    Channels are created on first use. The only adversary-visible data is
    ``traffic()``: queue lengths per direction.
    """

    def __init__(self, trace: list[str] | None = None):
        self._queues: dict[tuple[UserId, UserId], deque] = {}
        self._order = count()
        self.trace = trace if trace is not None else []

    def tp_send(self, sender: UserId, to: UserId, item) -> None:
        self._queues.setdefault((sender, to), deque()).append((next(self._order), item))
        size = len(item.key.spk) + len(item.key.ck.bytes) if hasattr(item, "key") else 0
        self.trace.append(f"tp_send {sender}->{to} size={size}")

    def tp_deliver(self, to: UserId, sender: UserId | None = None):
        """Pop the oldest queued item for ``to`` (optionally only from ``sender``)."""
        candidates = [
            (q[0][0], key)
            for key, q in self._queues.items()
            if key[1] == to and q and (sender is None or key[0] == sender)
        ]
        if not candidates:
            raise EmptyQueue(f"nothing queued for {to}")
        _, key = min(candidates)
        _, item = self._queues[key].popleft()
        self.trace.append(f"tp_deliver {key[0]}->{to}")
        return item

    def queued(self, to: UserId) -> int:
        return sum(len(q) for key, q in self._queues.items() if key[1] == to)

    def traffic(self) -> dict[tuple[UserId, UserId], int]:
        return {key: len(q) for key, q in sorted(self._queues.items()) if q}
