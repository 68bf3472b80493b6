"""Security game for group messaging, with an executable cleanness judge.

A ``Game`` holds the hidden bit, every user's state, the simulated network
and an append-only ``GameTranscript``. Oracles never raise on adversarial
input; failures become outcome codes in the transcript. ``judge_cleanness``
reads only the transcript, so hand-written transcripts can be judged too.

Cleanness rules checked by the judge:

``exposure-lockout``
    After any exposure, challenges are forbidden until some later removal
    has been processed by every member on that removal's roster.
``skipped-exposure``
    A challenge made before an exposure is dirty if the exposed state could
    still derive its message key (not yet received, or sitting in the
    skipped store).
``impersonation``
    A forgery claiming sender S does not count after S was exposed, until
    the receiver has processed a removal since.
``expmk-challenge``
    A challenge on a message key leaked through ``o_expmk`` is dirty,
    whichever came first.

``Predicate.STRENGTHENED`` relaxes ``impersonation`` for forgeries on
indices the sender had already used when exposed. ``Predicate.PER_SENDER``
replaces ``exposure-lockout`` by a per-chain rule: a challenge is clean if
the sender's chain was generated after every exposure. The per-sender rule
is an experimental extension for update experiments.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Iterable

from . import core, crypto
from .core import ControlMsg, Frame, RecvError, SenderKeysError, UserId
from .crypto import MessageKey
from .entropy import Entropy
from .transport import DeliveryService, Rejected, TransportError, TwoPartyNetwork
from .variants import SenderKeysProtocol, Variant, make_protocol


class GameError(Exception):
    """Misuse of an oracle (unknown user, unequal challenge lengths, ...)."""


class NotDerivable(GameError):
    pass


class Predicate(str, enum.Enum):
    BASELINE = "baseline"
    STRENGTHENED = "strengthened"
    PER_SENDER = "per-sender"


class Outcome(str, enum.Enum):
    WIN = "win"
    LOSE = "lose"
    DIRTY = "dirty"


# --------------------------------------------------------------------------
# transcript and judge


@dataclass
class Event:
    t: int
    kind: str
    user: UserId = ""
    info: dict = field(default_factory=dict)

    def render(self) -> str:
        parts = [f"{self.t:04d}", self.kind]
        if self.user:
            parts.append(self.user)
        for k in sorted(self.info):
            parts.append(f"{k}={_fmt(self.info[k])}")
        return " ".join(parts)


def _fmt(v) -> str:
    if isinstance(v, bytes):
        return v.hex()
    if isinstance(v, dict):
        return "{" + ",".join(f"{k}:{_fmt(v[k])}" for k in sorted(v)) + "}"
    if isinstance(v, (tuple, list, frozenset, set)):
        items = sorted(v) if isinstance(v, (set, frozenset)) else v
        return "[" + ",".join(_fmt(x) for x in items) + "]"
    return str(v)


class GameTranscript:
    def __init__(self) -> None:
        self.events: list[Event] = []

    def append(self, kind: str, user: UserId = "", /, **info) -> Event:
        ev = Event(len(self.events), kind, user, info)
        self.events.append(ev)
        return ev

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def render(self) -> str:
        return "\n".join(e.render() for e in self.events)


@dataclass
class CleannessVerdict:
    violations: list[tuple[int, str]] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.violations


@dataclass
class _Exposure:
    t: int
    user: UserId
    reach: dict
    own: tuple | None
    removals: dict = field(default_factory=dict)
    released: bool = False


def judge_cleanness(
    transcript: GameTranscript | Iterable[Event], predicate: Predicate | str = Predicate.BASELINE
) -> CleannessVerdict:
    """Apply the cleanness rules to a finished transcript.

    Events consulted (``info`` keys in brackets): ``expose`` [reach, own],
    ``challenge`` [index, key_id], ``expmk`` [index, key_id], ``remove``
    [seq, roster], ``refresh`` [removal], ``forgery`` [sender, index,
    key_id], ``keygen`` [key_id]. ``reach`` maps a chain id to
    ``(next_index, skipped_indices)``; ``own`` is ``(key_id, next_index)``
    of the exposed user's sending chain, or ``None``.
    """
    predicate = Predicate(predicate)
    verdict = CleannessVerdict()
    dirty: set[tuple[int, str]] = set()
    exposures: list[_Exposure] = []
    challenges: list[tuple[int, UserId, int, str]] = []
    leaked_mks: set[tuple[str, int]] = set()
    generated: dict[str, int] = {}
    refreshed_at: dict[UserId, list[int]] = {}

    def flag(t: int, rule: str) -> None:
        if (t, rule) not in dirty:
            dirty.add((t, rule))
            verdict.violations.append((t, rule))

    for ev in transcript:
        info = ev.info
        if ev.kind == "keygen":
            generated[info["key_id"]] = ev.t
        elif ev.kind == "expose":
            exp = _Exposure(ev.t, ev.user, dict(info.get("reach", {})), info.get("own"))
            exposures.append(exp)
            for (ct, _sender, idx, kid) in challenges:
                if kid in exp.reach:
                    nxt, skipped = exp.reach[kid]
                    if idx >= nxt or idx in skipped:
                        flag(ct, "skipped-exposure")
        elif ev.kind == "remove":
            for exp in exposures:
                if not exp.released:
                    exp.removals[info["seq"]] = set(info["roster"])
        elif ev.kind == "refresh":
            refreshed_at.setdefault(ev.user, []).append(ev.t)
            for exp in exposures:
                waiting = exp.removals.get(info["removal"])
                if exp.released or waiting is None:
                    continue
                waiting.discard(ev.user)
                if not waiting:
                    exp.released = True
        elif ev.kind == "expmk":
            leaked_mks.add((info["key_id"], info["index"]))
            for (ct, _sender, idx, kid) in challenges:
                if (kid, idx) == (info["key_id"], info["index"]):
                    flag(ct, "expmk-challenge")
        elif ev.kind == "challenge":
            kid, idx = info["key_id"], info["index"]
            challenges.append((ev.t, ev.user, idx, kid))
            if (kid, idx) in leaked_mks:
                flag(ev.t, "expmk-challenge")
            if predicate is Predicate.PER_SENDER:
                born = generated.get(kid, -1)
                if any(born < exp.t for exp in exposures):
                    flag(ev.t, "exposure-lockout")
            elif any(not exp.released for exp in exposures):
                flag(ev.t, "exposure-lockout")
        elif ev.kind == "forgery":
            sender = info["sender"]
            for exp in exposures:
                if exp.user != sender:
                    continue
                if any(t > exp.t for t in refreshed_at.get(ev.user, [])):
                    continue
                if predicate is Predicate.STRENGTHENED and exp.own is not None:
                    own_kid, own_next = exp.own
                    if own_kid == info["key_id"] and info["index"] < own_next:
                        continue
                flag(ev.t, "impersonation")
    verdict.violations.sort()
    return verdict


# --------------------------------------------------------------------------
# the game


@dataclass
class ChallengeRecord:
    sender: UserId
    index: int
    seq: int | None
    key_id: str


class Game:
    """Challenger for the group messaging security game.

    ``seed`` makes every random choice (the hidden bit, all device
    randomness) reproducible. With ``auto_keys`` two-party traffic is
    delivered as soon as it is sent; otherwise it waits for
    ``o_deliver_keys``.
    """

    def __init__(
        self,
        members: Iterable[UserId],
        variant: Variant | str = Variant.BASELINE,
        seed: int | None = None,
        nmax: int = core.DEFAULT_NMAX,
        predicate: Predicate | str = Predicate.BASELINE,
        auto_keys: bool = True,
        block_size: int = 1,
        protocol: SenderKeysProtocol | None = None,
    ):
        self.members = list(dict.fromkeys(members))
        if not self.members:
            raise GameError("a game needs at least one user")
        self.proto = protocol or make_protocol(variant, nmax, block_size)
        self.predicate = Predicate(predicate)
        self.seed = seed
        self._rand = random.Random(seed) if seed is not None else random.SystemRandom()
        self.b = self._rand.getrandbits(1)
        self.auto_keys = auto_keys
        self.entropy: dict[UserId, Entropy] = {}
        self.users: dict = {}
        for uid in self.members:
            self._new_user(uid)
        self.ds = DeliveryService(self.proto.admission())
        self.channels = TwoPartyNetwork(self.ds.trace)
        self.transcript = GameTranscript()
        self.forgery_win = False
        self.challenge_records: list[ChallengeRecord] = []
        self.plaintexts: dict[UserId, list[tuple[UserId, bytes]]] = {u: [] for u in self.members}
        self.adversary = Adversary(self)
        self._honest: set[bytes] = set()
        self._processed: dict[UserId, set[int]] = {}
        self._finalized: Outcome | None = None

    # plumbing --------------------------------------------------------------

    def _new_user(self, uid: UserId) -> None:
        if uid in self.users:
            return
        if self.seed is None:
            self.entropy[uid] = Entropy()
        else:
            self.entropy[uid] = Entropy.seeded(self.seed, uid)
        self.users[uid] = self.proto.init(uid)
        if uid not in self.members:
            self.members.append(uid)
        if hasattr(self, "plaintexts"):
            self.plaintexts.setdefault(uid, [])

    def _state(self, uid: UserId):
        try:
            return self.users[uid]
        except KeyError:
            raise GameError(f"unknown user {uid!r}") from None

    def _key_id(self, st) -> str | None:
        own = self.proto.own_chain(st)
        return own[0] if own else None

    def _commit(self, uid: UserId, st) -> None:
        before = self._key_id(self.users[uid])
        self.users[uid] = st
        after = self._key_id(st)
        if after is not None and after != before and self.proto.chain_owner(st, after) in (uid, "*"):
            self.transcript.append("keygen", uid, key_id=after)

    def _ship(self, dists) -> None:
        for d in dists:
            self.channels.tp_send(d.sender, d.to, d)
            if self.auto_keys and d.sender in self._state(d.to).group:
                self.o_deliver_keys(d.to, d.sender)

    def _flush_keys(self, uid: UserId) -> None:
        # auto mode: distributions that overtook a control message wait for it
        if not self.auto_keys:
            return
        st = self.users[uid]
        for (sender, to), n in self.channels.traffic().items():
            if to == uid and sender in st.group:
                for _ in range(n):
                    self.o_deliver_keys(uid, sender)

    def _recipients(self, st, T: ControlMsg | None = None) -> set[UserId]:
        out = set(st.group)
        if T is not None:
            out |= set(T.subjects)
        return out

    # oracles ---------------------------------------------------------------

    def setup(self, creator: UserId | None = None) -> None:
        """Pre-established group: created, delivered, and every member holding every sender key."""
        creator = creator or self.members[0]
        T = self.o_create(creator, self.members)
        for uid in self.members:
            if uid != creator:
                self.o_deliver(uid, T.seq)
        for uid in self.members:
            dists, st = self.proto.establish(self._state(uid), self.entropy[uid])
            self._commit(uid, st)
            self._ship(dists)
        if not self.auto_keys:
            for uid in self.members:
                while self.channels.queued(uid):
                    self.o_deliver_keys(uid)
        self.transcript.append("setup", creator, roster=tuple(self.members))

    def o_create(self, creator: UserId, members: Iterable[UserId]) -> ControlMsg:
        members = list(members)
        for uid in members:
            self._new_user(uid)
        T, dists, st = self.proto.exec_create(members, self._state(creator), self.entropy[creator])
        self._commit(creator, st)
        seq = self.ds.submit(T, creator, self._recipients(st, T))
        self._processed.setdefault(creator, set()).add(seq)
        self._ship(dists)
        self.transcript.append("create", creator, seq=seq, roster=tuple(members))
        return self.ds.entry(seq).payload

    def _send(self, uid: UserId, m: bytes, kind: str, **extra):
        st = self._state(uid)
        frame, dists, st = self.proto.send(m, st, self.entropy[uid])
        try:
            seq = self.ds.submit(frame, uid, self._recipients(st))
        except Rejected:
            self.users[uid] = self.proto.confirm(frame, st, accepted=False)
            self.transcript.append(kind, uid, index=frame.i, outcome="rejected", **extra)
            return frame, None
        self._commit(uid, self.proto.confirm(frame, st, accepted=True))
        self._ship(dists)
        self._honest.add(frame.to_bytes())
        key_id = self._key_id(self.users[uid]) or ""
        self.transcript.append(kind, uid, index=frame.i, seq=seq, key_id=key_id, **extra)
        return frame, seq

    def o_send(self, uid: UserId, m: bytes) -> tuple[Frame, int | None]:
        return self._send(uid, m, "send")

    def o_challenge(self, uid: UserId, m0: bytes, m1: bytes) -> tuple[Frame, int | None]:
        if len(m0) != len(m1):
            raise GameError("challenge messages must have equal length")
        frame, seq = self._send(uid, (m0, m1)[self.b], "challenge")
        if seq is not None:
            key_id = self._key_id(self.users[uid]) or ""
            self.challenge_records.append(ChallengeRecord(uid, frame.i, seq, key_id))
        return frame, seq

    def _receive(self, uid: UserId, frame: Frame, via: str) -> str:
        st = self._state(uid)
        honest = frame.to_bytes() in self._honest
        key_id = ""
        owner_key = getattr(st, "peer_keys", {}).get(frame.sender)
        if owner_key is not None:
            key_id = owner_key.key_id
        elif getattr(st, "chain_id", ""):
            key_id = st.chain_id
        try:
            m, st2 = self.proto.recv(frame, st)
        except RecvError as exc:
            self.transcript.append(via, uid, sender=frame.sender, index=frame.i, outcome=exc.code)
            return exc.code
        except (SenderKeysError, ValueError) as exc:
            # no group, or a frame the variant cannot interpret at all
            code = "rejected" if isinstance(exc, SenderKeysError) else "malformed-frame"
            self.transcript.append(via, uid, sender=frame.sender, index=frame.i, outcome=code)
            return code
        self.users[uid] = st2
        self.plaintexts[uid].append((frame.sender, m))
        self.transcript.append(via, uid, sender=frame.sender, index=frame.i, outcome="accepted", honest=honest)
        if not honest:
            self.forgery_win = True
            self.transcript.append("forgery", uid, sender=frame.sender, index=frame.i, key_id=key_id)
        return "accepted"

    def o_receive(self, uid: UserId, claimed: UserId, frame: Frame | bytes) -> str:
        self._state(uid)
        if isinstance(frame, (bytes, bytearray)):
            try:
                frame = Frame.from_bytes(bytes(frame))
            except RecvError as exc:
                self.transcript.append("receive", uid, outcome=exc.code)
                return exc.code
        if frame.sender != claimed:
            self.transcript.append("receive", uid, sender=claimed, outcome="sender-mismatch")
            return "sender-mismatch"
        return self._receive(uid, frame, "receive")

    def o_deliver(self, uid: UserId, seq: int | None = None, payload=None, redeliver: bool = False) -> str:
        """Deliver log entry ``seq`` (or an injected ``payload``) to ``uid``."""
        self._state(uid)
        if payload is None:
            try:
                payload = self.ds.deliver(uid, seq, redeliver)
            except TransportError as exc:
                self.transcript.append("deliver", uid, seq=seq, outcome=type(exc).__name__)
                return "duplicate" if "Already" in type(exc).__name__ else "unknown-seq"
        if isinstance(payload, (bytes, bytearray)):
            payload = bytes(payload)
            try:
                payload = ControlMsg.from_bytes(payload) if payload[:1] == b"T" else Frame.from_bytes(payload)
            except SenderKeysError as exc:
                code = getattr(exc, "code", "malformed-control")
                self.transcript.append("deliver", uid, outcome=code)
                return code
        if isinstance(payload, Frame):
            return self._receive(uid, payload, "deliver")
        return self._process(uid, payload, injected=seq is None)

    def _process(self, uid: UserId, T: ControlMsg, injected: bool) -> str:
        done = self._processed.setdefault(uid, set())
        if T.seq is not None and T.seq in done:
            self.transcript.append("deliver", uid, seq=T.seq, op=T.kind, outcome="duplicate")
            return "duplicate"
        try:
            st = self.proto.proc(T, self._state(uid))
        except SenderKeysError as exc:
            self.transcript.append("deliver", uid, seq=T.seq, op=T.kind, outcome=f"rejected:{exc}")
            return "rejected"
        if T.seq is not None:
            done.add(T.seq)
        self._commit(uid, st)
        self.transcript.append("deliver", uid, seq=T.seq, op=T.kind, outcome="processed", injected=injected)
        if T.kind == core.REMOVE and uid not in T.subjects:
            self.transcript.append("refresh", uid, removal=T.seq)
        self._flush_keys(uid)
        return "processed"

    def o_deliver_keys(self, uid: UserId, sender: UserId | None = None) -> str:
        try:
            d = self.channels.tp_deliver(uid, sender)
        except TransportError:
            return "empty"
        try:
            st = self.proto.proc_distribution(d, self._state(uid))
        except SenderKeysError as exc:
            self.transcript.append("keys", uid, sender=d.sender, outcome=f"rejected:{exc}")
            return "rejected"
        self.users[uid] = st
        self.transcript.append("keys", uid, sender=d.sender, outcome="installed")
        return "installed"

    def o_add(self, actor: UserId, new: UserId) -> ControlMsg:
        self._new_user(new)
        T, dists, st = self.proto.exec_add(new, self._state(actor), self.entropy[actor])
        self._commit(actor, st)
        seq = self.ds.submit(T, actor, self._recipients(st, T))
        self._processed.setdefault(actor, set()).add(seq)
        self.transcript.append("add", actor, seq=seq, subject=new, roster=tuple(st.group))
        self._ship(dists)
        return self.ds.entry(seq).payload

    def o_remove(self, actor: UserId, target: UserId) -> ControlMsg:
        T, dists, st = self.proto.exec_remove(target, self._state(actor), self.entropy[actor])
        recipients = self._recipients(self._state(actor), T)
        seq = self.ds.submit(T, actor, recipients)
        self._processed.setdefault(actor, set()).add(seq)
        self.transcript.append("remove", actor, seq=seq, subject=target, roster=tuple(st.group))
        self._commit(actor, st)
        self.transcript.append("refresh", actor, removal=seq)
        self._ship(dists)
        return self.ds.entry(seq).payload

    def o_update(self, actor: UserId) -> ControlMsg:
        T, dists, st = self.proto.exec_update(self._state(actor), self.entropy[actor])
        self._commit(actor, st)
        seq = self.ds.submit(T, actor, self._recipients(st, T))
        self._processed.setdefault(actor, set()).add(seq)
        self.transcript.append("update", actor, seq=seq)
        self._ship(dists)
        return self.ds.entry(seq).payload

    def o_expose(self, uid: UserId) -> bytes:
        st = self._state(uid)
        own = self.proto.own_chain(st)
        self.transcript.append(
            "expose", uid,
            reach=self.proto.reach(st),
            own=(own[0], own[1].index) if own else None,
        )
        data = self.proto.serialize(st)
        self.adversary.learn_state(uid, data)
        return data

    def o_expmk(self, uid: UserId, index: int) -> MessageKey:
        own = self.proto.own_chain(self._state(uid))
        if own is None:
            raise NotDerivable(f"{uid} has no sending chain")
        key_id = own[0]
        for holder in [uid] + [u for u in self.members if u != uid]:
            mk = self.proto.derivable_mk(self.users[holder], key_id, index)
            if mk is not None:
                self.transcript.append("expmk", uid, index=index, key_id=key_id)
                self.adversary.leaked_mks[(uid, index)] = mk
                return mk
        raise NotDerivable(f"message key {uid}#{index} is neither derivable nor stored")

    def rng_control(self, uid: UserId, fixed: bytes | None) -> None:
        self._state(uid)
        self.entropy[uid].pin(fixed)
        self.transcript.append("rng", uid, pinned=fixed is not None)

    # in-order delivery -----------------------------------------------------

    def deliver_all(self, users: Iterable[UserId] | None = None) -> None:
        """Deliver every pending log entry, in log order, to ``users`` (default: all)."""
        users = list(users) if users is not None else list(self.members)
        for entry in list(self.ds.log.entries):
            for uid in users:
                if entry.seq in self.ds.pending(uid):
                    self.o_deliver(uid, entry.seq)
        for uid in users:
            while self.channels.queued(uid):
                self.o_deliver_keys(uid)

    # end of game -----------------------------------------------------------

    def judge(self, predicate: Predicate | str | None = None) -> CleannessVerdict:
        return judge_cleanness(self.transcript, predicate or self.predicate)

    def finalize(self, b_guess: int) -> Outcome:
        verdict = self.judge()
        if not verdict.clean:
            outcome = Outcome.DIRTY
        elif self.forgery_win or b_guess == self.b:
            outcome = Outcome.WIN
        else:
            outcome = Outcome.LOSE
        self.transcript.append("finalize", guess=b_guess, outcome=outcome.value)
        self._finalized = outcome
        return outcome


class Adversary:
    """What the adversary has learned so far, and forgeries built from it."""

    def __init__(self, game: Game):
        self.game = game
        self.states: dict[UserId, object] = {}
        self.leaked_mks: dict[tuple[UserId, int], MessageKey] = {}
        self.rng = Entropy.seeded("adversary", game.seed) if game.seed is not None else Entropy()

    def learn_state(self, uid: UserId, data: bytes) -> None:
        self.states[uid] = self.game.proto.deserialize(data)

    def _ssk(self, sender: UserId) -> bytes:
        st = self.states.get(sender)
        ssk = self.game.proto.signing_key(st) if st is not None else None
        if not ssk:
            raise GameError(f"no leaked signing key for {sender}")
        return ssk

    def forge(self, sender: UserId, index: int, m: bytes) -> Frame:
        """New ciphertext under a leaked message key, signed with a leaked signing key."""
        mk = self.leaked_mks.get((sender, index))
        if mk is None:
            raise GameError(f"message key {sender}#{index} has not leaked")
        c = crypto.enc(mk, m)
        return self.game.proto.make_frame(c, index, sender, self._ssk(sender), self.rng)

    def resign(self, frame: Frame) -> Frame:
        """Same ciphertext and metadata, fresh signature under a leaked signing key."""
        return self.game.proto.make_frame(frame.c, frame.i, frame.sender, self._ssk(frame.sender), self.rng)


# --------------------------------------------------------------------------
# scripted adversaries


@dataclass
class AttackReport:
    variant: str
    metadata_only: bool
    accepted: bool
    outcome_code: str
    verdicts: dict[str, CleannessVerdict]
    outcomes: dict[str, Outcome]
    transcript: str

    @property
    def banner(self) -> str:
        return "FORGERY ACCEPTED" if self.accepted else "FORGERY REJECTED"


def attack_script_active(
    variant: Variant | str = Variant.BASELINE,
    metadata_only: bool = False,
    seed: int = 0,
    users: tuple[UserId, UserId] = ("ID1", "ID2"),
) -> AttackReport:
    """Send-withhold-expose-forge against a two-member group.

    ID1 sends message i and its delivery to ID2 is withheld. ID1 is then
    exposed and mk_i leaked (the leak is skipped when ``metadata_only``).
    The forgery is either a new ciphertext under mk_i or the honest
    ciphertext re-signed, and it is delivered to ID2 as message i.
    """
    id1, id2 = users
    game = Game([id1, id2], variant=variant, seed=seed)
    game.setup()
    frame, _seq = game.o_send(id1, b"attack at dawn!!")
    game.o_expose(id1)
    if metadata_only:
        forged = game.adversary.resign(frame)
    else:
        game.o_expmk(id1, frame.i)
        forged = game.adversary.forge(id1, frame.i, b"retreat at once!")
    code = game.o_deliver(id2, payload=forged)
    verdicts = {p.value: game.judge(p) for p in (Predicate.BASELINE, Predicate.STRENGTHENED)}
    outcomes = {}
    for p, v in verdicts.items():
        if not v.clean:
            outcomes[p] = Outcome.DIRTY
        else:
            outcomes[p] = Outcome.WIN if game.forgery_win else Outcome.LOSE
    return AttackReport(
        variant=Variant(variant).value,
        metadata_only=metadata_only,
        accepted=code == "accepted",
        outcome_code=code,
        verdicts=verdicts,
        outcomes=outcomes,
        transcript=game.transcript.render(),
    )


def predict_sender_key(pinned: bytes) -> core.SenderKey:
    """The adversary's own computation of a baseline key from pinned randomness."""
    rand = (pinned * (-(-crypto.KEY_SIZE // len(pinned))))[: crypto.KEY_SIZE]
    return core.generate_sender_key(rand)[0]


def passive_game(
    seed: int, members: tuple[UserId, ...] = ("A", "B", "C"), variant: Variant | str = Variant.BASELINE
) -> Outcome:
    """One game against an adversary making only clean queries and guessing at random."""
    game = Game(members, variant=variant, seed=seed)
    game.setup()
    coin = random.Random(f"guess:{seed}")
    sender = coin.choice(members)
    game.o_send(sender, b"warm-up message")
    game.o_challenge(coin.choice(members), b"yes, attack now.", b"no, stand down!!")
    game.deliver_all()
    return game.finalize(coin.getrandbits(1))


def passive_win_rate(trials: int = 1000, seed: int = 0) -> float:
    wins = sum(passive_game(seed * 100003 + n) is Outcome.WIN for n in range(trials))
    return wins / trials
