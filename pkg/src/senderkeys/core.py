"""Sender Keys group messaging: the Init/Send/Recv/Exec/Proc state machine.

States are values. Every operation works on a copy of the state it is given
and returns the new state, so a failed operation leaves the caller's state
untouched.

Wire formats (all integers big-endian):

* signing payload of a frame:
  ``u32 len(c) || c || u64 i || u32 len(sender) || sender_utf8``,
  followed by ``u32 len(next_spk) || next_spk`` only for frames that announce
  a next signature key.
* frame on the wire: ``u8 flags || payload || u32 len(sigma) || sigma``
  where flag bit 0 marks the presence of ``next_spk``.
* state serialization: see ``serialize_state``.
"""

from __future__ import annotations

import copy
import hashlib
import hmac
import logging
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

from . import crypto
from .crypto import ChainKey, MessageKey
from .entropy import Entropy

log = logging.getLogger(__name__)

UserId = str
DEFAULT_NMAX = 2000

CREATE, ADD, REMOVE, UPDATE = "crt", "add", "rem", "upd"


class SenderKeysError(Exception):
    """Base class for protocol-level failures."""


class StateError(SenderKeysError):
    """Operation not allowed in the current group state."""


class ControlError(SenderKeysError):
    """A control message could not be processed."""


class RecvError(SenderKeysError):
    """Base class for frames that ``recv`` refuses; ``code`` names the case."""

    code = "recv-error"


class UnknownSender(RecvError):
    code = "unknown-sender"


class SignatureInvalid(RecvError):
    code = "signature-invalid"


class PendingSenderKey(RecvError):
    code = "pending-sender-key"


class SkippedKeyMissing(RecvError):
    code = "skipped-key-missing"


class SkippedCapacityExceeded(RecvError):
    code = "skipped-capacity-exceeded"


class DecryptionFailure(RecvError):
    code = "decryption-failure"


class StaleSignatureKey(RecvError):
    code = "stale-spk"


class MalformedFrame(RecvError):
    code = "malformed-frame"


# --------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class SenderKey:
    spk: bytes
    ck: ChainKey
    # public label fixed at generation; survives signature-key rotation
    key_id: str = ""

    def __post_init__(self) -> None:
        if not self.key_id:
            object.__setattr__(self, "key_id", key_id_for(self.spk))


def key_id_for(spk: bytes) -> str:
    return hashlib.sha256(b"key-id" + spk).hexdigest()[:16]


@dataclass(frozen=True)
class SenderKeyDistribution:
    sender: UserId
    to: UserId
    key: SenderKey


@dataclass(frozen=True)
class ControlMsg:
    kind: str
    actor: UserId
    subjects: tuple[UserId, ...]
    # roster after the change as seen by the actor; lets a joining member learn the group
    roster: tuple[UserId, ...] = ()
    seq: int | None = None
    # update notices name the fingerprint of the replacement key
    key_id: str = ""

    def __post_init__(self) -> None:
        if not self.subjects:
            raise ValueError("control message needs at least one subject")
        if self.kind not in (CREATE, ADD, REMOVE, UPDATE):
            raise ValueError(f"unknown control kind {self.kind!r}")

    def to_bytes(self) -> bytes:
        w = _Writer()
        w.str(self.kind)
        w.str(self.actor)
        w.strs(self.subjects)
        w.strs(self.roster)
        w.u64(-1 if self.seq is None else self.seq, signed=True)
        w.str(self.key_id)
        return b"T" + w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> ControlMsg:
        try:
            if data[:1] != b"T":
                raise ValueError("missing control tag")
            r = _Reader(data[1:])
            kind, actor = r.str(), r.str()
            subjects, roster = tuple(r.strs()), tuple(r.strs())
            seq = r.u64(signed=True)
            key_id = r.str()
            r.done()
            return cls(kind, actor, subjects, roster, None if seq < 0 else seq, key_id)
        except (ValueError, struct.error, UnicodeDecodeError) as exc:
            raise ControlError(f"cannot parse control message: {exc}") from exc


@dataclass(frozen=True)
class Frame:
    c: bytes
    i: int
    sender: UserId
    sigma: bytes = b""
    next_spk: bytes | None = None

    def signed_payload(self) -> bytes:
        return encode_signed(self.c, self.i, self.sender, self.next_spk)

    def to_bytes(self) -> bytes:
        w = _Writer()
        w.u8(1 if self.next_spk is not None else 0)
        w.raw(self.signed_payload())
        w.bytes(self.sigma)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> Frame:
        try:
            r = _Reader(data)
            flags = r.u8()
            c = r.bytes()
            i = r.u64()
            sender = r.str()
            next_spk = r.bytes() if flags & 1 else None
            sigma = r.bytes()
            r.done()
        except (ValueError, struct.error, UnicodeDecodeError) as exc:
            raise MalformedFrame(f"cannot parse frame: {exc}") from exc
        return cls(c, i, sender, sigma, next_spk)


def encode_signed(c: bytes, i: int, sender: UserId, next_spk: bytes | None = None) -> bytes:
    w = _Writer()
    w.bytes(c)
    w.u64(i)
    w.str(sender)
    if next_spk is not None:
        w.bytes(next_spk)
    return w.getvalue()


@dataclass
class SigWindow:
    """Receiver-side view of a peer's rotating signature key.

    The current key signs indices ``>= current_from``; the previous key is
    kept only for the index range ``prev_lo..prev_hi`` it signed.
    """

    current_from: int
    prev_spk: bytes | None = None
    prev_lo: int = 0
    prev_hi: int = -1


@dataclass
class UserState:
    me: UserId
    nmax: int = DEFAULT_NMAX
    group: list[UserId] = field(default_factory=list)
    own_ssk: bytes | None = None
    own_sender_key: SenderKey | None = None
    peer_keys: dict[UserId, SenderKey] = field(default_factory=dict)
    skipped: dict[tuple[UserId, int], MessageKey] = field(default_factory=dict)
    distributed_to: set[UserId] = field(default_factory=set)
    # secret absorbed by hardened key generation; stays empty in the baseline
    entropy_pool: bytes = b""
    sig_windows: dict[UserId, SigWindow] = field(default_factory=dict)

    @property
    def recv_index(self) -> dict[UserId, int]:
        return {uid: k.ck.index for uid, k in self.peer_keys.items()}

    def copy(self) -> UserState:
        return copy.deepcopy(self)

    def skipped_for(self, sender: UserId) -> int:
        return sum(1 for (s, _) in self.skipped if s == sender)


Keygen = Callable[[UserState, Entropy], "tuple[SenderKey, bytes]"]


def generate_sender_key(rand: bytes) -> tuple[SenderKey, bytes]:
    """Fresh sender key and signing key from 32 bytes of randomness."""
    ck = hmac.digest(rand, b"chain-key", "sha256")
    pair = crypto.sig_gen(hmac.digest(rand, b"signing-key", "sha256"))
    return SenderKey(pair.public, ChainKey(ck, 0)), pair.secret


def baseline_keygen(st: UserState, rng: Entropy) -> tuple[SenderKey, bytes]:
    return generate_sender_key(rng(crypto.KEY_SIZE))


# --------------------------------------------------------------------------
# Init / Exec / Proc


def init(uid: UserId, nmax: int = DEFAULT_NMAX) -> UserState:
    if not uid:
        raise ValueError("user id must be non-empty")
    if nmax < 0:
        raise ValueError("nmax must be non-negative")
    return UserState(me=uid, nmax=nmax)


def _require_group(st: UserState) -> None:
    if not st.group:
        raise StateError(f"{st.me} is not in a group")


def _install_own_key(st: UserState, key: SenderKey, ssk: bytes) -> None:
    st.own_sender_key = key
    st.own_ssk = ssk
    st.distributed_to = set()
    if log.isEnabledFor(logging.DEBUG):
        log.debug("%s generate sender key %s ck[%s]@%d", st.me, key.key_id, st.me, key.ck.index)


def _distribute(st: UserState) -> list[SenderKeyDistribution]:
    assert st.own_sender_key is not None
    out = []
    for uid in st.group:
        if uid != st.me and uid not in st.distributed_to:
            out.append(SenderKeyDistribution(st.me, uid, st.own_sender_key))
            st.distributed_to.add(uid)
    return out


def exec_create(
    members: Iterable[UserId],
    st: UserState,
    rng: Entropy | None = None,
    keygen: Keygen = baseline_keygen,
) -> tuple[ControlMsg, list[SenderKeyDistribution], UserState]:
    members = list(dict.fromkeys(members))
    if st.group:
        raise StateError(f"{st.me} already has a group")
    if st.me not in members:
        raise StateError("creator must be a member of the new group")
    rng = rng or Entropy()
    st = st.copy()
    st.group = members
    _install_own_key(st, *keygen(st, rng))
    dists = _distribute(st)
    return ControlMsg(CREATE, st.me, tuple(members), tuple(members)), dists, st


def exec_add(new: UserId, st: UserState) -> tuple[ControlMsg, UserState]:
    _require_group(st)
    if new in st.group:
        raise StateError(f"{new} is already a member")
    st = st.copy()
    st.group.append(new)
    return ControlMsg(ADD, st.me, (new,), tuple(st.group)), st


def exec_remove(target: UserId, st: UserState) -> tuple[ControlMsg, UserState]:
    _require_group(st)
    if target not in st.group:
        raise StateError(f"{target} is not a member")
    if target == st.me:
        raise StateError("self-removal is not supported; another member must remove you")
    roster = tuple(u for u in st.group if u != target)
    T = ControlMsg(REMOVE, st.me, (target,), roster)
    return T, _apply_removal(st.copy(), target)


def _apply_removal(st: UserState, target: UserId) -> UserState:
    """Drop ``target`` and erase every sender key; mutates and returns ``st``."""
    if target == st.me:
        return UserState(me=st.me, nmax=st.nmax, entropy_pool=st.entropy_pool)
    st.group = [u for u in st.group if u != target]
    st.own_ssk = None
    st.own_sender_key = None
    st.peer_keys = {}
    st.skipped = {}
    st.distributed_to = set()
    st.sig_windows = {}
    log.debug("%s erase all sender keys after removal of %s", st.me, target)
    return st


def proc(T: ControlMsg, st: UserState) -> UserState:
    if T.kind in (CREATE, ADD) and not st.group and st.me in T.subjects:
        # joining: adopt the roster carried in the notification
        if st.me not in T.roster:
            raise ControlError("join notification does not list the joining member")
        st = st.copy()
        st.group = list(T.roster)
        return st
    if not st.group:
        raise ControlError(f"{st.me} has no group to apply {T.kind}")
    if T.actor == st.me:
        raise ControlError("own control message was applied at Exec time")
    if T.actor not in st.group:
        raise ControlError(f"actor {T.actor} is not a member")
    if T.kind == CREATE:
        raise ControlError("group already exists")
    if T.kind == ADD:
        dup = [u for u in T.subjects if u in st.group]
        if dup:
            raise ControlError(f"already members: {dup}")
        st = st.copy()
        st.group.extend(T.subjects)
        return st
    if T.kind == REMOVE:
        (target,) = T.subjects
        if target not in st.group:
            raise ControlError(f"{target} is not a member")
        return _apply_removal(st.copy(), target)
    raise ControlError(f"control kind {T.kind!r} is not supported by this protocol")


def proc_distribution(d: SenderKeyDistribution, st: UserState) -> UserState:
    if d.to != st.me:
        raise StateError(f"distribution addressed to {d.to}, not {st.me}")
    if d.sender not in st.group or d.sender == st.me:
        raise StateError(f"distribution from non-member {d.sender}")
    st = st.copy()
    st.peer_keys[d.sender] = d.key
    # chain restarts: stored keys from an older chain of this sender are useless
    st.skipped = {k: v for k, v in st.skipped.items() if k[0] != d.sender}
    st.sig_windows[d.sender] = SigWindow(current_from=d.key.ck.index)
    log.debug("%s install sender key %s of %s ck[%s]@%d", st.me, d.key.key_id, d.sender, d.sender, d.key.ck.index)
    return st


# --------------------------------------------------------------------------
# Send / Recv


def establish_sender_key(
    st: UserState, rng: Entropy | None = None, keygen: Keygen = baseline_keygen
) -> tuple[list[SenderKeyDistribution], UserState]:
    """Generate a sender key if missing and hand it to every member lacking it."""
    _require_group(st)
    st = st.copy()
    if st.own_sender_key is None:
        _install_own_key(st, *keygen(st, rng or Entropy()))
    return _distribute(st), st


def _seal(st: UserState, m: bytes) -> tuple[bytes, int]:
    """Encrypt under the next own message key and ratchet; mutates ``st``."""
    key = st.own_sender_key
    assert key is not None
    ck = key.ck
    mk = crypto.kdf_mk(ck)
    c = crypto.enc(mk, m)
    st.own_sender_key = replace(key, ck=crypto.kdf_ck(ck))
    if log.isEnabledFor(logging.DEBUG):
        who = st.me
        log.debug("%s derive mk[%s#%d] = %s", who, who, ck.index, mk.bytes.hex())
        log.debug("%s encrypt m[%s#%d] (%d bytes)", who, who, ck.index, len(m))
        log.debug("%s ratchet ck[%s] %d -> %d", who, who, ck.index, ck.index + 1)
        log.debug("%s erase mk[%s#%d]", who, who, ck.index)
    del mk
    return c, ck.index


def send(
    m: bytes,
    st: UserState,
    rng: Entropy | None = None,
    keygen: Keygen = baseline_keygen,
) -> tuple[Frame, list[SenderKeyDistribution], UserState]:
    _require_group(st)
    if st.me not in st.group:
        raise StateError(f"{st.me} is not a member")
    rng = rng or Entropy()
    dists, st = establish_sender_key(st, rng, keygen)
    c, i = _seal(st, m)
    payload = encode_signed(c, i, st.me)
    frame = Frame(c, i, st.me, crypto.sign(st.own_ssk, payload, rng(crypto.SIG_NONCE_SIZE)))
    log.debug("%s sign (c, %d, %s)", st.me, i, st.me)
    return frame, dists, st


def _sender_key(frame: Frame, st: UserState) -> SenderKey:
    if frame.sender == st.me or frame.sender not in st.group:
        raise UnknownSender(f"{st.me} does not accept frames from {frame.sender!r}")
    key = st.peer_keys.get(frame.sender)
    if key is None:
        raise PendingSenderKey(f"{st.me} has no sender key for {frame.sender} yet")
    return key


def _open(frame: Frame, st: UserState) -> bytes:
    """Index handling and decryption against the stored chain; mutates ``st``."""
    sender, i = frame.sender, frame.i
    key = st.peer_keys[sender]
    ck = key.ck
    j = ck.index
    if i < 0:
        raise MalformedFrame("negative index")
    if i >= j:
        need = i - j
        if need and st.skipped_for(sender) + need > st.nmax:
            raise SkippedCapacityExceeded(
                f"skipping {need} keys of {sender} exceeds capacity {st.nmax}"
            )
        while ck.index < i:
            st.skipped[(sender, ck.index)] = crypto.kdf_mk(ck)
            log.debug("%s store skipped mk[%s#%d]", st.me, sender, ck.index)
            ck = crypto.kdf_ck(ck)
        mk = crypto.kdf_mk(ck)
        if log.isEnabledFor(logging.DEBUG):
            log.debug("%s derive mk[%s#%d] = %s", st.me, sender, i, mk.bytes.hex())
        ck = crypto.kdf_ck(ck)
    else:
        mk = st.skipped.pop((sender, i), None)
        if mk is None:
            raise SkippedKeyMissing(f"no message key for {sender}#{i}")
        if log.isEnabledFor(logging.DEBUG):
            log.debug("%s use skipped mk[%s#%d] = %s", st.me, sender, i, mk.bytes.hex())
    try:
        m = crypto.dec(mk, frame.c)
    except crypto.DecryptionError as exc:
        raise DecryptionFailure(str(exc)) from exc
    log.debug("%s decrypt m[%s#%d]", st.me, sender, i)
    log.debug("%s erase mk[%s#%d]", st.me, sender, i)
    if ck.index != j:
        log.debug("%s ratchet ck[%s] %d -> %d", st.me, sender, j, ck.index)
    st.peer_keys[sender] = replace(key, ck=ck)
    return m


def recv(frame: Frame, st: UserState) -> tuple[bytes, UserState]:
    """Verify and decrypt ``frame``; raises a ``RecvError`` subclass on refusal."""
    key = _sender_key(frame, st)
    if not crypto.verify(key.spk, frame.sigma, frame.signed_payload()):
        raise SignatureInvalid(f"bad signature on {frame.sender}#{frame.i}")
    log.debug("%s verify sigma of %s#%d ok", st.me, frame.sender, frame.i)
    st = st.copy()
    return _open(frame, st), st


# --------------------------------------------------------------------------
# serialization


class _Writer:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def raw(self, b: bytes) -> None:
        self._parts.append(b)

    def u8(self, v: int) -> None:
        self._parts.append(struct.pack(">B", v))

    def u32(self, v: int) -> None:
        self._parts.append(struct.pack(">I", v))

    def u64(self, v: int, signed: bool = False) -> None:
        self._parts.append(struct.pack(">q" if signed else ">Q", v))

    def bytes(self, b: bytes) -> None:
        self.u32(len(b))
        self._parts.append(b)

    def str(self, s: str) -> None:
        self.bytes(s.encode("utf-8"))

    def strs(self, items: Iterable[str]) -> None:
        items = list(items)
        self.u32(len(items))
        for s in items:
            self.str(s)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise ValueError("truncated input")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self, signed: bool = False) -> int:
        return struct.unpack(">q" if signed else ">Q", self._take(8))[0]

    def bytes(self) -> bytes:
        return self._take(self.u32())

    def str(self) -> str:
        return self.bytes().decode("utf-8")

    def strs(self) -> list[str]:
        return [self.str() for _ in range(self.u32())]

    def done(self) -> None:
        if self._pos != len(self._data):
            raise ValueError("trailing bytes")


STATE_MAGIC = b"SKS1"


def _write_sender_key(w: _Writer, key: SenderKey) -> None:
    w.bytes(key.spk)
    w.bytes(key.ck.bytes)
    w.u64(key.ck.index)
    w.str(key.key_id)


def _read_sender_key(r: _Reader) -> SenderKey:
    spk = r.bytes()
    ck = ChainKey(r.bytes(), r.u64())
    return SenderKey(spk, ck, r.str())


def serialize_state(st: UserState) -> bytes:
    """Deterministic encoding of a full state, secrets included.

    Layout: magic ``SKS1``; me; nmax (u32); roster in group order;
    entropy_pool; own key (u8 flag, ssk, sender key); distributed_to sorted;
    peer keys sorted by id; skipped keys sorted by (sender, index); signature
    windows sorted by id. Strings and byte strings are u32 length-prefixed,
    a sender key is ``spk || ck || u64 index || key_id``.
    """
    w = _Writer()
    w.raw(STATE_MAGIC)
    w.str(st.me)
    w.u32(st.nmax)
    w.strs(st.group)
    w.bytes(st.entropy_pool)
    if st.own_sender_key is None:
        w.u8(0)
    else:
        w.u8(1)
        w.bytes(st.own_ssk or b"")
        _write_sender_key(w, st.own_sender_key)
    w.strs(sorted(st.distributed_to))
    w.u32(len(st.peer_keys))
    for uid in sorted(st.peer_keys):
        w.str(uid)
        _write_sender_key(w, st.peer_keys[uid])
    w.u32(len(st.skipped))
    for sender, idx in sorted(st.skipped):
        w.str(sender)
        w.u64(idx)
        w.bytes(st.skipped[(sender, idx)].bytes)
    w.u32(len(st.sig_windows))
    for uid in sorted(st.sig_windows):
        win = st.sig_windows[uid]
        w.str(uid)
        w.u64(win.current_from)
        if win.prev_spk is None:
            w.u8(0)
        else:
            w.u8(1)
            w.bytes(win.prev_spk)
            w.u64(win.prev_lo)
            w.u64(win.prev_hi)
    return w.getvalue()


def deserialize_state(data: bytes) -> UserState:
    r = _Reader(data)
    if r._take(4) != STATE_MAGIC:
        raise ValueError("not a serialized user state")
    st = UserState(me=r.str(), nmax=r.u32())
    st.group = r.strs()
    st.entropy_pool = r.bytes()
    if r.u8():
        st.own_ssk = r.bytes()
        st.own_sender_key = _read_sender_key(r)
    st.distributed_to = set(r.strs())
    for _ in range(r.u32()):
        uid = r.str()
        st.peer_keys[uid] = _read_sender_key(r)
    for _ in range(r.u32()):
        sender = r.str()
        idx = r.u64()
        st.skipped[(sender, idx)] = MessageKey(r.bytes(), idx)
    for _ in range(r.u32()):
        uid = r.str()
        win = SigWindow(current_from=r.u64())
        if r.u8():
            win.prev_spk = r.bytes()
            win.prev_lo = r.u64()
            win.prev_hi = r.u64()
        st.sig_windows[uid] = win
    r.done()
    return st


def secret_material(st: UserState) -> bytes:
    """Secret fields only, in serialization order; input to hardened key generation."""
    w = _Writer()
    w.bytes(st.entropy_pool)
    w.bytes(st.own_ssk or b"")
    w.bytes(st.own_sender_key.ck.bytes if st.own_sender_key else b"")
    for uid in sorted(st.peer_keys):
        w.bytes(st.peer_keys[uid].ck.bytes)
    for k in sorted(st.skipped):
        w.bytes(st.skipped[k].bytes)
    return w.getvalue()


def has_secrets(st: UserState) -> bool:
    return bool(st.entropy_pool or st.own_ssk or st.peer_keys or st.skipped)
