"""Protocol configurations behind one interface.

``SenderKeysProtocol`` is the plain protocol from ``core``. Subclasses swap
pieces of it:

* ``SigRatchetProtocol`` rotates the signing key with every message (or
  every ``block_size`` messages). Each frame carries the next verification
  key inside the signed payload.
* ``HardenedRandProtocol`` hashes fresh randomness together with the
  secrets already in the state before deriving keys, so pinned device
  randomness alone does not determine new keys.
* ``CombinedProtocol`` does both.
* ``SingleChainProtocol`` has the whole group share one chain; the server
  rejects a second frame that claims an index already taken.

All of them also support ``exec_update``: a member replaces its own sender
key without any membership change.
"""

from __future__ import annotations

import copy
import enum
import hashlib
import logging
from dataclasses import dataclass, field, replace

from . import core, crypto
from .core import (
    ADD,
    CREATE,
    REMOVE,
    UPDATE,
    ControlError,
    ControlMsg,
    Frame,
    PendingSenderKey,
    SenderKey,
    SenderKeyDistribution,
    SignatureInvalid,
    SigWindow,
    StaleSignatureKey,
    StateError,
    UnknownSender,
    UserId,
    UserState,
)
from .crypto import ChainKey, MessageKey
from .entropy import Entropy
from .transport import Payload, Rejected

log = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    BASELINE = "baseline"
    SIG_RATCHET = "sig-ratchet"
    HARDENED_RAND = "hardened-rand"
    SINGLE_CHAIN = "single-chain"
    COMBINED = "combined"


# --------------------------------------------------------------------------
# hardened key generation


def mix_seed(rand: bytes, state_digest: bytes) -> bytes:
    return hashlib.sha256(b"hardened-seed" + rand + state_digest).digest()


def hardened_seed(rand: bytes, st) -> bytes:
    """``H(rand || digest(secrets))``, or ``rand`` alone when the state holds no secret."""
    if not st_has_secrets(st):
        return rand
    return mix_seed(rand, hashlib.sha256(st_secret_material(st)).digest())


def hardened_keygen(rand: bytes, st) -> tuple[SenderKey, bytes]:
    return core.generate_sender_key(hardened_seed(rand, st))


def st_has_secrets(st) -> bool:
    if isinstance(st, SingleChainState):
        return bool(st.entropy_pool or st.chain or st.own_ssk or st.skipped)
    return core.has_secrets(st)


def st_secret_material(st) -> bytes:
    if isinstance(st, SingleChainState):
        return serialize_single_chain(st, secrets_only=True)
    return core.secret_material(st)


def _absorb(st) -> None:
    st.entropy_pool = hashlib.sha256(b"absorb" + st_secret_material(st)).digest()


# --------------------------------------------------------------------------
# multi-chain protocols


class SenderKeysProtocol:
    """The unmodified protocol, as the game harness sees it."""

    variant = Variant.BASELINE
    hardened = False

    def __init__(self, nmax: int = core.DEFAULT_NMAX):
        self.nmax = nmax

    # key material ----------------------------------------------------------

    def fresh_seed(self, st, rng: Entropy) -> bytes:
        rand = rng(crypto.KEY_SIZE)
        if not self.hardened:
            return rand
        seed = hardened_seed(rand, st)
        st.entropy_pool = hashlib.sha256(b"pool" + st.entropy_pool + seed).digest()
        return seed

    def keygen(self, st: UserState, rng: Entropy) -> tuple[SenderKey, bytes]:
        return core.generate_sender_key(self.fresh_seed(st, rng))

    # Init / Exec / Proc ----------------------------------------------------

    def init(self, uid: UserId) -> UserState:
        return core.init(uid, self.nmax)

    def exec_create(self, members, st, rng):
        return core.exec_create(members, st, rng, self.keygen)

    def exec_add(self, new, st, rng):
        T, st = core.exec_add(new, st)
        return T, [], st

    def exec_remove(self, target, st, rng):
        if self.hardened and target in st.group and target != st.me:
            st = st.copy()
            _absorb(st)
        T, st = core.exec_remove(target, st)
        return T, [], st

    def exec_update(self, st, rng):
        """Replace the caller's sender key and send it to every other member."""
        if not st.group:
            raise StateError(f"{st.me} is not in a group")
        st = st.copy()
        # keygen sees the old secrets, which matters in hardened mode
        core._install_own_key(st, *self.keygen(st, rng))
        dists = core._distribute(st)
        T = ControlMsg(UPDATE, st.me, (st.me,), tuple(st.group), key_id=st.own_sender_key.key_id)
        return T, dists, st

    def proc(self, T: ControlMsg, st: UserState) -> UserState:
        if T.kind == UPDATE:
            if not st.group or T.actor not in st.group:
                raise ControlError(f"update from non-member {T.actor}")
            if T.actor == st.me:
                raise ControlError("own control message was applied at Exec time")
            st = st.copy()
            current = st.peer_keys.get(T.actor)
            if current is not None and current.key_id == T.key_id:
                # the replacement overtook the notice and is already installed
                return st
            old = st.peer_keys.pop(T.actor, None)
            st.skipped = {k: v for k, v in st.skipped.items() if k[0] != T.actor}
            st.sig_windows.pop(T.actor, None)
            log.debug("%s drop sender key of %s after update", st.me, T.actor)
            if old is not None and self.hardened:
                _absorb(st)
            return st
        if T.kind == REMOVE and self.hardened and st.group and T.actor in st.group:
            st = st.copy()
            _absorb(st)
        return core.proc(T, st)

    def proc_distribution(self, d, st):
        return core.proc_distribution(d, st)

    # Send / Recv -------------------------------------------------------------

    def establish(self, st, rng):
        return core.establish_sender_key(st, rng, self.keygen)

    def send(self, m: bytes, st, rng):
        return core.send(m, st, rng, self.keygen)

    def confirm(self, frame: Frame, st, accepted: bool):
        return st

    def recv(self, frame: Frame, st):
        return core.recv(frame, st)

    def make_frame(self, c: bytes, i: int, sender: UserId, ssk: bytes, rng: Entropy) -> Frame:
        """Build and sign a frame the way this variant's senders would (used by attackers)."""
        payload = core.encode_signed(c, i, sender)
        return Frame(c, i, sender, crypto.sign(ssk, payload, rng(crypto.SIG_NONCE_SIZE)))

    def admission(self):
        return None

    # inspection ------------------------------------------------------------

    def serialize(self, st) -> bytes:
        return core.serialize_state(st)

    def deserialize(self, data: bytes):
        return core.deserialize_state(data)

    def signing_key(self, st) -> bytes | None:
        return st.own_ssk

    def own_chain(self, st) -> tuple[str, ChainKey] | None:
        if st.own_sender_key is None:
            return None
        return st.own_sender_key.key_id, st.own_sender_key.ck

    def chain_owner(self, st, key_id: str) -> UserId | None:
        if st.own_sender_key is not None and st.own_sender_key.key_id == key_id:
            return st.me
        for uid, key in st.peer_keys.items():
            if key.key_id == key_id:
                return uid
        return None

    def reach(self, st) -> dict[str, tuple[int, frozenset[int]]]:
        """Per chain held in ``st``: next derivable index and stored skipped indices."""
        out = {}
        if st.own_sender_key is not None:
            out[st.own_sender_key.key_id] = (st.own_sender_key.ck.index, frozenset())
        for uid, key in st.peer_keys.items():
            skipped = frozenset(i for (s, i) in st.skipped if s == uid)
            out[key.key_id] = (key.ck.index, skipped)
        return out

    def derivable_mk(self, st, key_id: str, index: int) -> MessageKey | None:
        """The message key at ``index`` of chain ``key_id`` if ``st`` can produce it.

        Future keys are derived from a copy of the chain; past keys only
        come from the skipped store.
        """
        chains = []
        if st.own_sender_key is not None:
            chains.append((st.me, st.own_sender_key))
        chains.extend(st.peer_keys.items())
        for owner, key in chains:
            if key.key_id != key_id:
                continue
            ck = key.ck
            if index >= ck.index:
                while ck.index < index:
                    ck = crypto.kdf_ck(ck)
                return crypto.kdf_mk(ck)
            return st.skipped.get((owner, index))
        return None


class SigRatchetProtocol(SenderKeysProtocol):
    """Signing keys form a chain: every frame announces and hands over to the next one."""

    variant = Variant.SIG_RATCHET

    def __init__(self, nmax: int = core.DEFAULT_NMAX, block_size: int = 1):
        super().__init__(nmax)
        if block_size < 1:
            raise ValueError("block_size must be at least 1")
        self.block_size = block_size

    def send(self, m: bytes, st, rng):
        core._require_group(st)
        dists, st = core.establish_sender_key(st, rng, self.keygen)
        c, i = core._seal(st, m)
        rotate = (i + 1) % self.block_size == 0
        if rotate:
            nxt = crypto.sig_gen(self.fresh_seed(st, rng))
            next_spk = nxt.public
        else:
            next_spk = st.own_sender_key.spk
        payload = core.encode_signed(c, i, st.me, next_spk)
        frame = Frame(c, i, st.me, crypto.sign(st.own_ssk, payload, rng(crypto.SIG_NONCE_SIZE)), next_spk)
        if rotate:
            st.own_ssk = nxt.secret
            st.own_sender_key = replace(st.own_sender_key, spk=nxt.public)
            log.debug("%s replace signing key after #%d", st.me, i)
        return frame, dists, st

    def recv(self, frame: Frame, st):
        key = core._sender_key(frame, st)
        if frame.next_spk is None:
            raise SignatureInvalid("frame does not announce a next signature key")
        win = st.sig_windows.get(frame.sender) or SigWindow(current_from=key.ck.index)
        payload = frame.signed_payload()
        if frame.i >= win.current_from:
            if not crypto.verify(key.spk, frame.sigma, payload):
                if frame.i > key.ck.index:
                    raise StaleSignatureKey(
                        f"{frame.sender}#{frame.i} may be signed by a key not yet announced"
                    )
                raise SignatureInvalid(f"bad signature on {frame.sender}#{frame.i}")
            current = True
        elif win.prev_spk is not None and win.prev_lo <= frame.i <= win.prev_hi:
            if not crypto.verify(win.prev_spk, frame.sigma, payload):
                raise SignatureInvalid(f"bad signature on {frame.sender}#{frame.i}")
            current = False
        else:
            raise StaleSignatureKey(f"no signature key kept for {frame.sender}#{frame.i}")
        st = st.copy()
        m = core._open(frame, st)
        if current and frame.next_spk != key.spk:
            win = SigWindow(frame.i + 1, key.spk, win.current_from, frame.i)
            st.peer_keys[frame.sender] = replace(st.peer_keys[frame.sender], spk=frame.next_spk)
            log.debug("%s rotate verification key of %s from #%d", st.me, frame.sender, frame.i + 1)
        st.sig_windows[frame.sender] = copy.copy(win)
        return m, st

    def make_frame(self, c, i, sender, ssk, rng, next_spk: bytes | None = None):
        if next_spk is None:
            next_spk = crypto.sig_gen(rng(crypto.KEY_SIZE)).public
        payload = core.encode_signed(c, i, sender, next_spk)
        return Frame(c, i, sender, crypto.sign(ssk, payload, rng(crypto.SIG_NONCE_SIZE)), next_spk)


class HardenedRandProtocol(SenderKeysProtocol):
    variant = Variant.HARDENED_RAND
    hardened = True


class CombinedProtocol(SigRatchetProtocol):
    variant = Variant.COMBINED
    hardened = True


# --------------------------------------------------------------------------
# single shared chain


@dataclass(frozen=True)
class ChainDistribution:
    """Signature key announcement, optionally carrying the shared chain."""

    sender: UserId
    to: UserId
    spk: bytes
    chain: ChainKey | None = None
    chain_id: str = ""
    epoch: int = 0


@dataclass
class SingleChainState:
    me: UserId
    nmax: int = core.DEFAULT_NMAX
    group: list[UserId] = field(default_factory=list)
    chain: ChainKey | None = None
    chain_id: str = ""
    chain_epoch: int = 0
    epoch: int = 0
    own_ssk: bytes | None = None
    own_spk: bytes | None = None
    spks: dict[UserId, bytes] = field(default_factory=dict)
    announced_to: set[UserId] = field(default_factory=set)
    skipped: dict[int, MessageKey] = field(default_factory=dict)
    pending: int | None = None
    entropy_pool: bytes = b""

    def copy(self) -> SingleChainState:
        return copy.deepcopy(self)


def serialize_single_chain(st: SingleChainState, secrets_only: bool = False) -> bytes:
    """Layout: magic ``SKC1``; me; nmax; roster; entropy_pool; chain (flag,
    bytes, index, id, epoch); own ssk; skipped (count, then index and key)
    sorted by index; epoch; own spk; spks sorted; announced_to sorted;
    pending (signed, -1 for none).

    ``secrets_only`` keeps just the secret fields, for hardened key mixing.
    """
    w = core._Writer()
    if not secrets_only:
        w.raw(b"SKC1")
        w.str(st.me)
        w.u32(st.nmax)
        w.strs(st.group)
    w.bytes(st.entropy_pool)
    if st.chain is None:
        w.u8(0)
    else:
        w.u8(1)
        w.bytes(st.chain.bytes)
        w.u64(st.chain.index)
        if not secrets_only:
            w.str(st.chain_id)
            w.u64(st.chain_epoch)
    w.bytes(st.own_ssk or b"")
    w.u32(len(st.skipped))
    for idx in sorted(st.skipped):
        if not secrets_only:
            w.u64(idx)
        w.bytes(st.skipped[idx].bytes)
    if secrets_only:
        return w.getvalue()
    w.u64(st.epoch)
    w.bytes(st.own_spk or b"")
    w.u32(len(st.spks))
    for uid in sorted(st.spks):
        w.str(uid)
        w.bytes(st.spks[uid])
    w.strs(sorted(st.announced_to))
    w.u64(-1 if st.pending is None else st.pending, signed=True)
    return w.getvalue()


def deserialize_single_chain(data: bytes) -> SingleChainState:
    r = core._Reader(data)
    if r._take(4) != b"SKC1":
        raise ValueError("not a serialized single-chain state")
    st = SingleChainState(me=r.str(), nmax=r.u32())
    st.group = r.strs()
    st.entropy_pool = r.bytes()
    if r.u8():
        st.chain = ChainKey(r.bytes(), r.u64())
        st.chain_id = r.str()
        st.chain_epoch = r.u64()
    st.own_ssk = r.bytes() or None
    for _ in range(r.u32()):
        idx = r.u64()
        st.skipped[idx] = MessageKey(r.bytes(), idx)
    st.epoch = r.u64()
    st.own_spk = r.bytes() or None
    for _ in range(r.u32()):
        uid = r.str()
        st.spks[uid] = r.bytes()
    st.announced_to = set(r.strs())
    pending = r.u64(signed=True)
    st.pending = None if pending < 0 else pending
    r.done()
    return st


class IndexClaims:
    """Server admission rule for the shared chain: first frame per index wins."""

    def __init__(self) -> None:
        self.claimed: set[int] = set()

    def __call__(self, payload: Payload) -> None:
        if isinstance(payload, ControlMsg):
            if payload.kind == REMOVE:
                self.claimed.clear()
            return
        if payload.i in self.claimed:
            raise Rejected(f"index {payload.i} already claimed; retransmit")
        self.claimed.add(payload.i)


def _chain_id(chain: ChainKey) -> str:
    return hashlib.sha256(b"chain-id" + chain.bytes).hexdigest()[:16]


class SingleChainProtocol(SenderKeysProtocol):
    """Whole group on one symmetric chain; constant secret state per member.

    A sender does not ratchet the shared chain when it sends: it waits for
    the server's verdict (``confirm``). A rejected sender first receives the
    winning frame, then sends again at the next index.
    """

    variant = Variant.SINGLE_CHAIN

    def init(self, uid):
        if not uid:
            raise ValueError("user id must be non-empty")
        return SingleChainState(me=uid, nmax=self.nmax)

    def _fresh_chain(self, st, rng) -> ChainKey:
        chain = ChainKey(self.fresh_seed(st, rng), 0)
        st.chain, st.chain_id, st.chain_epoch, st.skipped = chain, _chain_id(chain), st.epoch, {}
        return chain

    def _ensure_sig(self, st, rng) -> None:
        if st.own_ssk is None:
            pair = crypto.sig_gen(self.fresh_seed(st, rng))
            st.own_ssk, st.own_spk = pair.secret, pair.public
            st.spks[st.me] = pair.public
            st.announced_to = set()

    def _announce(self, st, with_chain: bool = False) -> list[ChainDistribution]:
        out = []
        for uid in st.group:
            if uid != st.me and (with_chain or uid not in st.announced_to):
                out.append(ChainDistribution(
                    st.me, uid, st.own_spk,
                    st.chain if with_chain else None,
                    st.chain_id if with_chain else "",
                    st.chain_epoch,
                ))
                st.announced_to.add(uid)
        return out

    def exec_create(self, members, st, rng):
        members = list(dict.fromkeys(members))
        if st.group:
            raise StateError(f"{st.me} already has a group")
        if st.me not in members:
            raise StateError("creator must be a member of the new group")
        st = st.copy()
        st.group = members
        self._ensure_sig(st, rng)
        self._fresh_chain(st, rng)
        dists = self._announce(st, with_chain=True)
        return ControlMsg(CREATE, st.me, tuple(members), tuple(members)), dists, st

    def exec_add(self, new, st, rng):
        if not st.group:
            raise StateError(f"{st.me} is not in a group")
        if new in st.group:
            raise StateError(f"{new} is already a member")
        st = st.copy()
        st.group.append(new)
        self._ensure_sig(st, rng)
        dist = ChainDistribution(st.me, new, st.own_spk, st.chain, st.chain_id, st.chain_epoch)
        st.announced_to.add(new)
        return ControlMsg(ADD, st.me, (new,), tuple(st.group)), [dist], st

    def exec_remove(self, target, st, rng):
        if not st.group:
            raise StateError(f"{st.me} is not in a group")
        if target not in st.group or target == st.me:
            raise StateError(f"cannot remove {target}")
        st = st.copy()
        if self.hardened:
            _absorb(st)
        st.group = [u for u in st.group if u != target]
        st.spks.pop(target, None)
        st.epoch += 1
        st.pending = None
        self._ensure_sig(st, rng)
        self._fresh_chain(st, rng)
        dists = self._announce(st, with_chain=True)
        return ControlMsg(REMOVE, st.me, (target,), tuple(st.group)), dists, st

    def exec_update(self, st, rng):
        raise StateError("update is not defined for the single-chain mode")

    def proc(self, T, st):
        if T.kind in (CREATE, ADD) and not st.group and st.me in T.subjects:
            st = st.copy()
            st.group = list(T.roster)
            return st
        if not st.group:
            raise ControlError(f"{st.me} has no group to apply {T.kind}")
        if T.actor == st.me:
            raise ControlError("own control message was applied at Exec time")
        if T.actor not in st.group:
            raise ControlError(f"actor {T.actor} is not a member")
        st = st.copy()
        if T.kind == ADD:
            if any(u in st.group for u in T.subjects):
                raise ControlError("already a member")
            st.group.extend(T.subjects)
            return st
        if T.kind == REMOVE:
            (target,) = T.subjects
            if target not in st.group:
                raise ControlError(f"{target} is not a member")
            if target == st.me:
                return SingleChainState(me=st.me, nmax=st.nmax, entropy_pool=st.entropy_pool)
            if self.hardened:
                _absorb(st)
            st.group = [u for u in st.group if u != target]
            st.spks.pop(target, None)
            st.epoch += 1
            st.pending = None
            if st.chain_epoch < st.epoch:
                st.chain, st.chain_id, st.skipped = None, "", {}
            return st
        raise ControlError(f"control kind {T.kind!r} is not supported by this protocol")

    def proc_distribution(self, d, st):
        if d.to != st.me:
            raise StateError(f"distribution addressed to {d.to}, not {st.me}")
        if d.sender not in st.group or d.sender == st.me:
            raise StateError(f"distribution from non-member {d.sender}")
        st = st.copy()
        st.spks[d.sender] = d.spk
        if d.chain is not None and (st.chain is None or d.epoch >= st.chain_epoch):
            st.chain, st.chain_id, st.chain_epoch, st.skipped = d.chain, d.chain_id, d.epoch, {}
        return st

    def establish(self, st, rng):
        if not st.group:
            raise StateError(f"{st.me} is not in a group")
        st = st.copy()
        self._ensure_sig(st, rng)
        return self._announce(st), st

    def send(self, m, st, rng):
        if not st.group or st.me not in st.group:
            raise StateError(f"{st.me} is not in a group")
        if st.chain is None:
            raise StateError(f"{st.me} has not received the group chain yet")
        dists, st = self.establish(st, rng)
        mk = crypto.kdf_mk(st.chain)
        c = crypto.enc(mk, m)
        i = st.chain.index
        payload = core.encode_signed(c, i, st.me)
        st.pending = i
        return Frame(c, i, st.me, crypto.sign(st.own_ssk, payload, rng(crypto.SIG_NONCE_SIZE))), dists, st

    def confirm(self, frame, st, accepted):
        st = st.copy()
        if accepted and st.pending == frame.i and st.chain is not None and st.chain.index == frame.i:
            st.chain = crypto.kdf_ck(st.chain)
        st.pending = None
        return st

    def recv(self, frame, st):
        if frame.sender == st.me or frame.sender not in st.group:
            raise UnknownSender(f"{st.me} does not accept frames from {frame.sender!r}")
        spk = st.spks.get(frame.sender)
        if spk is None or st.chain is None:
            raise PendingSenderKey(f"{st.me} lacks keys for {frame.sender}")
        if not crypto.verify(spk, frame.sigma, frame.signed_payload()):
            raise SignatureInvalid(f"bad signature on {frame.sender}#{frame.i}")
        st = st.copy()
        chain = st.chain
        i = frame.i
        if i >= chain.index:
            need = i - chain.index
            if len(st.skipped) + need > st.nmax:
                raise core.SkippedCapacityExceeded(f"skipping {need} keys exceeds capacity {st.nmax}")
            while chain.index < i:
                st.skipped[chain.index] = crypto.kdf_mk(chain)
                chain = crypto.kdf_ck(chain)
            mk = crypto.kdf_mk(chain)
            chain = crypto.kdf_ck(chain)
        else:
            mk = st.skipped.pop(i, None)
            if mk is None:
                raise core.SkippedKeyMissing(f"no message key for #{i}")
        try:
            m = crypto.dec(mk, frame.c)
        except crypto.DecryptionError as exc:
            raise core.DecryptionFailure(str(exc)) from exc
        st.chain = chain
        if st.pending is not None and st.pending < chain.index:
            st.pending = None
        return m, st

    def admission(self):
        return IndexClaims()

    def serialize(self, st):
        return serialize_single_chain(st)

    def deserialize(self, data):
        return deserialize_single_chain(data)

    def own_chain(self, st):
        if st.chain is None:
            return None
        return st.chain_id, st.chain

    def chain_owner(self, st, key_id):
        return "*" if st.chain_id == key_id else None

    def reach(self, st):
        if st.chain is None:
            return {}
        return {st.chain_id: (st.chain.index, frozenset(st.skipped))}

    def derivable_mk(self, st, key_id, index):
        if st.chain is None or st.chain_id != key_id:
            return None
        ck = st.chain
        if index >= ck.index:
            while ck.index < index:
                ck = crypto.kdf_ck(ck)
            return crypto.kdf_mk(ck)
        return st.skipped.get(index)


def make_protocol(variant: Variant | str, nmax: int = core.DEFAULT_NMAX, block_size: int = 1) -> SenderKeysProtocol:
    variant = Variant(variant)
    if variant is Variant.BASELINE:
        return SenderKeysProtocol(nmax)
    if variant is Variant.SIG_RATCHET:
        return SigRatchetProtocol(nmax, block_size)
    if variant is Variant.HARDENED_RAND:
        return HardenedRandProtocol(nmax)
    if variant is Variant.COMBINED:
        return CombinedProtocol(nmax, block_size)
    return SingleChainProtocol(nmax)
