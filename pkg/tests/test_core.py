"""Protocol state machine: group operations, send/receive, erasure and serialization."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from senderkeys import core, crypto
from senderkeys.core import ControlMsg, Frame
from senderkeys.entropy import Entropy

import oracles


def make_group(*uids, nmax=core.DEFAULT_NMAX):
    """Everybody created, joined and holding everyone's sender key."""
    rngs = {u: Entropy.seeded("core-test", u) for u in uids}
    states = {u: core.init(u, nmax) for u in uids}
    T, dists, states[uids[0]] = core.exec_create(uids, states[uids[0]], rngs[uids[0]])
    for u in uids[1:]:
        states[u] = core.proc(T, states[u])
    pending = list(dists)
    for u in uids[1:]:
        d, states[u] = core.establish_sender_key(states[u], rngs[u])
        pending += d
    for d in pending:
        states[d.to] = core.proc_distribution(d, states[d.to])
    return states, rngs


def send(states, rngs, uid, m):
    frame, dists, states[uid] = core.send(m, states[uid], rngs[uid])
    for d in dists:
        states[d.to] = core.proc_distribution(d, states[d.to])
    return frame


def secrets_in(st):
    return core.serialize_state(st)


# ---------------------------------------------------------------- group ops


def test_create_gives_everyone_the_roster():
    states, _ = make_group("A", "B", "C")
    assert all(s.group == ["A", "B", "C"] for s in states.values())
    assert states["A"].peer_keys.keys() == {"B", "C"}


def test_create_twice_is_an_error():
    states, _ = make_group("A", "B")
    with pytest.raises(core.StateError):
        core.exec_create(["A", "B"], states["A"])


def test_creator_must_be_member():
    with pytest.raises(core.StateError):
        core.exec_create(["B"], core.init("A"))


def test_add_then_process():
    states, rngs = make_group("A", "B")
    states["C"] = core.init("C")
    T, states["A"] = core.exec_add("C", states["A"])
    states["B"] = core.proc(T, states["B"])
    states["C"] = core.proc(T, states["C"])
    assert states["A"].group == states["B"].group == states["C"].group == ["A", "B", "C"]
    # lazy distribution: A's next send hands C the key
    rngs["C"] = Entropy.seeded("C")
    frame = send(states, rngs, "A", b"welcome")
    m, states["C"] = core.recv(frame, states["C"])
    assert m == b"welcome"


def test_add_existing_member_rejected():
    states, _ = make_group("A", "B")
    with pytest.raises(core.StateError):
        core.exec_add("B", states["A"])


def test_duplicate_control_rejected_and_state_untouched():
    states, _ = make_group("A", "B", "C")
    states["D"] = core.init("D")
    T, states["A"] = core.exec_add("D", states["A"])
    states["B"] = core.proc(T, states["B"])
    before = core.serialize_state(states["B"])
    with pytest.raises(core.ControlError):
        core.proc(T, states["B"])
    assert core.serialize_state(states["B"]) == before


def test_remove_non_member_rejected():
    states, _ = make_group("A", "B")
    with pytest.raises(core.StateError):
        core.exec_remove("Z", states["A"])


def test_self_removal_rejected():
    states, _ = make_group("A", "B")
    with pytest.raises(core.StateError):
        core.exec_remove("A", states["A"])


def test_removed_member_is_reset():
    states, _ = make_group("A", "B", "C")
    T, states["A"] = core.exec_remove("C", states["A"])
    states["C"] = core.proc(T, states["C"])
    assert states["C"].group == [] and states["C"].own_sender_key is None
    assert not states["C"].peer_keys


def test_control_from_non_member_rejected():
    states, _ = make_group("A", "B")
    T = ControlMsg(core.REMOVE, "Mallory", ("B",), ("A",))
    with pytest.raises(core.ControlError):
        core.proc(T, states["A"])


def test_control_roundtrip_bytes():
    T = ControlMsg(core.ADD, "A", ("D",), ("A", "B", "D"), 7)
    assert ControlMsg.from_bytes(T.to_bytes()) == T
    with pytest.raises(core.ControlError):
        ControlMsg.from_bytes(b"X" + T.to_bytes()[1:])


# ----------------------------------------------------------- send and receive


def test_three_sends_advance_index():
    states, rngs = make_group("A", "B")
    frames = [send(states, rngs, "A", b"m%d" % k) for k in range(3)]
    assert [f.i for f in frames] == [0, 1, 2]
    assert states["A"].own_sender_key.ck.index == 3


def test_send_without_group_fails():
    with pytest.raises(core.StateError):
        core.send(b"x", core.init("A"))


def test_in_order_delivery_and_erasure():
    states, rngs = make_group("A", "B")
    for k in range(3):
        f = send(states, rngs, "A", b"msg %d" % k)
        m, states["B"] = core.recv(f, states["B"])
        assert m == b"msg %d" % k
    assert states["B"].peer_keys["A"].ck.index == 3
    assert not states["B"].skipped


def test_out_of_order_uses_skipped_store():
    states, rngs = make_group("A", "B")
    frames = [send(states, rngs, "A", b"m%d" % k) for k in range(6)]
    for i in (0, 2, 5, 1, 4, 3):
        m, states["B"] = core.recv(frames[i], states["B"])
        assert m == b"m%d" % i
        assert len(states["B"].skipped) <= states["B"].nmax
    assert not states["B"].skipped


def test_replay_fails_with_state_unchanged():
    states, rngs = make_group("A", "B")
    f = send(states, rngs, "A", b"once")
    _, states["B"] = core.recv(f, states["B"])
    before = core.serialize_state(states["B"])
    with pytest.raises(core.SkippedKeyMissing):
        core.recv(f, states["B"])
    assert core.serialize_state(states["B"]) == before


def test_capacity_exceeded():
    states, rngs = make_group("A", "B", nmax=3)
    frames = [send(states, rngs, "A", b"m") for _ in range(6)]
    with pytest.raises(core.SkippedCapacityExceeded):
        core.recv(frames[4], states["B"])
    _, states["B"] = core.recv(frames[3], states["B"])
    assert len(states["B"].skipped) == 3


def test_capacity_zero_means_in_order_only():
    states, rngs = make_group("A", "B", nmax=0)
    f0, f1 = (send(states, rngs, "A", b"m") for _ in range(2))
    with pytest.raises(core.SkippedCapacityExceeded):
        core.recv(f1, states["B"])
    _, states["B"] = core.recv(f0, states["B"])


def test_unknown_sender_and_pending_key():
    states, rngs = make_group("A", "B")
    f = send(states, rngs, "A", b"x")
    with pytest.raises(core.UnknownSender):
        core.recv(Frame(f.c, f.i, "Z", f.sigma), states["B"])
    lonely = core.init("B")
    lonely.group = ["A", "B"]
    with pytest.raises(core.PendingSenderKey):
        core.recv(f, lonely)


def test_tampering_detected():
    states, rngs = make_group("A", "B")
    f = send(states, rngs, "A", b"hello")
    flipped = bytes([f.c[0] ^ 1]) + f.c[1:]
    for bad in (Frame(flipped, f.i, f.sender, f.sigma), Frame(f.c, f.i + 1, f.sender, f.sigma)):
        with pytest.raises(core.SignatureInvalid):
            core.recv(bad, states["B"])


def test_decryption_failure_code():
    states, rngs = make_group("A", "B")
    f = send(states, rngs, "A", b"hello")
    key = states["A"].own_ssk
    junk = b"\x00" * 16
    forged = Frame(junk, f.i, "A", crypto.sign(key, core.encode_signed(junk, f.i, "A")))
    with pytest.raises(core.DecryptionFailure) as info:
        core.recv(forged, states["B"])
    assert info.value.code == "decryption-failure"


def test_frame_bytes_roundtrip_and_malformed():
    states, rngs = make_group("A", "B")
    f = send(states, rngs, "A", b"hello")
    assert Frame.from_bytes(f.to_bytes()) == f
    with pytest.raises(core.MalformedFrame):
        Frame.from_bytes(f.to_bytes()[:-1])


def test_mk_matches_oracle_chain():
    states, rngs = make_group("A", "B")
    seed = states["A"].own_sender_key.ck.bytes
    refs = oracles.chain(seed, 3)
    frames = [send(states, rngs, "A", b"m") for _ in range(3)]
    for (_, mk), f in zip(refs, frames):
        assert crypto.dec(crypto.MessageKey(mk, f.i), f.c) == b"m"


# ----------------------------------------------------------------- invariants


def test_forward_secrecy_byte_scan():
    states, rngs = make_group("A", "B", "C")
    consumed = []
    for k in range(10):
        sender = "ABC"[k % 3]
        mk = crypto.kdf_mk(states[sender].own_sender_key.ck)
        consumed.append(mk.bytes)
        f = send(states, rngs, sender, b"m%d" % k)
        for u in states:
            if u != sender:
                _, states[u] = core.recv(f, states[u])
    blob = b"".join(secrets_in(s) for s in states.values())
    assert not any(mk in blob for mk in consumed)


def test_removal_erases_all_keys():
    states, rngs = make_group("A", "B", "C")
    send(states, rngs, "B", b"x")
    old = [k.ck.bytes for s in states.values() for k in s.peer_keys.values()]
    old += [s.own_ssk for s in states.values()]
    T, states["A"] = core.exec_remove("C", states["A"])
    states["B"] = core.proc(T, states["B"])
    for u in "AB":
        blob = secrets_in(states[u])
        assert not any(k in blob for k in old)


def test_error_leaves_state_untouched():
    states, rngs = make_group("A", "B")
    frames = [send(states, rngs, "A", b"m") for _ in range(3)]
    before = core.serialize_state(states["B"])
    bad = Frame(frames[2].c, frames[2].i, "A", b"\x00" * 96)
    with pytest.raises(core.SignatureInvalid):
        core.recv(bad, states["B"])
    assert core.serialize_state(states["B"]) == before


def test_serialization_roundtrip():
    states, rngs = make_group("A", "B", "C")
    frames = [send(states, rngs, "A", b"m") for _ in range(4)]
    _, states["B"] = core.recv(frames[2], states["B"])
    data = core.serialize_state(states["B"])
    again = core.deserialize_state(data)
    assert core.serialize_state(again) == data
    assert again.skipped.keys() == {("A", 0), ("A", 1)}


def test_deserialize_rejects_garbage():
    with pytest.raises(ValueError):
        core.deserialize_state(b"nonsense")


@settings(max_examples=40, deadline=None)
@given(schedule=st.lists(st.tuples(st.sampled_from("ABC"), st.integers(0, 3)), min_size=1, max_size=25))
def test_any_schedule_delivers_every_message(schedule):
    """Arbitrary sends, each delivered after a random delay, decrypt exactly once."""
    states, rngs = make_group("A", "B", "C")
    inbox = {u: [] for u in "ABC"}
    expected = {u: [] for u in "ABC"}
    for n, (sender, delay) in enumerate(schedule):
        m = b"msg-%d" % n
        f = send(states, rngs, sender, m)
        for u in "ABC":
            if u != sender:
                inbox[u].insert(max(0, len(inbox[u]) - delay), f)
                expected[u].append(m)
    for u in "ABC":
        got = []
        for f in inbox[u]:
            m, states[u] = core.recv(f, states[u])
            got.append(m)
        assert sorted(got) == sorted(expected[u])
        assert not states[u].skipped
