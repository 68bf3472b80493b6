"""Delivery service and two-party channels."""

import pytest

from senderkeys import core
from senderkeys.core import ControlMsg, Frame
from senderkeys.transport import (
    AlreadyDelivered,
    DeliveryService,
    EmptyQueue,
    Rejected,
    TwoPartyNetwork,
    UnknownSeq,
)


def frame(i=0, sender="A"):
    return Frame(b"\x00" * 16, i, sender, b"\x01" * 96)


def test_sequence_numbers_are_total_order():
    ds = DeliveryService()
    seqs = [ds.submit(frame(i), "A", {"B"}) for i in range(3)]
    assert seqs == [0, 1, 2]


def test_control_messages_are_stamped():
    ds = DeliveryService()
    ds.submit(frame(), "A", {"B"})
    seq = ds.submit(ControlMsg(core.ADD, "A", ("C",), ("A", "B", "C")), "A", {"B", "C"})
    assert ds.entry(seq).payload.seq == seq


def test_nothing_is_delivered_without_request():
    ds = DeliveryService()
    ds.submit(frame(), "A", {"B", "C"})
    assert ds.pending("B") == [0] and ds.pending("C") == [0]
    assert ds.pending("A") == []


def test_deliver_once_then_redeliver():
    ds = DeliveryService()
    ds.submit(frame(), "A", {"B"})
    assert ds.deliver("B", 0) == frame()
    with pytest.raises(AlreadyDelivered):
        ds.deliver("B", 0)
    assert ds.deliver("B", 0, redeliver=True) == frame()
    assert ds.trace[-1].endswith("redeliver")


def test_unknown_seq():
    with pytest.raises(UnknownSeq):
        DeliveryService().deliver("B", 0)


def test_admission_hook_can_reject():
    def only_even(payload):
        if isinstance(payload, Frame) and payload.i % 2:
            raise Rejected("odd")

    ds = DeliveryService(only_even)
    ds.submit(frame(0), "A", {"B"})
    with pytest.raises(Rejected):
        ds.submit(frame(1), "A", {"B"})
    assert len(ds.log.entries) == 1
    assert ds.trace[-1].startswith("reject")


def test_log_dump_concatenates_payloads():
    ds = DeliveryService()
    ds.submit(frame(0), "A", {"B"})
    ds.submit(frame(1), "A", {"B"})
    assert ds.log.dump() == frame(0).to_bytes() + frame(1).to_bytes()


def test_two_party_fifo_per_direction():
    net = TwoPartyNetwork()
    net.tp_send("A", "B", "a1")
    net.tp_send("C", "B", "c1")
    net.tp_send("A", "B", "a2")
    assert net.queued("B") == 3
    assert net.tp_deliver("B", "A") == "a1"
    assert net.tp_deliver("B") == "c1"
    assert net.tp_deliver("B") == "a2"
    with pytest.raises(EmptyQueue):
        net.tp_deliver("B")


def test_two_party_traffic_is_counts_only():
    net = TwoPartyNetwork()
    net.tp_send("A", "B", "secret")
    assert net.traffic() == {("A", "B"): 1}
    assert not hasattr(net, "read") and not hasattr(net, "inject")
