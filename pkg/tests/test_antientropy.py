import random

import pytest

from dcrdt.antientropy import (
    BasicNode,
    CausalNode,
    ChoosePolicy,
    FileStore,
    MemoryStore,
    MessageKind,
    StorageError,
    WireMessage,
)
from dcrdt.crdts import AWORSet, GCounter, gc_inc_delta, orset_add_delta
from dcrdt.lattice import leq
from helpers import random_mutator

BOTTOM = GCounter()


def inc(i):
    return lambda X: gc_inc_delta(i, X)


class FailingStore(MemoryStore):
    def __init__(self, X, c=0):
        super().__init__(X, c)
        self.fail = False

    def put_atomic(self, X, c):
        if self.fail:
            raise StorageError("disk full")
        super().put_atomic(X, c)


# -- wire format --


class TestWireMessage:
    def test_roundtrip(self):
        for msg in [
            WireMessage(MessageKind.BASIC, GCounter({"i": 2})),
            WireMessage(MessageKind.DELTA, GCounter({"i": 2}), 7),
            WireMessage(MessageKind.ACK, None, 7),
        ]:
            data = msg.encode()
            assert len(data) == msg.nbytes
            assert WireMessage.decode(data) == msg

    def test_layout(self):
        payload = GCounter({"i": 1})
        assert WireMessage(MessageKind.ACK, None, 3).encode() == b"\x12" + (3).to_bytes(8, "little")
        delta = WireMessage(MessageKind.DELTA, payload, 3).encode()
        assert delta == b"\x11" + payload.encoded + (3).to_bytes(8, "little")
        assert WireMessage(MessageKind.BASIC, payload).encode() == b"\x10" + payload.encoded

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            WireMessage(MessageKind.ACK, GCounter(), 1)
        with pytest.raises(ValueError):
            WireMessage(MessageKind.DELTA, None, 1)


class TestChoosePolicy:
    @pytest.mark.parametrize("text", ["delta", "full", "full-every-3"])
    def test_parse_roundtrip(self, text):
        assert str(ChoosePolicy.parse(text)) == text

    def test_schedule(self):
        every3 = ChoosePolicy.parse("full-every-3")
        assert [every3.ship_full(p) for p in range(1, 7)] == [False, False, True, False, False, True]
        assert not ChoosePolicy.parse("delta").ship_full(10)
        assert ChoosePolicy.parse("full").ship_full(1)

    @pytest.mark.parametrize("text", ["", "full-every-0", "sometimes"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            ChoosePolicy.parse(text)


# -- basic anti-entropy --


class TestBasicNode:
    def node(self, **kw):
        return BasicNode("i", BOTTOM, ["j", "k"], choose=ChoosePolicy.parse("delta"), **kw)

    def test_operation_updates_state_and_group(self):
        n = self.node()
        n.on_operation(inc("i"))
        assert n.X == GCounter({"i": 1}) and n.D == GCounter({"i": 1})
        n.on_operation(inc("i"))
        assert n.D == GCounter({"i": 2})

    def test_bottom_delta_changes_nothing(self):
        n = self.node()
        n.on_operation(inc("i"))
        n.on_operation(lambda X: BOTTOM)
        assert n.X == GCounter({"i": 1}) and n.D == GCounter({"i": 1})

    def test_ship_delta_then_reset(self):
        n = self.node()
        for _ in range(3):
            n.on_operation(inc("i"))
        out = n.periodic_ship()
        assert [(dst, m.payload) for dst, m in out] == [("j", GCounter({"i": 3})), ("k", GCounter({"i": 3}))]
        assert n.D == BOTTOM
        assert n.periodic_ship() == []

    def test_ship_full(self):
        n = BasicNode("i", BOTTOM, ["j"], choose=ChoosePolicy.parse("full"))
        n.on_receive(GCounter({"k": 4}))
        n.on_operation(inc("i"))
        [(_, msg)] = n.periodic_ship()
        assert msg.payload == GCounter({"i": 1, "k": 4})

    def test_receive_and_duplicate(self):
        n = self.node()
        n.on_operation(inc("i"))
        n.on_receive(GCounter({"j": 4}))
        assert n.X == GCounter({"i": 1, "j": 4})
        writes = n.store.writes
        n.on_receive(GCounter({"j": 4}))
        assert n.X == GCounter({"i": 1, "j": 4})
        assert n.store.writes == writes

    def test_transitive_forwarding(self):
        i = BasicNode("i", BOTTOM, ["j", "k"], transitive=True, choose=ChoosePolicy.parse("delta"))
        i.on_receive(GCounter({"j": 4}))
        out = dict(i.periodic_ship())
        assert out["k"].payload == GCounter({"j": 4})
        direct = self.node()
        direct.on_receive(GCounter({"j": 4}))
        assert direct.periodic_ship() == []

    def test_group_never_exceeds_state(self):
        rng = random.Random(5)
        n = BasicNode("i", AWORSet(), ["j"], transitive=True, choose=ChoosePolicy.parse("delta"))
        peer = AWORSet()
        for _ in range(200):
            if rng.random() < 0.5:
                n.on_operation(random_mutator("aworset", rng, "i"))
            elif rng.random() < 0.5:
                peer = peer.join(random_mutator("aworset", rng, "j")(peer))
                n.on_receive(peer)
            else:
                n.periodic_ship()
            assert leq(n.D, n.X)

    def test_storage_failure_aborts(self):
        store = FailingStore(BOTTOM)
        n = self.node(store=store)
        n.on_operation(inc("i"))
        store.fail = True
        with pytest.raises(StorageError):
            n.on_operation(inc("i"))
        with pytest.raises(StorageError):
            n.on_receive(GCounter({"j": 1}))
        assert n.X == GCounter({"i": 1}) and n.D == GCounter({"i": 1})

    def test_crash_loses_only_group(self):
        n = self.node()
        n.on_operation(inc("i"))
        n.crash()
        n.recover()
        assert n.X == GCounter({"i": 1}) and n.D == BOTTOM


# -- causal anti-entropy --


class TestCausalNode:
    def node(self, neighbors=("j", "k"), store=None):
        return CausalNode("i", BOTTOM, neighbors, store=store)

    def test_operations_are_indexed(self):
        n = self.node()
        n.on_operation(inc("i"))
        assert n.X == GCounter({"i": 1}) and n.D == {0: GCounter({"i": 1})} and n.c == 1
        n.on_operation(inc("i"))
        n.on_operation(inc("i"))
        assert sorted(n.D) == [0, 1, 2] and n.c == 3
        assert BOTTOM.join(n.D[0]).join(n.D[1]).join(n.D[2]) == n.X
        assert n.store.get() == (n.X, 3)

    def test_receive_novel_delta_is_buffered(self):
        n = self.node()
        ack = n.on_receive_delta("j", GCounter({"j": 2}), 5)
        assert ack == WireMessage(MessageKind.ACK, None, 5)
        assert n.c == 1 and n.D == {0: GCounter({"j": 2})}

    def test_subsumed_delta_still_acked(self):
        n = self.node()
        n.on_receive_delta("j", GCounter({"j": 2}), 5)
        ack = n.on_receive_delta("k", GCounter({"j": 1}), 9)
        assert ack.n == 9 and n.c == 1
        again = n.on_receive_delta("j", GCounter({"j": 2}), 5)
        assert again.n == 5 and n.c == 1

    def test_acks_take_maximum(self):
        n = self.node()
        n.on_receive_ack("j", 5)
        assert n.A == {"j": 5}
        n.on_receive_ack("j", 3)
        assert n.A == {"j": 5}
        n.on_receive_ack("z", 2)
        assert n.A["z"] == 2

    def test_ship_interval(self):
        n = self.node()
        n.on_operation(inc("i"))
        n.on_operation(inc("i"))
        msg = n.periodic_ship("j")
        assert msg == WireMessage(MessageKind.DELTA, n.D[0].join(n.D[1]), 2)
        assert n.last_interval == (0, 2) and not n.last_ship_full
        n.on_receive_ack("j", 1)
        assert n.periodic_ship("j").payload == n.D[1]
        assert n.last_interval == (1, 2)
        n.on_receive_ack("j", 2)
        assert n.periodic_ship("j") is None

    def test_full_state_after_recovery(self):
        store = MemoryStore(BOTTOM)
        n = self.node(store=store)
        for _ in range(7):
            n.on_operation(inc("i"))
        n.on_receive_ack("j", 3)
        n.crash()
        assert n.X is None
        n.recover()
        assert n.c == 7 and n.D == {} and n.A == {}
        msg = n.periodic_ship("j")
        assert msg.payload == GCounter({"i": 7}) and msg.n == 7 and n.last_ship_full
        n.on_operation(inc("i"))
        assert list(n.D) == [7]

    def test_full_state_when_buffer_collected_past_ack(self):
        n = self.node(neighbors=("j",))
        for _ in range(4):
            n.on_operation(inc("i"))
        n.on_receive_ack("j", 3)
        n.periodic_gc()
        assert sorted(n.D) == [3]
        n.A = {}
        msg = n.periodic_ship("j")
        assert n.last_ship_full and msg.payload == n.X

    def test_gc(self):
        n = self.node()
        for _ in range(6):
            n.on_operation(inc("i"))
        n.on_receive_ack("j", 4)
        n.periodic_gc()
        assert sorted(n.D) == list(range(6)), "silent neighbor k blocks collection"
        n.on_receive_ack("k", 2)
        n.periodic_gc()
        assert sorted(n.D) == [2, 3, 4, 5]

    def test_gc_keeps_every_unacked_suffix(self):
        rng = random.Random(9)
        n = self.node()
        for _ in range(300):
            roll = rng.random()
            if roll < 0.4:
                n.on_operation(inc("i"))
            elif roll < 0.7:
                n.on_receive_ack(rng.choice("jk"), rng.randint(0, n.c))
            else:
                n.periodic_gc()
            for j in "jk":
                acked = n.A.get(j, 0)
                assert all(l in n.D for l in range(acked, n.c)) or (not n.D or min(n.D) > acked)
                assert acked <= n.c

    def test_storage_failure_means_no_ack(self):
        store = FailingStore(BOTTOM)
        n = self.node(store=store)
        store.fail = True
        with pytest.raises(StorageError):
            n.on_receive_delta("j", GCounter({"j": 1}), 1)
        assert n.c == 0 and n.X == BOTTOM and n.D == {}

    def test_file_store(self, tmp_path):
        path = tmp_path / "node-i.bin"
        store = FileStore(path, AWORSet())
        assert store.get() == (AWORSet(), 0)
        n = CausalNode("i", AWORSet(), ["j"], store=store)
        n.on_operation(lambda X: orset_add_delta("i", b"x", X))
        again = CausalNode.recover_from("i", AWORSet(), ["j"], FileStore(path, AWORSet()))
        assert again.X == n.X and again.c == 1
        assert list(tmp_path.iterdir()) == [path]
