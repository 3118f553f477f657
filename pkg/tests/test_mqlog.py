import multiprocessing as mp
import os
import struct
import threading
import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stressdetect.mqlog import (
    MAX_PAYLOAD,
    CorruptLogError,
    LogError,
    OffsetOutOfRange,
    PayloadTooLarge,
    Topic,
    encode_frame,
    open_topic,
)


def payloads(topic, start=0, n=10**9):
    return [r.payload for r in topic.read(start, n)]


def test_fresh_topic(tmp_path):
    with open_topic(tmp_path, "posts") as t:
        assert t.next_offset == 0
        assert t.read(0, 10) == []
    assert (tmp_path / "posts" / "groups").is_dir()


def test_offsets_and_reopen(tmp_path):
    with Topic(tmp_path, "posts") as t:
        assert [t.append(p) for p in (b"p0", b"p1", b"p2")] == [0, 1, 2]
    with Topic(tmp_path, "posts") as t:
        assert t.next_offset == 3
        assert payloads(t) == [b"p0", b"p1", b"p2"]
        assert t.append(b"p3") == 3


def test_frame_layout_is_bit_exact(tmp_path):
    with Topic(tmp_path, "t") as t:
        t.append(b"hello")
        t.append(b"xy", key=b"k1")
    raw = (tmp_path / "t" / f"{0:020d}.log").read_bytes()
    first = struct.pack("<IIB", 5, zlib.crc32(b"hello"), 0) + b"hello"
    second = struct.pack("<IIB", 2, zlib.crc32(b"xy"), 1) + struct.pack("<I", 2) + b"k1" + b"xy"
    assert raw == first + second
    assert encode_frame(b"xy", b"k1") == second


def test_keys_roundtrip(tmp_path):
    with Topic(tmp_path, "t") as t:
        t.append(b"a", key=b"")
        t.append(b"b", key=b"id-1")
        t.append(b"c")
        assert [r.key for r in t.read(0, 3)] == [b"", b"id-1", None]
        assert [r.offset for r in t.read(0, 3)] == [0, 1, 2]


def test_flipped_byte_in_last_record_is_truncated(tmp_path):
    with Topic(tmp_path, "t") as t:
        for p in (b"alpha", b"beta", b"gamma"):
            t.append(p)
    seg = tmp_path / "t" / f"{0:020d}.log"
    data = bytearray(seg.read_bytes())
    data[-1] ^= 0xFF
    seg.write_bytes(bytes(data))
    with Topic(tmp_path, "t") as t:
        assert t.next_offset == 2
        assert payloads(t) == [b"alpha", b"beta"]
        assert t.append(b"delta") == 2
    with Topic(tmp_path, "t") as t:
        assert payloads(t) == [b"alpha", b"beta", b"delta"]


@pytest.mark.parametrize("cut", [1, 5, 9, 12])
def test_partial_final_frame_is_truncated(tmp_path, cut):
    with Topic(tmp_path, "t") as t:
        t.append(b"one")
        t.append(b"two-two")
    seg = tmp_path / "t" / f"{0:020d}.log"
    data = seg.read_bytes()
    seg.write_bytes(data[:-cut])
    with Topic(tmp_path, "t") as t:
        assert payloads(t) == [b"one"]
    assert seg.stat().st_size == len(encode_frame(b"one"))


def test_mid_file_corruption_is_an_error(tmp_path):
    with Topic(tmp_path, "t") as t:
        for p in (b"alpha", b"beta", b"gamma"):
            t.append(p)
    seg = tmp_path / "t" / f"{0:020d}.log"
    data = bytearray(seg.read_bytes())
    pos = len(encode_frame(b"alpha"))
    data[pos + 9] ^= 0x01  # first payload byte of record 1
    seg.write_bytes(bytes(data))
    with pytest.raises(CorruptLogError) as info:
        Topic(tmp_path, "t")
    assert seg.name in str(info.value) and f"byte {pos}" in str(info.value)


def test_crc_checked_on_read(tmp_path):
    t = Topic(tmp_path, "t")
    t.append(b"alpha")
    t.append(b"beta")
    seg = tmp_path / "t" / f"{0:020d}.log"
    with open(seg, "r+b") as fh:
        fh.seek(9)
        fh.write(b"A")
    with pytest.raises(CorruptLogError):
        t.read(0, 1)
    assert t.read(1, 1)[0].payload == b"beta"
    t.close()


def test_payload_limit(tmp_path):
    with Topic(tmp_path, "t") as t:
        assert t.append(b"x" * MAX_PAYLOAD) == 0
        with pytest.raises(PayloadTooLarge):
            t.append(b"x" * (MAX_PAYLOAD + 1))
        assert t.next_offset == 1


def test_read_examples(tmp_path):
    with Topic(tmp_path, "t") as t:
        for p in (b"p0", b"p1", b"p2"):
            t.append(p)
        assert payloads(t, 1, 10) == [b"p1", b"p2"]
        assert t.read(3, 5) == []
        assert t.read(0, 2) + t.read(2, 2) == t.read(0, 4)
        assert t.read(0, 3) == t.read(0, 3)
        with pytest.raises(OffsetOutOfRange):
            t.read(4, 1)
        with pytest.raises(OffsetOutOfRange):
            t.read(-1, 1)


def test_commit_semantics(tmp_path):
    with Topic(tmp_path, "t") as t:
        t.append_many([b"r"] * 6)
        assert t.committed("g") == 0
        t.commit("g", 5)
        assert t.committed("g") == 5
    with Topic(tmp_path, "t") as t:
        assert t.committed("g") == 5
        t.commit("g", 3)
        t.commit("g", 2)
        assert t.committed("g") == 2
        assert t.committed("other") == 0
        with pytest.raises(OffsetOutOfRange):
            t.commit("g", 7)
        with pytest.raises(OffsetOutOfRange):
            t.commit("g", -1)
    assert (tmp_path / "t" / "groups" / "g.offset").read_text() == "2\n"


def test_invalid_names(tmp_path):
    with pytest.raises(LogError):
        Topic(tmp_path, "Bad Name")
    with Topic(tmp_path, "ok") as t:
        with pytest.raises(LogError):
            t.commit("../x", 0)


def test_segment_roll(tmp_path):
    with Topic(tmp_path, "t", segment_bytes=64) as t:
        for i in range(20):
            t.append(f"record-{i:02d}".encode())
        names = [p.name for p in t.segments]
    assert len(names) > 1
    bases = [int(n.split(".")[0]) for n in names]
    assert bases == sorted(bases) and bases[0] == 0
    with Topic(tmp_path, "t", segment_bytes=64) as t:
        assert payloads(t) == [f"record-{i:02d}".encode() for i in range(20)]
        assert t.append(b"more") == 20


def test_batched_flush_mode(tmp_path):
    with Topic(tmp_path, "t", flush_every=50) as t:
        t.append_many([b"a", b"b"])
        t.append(b"c")
        assert payloads(t) == [b"a", b"b", b"c"]
        t.flush()
    with Topic(tmp_path, "t") as t:
        assert t.next_offset == 3


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.binary(max_size=40), max_size=6), max_size=8),
       st.sampled_from([32, 100, 4096]))
def test_reopen_model_equivalence(tmp_path_factory, batches, segment_bytes):
    root = tmp_path_factory.mktemp("prop")
    model = []
    for batch in batches:
        with Topic(root, "t", segment_bytes=segment_bytes) as t:
            offsets = t.append_many(batch)
            assert offsets == list(range(len(model), len(model) + len(batch)))
            model.extend(batch)
            assert payloads(t) == model
    with Topic(root, "t", segment_bytes=segment_bytes) as t:
        assert t.next_offset == len(model)
        assert [r.payload for r in t] == model


def test_concurrent_threads_share_one_order(tmp_path):
    t = Topic(tmp_path, "t")

    def producer(name):
        for i in range(50):
            t.append(f"{name}:{i}".encode())

    threads = [threading.Thread(target=producer, args=(f"w{k}",)) for k in range(4)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    seen = [r.payload.decode() for r in t]
    assert len(seen) == 200
    for k in range(4):
        mine = [int(s.split(":")[1]) for s in seen if s.startswith(f"w{k}:")]
        assert mine == list(range(50))
    t.close()
    with Topic(tmp_path, "t") as again:
        assert [r.payload.decode() for r in again] == seen


def _proc_producer(root, name, n):
    with Topic(root, "t", segment_bytes=2048) as t:
        for i in range(n):
            t.append(f"{name}:{i}".encode())


def test_concurrent_processes_share_one_order(tmp_path):
    ctx = mp.get_context("fork")
    procs = [ctx.Process(target=_proc_producer, args=(str(tmp_path), f"p{k}", 60)) for k in range(3)]
    for p in procs:
        p.start()
    for p in procs:
        p.join(30)
        assert p.exitcode == 0
    readers = [Topic(tmp_path, "t", segment_bytes=2048) for _ in range(2)]
    views = [[r.payload.decode() for r in rd] for rd in readers]
    assert views[0] == views[1]
    assert len(views[0]) == 180
    for k in range(3):
        mine = [int(s.split(":")[1]) for s in views[0] if s.startswith(f"p{k}:")]
        assert mine == list(range(60))
    for rd in readers:
        rd.close()


def _append_then_die(root, n):
    t = Topic(root, "t")
    for i in range(n):
        t.append(f"r{i}".encode())
    os._exit(0)  # no close, no flush beyond what append already did


def test_kill_after_append_loses_nothing(tmp_path):
    ctx = mp.get_context("fork")
    p = ctx.Process(target=_append_then_die, args=(str(tmp_path), 25))
    p.start()
    p.join(30)
    with Topic(tmp_path, "t") as t:
        assert payloads(t) == [f"r{i}".encode() for i in range(25)]


def test_reader_sees_other_handles_appends(tmp_path):
    writer = Topic(tmp_path, "t")
    reader = Topic(tmp_path, "t")
    writer.append(b"a")
    assert payloads(reader) == [b"a"]
    writer.append(b"b")
    assert reader.read(1, 5)[0].payload == b"b"
    writer.close()
    reader.close()


def test_closed_handle_rejects_use(tmp_path):
    t = Topic(tmp_path, "t")
    t.close()
    t.close()
    with pytest.raises(LogError):
        t.append(b"x")
