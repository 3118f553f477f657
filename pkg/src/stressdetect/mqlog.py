"""Embedded append-only topic log.

On-disk layout::

    <root>/<topic>/<base_offset:020d>.log      segment files
    <root>/<topic>/groups/<group>.offset       committed consumer offsets
    <root>/<topic>/.lock                       writer lock (flock)

Each record in a segment is one frame, little-endian::

    u32 payload_length | u32 crc32(payload) | u8 key_flag | [u32 key_length | key] | payload

``key_flag`` is 0 (no key) or 1 (key present). A topic has a single partition,
so offsets are 0, 1, 2, ... across all segments in order.

Durability: by default every append is fsynced before it returns. With
``flush_every=N`` appends are fsynced in groups of N (and on :meth:`Topic.flush`
or close), so a crash can lose records appended since the last flush.

Multiple threads may share a handle. Multiple processes may append to the same
topic; appends take an exclusive ``flock`` and re-scan the tail first. Readers
in other processes pick up new records on their next :meth:`Topic.read`.
"""

from __future__ import annotations

import fcntl
import logging
import os
import re
import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

MAX_PAYLOAD = 1 << 20
DEFAULT_SEGMENT_BYTES = 64 << 20
_HEADER = struct.Struct("<IIB")
_KEYLEN = struct.Struct("<I")
_TOPIC_RE = re.compile(r"[a-z0-9_-]{1,64}")
_GROUP_RE = re.compile(r"[A-Za-z0-9_.-]{1,128}")
_SEGMENT_RE = re.compile(r"(\d{20})\.log")


class LogError(Exception):
    pass


class CorruptLogError(LogError):
    pass


class OffsetOutOfRange(LogError):
    pass


class PayloadTooLarge(LogError):
    pass


@dataclass(frozen=True)
class Record:
    offset: int
    payload: bytes
    key: bytes | None = None
    # the frame has no timestamp slot, so records read back from disk carry None
    appended_at: int | None = None


def encode_frame(payload: bytes, key: bytes | None = None) -> bytes:
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    if key is None:
        return _HEADER.pack(len(payload), crc, 0) + payload
    return _HEADER.pack(len(payload), crc, 1) + _KEYLEN.pack(len(key)) + key + payload


@dataclass
class _Frame:
    pos: int
    length: int
    payload: bytes | None = None
    key: bytes | None = None


def _parse_frame(buf: bytes | memoryview, pos: int) -> tuple[str, _Frame | None]:
    """Parse the frame at ``pos``. Returns ("ok", frame), ("short", None) when
    the buffer ends inside the frame, or ("crc"/"flag", frame-or-None)."""
    end = len(buf)
    if pos + _HEADER.size > end:
        return "short", None
    plen, crc, flag = _HEADER.unpack_from(buf, pos)
    p = pos + _HEADER.size
    key = None
    if flag == 1:
        if p + _KEYLEN.size > end:
            return "short", None
        (klen,) = _KEYLEN.unpack_from(buf, p)
        p += _KEYLEN.size
        if p + klen > end:
            return "short", None
        key = bytes(buf[p:p + klen])
        p += klen
    elif flag != 0:
        return "flag", None
    if p + plen > end:
        return "short", None
    payload = bytes(buf[p:p + plen])
    frame = _Frame(pos, p + plen - pos, payload, key)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        return "crc", frame
    return "ok", frame


def _fsync_dir(path: Path) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


class Topic:
    def __init__(self, root: str | Path, name: str, *, segment_bytes: int = DEFAULT_SEGMENT_BYTES,
                 flush_every: int = 1):
        if not _TOPIC_RE.fullmatch(name):
            raise LogError(f"invalid topic name {name!r}; expected [a-z0-9_-]{{1,64}}")
        if flush_every < 1:
            raise LogError("flush_every must be >= 1")
        self.name = name
        self.dir = Path(root) / name
        self.segment_bytes = segment_bytes
        self.flush_every = flush_every
        try:
            (self.dir / "groups").mkdir(parents=True, exist_ok=True)
            self._lock_fd = os.open(self.dir / ".lock", os.O_RDWR | os.O_CREAT, 0o644)
        except OSError as exc:
            raise LogError(f"cannot open topic directory {self.dir}: {exc}") from exc
        self._lock = threading.RLock()
        self._segments: list[int] = []          # base offsets
        self._sizes: list[int] = []             # bytes of valid frames per segment
        self._locs: list[tuple[int, int]] = []  # offset -> (segment index, frame position)
        self._read_fds: dict[int, int] = {}
        self._write_fd: int | None = None
        self._write_si = -1
        self._unflushed = 0
        self._closed = False
        with self._lock, self._file_lock():
            self._recover()

    # -- locking -----------------------------------------------------------

    class _FileLock:
        def __init__(self, fd: int):
            self.fd = fd

        def __enter__(self):
            fcntl.flock(self.fd, fcntl.LOCK_EX)

        def __exit__(self, *exc):
            fcntl.flock(self.fd, fcntl.LOCK_UN)

    def _file_lock(self) -> "_FileLock":
        return Topic._FileLock(self._lock_fd)

    # -- recovery and tail scanning ------------------------------------------

    def _segment_path(self, base: int) -> Path:
        return self.dir / f"{base:020d}.log"

    def _list_segments(self) -> list[int]:
        bases = []
        for entry in os.listdir(self.dir):
            m = _SEGMENT_RE.fullmatch(entry)
            if m:
                bases.append(int(m.group(1)))
        return sorted(bases)

    def _recover(self) -> None:
        """Full scan at open: validate every frame, truncate a torn final record."""
        self._segments, self._sizes, self._locs = [], [], []
        bases = self._list_segments()
        for si, base in enumerate(bases):
            if base != len(self._locs):
                raise CorruptLogError(
                    f"segment {self._segment_path(base).name} starts at offset {base}, "
                    f"expected {len(self._locs)}")
            path = self._segment_path(base)
            data = path.read_bytes()
            last = si == len(bases) - 1
            pos = 0
            self._segments.append(base)
            while pos < len(data):
                status, frame = _parse_frame(data, pos)
                if status == "ok":
                    self._locs.append((si, pos))
                    pos += frame.length
                    continue
                torn_tail = last and (status == "short" or (status == "crc" and pos + frame.length == len(data)))
                if not torn_tail:
                    raise CorruptLogError(
                        f"corrupt record in segment {path.name} at byte {pos} ({status})")
                log.warning("topic %s: truncating torn record at %s byte %d (%s)",
                            self.name, path.name, pos, status)
                with open(path, "r+b") as fh:
                    fh.truncate(pos)
                    fh.flush()
                    os.fsync(fh.fileno())
                break
            self._sizes.append(pos)

    def _scan_new(self) -> None:
        """Pick up complete frames written by other handles since the last scan.
        Never truncates; an incomplete tail is left for its writer."""
        if not self._segments:
            bases = self._list_segments()
            if not bases:
                return
            self._segments.append(bases[0])
            self._sizes.append(0)
        while True:
            si = len(self._segments) - 1
            path = self._segment_path(self._segments[si])
            with open(path, "rb") as fh:
                fh.seek(self._sizes[si])
                data = fh.read()
            pos = 0
            while pos < len(data):
                status, frame = _parse_frame(data, pos)
                if status != "ok":
                    break
                self._locs.append((si, self._sizes[si] + pos))
                pos += frame.length
            self._sizes[si] += pos
            nxt = len(self._locs)
            if os.path.exists(self._segment_path(nxt)) and nxt != self._segments[si]:
                self._segments.append(nxt)
                self._sizes.append(0)
                continue
            return

    def refresh(self) -> int:
        with self._lock:
            self._check_open()
            self._scan_new()
            return len(self._locs)

    # -- public API ----------------------------------------------------------

    @property
    def next_offset(self) -> int:
        return len(self._locs)

    @property
    def segments(self) -> list[Path]:
        return [self._segment_path(b) for b in self._segments]

    def _check_open(self) -> None:
        if self._closed:
            raise LogError(f"topic {self.name} is closed")

    def _open_writer(self) -> int:
        if not self._segments:
            self._segments.append(0)
            self._sizes.append(0)
        si = len(self._segments) - 1
        if self._sizes[si] >= self.segment_bytes:
            self._segments.append(len(self._locs))
            self._sizes.append(0)
            si += 1
        if self._write_fd is None or self._write_si != si:
            if self._write_fd is not None:
                os.close(self._write_fd)
            path = self._segment_path(self._segments[si])
            created = not path.exists()
            self._write_fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
            self._write_si = si
            if created:
                _fsync_dir(self.dir)
        return self._write_fd

    def _drop_torn_tail(self) -> None:
        # caller holds the file lock, so bytes past the last valid frame
        # belong to a writer that died mid-append
        if not self._segments:
            return
        si = len(self._segments) - 1
        path = self._segment_path(self._segments[si])
        actual = path.stat().st_size
        if actual > self._sizes[si]:
            log.warning("topic %s: dropping %d torn bytes at end of %s",
                        self.name, actual - self._sizes[si], path.name)
            os.truncate(path, self._sizes[si])

    def append(self, payload: bytes, key: bytes | None = None) -> int:
        return self.append_many([payload], [key])[0]

    def append_many(self, payloads: Sequence[bytes],
                    keys: Sequence[bytes | None] | None = None) -> list[int]:
        """Append records in order; under the default flush policy they are
        durable before this returns."""
        keys = list(keys) if keys is not None else [None] * len(payloads)
        if len(keys) != len(payloads):
            raise LogError("keys and payloads differ in length")
        for p in payloads:
            if len(p) > MAX_PAYLOAD:
                raise PayloadTooLarge(f"payload of {len(p)} bytes exceeds {MAX_PAYLOAD}")
        if not payloads:
            return []
        offsets = []
        with self._lock:
            self._check_open()
        with self._lock, self._file_lock():
            self._check_open()
            # another process may have appended or rolled a segment
            self._scan_new()
            self._drop_torn_tail()
            for payload, key in zip(payloads, keys):
                fd = self._open_writer()
                si = len(self._segments) - 1
                frame = encode_frame(bytes(payload), None if key is None else bytes(key))
                start = self._sizes[si]
                try:
                    view = memoryview(frame)
                    while view:
                        n = os.write(fd, view)
                        view = view[n:]
                except OSError as exc:
                    self._rollback(si, start)
                    raise LogError(f"append to {self.name} failed: {exc}") from exc
                self._locs.append((si, start))
                self._sizes[si] = start + len(frame)
                offsets.append(len(self._locs) - 1)
                self._unflushed += 1
            if self._unflushed >= self.flush_every:
                self._sync()
        return offsets

    def _rollback(self, si: int, size: int) -> None:
        try:
            os.truncate(self._segment_path(self._segments[si]), size)
        except OSError:
            log.exception("topic %s: could not roll back partial write", self.name)

    def _sync(self) -> None:
        if self._write_fd is not None and self._unflushed:
            os.fsync(self._write_fd)
        self._unflushed = 0

    def flush(self) -> None:
        with self._lock:
            self._sync()

    def _read_fd(self, si: int) -> int:
        fd = self._read_fds.get(si)
        if fd is None:
            fd = os.open(self._segment_path(self._segments[si]), os.O_RDONLY)
            self._read_fds[si] = fd
        return fd

    def _read_at(self, offset: int) -> Record:
        si, pos = self._locs[offset]
        fd = self._read_fd(si)
        head = os.pread(fd, _HEADER.size + _KEYLEN.size, pos)
        plen, _, flag = _HEADER.unpack_from(head, 0)
        length = _HEADER.size + plen
        if flag == 1:
            (klen,) = _KEYLEN.unpack_from(head, _HEADER.size)
            length += _KEYLEN.size + klen
        buf = os.pread(fd, length, pos)
        status, frame = _parse_frame(buf, 0)
        if status != "ok":
            raise CorruptLogError(
                f"record {offset} in segment {self._segment_path(self._segments[si]).name} "
                f"at byte {pos} failed validation ({status})")
        return Record(offset, frame.payload, frame.key)

    def read(self, from_offset: int, max_records: int) -> list[Record]:
        if from_offset < 0:
            raise OffsetOutOfRange(f"negative offset {from_offset}")
        with self._lock:
            self._check_open()
            if from_offset + max_records > len(self._locs):
                self._scan_new()
            if from_offset > len(self._locs):
                raise OffsetOutOfRange(
                    f"offset {from_offset} is past the end of topic {self.name} ({len(self._locs)})")
            stop = min(from_offset + max(max_records, 0), len(self._locs))
            return [self._read_at(o) for o in range(from_offset, stop)]

    def __iter__(self) -> Iterable[Record]:
        offset = 0
        while True:
            batch = self.read(offset, 1024)
            if not batch:
                return
            yield from batch
            offset += len(batch)

    # -- consumer offsets ----------------------------------------------------

    def _group_path(self, group: str) -> Path:
        if not _GROUP_RE.fullmatch(group):
            raise LogError(f"invalid consumer group name {group!r}")
        return self.dir / "groups" / f"{group}.offset"

    def commit(self, group: str, offset: int) -> None:
        path = self._group_path(group)
        with self._lock:
            self._check_open()
            end = self.refresh()
            if not 0 <= offset <= end:
                raise OffsetOutOfRange(f"commit offset {offset} outside [0, {end}]")
            tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
            with open(tmp, "w", encoding="ascii") as fh:
                fh.write(f"{offset}\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
            _fsync_dir(path.parent)

    def committed(self, group: str) -> int:
        path = self._group_path(group)
        try:
            text = path.read_text(encoding="ascii").strip()
        except FileNotFoundError:
            return 0
        try:
            return int(text)
        except ValueError:
            raise CorruptLogError(f"unreadable offset file {path}") from None

    # -- lifecycle -----------------------------------------------------------

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._sync()
            for fd in self._read_fds.values():
                os.close(fd)
            self._read_fds.clear()
            if self._write_fd is not None:
                os.close(self._write_fd)
                self._write_fd = None
            os.close(self._lock_fd)
            self._closed = True

    def __enter__(self) -> "Topic":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def open_topic(root: str | Path, name: str, **kwargs) -> Topic:
    return Topic(root, name, **kwargs)
