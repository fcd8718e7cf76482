"""Pipelining segments, multiplexing segments and multiplexing records.

Everything here works on the server-to-client byte space: the records that
carry response HEADERS or DATA, laid end to end by content length. Records
that carry only connection signaling stay in the timeline but occupy no
bytes. A stream is active from its first through its last response record.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .trace import HTTP2_TLS, RESPONSE_TYPES, S2C, ConnectionTrace, build_objects

log = logging.getLogger(__name__)

PLAIN_CLASS = "plain"
PIPELINED = "pipelined"
MULTIPLEXED = "multiplexed"


@dataclass(frozen=True)
class PipeliningSegment:
    start: int
    end: int
    streams: frozenset[int]
    records: tuple[int, ...]

    @property
    def byte_range(self) -> tuple[int, int]:
        return self.start, self.end

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class MultiplexingSegment:
    start: int
    end: int
    streams: frozenset[int]
    parent: int  # index into SegmentationResult.pipelining_segments
    records: tuple[int, ...]

    @property
    def byte_range(self) -> tuple[int, int]:
        return self.start, self.end

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class SegmentationResult:
    pipelining_segments: tuple[PipeliningSegment, ...]
    multiplexing_segments: tuple[MultiplexingSegment, ...]
    multiplexing_record_ids: tuple[int, ...]
    per_object_class: dict[int, str]
    # response records (indices into conn.records), their byte offsets and
    # the set of streams active while each one is sent
    response_records: tuple[int, ...] = ()
    record_offsets: tuple[int, ...] = ()
    active: tuple[frozenset[int], ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def segment_of(self, stream_id: int) -> PipeliningSegment:
        for seg in self.pipelining_segments:
            if stream_id in seg.streams:
                return seg
        raise KeyError(stream_id)


def response_streams(rec) -> frozenset[int]:
    return frozenset(
        s.stream_id for s in rec.segments if s.frame_type in RESPONSE_TYPES and s.stream_id != 0
    )


def detect_segments(conn: ConnectionTrace) -> SegmentationResult:
    if conn.protocol != HTTP2_TLS:
        raise ValueError(f"connection {conn.conn_id} is not http2_tls")
    objects = build_objects(conn)
    warnings = []

    resp_idx: list[int] = []
    offsets: list[int] = []
    pos = 0
    first: dict[int, int] = {}
    last: dict[int, int] = {}
    for i, rec in enumerate(conn.records):
        if not rec.is_response():
            continue
        k = len(resp_idx)
        resp_idx.append(i)
        offsets.append(pos)
        pos += rec.content_len
        for sid in response_streams(rec):
            first.setdefault(sid, k)
            last[sid] = k
    n = len(resp_idx)

    # earliest request time among streams that start at or after each ordinal
    req = {}
    for obj in objects:
        if obj.req_record_time is None:
            msg = f"connection {conn.conn_id}: stream {obj.stream_id} has no observed request"
            log.warning(msg)
            warnings.append(msg)
            req[obj.stream_id] = math.inf
        else:
            req[obj.stream_id] = obj.req_record_time
    starts_at: dict[int, list[int]] = {}
    ends_at: dict[int, list[int]] = {}
    for sid, k in first.items():
        starts_at.setdefault(k, []).append(sid)
        ends_at.setdefault(last[sid], []).append(sid)
    suffix_req = [math.inf] * (n + 1)
    for k in range(n - 1, -1, -1):
        suffix_req[k] = min([suffix_req[k + 1]] + [req[s] for s in starts_at.get(k, ())])

    pipe: list[PipeliningSegment] = []
    mux: list[MultiplexingSegment] = []
    active_sets: list[frozenset[int]] = []
    active: set[int] = set()
    seg_first = None
    seg_streams: set[int] = set()
    run_first = None

    def close_run(k_end: int) -> None:
        nonlocal run_first
        if run_first is not None:
            mux.append(MultiplexingSegment(
                start=offsets[run_first],
                end=offsets[k_end] + conn.records[resp_idx[k_end]].content_len,
                streams=active_sets[run_first],
                parent=len(pipe),
                records=tuple(resp_idx[run_first:k_end + 1]),
            ))
            run_first = None

    for k in range(n):
        if seg_first is None:
            seg_first = k
            seg_streams = set()
        active.update(starts_at.get(k, ()))
        seg_streams |= active
        current = frozenset(active)
        if run_first is not None and current != active_sets[-1]:
            close_run(k - 1)
        active_sets.append(current)
        if run_first is None and len(current) >= 2:
            run_first = k
        active.difference_update(ends_at.get(k, ()))
        t_k = conn.records[resp_idx[k]].t
        if not active and suffix_req[k + 1] > t_k:
            close_run(k)
            pipe.append(PipeliningSegment(
                start=offsets[seg_first],
                end=offsets[k] + conn.records[resp_idx[k]].content_len,
                streams=frozenset(seg_streams),
                records=tuple(resp_idx[seg_first:k + 1]),
            ))
            seg_first = None
    if seg_first is not None:
        # pending requests that never get answered leave the last segment open
        close_run(n - 1)
        pipe.append(PipeliningSegment(
            start=offsets[seg_first], end=pos, streams=frozenset(seg_streams),
            records=tuple(resp_idx[seg_first:]),
        ))

    mux_records = tuple(
        i for i, rec in enumerate(conn.records) if rec.dir == S2C and len(rec.streams()) >= 2
    )
    partial = SegmentationResult(tuple(pipe), tuple(mux), mux_records, {})
    return SegmentationResult(
        pipelining_segments=tuple(pipe),
        multiplexing_segments=tuple(mux),
        multiplexing_record_ids=mux_records,
        per_object_class=classify_objects(partial),
        response_records=tuple(resp_idx),
        record_offsets=tuple(offsets),
        active=tuple(active_sets),
        warnings=tuple(warnings),
    )


def classify_objects(seg: SegmentationResult) -> dict[int, str]:
    """Map stream id to ``plain``, ``pipelined`` or ``multiplexed``.

    Pipelined means sharing a pipelining segment with another stream without
    appearing in any multiplexing segment.
    """
    muxed = set()
    for m in seg.multiplexing_segments:
        muxed |= m.streams
    classes = {}
    for p in seg.pipelining_segments:
        for sid in p.streams:
            if sid in muxed:
                classes[sid] = MULTIPLEXED
            elif len(p.streams) >= 2:
                classes[sid] = PIPELINED
            else:
                classes[sid] = PLAIN_CLASS
    return dict(sorted(classes.items()))
