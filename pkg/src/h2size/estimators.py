"""Baseline size estimates, worst-case bounds per attacker assumption, error metric.

Assumption levels:

* ``A1``: pipelining segment boundaries and object counts are known.
* ``A2``: multiplexing segment boundaries and object counts are known.
* ``A3``: the records carrying each stream are known.

Bounds are sums of per-record "adjusted" bytes. When header adjustment is on
for a level, a record wholly owned by one stream and carrying its response
HEADERS contributes only its DATA bytes; every other record contributes its
full content length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .segmenter import SegmentationResult, detect_segments, response_streams
from .trace import DATA, HEADERS, ConnectionTrace, build_objects

LEVELS = ("A1", "A2", "A3")
ADJUST_MODES = {
    "all": frozenset(LEVELS),
    "literal": frozenset({"A1", "A3"}),
    "none": frozenset(),
}


class PipelinedObjectError(ValueError):
    pass


class UndefinedErrorValue(ValueError):
    pass


@dataclass(frozen=True)
class SizeBounds:
    stream_id: int
    level: str
    low: int
    high: int
    adjusted: bool


@dataclass(frozen=True)
class ErrorSample:
    stream_id: int
    s_act: int
    s_est: int
    e: float


def error_sample(stream_id: int, s_act: int, s_est: int) -> ErrorSample:
    if s_act <= 0:
        raise UndefinedErrorValue(f"stream {stream_id}: object size {s_act}")
    return ErrorSample(stream_id, s_act, s_est, (s_est - s_act) / s_act)


def baseline_estimate(
    conn: ConnectionTrace,
    seg: SegmentationResult | None = None,
    streams: Iterable[int] | None = None,
) -> list[ErrorSample]:
    """Sum of s2c records carrying any segment of each non-pipelined object.

    ``streams`` restricts the evaluation; every selected object must sit
    alone in its pipelining segment. Empty objects are skipped.
    """
    seg = seg or detect_segments(conn)
    objects = build_objects(conn)
    wanted = None if streams is None else set(streams)
    samples = []
    for obj in objects:
        if wanted is not None and obj.stream_id not in wanted:
            continue
        if len(seg.segment_of(obj.stream_id).streams) > 1:
            raise PipelinedObjectError(
                f"connection {conn.conn_id}: stream {obj.stream_id} is pipelined"
            )
        if obj.data_size == 0:
            continue
        s_est = sum(conn.records[i].content_len for i in obj.record_refs)
        samples.append(error_sample(obj.stream_id, obj.data_size, s_est))
    return samples


def adjusted_bytes(conn: ConnectionTrace, seg: SegmentationResult) -> dict[int, int]:
    """Adjusted byte count per response record index."""
    out = {}
    for i in seg.response_records:
        rec = conn.records[i]
        owners = response_streams(rec)
        if len(owners) == 1 and any(s.frame_type == HEADERS for s in rec.segments):
            out[i] = sum(s.seg_len for s in rec.segments if s.frame_type == DATA)
        else:
            out[i] = rec.content_len
    return out


def worst_case_bounds(
    conn: ConnectionTrace,
    seg: SegmentationResult | None,
    level: str,
    adjust: str = "all",
) -> list[SizeBounds]:
    if level not in LEVELS:
        raise ValueError(f"unknown assumption level {level!r}")
    if adjust not in ADJUST_MODES:
        raise ValueError(f"unknown adjustment mode {adjust!r}")
    seg = seg or detect_segments(conn)
    adjusted = level in ADJUST_MODES[adjust]
    if adjusted:
        size = adjusted_bytes(conn, seg)
    else:
        size = {i: conn.records[i].content_len for i in seg.response_records}

    bounds = []
    for sid in seg.per_object_class:
        if level == "A1":
            p = seg.segment_of(sid)
            total = sum(size[i] for i in p.records)
            low = total if len(p.streams) == 1 else 0
            high = total
        elif level == "A2":
            low = sum(size[i] for i, act in zip(seg.response_records, seg.active)
                      if act == {sid})
            high = low + sum(size[i] for m in seg.multiplexing_segments
                             if sid in m.streams for i in m.records)
        else:
            low = high = 0
            for i in seg.response_records:
                owners = response_streams(conn.records[i])
                if owners == {sid}:
                    low += size[i]
                elif sid in owners:
                    high += size[i]
            high += low
        bounds.append(SizeBounds(sid, level, low, high, adjusted))
    return bounds


def relative_error(bounds: SizeBounds, s_act: int) -> ErrorSample:
    """Worst-case error: whichever bound is farther from ``s_act``; ties pick high."""
    if s_act <= 0:
        raise UndefinedErrorValue(f"stream {bounds.stream_id}: object size {s_act}")
    e_low = (bounds.low - s_act) / s_act
    e_high = (bounds.high - s_act) / s_act
    if abs(e_low) > abs(e_high):
        return ErrorSample(bounds.stream_id, s_act, bounds.low, e_low)
    return ErrorSample(bounds.stream_id, s_act, bounds.high, e_high)
