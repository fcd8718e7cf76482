"""Distributional characterization of HTTP/2 traces and extent of pipelining.

Reports are built per capture and merged by adding counters, so partial
reports from different workers can be combined in any order.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .indicators import RATIOS, npo_indicators
from .segmenter import MULTIPLEXED, PIPELINED, SegmentationResult, detect_segments
from .stats import ecdf, pearson  # noqa: F401  (pearson is part of this module's API)
from .trace import DATA, HEADERS, S2C, Capture, ConnectionTrace, build_objects, h2_connections

SIZE_RANGES = ("(0,10]", "(10,100]", "(100,1k]", "(1k,10k]", ">10k")


def size_range(size: int) -> str | None:
    """Half-open size bucket of an object; ``None`` for empty objects."""
    if size <= 0:
        return None
    if size <= 10:
        return "(0,10]"
    if size <= 100:
        return "(10,100]"
    if size <= 1000:
        return "(100,1k]"
    if size <= 10_000:
        return "(1k,10k]"
    return ">10k"


def _frame_bucket(n: int) -> str:
    return str(n) if n < 3 else "3+"


def _add_family(a: dict[str, Counter], b: dict[str, Counter]) -> dict[str, Counter]:
    out = {k: Counter(v) for k, v in a.items()}
    for k, v in b.items():
        out[k] = out.get(k, Counter()) + v
    return out


def data_frames(conn: ConnectionTrace) -> dict[int, list[tuple[int, int]]]:
    """Per stream, the s2c DATA frames as ``(frame_len, segment count)``."""
    frames: dict[int, list[tuple[int, int]]] = {}
    for rec in conn.records:
        if rec.dir != S2C:
            continue
        for seg in rec.segments:
            if seg.frame_type != DATA or seg.stream_id == 0:
                continue
            lst = frames.setdefault(seg.stream_id, [])
            if seg.seg_offset == 0:
                lst.append((seg.frame_len, 1))
            else:
                frame_len, n = lst[-1]
                lst[-1] = (frame_len, n + 1)
    return frames


@dataclass
class CharacterizationReport:
    endpoint_connections: Counter = field(default_factory=Counter)
    objects_per_connection: Counter = field(default_factory=Counter)
    frames_per_object: Counter = field(default_factory=Counter)
    segments_per_frame: Counter = field(default_factory=Counter)
    # value-count multisets; cdf() turns them into step points
    object_size_by_frames: dict[str, Counter] = field(default_factory=dict)
    frame_size_by_segments: dict[str, Counter] = field(default_factory=dict)
    record_overhead_hist: dict[str, Counter] = field(default_factory=dict)

    @property
    def connections_per_endpoint(self) -> Counter:
        return Counter(self.endpoint_connections.values())

    def object_size_cdf_by_frames(self) -> dict[str, list[tuple[float, float]]]:
        return {k: ecdf(v) for k, v in sorted(self.object_size_by_frames.items()) if v}

    def frame_size_cdf_by_segments(self) -> dict[str, list[tuple[float, float]]]:
        return {k: ecdf(v) for k, v in sorted(self.frame_size_by_segments.items()) if v}

    def merge(self, other: "CharacterizationReport") -> "CharacterizationReport":
        return CharacterizationReport(
            self.endpoint_connections + other.endpoint_connections,
            self.objects_per_connection + other.objects_per_connection,
            self.frames_per_object + other.frames_per_object,
            self.segments_per_frame + other.segments_per_frame,
            _add_family(self.object_size_by_frames, other.object_size_by_frames),
            _add_family(self.frame_size_by_segments, other.frame_size_by_segments),
            _add_family(self.record_overhead_hist, other.record_overhead_hist),
        )

    def is_empty(self) -> bool:
        return not self.objects_per_connection


def characterize_capture(capture: Capture) -> CharacterizationReport:
    rep = CharacterizationReport()
    sizes: dict[str, Counter] = {}
    frame_sizes: dict[str, Counter] = {}
    overhead: dict[str, Counter] = {}
    for conn in h2_connections(capture):
        rep.endpoint_connections[conn.server_endpoint] += 1
        objects = build_objects(conn)
        rep.objects_per_connection[len(objects)] += 1
        frames = data_frames(conn)
        for obj in objects:
            obj_frames = frames.get(obj.stream_id, [])
            rep.frames_per_object[len(obj_frames)] += 1
            for bucket in (_frame_bucket(len(obj_frames)), "all"):
                sizes.setdefault(bucket, Counter())[obj.data_size] += 1
            for frame_len, n in obj_frames:
                rep.segments_per_frame[n] += 1
                for bucket in (str(n), "all"):
                    frame_sizes.setdefault(bucket, Counter())[frame_len] += 1
        for rec in conn.records:
            if rec.dir != S2C or not rec.segments:
                continue
            types = {s.frame_type for s in rec.segments}
            if types == {DATA}:
                kind = "data"
            elif types == {HEADERS}:
                kind = "header"
            elif DATA in types or HEADERS in types:
                kind = "mixed"
            else:
                continue
            overhead.setdefault(kind, Counter())[rec.content_len - rec.seg_bytes] += 1
    rep.object_size_by_frames = sizes
    rep.frame_size_by_segments = frame_sizes
    rep.record_overhead_hist = overhead
    return rep


def characterize(captures: Iterable[Capture]) -> CharacterizationReport:
    rep = CharacterizationReport()
    for cap in captures:
        rep = rep.merge(characterize_capture(cap))
    return rep


# --------------------------------------------------------------------------
# extent of pipelining and multiplexing


@dataclass
class ExtentReport:
    byte_shares: dict[str, Counter] = field(default_factory=dict)
    objects_by_range: Counter = field(default_factory=Counter)
    pipelined_by_range: Counter = field(default_factory=Counter)
    multiplexed_by_range: Counter = field(default_factory=Counter)
    single_segment_by_range: Counter = field(default_factory=Counter)
    # per size range: count of objects sharing their connection with n objects
    same_connection_by_range: dict[str, Counter] = field(default_factory=dict)
    pipelining_stream_counts: Counter = field(default_factory=Counter)
    multiplexing_stream_counts: Counter = field(default_factory=Counter)
    single_segment_pipelined: int = 0
    single_segment_multiplexed: int = 0

    def _share(self, num: Counter, rng: str) -> float | None:
        n = self.objects_by_range[rng]
        return num[rng] / n if n else None

    def pipelined_proportion(self, rng: str) -> float | None:
        """Share of objects in the range that are pipelined or multiplexed."""
        return self._share(self.pipelined_by_range, rng)

    def multiplexed_proportion(self, rng: str) -> float | None:
        return self._share(self.multiplexed_by_range, rng)

    def single_segment_share(self, rng: str) -> float | None:
        return self._share(self.single_segment_by_range, rng)

    def byte_share_cdfs(self) -> dict[str, list[tuple[float, float]]]:
        return {k: ecdf(v) for k, v in sorted(self.byte_shares.items()) if v}

    def merge(self, other: "ExtentReport") -> "ExtentReport":
        return ExtentReport(
            _add_family(self.byte_shares, other.byte_shares),
            self.objects_by_range + other.objects_by_range,
            self.pipelined_by_range + other.pipelined_by_range,
            self.multiplexed_by_range + other.multiplexed_by_range,
            self.single_segment_by_range + other.single_segment_by_range,
            _add_family(self.same_connection_by_range, other.same_connection_by_range),
            self.pipelining_stream_counts + other.pipelining_stream_counts,
            self.multiplexing_stream_counts + other.multiplexing_stream_counts,
            self.single_segment_pipelined + other.single_segment_pipelined,
            self.single_segment_multiplexed + other.single_segment_multiplexed,
        )


def _data_segment_counts(conn: ConnectionTrace) -> Counter:
    counts: Counter = Counter()
    for rec in conn.records:
        if rec.dir == S2C:
            for seg in rec.segments:
                if seg.frame_type == DATA and seg.stream_id != 0:
                    counts[seg.stream_id] += 1
    return counts


def extent_capture(
    capture: Capture, segs: Mapping[str, SegmentationResult] | None = None
) -> ExtentReport:
    segs = {c.conn_id: (segs or {}).get(c.conn_id) or detect_segments(c)
            for c in h2_connections(capture)}
    rep = ExtentReport()
    for name, value in npo_indicators(capture, segs).ratios().items():
        if value is not None:
            rep.byte_shares.setdefault(name, Counter())[value] += 1
    for conn in h2_connections(capture):
        seg = segs[conn.conn_id]
        objects = build_objects(conn)
        seg_counts = _data_segment_counts(conn)
        for p in seg.pipelining_segments:
            rep.pipelining_stream_counts[len(p.streams)] += 1
        for m in seg.multiplexing_segments:
            rep.multiplexing_stream_counts[len(m.streams)] += 1
        for obj in objects:
            cls = seg.per_object_class[obj.stream_id]
            single = seg_counts[obj.stream_id] == 1
            if single and cls == PIPELINED:
                rep.single_segment_pipelined += 1
            elif single and cls == MULTIPLEXED:
                rep.single_segment_pipelined += 1
                rep.single_segment_multiplexed += 1
            rng = size_range(obj.data_size)
            if rng is None:
                continue
            rep.objects_by_range[rng] += 1
            if cls in (PIPELINED, MULTIPLEXED):
                rep.pipelined_by_range[rng] += 1
            if cls == MULTIPLEXED:
                rep.multiplexed_by_range[rng] += 1
            if single:
                rep.single_segment_by_range[rng] += 1
            rep.same_connection_by_range.setdefault(rng, Counter())[len(objects)] += 1
    return rep


def extent_report(
    captures: Iterable[Capture],
    segs: Mapping[str, Mapping[str, SegmentationResult]] | None = None,
) -> ExtentReport:
    """``segs`` optionally maps capture_id to per-connection segmentations."""
    rep = ExtentReport()
    for cap in captures:
        rep = rep.merge(extent_capture(cap, (segs or {}).get(cap.capture_id)))
    return rep


__all__ = [
    "RATIOS",
    "SIZE_RANGES",
    "CharacterizationReport",
    "ExtentReport",
    "characterize",
    "characterize_capture",
    "data_frames",
    "extent_capture",
    "extent_report",
    "pearson",
    "size_range",
]
