"""Capture, connection and record types plus the line-delimited trace format.

A trace file holds one JSON object per line. Three line kinds exist::

    {"kind":"capture","capture_id":"c0","site":"example.org","day":"2017-05-01"}
    {"kind":"conn","capture_id":"c0","conn_id":"k1","server":"10.0.0.1:443","protocol":"http2_tls"}
    {"kind":"rec","conn_id":"k1","dir":"s2c","t":0.051000,"wire_len":138,"content_len":133,
     "segs":[{"stream":1,"ftype":"HEADERS","frame_len":100,"off":0,"len":100}]}

Record lines belong to the most recent capture line and reference one of its
connections. Attacker-view files use the same grammar with empty ``segs`` and
protocol ``tls``.
"""

from __future__ import annotations

import datetime as dt
import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Iterator

C2S = "c2s"
S2C = "s2c"
DIRECTIONS = (C2S, S2C)

PLAIN = "plain"
HTTP1_TLS = "http1_tls"
HTTP2_TLS = "http2_tls"
TLS = "tls"
PROTOCOLS = (PLAIN, HTTP1_TLS, HTTP2_TLS, TLS)

DATA = "DATA"
HEADERS = "HEADERS"
SETTINGS = "SETTINGS"
WINDOW_UPDATE = "WINDOW_UPDATE"
RST_STREAM = "RST_STREAM"
OTHER = "OTHER"
FRAME_TYPES = (DATA, HEADERS, SETTINGS, WINDOW_UPDATE, RST_STREAM, OTHER)
RESPONSE_TYPES = (HEADERS, DATA)


class TraceError(Exception):
    """Base class for trace parsing and integrity problems."""


class TraceFormatError(TraceError):
    def __init__(self, line_no: int, field_name: str, message: str):
        self.line_no = line_no
        self.field = field_name
        super().__init__(f"line {line_no}: field {field_name!r}: {message}")


class TraceValidationError(TraceError):
    pass


class IntegrityError(TraceError):
    """Frame tiling is inconsistent (gaps, overlaps, or unfinished frames)."""


@dataclass(frozen=True, slots=True)
class FrameSegment:
    stream_id: int
    frame_type: str
    frame_len: int
    seg_offset: int
    seg_len: int


@dataclass(frozen=True, slots=True)
class TlsRecordEvent:
    dir: str
    t: float
    wire_len: int
    content_len: int
    segments: tuple[FrameSegment, ...] = ()

    @property
    def seg_bytes(self) -> int:
        return sum(s.seg_len for s in self.segments)

    def streams(self) -> set[int]:
        """Non-zero stream ids with a segment in this record."""
        return {s.stream_id for s in self.segments if s.stream_id != 0}

    def is_response(self) -> bool:
        """True for s2c records carrying HEADERS or DATA of some stream."""
        return self.dir == S2C and any(
            s.frame_type in RESPONSE_TYPES and s.stream_id != 0 for s in self.segments
        )


@dataclass(frozen=True, slots=True)
class ConnectionTrace:
    conn_id: str
    server_endpoint: str
    protocol: str
    records: tuple[TlsRecordEvent, ...] = ()


@dataclass(frozen=True, slots=True)
class Capture:
    capture_id: str
    site: str
    day: dt.date
    connections: tuple[ConnectionTrace, ...] = ()


@dataclass(frozen=True, slots=True)
class WebObject:
    stream_id: int
    data_size: int
    resp_header_size: int
    req_record_time: float | None
    first_byte_time: float
    last_byte_time: float
    record_refs: tuple[int, ...] = field(default=())


# --------------------------------------------------------------------------
# validation


def _check_tiling(records: Iterable[TlsRecordEvent]) -> None:
    # open frame per (direction, stream, frame type): (frame_len, next offset)
    open_frames: dict[tuple[str, int, str], tuple[int, int]] = {}
    for i, rec in enumerate(records):
        for seg in rec.segments:
            key = (rec.dir, seg.stream_id, seg.frame_type)
            if seg.seg_offset + seg.seg_len > seg.frame_len:
                raise IntegrityError(f"record {i}: segment exceeds frame length")
            if key in open_frames:
                frame_len, expected = open_frames[key]
                if seg.seg_offset != expected or seg.frame_len != frame_len:
                    raise IntegrityError(
                        f"record {i}: stream {seg.stream_id} {seg.frame_type} frame "
                        f"expects offset {expected} of {frame_len}, "
                        f"got {seg.seg_offset} of {seg.frame_len}"
                    )
            elif seg.seg_offset != 0:
                raise IntegrityError(
                    f"record {i}: stream {seg.stream_id} {seg.frame_type} segment "
                    f"starts at offset {seg.seg_offset} with no open frame"
                )
            end = seg.seg_offset + seg.seg_len
            if end == seg.frame_len:
                open_frames.pop(key, None)
            else:
                open_frames[key] = (seg.frame_len, end)
    if open_frames:
        (d, stream, ftype), (frame_len, expected) = next(iter(open_frames.items()))
        raise IntegrityError(
            f"{d} stream {stream} {ftype} frame unfinished at {expected}/{frame_len}"
        )


def validate_connection(conn: ConnectionTrace) -> None:
    if conn.protocol not in PROTOCOLS:
        raise TraceValidationError(f"connection {conn.conn_id}: bad protocol")
    last_t = None
    for i, rec in enumerate(conn.records):
        if rec.dir not in DIRECTIONS:
            raise TraceValidationError(f"connection {conn.conn_id} record {i}: bad dir")
        if last_t is not None and rec.t < last_t:
            raise TraceValidationError(
                f"connection {conn.conn_id} record {i}: timestamp {rec.t:.6f} "
                f"precedes {last_t:.6f}"
            )
        last_t = rec.t
        if not 0 <= rec.content_len <= rec.wire_len:
            raise TraceValidationError(
                f"connection {conn.conn_id} record {i}: content_len exceeds wire_len"
            )
        if rec.segments and conn.protocol != HTTP2_TLS:
            raise TraceValidationError(
                f"connection {conn.conn_id} record {i}: frame segments on "
                f"{conn.protocol} connection"
            )
        if rec.seg_bytes > rec.content_len:
            raise TraceValidationError(
                f"connection {conn.conn_id} record {i}: segments exceed content_len"
            )
        for seg in rec.segments:
            if seg.frame_type not in FRAME_TYPES:
                raise TraceValidationError(
                    f"connection {conn.conn_id} record {i}: bad frame type"
                )
            if min(seg.frame_len, seg.seg_offset, seg.seg_len, seg.stream_id) < 0:
                raise TraceValidationError(
                    f"connection {conn.conn_id} record {i}: negative segment field"
                )
    _check_tiling(conn.records)


def validate(capture: Capture) -> None:
    seen: set[str] = set()
    for conn in capture.connections:
        if conn.conn_id in seen:
            raise TraceValidationError(
                f"capture {capture.capture_id}: duplicate connection {conn.conn_id}"
            )
        seen.add(conn.conn_id)
        validate_connection(conn)


# --------------------------------------------------------------------------
# parsing and writing


def _require(obj: dict, key: str, kind: type | tuple[type, ...], line_no: int):
    if key not in obj:
        raise TraceFormatError(line_no, key, "missing")
    value = obj[key]
    # bool is an int subclass; reject it explicitly for numeric fields
    if isinstance(value, bool) or not isinstance(value, kind):
        raise TraceFormatError(line_no, key, f"expected {kind}, got {value!r}")
    return value


def _parse_segment(raw, line_no: int) -> FrameSegment:
    if not isinstance(raw, dict):
        raise TraceFormatError(line_no, "segs", "segment is not an object")
    ftype = _require(raw, "ftype", str, line_no)
    if ftype not in FRAME_TYPES:
        raise TraceFormatError(line_no, "ftype", f"unknown frame type {ftype!r}")
    return FrameSegment(
        stream_id=_require(raw, "stream", int, line_no),
        frame_type=ftype,
        frame_len=_require(raw, "frame_len", int, line_no),
        seg_offset=_require(raw, "off", int, line_no),
        seg_len=_require(raw, "len", int, line_no),
    )


class _CaptureBuilder:
    def __init__(self, capture_id: str, site: str, day: dt.date):
        self.capture_id = capture_id
        self.site = site
        self.day = day
        self.conns: dict[str, tuple[str, str]] = {}
        self.records: dict[str, list[TlsRecordEvent]] = defaultdict(list)
        self.conn_lines: dict[str, int] = {}

    def build(self) -> Capture:
        conns = []
        for conn_id, (server, protocol) in self.conns.items():
            conn = ConnectionTrace(conn_id, server, protocol, tuple(self.records[conn_id]))
            try:
                validate_connection(conn)
            except TraceError as exc:
                raise TraceValidationError(
                    f"capture {self.capture_id} (line {self.conn_lines[conn_id]}): {exc}"
                ) from exc
            conns.append(conn)
        return Capture(self.capture_id, self.site, self.day, tuple(conns))


def iter_captures(lines: Iterable[str]) -> Iterator[Capture]:
    """Yield captures one at a time from trace lines."""
    current: _CaptureBuilder | None = None
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(line_no, "<line>", f"invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise TraceFormatError(line_no, "<line>", "not a JSON object")
        kind = _require(obj, "kind", str, line_no)
        if kind == "capture":
            if current is not None:
                yield current.build()
            day_text = _require(obj, "day", str, line_no)
            try:
                day = dt.date.fromisoformat(day_text)
            except ValueError as exc:
                raise TraceFormatError(line_no, "day", f"bad date {day_text!r}") from exc
            current = _CaptureBuilder(
                _require(obj, "capture_id", str, line_no),
                _require(obj, "site", str, line_no),
                day,
            )
        elif kind == "conn":
            if current is None:
                raise TraceFormatError(line_no, "kind", "conn line before capture line")
            cap_id = _require(obj, "capture_id", str, line_no)
            if cap_id != current.capture_id:
                raise TraceFormatError(line_no, "capture_id", f"unknown capture {cap_id!r}")
            conn_id = _require(obj, "conn_id", str, line_no)
            if conn_id in current.conns:
                raise TraceFormatError(line_no, "conn_id", f"duplicate connection {conn_id!r}")
            protocol = _require(obj, "protocol", str, line_no)
            if protocol not in PROTOCOLS:
                raise TraceFormatError(line_no, "protocol", f"unknown protocol {protocol!r}")
            current.conns[conn_id] = (_require(obj, "server", str, line_no), protocol)
            current.conn_lines[conn_id] = line_no
        elif kind == "rec":
            if current is None:
                raise TraceFormatError(line_no, "kind", "rec line before capture line")
            conn_id = _require(obj, "conn_id", str, line_no)
            if conn_id not in current.conns:
                raise TraceFormatError(line_no, "conn_id", f"unknown connection {conn_id!r}")
            direction = _require(obj, "dir", str, line_no)
            if direction not in DIRECTIONS:
                raise TraceFormatError(line_no, "dir", f"bad direction {direction!r}")
            t = float(_require(obj, "t", (int, float), line_no))
            recs = current.records[conn_id]
            if recs and t < recs[-1].t:
                raise TraceValidationError(
                    f"line {line_no}: timestamp {t:.6f} regresses on connection {conn_id}"
                )
            segs = _require(obj, "segs", list, line_no)
            recs.append(
                TlsRecordEvent(
                    dir=direction,
                    t=t,
                    wire_len=_require(obj, "wire_len", int, line_no),
                    content_len=_require(obj, "content_len", int, line_no),
                    segments=tuple(_parse_segment(s, line_no) for s in segs),
                )
            )
        else:
            raise TraceFormatError(line_no, "kind", f"unknown line kind {kind!r}")
    if current is not None:
        yield current.build()


def parse_trace(stream: IO[str] | Iterable[str]) -> list[Capture]:
    return list(iter_captures(stream))


def read_trace(path) -> list[Capture]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh)


def _q(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def _format_record(conn_id: str, rec: TlsRecordEvent) -> str:
    segs = ",".join(
        f'{{"stream":{s.stream_id},"ftype":{_q(s.frame_type)},"frame_len":{s.frame_len},'
        f'"off":{s.seg_offset},"len":{s.seg_len}}}'
        for s in rec.segments
    )
    return (
        f'{{"kind":"rec","conn_id":{_q(conn_id)},"dir":{_q(rec.dir)},"t":{rec.t:.6f},'
        f'"wire_len":{rec.wire_len},"content_len":{rec.content_len},"segs":[{segs}]}}'
    )


def iter_trace_lines(captures: Iterable[Capture]) -> Iterator[str]:
    for cap in captures:
        yield (
            f'{{"kind":"capture","capture_id":{_q(cap.capture_id)},"site":{_q(cap.site)},'
            f'"day":{_q(cap.day.isoformat())}}}'
        )
        for conn in cap.connections:
            yield (
                f'{{"kind":"conn","capture_id":{_q(cap.capture_id)},'
                f'"conn_id":{_q(conn.conn_id)},"server":{_q(conn.server_endpoint)},'
                f'"protocol":{_q(conn.protocol)}}}'
            )
        for conn in cap.connections:
            for rec in conn.records:
                yield _format_record(conn.conn_id, rec)


def write_trace(captures: Iterable[Capture], stream: IO[str] | None = None) -> str:
    """Serialize captures; returns the text and also writes it to ``stream`` if given."""
    text = "".join(line + "\n" for line in iter_trace_lines(captures))
    if stream is not None:
        stream.write(text)
    return text


# --------------------------------------------------------------------------
# derived views


def attacker_view(capture: Capture) -> Capture:
    """Strip frame-level ground truth; keep directions, times and lengths."""
    conns = tuple(
        replace(
            conn,
            protocol=PLAIN if conn.protocol == PLAIN else TLS,
            records=tuple(replace(r, segments=()) for r in conn.records),
        )
        for conn in capture.connections
    )
    return replace(capture, connections=conns)


def build_objects(conn: ConnectionTrace) -> list[WebObject]:
    """One WebObject per stream that carried response HEADERS or DATA.

    Objects are ordered by first response byte time, ties by stream id.
    """
    if conn.protocol != HTTP2_TLS:
        raise ValueError(f"connection {conn.conn_id} is {conn.protocol}, not http2_tls")
    _check_tiling(conn.records)

    data: dict[int, int] = defaultdict(int)
    headers: dict[int, int] = defaultdict(int)
    refs: dict[int, list[int]] = defaultdict(list)
    first: dict[int, float] = {}
    last: dict[int, float] = {}
    req_time: dict[int, float] = {}
    responding: set[int] = set()

    for i, rec in enumerate(conn.records):
        if rec.dir == C2S:
            for seg in rec.segments:
                if seg.frame_type == HEADERS and seg.stream_id != 0:
                    req_time[seg.stream_id] = rec.t
            continue
        for sid in sorted({s.stream_id for s in rec.segments}):
            refs[sid].append(i)
        for seg in rec.segments:
            sid = seg.stream_id
            if seg.frame_type not in RESPONSE_TYPES or sid == 0:
                continue
            responding.add(sid)
            first.setdefault(sid, rec.t)
            last[sid] = rec.t
            # tiling has been checked, so summing segments counts each frame once
            if seg.frame_type == DATA:
                data[sid] += seg.seg_len
            else:
                headers[sid] += seg.seg_len

    objects = [
        WebObject(
            stream_id=sid,
            data_size=data[sid],
            resp_header_size=headers[sid],
            req_record_time=req_time.get(sid),
            first_byte_time=first[sid],
            last_byte_time=last[sid],
            record_refs=tuple(refs[sid]),
        )
        for sid in responding
    ]
    objects.sort(key=lambda o: (o.first_byte_time, o.stream_id))
    return objects


def h2_connections(capture: Capture) -> list[ConnectionTrace]:
    return [c for c in capture.connections if c.protocol == HTTP2_TLS]
