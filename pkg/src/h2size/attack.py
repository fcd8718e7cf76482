"""Record-size and timing attack on attacker-view connections.

The attack only reads directions, timestamps and record lengths. It splits a
connection at server-side timing gaps, then walks each gap range looking for
header-sized records that open a response and short end-marker records that
close one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .estimators import ErrorSample, error_sample
from .segmenter import MULTIPLEXED, PIPELINED
from .stats import UndefinedCorrelationError, pearson
from .trace import S2C, ConnectionTrace, WebObject


@dataclass(frozen=True)
class AttackParams:
    abs_gap: float = 0.5
    gap_factor: float = 20.0
    norm_record: int = 1500
    signal_max: int = 60
    end_marker: int = 41
    header_range: tuple[int, int] = (70, 350)
    fingerprint: tuple[int, ...] = ()
    # drop header-band records from the body sum, not just the opening one
    exclude_header_band: bool = False

    def __post_init__(self):
        if self.abs_gap <= 0 or self.gap_factor <= 0 or self.norm_record <= 0:
            raise ValueError("abs_gap, gap_factor and norm_record must be positive")
        lo, hi = self.header_range
        if lo > hi:
            raise ValueError("header_range lower bound above upper bound")

    @classmethod
    def from_dict(cls, raw: dict) -> "AttackParams":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known - {"kind"}
        if unknown:
            raise ValueError(f"unknown attack parameters: {sorted(unknown)}")
        kwargs = {k: v for k, v in raw.items() if k in known}
        for key in ("header_range", "fingerprint"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "AttackParams":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: expected a JSON object")
        return cls.from_dict(raw)


@dataclass(frozen=True)
class AttackFinding:
    conn_id: str
    est_size: int
    start_pos: int
    end_pos: int
    header_time: float
    overlapped: bool = False

    @property
    def reported_size(self) -> int | None:
        """Size the attack reports; withheld for overlapping responses."""
        return None if self.overlapped else self.est_size


def _s2c(conn: ConnectionTrace) -> list[int]:
    return [i for i, r in enumerate(conn.records) if r.dir == S2C]


def fingerprint_match(conn: ConnectionTrace, params: AttackParams) -> bool:
    k = len(params.fingerprint)
    if k == 0:
        return True
    sizes = [conn.records[i].content_len for i in _s2c(conn)[:k]]
    return tuple(sizes) == tuple(params.fingerprint)


def segment_by_gaps(conn: ConnectionTrace, params: AttackParams) -> list[tuple[int, int]]:
    """Inclusive ``(first, last)`` record-index ranges of server records.

    The average gap is taken over the back-to-back gaps (those not above
    ``abs_gap``), each scaled by ``norm_record`` over the wire length of the
    record that precedes it.
    """
    idx = _s2c(conn)
    if not idx:
        return []
    if len(idx) < 2:
        return [(idx[0], idx[-1])]
    recs = conn.records
    gaps = [recs[b].t - recs[a].t for a, b in zip(idx, idx[1:])]
    normalized = [
        g * params.norm_record / recs[a].wire_len
        for g, a in zip(gaps, idx)
        if g <= params.abs_gap and recs[a].wire_len > 0
    ]
    mean = sum(normalized) / len(normalized) if normalized else None
    ranges = []
    first = idx[0]
    for j, g in enumerate(gaps):
        if g > params.abs_gap or (mean is not None and g > params.gap_factor * mean):
            ranges.append((first, idx[j]))
            first = idx[j + 1]
    ranges.append((first, idx[-1]))
    return ranges


@dataclass
class _Open:
    start: int
    header_time: float


def _is_body(size: int, params: AttackParams) -> bool:
    if size < params.signal_max:
        return False
    lo, hi = params.header_range
    return not (params.exclude_header_band and lo <= size <= hi)


def find_responses(conn: ConnectionTrace, params: AttackParams) -> list[AttackFinding]:
    lo, hi = params.header_range
    recs = conn.records
    spans: list[tuple[int, int, float, bool]] = []  # start, end, header_time, closed_by_range
    for first, last in segment_by_gaps(conn, params):
        open_: list[_Open] = []
        prev = "boundary"
        for i in range(first, last + 1):
            rec = recs[i]
            if rec.dir != S2C:
                continue
            size = rec.content_len
            if size == params.end_marker:
                if open_:
                    o = open_.pop(0)
                    spans.append((o.start, i, o.header_time, False))
                prev = "end"
            elif size < params.signal_max:
                prev = "signal"
            elif lo <= size <= hi and prev in ("boundary", "signal", "end"):
                open_.append(_Open(i, rec.t))
                prev = "header"
            else:
                prev = "body"
        for o in open_:
            spans.append((o.start, last, o.header_time, True))

    findings = []
    for n, (start, end, t_hdr, by_range) in enumerate(spans):
        stop = end + 1 if by_range else end
        est = sum(
            recs[i].content_len
            for i in range(start + 1, stop)
            if recs[i].dir == S2C and _is_body(recs[i].content_len, params)
        )
        overlapped = any(
            start <= e2 and s2 <= end for m, (s2, e2, _, _) in enumerate(spans) if m != n
        )
        findings.append(AttackFinding(conn.conn_id, est, start, end, t_hdr, overlapped))
    findings.sort(key=lambda f: (f.header_time, f.start_pos))
    return findings


def is_attackable(conn: ConnectionTrace, params: AttackParams) -> bool:
    return any(r.dir == S2C for r in conn.records) and fingerprint_match(conn, params)


def run_attack(conn: ConnectionTrace, params: AttackParams) -> list[AttackFinding]:
    """Findings for a connection, or nothing when its fingerprint does not match."""
    if not is_attackable(conn, params):
        return []
    return find_responses(conn, params)


# --------------------------------------------------------------------------
# evaluation against ground truth


@dataclass(frozen=True)
class LabeledError:
    conn_id: str
    object_class: str
    sample: ErrorSample
    overlapped: bool


@dataclass(frozen=True)
class ConnectionEval:
    conn_id: str
    found: int
    actual: int
    pipelined: int
    multiplexed: int

    @property
    def count_diff(self) -> int:
        return self.found - self.actual


@dataclass(frozen=True)
class AttackEval:
    connections: list[ConnectionEval]
    errors: list[LabeledError] = field(default_factory=list)
    corr_pipelined: float | None = None
    corr_multiplexed: float | None = None

    def count_diffs(self) -> dict[str, int]:
        return {c.conn_id: c.count_diff for c in self.connections}


def evaluate_attack(
    findings: dict[str, list[AttackFinding]],
    truth: dict[str, tuple[list[WebObject], dict[int, str]]],
) -> AttackEval:
    """Compare findings with ground-truth objects per connection.

    ``truth`` maps conn_id to its objects and their classes. Where the counts
    agree, findings and objects are paired in header-time order. Overlapped
    findings are paired too, using their span size, so that multiplexed
    objects appear in the error distribution.
    """
    conns = []
    errors = []
    for conn_id in sorted(truth):
        objects, classes = truth[conn_id]
        found = sorted(findings.get(conn_id, []), key=lambda f: (f.header_time, f.start_pos))
        conns.append(ConnectionEval(
            conn_id,
            found=len(found),
            actual=len(objects),
            pipelined=sum(1 for c in classes.values() if c == PIPELINED),
            multiplexed=sum(1 for c in classes.values() if c == MULTIPLEXED),
        ))
        if len(found) != len(objects):
            continue
        ordered = sorted(objects, key=lambda o: (o.first_byte_time, o.stream_id))
        for f, obj in zip(found, ordered):
            if obj.data_size == 0:
                continue
            errors.append(LabeledError(
                conn_id,
                classes[obj.stream_id],
                error_sample(obj.stream_id, obj.data_size, f.est_size),
                f.overlapped,
            ))

    def corr(attr: str) -> float | None:
        try:
            return pearson([c.count_diff for c in conns], [getattr(c, attr) for c in conns])
        except UndefinedCorrelationError:
            return None

    return AttackEval(conns, errors, corr("pipelined"), corr("multiplexed"))
