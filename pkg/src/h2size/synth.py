"""Synthetic HTTP/2-over-TLS captures with full frame-level ground truth.

The generator models a client-side capture. The client sends request bursts,
requests reach the server half an RTT later, and response records arrive
back-to-back at the bottleneck bandwidth. Three server scheduling policies
are supported:

* ``sequential``: one request per burst; the next request waits for the
  previous response and a think-time gap.
* ``pipelined``: bursts of requests answered one response after another.
* ``round_robin``: bursts of requests whose DATA frames are interleaved one
  frame at a time across all active streams.

All times are computed on an integer microsecond grid so that traces survive
a write/parse round trip unchanged.
"""

from __future__ import annotations

import datetime as dt
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field, fields, replace
from typing import Any

from .trace import (
    C2S,
    DATA,
    HEADERS,
    HTTP1_TLS,
    HTTP2_TLS,
    OTHER,
    PLAIN,
    S2C,
    SETTINGS,
    WINDOW_UPDATE,
    Capture,
    ConnectionTrace,
    FrameSegment,
    TlsRecordEvent,
)

TLS_RECORD_HEADER = 5
MAX_FRAME_LIMIT = 16384
POLICIES = ("sequential", "pipelined", "round_robin")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Dist:
    """A small sampling distribution.

    ``kind`` is one of ``const``, ``uniform``, ``loguniform`` or ``choice``.
    """

    kind: str
    params: tuple = ()

    @classmethod
    def const(cls, value) -> "Dist":
        return cls("const", (value,))

    @classmethod
    def uniform(cls, lo, hi) -> "Dist":
        return cls("uniform", (lo, hi))

    @classmethod
    def loguniform(cls, lo, hi) -> "Dist":
        return cls("loguniform", (lo, hi))

    @classmethod
    def choice(cls, *values) -> "Dist":
        return cls("choice", tuple(values))

    @classmethod
    def from_json(cls, raw) -> "Dist":
        if isinstance(raw, Dist):
            return raw
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return cls.const(raw)
        if isinstance(raw, dict) and len(raw) == 1:
            (kind, params), = raw.items()
            if kind == "const":
                return cls.const(params)
            if kind in ("uniform", "loguniform", "choice") and isinstance(params, list):
                return cls(kind, tuple(params))
        raise ConfigError(f"bad distribution {raw!r}")

    def to_json(self):
        if self.kind == "const":
            return {"const": self.params[0]}
        return {self.kind: list(self.params)}

    def bounds(self) -> tuple[float, float]:
        if self.kind == "const":
            return self.params[0], self.params[0]
        if self.kind == "choice":
            return min(self.params), max(self.params)
        return self.params[0], self.params[1]

    def check(self, name: str) -> None:
        expected = {"const": 1, "uniform": 2, "loguniform": 2}
        if self.kind == "choice":
            if not self.params:
                raise ConfigError(f"{name}: empty choice")
        elif self.kind not in expected or len(self.params) != expected[self.kind]:
            raise ConfigError(f"{name}: bad distribution {self}")
        lo, hi = self.bounds()
        if lo > hi:
            raise ConfigError(f"{name}: lower bound above upper bound")
        if self.kind == "loguniform" and lo <= 0:
            raise ConfigError(f"{name}: loguniform needs positive bounds")

    def sample(self, rng: random.Random) -> float:
        if self.kind == "const":
            return self.params[0]
        if self.kind == "choice":
            return rng.choice(self.params)
        lo, hi = self.params
        if self.kind == "uniform":
            return rng.uniform(lo, hi)
        return math.exp(rng.uniform(math.log(lo), math.log(hi)))

    def sample_int(self, rng: random.Random) -> int:
        if self.kind == "uniform" and all(isinstance(p, int) for p in self.params):
            return rng.randint(*self.params)
        return int(round(self.sample(rng)))


@dataclass(frozen=True)
class SynthConfig:
    n_connections: int = 2
    objects_per_connection: Dist = Dist.uniform(1, 8)
    object_size: Dist = Dist.loguniform(1, 200_000)
    policy: str = "sequential"
    max_frame: int = 16384
    data_seg_target: int = 1381
    data_record_overhead: int = 24
    header_record_overhead: int = 33
    header_size: Dist = Dist.uniform(40, 300)
    request_size: Dist = Dist.uniform(40, 300)
    rtt: float = 0.05
    think_time: Dist = Dist.uniform(0.6, 1.2)
    bandwidth: float = 10e6
    seed: int = 0
    burst_size: Dist = Dist.uniform(2, 5)
    request_spacing: float = 0.0001
    handshake: tuple[int, ...] = (45, 37)
    end_marker: int | None = 41
    # probability that a response HEADERS frame shares the preceding DATA record
    mix_records: float = 0.0
    profile: str = "default"
    site: str = "synth.example"
    day: dt.date = dt.date(2017, 5, 1)
    capture_id: str | None = None
    n_servers: int = 1
    conn_stagger: float = 0.01
    http1_connections: int = 0
    plain_connections: int = 0

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if not 0 < self.max_frame <= MAX_FRAME_LIMIT:
            raise ConfigError("max_frame must be in (0, 16384]")
        if self.data_seg_target + self.data_record_overhead > MAX_FRAME_LIMIT + 24:
            raise ConfigError("data_seg_target + data_record_overhead exceeds 16408")
        for name in ("data_seg_target", "data_record_overhead", "header_record_overhead",
                     "bandwidth", "n_servers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("n_connections", "http1_connections", "plain_connections"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.rtt < 0 or self.request_spacing < 0 or self.conn_stagger < 0:
            raise ConfigError("negative timing parameter")
        if not 0.0 <= self.mix_records <= 1.0:
            raise ConfigError("mix_records must be a probability")
        dists = {
            "objects_per_connection": self.objects_per_connection,
            "object_size": self.object_size,
            "header_size": self.header_size,
            "request_size": self.request_size,
            "think_time": self.think_time,
            "burst_size": self.burst_size,
        }
        for name, dist in dists.items():
            dist.check(name)
        if self.think_time.bounds()[0] < 0:
            raise ConfigError("think_time must not produce negative gaps")
        if self.object_size.bounds()[0] < 0 or self.objects_per_connection.bounds()[0] < 0:
            raise ConfigError("sizes and counts must be non-negative")
        if self.burst_size.bounds()[0] < 1:
            raise ConfigError("burst_size must be at least 1")
        for name in ("header_size", "request_size"):
            lo, hi = dists[name].bounds()
            if lo <= 0 or hi > self.max_frame:
                raise ConfigError(f"{name} must lie in (0, max_frame]")
        for size in self.handshake:
            if size < self.data_record_overhead:
                raise ConfigError("handshake record smaller than record overhead")
        if self.end_marker is not None and self.end_marker < self.data_record_overhead:
            raise ConfigError("end_marker smaller than record overhead")

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "SynthConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in raw.items():
            if key == "kind":
                continue
            if key not in known:
                raise ConfigError(f"unknown config field {key!r}")
            default = known[key].default
            if isinstance(default, Dist):
                value = Dist.from_json(value)
            elif key == "handshake":
                value = tuple(value)
            elif key == "day":
                value = dt.date.fromisoformat(value)
            kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": "synth"}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Dist):
                value = value.to_json()
            elif isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, dt.date):
                value = value.isoformat()
            out[f.name] = value
        return out


def load_config(path) -> SynthConfig:
    """Read a config file: one JSON object, optionally tagged ``"kind": "synth"``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    if raw.get("kind", "synth") != "synth":
        raise ConfigError(f"{path}: unexpected kind {raw['kind']!r}")
    return SynthConfig.from_dict(raw)


@dataclass(frozen=True)
class ObjectTruth:
    conn_id: str
    stream_id: int
    size: int
    header_size: int
    request_time: float
    round: int


@dataclass
class GroundTruth:
    objects: list[ObjectTruth] = field(default_factory=list)
    profile: str = "default"

    def sizes(self, conn_id: str) -> dict[int, int]:
        return {o.stream_id: o.size for o in self.objects if o.conn_id == conn_id}

    def rounds(self, conn_id: str) -> int:
        return len({o.round for o in self.objects if o.conn_id == conn_id})


def packetize_object(size: int, cfg: SynthConfig) -> list[tuple[int, list[int]]]:
    """Split ``size`` data bytes into frames and each frame into record segments."""
    frames = []
    remaining = size
    while remaining > 0:
        frame_len = min(remaining, cfg.max_frame)
        segs = [cfg.data_seg_target] * (frame_len // cfg.data_seg_target)
        if frame_len % cfg.data_seg_target:
            segs.append(frame_len % cfg.data_seg_target)
        frames.append((frame_len, segs))
        remaining -= frame_len
    return frames


def _us(seconds: float) -> int:
    return int(round(seconds * 1_000_000))


def _rec(direction: str, t_us: int, content: int, segs=()) -> tuple[int, TlsRecordEvent]:
    return t_us, TlsRecordEvent(
        dir=direction,
        t=t_us / 1_000_000,
        wire_len=content + TLS_RECORD_HEADER,
        content_len=content,
        segments=tuple(segs),
    )


class _ServerLink:
    """Server-to-client record emitter at the bottleneck bandwidth."""

    def __init__(self, bandwidth: float):
        self.bandwidth = bandwidth
        self.clock = 0
        self.records: list[tuple[int, TlsRecordEvent]] = []

    def _tx(self, content: int) -> int:
        return max(1, math.ceil((content + TLS_RECORD_HEADER) * 1_000_000 / self.bandwidth))

    def emit(self, ready_us: int, content: int, segs) -> None:
        self.clock = max(ready_us, self.clock) + self._tx(content)
        self.records.append(_rec(S2C, self.clock, content, segs))

    def coalesce(self, content: int, segs) -> None:
        t_us, prev = self.records[-1]
        self.clock += self._tx(content)
        self.records[-1] = _rec(
            S2C, t_us, prev.content_len + content, prev.segments + tuple(segs)
        )


@dataclass
class _Response:
    stream_id: int
    ready_us: int
    header_len: int
    frames: list[tuple[int, list[int]]]
    header_sent: bool = False


def _signal(link: _ServerLink, cfg: SynthConfig, ready_us: int, content: int, ftype: str):
    link.emit(ready_us, content, [FrameSegment(0, ftype, content - cfg.data_record_overhead,
                                               0, content - cfg.data_record_overhead)])


def _send_header(link: _ServerLink, cfg: SynthConfig, resp: _Response, rng: random.Random):
    seg = FrameSegment(resp.stream_id, HEADERS, resp.header_len, 0, resp.header_len)
    resp.header_sent = True
    prev = link.records[-1][1] if link.records else None
    if (
        cfg.mix_records > 0
        and prev is not None
        and prev.segments
        and all(s.frame_type == DATA and s.stream_id != resp.stream_id for s in prev.segments)
        and rng.random() < cfg.mix_records
    ):
        link.coalesce(resp.header_len, [seg])
        return
    link.emit(resp.ready_us, resp.header_len + cfg.header_record_overhead, [seg])


def _send_frame(link: _ServerLink, cfg: SynthConfig, resp: _Response) -> None:
    frame_len, segs = resp.frames.pop(0)
    off = 0
    for seg_len in segs:
        link.emit(
            resp.ready_us,
            seg_len + cfg.data_record_overhead,
            [FrameSegment(resp.stream_id, DATA, frame_len, off, seg_len)],
        )
        off += seg_len


def _finish(link: _ServerLink, cfg: SynthConfig, resp: _Response) -> None:
    if cfg.end_marker is not None:
        _signal(link, cfg, resp.ready_us, cfg.end_marker, OTHER)


def _serve_fifo(link, cfg, responses, rng) -> None:
    for resp in responses:
        _send_header(link, cfg, resp, rng)
        while resp.frames:
            _send_frame(link, cfg, resp)
        _finish(link, cfg, resp)


def _serve_round_robin(link, cfg, responses, rng) -> None:
    waiting = deque(sorted(responses, key=lambda r: (r.ready_us, r.stream_id)))
    active: deque[_Response] = deque()
    while waiting or active:
        while waiting and waiting[0].ready_us <= link.clock:
            active.append(waiting.popleft())
        if not active:
            active.append(waiting.popleft())
        resp = active.popleft()
        if not resp.header_sent:
            _send_header(link, cfg, resp, rng)
        else:
            _send_frame(link, cfg, resp)
        while waiting and waiting[0].ready_us <= link.clock:
            active.append(waiting.popleft())
        if resp.frames:
            active.append(resp)
        else:
            _finish(link, cfg, resp)


def _h2_connection(cfg: SynthConfig, rng: random.Random, conn_id: str, server: str,
                   start_us: int) -> tuple[ConnectionTrace, list[ObjectTruth]]:
    rtt = _us(cfg.rtt)
    c2s: list[tuple[int, TlsRecordEvent]] = [
        _rec(C2S, start_us, 18 + cfg.data_record_overhead,
             [FrameSegment(0, SETTINGS, 18, 0, 18)])
    ]
    link = _ServerLink(cfg.bandwidth)
    link.clock = start_us
    for i, size in enumerate(cfg.handshake):
        _signal(link, cfg, start_us + rtt, size, SETTINGS if i == 0 else WINDOW_UPDATE)

    n_objects = max(0, cfg.objects_per_connection.sample_int(rng))
    bursts: list[int] = []
    while sum(bursts) < n_objects:
        k = 1 if cfg.policy == "sequential" else max(1, cfg.burst_size.sample_int(rng))
        bursts.append(min(k, n_objects - sum(bursts)))

    truth: list[ObjectTruth] = []
    stream_id = 1
    send_us = start_us + 1
    for round_no, k in enumerate(bursts):
        if round_no > 0:
            send_us = link.clock + max(1, _us(cfg.think_time.sample(rng)))
        responses = []
        for j in range(k):
            t_req = send_us + j * _us(cfg.request_spacing)
            req_len = cfg.request_size.sample_int(rng)
            c2s.append(_rec(C2S, t_req, req_len + cfg.header_record_overhead,
                            [FrameSegment(stream_id, HEADERS, req_len, 0, req_len)]))
            size = max(0, cfg.object_size.sample_int(rng))
            hdr = cfg.header_size.sample_int(rng)
            responses.append(_Response(stream_id, t_req + rtt, hdr, packetize_object(size, cfg)))
            truth.append(ObjectTruth(conn_id, stream_id, size, hdr, t_req / 1e6, round_no))
            stream_id += 2
        if cfg.policy == "round_robin":
            _serve_round_robin(link, cfg, responses, rng)
        else:
            _serve_fifo(link, cfg, responses, rng)

    merged = sorted(c2s + link.records, key=lambda item: item[0])
    records = tuple(rec for _, rec in merged)
    return ConnectionTrace(conn_id, server, HTTP2_TLS, records), truth


def _legacy_connection(cfg: SynthConfig, rng: random.Random, conn_id: str, server: str,
                       protocol: str, start_us: int) -> ConnectionTrace:
    """HTTP/1-style request/response exchange without frame segments."""
    rtt = _us(cfg.rtt)
    link = _ServerLink(cfg.bandwidth)
    c2s = []
    send_us = start_us
    chunk = cfg.data_seg_target
    for _ in range(max(1, cfg.objects_per_connection.sample_int(rng))):
        c2s.append(_rec(C2S, send_us, cfg.request_size.sample_int(rng) + 200))
        size = max(1, cfg.object_size.sample_int(rng)) + cfg.header_size.sample_int(rng)
        while size > 0:
            piece = min(size, chunk)
            link.emit(send_us + rtt, piece + cfg.data_record_overhead, ())
            size -= piece
        send_us = link.clock + max(1, _us(cfg.think_time.sample(rng)))
    merged = sorted(c2s + link.records, key=lambda item: item[0])
    return ConnectionTrace(conn_id, server, protocol, tuple(r for _, r in merged))


def generate_with_truth(cfg: SynthConfig) -> tuple[Capture, GroundTruth]:
    cfg.validate()
    rng = random.Random(cfg.seed)
    truth = GroundTruth(profile=cfg.profile)
    conns = []
    for i in range(cfg.n_connections):
        conn_id = f"{cfg.profile}/{i}"
        server = f"192.0.2.{i % cfg.n_servers + 1}:443"
        conn, objs = _h2_connection(cfg, rng, conn_id, server, _us(i * cfg.conn_stagger))
        conns.append(conn)
        truth.objects.extend(objs)
    legacy = [(HTTP1_TLS, "h1")] * cfg.http1_connections + [(PLAIN, "plain")] * cfg.plain_connections
    for j, (protocol, tag) in enumerate(legacy):
        conns.append(_legacy_connection(cfg, rng, f"{cfg.profile}/{tag}{j}",
                                        f"198.51.100.{j + 1}:443", protocol,
                                        _us(j * cfg.conn_stagger)))
    capture_id = cfg.capture_id or f"{cfg.profile}-{cfg.seed}"
    return Capture(capture_id, cfg.site, cfg.day, tuple(conns)), truth


def generate_capture(cfg: SynthConfig) -> Capture:
    return generate_with_truth(cfg)[0]


def generate_corpus(cfg: SynthConfig, n_captures: int) -> list[Capture]:
    """Independent captures with seeds derived from ``cfg.seed``."""
    seeds = random.Random(cfg.seed)
    out = []
    for i in range(n_captures):
        sub = replace(cfg, seed=seeds.randrange(2**31),
                      capture_id=f"{cfg.capture_id or cfg.profile}-{cfg.seed}-{i}")
        out.append(generate_capture(sub))
    return out


# --------------------------------------------------------------------------
# exact byte-share construction


def _chunks(total: int, overhead: int, max_content: int) -> list[int]:
    """Record content lengths summing to ``total``, each in (overhead, max_content]."""
    n = max(1, math.ceil(total / max_content))
    base, extra = divmod(total, n)
    out = [base + (1 if i < extra else 0) for i in range(n)]
    if min(out) <= overhead:
        raise ConfigError(f"cannot split {total} bytes into records")
    return out


def generate_share_capture(
    enc_bytes: int,
    h2_bytes: int,
    pipelined_bytes: int,
    multiplexed_bytes: int,
    *,
    capture_id: str = "shares",
    site: str = "synth.example",
    day: dt.date = dt.date(2017, 5, 1),
    header_len: int = 100,
    overhead: int = 24,
    header_overhead: int = 33,
) -> Capture:
    """Capture whose s2c byte totals hit the requested indicator numerators exactly.

    The HTTP/2 connection carries one lone object followed by a two-object
    pipelining segment; the two objects overlap for exactly
    ``multiplexed_bytes``. The remaining encrypted bytes ride an http1_tls
    connection.
    """
    hrec = header_len + header_overhead
    lone = h2_bytes - pipelined_bytes
    outer = pipelined_bytes - multiplexed_bytes
    if not (enc_bytes >= h2_bytes and lone >= hrec + overhead + 1
            and outer >= 2 * (hrec + 2 * (overhead + 1))
            and multiplexed_bytes >= hrec + 2 * (overhead + 1)):
        raise ConfigError("byte targets too small for the construction")
    max_content = 1381 + overhead

    clock = [0]

    def tick() -> int:
        clock[0] += 100
        return clock[0]

    recs: list[tuple[int, TlsRecordEvent]] = []

    def request(stream: int) -> None:
        recs.append(_rec(C2S, tick(), 60 + header_overhead,
                         [FrameSegment(stream, HEADERS, 60, 0, 60)]))

    def header(stream: int) -> None:
        recs.append(_rec(S2C, tick(), hrec,
                         [FrameSegment(stream, HEADERS, header_len, 0, header_len)]))

    def data(stream: int, total: int) -> None:
        for content in _chunks(total, overhead, max_content):
            seg = content - overhead
            recs.append(_rec(S2C, tick(), content, [FrameSegment(stream, DATA, seg, 0, seg)]))

    request(1)
    header(1)
    data(1, lone - hrec)

    request(3)
    request(5)
    a_pre = outer // 2
    b_post = outer - a_pre
    header(3)
    data(3, a_pre - hrec)
    a_last = overhead + 1 + (multiplexed_bytes - hrec) // 4
    header(5)
    data(5, multiplexed_bytes - hrec - a_last)
    data(3, a_last)
    data(5, b_post)

    h2 = ConnectionTrace(f"{capture_id}/h2", "192.0.2.1:443", HTTP2_TLS,
                         tuple(r for _, r in recs))
    conns = [h2]
    legacy_bytes = enc_bytes - h2_bytes
    if legacy_bytes:
        legacy = [_rec(C2S, 0, 300)]
        t = 1000
        for content in _chunks(legacy_bytes, 0, 16384):
            t += 100
            legacy.append(_rec(S2C, t, content))
        conns.append(ConnectionTrace(f"{capture_id}/h1", "198.51.100.1:443", HTTP1_TLS,
                                     tuple(r for _, r in legacy)))
    return Capture(capture_id, site, day, tuple(conns))
