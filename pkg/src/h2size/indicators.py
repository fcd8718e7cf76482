"""Byte-share privacy indicators per capture, and daily / per-site aggregates."""

from __future__ import annotations

import datetime as dt
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

from .segmenter import SegmentationResult, detect_segments
from .stats import tukey_summary
from .trace import HTTP1_TLS, HTTP2_TLS, S2C, TLS, Capture

RATIOS = ("h2_over_enc", "pipe_over_h2", "mux_over_pipe")
TOTALS = ("enc_http_bytes", "h2_bytes", "pipelined_bytes", "multiplexed_bytes")


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class ByteTotals:
    enc_http_bytes: int = 0
    h2_bytes: int = 0
    pipelined_bytes: int = 0
    multiplexed_bytes: int = 0

    def __add__(self, other: "ByteTotals") -> "ByteTotals":
        return ByteTotals(*(getattr(self, k) + getattr(other, k) for k in TOTALS))


@dataclass(frozen=True)
class NpoIndicators:
    byte_totals: ByteTotals

    @property
    def h2_over_enc(self) -> float | None:
        b = self.byte_totals
        return _ratio(b.h2_bytes, b.enc_http_bytes)

    @property
    def pipe_over_h2(self) -> float | None:
        b = self.byte_totals
        return _ratio(b.pipelined_bytes, b.h2_bytes)

    @property
    def mux_over_pipe(self) -> float | None:
        b = self.byte_totals
        return _ratio(b.multiplexed_bytes, b.pipelined_bytes)

    def ratios(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in RATIOS}


def npo_indicators(
    capture: Capture, segs: Mapping[str, SegmentationResult] | None = None
) -> NpoIndicators:
    """Indicators for one capture.

    ``segs`` maps conn_id to its segmentation; missing http2 connections are
    segmented on the fly. Only server-to-client record content is counted.
    """
    segs = dict(segs or {})
    enc = h2 = piped = muxed = 0
    for conn in capture.connections:
        if conn.protocol not in (HTTP1_TLS, HTTP2_TLS, TLS):
            continue
        s2c = [r for r in conn.records if r.dir == S2C]
        enc += sum(r.content_len for r in s2c)
        if conn.protocol != HTTP2_TLS:
            continue
        h2 += sum(r.content_len for r in s2c if r.segments)
        seg = segs.get(conn.conn_id) or detect_segments(conn)
        piped += sum(p.size for p in seg.pipelining_segments if len(p.streams) >= 2)
        muxed += sum(m.size for m in seg.multiplexing_segments)
    return NpoIndicators(ByteTotals(enc, h2, piped, muxed))


@dataclass(frozen=True)
class DayAggregate:
    day: dt.date
    captures: int
    unique_sites: int
    site_proportion: float
    capture_proportion: float
    indicators: NpoIndicators
    # sum over sites of each site's mean byte totals
    site_mean_bytes: dict[str, float]


@dataclass(frozen=True)
class SiteAggregate:
    site: str
    captures: int
    mean: dict[str, float | None]
    summary: dict[str, dict[str, float] | None]


@dataclass(frozen=True)
class Aggregates:
    timeline: list[DayAggregate]
    sites: list[SiteAggregate]


def aggregate_indicators(
    rows: Iterable[tuple[str, dt.date, NpoIndicators]],
    target_sites: int | None = None,
    captures_per_site: int = 3,
) -> Aggregates:
    """Daily byte-weighted indicators and per-site indicator distributions.

    ``target_sites`` defaults to the number of distinct sites seen overall.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no indicator rows")
    n_sites = target_sites or len({site for site, _, _ in rows})

    by_day: dict[dt.date, list[tuple[str, NpoIndicators]]] = defaultdict(list)
    by_site: dict[str, list[NpoIndicators]] = defaultdict(list)
    for site, day, ind in rows:
        by_day[day].append((site, ind))
        by_site[site].append(ind)

    timeline = []
    for day in sorted(by_day):
        entries = by_day[day]
        total = ByteTotals()
        per_site: dict[str, list[ByteTotals]] = defaultdict(list)
        for site, ind in entries:
            total = total + ind.byte_totals
            per_site[site].append(ind.byte_totals)
        site_mean = {
            k: math.fsum(sum(getattr(b, k) for b in lst) / len(lst) for lst in per_site.values())
            for k in TOTALS
        }
        timeline.append(DayAggregate(
            day=day,
            captures=len(entries),
            unique_sites=len(per_site),
            site_proportion=len(per_site) / n_sites,
            capture_proportion=len(entries) / (n_sites * captures_per_site),
            indicators=NpoIndicators(total),
            site_mean_bytes=site_mean,
        ))

    sites = []
    for site in sorted(by_site):
        inds = by_site[site]
        mean: dict[str, float | None] = {}
        summary: dict[str, dict[str, float] | None] = {}
        for name in RATIOS:
            vals = [v for v in (getattr(i, name) for i in inds) if v is not None]
            mean[name] = math.fsum(vals) / len(vals) if vals else None
            summary[name] = tukey_summary(vals) if vals else None
        sites.append(SiteAggregate(site, len(inds), mean, summary))
    return Aggregates(timeline, sites)
