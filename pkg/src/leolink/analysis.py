"""Latency isolation, smoothing, spike detection, and cohort statistics.

Per tick, the satellite segment's round trip is the endpoint hop RTT
minus the terrestrial hop RTT measured in the same tick.  The isolated
series is smoothed with a centered moving median before any detection:
a single lost-and-retransmitted frame can throw one tick by tens of
milliseconds without the link state changing.

Spike taxonomy over a smoothed series with session median m and
standard deviation sigma (both computed on the smoothed series):

* sustained spike: a maximal run above m + 2*sigma lasting at least
  15 seconds; these track real route changes.
* standard spike: any other maximal excursion above m + 1*sigma; short
  excursions count as standard even when their peak clears 2*sigma.

Event spans are half-open [start, end): the end is the first tick after
the run, one nominal tick interval past the last sample in it, so a run
of 15 one-second ticks lasts exactly 15 s.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .discovery import Endpoint
from .geo import haversine_km
from .probe import MeasurementSession

SMOOTHING_WINDOW_S = 15.0
SUSTAINED_MIN_MS = 15_000
SUSTAINED_SIGMA = 2.0
STANDARD_SIGMA = 1.0
JITTER_MAX_DEVIATION_MS = 1.0
MIN_DETECTION_SPAN_MS = 60_000

KIND_SUSTAINED = "sustained"
KIND_STANDARD = "standard"


class AnalysisError(ValueError):
    pass


class EmptySeriesError(AnalysisError):
    """No paired ticks survived; nothing to analyze."""


class SessionUnusableError(AnalysisError):
    """Terrestrial reference loss exceeded the usability bound."""


@dataclass
class LatencySeries:
    """A timestamped latency series in milliseconds."""

    timestamps_ms: np.ndarray  # int64, strictly increasing
    values_ms: np.ndarray      # float64, non-negative
    source: str = "isolated"

    def __post_init__(self) -> None:
        self.timestamps_ms = np.asarray(self.timestamps_ms, dtype=np.int64)
        self.values_ms = np.asarray(self.values_ms, dtype=np.float64)
        if self.timestamps_ms.shape != self.values_ms.shape:
            raise ValueError("timestamps and values must align")
        if len(self.timestamps_ms) > 1 and np.any(np.diff(self.timestamps_ms) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps_ms)

    @property
    def span_ms(self) -> int:
        if len(self) == 0:
            return 0
        return int(self.timestamps_ms[-1] - self.timestamps_ms[0])

    def tick_interval_ms(self) -> float:
        """Nominal inter-sample gap; median of the observed gaps."""
        if len(self) < 2:
            return 1000.0
        return float(np.median(np.diff(self.timestamps_ms)))


@dataclass(frozen=True)
class SpikeEvent:
    start_ms: int
    end_ms: int  # exclusive
    kind: str
    peak_ms: float
    baseline_median_ms: float

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class SessionStats:
    min_ms: float
    median_ms: float
    mean_ms: float
    stddev_ms: float
    loss_fraction: float
    spike_time_fraction: float


@dataclass
class PopAggregate:
    pop_code: str
    n_endpoints: int
    mean_of_means_ms: float
    stddev_of_means_ms: float
    endpoint_stats: list[tuple[str, SessionStats]] = field(default_factory=list)


def isolate_satellite_latency(session: MeasurementSession) -> tuple[LatencySeries, int]:
    """Subtract per-tick terrestrial RTT from endpoint RTT.

    Ticks where either probe was lost are omitted.  Occasional negative
    differences (jitter on the terrestrial probe exceeding the satellite
    segment) are clamped to zero and counted; the count is returned with
    the series.  Raises if the session is unusable or no tick paired.
    """
    if not session.usable:
        raise SessionUnusableError(
            f"{session.path.target}: terrestrial loss "
            f"{session.terrestrial_loss_fraction:.0%} exceeds 50%")
    timestamps: list[int] = []
    values: list[float] = []
    clamped = 0
    for terr, endp in zip(session.terrestrial_samples, session.endpoint_samples):
        if terr.lost or endp.lost:
            continue
        diff_ms = (endp.rtt_us - terr.rtt_us) / 1000.0
        if diff_ms < 0.0:
            diff_ms = 0.0
            clamped += 1
        timestamps.append(endp.timestamp_ms)
        values.append(diff_ms)
    if not values:
        raise EmptySeriesError(f"{session.path.target}: no paired ticks")
    series = LatencySeries(np.array(timestamps), np.array(values), source="isolated")
    return series, clamped


def terrestrial_series(session: MeasurementSession) -> LatencySeries:
    """RTT series of the terrestrial reference hop, for jitter screening."""
    pairs = [(s.timestamp_ms, s.rtt_us / 1000.0)
             for s in session.terrestrial_samples if not s.lost]
    if not pairs:
        raise EmptySeriesError(f"{session.path.target}: terrestrial hop never answered")
    ts, vs = zip(*pairs)
    return LatencySeries(np.array(ts), np.array(vs), source="terrestrial")


def smooth(series: LatencySeries, window_s: float = SMOOTHING_WINDOW_S) -> LatencySeries:
    """Centered moving median over a time window.

    The window is [t - w/2, t + w/2] and is truncated at the series
    edges.  Timestamps are preserved.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    n = len(series)
    if n == 0:
        return LatencySeries(series.timestamps_ms.copy(), series.values_ms.copy(),
                             source=series.source)
    half_ms = window_s * 1000.0 / 2.0
    ts = series.timestamps_ms
    vs = series.values_ms
    out = np.empty(n, dtype=np.float64)
    lo = np.searchsorted(ts, ts - half_ms, side="left")
    hi = np.searchsorted(ts, ts + half_ms, side="right")
    for i in range(n):
        out[i] = np.median(vs[lo[i]:hi[i]])
    return LatencySeries(ts.copy(), out, source=series.source)


def _maximal_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Index ranges [i, j) of maximal True runs."""
    runs = []
    i = 0
    n = len(mask)
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    return runs


def detect_spikes(
    smoothed: LatencySeries,
    *,
    sustained_sigma: float = SUSTAINED_SIGMA,
    standard_sigma: float = STANDARD_SIGMA,
    sustained_min_ms: int = SUSTAINED_MIN_MS,
) -> list[SpikeEvent]:
    """Classify excursions of a smoothed series against its own baseline.

    The baseline median and standard deviation are computed over the
    full session.  Excursions are maximal runs above median + 1*sigma;
    a run (or sub-run) above median + 2*sigma lasting at least 15 s is
    a sustained event, anything else is standard.  A flat series
    (sigma == 0) has no events by definition.  Requires at least 60 s
    of series; shorter sessions cannot carry a meaningful baseline.
    """
    if len(smoothed) == 0:
        raise EmptySeriesError("cannot detect spikes on an empty series")
    if smoothed.span_ms < MIN_DETECTION_SPAN_MS:
        raise AnalysisError(
            f"series spans {smoothed.span_ms / 1000.0:.0f} s; need at least "
            f"{MIN_DETECTION_SPAN_MS / 1000.0:.0f} s for a baseline")
    vs = smoothed.values_ms
    ts = smoothed.timestamps_ms
    m = float(np.median(vs))
    sigma = float(np.std(vs))
    if sigma == 0.0:
        return []
    tick_ms = smoothed.tick_interval_ms()

    def span(i: int, j: int) -> tuple[int, int]:
        # Half-open [start, end): end is one tick past the last sample.
        return int(ts[i]), int(ts[j - 1] + tick_ms)

    events: list[SpikeEvent] = []
    for i, j in _maximal_runs(vs > m + standard_sigma * sigma):
        sustained_here: list[SpikeEvent] = []
        for a, b in _maximal_runs(vs[i:j] > m + sustained_sigma * sigma):
            start, end = span(i + a, i + b)
            if end - start >= sustained_min_ms:
                sustained_here.append(SpikeEvent(
                    start_ms=start, end_ms=end, kind=KIND_SUSTAINED,
                    peak_ms=float(np.max(vs[i + a:i + b])),
                    baseline_median_ms=m,
                ))
        if sustained_here:
            events.extend(sustained_here)
        else:
            start, end = span(i, j)
            events.append(SpikeEvent(
                start_ms=start, end_ms=end, kind=KIND_STANDARD,
                peak_ms=float(np.max(vs[i:j])),
                baseline_median_ms=m,
            ))
    events.sort(key=lambda e: e.start_ms)
    return events


def jitter_filter(
    candidates: Sequence[tuple[Endpoint, LatencySeries]],
    max_deviation_ms: float = JITTER_MAX_DEVIATION_MS,
) -> list[Endpoint]:
    """Keep endpoints whose terrestrial hop is effectively jitter-free.

    The screen is the maximum absolute deviation of the terrestrial RTT
    series from its own median; at most 1 ms (inclusive) passes.  A
    jittery terrestrial reference poisons the subtraction and shows up
    as fake satellite spikes, so those endpoints are dropped up front.
    """
    kept = []
    for endpoint, series in candidates:
        if len(series) == 0:
            continue
        deviation = float(np.max(np.abs(series.values_ms - np.median(series.values_ms))))
        if deviation <= max_deviation_ms:
            kept.append(endpoint)
    return kept


def session_stats(
    series: LatencySeries,
    *,
    spikes: Sequence[SpikeEvent] = (),
    expected_ticks: Optional[int] = None,
) -> SessionStats:
    """Summary statistics of an isolated series.

    ``expected_ticks`` (the scheduled probe count) turns the paired-tick
    count into a loss fraction; without it loss is reported as 0.
    """
    if len(series) == 0:
        raise EmptySeriesError("no samples to summarize")
    vs = series.values_ms
    loss = 0.0
    if expected_ticks:
        loss = max(0.0, 1.0 - len(series) / expected_ticks)
    span = series.span_ms + series.tick_interval_ms()
    spike_ms = sum(e.duration_ms for e in spikes)
    return SessionStats(
        min_ms=float(np.min(vs)),
        median_ms=float(np.median(vs)),
        mean_ms=float(np.mean(vs)),
        stddev_ms=float(np.std(vs)),
        loss_fraction=loss,
        spike_time_fraction=min(1.0, spike_ms / span) if span > 0 else 0.0,
    )


def aggregate_by_pop(
    items: Sequence[tuple[Endpoint, SessionStats]],
) -> list[PopAggregate]:
    """Group per-endpoint stats by POP code, sorted by code."""
    by_pop: dict[str, list[tuple[str, SessionStats]]] = {}
    for endpoint, st in items:
        by_pop.setdefault(endpoint.pop_code, []).append((endpoint.address, st))
    aggregates = []
    for code in sorted(by_pop):
        entries = by_pop[code]
        means = np.array([st.mean_ms for _, st in entries])
        aggregates.append(PopAggregate(
            pop_code=code,
            n_endpoints=len(entries),
            mean_of_means_ms=float(np.mean(means)),
            stddev_of_means_ms=float(np.std(means)),
            endpoint_stats=entries,
        ))
    return aggregates


def temporal_trend(
    daily: Sequence[tuple[str, PopAggregate]],
) -> list[tuple[str, float]]:
    """Per-day median of endpoint median latencies, sorted by date.

    Dates are ISO strings; the return value is plot-ready.
    """
    out = []
    for date, agg in sorted(daily, key=lambda item: item[0]):
        medians = np.array([st.median_ms for _, st in agg.endpoint_stats])
        if len(medians) == 0:
            continue
        out.append((date, float(np.median(medians))))
    return out


def min_rtt_vs_pop_distance(
    items: Sequence[tuple[Endpoint, SessionStats]],
) -> tuple[list[tuple[str, float, float]], Optional[float]]:
    """Relate each endpoint's minimum RTT to its distance from the POP.

    Needs both customer and POP coordinates; endpoints missing either
    are skipped.  Returns (address, distance_km, min_rtt_ms) rows and
    the Spearman rank correlation, or None with fewer than 3 points.
    """
    rows: list[tuple[str, float, float]] = []
    for endpoint, st in items:
        if endpoint.customer_location is None or endpoint.pop_location is None:
            continue
        lat, lon = endpoint.customer_location
        d = haversine_km(lat, lon, endpoint.pop_location.latitude,
                         endpoint.pop_location.longitude)
        rows.append((endpoint.address, d, st.min_ms))
    rho: Optional[float] = None
    if len(rows) >= 3:
        dist = [r[1] for r in rows]
        rtts = [r[2] for r in rows]
        rho = float(_scipy_stats.spearmanr(dist, rtts).statistic)
    return rows, rho
