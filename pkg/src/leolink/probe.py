"""Path probing: traceroute, satellite-link identification, TTL pings.

The measurement trick: a satellite endpoint's last-mile shows up in a
traceroute as one large RTT jump between the final two responsive hops.
The hop before the jump (typically the provider POP edge) is terrestrial
and stays pinned by routing; the hop after it is the customer endpoint
reached through the satellite.  Probing both hops every tick with
TTL-pinned pings and subtracting isolates the satellite segment without
any cooperation from the endpoint.

A TTL ping is a single probe whose initial TTL equals the hop's distance
so it expires exactly there; routers answer TTL-expired even when their
addresses ignore directly addressed pings.  Flow-identifying header
fields stay constant across probes of one flow so per-flow load
balancers keep every probe on one path.

All operations run against an abstract ``Transport`` so the same code
drives real raw-socket probing and the deterministic simulator.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, runtime_checkable

from .discovery import Endpoint

DEFAULT_JUMP_THRESHOLD_MS = 10.0
DEFAULT_PROBE_TIMEOUT_S = 2.0
DEFAULT_PROBES_PER_HOP = 3
DEFAULT_MAX_TTL = 32
DEFAULT_CADENCE_HZ = 1
DEFAULT_DURATION_S = 300
UNUSABLE_LOSS_FRACTION = 0.5


class ProbeError(Exception):
    pass


class UnreachableError(ProbeError):
    """No hop responded at all; the target cannot be traced."""


class NoSatelliteJumpError(ProbeError):
    """The trace shows no RTT jump at or above the threshold."""


class InsufficientPathError(ProbeError):
    """Fewer than two responsive hops; nothing to compare."""


@dataclass(frozen=True)
class ProbeReply:
    responder: str
    rtt_us: float
    kind: str  # "ttl_expired" | "echo"


@runtime_checkable
class Transport(Protocol):
    """Probe transport with a clock.  Implementations: raw sockets
    (:mod:`leolink.rawnet`) and the simulator (:mod:`leolink.simnet`)."""

    def now_ms(self) -> int: ...

    def sleep_until_ms(self, t_ms: int) -> None: ...

    def probe(self, target: str, ttl: int, *, protocol: str = "icmp",
              flow_id: int = 0,
              timeout_s: float = DEFAULT_PROBE_TIMEOUT_S) -> Optional[ProbeReply]: ...


@dataclass(frozen=True)
class TraceHop:
    """One TTL position in a trace.

    ``responsive`` is true exactly when a responder address and at least
    one RTT sample are present.
    """

    ttl: int
    responder: Optional[str]
    rtt_samples: tuple[float, ...]  # microseconds

    @property
    def responsive(self) -> bool:
        return self.responder is not None

    @property
    def median_rtt_us(self) -> float:
        return statistics.median(self.rtt_samples)

    def __post_init__(self) -> None:
        if (self.responder is None) != (len(self.rtt_samples) == 0):
            raise ValueError("responder and rtt_samples must be both present or both absent")


@dataclass(frozen=True)
class TracerouteResult:
    target: str
    protocol: str
    flow_id: int
    hops: tuple[TraceHop, ...]
    reached: bool

    def responsive_hops(self) -> list[TraceHop]:
        return [h for h in self.hops if h.responsive]


@dataclass(frozen=True)
class SatLinkPath:
    """The two probe targets that bracket the satellite segment."""

    target: str
    pre_sat_ttl: int
    pre_sat_router: str
    post_sat_ttl: int
    jump_ms: float


@dataclass(frozen=True)
class ProbeSample:
    timestamp_ms: int
    target_ttl: int
    rtt_us: Optional[float]

    @property
    def lost(self) -> bool:
        return self.rtt_us is None


@dataclass
class MeasurementSession:
    """Paired per-tick samples of the terrestrial and endpoint hops."""

    endpoint: Endpoint
    path: SatLinkPath
    start_ms: int
    duration_s: int
    cadence_hz: int
    terrestrial_samples: list[ProbeSample] = field(default_factory=list)
    endpoint_samples: list[ProbeSample] = field(default_factory=list)

    @property
    def terrestrial_loss_fraction(self) -> float:
        if not self.terrestrial_samples:
            return 1.0
        lost = sum(1 for s in self.terrestrial_samples if s.lost)
        return lost / len(self.terrestrial_samples)

    @property
    def usable(self) -> bool:
        # More than half the terrestrial reference lost means the
        # subtraction baseline is gone.
        return self.terrestrial_loss_fraction <= UNUSABLE_LOSS_FRACTION


@dataclass(frozen=True)
class StabilityReport:
    target: str
    trials: int
    endpoint_hop_consistency: float
    terrestrial_hop_consistency: float

    @property
    def ip_stable(self) -> bool:
        return (self.endpoint_hop_consistency == 1.0
                and self.terrestrial_hop_consistency == 1.0)


def run_traceroute(
    transport: Transport,
    target: str,
    *,
    protocol: str = "icmp",
    flow_id: int = 1,
    max_ttl: int = DEFAULT_MAX_TTL,
    probes_per_hop: int = DEFAULT_PROBES_PER_HOP,
    timeout_s: float = DEFAULT_PROBE_TIMEOUT_S,
) -> TracerouteResult:
    """Trace the path to target with a constant flow id.

    Stops at the first TTL whose responder is the target itself.  Every
    probe of the trace carries the same flow id, so per-flow load
    balancers hold the path constant.
    """
    if not 1 <= max_ttl <= 64:
        raise ValueError("max_ttl must be within [1, 64]")
    if probes_per_hop < 1:
        raise ValueError("probes_per_hop must be >= 1")
    hops: list[TraceHop] = []
    reached = False
    for ttl in range(1, max_ttl + 1):
        responder: Optional[str] = None
        samples: list[float] = []
        for _ in range(probes_per_hop):
            reply = transport.probe(target, ttl, protocol=protocol,
                                    flow_id=flow_id, timeout_s=timeout_s)
            if reply is None:
                continue
            if responder is None:
                responder = reply.responder
            samples.append(reply.rtt_us)
        hops.append(TraceHop(ttl=ttl, responder=responder, rtt_samples=tuple(samples)))
        if responder == target:
            reached = True
            break
    result = TracerouteResult(
        target=target, protocol=protocol, flow_id=flow_id,
        hops=tuple(hops), reached=reached,
    )
    if not result.responsive_hops():
        raise UnreachableError(f"{target}: no responsive hop within ttl {max_ttl}")
    return result


def identify_sat_link(
    trace: TracerouteResult,
    jump_threshold_ms: float = DEFAULT_JUMP_THRESHOLD_MS,
) -> SatLinkPath:
    """Locate the satellite segment between the last two responsive hops.

    Compares median hop RTTs; the jump must meet the threshold.  The
    last responsive hop must be the target (the endpoint answers its
    own echo), otherwise the pre/post pairing is meaningless.
    """
    responsive = trace.responsive_hops()
    if len(responsive) < 2:
        raise InsufficientPathError(
            f"{trace.target}: need two responsive hops, got {len(responsive)}")
    post = responsive[-1]
    pre = responsive[-2]
    if not trace.reached or post.responder != trace.target:
        raise InsufficientPathError(f"{trace.target}: trace did not reach the target")
    jump_ms = (post.median_rtt_us - pre.median_rtt_us) / 1000.0
    if jump_ms < jump_threshold_ms:
        raise NoSatelliteJumpError(
            f"{trace.target}: last-hop jump {jump_ms:.2f} ms below "
            f"threshold {jump_threshold_ms:.2f} ms")
    return SatLinkPath(
        target=trace.target,
        pre_sat_ttl=pre.ttl,
        pre_sat_router=pre.responder,
        post_sat_ttl=post.ttl,
        jump_ms=jump_ms,
    )


def ttl_ping(
    transport: Transport,
    target: str,
    hop_ttl: int,
    *,
    protocol: str = "icmp",
    flow_id: int = 1,
    timeout_s: float = DEFAULT_PROBE_TIMEOUT_S,
) -> ProbeSample:
    """Single probe pinned to one hop: initial TTL = max TTL = hop_ttl.

    The responder is either the hop (TTL expired) or the target itself
    when hop_ttl reaches it.  Timeout yields a lost sample.
    """
    sent_at = transport.now_ms()
    reply = transport.probe(target, hop_ttl, protocol=protocol,
                            flow_id=flow_id, timeout_s=timeout_s)
    return ProbeSample(
        timestamp_ms=sent_at,
        target_ttl=hop_ttl,
        rtt_us=None if reply is None else reply.rtt_us,
    )


def measure_session(
    transport: Transport,
    endpoint: Endpoint,
    path: SatLinkPath,
    *,
    duration_s: int = DEFAULT_DURATION_S,
    cadence_hz: int = DEFAULT_CADENCE_HZ,
    protocol: str = "icmp",
    flow_id: int = 1,
    timeout_s: float = DEFAULT_PROBE_TIMEOUT_S,
) -> MeasurementSession:
    """Probe the pre- and post-satellite hops once per tick.

    Each tick sends exactly one probe per hop target, so only one probe
    per tick crosses the satellite link (the endpoint pays one packet
    per second at the default cadence).  Ticks are scheduled on a fixed
    grid from the session start; a slow tick never shifts later ones.
    """
    if duration_s < 1:
        raise ValueError("duration_s must be >= 1")
    if not 1 <= cadence_hz <= 10:
        raise ValueError("cadence_hz must be within [1, 10]")
    session = MeasurementSession(
        endpoint=endpoint, path=path,
        start_ms=transport.now_ms(),
        duration_s=duration_s, cadence_hz=cadence_hz,
    )
    tick_ms = 1000 // cadence_hz
    n_ticks = duration_s * cadence_hz
    for k in range(n_ticks):
        transport.sleep_until_ms(session.start_ms + k * tick_ms)
        session.terrestrial_samples.append(
            ttl_ping(transport, path.target, path.pre_sat_ttl,
                     protocol=protocol, flow_id=flow_id, timeout_s=timeout_s))
        session.endpoint_samples.append(
            ttl_ping(transport, path.target, path.post_sat_ttl,
                     protocol=protocol, flow_id=flow_id, timeout_s=timeout_s))
    return session


def validate_hop_stability(
    transport: Transport,
    path: SatLinkPath,
    *,
    trials: int = 100,
    interval_s: float = 1.0,
    protocol: str = "icmp",
    flow_id: int = 1,
    max_ttl: int = DEFAULT_MAX_TTL,
) -> StabilityReport:
    """Re-trace the path repeatedly and score hop agreement.

    A trial agrees on the endpoint hop when the last responsive hop sits
    at the same TTL with the same responder as the reference path, and
    on the terrestrial hop when the second-to-last matches likewise.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    endpoint_ok = 0
    terrestrial_ok = 0
    started = transport.now_ms()
    for k in range(trials):
        transport.sleep_until_ms(started + int(k * interval_s * 1000))
        try:
            trace = run_traceroute(transport, path.target, protocol=protocol,
                                   flow_id=flow_id, max_ttl=max_ttl,
                                   probes_per_hop=1)
        except UnreachableError:
            continue
        responsive = trace.responsive_hops()
        last = responsive[-1]
        if last.ttl == path.post_sat_ttl and last.responder == path.target:
            endpoint_ok += 1
        if len(responsive) >= 2:
            second = responsive[-2]
            if second.ttl == path.pre_sat_ttl and second.responder == path.pre_sat_router:
                terrestrial_ok += 1
    return StabilityReport(
        target=path.target,
        trials=trials,
        endpoint_hop_consistency=endpoint_ok / trials,
        terrestrial_hop_consistency=terrestrial_ok / trials,
    )
