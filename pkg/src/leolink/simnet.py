"""Deterministic seeded network simulator for offline pipeline testing.

A scenario describes one probe target behind a hop chain: per-segment
one-way latencies, which hops answer TTL-expired and/or echo probes,
where the satellite span sits in the chain, scheduled satellite reroute
events, and a jitter model.  ``SimnetTransport`` then answers probes
exactly like a real network would, against a virtual clock, so a
2,000-second measurement session runs in milliseconds of wall time.

Everything is reproducible: all randomness (jitter, loss) is derived
from the scenario seed and the probe coordinates, never from global
state, so identical (scenario, probe sequence, seed) produce identical
replies bit for bit regardless of thread interleaving.

Scenario files are JSON with schema id ``leolink-scenario/1``:

.. code-block:: json

    {
      "schema": "leolink-scenario/1",
      "seed": 42,
      "duration_s": 300,
      "hops": [
        {"label": "isp-edge", "address": "10.0.0.1",
         "ttl_expired": true, "echo": false},
        {"label": "customer", "address": "100.64.9.1",
         "ttl_expired": true, "echo": true}
      ],
      "base_latencies_ms": [1.0, 20.0],
      "satellite_segment": [1, 2],
      "jitter": {"dist": "gaussian", "sigma_ms": 0.5,
                 "satellite_sigma_ms": 1.5},
      "loss_probability": 0.0,
      "target_protocols": ["icmp"],
      "events": [
        {"at_s": 60, "kind": "isl_reroute", "delta_ms": 80.0,
         "duration_s": 30}
      ]
    }

``hops[i]`` answers probes whose TTL expires at position ``i + 1``;
``base_latencies_ms[i]`` is the one-way latency of the segment entering
that hop.  ``satellite_segment`` gives the 1-based hop numbers of the
last hop before and the first responding hop after the satellite link;
the spanned segments form the satellite ground truth.  Reroute deltas
attach to the first spanned segment.  Event times and durations must be
multiples of 15 seconds (the provider reschedules on a 15 s grid).

Optional knobs used by individual studies, all documented here because
they extend the schema: ``target_protocols`` limits which probe
protocols the target answers (intermediate hops expire any protocol);
``loss_probability`` drops probes uniformly; ``hop_flap`` periodically
inserts one extra terrestrial hop (``{"every_s": 25, "duration_s": 1}``)
to model transient path-length flaps; ``endpoint`` carries opaque
endpoint metadata (POP code, customer coordinates) for cohort studies.
"""
from __future__ import annotations

import hashlib
import json
import math
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

from .probe import ProbeReply

SCHEMA_ID = "leolink-scenario/1"
EVENT_KINDS = ("gs_switch", "isl_reroute", "satellite_switch")
EVENT_GRID_S = 15
JITTER_DISTS = ("none", "gaussian", "lognormal")
PROTOCOLS = ("icmp", "udp", "tcp")


class ScenarioError(ValueError):
    """Scenario file failed validation; the message names the field."""


@dataclass(frozen=True)
class SimHop:
    label: str
    address: str
    ttl_expired: bool = True
    echo: bool = False


@dataclass(frozen=True)
class RerouteEvent:
    at_s: int
    kind: str
    duration_s: int
    delta_ms: Optional[float] = None
    new_rtt_ms: Optional[float] = None

    @property
    def end_s(self) -> int:
        return self.at_s + self.duration_s

    def active_at(self, t_s: float) -> bool:
        return self.at_s <= t_s < self.end_s


@dataclass(frozen=True)
class Jitter:
    dist: str = "gaussian"
    sigma_ms: float = 0.5
    satellite_sigma_ms: float = 1.5


@dataclass(frozen=True)
class HopFlap:
    every_s: int
    duration_s: int


@dataclass
class Scenario:
    """Validated simulation scenario for a single probe target."""

    hops: tuple[SimHop, ...]
    base_latencies_ms: tuple[float, ...]
    pre_sat: int   # 1-based hop number of the last hop before the satellite
    post_sat: int  # 1-based hop number of the first measured hop after it
    seed: int = 0
    duration_s: int = 300
    jitter: Jitter = field(default_factory=Jitter)
    events: tuple[RerouteEvent, ...] = ()
    loss_probability: float = 0.0
    target_protocols: tuple[str, ...] = PROTOCOLS
    hop_flap: Optional[HopFlap] = None
    endpoint_meta: dict = field(default_factory=dict)

    @property
    def target_address(self) -> str:
        return self.hops[-1].address

    @property
    def path_length(self) -> int:
        return len(self.hops)

    def satellite_base_oneway_ms(self) -> float:
        # Segments strictly after pre_sat up to and including post_sat.
        return sum(self.base_latencies_ms[self.pre_sat:self.post_sat])

    def satellite_delta_ms(self, t_s: float) -> tuple[float, Optional[RerouteEvent]]:
        """One-way latency delta on the satellite span at time t."""
        for ev in self.events:
            if ev.active_at(t_s):
                if ev.new_rtt_ms is not None:
                    return ev.new_rtt_ms / 2.0 - self.satellite_base_oneway_ms(), ev
                return (ev.delta_ms or 0.0) / 2.0, ev
        return 0.0, None

    def flap_active(self, t_s: float) -> bool:
        if self.hop_flap is None:
            return False
        return (t_s % self.hop_flap.every_s) < self.hop_flap.duration_s


@dataclass(frozen=True)
class GroundTruth:
    route_kind: str          # "baseline" or the active event kind
    sat_rtt_ms: float        # satellite span round-trip, jitter-free
    in_event: bool


def ground_truth(scenario: Scenario, t_s: float) -> GroundTruth:
    delta, ev = scenario.satellite_delta_ms(t_s)
    rtt = 2.0 * (scenario.satellite_base_oneway_ms() + delta)
    if ev is None:
        return GroundTruth("baseline", rtt, False)
    return GroundTruth(ev.kind, rtt, True)


def _err(fieldname: str, message: str) -> ScenarioError:
    return ScenarioError(f"{fieldname}: {message}")


def build_scenario(source: dict | str | Path) -> Scenario:
    """Validate a scenario description (dict or JSON file path)."""
    if not isinstance(source, dict):
        with open(source, encoding="utf-8") as fh:
            obj = json.load(fh)
    else:
        obj = source

    if obj.get("schema") != SCHEMA_ID:
        raise _err("schema", f"expected {SCHEMA_ID!r}, got {obj.get('schema')!r}")

    raw_hops = obj.get("hops")
    if not isinstance(raw_hops, list) or len(raw_hops) < 2:
        raise _err("hops", "need at least two hops (one before and one after the satellite)")
    hops = []
    for i, h in enumerate(raw_hops):
        try:
            hops.append(SimHop(
                label=str(h["label"]),
                address=str(h["address"]),
                ttl_expired=bool(h.get("ttl_expired", True)),
                echo=bool(h.get("echo", False)),
            ))
        except KeyError as exc:
            raise _err(f"hops[{i}]", f"missing key {exc}") from None

    lat = obj.get("base_latencies_ms")
    if not isinstance(lat, list) or len(lat) != len(hops):
        raise _err("base_latencies_ms", f"need exactly {len(hops)} per-segment values")
    latencies = tuple(float(x) for x in lat)
    for i, x in enumerate(latencies):
        if x < 0:
            raise _err(f"base_latencies_ms[{i}]", "latency must be non-negative")

    seg = obj.get("satellite_segment")
    if (not isinstance(seg, (list, tuple))) or len(seg) != 2:
        raise _err("satellite_segment", "expected [pre_hop, post_hop]")
    pre_sat, post_sat = int(seg[0]), int(seg[1])
    if not (1 <= pre_sat < post_sat <= len(hops)):
        raise _err("satellite_segment", f"need 1 <= pre < post <= {len(hops)}")

    duration_s = int(obj.get("duration_s", 300))
    if duration_s <= 0:
        raise _err("duration_s", "must be positive")

    jit = obj.get("jitter", {})
    dist = jit.get("dist", "gaussian")
    if dist not in JITTER_DISTS:
        raise _err("jitter.dist", f"must be one of {JITTER_DISTS}")
    jitter = Jitter(
        dist=dist,
        sigma_ms=float(jit.get("sigma_ms", 0.5)),
        satellite_sigma_ms=float(jit.get("satellite_sigma_ms", 1.5)),
    )
    if jitter.sigma_ms < 0 or jitter.satellite_sigma_ms < 0:
        raise _err("jitter.sigma_ms", "sigma must be non-negative")

    events = []
    for i, ev in enumerate(obj.get("events", [])):
        kind = ev.get("kind")
        if kind not in EVENT_KINDS:
            raise _err(f"events[{i}].kind", f"must be one of {EVENT_KINDS}")
        at_s = int(ev.get("at_s", -1))
        dur = int(ev.get("duration_s", 0))
        if at_s < 0 or at_s % EVENT_GRID_S != 0:
            raise _err(f"events[{i}].at_s", f"must be a non-negative multiple of {EVENT_GRID_S}")
        if dur <= 0 or dur % EVENT_GRID_S != 0:
            raise _err(f"events[{i}].duration_s", f"must be a positive multiple of {EVENT_GRID_S}")
        if at_s + dur > duration_s:
            raise _err(f"events[{i}]", "event extends past scenario duration")
        delta = ev.get("delta_ms")
        new_rtt = ev.get("new_rtt_ms")
        if (delta is None) == (new_rtt is None):
            raise _err(f"events[{i}]", "exactly one of delta_ms / new_rtt_ms required")
        events.append(RerouteEvent(
            at_s=at_s, kind=kind, duration_s=dur,
            delta_ms=None if delta is None else float(delta),
            new_rtt_ms=None if new_rtt is None else float(new_rtt),
        ))
    events.sort(key=lambda e: e.at_s)
    for a, b in zip(events, events[1:]):
        if b.at_s < a.end_s:
            raise _err("events", f"events at {a.at_s}s and {b.at_s}s overlap")

    loss = float(obj.get("loss_probability", 0.0))
    if not 0.0 <= loss <= 1.0:
        raise _err("loss_probability", "must be within [0, 1]")

    protos = tuple(obj.get("target_protocols", list(PROTOCOLS)))
    for p in protos:
        if p not in PROTOCOLS:
            raise _err("target_protocols", f"unknown protocol {p!r}")

    flap = None
    if "hop_flap" in obj:
        hf = obj["hop_flap"]
        try:
            flap = HopFlap(every_s=int(hf["every_s"]), duration_s=int(hf["duration_s"]))
        except (KeyError, TypeError, ValueError):
            raise _err("hop_flap", "expected {every_s, duration_s}") from None
        if flap.duration_s <= 0 or flap.every_s <= flap.duration_s:
            raise _err("hop_flap.every_s", "need every_s > duration_s > 0")

    return Scenario(
        hops=tuple(hops),
        base_latencies_ms=latencies,
        pre_sat=pre_sat,
        post_sat=post_sat,
        seed=int(obj.get("seed", 0)),
        duration_s=duration_s,
        jitter=jitter,
        events=tuple(events),
        loss_probability=loss,
        target_protocols=protos,
        hop_flap=flap,
        endpoint_meta=dict(obj.get("endpoint", {})),
    )


def load_scenario_dir(path: str | Path) -> dict[str, Scenario]:
    """Load every *.json scenario in a directory, keyed by target address."""
    scenarios: dict[str, Scenario] = {}
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise ScenarioError(f"{path}: no scenario files found")
    for f in files:
        sc = build_scenario(f)
        if sc.target_address in scenarios:
            raise ScenarioError(f"{f}: duplicate target {sc.target_address}")
        scenarios[sc.target_address] = sc
    return scenarios


def _probe_rng(seed: int, t_ms: int, ttl: int, flow_id: int, protocol: str) -> random.Random:
    """Deterministic per-probe random stream, independent of call order."""
    digest = hashlib.blake2b(
        struct.pack("<QqiH", seed & 0xFFFFFFFFFFFFFFFF, t_ms, ttl, flow_id & 0xFFFF)
        + protocol.encode(),
        digest_size=8,
    ).digest()
    return random.Random(int.from_bytes(digest, "little"))


class VirtualClock:
    def __init__(self, start_ms: int = 0):
        self._now_ms = float(start_ms)

    def now_ms(self) -> int:
        return int(self._now_ms)

    def advance_ms(self, dt_ms: float) -> None:
        if dt_ms < 0:
            raise ValueError("clock cannot run backwards")
        self._now_ms += dt_ms

    def sleep_until_ms(self, t_ms: int) -> None:
        if t_ms > self._now_ms:
            self._now_ms = float(t_ms)


def respond_to_probe(
    scenario: Scenario,
    target: str,
    ttl: int,
    t_ms: int,
    *,
    protocol: str = "icmp",
    flow_id: int = 0,
) -> Optional[ProbeReply]:
    """Answer one probe at virtual time t, or None for silence.

    The reply RTT is twice the sum of one-way segment latencies up to
    the hop where the probe's TTL expires, using the event-adjusted
    satellite latency, plus seeded jitter.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol: {protocol}")
    if target != scenario.target_address:
        return None
    if ttl < 1:
        raise ValueError("ttl must be >= 1")
    t_s = t_ms / 1000.0
    rng = _probe_rng(scenario.seed, t_ms, ttl, flow_id, protocol)

    if scenario.loss_probability > 0 and rng.random() < scenario.loss_probability:
        return None

    delta, _ = scenario.satellite_delta_ms(t_s)

    # Effective chain; a flap inserts one extra terrestrial hop just
    # before the satellite span, shifting later hops one TTL deeper.
    chain: list[tuple[SimHop, float, bool]] = []  # (hop, oneway_ms, is_sat_entry)
    for i, hop in enumerate(scenario.hops):
        is_sat_entry = (i + 1) == scenario.pre_sat + 1
        chain.append((hop, scenario.base_latencies_ms[i], is_sat_entry))
    if scenario.flap_active(t_s):
        flap_hop = SimHop(label="flap", address="10.255.255.1", ttl_expired=True, echo=False)
        chain.insert(scenario.pre_sat, (flap_hop, 0.1, False))

    n = len(chain)
    expire_at = min(ttl, n)  # 1-based position where the probe stops
    reached_target = ttl >= n

    hop, _, _ = chain[expire_at - 1]
    if reached_target:
        if not hop.echo or protocol not in scenario.target_protocols:
            return None
        kind = "echo"
    else:
        if not hop.ttl_expired:
            return None
        kind = "ttl_expired"

    oneway = 0.0
    noise = 0.0
    for (h, seg_ms, is_sat_entry) in chain[:expire_at]:
        seg = seg_ms + (delta if is_sat_entry else 0.0)
        oneway += seg
        sigma = scenario.jitter.satellite_sigma_ms if is_sat_entry else scenario.jitter.sigma_ms
        if scenario.jitter.dist == "gaussian" and sigma > 0:
            noise += rng.gauss(0.0, sigma)
        elif scenario.jitter.dist == "lognormal" and sigma > 0:
            # One-sided queueing-style noise with scale sigma.
            noise += sigma * (rng.lognormvariate(0.0, 1.0) / math.e ** 0.5)
    rtt_ms = max(2.0 * oneway + noise, 0.001)
    return ProbeReply(responder=hop.address, rtt_us=rtt_ms * 1000.0, kind=kind)


class SimnetTransport:
    """Probe transport bound to one scenario with its own virtual clock.

    Create one transport per measurement task: virtual time advances
    only through the owning task's probes and sleeps, which keeps
    concurrent sessions over different endpoints deterministic.
    """

    def __init__(self, scenario: Scenario, start_ms: int = 0):
        self.scenario = scenario
        self.clock = VirtualClock(start_ms)
        self.probes_sent = 0
        self.sat_probe_count = 0
        # Flow-discipline tripwire: within one traceroute (ttl ramp),
        # the flow id must stay constant or hop RTTs are incomparable.
        self._last_ttl: Optional[int] = None
        self._last_flow: Optional[int] = None

    def now_ms(self) -> int:
        return self.clock.now_ms()

    def sleep_until_ms(self, t_ms: int) -> None:
        self.clock.sleep_until_ms(t_ms)

    def probe(
        self,
        target: str,
        ttl: int,
        *,
        protocol: str = "icmp",
        flow_id: int = 0,
        timeout_s: float = 2.0,
    ) -> Optional[ProbeReply]:
        if self._last_ttl is not None and ttl == self._last_ttl + 1 and flow_id != self._last_flow:
            raise AssertionError(
                f"flow id changed mid-traceroute at ttl {ttl}: {self._last_flow} -> {flow_id}"
            )
        self._last_ttl, self._last_flow = ttl, flow_id
        self.probes_sent += 1
        if ttl > self.scenario.pre_sat:
            self.sat_probe_count += 1
        reply = respond_to_probe(
            self.scenario, target, ttl, self.now_ms(),
            protocol=protocol, flow_id=flow_id,
        )
        if reply is None:
            self.clock.advance_ms(timeout_s * 1000.0)
        else:
            self.clock.advance_ms(reply.rtt_us / 1000.0)
        return reply


def fleet_transports(scenarios: dict[str, Scenario], start_ms: int = 0) -> Iterator[tuple[str, SimnetTransport]]:
    """One independent transport per endpoint, in sorted address order."""
    for address in sorted(scenarios):
        yield address, SimnetTransport(scenarios[address], start_ms=start_ms)
