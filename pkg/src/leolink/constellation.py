"""Constellation geometry model for plausibility-checking measurements.

Satellites fly circular orbits around a spherical earth; that is enough
to bound what latencies the radio segment can physically produce.  The
model answers three kinds of question:

* what is the best-case (and worst-case) bent-pipe RTT between a dish
  and a ground station right now,
* how much does one extra inter-satellite laser hop cost,
* what end-to-end RTT does a composite route imply (radio access plus
  inter-satellite path plus terrestrial fiber tail back to the POP).

Positions are computed in the inertial frame of the epoch; ground sites
rotate beneath the constellation, so always evaluate site positions at
the same instant as the snapshot they are compared against.

The default configuration (one 550 km, 53 deg shell of 72 x 22) ships as
package data; studies override it with their own JSON of the same shape.
The per-plane phase offset is operator-internal and unknowable from the
outside; it defaults to an arbitrary but fixed stagger, which changes
none of the latency statistics.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geo import (
    EARTH_RADIUS_KM,
    LIGHT_SPEED_KM_S,
    central_angle_rad,
    fiber_rtt_ms,
    haversine_km,
    latlon_to_ecef,
    miles_to_km,
)

MU_EARTH_KM3_S2 = 398_600.4418
EARTH_ROTATION_RAD_S = 7.2921159e-5

# Default visibility: a terminal sees satellites out to 600 miles slant
# range and above 25 degrees elevation.
DEFAULT_MAX_SLANT_KM = miles_to_km(600.0)
DEFAULT_MIN_ELEVATION_DEG = 25.0

# Laser links span at most a few thousand km; longer inter-satellite
# paths chain multiple hops along the orbital shell.
MAX_ISL_CHORD_KM = 5400.0

DEFAULT_BORESIGHT_DEG = -22.0


class GeometryError(ValueError):
    pass


class NoCoverageError(GeometryError):
    """No satellite satisfies the visibility constraints."""


@dataclass(frozen=True)
class Shell:
    altitude_km: float
    inclination_deg: float
    n_orbits: int
    sats_per_orbit: int
    phase_offset_deg: float = 0.0

    def __post_init__(self) -> None:
        if self.altitude_km <= 0:
            raise GeometryError("altitude_km must be positive")
        if not 0 <= self.inclination_deg <= 180:
            raise GeometryError("inclination_deg must be within [0, 180]")
        if self.n_orbits < 1 or self.sats_per_orbit < 1:
            raise GeometryError("need at least one orbit and one satellite")

    @property
    def semi_major_axis_km(self) -> float:
        return EARTH_RADIUS_KM + self.altitude_km

    @property
    def mean_motion_rad_s(self) -> float:
        return math.sqrt(MU_EARTH_KM3_S2 / self.semi_major_axis_km ** 3)

    @property
    def period_s(self) -> float:
        return 2.0 * math.pi / self.mean_motion_rad_s

    @property
    def in_plane_spacing_km(self) -> float:
        """Arc length between neighbouring satellites of one orbit."""
        return 2.0 * math.pi * self.semi_major_axis_km / self.sats_per_orbit


@dataclass(frozen=True)
class ConstellationConfig:
    shells: tuple[Shell, ...]
    epoch_s: float = 0.0

    @classmethod
    def from_dict(cls, obj: dict) -> "ConstellationConfig":
        shells = tuple(Shell(**s) for s in obj["shells"])
        if not shells:
            raise GeometryError("config needs at least one shell")
        return cls(shells=shells, epoch_s=float(obj.get("epoch_s", 0.0)))

    @classmethod
    def from_json(cls, path: str | Path) -> "ConstellationConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls) -> "ConstellationConfig":
        ref = resources.files("leolink.data").joinpath("constellation_default.json")
        with resources.as_file(ref) as path:
            return cls.from_json(path)

    @property
    def n_satellites(self) -> int:
        return sum(s.n_orbits * s.sats_per_orbit for s in self.shells)


@dataclass(frozen=True)
class SatelliteState:
    shell_index: int
    orbit_index: int
    slot_index: int
    position_km: tuple[float, float, float]

    @property
    def radius_km(self) -> float:
        return float(np.linalg.norm(self.position_km))


@dataclass
class Snapshot:
    """All satellite positions at one instant, in the epoch frame."""

    t_s: float
    config: ConstellationConfig
    positions: np.ndarray          # (N, 3) km
    shell_index: np.ndarray        # (N,) int
    orbit_index: np.ndarray
    slot_index: np.ndarray
    altitudes_km: np.ndarray       # per-satellite shell altitude

    def states(self) -> list[SatelliteState]:
        return [
            SatelliteState(
                shell_index=int(self.shell_index[i]),
                orbit_index=int(self.orbit_index[i]),
                slot_index=int(self.slot_index[i]),
                position_km=tuple(float(x) for x in self.positions[i]),
            )
            for i in range(len(self.positions))
        ]

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class GroundStation:
    latitude: float
    longitude: float
    altitude_m: float = 0.0
    label: str = ""


@dataclass(frozen=True)
class DishSite(GroundStation):
    """Customer terminal; sees only the half-sky ahead of its boresight."""

    boresight_azimuth_deg: float = DEFAULT_BORESIGHT_DEG

    def azimuth_allowed(self, azimuth_deg: float) -> bool:
        # Boresight -22 deg => azimuths below 158 or above 338 pass.
        return (azimuth_deg - self.boresight_azimuth_deg) % 360.0 < 180.0


@dataclass(frozen=True)
class RouteSegment:
    start: str
    end: str
    medium: str                    # "vacuum" | "fiber" | "measured"
    rtt_ms: float
    distance_km: Optional[float] = None


@dataclass
class RoutePath:
    segments: list[RouteSegment] = field(default_factory=list)

    @property
    def total_rtt_ms(self) -> float:
        return sum(s.rtt_ms for s in self.segments)


def propagate(config: ConstellationConfig, t_s: float) -> Snapshot:
    """Satellite positions at time t (seconds since the config epoch).

    Circular orbits: each plane is spaced uniformly in right ascension,
    each slot uniformly in argument of latitude, with the shell's phase
    offset applied per plane.  Positions are exactly periodic with the
    shell period.
    """
    dt = t_s - config.epoch_s
    pos_parts: list[np.ndarray] = []
    shell_ix: list[np.ndarray] = []
    orbit_ix: list[np.ndarray] = []
    slot_ix: list[np.ndarray] = []
    alts: list[np.ndarray] = []
    for s_i, shell in enumerate(config.shells):
        a = shell.semi_major_axis_km
        inc = math.radians(shell.inclination_deg)
        orbits = np.arange(shell.n_orbits)
        slots = np.arange(shell.sats_per_orbit)
        raan = np.radians(360.0 * orbits / shell.n_orbits)[:, None]
        u0 = np.radians(360.0 * slots / shell.sats_per_orbit)[None, :]
        u = u0 + np.radians(shell.phase_offset_deg) * orbits[:, None] \
            + shell.mean_motion_rad_s * dt
        cos_u, sin_u = np.cos(u), np.sin(u)
        cos_r, sin_r = np.cos(raan), np.sin(raan)
        x = a * (cos_r * cos_u - sin_r * sin_u * math.cos(inc))
        y = a * (sin_r * cos_u + cos_r * sin_u * math.cos(inc))
        z = a * (sin_u * math.sin(inc))
        n = shell.n_orbits * shell.sats_per_orbit
        pos_parts.append(np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1))
        shell_ix.append(np.full(n, s_i))
        orbit_ix.append(np.repeat(orbits, shell.sats_per_orbit))
        slot_ix.append(np.tile(slots, shell.n_orbits))
        alts.append(np.full(n, shell.altitude_km))
    return Snapshot(
        t_s=t_s,
        config=config,
        positions=np.concatenate(pos_parts),
        shell_index=np.concatenate(shell_ix),
        orbit_index=np.concatenate(orbit_ix),
        slot_index=np.concatenate(slot_ix),
        altitudes_km=np.concatenate(alts),
    )


def site_position(site: GroundStation, t_s: float, epoch_s: float = 0.0) -> np.ndarray:
    """Inertial-frame position of a ground site at time t.

    The earth rotates the site eastward relative to the epoch frame.
    """
    theta = math.degrees(EARTH_ROTATION_RAD_S * (t_s - epoch_s))
    radius = EARTH_RADIUS_KM + site.altitude_m / 1000.0
    return latlon_to_ecef(site.latitude, site.longitude + theta, radius_km=radius)


def _look_angles(site_pos: np.ndarray, sat_pos: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slant range (km), elevation and azimuth (deg) to each satellite."""
    rel = sat_pos - site_pos[None, :]
    slant = np.linalg.norm(rel, axis=1)
    up = site_pos / np.linalg.norm(site_pos)
    sin_el = rel @ up / slant
    elevation = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))
    # Local east/north for azimuth, degenerate at the poles.
    east = np.cross([0.0, 0.0, 1.0], up)
    norm = np.linalg.norm(east)
    if norm < 1e-12:
        east = np.array([1.0, 0.0, 0.0])
    else:
        east = east / norm
    north = np.cross(up, east)
    azimuth = np.degrees(np.arctan2(rel @ east, rel @ north)) % 360.0
    return slant, elevation, azimuth


def _visible_mask(
    site: GroundStation,
    snapshot: Snapshot,
    max_slant_km: float,
    min_elevation_deg: float,
    apply_fov: bool,
) -> tuple[np.ndarray, np.ndarray]:
    site_pos = site_position(site, snapshot.t_s, snapshot.config.epoch_s)
    slant, elevation, azimuth = _look_angles(site_pos, snapshot.positions)
    mask = (slant <= max_slant_km) & (elevation >= min_elevation_deg)
    if apply_fov and isinstance(site, DishSite):
        allowed = (azimuth - site.boresight_azimuth_deg) % 360.0 < 180.0
        mask &= allowed
    return mask, slant


def visible_satellites(
    site: GroundStation,
    snapshot: Snapshot,
    *,
    max_slant_km: float = DEFAULT_MAX_SLANT_KM,
    min_elevation_deg: float = DEFAULT_MIN_ELEVATION_DEG,
    apply_fov: bool = True,
) -> list[SatelliteState]:
    """Satellites within slant range and above the elevation mask.

    For a :class:`DishSite` the azimuth field-of-view rule also applies
    unless ``apply_fov`` is disabled.
    """
    mask, _ = _visible_mask(site, snapshot, max_slant_km, min_elevation_deg, apply_fov)
    idx = np.nonzero(mask)[0]
    return [
        SatelliteState(
            shell_index=int(snapshot.shell_index[i]),
            orbit_index=int(snapshot.orbit_index[i]),
            slot_index=int(snapshot.slot_index[i]),
            position_km=tuple(float(x) for x in snapshot.positions[i]),
        )
        for i in idx
    ]


def _joint_path_sums(
    dish: GroundStation,
    gs: GroundStation,
    snapshot: Snapshot,
    *,
    max_slant_km: float,
    min_elevation_deg: float,
    dish_fov: bool,
) -> np.ndarray:
    """d(dish, sat) + d(sat, gs) for jointly visible satellites, else inf."""
    dish_mask, dish_slant = _visible_mask(dish, snapshot, max_slant_km,
                                          min_elevation_deg, dish_fov)
    gs_mask, gs_slant = _visible_mask(gs, snapshot, max_slant_km,
                                      min_elevation_deg, False)
    sums = np.where(dish_mask & gs_mask, dish_slant + gs_slant, np.inf)
    return sums


def _state_at(snapshot: Snapshot, i: int) -> SatelliteState:
    return SatelliteState(
        shell_index=int(snapshot.shell_index[i]),
        orbit_index=int(snapshot.orbit_index[i]),
        slot_index=int(snapshot.slot_index[i]),
        position_km=tuple(float(x) for x in snapshot.positions[i]),
    )


def best_case_rtt(
    dish: GroundStation,
    gs: GroundStation,
    snapshot: Snapshot,
    *,
    max_slant_km: float = DEFAULT_MAX_SLANT_KM,
    min_elevation_deg: float = DEFAULT_MIN_ELEVATION_DEG,
) -> tuple[float, SatelliteState]:
    """Bent-pipe RTT through the best jointly visible satellite.

    Returns ``(rtt_ms, satellite)``.  Best-case selection searches the
    whole sky: an optimal scheduler is not limited by the dish's
    current orientation.
    """
    sums = _joint_path_sums(dish, gs, snapshot,
                            max_slant_km=max_slant_km,
                            min_elevation_deg=min_elevation_deg,
                            dish_fov=False)
    i = int(np.argmin(sums))
    if not np.isfinite(sums[i]):
        raise NoCoverageError("no satellite jointly visible to dish and ground station")
    return 2.0 * float(sums[i]) / LIGHT_SPEED_KM_S * 1000.0, _state_at(snapshot, i)


def worst_case_rtt(
    dish: DishSite,
    gs: GroundStation,
    snapshot: Snapshot,
    *,
    max_slant_km: float = DEFAULT_MAX_SLANT_KM,
    min_elevation_deg: float = DEFAULT_MIN_ELEVATION_DEG,
) -> tuple[float, SatelliteState]:
    """Bent-pipe RTT through the worst satellite the dish could pick.

    Returns ``(rtt_ms, satellite)``.  The candidate set honours the
    dish's azimuth field of view; the ground station is unconstrained
    (its antennas cover all azimuths).
    """
    sums = _joint_path_sums(dish, gs, snapshot,
                            max_slant_km=max_slant_km,
                            min_elevation_deg=min_elevation_deg,
                            dish_fov=True)
    masked = np.where(np.isfinite(sums), sums, -np.inf)
    i = int(np.argmax(masked))
    if not np.isfinite(masked[i]):
        raise NoCoverageError("no satellite jointly visible within the dish field of view")
    return 2.0 * float(sums[i]) / LIGHT_SPEED_KM_S * 1000.0, _state_at(snapshot, i)


def isl_extra_hop_rtt(config: ConstellationConfig, shell_index: int = 0) -> float:
    """Round-trip cost of one extra in-plane inter-satellite hop (ms).

    Neighbouring satellites of one orbit sit one in-plane spacing apart;
    a detour over one extra satellite adds that distance in both
    directions.
    """
    shell = config.shells[shell_index]
    return 2.0 * shell.in_plane_spacing_km / LIGHT_SPEED_KM_S * 1000.0


def isl_path_distance_km(
    from_lat: float, from_lon: float,
    to_lat: float, to_lon: float,
    altitude_km: float,
    max_chord_km: float = MAX_ISL_CHORD_KM,
) -> float:
    """Length of an inter-satellite path bridging two ground points.

    The path follows the great circle at orbital altitude, chained as
    chords no longer than a laser link's reach.  For continent-scale
    spans a single chord differs from the arc by under one percent.
    """
    theta = central_angle_rad(from_lat, from_lon, to_lat, to_lon)
    if theta == 0.0:
        return 0.0
    radius = EARTH_RADIUS_KM + altitude_km
    theta_max = 2.0 * math.asin(min(1.0, max_chord_km / (2.0 * radius)))
    n = max(1, math.ceil(theta / theta_max))
    return n * 2.0 * radius * math.sin(theta / (2.0 * n))


def composite_route_rtt(
    dish: GroundStation,
    access_gs: GroundStation,
    pop: GroundStation,
    *,
    route_kind: str = "relay",
    landing_gs: Optional[GroundStation] = None,
    extra_isl_hops: int = 0,
    snapshot: Optional[Snapshot] = None,
    config: Optional[ConstellationConfig] = None,
    access_rtt_ms: Optional[float] = None,
    isl_oneway_ms: Optional[float] = None,
    terrestrial_rtt_ms: Optional[float] = None,
    max_slant_km: float = DEFAULT_MAX_SLANT_KM,
    min_elevation_deg: float = DEFAULT_MIN_ELEVATION_DEG,
) -> RoutePath:
    """End-to-end RTT of a composite route from dish to POP.

    Two route kinds:

    * ``relay``: one bent pipe, dish -> satellite -> access_gs, then a
      terrestrial tail from the access ground station to the POP.
    * ``isl``: the traffic enters over the dish's local access geometry,
      crosses the inter-satellite path to ``landing_gs``, and returns to
      the POP over terrestrial fiber.  Both ends pay a radio access
      segment, so the access RTT counts twice.

    Each term can be supplied explicitly (e.g. a measured terrestrial
    RTT) or derived: access from best-case selection on the snapshot,
    the inter-satellite leg from great-circle geometry at altitude, the
    tail from fiber speed over the great circle.  A supplied terrestrial
    RTT below the fiber floor suggests bad data but is not rejected.
    """
    if route_kind not in ("relay", "isl"):
        raise GeometryError(f"unknown route kind: {route_kind}")
    if route_kind == "isl" and landing_gs is None:
        raise GeometryError("isl route requires landing_gs")
    if extra_isl_hops < 0:
        raise GeometryError("extra_isl_hops must be >= 0")

    segments: list[RouteSegment] = []

    if access_rtt_ms is None:
        if snapshot is None:
            raise GeometryError("need snapshot or access_rtt_ms for the access term")
        access_rtt_ms, _ = best_case_rtt(dish, access_gs, snapshot,
                                         max_slant_km=max_slant_km,
                                         min_elevation_deg=min_elevation_deg)
    n_access = 1 if route_kind == "relay" else 2
    for i in range(n_access):
        segments.append(RouteSegment(
            start="dish" if i == 0 else "constellation",
            end="constellation" if route_kind == "isl" else access_gs.label or "access_gs",
            medium="vacuum", rtt_ms=access_rtt_ms,
        ))

    tail_gs = access_gs
    if route_kind == "isl":
        assert landing_gs is not None
        tail_gs = landing_gs
        if isl_oneway_ms is None:
            shell_alt = (snapshot.altitudes_km[0] if snapshot is not None
                         else (config or ConstellationConfig.default()).shells[0].altitude_km)
            dist = isl_path_distance_km(
                access_gs.latitude, access_gs.longitude,
                landing_gs.latitude, landing_gs.longitude,
                altitude_km=float(shell_alt))
            isl_oneway_ms = dist / LIGHT_SPEED_KM_S * 1000.0
        else:
            dist = None
        segments.append(RouteSegment(
            start="constellation", end=landing_gs.label or "landing_gs",
            medium="vacuum", rtt_ms=2.0 * isl_oneway_ms, distance_km=dist,
        ))
        if extra_isl_hops:
            cfg = config or (snapshot.config if snapshot is not None else ConstellationConfig.default())
            per_hop = isl_extra_hop_rtt(cfg)
            segments.append(RouteSegment(
                start="constellation", end="constellation",
                medium="vacuum", rtt_ms=extra_isl_hops * per_hop,
            ))

    if terrestrial_rtt_ms is None:
        d = haversine_km(tail_gs.latitude, tail_gs.longitude, pop.latitude, pop.longitude)
        segments.append(RouteSegment(
            start=tail_gs.label or "gs", end=pop.label or "pop",
            medium="fiber", rtt_ms=fiber_rtt_ms(d), distance_km=d,
        ))
    elif terrestrial_rtt_ms > 0 or route_kind == "isl":
        segments.append(RouteSegment(
            start=tail_gs.label or "gs", end=pop.label or "pop",
            medium="measured", rtt_ms=terrestrial_rtt_ms,
        ))
    return RoutePath(segments=segments)


def direct_path_floor_rtt(
    site_lat: float, site_lon: float,
    pop_lat: float, pop_lon: float,
    zigzag_factor: float = 1.0,
) -> float:
    """Speed-of-light RTT floor between two ground points (ms).

    ``zigzag_factor`` scales the path for indirect inter-satellite
    routing; 2.0 bounds a path that zig-zags instead of flying the
    great circle.
    """
    if zigzag_factor < 1.0:
        raise GeometryError("zigzag_factor must be >= 1")
    d = haversine_km(site_lat, site_lon, pop_lat, pop_lon)
    return 2.0 * d * zigzag_factor / LIGHT_SPEED_KM_S * 1000.0


def min_isl_ng_threshold(
    dish: GroundStation,
    gs: GroundStation,
    snapshot: Snapshot,
    *,
    max_slant_km: float = DEFAULT_MAX_SLANT_KM,
    min_elevation_deg: float = DEFAULT_MIN_ELEVATION_DEG,
) -> float:
    """Minimum RTT via exactly two satellites to the ground station (ms).

    Exhaustive search over pairs (s1 visible to the dish, s2 visible to
    the ground station, s1 != s2) of dish->s1->s2->gs.  Any measured RTT
    below this bound cannot have used an inter-satellite link, which
    classifies it as bent-pipe relay routing.
    """
    dish_mask, dish_slant = _visible_mask(dish, snapshot, max_slant_km,
                                          min_elevation_deg, False)
    gs_mask, gs_slant = _visible_mask(gs, snapshot, max_slant_km,
                                      min_elevation_deg, False)
    dish_idx = np.nonzero(dish_mask)[0]
    gs_idx = np.nonzero(gs_mask)[0]
    if len(dish_idx) == 0 or len(gs_idx) == 0:
        raise NoCoverageError("no satellite visible at one of the endpoints")
    pos = snapshot.positions
    best = np.inf
    for i in dish_idx:
        inter = np.linalg.norm(pos[gs_idx] - pos[i], axis=1)
        totals = dish_slant[i] + inter + gs_slant[gs_idx]
        totals[gs_idx == i] = np.inf  # exactly two distinct satellites
        m = float(np.min(totals)) if len(totals) else np.inf
        if m < best:
            best = m
    if not np.isfinite(best):
        raise NoCoverageError("no two-satellite path exists")
    return 2.0 * best / LIGHT_SPEED_KM_S * 1000.0


@dataclass(frozen=True)
class StudyCase:
    """One named geometry study: sites, mask, and a sampling protocol.

    The visibility mask in a study overrides the module defaults; the
    defaults describe nominal service, a study may ask what the radio
    segment could do with the full sky.
    """

    label: str
    dish: DishSite
    access_gs: GroundStation
    pop: GroundStation
    landing_gs: Optional[GroundStation]
    terrestrial_rtt_ms: Optional[float]
    max_slant_km: float
    min_elevation_deg: float
    sample_step_s: float
    config: ConstellationConfig

    @classmethod
    def from_json(cls, path: str | Path,
                  config: Optional[ConstellationConfig] = None) -> "StudyCase":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        try:
            dish = DishSite(
                latitude=float(obj["dish"]["latitude"]),
                longitude=float(obj["dish"]["longitude"]),
                boresight_azimuth_deg=float(
                    obj["dish"].get("boresight_azimuth_deg", DEFAULT_BORESIGHT_DEG)),
                label=obj["dish"].get("label", ""),
            )
            access_gs = _site_from(obj["access_gs"])
            pop = _site_from(obj["pop"])
            landing = _site_from(obj["landing_gs"]) if obj.get("landing_gs") else None
            vis = obj.get("visibility", {})
            terr = obj.get("terrestrial_rtt_ms")
            return cls(
                label=obj.get("label", Path(path).stem),
                dish=dish, access_gs=access_gs, pop=pop, landing_gs=landing,
                terrestrial_rtt_ms=None if terr is None else float(terr),
                max_slant_km=float(vis.get("max_slant_km", DEFAULT_MAX_SLANT_KM)),
                min_elevation_deg=float(
                    vis.get("min_elevation_deg", DEFAULT_MIN_ELEVATION_DEG)),
                sample_step_s=float(obj.get("sampling", {}).get("step_s", 15.0)),
                config=config or ConstellationConfig.default(),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise GeometryError(f"bad study case {path}: {exc}") from exc

    @classmethod
    def nigeria(cls) -> "StudyCase":
        ref = resources.files("leolink.data").joinpath("nigeria_case.json")
        with resources.as_file(ref) as path:
            return cls.from_json(path)


def _site_from(obj: dict) -> GroundStation:
    return GroundStation(latitude=float(obj["latitude"]),
                         longitude=float(obj["longitude"]),
                         label=obj.get("label", ""))


@dataclass
class CaseSummary:
    """Medians over one orbital period of the case's shell."""

    label: str
    best_rtt_ms: float
    worst_rtt_ms: float
    worst_minus_best_ms: float
    isl_threshold_ms: float
    n_samples: int
    n_no_coverage: int


def evaluate_case(case: StudyCase) -> CaseSummary:
    """Sample one period at the case's step and take medians.

    A sample where either selection has no coverage is dropped from
    every statistic, keeping the medians comparable.
    """
    period = case.config.shells[0].period_s
    times = np.arange(0.0, period, case.sample_step_s)
    best, worst, thresh = [], [], []
    misses = 0
    for t in times:
        snap = propagate(case.config, float(t))
        try:
            b, _ = best_case_rtt(case.dish, case.access_gs, snap,
                                 max_slant_km=case.max_slant_km,
                                 min_elevation_deg=case.min_elevation_deg)
            w, _ = worst_case_rtt(case.dish, case.access_gs, snap,
                                  max_slant_km=case.max_slant_km,
                                  min_elevation_deg=case.min_elevation_deg)
            th = min_isl_ng_threshold(case.dish, case.access_gs, snap,
                                      max_slant_km=case.max_slant_km,
                                      min_elevation_deg=case.min_elevation_deg)
        except NoCoverageError:
            misses += 1
            continue
        best.append(b)
        worst.append(w)
        thresh.append(th)
    if not best:
        raise NoCoverageError(f"case {case.label}: no sample had joint coverage")
    b = np.asarray(best)
    w = np.asarray(worst)
    return CaseSummary(
        label=case.label,
        best_rtt_ms=float(np.median(b)),
        worst_rtt_ms=float(np.median(w)),
        worst_minus_best_ms=float(np.median(w - b)),
        isl_threshold_ms=float(np.median(thresh)),
        n_samples=len(times),
        n_no_coverage=misses,
    )
