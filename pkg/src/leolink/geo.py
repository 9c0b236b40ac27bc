"""Spherical-earth geometry helpers shared across the toolkit.

All distances are kilometres, all angles degrees unless suffixed otherwise.
The earth is modelled as a sphere of radius 6371.0 km throughout; none of
the latency arithmetic here needs better than that.
"""
from __future__ import annotations

import math

import numpy as np

EARTH_RADIUS_KM = 6371.0
# Vacuum speed of light; radio and laser links run at this speed.
LIGHT_SPEED_KM_S = 299_792.458
# Propagation speed in fiber is roughly two thirds of c.
FIBER_SPEED_KM_S = LIGHT_SPEED_KM_S * (2.0 / 3.0)
KM_PER_MILE = 1.609344

# Geostationary altitude, used only as a latency floor reference.
GEO_ALTITUDE_KM = 35_786.0
GEO_FLOOR_RTT_MS = 2.0 * 2.0 * GEO_ALTITUDE_KM / LIGHT_SPEED_KM_S * 1000.0


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float,
                 radius_km: float = EARTH_RADIUS_KM) -> float:
    """Great-circle distance between two points on the sphere.

    Parameters
    ----------
    lat1, lon1, lat2, lon2 : float
        Coordinates in decimal degrees.
    radius_km : float
        Sphere radius; defaults to the earth radius used everywhere else.

    Examples
    --------
    >>> round(haversine_km(0.0, 0.0, 0.0, 90.0), 1)
    10007.5
    """
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * radius_km * math.asin(math.sqrt(a))


def latlon_to_ecef(lat: float, lon: float, radius_km: float = EARTH_RADIUS_KM) -> np.ndarray:
    """Cartesian position of a surface point at the given radius."""
    phi = math.radians(lat)
    lam = math.radians(lon)
    return np.array([
        radius_km * math.cos(phi) * math.cos(lam),
        radius_km * math.cos(phi) * math.sin(lam),
        radius_km * math.sin(phi),
    ])


def central_angle_rad(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Angle subtended at the earth's centre by two surface points."""
    return haversine_km(lat1, lon1, lat2, lon2, radius_km=1.0)


def vacuum_rtt_ms(distance_km: float) -> float:
    """Round-trip time over a one-way path of the given length at c."""
    return 2.0 * distance_km / LIGHT_SPEED_KM_S * 1000.0


def fiber_rtt_ms(distance_km: float) -> float:
    """Round-trip time over a one-way fiber path at (2/3)c."""
    return 2.0 * distance_km / FIBER_SPEED_KM_S * 1000.0


def miles_to_km(miles: float) -> float:
    return miles * KM_PER_MILE
