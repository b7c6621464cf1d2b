"""Conversions between metric raw-feed units and U.S. aviation units."""

# One knot is one nautical mile per hour, exactly 1852/3600 m/s.
KNOT_MPS = 1852.0 / 3600.0
FOOT_M = 0.3048
NM_M = 1852.0

# Mean Earth radius in nautical miles, used for great-circle math.
EARTH_RADIUS_NM = 3440.065


def mps_to_knots(v: float) -> float:
    return v / KNOT_MPS


def knots_to_mps(v: float) -> float:
    return v * KNOT_MPS


def meters_to_feet(m: float) -> float:
    return m / FOOT_M


def feet_to_meters(ft: float) -> float:
    return ft * FOOT_M


def mps_to_fpm(v: float) -> float:
    """Vertical rate m/s to feet per minute."""
    return v * 60.0 / FOOT_M
