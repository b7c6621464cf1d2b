"""Independent brute-force oracles kept deliberately separate from the
implementations they check."""

import math


def ray_cast_contains(lat, lon, ring):
    """Textbook even-odd crossing test over an open (lat, lon) ring."""
    inside = False
    n = len(ring)
    for i in range(n):
        y1, x1 = ring[i]
        y2, x2 = ring[(i + 1) % n]
        if (y1 > lat) != (y2 > lat):
            xint = (x2 - x1) * (lat - y1) / (y2 - y1) + x1
            if lon < xint:
                inside = not inside
    return inside


def min_edge_distance_deg(lat, lon, ring):
    """Planar distance from a point to the nearest polygon edge."""
    best = math.inf
    n = len(ring)
    for i in range(n):
        y1, x1 = ring[i]
        y2, x2 = ring[(i + 1) % n]
        ex, ey = x2 - x1, y2 - y1
        denom = ex * ex + ey * ey
        t = 0.0 if denom == 0 else ((lon - x1) * ex + (lat - y1) * ey) / denom
        t = min(1.0, max(0.0, t))
        px, py = x1 + t * ex, y1 + t * ey
        best = min(best, math.hypot(lon - px, lat - py))
    return best


def median_sorted(values):
    """Median via explicit sort, independent of numpy."""
    s = sorted(values)
    n = len(s)
    mid = n // 2
    if n % 2:
        return s[mid]
    return (s[mid - 1] + s[mid]) / 2.0


def mad_mask_oracle(values, threshold=1.5, zero_mad_floor=25.0):
    """Brute-force scaled-MAD outlier mask matching the documented rule."""
    if len(values) < 3:
        return [False] * len(values)
    med = median_sorted(values)
    devs = [abs(v - med) for v in values]
    mad = median_sorted(devs)
    if mad == 0.0:
        return [d > zero_mad_floor for d in devs]
    bound = threshold * 1.4826 * mad
    return [d > bound for d in devs]
