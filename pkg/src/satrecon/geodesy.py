"""UTM <-> geodetic conversion on the WGS84 ellipsoid.

Transverse Mercator series expansions after Hoffmann-Wellenhof et al.,
"GPS: Theory and Practice". Round-trip accuracy is well below 1e-6 degrees
over the usable UTM latitude band.
"""

from __future__ import annotations

import math

WGS84_A = 6378137.0
WGS84_B = 6356752.314245
UTM_SCALE = 0.9996
UTM_FALSE_EASTING = 500000.0
UTM_FALSE_NORTHING_SOUTH = 10000000.0

_N = (WGS84_A - WGS84_B) / (WGS84_A + WGS84_B)
_EP2 = (WGS84_A**2 - WGS84_B**2) / WGS84_B**2


def utm_central_meridian(zone: int) -> float:
    """Central meridian of a UTM zone, in degrees."""
    _check_zone(zone)
    return -183.0 + 6.0 * zone


def _check_zone(zone: int) -> None:
    try:
        ok = int(zone) == zone and 1 <= int(zone) <= 60
    except (TypeError, ValueError):
        ok = False
    if not ok:
        raise ValueError(f"UTM zone must be an integer in [1, 60], got {zone!r}")


def _check_hemisphere(hemisphere: str) -> str:
    h = str(hemisphere).upper()
    if h not in ("N", "S"):
        raise ValueError(f"hemisphere must be 'N' or 'S', got {hemisphere!r}")
    return h


def _meridian_arc(phi: float) -> float:
    """Ellipsoidal distance from the equator to latitude phi (radians)."""
    n = _N
    alpha = 0.5 * (WGS84_A + WGS84_B) * (1.0 + n**2 / 4.0 + n**4 / 64.0)
    beta = -1.5 * n + 9.0 * n**3 / 16.0 - 3.0 * n**5 / 32.0
    gamma = 15.0 * n**2 / 16.0 - 15.0 * n**4 / 32.0
    delta = -35.0 * n**3 / 48.0 + 105.0 * n**5 / 256.0
    epsilon = 315.0 * n**4 / 512.0
    return alpha * (
        phi
        + beta * math.sin(2.0 * phi)
        + gamma * math.sin(4.0 * phi)
        + delta * math.sin(6.0 * phi)
        + epsilon * math.sin(8.0 * phi)
    )


def _footpoint_latitude(y: float) -> float:
    """Latitude whose meridian arc equals the given northing (radians)."""
    n = _N
    alpha = 0.5 * (WGS84_A + WGS84_B) * (1.0 + n**2 / 4.0 + n**4 / 64.0)
    y_ = y / alpha
    beta = 1.5 * n - 27.0 * n**3 / 32.0 + 269.0 * n**5 / 512.0
    gamma = 21.0 * n**2 / 16.0 - 55.0 * n**4 / 32.0
    delta = 151.0 * n**3 / 96.0 - 417.0 * n**5 / 128.0
    epsilon = 1097.0 * n**4 / 512.0
    return (
        y_
        + beta * math.sin(2.0 * y_)
        + gamma * math.sin(4.0 * y_)
        + delta * math.sin(6.0 * y_)
        + epsilon * math.sin(8.0 * y_)
    )


def _tm_forward(phi: float, lam: float, lam0: float) -> tuple[float, float]:
    """Latitude/longitude (radians) to unscaled transverse Mercator (x, y)."""
    cos_phi = math.cos(phi)
    nu2 = _EP2 * cos_phi**2
    big_n = WGS84_A**2 / (WGS84_B * math.sqrt(1.0 + nu2))
    t = math.tan(phi)
    t2 = t * t
    dl = lam - lam0

    l3 = 1.0 - t2 + nu2
    l4 = 5.0 - t2 + 9.0 * nu2 + 4.0 * nu2**2
    l5 = 5.0 - 18.0 * t2 + t2**2 + 14.0 * nu2 - 58.0 * t2 * nu2
    l6 = 61.0 - 58.0 * t2 + t2**2 + 270.0 * nu2 - 330.0 * t2 * nu2
    l7 = 61.0 - 479.0 * t2 + 179.0 * t2**2 - t2**3
    l8 = 1385.0 - 3111.0 * t2 + 543.0 * t2**2 - t2**3

    x = (
        big_n * cos_phi * dl
        + big_n / 6.0 * cos_phi**3 * l3 * dl**3
        + big_n / 120.0 * cos_phi**5 * l5 * dl**5
        + big_n / 5040.0 * cos_phi**7 * l7 * dl**7
    )
    y = (
        _meridian_arc(phi)
        + t / 2.0 * big_n * cos_phi**2 * dl**2
        + t / 24.0 * big_n * cos_phi**4 * l4 * dl**4
        + t / 720.0 * big_n * cos_phi**6 * l6 * dl**6
        + t / 40320.0 * big_n * cos_phi**8 * l8 * dl**8
    )
    return x, y


def _tm_inverse(x: float, y: float, lam0: float) -> tuple[float, float]:
    """Unscaled transverse Mercator (x, y) to latitude/longitude (radians)."""
    phif = _footpoint_latitude(y)
    cf = math.cos(phif)
    nuf2 = _EP2 * cf**2
    nf = WGS84_A**2 / (WGS84_B * math.sqrt(1.0 + nuf2))
    tf = math.tan(phif)
    tf2 = tf * tf
    tf4 = tf2 * tf2

    frac = [0.0] * 9
    nfpow = nf
    frac[1] = 1.0 / (nfpow * cf)
    nfpow *= nf
    frac[2] = tf / (2.0 * nfpow)
    nfpow *= nf
    frac[3] = 1.0 / (6.0 * nfpow * cf)
    nfpow *= nf
    frac[4] = tf / (24.0 * nfpow)
    nfpow *= nf
    frac[5] = 1.0 / (120.0 * nfpow * cf)
    nfpow *= nf
    frac[6] = tf / (720.0 * nfpow)
    nfpow *= nf
    frac[7] = 1.0 / (5040.0 * nfpow * cf)
    nfpow *= nf
    frac[8] = tf / (40320.0 * nfpow)

    x2 = -1.0 - nuf2
    x3 = -1.0 - 2.0 * tf2 - nuf2
    x4 = 5.0 + 3.0 * tf2 + 6.0 * nuf2 - 6.0 * tf2 * nuf2 - 3.0 * nuf2**2 - 9.0 * tf2 * nuf2**2
    x5 = 5.0 + 28.0 * tf2 + 24.0 * tf4 + 6.0 * nuf2 + 8.0 * tf2 * nuf2
    x6 = -61.0 - 90.0 * tf2 - 45.0 * tf4 - 107.0 * nuf2 + 162.0 * tf2 * nuf2
    x7 = -61.0 - 662.0 * tf2 - 1320.0 * tf4 - 720.0 * tf4 * tf2
    x8 = 1385.0 + 3633.0 * tf2 + 4095.0 * tf4 + 1575.0 * tf4 * tf2

    lat = (
        phif
        + frac[2] * x2 * x**2
        + frac[4] * x4 * x**4
        + frac[6] * x6 * x**6
        + frac[8] * x8 * x**8
    )
    lon = (
        lam0
        + frac[1] * x
        + frac[3] * x3 * x**3
        + frac[5] * x5 * x**5
        + frac[7] * x7 * x**7
    )
    return lat, lon


def utm_to_geodetic(easting: float, northing: float, zone: int, hemisphere: str) -> tuple[float, float]:
    """UTM easting/northing (meters) to (latitude, longitude) in degrees."""
    _check_zone(zone)
    hemi = _check_hemisphere(hemisphere)
    if not 0.0 < easting < 1e6:
        raise ValueError(f"easting must be in (0, 1e6) meters, got {easting}")
    if not 0.0 <= northing <= 1e7:
        raise ValueError(f"northing must be in [0, 1e7] meters, got {northing}")
    x = (easting - UTM_FALSE_EASTING) / UTM_SCALE
    y = northing
    if hemi == "S":
        y -= UTM_FALSE_NORTHING_SOUTH
    y /= UTM_SCALE
    lam0 = math.radians(utm_central_meridian(zone))
    lat, lon = _tm_inverse(x, y, lam0)
    return math.degrees(lat), math.degrees(lon)


def geodetic_to_utm(lat: float, lon: float, zone: int | None = None) -> tuple[float, float, int, str]:
    """(latitude, longitude) in degrees to (easting, northing, zone, hemisphere).

    When ``zone`` is omitted it is derived from the longitude.
    """
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"latitude must be in [-90, 90], got {lat}")
    if not -180.0 <= lon < 360.0:
        raise ValueError(f"longitude out of range: {lon}")
    if zone is None:
        zone = int(math.floor((((lon + 180.0) % 360.0)) / 6.0)) + 1
    _check_zone(zone)
    lam0 = math.radians(utm_central_meridian(zone))
    x, y = _tm_forward(math.radians(lat), math.radians(lon), lam0)
    easting = x * UTM_SCALE + UTM_FALSE_EASTING
    northing = y * UTM_SCALE
    hemisphere = "N"
    if lat < 0.0:
        hemisphere = "S"
        northing += UTM_FALSE_NORTHING_SOUTH
    return easting, northing, zone, hemisphere
