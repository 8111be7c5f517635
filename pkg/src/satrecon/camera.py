"""Camera models and calibration-matrix algebra.

Covers the finite projective camera (pinhole with skew), its closed-form
calibration inverse, transforms between two calibrations, the translation-free
skew decomposition used to feed skew-free reconstruction backends, and the
rational polynomial camera (RPC) used by satellite metadata.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NonProjectableError

_Z_EPSILON = 1e-12
_RPC_DEN_EPSILON = 1e-10
_RPC_VALIDITY_BOUND = 1.5


@dataclass(frozen=True)
class FpcIntrinsics:
    """Calibration parameters of a finite projective camera, in pixels.

    ``s`` is the skew entry; a nonzero value means the pixel axes are not
    perpendicular. The skew-free variant is the same type with ``s == 0``.
    """

    fx: float
    fy: float
    s: float = 0.0
    px: float = 0.0
    py: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        for name in ("fx", "fy", "s", "px", "py"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"intrinsic {name} must be finite")

    def as_matrix(self) -> np.ndarray:
        """Upper-triangular 3x3 calibration matrix with bottom row (0, 0, 1)."""
        return np.array(
            [
                [self.fx, self.s, self.px],
                [0.0, self.fy, self.py],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class FpcCamera:
    """Finite projective camera: intrinsics plus world-to-camera pose."""

    intrinsics: FpcIntrinsics
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if np.max(np.abs(r @ r.T - np.eye(3))) >= 1e-9:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) >= 1e-9:
            raise ValueError("rotation must have determinant 1")
        r = r.copy()
        t = t.copy()
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def projection_3x4(self) -> np.ndarray:
        """Conventional 3x4 projection K [R | t]."""
        rt = np.hstack([self.rotation, self.translation.reshape(3, 1)])
        return self.intrinsics.as_matrix() @ rt


@dataclass(frozen=True)
class SkewDecomposition:
    """Split of a skewed calibration into a skew-free one and a shear.

    ``t_sp`` is unit-diagonal with a single off-diagonal entry ``s / fy`` at
    row 0, column 1 and a zero translation column, so re-applying it never
    pushes pixels outside the image canvas. ``t_sp @ k_s.as_matrix()``
    reproduces the source calibration exactly.
    """

    k_s: FpcIntrinsics
    t_sp: np.ndarray

    def __post_init__(self):
        if self.k_s.s != 0.0:
            raise ValueError("k_s must be skew-free")
        t = np.asarray(self.t_sp, dtype=np.float64).copy()
        if t.shape != (3, 3):
            raise ValueError("t_sp must be 3x3")
        t.setflags(write=False)
        object.__setattr__(self, "t_sp", t)

    def t_sp_inv(self) -> np.ndarray:
        """Exact inverse of the shear (negated off-diagonal entry)."""
        inv = np.eye(3)
        inv[0, 1] = -self.t_sp[0, 1]
        return inv


def fpc_invert(k: FpcIntrinsics) -> np.ndarray:
    """Closed-form inverse of a calibration matrix.

    Exploits the upper-triangular structure; agrees with a general 3x3
    inverse to machine precision.
    """
    fx, fy, s, px, py = k.fx, k.fy, k.s, k.px, k.py
    return np.array(
        [
            [1.0 / fx, -s / (fx * fy), py * s / (fx * fy) - px / fx],
            [0.0, 1.0 / fy, -py / fy],
            [0.0, 0.0, 1.0],
        ]
    )


def transform_between(k_p: FpcIntrinsics, k_p_prime: FpcIntrinsics) -> np.ndarray:
    """Pixel-domain transform taking projections under ``k_p_prime`` to ``k_p``.

    Returns ``T = K_p @ K_p'^-1``, i.e. the affine map satisfying
    ``T @ K_p' == K_p``.
    """
    return k_p.as_matrix() @ fpc_invert(k_p_prime)


def decompose_skew(k_p: FpcIntrinsics) -> SkewDecomposition:
    """Decompose ``k_p`` into a skew-free calibration and a translation-free shear.

    The skew-free calibration keeps the focal lengths and the y principal
    point and shifts the x principal point by ``-s * py / fy``; the shear is
    unit-diagonal with off-diagonal ``s / fy`` and no translation column, so
    no pixel content is pushed off the canvas when it is undone.
    """
    k_s = FpcIntrinsics(
        fx=k_p.fx,
        fy=k_p.fy,
        s=0.0,
        px=k_p.px - k_p.s * k_p.py / k_p.fy,
        py=k_p.py,
    )
    t_sp = np.array(
        [
            [1.0, k_p.s / k_p.fy, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    return SkewDecomposition(k_s=k_s, t_sp=t_sp)


def fpc_project(cam: FpcCamera, world_point) -> tuple[float, float]:
    """Project a world point to a dehomogenized pixel (u, v).

    Raises :class:`NonProjectableError` for points at or behind the camera
    plane (camera-frame depth ``z <= 1e-12``).
    """
    p = np.asarray(world_point, dtype=np.float64).reshape(3)
    p_cam = cam.rotation @ p + cam.translation
    z = p_cam[2]
    if z <= _Z_EPSILON:
        raise NonProjectableError(f"point at or behind camera plane (z={z:.3e})")
    uvw = cam.intrinsics.as_matrix() @ p_cam
    return float(uvw[0] / uvw[2]), float(uvw[1] / uvw[2])


# ---------------------------------------------------------------------------
# Rational polynomial camera
# ---------------------------------------------------------------------------

# Monomial exponents (lon, lat, height) of the 20 cubic terms, in the standard
# satellite-metadata coefficient ordering.
_RPC_EXPONENTS = (
    (0, 0, 0),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 0),
    (1, 0, 1),
    (0, 1, 1),
    (2, 0, 0),
    (0, 2, 0),
    (0, 0, 2),
    (1, 1, 1),
    (3, 0, 0),
    (1, 2, 0),
    (1, 0, 2),
    (2, 1, 0),
    (0, 3, 0),
    (0, 1, 2),
    (2, 0, 1),
    (0, 2, 1),
    (0, 0, 3),
)


def rpc_terms(lon_n, lat_n, h_n) -> np.ndarray:
    """The 20 cubic monomials of normalized (lon, lat, height).

    Scalar inputs give shape (20,); array inputs give shape (20,) + input shape.
    """
    lon_n = np.asarray(lon_n, dtype=np.float64)
    lat_n = np.asarray(lat_n, dtype=np.float64)
    h_n = np.asarray(h_n, dtype=np.float64)
    out = np.empty((20,) + lon_n.shape, dtype=np.float64)
    for i, (el, ep, eh) in enumerate(_RPC_EXPONENTS):
        out[i] = (lon_n**el) * (lat_n**ep) * (h_n**eh)
    return out


class RpcProjection(NamedTuple):
    """Result of an RPC evaluation; ``within_validity`` is a soft flag."""

    sample: float
    line: float
    within_validity: bool


@dataclass(frozen=True)
class RpcCamera:
    """Rational polynomial camera: geodetic coordinates to image pixels.

    Each image coordinate is a ratio of two 20-term cubic polynomials in
    normalized (lat, lon, height). The denominator constant terms are
    normalized to 1 on construction to remove the overall scale ambiguity.
    """

    line_num: np.ndarray
    line_den: np.ndarray
    samp_num: np.ndarray
    samp_den: np.ndarray
    lat_off: float
    lat_scale: float
    lon_off: float
    lon_scale: float
    height_off: float
    height_scale: float
    line_off: float
    line_scale: float
    samp_off: float
    samp_scale: float

    def __post_init__(self):
        for name in ("lat_scale", "lon_scale", "height_scale", "line_scale", "samp_scale"):
            if getattr(self, name) == 0:
                raise ValueError(f"{name} must be nonzero")
        coeffs = {}
        for name in ("line_num", "line_den", "samp_num", "samp_den"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.shape != (20,):
                raise ValueError(f"{name} must have 20 coefficients, got {arr.size}")
            coeffs[name] = arr.copy()
        for prefix in ("line", "samp"):
            den0 = coeffs[f"{prefix}_den"][0]
            if den0 == 0:
                raise ValueError(f"{prefix}_den constant term must be nonzero")
            coeffs[f"{prefix}_num"] /= den0
            coeffs[f"{prefix}_den"] /= den0
        for name, arr in coeffs.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def normalize(self, lat: float, lon: float, height: float):
        return (
            (lon - self.lon_off) / self.lon_scale,
            (lat - self.lat_off) / self.lat_scale,
            (height - self.height_off) / self.height_scale,
        )


def rpc_project(rpc: RpcCamera, lat: float, lon: float, height: float) -> RpcProjection:
    """Project geodetic coordinates (degrees, meters) to pixel (sample, line).

    Inputs whose normalized coordinates exceed the soft validity bound 1.5
    still evaluate but return ``within_validity=False``. A denominator with
    magnitude below 1e-10 raises :class:`NonProjectableError`.
    """
    lon_n, lat_n, h_n = rpc.normalize(lat, lon, height)
    within = max(abs(lon_n), abs(lat_n), abs(h_n)) <= _RPC_VALIDITY_BOUND
    terms = rpc_terms(lon_n, lat_n, h_n)
    samp_den = float(rpc.samp_den @ terms)
    line_den = float(rpc.line_den @ terms)
    if abs(samp_den) < _RPC_DEN_EPSILON or abs(line_den) < _RPC_DEN_EPSILON:
        raise NonProjectableError("rational polynomial denominator is numerically zero")
    sample = rpc.samp_off + rpc.samp_scale * float(rpc.samp_num @ terms) / samp_den
    line = rpc.line_off + rpc.line_scale * float(rpc.line_num @ terms) / line_den
    return RpcProjection(sample=sample, line=line, within_validity=within)
