"""Plane-plus-parallax depth reparameterization and depth-map operations.

Satellite reconstructions keep depth values numerically stable by expressing
them relative to a reference plane below the scene: a world point with
conventional depth ``Z`` and height ``z`` is stored as
``m = z_bar * (z - d) / Z`` where ``z_bar`` is the mean conventional depth and
``z = d`` is the reference plane. The 4x4 matrix bundling the conventional
3x4 projection with the plane row makes the mapping invertible, so metric
depth is recovered from ``(u, v, m)`` alone via the last row of the inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonProjectableError, SingularMatrixError
from .raster import AffineMap2D, Raster, warp_affine

_Z_EPSILON = 1e-12
_DOT_EPSILON = 1e-14
_INVERSE_TOL = 1e-9

KIND_REPARAM = "m"
KIND_METRIC = "z"


def _equilibrated_identity_residual(p: np.ndarray, p_inv: np.ndarray) -> float:
    """Max deviation of ``p @ p_inv`` from identity, under column equilibration.

    Geo-anchored projections mix unit-scale rotation columns with ~1e6-scale
    translation columns; evaluating the raw product would drown the identity
    in rounding noise even for an exact inverse. Scaling columns of ``p`` and
    rows of ``p_inv`` reciprocally leaves the identity untouched and makes the
    check meaningful at every coordinate scale.
    """
    col_scale = np.max(np.abs(p), axis=0)
    if not np.all(col_scale > 0):
        return float("inf")
    balanced = (p / col_scale) @ (p_inv * col_scale[:, np.newaxis])
    return float(np.max(np.abs(balanced - np.eye(4))))


@dataclass(frozen=True)
class ReparamProjection:
    """4x4 reparameterized projection, its inverse, and their scale factors.

    ``p`` and ``p_inv`` are stored in normalized form: each equals the true
    matrix multiplied by its factor (``n_p`` resp. ``n_p_inv``), chosen by
    default so the stored matrices have unit max-absolute entry. Recovery
    results are invariant to the factor convention because the factor cancels;
    it is recorded so files exchanged with other tools stay interpretable.
    """

    p: np.ndarray
    p_inv: np.ndarray
    n_p: float
    n_p_inv: float
    z_bar: float
    d: float

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64).copy()
        p_inv = np.asarray(self.p_inv, dtype=np.float64).copy()
        if p.shape != (4, 4) or p_inv.shape != (4, 4):
            raise ValueError("p and p_inv must be 4x4")
        if not (self.n_p > 0 and self.n_p_inv > 0):
            raise ValueError("normalization factors must be positive")
        if not self.z_bar > 0:
            raise ValueError(f"z_bar must be positive, got {self.z_bar}")
        residual = _equilibrated_identity_residual(p / self.n_p, p_inv / self.n_p_inv)
        if not residual < _INVERSE_TOL:
            raise SingularMatrixError(
                f"p and p_inv are not inverses (residual {residual:.3e})"
            )
        row4 = p[3] / self.n_p
        expected = np.array([0.0, 0.0, self.z_bar, -self.z_bar * self.d])
        if np.max(np.abs(row4 - expected)) > 1e-6 * max(1.0, self.z_bar, abs(self.z_bar * self.d)):
            raise ValueError("row 4 of the unnormalized projection must be (0, 0, z_bar, -z_bar*d)")
        p.setflags(write=False)
        p_inv.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "p_inv", p_inv)

    def p3x4(self) -> np.ndarray:
        """Conventional (unnormalized) 3x4 projection rows."""
        return self.p[:3] / self.n_p


@dataclass(frozen=True)
class DepthMap:
    """Single-channel depth raster tagged with its value kind.

    ``kind`` is ``"m"`` for reparameterized values or ``"z"`` for metric
    depth; metric maps must be positive wherever valid.
    """

    raster: Raster
    kind: str
    camera_id: str = ""

    def __post_init__(self):
        if self.raster.channels != 1:
            raise ValueError("depth maps must have exactly one channel")
        if self.kind not in (KIND_REPARAM, KIND_METRIC):
            raise ValueError(f"kind must be '{KIND_REPARAM}' or '{KIND_METRIC}', got {self.kind!r}")
        if self.kind == KIND_METRIC:
            values = self.raster.data[self.raster.valid_mask()]
            if values.size and not (values > 0).all():
                raise ValueError("metric depth maps must be positive where valid")


def build_reparam(p3x4, z_bar: float, d: float) -> ReparamProjection:
    """Assemble the 4x4 reparameterized projection from a conventional 3x4 one.

    Raises :class:`SingularMatrixError` when the combined matrix is not
    invertible, which happens exactly when the reference plane ``z = d``
    passes through the camera center.
    """
    a = np.asarray(p3x4, dtype=np.float64)
    if a.shape != (3, 4):
        raise ValueError(f"p3x4 must be 3x4, got {a.shape}")
    if not z_bar > 0:
        raise ValueError(f"z_bar must be positive, got {z_bar}")
    p = np.vstack([a, [0.0, 0.0, z_bar, -z_bar * d]])
    # Column equilibration: geo-registered cameras mix unit-scale rotation
    # columns with ~1e6-scale translation columns, which would otherwise
    # dominate the inverse's rounding error.
    col_scale = np.max(np.abs(p), axis=0)
    if not np.all(col_scale > 0):
        raise SingularMatrixError("reparameterized projection has a zero column")
    try:
        p_inv = np.linalg.inv(p / col_scale) / col_scale[:, np.newaxis]
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"reparameterized projection is singular: {exc}") from exc
    residual = _equilibrated_identity_residual(p, p_inv)
    if not residual < _INVERSE_TOL:
        raise SingularMatrixError(
            f"reparameterized projection is numerically singular (residual {residual:.3e})"
        )
    n_p = 1.0 / np.max(np.abs(p))
    n_p_inv = 1.0 / np.max(np.abs(p_inv))
    return ReparamProjection(
        p=p * n_p, p_inv=p_inv * n_p_inv, n_p=n_p, n_p_inv=n_p_inv, z_bar=z_bar, d=d
    )


def transform_reparam(rp: ReparamProjection, pixel_map) -> ReparamProjection:
    """Rebuild the projection for a pixel domain transformed by a 3x3 map.

    Used when images and depth maps are resampled (e.g. skew correction):
    the conventional projection rows become ``map @ p3x4`` while the plane
    row, the mean depth and the stored depth values are unchanged.
    """
    m = np.asarray(pixel_map, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError("pixel_map must be 3x3")
    return build_reparam(m @ rp.p3x4(), rp.z_bar, rp.d)


def mean_conventional_depth(p3x4, points) -> float:
    """Mean conventional depth of world points under a 3x4 projection.

    Convenience for synthesizing fixtures; production pipelines receive the
    mean depth from the sparse reconstruction that produced the cameras.
    """
    a = np.asarray(p3x4, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.size == 0:
        raise ValueError("need at least one point")
    z = pts @ a[2, :3] + a[2, 3]
    return float(z.mean())


def forward_reparam_depth(rp: ReparamProjection, world_point) -> tuple[float, float, float]:
    """Project a world point to (u, v) plus its reparameterized depth m."""
    x = np.append(np.asarray(world_point, dtype=np.float64).reshape(3), 1.0)
    vec = rp.p @ x
    w = vec[2]
    # vec scales with n_p, so the homogeneous ratios are convention-free.
    z = w / rp.n_p
    if z <= _Z_EPSILON:
        raise NonProjectableError(f"point at or behind camera plane (Z={z:.3e})")
    return float(vec[0] / w), float(vec[1] / w), float(vec[3] / w)


def recover_depth(rp: ReparamProjection, u: float, v: float, m: float) -> float:
    """Metric depth from pixel coordinates and reparameterized depth.

    Computes ``n_p_inv / (r . [u, v, 1, m])`` with ``r`` the stored inverse's
    last row; the normalization factor cancels against the stored scaling.
    """
    if not (np.isfinite(u) and np.isfinite(v) and np.isfinite(m)):
        raise ValueError("u, v, m must be finite")
    r = rp.p_inv[3]
    denom = r[0] * u + r[1] * v + r[2] + r[3] * m
    if abs(denom) < _DOT_EPSILON:
        raise NonProjectableError("point at infinity (zero denominator)")
    return float(rp.n_p_inv / denom)


def recover_depth_map(dm: DepthMap, rp: ReparamProjection) -> DepthMap:
    """Convert a reparameterized depth map to metric depth, pixel by pixel.

    Pixel centers supply (u, v); nodata is preserved and pixels whose
    recovery is singular or non-positive become nodata.
    """
    if dm.kind != KIND_REPARAM:
        raise ValueError(f"expected a reparameterized ('{KIND_REPARAM}') depth map, got kind {dm.kind!r}")
    values = dm.raster.to_masked()[:, :, 0]
    h, w = values.shape
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    r = rp.p_inv[3]
    denom = r[0] * u + r[1] * v + r[2] + r[3] * values
    with np.errstate(divide="ignore", invalid="ignore"):
        z = rp.n_p_inv / denom
    z[~np.isfinite(z)] = np.nan
    z[np.abs(denom) < _DOT_EPSILON] = np.nan
    z[z <= 0] = np.nan
    return DepthMap(raster=dm.raster.from_masked(z), kind=KIND_METRIC, camera_id=dm.camera_id)


def skew_correct_depth_map(dm: DepthMap, t_sp) -> DepthMap:
    """Resample a depth map into the skew-free pixel domain.

    The shear is a pure pixel-domain map with no depth dependence, so values
    are resampled as plain scalars with the same cubic policy as images.
    """
    t = np.asarray(t_sp, dtype=np.float64)
    if t.shape != (3, 3):
        raise ValueError("t_sp must be 3x3")
    content_map = AffineMap2D(np.linalg.inv(t))
    warped = warp_affine(dm.raster, content_map)
    if dm.kind == KIND_METRIC:
        # Interpolation can undershoot at discontinuities; clip to validity.
        masked = warped.to_masked()
        masked[masked <= 0] = np.nan
        warped = warped.from_masked(masked)
    return DepthMap(raster=warped, kind=dm.kind, camera_id=dm.camera_id)


def depth_map_to_points(dm: DepthMap, rp: ReparamProjection) -> np.ndarray:
    """Back-project every valid pixel to a world point, returning (N, 3).

    For reparameterized maps the stored inverse applies directly; for metric
    maps the conventional rows are solved for the world point at the given
    depth. Pixels that back-project behind the camera are dropped.
    """
    values = dm.raster.to_masked()[:, :, 0]
    h, w = values.shape
    vy, vx = np.nonzero(np.isfinite(values))
    if vy.size == 0:
        return np.empty((0, 3), dtype=np.float64)
    u = vx.astype(np.float64)
    v = vy.astype(np.float64)
    vals = values[vy, vx]
    if dm.kind == KIND_REPARAM:
        pix = np.stack([u, v, np.ones_like(u), vals])
        hom = rp.p_inv @ pix
        wcomp = hom[3]
        keep = np.abs(wcomp) >= _DOT_EPSILON
        pts = (hom[:3, keep] / wcomp[keep]).T
        depths = rp.n_p_inv / wcomp[keep]
        return pts[depths > 0]
    a = rp.p3x4()
    lhs = a[:, :3]
    rhs = np.stack([u * vals, v * vals, vals]) - a[:, 3:4]
    pts = np.linalg.solve(lhs, rhs).T
    return pts
