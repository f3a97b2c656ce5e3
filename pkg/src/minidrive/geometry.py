"""Planar geometry primitives: poses, oriented boxes, polylines, polygons.

Conventions used throughout the package:
  * map frame: x east, y north, yaw counter-clockwise from +x, in (-pi, pi]
  * ego frame: x forward, y left
  * all distances in meters, angles in radians
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise ValueError(f"non-finite pose ({self.x}, {self.y}, {self.yaw})")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def heading(self) -> np.ndarray:
        return np.array([math.cos(self.yaw), math.sin(self.yaw)])

    def to_frame(self, points: np.ndarray) -> np.ndarray:
        """Express map-frame points (..., 2) in this pose's local frame (x forward, y left)."""
        p = np.asarray(points, dtype=float)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx = p[..., 0] - self.x
        dy = p[..., 1] - self.y
        return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)

    def from_frame(self, points: np.ndarray) -> np.ndarray:
        """Express local-frame points (..., 2) in the map frame."""
        p = np.asarray(points, dtype=float)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        x = c * p[..., 0] - s * p[..., 1] + self.x
        y = s * p[..., 0] + c * p[..., 1] + self.y
        return np.stack([x, y], axis=-1)

    def offset(self, forward: float = 0.0, left: float = 0.0, dyaw: float = 0.0) -> "Pose2D":
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2D(self.x + c * forward - s * left,
                      self.y + s * forward + c * left,
                      self.yaw + dyaw)


@dataclass(frozen=True)
class OrientedBox:
    """Rectangle given by center, heading and half extents (half_length, half_width)."""
    cx: float
    cy: float
    yaw: float
    half_length: float
    half_width: float

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.half_length, self.half_width
        local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])

    def axes(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, s], [-s, c]])

    def contains_points(self, points: np.ndarray) -> np.ndarray:
        """Closed containment test for map-frame points (..., 2)."""
        p = np.asarray(points, dtype=float)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx = p[..., 0] - self.cx
        dy = p[..., 1] - self.cy
        u = c * dx + s * dy
        v = -s * dx + c * dy
        return (np.abs(u) <= self.half_length) & (np.abs(v) <= self.half_width)


def boxes_intersect(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis test for two oriented boxes; touching boxes count as intersecting."""
    ca = np.array([a.cx, a.cy])
    cb = np.array([b.cx, b.cy])
    d = cb - ca
    axes_a = a.axes()
    axes_b = b.axes()
    ext_a = np.array([a.half_length, a.half_width])
    ext_b = np.array([b.half_length, b.half_width])
    for axes, other_axes, ext, other_ext in ((axes_a, axes_b, ext_a, ext_b),
                                             (axes_b, axes_a, ext_b, ext_a)):
        for i in range(2):
            axis = axes[i]
            ra = ext[i]
            rb = other_ext[0] * abs(float(other_axes[0] @ axis)) + \
                other_ext[1] * abs(float(other_axes[1] @ axis))
            if abs(float(d @ axis)) > ra + rb:
                return False
    return True


# ---------------------------------------------------------------------------
# polylines

def polyline_arclength(points: np.ndarray) -> np.ndarray:
    """Cumulative chord length along a polyline (N, 2), starting at 0."""
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    """Resample a polyline so consecutive points are exactly `spacing` apart (chord distance).

    Walks the source polyline placing points by exact chord stepping; any
    sub-spacing remainder at the end is dropped, so the result's length is an
    exact multiple of `spacing`.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return pts.copy()
    out = [pts[0]]
    cur = pts[0].copy()
    i = 0
    while True:
        # advance to the segment whose far end is at least `spacing` away
        while i < len(pts) - 1 and np.linalg.norm(pts[i + 1] - cur) < spacing:
            i += 1
            cur_to_next = np.linalg.norm(pts[i] - cur)
            if i == len(pts) - 1 and cur_to_next < spacing:
                return np.array(out)
        if i >= len(pts) - 1:
            return np.array(out)
        # exact chord step: intersect circle of radius `spacing` around cur
        # with segment cur->pts[i+1] ... pts[i+1] is guaranteed far enough
        d = pts[i + 1] - cur
        dist = np.linalg.norm(d)
        if dist < spacing:
            i += 1
            continue
        nxt = cur + d * (spacing / dist)
        out.append(nxt)
        cur = nxt


def project_to_polyline(points: np.ndarray, query: np.ndarray) -> tuple[int, float, float]:
    """Nearest vertex of a polyline to `query`.

    Returns (index, distance, signed_lateral) where signed_lateral is positive
    when the query lies to the left of the local direction at that vertex.
    """
    pts = np.asarray(points, dtype=float)
    q = np.asarray(query, dtype=float)
    d2 = np.sum((pts - q) ** 2, axis=1)
    idx = int(np.argmin(d2))
    direction = _local_direction(pts, idx)
    off = q - pts[idx]
    lateral = float(direction[0] * off[1] - direction[1] * off[0])
    return idx, float(math.sqrt(d2[idx])), lateral


def _local_direction(pts: np.ndarray, idx: int) -> np.ndarray:
    if idx < len(pts) - 1:
        d = pts[idx + 1] - pts[idx]
    else:
        d = pts[idx] - pts[idx - 1]
    n = np.linalg.norm(d)
    return d / n if n > 0 else np.array([1.0, 0.0])


def point_at_arclength(points: np.ndarray, arclen: np.ndarray, s: float) -> np.ndarray:
    """Interpolate a polyline at arc position s (clamped to its extent)."""
    s = min(max(s, 0.0), float(arclen[-1]))
    x = np.interp(s, arclen, points[:, 0])
    y = np.interp(s, arclen, points[:, 1])
    return np.array([x, y])


def heading_at_arclength(points: np.ndarray, arclen: np.ndarray, s: float) -> float:
    s = min(max(s, 0.0), float(arclen[-1]))
    idx = int(np.searchsorted(arclen, s, side="right")) - 1
    idx = min(max(idx, 0), len(points) - 2)
    d = points[idx + 1] - points[idx]
    return math.atan2(d[1], d[0])


def segment_distances(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """Distance from each point (N, 2) to the segment a-b."""
    p = np.asarray(points, dtype=float)
    a = np.asarray(seg_a, dtype=float)
    b = np.asarray(seg_b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(p - a, axis=-1)
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(p - proj, axis=-1)


def polyline_distance(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Distance from each query point (N, 2) to a polyline (M, 2)."""
    p = np.asarray(points, dtype=float)
    line = np.asarray(polyline, dtype=float)
    if len(line) == 1:
        return np.linalg.norm(p - line[0], axis=-1)
    a = line[:-1]
    b = line[1:]
    ab = b - a                                    # (M-1, 2)
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom == 0.0, 1.0, denom)
    diff = p[:, None, :] - a[None, :, :]          # (N, M-1, 2)
    t = np.clip(np.einsum("nmj,mj->nm", diff, ab) / denom, 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * ab[None, :, :]
    d = np.linalg.norm(p[:, None, :] - proj, axis=-1)
    return d.min(axis=1)


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd containment test of points (N, 2) in a simple polygon (M, 2)."""
    p = np.asarray(points, dtype=float)
    poly = np.asarray(polygon, dtype=float)
    x, y = p[:, 0], p[:, 1]
    inside = np.zeros(len(p), dtype=bool)
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        crosses = ((y0 > y) != (y1 > y))
        if not crosses.any():
            continue
        xint = x0 + (y[crosses] - y0) * (x1 - x0) / (y1 - y0)
        upd = np.where(crosses)[0][xint > x[crosses]]
        inside[upd] = ~inside[upd]
    return inside


def polygon_aabb(polygon: np.ndarray) -> tuple[float, float, float, float]:
    poly = np.asarray(polygon, dtype=float)
    return (float(poly[:, 0].min()), float(poly[:, 1].min()),
            float(poly[:, 0].max()), float(poly[:, 1].max()))
