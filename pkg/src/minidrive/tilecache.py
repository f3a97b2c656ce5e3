"""Sparse tile cache of static map rasters (road, lane boundaries, drivable area).

Tiles live on a fixed global grid: texel (ix, iy) has its center at
((ix + 0.5) * resolution, (iy + 0.5) * resolution) in the map frame, and tile
(tx, ty) holds texels ix in [tx*T, (tx+1)*T), iy likewise. Only tiles within
TILE_DILATION_M of some drivable geometry are materialized; everything else
reads as empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import points_in_polygon, polygon_aabb
from .worldmap import MapModel

CLASS_ROAD = 0
CLASS_BOUNDARY = 1
CLASS_DRIVABLE = 2
N_STATIC_CLASSES = 3

TILE_DILATION_M = 2.0
BOUNDARY_HALFWIDTH_M = 0.15


@dataclass
class _StaticGeometry:
    """Pre-extracted vector geometry for texel evaluation."""
    corridor_a: np.ndarray        # (M, 2) segment starts
    corridor_b: np.ndarray        # (M, 2) segment ends
    corridor_halfwidth: np.ndarray  # (M,)
    boundary_a: np.ndarray
    boundary_b: np.ndarray
    boundary_halfwidth: float
    polygons: list[np.ndarray]


def _offset_polyline(points: np.ndarray, offset: float) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    d = np.gradient(p, axis=0)
    n = np.linalg.norm(d, axis=1, keepdims=True)
    n[n == 0] = 1.0
    d = d / n
    normal = np.stack([-d[:, 1], d[:, 0]], axis=1)
    return p + offset * normal


def extract_static_geometry(world: MapModel,
                            boundary_halfwidth: float = BOUNDARY_HALFWIDTH_M) -> _StaticGeometry:
    ca, cb, cw = [], [], []
    ba, bb = [], []
    for lane in world.lanes.values():
        pts = lane.centerline
        ca.append(pts[:-1])
        cb.append(pts[1:])
        cw.append(np.full(len(pts) - 1, lane.width / 2.0))
        for side in (+1.0, -1.0):
            edge = _offset_polyline(pts, side * lane.width / 2.0)
            ba.append(edge[:-1])
            bb.append(edge[1:])
    polygons = [np.asarray(p, dtype=float) for p in world.drivable_polygons]
    polygons += [bay.polygon for bay in world.parking_bays]
    return _StaticGeometry(
        corridor_a=np.concatenate(ca) if ca else np.zeros((0, 2)),
        corridor_b=np.concatenate(cb) if cb else np.zeros((0, 2)),
        corridor_halfwidth=np.concatenate(cw) if cw else np.zeros(0),
        boundary_a=np.concatenate(ba) if ba else np.zeros((0, 2)),
        boundary_b=np.concatenate(bb) if bb else np.zeros((0, 2)),
        boundary_halfwidth=boundary_halfwidth,
        polygons=polygons,
    )


def _segment_cull(a: np.ndarray, b: np.ndarray, pad: np.ndarray | float,
                  x0: float, y0: float, x1: float, y1: float):
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    if np.isscalar(pad):
        padx = pady = pad
    else:
        padx = pady = pad
    keep = ((hi[:, 0] + padx >= x0) & (lo[:, 0] - padx <= x1) &
            (hi[:, 1] + pady >= y0) & (lo[:, 1] - pady <= y1))
    return keep


def _within_segments(px: np.ndarray, py: np.ndarray, a: np.ndarray, b: np.ndarray,
                     halfwidth: np.ndarray | float) -> np.ndarray:
    """True where point (px, py) lies within halfwidth of any segment (closed)."""
    hit = np.zeros(px.shape, dtype=bool)
    if len(a) == 0:
        return hit
    p = np.stack([px.ravel(), py.ravel()], axis=1)
    todo = np.arange(len(p))
    hw = np.broadcast_to(np.asarray(halfwidth, dtype=float), (len(a),))
    # chunk over segments to bound memory
    flat = np.zeros(len(p), dtype=bool)
    chunk = max(1, int(4_000_000 // max(len(p), 1)))
    for s0 in range(0, len(a), chunk):
        aa = a[s0:s0 + chunk]
        bb = b[s0:s0 + chunk]
        ww = hw[s0:s0 + chunk]
        rem = todo[~flat[todo]]
        if len(rem) == 0:
            break
        q = p[rem]
        ab = bb - aa
        denom = np.einsum("ij,ij->i", ab, ab)
        denom = np.where(denom == 0.0, 1.0, denom)
        diff = q[:, None, :] - aa[None, :, :]
        t = np.clip(np.einsum("nmj,mj->nm", diff, ab) / denom, 0.0, 1.0)
        proj = aa[None, :, :] + t[..., None] * ab[None, :, :]
        d2 = np.sum((q[:, None, :] - proj) ** 2, axis=-1)
        ok = (d2 <= (ww[None, :] ** 2)).any(axis=1)
        flat[rem[ok]] = True
    return flat.reshape(px.shape)


def evaluate_static_texels(geom: _StaticGeometry, class_idx: int,
                           ix: np.ndarray, iy: np.ndarray, resolution: float) -> np.ndarray:
    """Ground-truth texel values for a static class on the global texel grid."""
    px = (np.asarray(ix, dtype=float) + 0.5) * resolution
    py = (np.asarray(iy, dtype=float) + 0.5) * resolution
    x0, x1 = float(px.min()), float(px.max())
    y0, y1 = float(py.min()), float(py.max())
    if class_idx == CLASS_ROAD or class_idx == CLASS_DRIVABLE:
        pad = float(geom.corridor_halfwidth.max()) if len(geom.corridor_halfwidth) else 0.0
        keep = _segment_cull(geom.corridor_a, geom.corridor_b, pad, x0, y0, x1, y1)
        out = _within_segments(px, py, geom.corridor_a[keep], geom.corridor_b[keep],
                               geom.corridor_halfwidth[keep])
        if class_idx == CLASS_DRIVABLE:
            pts = np.stack([px.ravel(), py.ravel()], axis=1)
            flat = out.ravel()
            for poly in geom.polygons:
                bx0, by0, bx1, by1 = polygon_aabb(poly)
                if bx1 < x0 or bx0 > x1 or by1 < y0 or by0 > y1:
                    continue
                todo = ~flat
                if not todo.any():
                    break
                flat[np.where(todo)[0][points_in_polygon(pts[todo], poly)]] = True
            out = flat.reshape(px.shape)
        return out.astype(np.uint8)
    if class_idx == CLASS_BOUNDARY:
        keep = _segment_cull(geom.boundary_a, geom.boundary_b, geom.boundary_halfwidth,
                             x0, y0, x1, y1)
        return _within_segments(px, py, geom.boundary_a[keep], geom.boundary_b[keep],
                                geom.boundary_halfwidth).astype(np.uint8)
    raise ValueError(f"unknown static class index {class_idx}")


# ---------------------------------------------------------------------------
# tile materialization

def _rect_segment_distance(x0, y0, x1, y1, a, b) -> np.ndarray:
    """Distance from axis-aligned rect to each segment a[i]-b[i] (0 when touching)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # distance from clamped segment sample points; exact enough via dense parameter
    # sampling is avoided: use the max of separations along x and y is wrong for
    # diagonals, so compute min distance of rect corners to segment and of segment
    # endpoints to rect, plus 0 if the segment crosses the rect.
    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom == 0.0, 1.0, denom)
    d_corner = np.full(len(a), np.inf)
    for c in corners:
        t = np.clip(np.einsum("ij,ij->i", c - a, ab) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        d_corner = np.minimum(d_corner, np.linalg.norm(c - proj, axis=1))
    def pt_rect(p):
        dx = np.maximum(np.maximum(x0 - p[:, 0], 0.0), p[:, 0] - x1)
        dy = np.maximum(np.maximum(y0 - p[:, 1], 0.0), p[:, 1] - y1)
        return np.hypot(dx, dy)
    d_end = np.minimum(pt_rect(a), pt_rect(b))
    dist = np.minimum(d_corner, d_end)
    # segments crossing the rect: both endpoints outside but separating tests fail
    inside_x = (np.minimum(a[:, 0], b[:, 0]) <= x1) & (np.maximum(a[:, 0], b[:, 0]) >= x0)
    inside_y = (np.minimum(a[:, 1], b[:, 1]) <= y1) & (np.maximum(a[:, 1], b[:, 1]) >= y0)
    candidates = inside_x & inside_y & (dist > 0)
    if candidates.any():
        idx = np.where(candidates)[0]
        for i in idx:
            if _segment_crosses_rect(a[i], b[i], x0, y0, x1, y1):
                dist[i] = 0.0
    return dist


def _segment_crosses_rect(a, b, x0, y0, x1, y1) -> bool:
    # Liang-Barsky clip
    t0, t1 = 0.0, 1.0
    dx, dy = b[0] - a[0], b[1] - a[1]
    for p, q in ((-dx, a[0] - x0), (dx, x1 - a[0]), (-dy, a[1] - y0), (dy, y1 - a[1])):
        if p == 0:
            if q < 0:
                return False
            continue
        r = q / p
        if p < 0:
            if r > t1:
                return False
            t0 = max(t0, r)
        else:
            if r < t0:
                return False
            t1 = min(t1, r)
    return t0 <= t1


def tile_overlaps_geometry(geom: _StaticGeometry, tx: int, ty: int, tile_m: float,
                           dilation: float = TILE_DILATION_M) -> bool:
    """True when tile (tx, ty) intersects the drivable geometry dilated by `dilation`."""
    x0, y0 = tx * tile_m, ty * tile_m
    x1, y1 = x0 + tile_m, y0 + tile_m
    if len(geom.corridor_a):
        pad = geom.corridor_halfwidth + dilation
        keep = _segment_cull(geom.corridor_a, geom.corridor_b, float(pad.max()),
                             x0, y0, x1, y1)
        if keep.any():
            d = _rect_segment_distance(x0, y0, x1, y1, geom.corridor_a[keep],
                                       geom.corridor_b[keep])
            if (d <= pad[keep]).any():
                return True
    for poly in geom.polygons:
        bx0, by0, bx1, by1 = polygon_aabb(poly)
        if bx1 + dilation < x0 or bx0 - dilation > x1 or by1 + dilation < y0 or by0 - dilation > y1:
            continue
        corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        if points_in_polygon(corners, poly).any():
            return True
        if points_in_polygon(poly, np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])).any():
            return True
        edges_a = poly
        edges_b = np.roll(poly, -1, axis=0)
        d = _rect_segment_distance(x0, y0, x1, y1, edges_a, edges_b)
        if (d <= dilation).any():
            return True
    return False


@dataclass
class StaticTileCache:
    resolution: float
    tile_size_px: int
    tiles: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    @property
    def memory_bytes(self) -> int:
        return len(self.tiles) * N_STATIC_CLASSES * self.tile_size_px * self.tile_size_px

    def window(self, class_idx: int, ix0: int, iy0: int, nx: int, ny: int) -> np.ndarray:
        """Stitch a (ny, nx) texel window starting at global texel (ix0, iy0)."""
        out = np.zeros((ny, nx), dtype=np.uint8)
        T = self.tile_size_px
        tx0, tx1 = ix0 // T, (ix0 + nx - 1) // T
        ty0, ty1 = iy0 // T, (iy0 + ny - 1) // T
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                tile = self.tiles.get((tx, ty))
                if tile is None:
                    continue
                gx0, gy0 = tx * T, ty * T
                sx0 = max(ix0, gx0)
                sy0 = max(iy0, gy0)
                sx1 = min(ix0 + nx, gx0 + T)
                sy1 = min(iy0 + ny, gy0 + T)
                if sx0 >= sx1 or sy0 >= sy1:
                    continue
                out[sy0 - iy0:sy1 - iy0, sx0 - ix0:sx1 - ix0] = \
                    tile[class_idx, sy0 - gy0:sy1 - gy0, sx0 - gx0:sx1 - gx0]
        return out


def build_static_cache(world: MapModel, resolution: float, tile_size_px: int) -> StaticTileCache:
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if tile_size_px < 64:
        raise ValueError("tile_size_px must be at least 64")
    geom = extract_static_geometry(world)
    tile_m = resolution * tile_size_px
    cache = StaticTileCache(resolution=resolution, tile_size_px=tile_size_px)
    candidates: set[tuple[int, int]] = set()

    def add_range(x0, y0, x1, y1):
        tx0 = math.floor(x0 / tile_m)
        tx1 = math.floor(x1 / tile_m)
        ty0 = math.floor(y0 / tile_m)
        ty1 = math.floor(y1 / tile_m)
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                candidates.add((tx, ty))

    if len(geom.corridor_a):
        pad = geom.corridor_halfwidth + TILE_DILATION_M
        lo = np.minimum(geom.corridor_a, geom.corridor_b) - pad[:, None]
        hi = np.maximum(geom.corridor_a, geom.corridor_b) + pad[:, None]
        for (x0, y0), (x1, y1) in zip(lo, hi):
            add_range(x0, y0, x1, y1)
    for poly in geom.polygons:
        x0, y0, x1, y1 = polygon_aabb(poly)
        add_range(x0 - TILE_DILATION_M, y0 - TILE_DILATION_M,
                  x1 + TILE_DILATION_M, y1 + TILE_DILATION_M)

    T = tile_size_px
    for (tx, ty) in sorted(candidates):
        if not tile_overlaps_geometry(geom, tx, ty, tile_m):
            continue
        ix = tx * T + np.arange(T)
        iy = ty * T + np.arange(T)
        gx, gy = np.meshgrid(ix, iy)
        tile = np.zeros((N_STATIC_CLASSES, T, T), dtype=np.uint8)
        for cls in range(N_STATIC_CLASSES):
            tile[cls] = evaluate_static_texels(geom, cls, gx, gy, resolution)
        cache.tiles[(tx, ty)] = tile
    return cache
