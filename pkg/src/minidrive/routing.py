"""Route planning over the lane graph and route-relative queries."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .geometry import Pose2D, point_at_arclength, project_to_polyline, resample_polyline
from .worldmap import MapModel

TURN_ANGLE_THRESHOLD = math.radians(30.0)
TURN_APPROACH_M = 20.0
LANE_CHANGE_LENGTH_M = 10.0
ROUTE_SPACING_M = 1.0
OFF_MAP_TOLERANCE_M = 5.0


class RoutingError(ValueError):
    pass


class OffMapError(RoutingError):
    pass


class NoPathError(RoutingError):
    pass


class NavCommand(IntEnum):
    FOLLOW_LANE = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    STRAIGHT = 3
    CHANGE_LANE_LEFT = 4
    CHANGE_LANE_RIGHT = 5

    def one_hot(self) -> np.ndarray:
        v = np.zeros(6)
        v[int(self)] = 1.0
        return v


@dataclass
class Route:
    polyline: np.ndarray                # (N, 2), consecutive points 1 m apart
    per_point_command: np.ndarray       # (N,) NavCommand codes
    lane_sequence: list[str]
    per_point_lane: list[str]
    per_point_width: np.ndarray         # (N,) lane width at each point
    per_point_limit: np.ndarray         # (N,) speed limit at each point
    total_length: float = field(init=False)

    def __post_init__(self):
        self.polyline = np.asarray(self.polyline, dtype=float)
        self.per_point_command = np.asarray(self.per_point_command, dtype=np.int64)
        self.per_point_width = np.asarray(self.per_point_width, dtype=float)
        self.per_point_limit = np.asarray(self.per_point_limit, dtype=float)
        self.total_length = ROUTE_SPACING_M * (len(self.polyline) - 1)
        self.arclength = ROUTE_SPACING_M * np.arange(len(self.polyline), dtype=float)

    def point_at(self, s: float) -> np.ndarray:
        return point_at_arclength(self.polyline, self.arclength, s)

    def heading_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.total_length)
        idx = min(int(s / ROUTE_SPACING_M), len(self.polyline) - 2)
        d = self.polyline[idx + 1] - self.polyline[idx]
        return math.atan2(d[1], d[0])

    def index_at(self, s: float) -> int:
        return int(np.clip(round(s / ROUTE_SPACING_M), 0, len(self.polyline) - 1))

    def command_at(self, s: float) -> NavCommand:
        return NavCommand(int(self.per_point_command[self.index_at(s)]))

    def width_at(self, s: float) -> float:
        return float(self.per_point_width[self.index_at(s)])

    def limit_at(self, s: float) -> float:
        return float(self.per_point_limit[self.index_at(s)])


@dataclass
class RouteProgress:
    s: float
    lateral: float
    done_fraction: float


def route_progress(route: Route, pose: Pose2D) -> RouteProgress:
    """Arc position, signed lateral offset (left positive) and completed fraction."""
    idx, _, lateral = project_to_polyline(route.polyline, pose.position)
    s = float(route.arclength[idx])
    frac = 0.0 if route.total_length <= 0 else min(max(s / route.total_length, 0.0), 1.0)
    return RouteProgress(s=s, lateral=lateral, done_fraction=frac)


def target_point(route: Route, s: float, ego: Pose2D, lookahead: float = 30.0) -> np.ndarray:
    """Route point `lookahead` meters further along, expressed in the ego frame."""
    pt = route.point_at(min(s + lookahead, route.total_length))
    return ego.to_frame(pt)


# ---------------------------------------------------------------------------
# planning

def _locate(world: MapModel, pose: Pose2D, what: str) -> tuple[str, float]:
    hit = world.nearest_lane(pose.position, max_dist=OFF_MAP_TOLERANCE_M)
    if hit is None:
        raise OffMapError(
            f"{what} pose ({pose.x:.1f}, {pose.y:.1f}) is more than "
            f"{OFF_MAP_TOLERANCE_M:.0f} m from every lane centerline")
    return hit[0], hit[1]


def _search_lane_path(world: MapModel, start_lane: str, start_s: float,
                      goal_lane: str, goal_s: float):
    """Dijkstra over (lane, entry arc) states; returns [(lane_id, entry_s, exit_s, via)].

    `via` is "succ" or the adjacency direction ("left"/"right") used to enter the lane.
    """
    if start_lane == goal_lane and goal_s >= start_s:
        return [(start_lane, start_s, goal_s, None)]
    heap: list[tuple[float, str, float, str | None]] = []
    best: dict[str, float] = {}
    parent: dict[str, tuple[str | None, float, str | None]] = {start_lane: (None, start_s, None)}
    if start_lane == goal_lane:
        # goal lies behind the start on the same lane: seed the frontier with the
        # start lane's neighbors so the lane itself stays reachable via a loop
        lane = world.lanes[start_lane]
        for succ in lane.successors:
            best[succ] = lane.length - start_s
            parent[succ] = (start_lane, 0.0, "succ")
            heapq.heappush(heap, (best[succ], succ, 0.0, "succ"))
        for adj, side in ((lane.adjacent_left, "left"), (lane.adjacent_right, "right")):
            if adj is None or start_s + LANE_CHANGE_LENGTH_M > world.lanes[adj].length:
                continue
            best[adj] = LANE_CHANGE_LENGTH_M
            parent[adj] = (start_lane, start_s + LANE_CHANGE_LENGTH_M, side)
            heapq.heappush(heap, (best[adj], adj, start_s + LANE_CHANGE_LENGTH_M, side))
    else:
        best[start_lane] = 0.0
        heapq.heappush(heap, (0.0, start_lane, start_s, None))
    while heap:
        cost, lane_id, entry_s, _via = heapq.heappop(heap)
        if cost > best.get(lane_id, math.inf):
            continue
        lane = world.lanes[lane_id]
        if lane_id == goal_lane and goal_s >= entry_s - 1e-9:
            # unwind
            seq = []
            cur: str | None = lane_id
            exit_s = goal_s
            while cur is not None:
                prev, ent, via = parent[cur]
                seq.append((cur, ent, exit_s, via))
                if prev is not None:
                    if via in ("left", "right"):
                        exit_s = ent - LANE_CHANGE_LENGTH_M
                    else:
                        exit_s = world.lanes[prev].length
                cur = prev
            return list(reversed(seq))
        remaining = lane.length - entry_s
        for succ in lane.successors:
            ncost = cost + remaining
            if ncost < best.get(succ, math.inf) - 1e-12:
                best[succ] = ncost
                parent[succ] = (lane_id, 0.0, "succ")
                heapq.heappush(heap, (ncost, succ, 0.0, "succ"))
        for adj, side in ((lane.adjacent_left, "left"), (lane.adjacent_right, "right")):
            if adj is None:
                continue
            new_entry = entry_s + LANE_CHANGE_LENGTH_M
            if new_entry > world.lanes[adj].length:
                continue
            ncost = cost + LANE_CHANGE_LENGTH_M
            if ncost < best.get(adj, math.inf) - 1e-12:
                best[adj] = ncost
                parent[adj] = (lane_id, new_entry, side)
                heapq.heappush(heap, (ncost, adj, new_entry, side))
    raise NoPathError(f"no lane-graph path from '{start_lane}' to '{goal_lane}'")


def _sample_lane(lane, s0: float, s1: float, step: float = 0.5) -> np.ndarray:
    n = max(int(math.ceil((s1 - s0) / step)), 1)
    ss = np.linspace(s0, s1, n + 1)
    return np.array([lane.point_at(s) for s in ss])


def plan_route(world: MapModel, start: Pose2D, goal: Pose2D) -> Route:
    """Shortest lane-graph route between two on-map poses, resampled at 1 m."""
    start_lane, start_s = _locate(world, start, "start")
    goal_lane, goal_s = _locate(world, goal, "goal")
    steps = _search_lane_path(world, start_lane, start_s, goal_lane, goal_s)

    # dense source path with per-point lane attribution and command zones
    dense_pts: list[np.ndarray] = []
    dense_lane: list[str] = []
    dense_cmd: list[int] = []
    decision_exit = {lid: len(world.lanes[lid].successors) > 1 for lid in world.lanes}
    for i, (lane_id, entry_s, exit_s, via) in enumerate(steps):
        lane = world.lanes[lane_id]
        if via in ("left", "right"):
            # lateral blend from previous lane into this one
            prev_lane = world.lanes[steps[i - 1][0]]
            a = entry_s - LANE_CHANGE_LENGTH_M
            ts = np.linspace(0.0, 1.0, 21)
            blend = np.array([
                (1 - t) * prev_lane.point_at(a + t * LANE_CHANGE_LENGTH_M)
                + t * lane.point_at(a + t * LANE_CHANGE_LENGTH_M)
                for t in ts])
            cmd = NavCommand.CHANGE_LANE_LEFT if via == "left" else NavCommand.CHANGE_LANE_RIGHT
            dense_pts.extend(blend)
            dense_lane.extend([lane_id] * len(blend))
            dense_cmd.extend([int(cmd)] * len(blend))
            if exit_s > entry_s:
                pts = _sample_lane(lane, entry_s, exit_s)
                dense_pts.extend(pts)
                dense_lane.extend([lane_id] * len(pts))
                dense_cmd.extend([int(NavCommand.FOLLOW_LANE)] * len(pts))
            continue
        if exit_s <= entry_s + 1e-9:
            continue
        pts = _sample_lane(lane, entry_s, exit_s)
        turn = lane.heading_change()
        if abs(turn) >= TURN_ANGLE_THRESHOLD:
            cmd = NavCommand.TURN_LEFT if turn > 0 else NavCommand.TURN_RIGHT
        elif i > 0 and decision_exit.get(steps[i - 1][0], False):
            cmd = NavCommand.STRAIGHT
        else:
            cmd = NavCommand.FOLLOW_LANE
        if cmd != NavCommand.FOLLOW_LANE and dense_cmd:
            # paint the approach zone of the preceding lane
            back = 0.0
            j = len(dense_pts) - 1
            while j > 0 and back < TURN_APPROACH_M and dense_cmd[j] == int(NavCommand.FOLLOW_LANE):
                dense_cmd[j] = int(cmd)
                back += float(np.linalg.norm(dense_pts[j] - dense_pts[j - 1]))
                j -= 1
        dense_pts.extend(pts)
        dense_lane.extend([lane_id] * len(pts))
        dense_cmd.extend([int(cmd)] * len(pts))

    dense = np.array(dense_pts)
    if len(dense) < 2:
        raise NoPathError("degenerate route (start and goal coincide)")
    poly = resample_polyline(dense, ROUTE_SPACING_M)
    if len(poly) < 2:
        raise NoPathError("route shorter than 1 m")

    # carry per-point attributes from the nearest dense sample
    lane_ids: list[str] = []
    cmds = np.empty(len(poly), dtype=np.int64)
    widths = np.empty(len(poly))
    limits = np.empty(len(poly))
    cursor = 0
    for k, p in enumerate(poly):
        # dense path is ordered; advance a cursor to the closest sample
        best_j = cursor
        best_d = float(np.sum((dense[cursor] - p) ** 2))
        for j in range(cursor + 1, min(cursor + 40, len(dense))):
            d = float(np.sum((dense[j] - p) ** 2))
            if d <= best_d:
                best_d, best_j = d, j
        cursor = best_j
        lane = world.lanes[dense_lane[best_j]]
        lane_ids.append(lane.id)
        cmds[k] = dense_cmd[best_j]
        widths[k] = lane.width
        limits[k] = lane.speed_limit

    lane_seq = [lid for lid, _, _, _ in steps]
    return Route(polyline=poly, per_point_command=cmds, lane_sequence=lane_seq,
                 per_point_lane=lane_ids, per_point_width=widths, per_point_limit=limits)


class ProgressTracker:
    """Monotone route progress with teleport rejection and off-road exclusion.

    Credits forward progress only in contiguous steps (bounded per-step
    advance); steps flagged off-road contribute no credit.
    """

    def __init__(self, route: Route, max_step_m: float = 3.0):
        self.route = route
        self.max_step_m = max_step_m
        self.s = 0.0
        self.credited = 0.0

    def update(self, pose: Pose2D, off_road: bool = False) -> float:
        prog = route_progress(self.route, pose)
        if prog.s > self.s:
            delta = min(prog.s - self.s, self.max_step_m)
            self.s += delta
            if not off_road:
                self.credited += delta
        return self.s

    @property
    def completion_percent(self) -> float:
        if self.route.total_length <= 0:
            return 0.0
        return 100.0 * min(self.credited / self.route.total_length, 1.0)
