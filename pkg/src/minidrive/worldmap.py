"""Lane-graph map model and its line-oriented text format.

A map file is UTF-8 text with one record per line:

    LANE id=A width=3.50 limit=13.89 succ=[B] pred=[] left=- right=C pts=0.00,32.00;1.00,32.00;...
    BAY id=P1 exit_lane=A poly=10.00,28.00;16.00,28.00;16.00,25.00;10.00,25.00
    STOPLINE lane=A s=100.00 kind=traffic_light signal=sig1
    DRIVABLE poly=...

Lines starting with '#' and blank lines are ignored. Coordinates are meters
in the map frame; two decimal places are sufficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    point_at_arclength,
    points_in_polygon,
    polyline_arclength,
    polyline_distance,
    heading_at_arclength,
)


class MapParseError(ValueError):
    """Raised when a map file cannot be parsed."""


class MapValidationError(ValueError):
    """Raised when a parsed map violates a structural invariant."""


@dataclass
class Lane:
    id: str
    centerline: np.ndarray          # (N, 2) points at <= 1 m spacing
    width: float
    speed_limit: float
    successors: list[str] = field(default_factory=list)
    predecessors: list[str] = field(default_factory=list)
    adjacent_left: str | None = None
    adjacent_right: str | None = None

    def __post_init__(self):
        self.centerline = np.asarray(self.centerline, dtype=float)
        self.arclength = polyline_arclength(self.centerline)
        self.length = float(self.arclength[-1])

    def point_at(self, s: float) -> np.ndarray:
        return point_at_arclength(self.centerline, self.arclength, s)

    def heading_at(self, s: float) -> float:
        return heading_at_arclength(self.centerline, self.arclength, s)

    def heading_change(self) -> float:
        """Net heading change start to end, wrapped to (-pi, pi]."""
        h0 = self.heading_at(0.0)
        h1 = self.heading_at(self.length)
        d = math.fmod(h1 - h0, 2 * math.pi)
        if d <= -math.pi:
            d += 2 * math.pi
        elif d > math.pi:
            d -= 2 * math.pi
        return d


@dataclass
class ParkingBay:
    id: str
    polygon: np.ndarray             # (N, 2)
    exit_lane_id: str

    def __post_init__(self):
        self.polygon = np.asarray(self.polygon, dtype=float)

    @property
    def center(self) -> np.ndarray:
        return self.polygon.mean(axis=0)


@dataclass
class StopLine:
    lane_id: str
    s: float                        # arc position on the lane
    kind: str                       # "traffic_light" | "stop_sign"
    signal_id: str | None = None

    @property
    def key(self) -> str:
        return f"{self.lane_id}@{self.s:.2f}"


@dataclass
class MapModel:
    lanes: dict[str, Lane]
    parking_bays: list[ParkingBay] = field(default_factory=list)
    stop_lines: list[StopLine] = field(default_factory=list)
    drivable_polygons: list[np.ndarray] = field(default_factory=list)

    def lane(self, lane_id: str) -> Lane:
        return self.lanes[lane_id]

    def nearest_lane(self, point, max_dist: float = float("inf")) -> tuple[str, float, float] | None:
        """Nearest lane to a map point: (lane_id, arc position, distance)."""
        best = None
        p = np.asarray(point, dtype=float).reshape(1, 2)
        for lane in self.lanes.values():
            d2 = np.sum((lane.centerline - p) ** 2, axis=1)
            idx = int(np.argmin(d2))
            dist = float(math.sqrt(d2[idx]))
            if dist <= max_dist and (best is None or dist < best[2]):
                best = (lane.id, float(lane.arclength[idx]), dist)
        return best

    def is_drivable(self, points: np.ndarray) -> np.ndarray:
        """True for map points inside any lane corridor, drivable polygon, or bay."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.zeros(len(p), dtype=bool)
        for lane in self.lanes.values():
            todo = ~inside
            if not todo.any():
                break
            d = polyline_distance(p[todo], lane.centerline)
            inside[np.where(todo)[0][d <= lane.width / 2.0]] = True
        for poly in self.drivable_polygons:
            todo = ~inside
            if not todo.any():
                break
            inside[np.where(todo)[0][points_in_polygon(p[todo], poly)]] = True
        for bay in self.parking_bays:
            todo = ~inside
            if not todo.any():
                break
            inside[np.where(todo)[0][points_in_polygon(p[todo], bay.polygon)]] = True
        return inside

    def signal_ids(self) -> list[str]:
        out = []
        for sl in self.stop_lines:
            if sl.kind == "traffic_light" and sl.signal_id and sl.signal_id not in out:
                out.append(sl.signal_id)
        return out


# ---------------------------------------------------------------------------
# parsing

def _parse_points(text: str, lineno: int) -> np.ndarray:
    pts = []
    for chunk in text.split(";"):
        if not chunk:
            continue
        parts = chunk.split(",")
        if len(parts) != 2:
            raise MapParseError(f"line {lineno}: bad coordinate '{chunk}'")
        try:
            pts.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise MapParseError(f"line {lineno}: bad coordinate '{chunk}'") from None
    if not pts:
        raise MapParseError(f"line {lineno}: empty point list")
    return np.array(pts, dtype=float)


def _parse_fields(tokens: list[str], lineno: int) -> dict[str, str]:
    fields = {}
    for tok in tokens:
        if "=" not in tok:
            raise MapParseError(f"line {lineno}: expected key=value, got '{tok}'")
        key, val = tok.split("=", 1)
        fields[key] = val
    return fields


def _parse_id_list(text: str) -> list[str]:
    inner = text.strip()
    if inner.startswith("[") and inner.endswith("]"):
        inner = inner[1:-1]
    return [x for x in (s.strip() for s in inner.split(",")) if x]


def loads_map(text: str) -> MapModel:
    lanes: dict[str, Lane] = {}
    bays: list[ParkingBay] = []
    stop_lines: list[StopLine] = []
    drivable: list[np.ndarray] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        kind, rest = tokens[0], tokens[1:]
        f = _parse_fields(rest, lineno)
        try:
            if kind == "LANE":
                lane = Lane(
                    id=f["id"],
                    centerline=_parse_points(f["pts"], lineno),
                    width=float(f["width"]),
                    speed_limit=float(f["limit"]),
                    successors=_parse_id_list(f.get("succ", "[]")),
                    predecessors=_parse_id_list(f.get("pred", "[]")),
                    adjacent_left=None if f.get("left", "-") == "-" else f["left"],
                    adjacent_right=None if f.get("right", "-") == "-" else f["right"],
                )
                if lane.id in lanes:
                    raise MapParseError(f"line {lineno}: duplicate lane id '{lane.id}'")
                lanes[lane.id] = lane
            elif kind == "BAY":
                bays.append(ParkingBay(id=f["id"], polygon=_parse_points(f["poly"], lineno),
                                       exit_lane_id=f["exit_lane"]))
            elif kind == "STOPLINE":
                sl_kind = f["kind"]
                if sl_kind not in ("traffic_light", "stop_sign"):
                    raise MapParseError(f"line {lineno}: unknown stop line kind '{sl_kind}'")
                stop_lines.append(StopLine(lane_id=f["lane"], s=float(f["s"]), kind=sl_kind,
                                           signal_id=None if f.get("signal", "-") == "-" else f["signal"]))
            elif kind == "DRIVABLE":
                drivable.append(_parse_points(f["poly"], lineno))
            else:
                raise MapParseError(f"line {lineno}: unknown record type '{kind}'")
        except KeyError as exc:
            raise MapParseError(f"line {lineno}: {kind} record missing field {exc}") from None
        except ValueError as exc:
            if isinstance(exc, (MapParseError, MapValidationError)):
                raise
            raise MapParseError(f"line {lineno}: {exc}") from None
    model = MapModel(lanes=lanes, parking_bays=bays, stop_lines=stop_lines,
                     drivable_polygons=drivable)
    validate_map(model)
    return model


def load_map(path) -> MapModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise MapParseError(f"cannot read map file {path}: {exc}") from exc
    return loads_map(text)


def validate_map(model: MapModel) -> None:
    for lane in model.lanes.values():
        if lane.width <= 0:
            raise MapValidationError(f"lane '{lane.id}' has non-positive width {lane.width}")
        if lane.speed_limit <= 0:
            raise MapValidationError(f"lane '{lane.id}' has non-positive speed limit")
        if len(lane.centerline) < 2:
            raise MapValidationError(f"lane '{lane.id}' needs at least 2 centerline points")
        spacing = np.diff(lane.arclength)
        if (spacing > 1.0 + 1e-9).any():
            raise MapValidationError(
                f"lane '{lane.id}' centerline spacing exceeds 1 m (max {spacing.max():.3f})")
        for ref in lane.successors + lane.predecessors:
            if ref not in model.lanes:
                raise MapValidationError(f"lane '{lane.id}' references missing lane '{ref}'")
        for ref in (lane.adjacent_left, lane.adjacent_right):
            if ref is not None and ref not in model.lanes:
                raise MapValidationError(f"lane '{lane.id}' references missing lane '{ref}'")
    for bay in model.parking_bays:
        if bay.exit_lane_id not in model.lanes:
            raise MapValidationError(f"bay '{bay.id}' references missing lane '{bay.exit_lane_id}'")
        if len(bay.polygon) < 3:
            raise MapValidationError(f"bay '{bay.id}' polygon needs at least 3 points")
    for sl in model.stop_lines:
        if sl.lane_id not in model.lanes:
            raise MapValidationError(f"stop line references missing lane '{sl.lane_id}'")
        lane = model.lanes[sl.lane_id]
        if not (0.0 <= sl.s <= lane.length + 1e-9):
            raise MapValidationError(
                f"stop line at s={sl.s} outside lane '{sl.lane_id}' (length {lane.length:.2f})")
        if sl.kind == "traffic_light" and not sl.signal_id:
            raise MapValidationError(f"traffic light stop line on '{sl.lane_id}' lacks a signal id")


# ---------------------------------------------------------------------------
# serialization (used by fixture generators)

def _fmt_points(points: np.ndarray) -> str:
    return ";".join(f"{x:.2f},{y:.2f}" for x, y in np.asarray(points))


def dumps_map(model: MapModel) -> str:
    lines = []
    for lane in model.lanes.values():
        lines.append(
            "LANE id={} width={:.2f} limit={:.2f} succ=[{}] pred=[{}] left={} right={} pts={}".format(
                lane.id, lane.width, lane.speed_limit,
                ",".join(lane.successors), ",".join(lane.predecessors),
                lane.adjacent_left or "-", lane.adjacent_right or "-",
                _fmt_points(lane.centerline)))
    for bay in model.parking_bays:
        lines.append(f"BAY id={bay.id} exit_lane={bay.exit_lane_id} poly={_fmt_points(bay.polygon)}")
    for sl in model.stop_lines:
        lines.append(f"STOPLINE lane={sl.lane_id} s={sl.s:.2f} kind={sl.kind} signal={sl.signal_id or '-'}")
    for poly in model.drivable_polygons:
        lines.append(f"DRIVABLE poly={_fmt_points(poly)}")
    return "\n".join(lines) + "\n"
