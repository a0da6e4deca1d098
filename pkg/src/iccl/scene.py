"""Urban scene, ground nodes and the UAV trajectory.

Everything here is immutable once built and generated from explicit seeds,
so the same arguments always give the same scene / node set / trajectory.

Scene files are plain text, one ``key = value`` per line, ``#`` comments::

    # iccl scene v1 (meters, dB/m)
    area = 100 80
    seed = 7
    building = x0 y0 z0 x1 y1 z1 attenuation_db_per_m
    trajectory.center = 40 45 40
    trajectory.radius = 20
    trajectory.waypoints = 128
    waypoint = x y z

``building`` and ``waypoint`` may repeat. A trajectory is either the three
``trajectory.*`` keys (a horizontal circle) or an explicit ``waypoint`` list;
scene and trajectory may live in the same file or in separate ones.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, PlacementFailure

FORMAT_TAG = "# iccl scene v1 (meters, dB/m)"

DEFAULT_EXTENT = (100.0, 80.0)
DEFAULT_N_BUILDINGS = 8
DEFAULT_SIZE_RANGE = (10.0, 25.0)
DEFAULT_HEIGHT_RANGE = (10.0, 30.0)
DEFAULT_ATTENUATION_RANGE = (0.5, 2.0)
DEFAULT_TRAJECTORY_CENTER = (40.0, 45.0, 40.0)
DEFAULT_TRAJECTORY_RADIUS = 20.0
DEFAULT_N_WAYPOINTS = 128


@dataclass(frozen=True)
class Building:
    """Axis-aligned box standing on the ground."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    attenuation: float  # dB per meter of interior path

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min_corner)
        hi = tuple(float(v) for v in self.max_corner)
        if len(lo) != 3 or len(hi) != 3:
            raise InvalidArgument("building corners must be 3-vectors")
        if not all(a < b for a, b in zip(lo, hi)):
            raise InvalidArgument(f"building min corner {lo} not below max corner {hi}")
        if not self.attenuation >= 0:
            raise InvalidArgument(f"negative attenuation {self.attenuation}")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)
        object.__setattr__(self, "attenuation", float(self.attenuation))

    def footprint_overlaps(self, other: Building) -> bool:
        """True when the two ground footprints share positive area."""
        return all(
            min(self.max_corner[a], other.max_corner[a]) > max(self.min_corner[a], other.min_corner[a])
            for a in (0, 1)
        )


@dataclass(frozen=True)
class Scene:
    area_extent: tuple[float, float]
    buildings: tuple[Building, ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        width, depth = (float(v) for v in self.area_extent)
        if width <= 0 or depth <= 0:
            raise InvalidArgument(f"area extent must be positive, got {self.area_extent}")
        object.__setattr__(self, "area_extent", (width, depth))
        object.__setattr__(self, "buildings", tuple(self.buildings))
        for b in self.buildings:
            lo, hi = b.min_corner, b.max_corner
            if lo[0] < 0 or lo[1] < 0 or hi[0] > width or hi[1] > depth:
                raise InvalidArgument(f"building {b} leaves the {width}x{depth} area")
        for i, a in enumerate(self.buildings):
            for b in self.buildings[i + 1:]:
                if a.footprint_overlaps(b):
                    raise InvalidArgument(f"buildings overlap: {a} and {b}")

    def box_arrays(self):
        """``(lo, hi, attenuation)`` arrays of shape (B, 3), (B, 3), (B,)."""
        if not self.buildings:
            return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0)
        lo = np.array([b.min_corner for b in self.buildings])
        hi = np.array([b.max_corner for b in self.buildings])
        att = np.array([b.attenuation for b in self.buildings])
        return lo, hi, att

    def inside_footprint(self, xy) -> np.ndarray:
        """Mask of ground points strictly inside some building footprint."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        mask = np.zeros(len(xy), dtype=bool)
        for b in self.buildings:
            mask |= (
                (xy[:, 0] > b.min_corner[0]) & (xy[:, 0] < b.max_corner[0])
                & (xy[:, 1] > b.min_corner[1]) & (xy[:, 1] < b.max_corner[1])
            )
        return mask

    def digest(self) -> str:
        """SHA-256 hex digest of the canonical text serialization."""
        return hashlib.sha256(format_scene(self).encode()).hexdigest()


@dataclass(frozen=True)
class Trajectory:
    waypoints: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=float, copy=True)
        if w.ndim != 2 or w.shape[1] != 3 or len(w) < 1:
            raise InvalidArgument("trajectory needs an (N, 3) array with N >= 1")
        if np.any(w[:, 2] <= 0):
            raise InvalidArgument("every waypoint must fly above the ground")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    def __len__(self):
        return len(self.waypoints)

    def __eq__(self, other):
        return isinstance(other, Trajectory) and np.array_equal(self.waypoints, other.waypoints)

    __hash__ = None


@dataclass(frozen=True)
class NodeSet:
    """Ground nodes; the first ``num_anchors`` entries are the anchors."""

    positions: np.ndarray = field(repr=False)
    num_anchors: int

    def __post_init__(self):
        p = np.array(self.positions, dtype=float, copy=True)
        if p.ndim != 2 or p.shape[1] != 2:
            raise InvalidArgument("node positions must be an (M, 2) array")
        if not 3 <= self.num_anchors <= len(p):
            raise InvalidArgument(f"need 3 <= num_anchors <= M, got {self.num_anchors} of {len(p)}")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    def __len__(self):
        return len(self.positions)

    @property
    def anchors(self) -> np.ndarray:
        return self.positions[: self.num_anchors]

    @property
    def unknowns(self) -> np.ndarray:
        return self.positions[self.num_anchors:]

    def as_3d(self) -> np.ndarray:
        return ground_to_3d(self.positions)

    def __eq__(self, other):
        return (
            isinstance(other, NodeSet)
            and self.num_anchors == other.num_anchors
            and np.array_equal(self.positions, other.positions)
        )

    __hash__ = None


def ground_to_3d(xy) -> np.ndarray:
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    return np.column_stack([xy, np.zeros(len(xy))])


def build_circular_trajectory(center, radius: float, n_waypoints: int) -> Trajectory:
    """Horizontal circle, counter-clockwise from angle 0 (the +x side)."""
    center = np.asarray(center, dtype=float)
    if center.shape != (3,):
        raise InvalidArgument("center must be a 3-vector")
    if not radius > 0:
        raise InvalidArgument(f"radius must be positive, got {radius}")
    if center[2] <= 0:
        raise InvalidArgument(f"trajectory altitude must be positive, got {center[2]}")
    if n_waypoints < 1:
        raise InvalidArgument(f"need at least one waypoint, got {n_waypoints}")
    angle = 2.0 * np.pi * np.arange(n_waypoints) / n_waypoints
    pts = np.column_stack([
        center[0] + radius * np.cos(angle),
        center[1] + radius * np.sin(angle),
        np.full(n_waypoints, center[2]),
    ])
    return Trajectory(pts)


def default_trajectory() -> Trajectory:
    return build_circular_trajectory(DEFAULT_TRAJECTORY_CENTER, DEFAULT_TRAJECTORY_RADIUS, DEFAULT_N_WAYPOINTS)


def sample_ground_points(scene: Scene, m: int, rng) -> np.ndarray:
    """``m`` i.i.d. points, uniform over the area minus building footprints."""
    rng = np.random.default_rng(rng)
    width, depth = scene.area_extent
    out = np.empty((0, 2))
    while len(out) < m:
        need = m - len(out)
        cand = rng.uniform((0.0, 0.0), (width, depth), size=(max(2 * need, 16), 2))
        cand = cand[~scene.inside_footprint(cand)]
        out = np.vstack([out, cand[:need]])
    return out


def sample_nodes(scene: Scene, m: int, m_a: int, seed) -> NodeSet:
    if m_a < 3:
        raise InvalidArgument(f"2-D multilateration needs at least 3 anchors, got {m_a}")
    if m < m_a:
        raise InvalidArgument(f"cannot have {m_a} anchors among {m} nodes")
    return NodeSet(sample_ground_points(scene, m, seed), m_a)


def generate_random_scene(
    extent=DEFAULT_EXTENT,
    n_buildings: int = DEFAULT_N_BUILDINGS,
    size_range=DEFAULT_SIZE_RANGE,
    attenuation_range=DEFAULT_ATTENUATION_RANGE,
    seed: int = 0,
    height_range=DEFAULT_HEIGHT_RANGE,
    max_attempts: int = 10_000,
) -> Scene:
    """Place non-overlapping boxes by rejection sampling.

    Raises:
        PlacementFailure: fewer than ``n_buildings`` fit within ``max_attempts`` draws.
    """
    width, depth = (float(v) for v in extent)
    if n_buildings < 0:
        raise InvalidArgument("n_buildings must be >= 0")
    for name, (a, b) in (("size", size_range), ("height", height_range), ("attenuation", attenuation_range)):
        if not a <= b:
            raise InvalidArgument(f"{name} range ({a}, {b}) is reversed")
    if size_range[0] <= 0 or height_range[0] <= 0 or attenuation_range[0] < 0:
        raise InvalidArgument("building sizes must be positive and attenuation non-negative")
    if size_range[1] > min(width, depth):
        raise InvalidArgument("largest building side does not fit in the area")

    rng = np.random.default_rng(seed)
    placed: list[Building] = []
    attempts = 0
    while len(placed) < n_buildings:
        if attempts >= max_attempts:
            raise PlacementFailure(len(placed), n_buildings, max_attempts)
        attempts += 1
        w, d = rng.uniform(*size_range, size=2)
        x0 = rng.uniform(0.0, width - w)
        y0 = rng.uniform(0.0, depth - d)
        h = rng.uniform(*height_range)
        att = rng.uniform(*attenuation_range)
        cand = Building((x0, y0, 0.0), (x0 + w, y0 + d, h), att)
        if any(cand.footprint_overlaps(b) for b in placed):
            continue
        placed.append(cand)
    return Scene((width, depth), tuple(placed), int(seed))


# --- text format ---------------------------------------------------------------

def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def format_scene(scene: Scene) -> str:
    lines = [FORMAT_TAG, f"area = {_fmt(scene.area_extent)}", f"seed = {scene.rng_seed}"]
    for b in scene.buildings:
        lines.append(f"building = {_fmt(b.min_corner + b.max_corner + (b.attenuation,))}")
    return "\n".join(lines) + "\n"


def format_trajectory(traj: Trajectory) -> str:
    return "".join(f"waypoint = {_fmt(w)}\n" for w in traj.waypoints)


def parse_keyvalues(text: str) -> list[tuple[str, str]]:
    """``key = value`` pairs in file order; repeated keys are kept."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs.append((key, value))
    return pairs


def _floats(value: str, n: int, key: str):
    parts = value.split()
    if len(parts) != n:
        raise InvalidArgument(f"{key!r} expects {n} numbers, got {value!r}")
    return tuple(float(p) for p in parts)


def parse_scene(text: str) -> Scene:
    area, seed, buildings = None, 0, []
    for key, value in parse_keyvalues(text):
        if key == "area":
            area = _floats(value, 2, key)
        elif key == "seed":
            seed = int(value)
        elif key == "building":
            v = _floats(value, 7, key)
            buildings.append(Building(v[:3], v[3:6], v[6]))
    if area is None:
        raise InvalidArgument("scene file has no 'area' entry")
    return Scene(area, tuple(buildings), seed)


def parse_trajectory(text: str) -> Trajectory:
    kv = parse_keyvalues(text)
    explicit = [_floats(v, 3, k) for k, v in kv if k == "waypoint"]
    if explicit:
        return Trajectory(np.array(explicit))
    spec = dict(kv)
    if "trajectory.center" in spec:
        return build_circular_trajectory(
            _floats(spec["trajectory.center"], 3, "trajectory.center"),
            float(spec.get("trajectory.radius", DEFAULT_TRAJECTORY_RADIUS)),
            int(spec.get("trajectory.waypoints", DEFAULT_N_WAYPOINTS)),
        )
    raise InvalidArgument("no trajectory found (need 'waypoint' lines or 'trajectory.center')")


def load_scene(path) -> Scene:
    return parse_scene(Path(path).read_text())


def load_trajectory(path) -> Trajectory:
    return parse_trajectory(Path(path).read_text())


def save_scene(path, scene: Scene, trajectory: Trajectory | None = None) -> None:
    text = format_scene(scene)
    if trajectory is not None:
        text += format_trajectory(trajectory)
    Path(path).write_text(text)


def save_trajectory(path, trajectory: Trajectory) -> None:
    Path(path).write_text(FORMAT_TAG + "\n" + format_trajectory(trajectory))
