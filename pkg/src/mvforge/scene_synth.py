"""Seeded synthesis of crowd scenes.

Everything random flows from one 64-bit seed through Philox (4x64, 10
rounds), a counter-based generator that can be keyed per frame, so frames
can be produced independently and in any order while staying reproducible.
Stream layout:

* master stream, key ``(seed, 0)``: emits one 64-bit sub-seed per frame in
  (scene, frame) order;
* frame stream, key ``(frame_seed, 1)``: draws, in order, the person count,
  the environment sample, candidate positions (batches of 256 (x, y)
  pairs), then actions and character models.

All sampled coordinates are canonicalised to 9 significant decimal digits
at creation time, which is also the precision the dataset manifest stores,
so serialisation round-trips are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import DuplicateId, PlacementInfeasible
from .geometry import (
    CARDINAL_COUNT,
    DEFAULT_FOV_DEG,
    DEFAULT_IMAGE_HEIGHT,
    DEFAULT_IMAGE_WIDTH,
    HEAD_HEIGHT_M,
    RING_HEIGHT_M,
    RING_PITCH_DEG,
    RING_RADIUS_FACTOR,
    Camera,
    WorldPoint,
    place_camera_ring,
)

RNG_NAME = "philox4x64-10"
RNG_SCHEME = (
    "master key=(seed,0) emits one u64 per frame in (scene,frame) order; "
    "frame key=(frame_seed,1) draws count, environment, positions, actions, models"
)

_MASK64 = (1 << 64) - 1
_PROPOSAL_BATCH = 256

DEFAULT_ACTIONS = (
    "stand",
    "walk_in_place",
    "talk",
    "phone",
    "smoke",
    "drink",
    "listen_music",
    "wave",
    "look_around",
    "stretch",
    "check_watch",
    "fold_arms",
)

DEFAULT_SCENE_TYPES = (
    "curbside",
    "park",
    "beach",
    "walking_street",
    "shopping_center",
    "church",
    "plaza",
    "market",
    "stadium",
    "campus",
    "harbor",
    "station",
    "playground",
    "museum",
    "parking_lot",
)
# How many of the 50 default scenes each type receives (street-level types
# are deliberately over-represented).
DEFAULT_SCENE_TYPE_WEIGHTS = (5, 5, 4, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3)

CHARACTER_MODEL_COUNT = 265

SPLIT_NAMES = ("train", "val", "test")
SPLIT_RATIO = (3, 1, 1)


def canon9(x: float) -> float:
    """Round to 9 significant decimal digits (the manifest's precision)."""
    return float(f"{float(x):.9g}")


def make_master_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, 0]))


def make_frame_rng(frame_seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[frame_seed & _MASK64, 1]))


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return make_frame_rng(int(rng))


class Weather(str, Enum):
    EXTRA_SUNNY = "ExtraSunny"
    CLEAR = "Clear"
    OVERCAST = "Overcast"
    CLOUDS = "Clouds"
    RAIN = "Rain"
    FOGGY = "Foggy"
    THUNDER = "Thunder"


class TimePart(str, Enum):
    MORNING = "Morning"      # [06, 09)
    NOON = "Noon"            # [09, 12)
    AFTERNOON = "Afternoon"  # [12, 15)
    SUNSET = "Sunset"        # [15, 18)
    EVENING = "Evening"      # [18, 06)


#: The Evening block splits into four 3-hour sub-periods.
EVENING_PERIODS = ("night", "nightfall", "midnight", "early_morning")
_EVENING_STARTS = (18, 21, 0, 3)
_DAY_PARTS = (TimePart.MORNING, TimePart.NOON, TimePart.AFTERNOON, TimePart.SUNSET)

#: Order of the weighted weather draw (the non-forced branch).
WEATHER_DRAW_ORDER = (
    Weather.EXTRA_SUNNY,
    Weather.CLEAR,
    Weather.OVERCAST,
    Weather.CLOUDS,
    Weather.RAIN,
    Weather.FOGGY,
)


@dataclass(frozen=True)
class WeatherModel:
    """Two-stage weather rule: with probability ``clear_share`` force Clear,
    otherwise draw from ``weights`` over ``WEATHER_DRAW_ORDER``. Thunder is a
    separate opt-in gate taken before anything else."""

    clear_share: float = 0.5
    weights: tuple[float, ...] = (2.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    thunder_share: float = 0.0077

    def expected_shares(self, allow_thunder: bool = False) -> dict[Weather, float]:
        pt = self.thunder_share if allow_thunder else 0.0
        total = float(sum(self.weights))
        shares = {w: 0.0 for w in Weather}
        for w, wt in zip(WEATHER_DRAW_ORDER, self.weights):
            shares[w] = (1.0 - pt) * (1.0 - self.clear_share) * wt / total
        shares[Weather.CLEAR] += (1.0 - pt) * self.clear_share
        shares[Weather.THUNDER] = pt
        return shares


DEFAULT_WEATHER_MODEL = WeatherModel()


def time_part_for_hour(hour: int) -> TimePart:
    if 6 <= hour < 9:
        return TimePart.MORNING
    if 9 <= hour < 12:
        return TimePart.NOON
    if 12 <= hour < 15:
        return TimePart.AFTERNOON
    if 15 <= hour < 18:
        return TimePart.SUNSET
    return TimePart.EVENING


def evening_period_for_hour(hour: int) -> Optional[str]:
    """The Evening sub-period containing ``hour``, or None during the day."""
    for name, start in zip(EVENING_PERIODS, _EVENING_STARTS):
        if start <= hour < start + 3:
            return name
    return None


def expected_time_shares() -> dict[str, float]:
    """Long-run share per label: the four day parts at 20% each and the four
    Evening sub-periods at 5% each."""
    shares = {part.value: 0.2 for part in _DAY_PARTS}
    shares.update({name: 0.2 / 4.0 for name in EVENING_PERIODS})
    return shares


@dataclass(frozen=True)
class EnvironmentSample:
    weather: Weather
    hour: int
    time_part: TimePart

    def __post_init__(self):
        if not (0 <= self.hour < 24):
            raise ValueError(f"hour out of range: {self.hour}")
        if time_part_for_hour(self.hour) is not self.time_part:
            raise ValueError(f"hour {self.hour} is not in {self.time_part.value}")


def sample_environment(
    rng,
    model: WeatherModel = DEFAULT_WEATHER_MODEL,
    allow_thunder: bool = False,
) -> EnvironmentSample:
    """Draw weather and hour of day.

    Weather: an optional Thunder gate, then a fair coin for forced Clear,
    then the 2:1:1:1:1:1 weighted pick. Time: one of the five parts uniformly;
    inside Evening one of its four sub-periods uniformly; then an hour
    uniformly inside the chosen 3-hour window.
    """
    rng = _as_rng(rng)
    weather: Weather
    if allow_thunder and rng.random() < model.thunder_share:
        weather = Weather.THUNDER
    elif rng.random() < model.clear_share:
        weather = Weather.CLEAR
    else:
        u = rng.random() * sum(model.weights)
        acc = 0.0
        weather = WEATHER_DRAW_ORDER[-1]
        for w, wt in zip(WEATHER_DRAW_ORDER, model.weights):
            acc += wt
            if u < acc:
                weather = w
                break
    part = int(rng.integers(5))
    if part < 4:
        hour = 6 + 3 * part + int(rng.integers(3))
    else:
        sub = int(rng.integers(4))
        hour = _EVENING_STARTS[sub] + int(rng.integers(3))
    return EnvironmentSample(weather=weather, hour=hour, time_part=time_part_for_hour(hour))


@dataclass(frozen=True)
class PersonRecord:
    id: int
    position: WorldPoint
    action: str
    character_model: int


Polygon = tuple[tuple[float, float], ...]


def _shoelace_area(poly: Polygon) -> float:
    area = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        area += x1 * y2 - x2 * y1
    return 0.5 * area


def points_in_polygon(points: np.ndarray, poly: Polygon) -> np.ndarray:
    """Even-odd rule membership test for an (n, 2) array of points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xi)
    return inside


@dataclass(eq=True)
class Scene:
    """A synthetic location: a walkable region plus crowd-size bounds."""

    id: int
    scene_type: str
    roi: Polygon
    size_x: float
    size_y: float
    count_range: tuple[int, int]
    exclusion_zones: tuple[Polygon, ...] = ()

    def __post_init__(self):
        self.roi = tuple((float(x), float(y)) for x, y in self.roi)
        self.exclusion_zones = tuple(
            tuple((float(x), float(y)) for x, y in zone) for zone in self.exclusion_zones
        )
        self.count_range = (int(self.count_range[0]), int(self.count_range[1]))
        if len(self.roi) < 3 or abs(_shoelace_area(self.roi)) <= 0.0:
            raise ValueError(f"scene {self.id}: roi must be a polygon with area > 0")
        if self.size_x <= 0 or self.size_y <= 0:
            raise ValueError(f"scene {self.id}: size must be positive")
        lo, hi = self.count_range
        if not (0 <= lo <= hi):
            raise ValueError(f"scene {self.id}: bad count_range {self.count_range}")

    def center(self) -> WorldPoint:
        return WorldPoint(self.size_x / 2.0, self.size_y / 2.0, 0.0)


@dataclass(eq=True)
class FrameRecord:
    """One simulated instant of a scene."""

    scene_id: int
    frame_id: int
    seed: int
    environment: EnvironmentSample
    persons: list[PersonRecord]

    @property
    def person_count(self) -> int:
        return len(self.persons)


def place_people(
    scene: Scene,
    count: int,
    min_separation: float = 0.25,
    rng=0,
    retry_budget: Optional[int] = None,
    actions: Sequence[str] = DEFAULT_ACTIONS,
    character_models: int = CHARACTER_MODEL_COUNT,
) -> list[PersonRecord]:
    """Uniform rejection sampling of ``count`` people inside the walkable area.

    A candidate is rejected when it falls outside the roi, inside an
    exclusion zone, or within ``min_separation`` metres of an accepted
    person. Every rejection counts against a budget of
    ``retry_budget`` (default ``1000 * count``) rejections.

    Raises:
        PlacementInfeasible: when the budget runs out before ``count``
            placements succeed.
    """
    lo, hi = scene.count_range
    if not (lo <= count <= hi):
        raise ValueError(f"count {count} outside scene count_range [{lo}, {hi}]")
    rng = _as_rng(rng)
    if retry_budget is None:
        retry_budget = 1000 * count

    xs = [p[0] for p in scene.roi]
    ys = [p[1] for p in scene.roi]
    bbox = (min(xs), min(ys), max(xs), max(ys))

    # Spatial hash for the separation test: with cells of min_separation, any
    # conflicting neighbour lives in the 3x3 block around the candidate.
    cell = min_separation if min_separation > 0 else 1.0
    occupied: dict[tuple[int, int], list[tuple[float, float]]] = {}
    placed: list[tuple[float, float]] = []
    rejections = 0
    sep2 = min_separation * min_separation

    while len(placed) < count:
        batch = rng.random((_PROPOSAL_BATCH, 2))
        cand = np.empty_like(batch)
        cand[:, 0] = bbox[0] + batch[:, 0] * (bbox[2] - bbox[0])
        cand[:, 1] = bbox[1] + batch[:, 1] * (bbox[3] - bbox[1])
        # canonicalise before any acceptance test so the stored coordinate is
        # exactly the one that was validated
        cand = np.array([[canon9(x), canon9(y)] for x, y in cand])
        ok = points_in_polygon(cand, scene.roi)
        for zone in scene.exclusion_zones:
            ok &= ~points_in_polygon(cand, zone)
        for (x, y), in_roi in zip(cand, ok):
            if len(placed) == count:
                break
            if not in_roi:
                rejections += 1
            else:
                ix, iy = int(math.floor(x / cell)), int(math.floor(y / cell))
                clash = False
                if min_separation > 0:
                    for nx in (ix - 1, ix, ix + 1):
                        for ny in (iy - 1, iy, iy + 1):
                            for px, py in occupied.get((nx, ny), ()):
                                if (px - x) ** 2 + (py - y) ** 2 < sep2:
                                    clash = True
                                    break
                            if clash:
                                break
                        if clash:
                            break
                if clash:
                    rejections += 1
                else:
                    placed.append((x, y))
                    occupied.setdefault((ix, iy), []).append((x, y))
            if rejections > retry_budget:
                raise PlacementInfeasible(
                    f"scene {scene.id}: placed {len(placed)} of {count} people "
                    f"after {rejections} rejections (budget {retry_budget})"
                )

    action_idx = rng.integers(0, len(actions), size=count)
    model_idx = rng.integers(0, character_models, size=count)
    return [
        PersonRecord(
            id=i,
            position=WorldPoint(placed[i][0], placed[i][1], 0.0),
            action=str(actions[action_idx[i]]),
            character_model=int(model_idx[i]),
        )
        for i in range(count)
    ]


# ---------------------------------------------------------------------------
# Area partitioning (bounded-capacity recording areas)
# ---------------------------------------------------------------------------

@dataclass(eq=True)
class Area:
    """An axis-aligned rectangle of the scene and the people inside it."""

    polygon: Polygon
    persons: list[PersonRecord]

    @property
    def person_ids(self) -> list[int]:
        return [p.id for p in self.persons]


@dataclass(eq=True)
class AreaPartition:
    areas: list[Area]
    capacity: int


def _rect_polygon(x0: float, y0: float, x1: float, y1: float) -> Polygon:
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def partition_frame(frame: FrameRecord, scene: Scene, capacity: int = 256) -> AreaPartition:
    """Split the frame into axis-aligned areas of at most ``capacity`` people.

    Recursive bisection of the roi bounding box: a rectangle whose population
    exceeds the capacity is halved along its longer axis (points exactly on
    the cut go to the upper half). Rectangles that end up empty are dropped.
    """
    if capacity < 1:
        raise ValueError("capacity must be at least 1")
    xs = [p[0] for p in scene.roi]
    ys = [p[1] for p in scene.roi]

    areas: list[Area] = []

    def recurse(x0, y0, x1, y1, persons, depth):
        if len(persons) <= capacity:
            if persons:
                areas.append(Area(polygon=_rect_polygon(x0, y0, x1, y1), persons=persons))
            return
        if depth > 128:
            raise RuntimeError("partition depth exceeded; duplicated positions?")
        if (x1 - x0) >= (y1 - y0):
            mx = 0.5 * (x0 + x1)
            left = [p for p in persons if p.position.x < mx]
            right = [p for p in persons if p.position.x >= mx]
            recurse(x0, y0, mx, y1, left, depth + 1)
            recurse(mx, y0, x1, y1, right, depth + 1)
        else:
            my = 0.5 * (y0 + y1)
            low = [p for p in persons if p.position.y < my]
            high = [p for p in persons if p.position.y >= my]
            recurse(x0, y0, x1, my, low, depth + 1)
            recurse(x0, my, x1, y1, high, depth + 1)

    recurse(min(xs), min(ys), max(xs), max(ys), list(frame.persons), 0)
    return AreaPartition(areas=areas, capacity=capacity)


def merge_areas(partition: AreaPartition) -> list[PersonRecord]:
    """Recombine a partition into one person list, sorted by id.

    Raises:
        DuplicateId: if two areas contain the same person id.
    """
    seen: dict[int, PersonRecord] = {}
    for area in partition.areas:
        for person in area.persons:
            if person.id in seen:
                raise DuplicateId(f"person id {person.id} appears in two areas")
            seen[person.id] = person
    return [seen[i] for i in sorted(seen)]


# ---------------------------------------------------------------------------
# Whole-dataset generation
# ---------------------------------------------------------------------------

@dataclass
class GeneratorConfig:
    """Knobs for dataset generation; defaults describe the full-size corpus."""

    scenes: int = 50
    frames_per_scene: int = 200
    views: int = 50
    count_min: int = 200
    count_max: int = 1000
    capacity: int = 256
    separation: float = 0.25
    scene_size_x: float = 100.0
    scene_size_y: float = 120.0
    cell_size: float = 0.2
    sigma_ground_cells: float = 3.0
    ring_height: float = RING_HEIGHT_M
    ring_pitch_deg: float = RING_PITCH_DEG
    ring_radius_factor: float = RING_RADIUS_FACTOR
    fov_deg: float = DEFAULT_FOV_DEG
    image_width: int = DEFAULT_IMAGE_WIDTH
    image_height: int = DEFAULT_IMAGE_HEIGHT
    head_height: float = HEAD_HEIGHT_M
    clear_share: float = 0.5
    weather_weights: tuple[float, ...] = (2.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    thunder_share: float = 0.0077
    thunder_scene_types: tuple[str, ...] = ()
    scene_types: tuple[str, ...] = DEFAULT_SCENE_TYPES
    scene_type_weights: tuple[float, ...] = DEFAULT_SCENE_TYPE_WEIGHTS
    seed: int = 0

    def __post_init__(self):
        if self.scenes < 1 or self.frames_per_scene < 1 or self.views < 1:
            raise ValueError("scenes, frames_per_scene and views must be >= 1")
        if not (0 < self.count_min <= self.count_max):
            raise ValueError(f"bad count range [{self.count_min}, {self.count_max}]")
        if len(self.scene_types) != len(self.scene_type_weights):
            raise ValueError("scene_types and scene_type_weights must align")

    def weather_model(self) -> WeatherModel:
        return WeatherModel(
            clear_share=self.clear_share,
            weights=tuple(self.weather_weights),
            thunder_share=self.thunder_share,
        )


def _apportion(total: int, weights: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``total`` among ``weights``."""
    wsum = float(sum(weights))
    quotas = [total * w / wsum for w in weights]
    counts = [int(math.floor(q)) for q in quotas]
    leftovers = sorted(
        range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i)
    )
    for i in leftovers[: total - sum(counts)]:
        counts[i] += 1
    return counts


def build_scenes(config: GeneratorConfig) -> list[Scene]:
    """Deterministic scene roster: types apportioned by weight, rectangular
    walkable regions of the configured size."""
    per_type = _apportion(config.scenes, config.scene_type_weights)
    labels: list[str] = []
    for name, n in zip(config.scene_types, per_type):
        labels.extend([name] * n)
    roi = _rect_polygon(0.0, 0.0, config.scene_size_x, config.scene_size_y)
    return [
        Scene(
            id=i,
            scene_type=labels[i],
            roi=roi,
            size_x=config.scene_size_x,
            size_y=config.scene_size_y,
            count_range=(config.count_min, config.count_max),
        )
        for i in range(config.scenes)
    ]


def assign_splits(scenes: Sequence[Scene]) -> dict[int, str]:
    """3:1:1 train/val/test assignment, stratified by scene type.

    Scenes are ordered by (type, id) and dealt into the repeating pattern
    train, train, train, val, test; multiples of five split exactly.
    """
    pattern = [name for name, n in zip(SPLIT_NAMES, SPLIT_RATIO) for _ in range(n)]
    ordered = sorted(scenes, key=lambda s: (s.scene_type, s.id))
    return {scene.id: pattern[i % len(pattern)] for i, scene in enumerate(ordered)}


def scene_cameras(scene: Scene, config: GeneratorConfig) -> list[Camera]:
    """The capture rig for one scene: four cardinal cameras plus a ring
    making up ``config.views`` views (just one ring when views <= 4)."""
    radius = config.ring_radius_factor * max(scene.size_x, scene.size_y)
    common = dict(
        scene_center=scene.center(),
        radius=radius,
        height=config.ring_height,
        pitch_deg=config.ring_pitch_deg,
        fov_deg=config.fov_deg,
        image_width=config.image_width,
        image_height=config.image_height,
    )
    if config.views <= CARDINAL_COUNT:
        return place_camera_ring(count=config.views, id_offset=0, **common)
    rig = place_camera_ring(count=CARDINAL_COUNT, id_offset=0, **common)
    rig += place_camera_ring(
        count=config.views - CARDINAL_COUNT, id_offset=CARDINAL_COUNT, **common
    )
    return rig


def frame_seed_table(config: GeneratorConfig) -> dict[tuple[int, int], int]:
    """Per-frame sub-seeds, drawn from the master stream in canonical order."""
    master = make_master_rng(config.seed)
    draws = master.integers(0, 1 << 64, dtype=np.uint64, size=config.scenes * config.frames_per_scene)
    table = {}
    k = 0
    for sid in range(config.scenes):
        for fid in range(config.frames_per_scene):
            table[(sid, fid)] = int(draws[k])
            k += 1
    return table


def generate_frame(scene: Scene, frame_id: int, frame_seed: int, config: GeneratorConfig) -> FrameRecord:
    """Generate one frame from its own sub-seed (safe to run in parallel)."""
    rng = make_frame_rng(frame_seed)
    count = int(rng.integers(config.count_min, config.count_max + 1))
    env = sample_environment(
        rng,
        model=config.weather_model(),
        allow_thunder=scene.scene_type in config.thunder_scene_types,
    )
    persons = place_people(scene, count, config.separation, rng)
    return FrameRecord(
        scene_id=scene.id,
        frame_id=frame_id,
        seed=frame_seed,
        environment=env,
        persons=persons,
    )


@dataclass
class DatasetPlan:
    """Everything deterministic about a dataset except the frames themselves.

    Frames are generated lazily; ``frame_jobs`` enumerates independent
    (scene, frame_id, seed) work items for parallel execution.
    """

    config: GeneratorConfig
    scenes: list[Scene]
    cameras: dict[int, list[Camera]]
    splits: dict[int, str]
    frame_seeds: dict[tuple[int, int], int]

    def frame_jobs(self) -> list[tuple[Scene, int, int]]:
        return [
            (scene, fid, self.frame_seeds[(scene.id, fid)])
            for scene in self.scenes
            for fid in range(self.config.frames_per_scene)
        ]

    def iter_frames(self) -> Iterator[FrameRecord]:
        for scene, fid, seed in self.frame_jobs():
            yield generate_frame(scene, fid, seed, self.config)


def generate_dataset(config: GeneratorConfig) -> DatasetPlan:
    """Lay out a full dataset: scenes, rigs, splits and per-frame seeds."""
    scenes = build_scenes(config)
    return DatasetPlan(
        config=config,
        scenes=scenes,
        cameras={scene.id: scene_cameras(scene, config) for scene in scenes},
        splits=assign_splits(scenes),
        frame_seeds=frame_seed_table(config),
    )


# ---------------------------------------------------------------------------
# Config file parsing
# ---------------------------------------------------------------------------

_TUPLE_FIELDS = {
    "weather_weights": float,
    "thunder_scene_types": str,
    "scene_types": str,
    "scene_type_weights": float,
}
_INT_FIELDS = {
    "scenes", "frames_per_scene", "views", "count_min", "count_max",
    "capacity", "image_width", "image_height", "seed",
}
_FLOAT_FIELDS = {
    "separation", "scene_size_x", "scene_size_y", "cell_size",
    "sigma_ground_cells", "ring_height", "ring_pitch_deg",
    "ring_radius_factor", "fov_deg", "head_height", "clear_share",
    "thunder_share",
}


def load_config_file(path) -> dict:
    """Parse a ``key = value`` config file.

    One assignment per line, ``#`` starts a comment, list values are
    comma-separated. Keys mirror GeneratorConfig field names.
    """
    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key in _TUPLE_FIELDS:
                conv = _TUPLE_FIELDS[key]
                values[key] = tuple(conv(v.strip()) for v in value.split(",") if v.strip())
            elif key in _INT_FIELDS:
                values[key] = int(value)
            elif key in _FLOAT_FIELDS:
                values[key] = float(value)
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return values


def config_from_file(path, **overrides) -> GeneratorConfig:
    values = load_config_file(path)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return GeneratorConfig(**values)
