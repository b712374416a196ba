"""Ground-truth annotation and dataset serialisation.

On-disk layout of a dataset rooted at some directory:

* ``manifest.json`` — scenes, cameras, splits, frames, file references.
  Canonical form: UTF-8, keys sorted, two-space indent, reals at 9
  significant digits except camera matrices, which keep full 64-bit
  precision.
* ``scene_<id>/frame_<id>/view_<id>.dots`` — text, one person per line:
  ``person_id u v visible``.
* ``scene_<id>/frame_<id>/ground.occ`` / ``ground.den`` — binary maps.

Binary map format (little-endian, 24-byte header):

====== ====== =====================================
offset size   field
====== ====== =====================================
0      4      magic ``MVFG``
4      2      version (currently 1)
6      2      map kind
8      4      rows
12     4      cols
16     8      reserved (zero)
24     ...    rows*cols float32, row-major
====== ====== =====================================
"""

from __future__ import annotations

import json
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import FormatError, ShapeMismatch
from .geometry import (
    Camera,
    GroundGrid,
    WorldPoint,
    grid_index,
    project_many,
)
from .scene_synth import (
    RNG_NAME,
    RNG_SCHEME,
    DatasetPlan,
    EnvironmentSample,
    FrameRecord,
    GeneratorConfig,
    PersonRecord,
    Scene,
    TimePart,
    Weather,
    canon9,
    generate_frame,
)

MAP_MAGIC = b"MVFG"
MAP_VERSION = 1
_HEADER = struct.Struct("<4sHHII8s")

MANIFEST_FORMAT = "mvforge-dataset"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


class MapKind(IntEnum):
    GENERIC = 0
    PIXEL_DENSITY = 1
    GROUND_DOT = 2
    GROUND_DENSITY = 3
    ATTENTION = 4


@dataclass(eq=False)
class GridMap:
    """A dense float32 map, either over image pixels or over ground cells."""

    values: np.ndarray
    kind: MapKind = MapKind.GENERIC
    view_id: Optional[int] = None
    grid: Optional[GroundGrid] = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("map values must be a rows x cols array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("map values must be finite")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridMap):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.view_id == other.view_id
            and self.grid == other.grid
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )


def render_density_map(
    points: Sequence[tuple[float, float]],
    rows: int,
    cols: int,
    sigma: float = 3.0,
) -> GridMap:
    """Sum of per-point Gaussian kernels on a rows x cols pixel grid.

    ``points`` are (row, col) positions in pixel units. Each kernel is
    truncated at 4 sigma, clipped at the borders, and renormalised so every
    point deposits exactly unit mass; the map total therefore equals the
    number of contributing points. Points whose truncated window misses the
    map entirely contribute nothing.
    """
    if rows < 1 or cols < 1:
        raise ValueError("density map needs at least one pixel")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    out = np.zeros((rows, cols), dtype=np.float64)
    radius = 4.0 * sigma
    inv = 1.0 / (2.0 * sigma * sigma)
    for pr, pc in points:
        r0 = max(0, int(math.ceil(pr - radius)))
        r1 = min(rows - 1, int(math.floor(pr + radius)))
        c0 = max(0, int(math.ceil(pc - radius)))
        c1 = min(cols - 1, int(math.floor(pc + radius)))
        if r0 > r1 or c0 > c1:
            continue
        rr = np.arange(r0, r1 + 1, dtype=np.float64)[:, None]
        cc = np.arange(c0, c1 + 1, dtype=np.float64)[None, :]
        w = np.exp(-((rr - pr) ** 2 + (cc - pc) ** 2) * inv)
        total = w.sum()
        if total > 0:
            out[r0 : r1 + 1, c0 : c1 + 1] += w / total
    return GridMap(values=out, kind=MapKind.PIXEL_DENSITY)


def render_ground_occupancy(
    frame: FrameRecord,
    grid: GroundGrid,
    sigma_cells: float = 3.0,
) -> tuple[GridMap, GridMap, int]:
    """Ground-plane annotation maps for a frame.

    Returns (dot map, gaussian map, out_of_grid). The dot map counts people
    per cell; the gaussian map smooths each in-grid person with a kernel of
    ``sigma_cells`` cells and sums to the in-grid person count. People whose
    position falls outside the grid are tallied, not rendered.
    """
    dots = np.zeros((grid.rows, grid.cols), dtype=np.float64)
    centers: list[tuple[float, float]] = []
    out_of_grid = 0
    for person in frame.persons:
        idx = grid_index(grid, person.position.x, person.position.y)
        if idx is None:
            out_of_grid += 1
            continue
        dots[idx] += 1.0
        # continuous (row, col) with integer coordinates at cell centres
        centers.append(
            (
                (person.position.y - grid.origin_y) / grid.cell_size - 0.5,
                (person.position.x - grid.origin_x) / grid.cell_size - 0.5,
            )
        )
    gauss = render_density_map(centers, grid.rows, grid.cols, sigma=sigma_cells)
    dot_map = GridMap(values=dots, kind=MapKind.GROUND_DOT, grid=grid)
    gauss_map = GridMap(values=gauss.values, kind=MapKind.GROUND_DENSITY, grid=grid)
    return dot_map, gauss_map, out_of_grid


@dataclass(eq=True)
class ViewAnnotation:
    """Image-space ground truth for one camera: per person (id, u, v, visible)."""

    view_id: int
    entries: list[tuple[int, float, float, bool]]


def annotate_views(
    frame: FrameRecord,
    cameras: Sequence[Camera],
    head_height: float = 1.75,
    occlusion: bool = False,
    occlusion_radius: float = 0.25,
) -> list[ViewAnnotation]:
    """Project every person's head point into every view.

    A person is visible when it projects in front of the camera and inside
    the image bounds. (u, v) are recorded regardless, so off-screen and
    behind-camera people keep their geometric trace. With ``occlusion``
    enabled, a person whose head pixel is covered by the projected disk
    (radius ``occlusion_radius`` metres) of a strictly nearer person is
    downgraded to not visible.
    """
    heads = np.array(
        [[p.position.x, p.position.y, p.position.z + head_height] for p in frame.persons],
        dtype=float,
    ).reshape(-1, 3)
    annotations = []
    for camera in cameras:
        u, v, s = project_many(camera, heads)
        finite = np.isfinite(u) & np.isfinite(v)
        u = np.where(finite, u, 0.0)
        v = np.where(finite, v, 0.0)
        visible = (
            finite
            & (s > 0.0)
            & (u >= 0.0)
            & (u < camera.image_width)
            & (v >= 0.0)
            & (v < camera.image_height)
        )
        if occlusion and len(frame.persons) > 1:
            focal = camera.intrinsics[0, 0]
            order = np.argsort(s, kind="stable")
            for i in np.nonzero(visible)[0]:
                nearer = order[: np.searchsorted(s[order], s[i])]
                nearer = nearer[s[nearer] > 0.0]
                if nearer.size == 0:
                    continue
                du = u[nearer] - u[i]
                dv = v[nearer] - v[i]
                radii = focal * occlusion_radius / s[nearer]
                if np.any(du * du + dv * dv <= radii * radii):
                    visible[i] = False
        annotations.append(
            ViewAnnotation(
                view_id=camera.id,
                entries=[
                    (p.id, float(u[k]), float(v[k]), bool(visible[k]))
                    for k, p in enumerate(frame.persons)
                ],
            )
        )
    return annotations


# ---------------------------------------------------------------------------
# Binary map files
# ---------------------------------------------------------------------------

def write_map(path, gmap: GridMap) -> None:
    header = _HEADER.pack(
        MAP_MAGIC, MAP_VERSION, int(gmap.kind), gmap.rows, gmap.cols, b"\x00" * 8
    )
    payload = np.ascontiguousarray(gmap.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_map(path) -> GridMap:
    """Read a binary map; raises FormatError pointing at the first bad byte."""
    path = str(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(path, len(raw), f"{_HEADER.size}-byte header")
    magic, version, kind, rows, cols, _reserved = _HEADER.unpack_from(raw, 0)
    if magic != MAP_MAGIC:
        raise FormatError(path, 0, f"magic {MAP_MAGIC!r}")
    if version != MAP_VERSION:
        raise FormatError(path, 4, f"version {MAP_VERSION}")
    try:
        kind = MapKind(kind)
    except ValueError:
        raise FormatError(path, 6, f"map kind in {[int(k) for k in MapKind]}") from None
    if rows < 1 or cols < 1:
        raise FormatError(path, 8, "rows >= 1 and cols >= 1")
    expected = rows * cols * 4
    if len(raw) - _HEADER.size < expected:
        raise FormatError(path, len(raw), f"{expected} payload bytes")
    if len(raw) - _HEADER.size > expected:
        raise FormatError(path, _HEADER.size + expected, "end of file")
    values = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(rows, cols)
    return GridMap(values=values.copy(), kind=kind)


# ---------------------------------------------------------------------------
# Dot annotation files
# ---------------------------------------------------------------------------

def write_dots(path, annotation: ViewAnnotation) -> None:
    lines = [
        f"{pid} {u!r} {v!r} {int(vis)}\n" for pid, u, v, vis in annotation.entries
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def read_dots(path, view_id: Optional[int] = None) -> ViewAnnotation:
    """Read a ``.dots`` file. The view id is parsed from ``view_<id>.dots``
    unless given explicitly."""
    path = str(path)
    if view_id is None:
        stem = Path(path).stem
        if not stem.startswith("view_"):
            raise FormatError(path, 0, "filename view_<id>.dots (or explicit view_id)")
        try:
            view_id = int(stem[len("view_") :])
        except ValueError:
            raise FormatError(path, 0, "integer view id in filename") from None
    entries: list[tuple[int, float, float, bool]] = []
    offset = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for raw in fh:
            line = raw.strip()
            if line:
                tokens = line.split()
                if len(tokens) != 4:
                    raise FormatError(path, offset, "person_id u v visible")
                try:
                    pid = int(tokens[0])
                    u = float(tokens[1])
                    v = float(tokens[2])
                except ValueError:
                    raise FormatError(path, offset, "person_id u v visible") from None
                if tokens[3] not in ("0", "1"):
                    raise FormatError(path, offset, "visible flag 0 or 1")
                entries.append((pid, u, v, tokens[3] == "1"))
            offset += len(raw.encode("utf-8"))
    return ViewAnnotation(view_id=view_id, entries=entries)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass(eq=True)
class FrameEntry:
    """A frame plus its annotation bookkeeping and file references."""

    frame: FrameRecord
    out_of_grid: int
    view_files: list[str]
    map_files: dict[str, str]


@dataclass(eq=True)
class SceneEntry:
    scene: Scene
    split: str
    cameras: list[Camera]
    grid: GroundGrid
    frames: list[FrameEntry]


@dataclass(eq=True)
class DatasetManifest:
    generator: dict
    config: dict
    scenes: list[SceneEntry]

    def splits(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {"train": [], "val": [], "test": []}
        for entry in self.scenes:
            out.setdefault(entry.split, []).append(entry.scene.id)
        return out

    def referenced_files(self) -> list[str]:
        files = []
        for entry in self.scenes:
            for fe in entry.frames:
                files.extend(fe.view_files)
                files.extend(sorted(fe.map_files.values()))
        return files


def _poly_jsonable(poly) -> list[list[float]]:
    return [[canon9(x), canon9(y)] for x, y in poly]


def _scene_jsonable(entry: SceneEntry) -> dict:
    scene = entry.scene
    return {
        "id": scene.id,
        "scene_type": scene.scene_type,
        "size_x": canon9(scene.size_x),
        "size_y": canon9(scene.size_y),
        "roi": _poly_jsonable(scene.roi),
        "exclusion_zones": [_poly_jsonable(z) for z in scene.exclusion_zones],
        "count_range": [scene.count_range[0], scene.count_range[1]],
        "split": entry.split,
        "cameras": [c.to_jsonable() for c in entry.cameras],
        "grid": {k: (canon9(v) if isinstance(v, float) else v) for k, v in entry.grid.to_jsonable().items()},
        "frames": [_frame_jsonable(fe) for fe in entry.frames],
    }


def _frame_jsonable(fe: FrameEntry) -> dict:
    frame = fe.frame
    return {
        "frame_id": frame.frame_id,
        "seed": frame.seed,
        "environment": {
            "weather": frame.environment.weather.value,
            "hour": frame.environment.hour,
            "time_part": frame.environment.time_part.value,
        },
        "person_count": frame.person_count,
        "persons": [
            [p.id, canon9(p.position.x), canon9(p.position.y), canon9(p.position.z), p.action, p.character_model]
            for p in frame.persons
        ],
        "out_of_grid": fe.out_of_grid,
        "views": list(fe.view_files),
        "maps": dict(fe.map_files),
    }


def manifest_to_jsonable(manifest: DatasetManifest) -> dict:
    return {
        "format": MANIFEST_FORMAT,
        "format_version": MANIFEST_VERSION,
        "generator": manifest.generator,
        "config": manifest.config,
        "splits": manifest.splits(),
        "scenes": [_scene_jsonable(e) for e in manifest.scenes],
    }


def _scene_from_jsonable(d: dict) -> SceneEntry:
    scene = Scene(
        id=int(d["id"]),
        scene_type=d["scene_type"],
        roi=tuple((x, y) for x, y in d["roi"]),
        size_x=float(d["size_x"]),
        size_y=float(d["size_y"]),
        count_range=(d["count_range"][0], d["count_range"][1]),
        exclusion_zones=tuple(tuple((x, y) for x, y in z) for z in d["exclusion_zones"]),
    )
    frames = []
    for fd in d["frames"]:
        env = EnvironmentSample(
            weather=Weather(fd["environment"]["weather"]),
            hour=int(fd["environment"]["hour"]),
            time_part=TimePart(fd["environment"]["time_part"]),
        )
        persons = [
            PersonRecord(
                id=int(p[0]),
                position=WorldPoint(float(p[1]), float(p[2]), float(p[3])),
                action=str(p[4]),
                character_model=int(p[5]),
            )
            for p in fd["persons"]
        ]
        frames.append(
            FrameEntry(
                frame=FrameRecord(
                    scene_id=scene.id,
                    frame_id=int(fd["frame_id"]),
                    seed=int(fd["seed"]),
                    environment=env,
                    persons=persons,
                ),
                out_of_grid=int(fd["out_of_grid"]),
                view_files=list(fd["views"]),
                map_files=dict(fd["maps"]),
            )
        )
    return SceneEntry(
        scene=scene,
        split=d["split"],
        cameras=[Camera.from_jsonable(c) for c in d["cameras"]],
        grid=GroundGrid.from_jsonable(d["grid"]),
        frames=frames,
    )


def write_manifest(path, manifest: DatasetManifest) -> None:
    text = json.dumps(manifest_to_jsonable(manifest), sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        fh.write("\n")


def read_manifest(path) -> DatasetManifest:
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(path, e.pos, f"valid JSON ({e.msg})") from None
    try:
        if doc["format"] != MANIFEST_FORMAT:
            raise FormatError(path, 0, f"format {MANIFEST_FORMAT!r}")
        if doc["format_version"] != MANIFEST_VERSION:
            raise FormatError(path, 0, f"format_version {MANIFEST_VERSION}")
        return DatasetManifest(
            generator=doc["generator"],
            config=doc["config"],
            scenes=[_scene_from_jsonable(s) for s in doc["scenes"]],
        )
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise FormatError(path, 0, f"well-formed manifest ({e})") from None


# ---------------------------------------------------------------------------
# Whole-dataset writer
# ---------------------------------------------------------------------------

class DatasetWriter:
    """Streams frames to disk; accepts them in any completion order.

    Per-frame files are written as frames arrive; the manifest is assembled
    in canonical (scene, frame) order at :meth:`finalize`.
    """

    def __init__(self, out_dir, plan: DatasetPlan, version: str = ""):
        self.out_dir = Path(out_dir)
        self.plan = plan
        self.grids = {
            scene.id: GroundGrid.for_scene(scene.size_x, scene.size_y, plan.config.cell_size)
            for scene in plan.scenes
        }
        self._entries: dict[tuple[int, int], FrameEntry] = {}
        self._version = version
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def add_frame(self, frame: FrameRecord) -> FrameEntry:
        cfg = self.plan.config
        scene_dir = self.out_dir / f"scene_{frame.scene_id}" / f"frame_{frame.frame_id}"
        scene_dir.mkdir(parents=True, exist_ok=True)
        rel = f"scene_{frame.scene_id}/frame_{frame.frame_id}"

        cameras = self.plan.cameras[frame.scene_id]
        annotations = annotate_views(frame, cameras, head_height=cfg.head_height)
        view_files = []
        for ann in annotations:
            name = f"{rel}/view_{ann.view_id}.dots"
            write_dots(self.out_dir / name, ann)
            view_files.append(name)

        grid = self.grids[frame.scene_id]
        dot_map, gauss_map, out_of_grid = render_ground_occupancy(
            frame, grid, sigma_cells=cfg.sigma_ground_cells
        )
        map_files = {"dot": f"{rel}/ground.occ", "density": f"{rel}/ground.den"}
        write_map(self.out_dir / map_files["dot"], dot_map)
        write_map(self.out_dir / map_files["density"], gauss_map)

        entry = FrameEntry(
            frame=frame, out_of_grid=out_of_grid, view_files=view_files, map_files=map_files
        )
        self._entries[(frame.scene_id, frame.frame_id)] = entry
        return entry

    def finalize(self) -> DatasetManifest:
        cfg = self.plan.config
        expected = cfg.scenes * cfg.frames_per_scene
        if len(self._entries) != expected:
            raise ValueError(
                f"writer holds {len(self._entries)} frames, expected {expected}"
            )
        scenes = []
        for scene in self.plan.scenes:
            frames = [
                self._entries[(scene.id, fid)] for fid in range(cfg.frames_per_scene)
            ]
            scenes.append(
                SceneEntry(
                    scene=scene,
                    split=self.plan.splits[scene.id],
                    cameras=self.plan.cameras[scene.id],
                    grid=self.grids[scene.id],
                    frames=frames,
                )
            )
        config_echo = {
            k: (canon9(v) if isinstance(v, float) else list(v) if isinstance(v, tuple) else v)
            for k, v in asdict(cfg).items()
        }
        manifest = DatasetManifest(
            generator={
                "name": "mvforge",
                "version": self._version,
                "rng": RNG_NAME,
                "scheme": RNG_SCHEME,
                "seed": cfg.seed,
            },
            config=config_echo,
            scenes=scenes,
        )
        write_manifest(self.out_dir / MANIFEST_NAME, manifest)
        return manifest


def write_dataset(plan: DatasetPlan, out_dir, threads: int = 1, version: str = "") -> DatasetManifest:
    """Generate every frame of ``plan`` and write the dataset under ``out_dir``.

    Output is byte-identical for any ``threads``: each frame depends only on
    its own sub-seed and the manifest is ordered canonically.
    """
    writer = DatasetWriter(out_dir, plan, version=version)
    jobs = plan.frame_jobs()
    if threads <= 1:
        for scene, fid, seed in jobs:
            writer.add_frame(generate_frame(scene, fid, seed, plan.config))
    else:
        def work(job):
            scene, fid, seed = job
            return generate_frame(scene, fid, seed, plan.config)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            for frame in pool.map(work, jobs):
                writer.add_frame(frame)
    return writer.finalize()


def read_dataset(root, validate: bool = True) -> DatasetManifest:
    """Load a dataset manifest; optionally verify every referenced file exists."""
    root = Path(root)
    manifest = read_manifest(root / MANIFEST_NAME)
    if validate:
        for rel in manifest.referenced_files():
            if not (root / rel).is_file():
                raise FormatError(str(root / rel), 0, "referenced file on disk")
    return manifest
