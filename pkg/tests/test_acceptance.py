"""Acceptance suite: the binding end-to-end checks for the toolkit.

Each test covers one acceptance criterion at its stated tolerance and prints
one PASS/FAIL line (visible even under captured output). Every expected value
comes from an independent route: scalar re-derivations, exhaustive search,
frozen long-run reference solutions, or closed-form identities.
"""

import hashlib
import json
import math
import pathlib
import time
from collections import Counter

import numpy as np
from scipy.stats import chisquare

from mvforge.annotate import (
    GridMap,
    MapKind,
    annotate_views,
    read_dataset,
    read_dots,
    read_map,
    render_density_map,
    write_dataset,
)
from mvforge.errors import FormatError
from mvforge.fusion import ViewMapStack, fuse_max, ground_pipeline, softmax_weights
from mvforge.geometry import (
    GroundGrid,
    WorldPoint,
    backproject_at_height,
    default_camera_rig,
    grid_index,
    place_camera_ring,
    project,
)
from mvforge.metrics import (
    counting_stats,
    match_points,
    moda,
    modp,
    precision_recall_f1,
)
from mvforge.ot import OtProblem, evaluate_objective, solve
from mvforge.scene_synth import (
    EVENING_PERIODS,
    DEFAULT_WEATHER_MODEL,
    FrameRecord,
    GeneratorConfig,
    PersonRecord,
    TimePart,
    evening_period_for_hour,
    generate_dataset,
    make_frame_rng,
    make_master_rng,
    merge_areas,
    partition_frame,
    sample_environment,
)
from mvforge.errors import UndefinedMetric

from oracles import brute_force_match, counting_metrics_scalar, detection_metrics_scalar

DATA_DIR = pathlib.Path(__file__).parent / "data"


def _verdict(capsys, index, label, failures):
    status = "PASS" if not failures else "FAIL"
    detail = f"  ({'; '.join(failures)})" if failures else ""
    with capsys.disabled():
        print(f"[{status}] criterion {index:02d}: {label}{detail}")
    assert not failures, f"criterion {index:02d} {label}: {failures}"


def _tree_digest(root: pathlib.Path) -> dict:
    digests = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digests[str(path.relative_to(root))] = hashlib.sha256(
                path.read_bytes()
            ).hexdigest()
    return digests


# ---------------------------------------------------------------------------
# 1. projection round trip
# ---------------------------------------------------------------------------

def test_01_projection_round_trip(capsys):
    failures = []
    rng = np.random.default_rng(11)
    rig = default_camera_rig(WorldPoint(50.0, 60.0, 0.0), radius=90.0)
    xs = rng.uniform(0.0, 100.0, 1000)
    ys = rng.uniform(0.0, 120.0, 1000)
    zs = rng.uniform(0.0, 2.0, 1000)
    cams = rng.integers(0, len(rig), 1000)

    worst = 0.0
    start = time.perf_counter()
    for x, y, z, ci in zip(xs, ys, zs, cams):
        cam = rig[ci]
        img = project(cam, WorldPoint(x, y, z))
        back = backproject_at_height(cam, img.u, img.v, z)
        err = math.sqrt((back.x - x) ** 2 + (back.y - y) ** 2 + (back.z - z) ** 2)
        worst = max(worst, err)
    elapsed = time.perf_counter() - start

    if worst >= 1e-6:
        failures.append(f"max round-trip error {worst:.3e} >= 1e-6 m")
    if elapsed >= 1.0:
        failures.append(f"took {elapsed:.2f}s >= 1s")
    _verdict(capsys, 1, "projection round trip (1000 points)", failures)


# ---------------------------------------------------------------------------
# 2. default camera rig
# ---------------------------------------------------------------------------

def test_02_default_rig_geometry(capsys):
    failures = []
    center = WorldPoint(0.0, 0.0, 0.0)
    rig = default_camera_rig(center, radius=60.0)

    if len(rig) != 50:
        failures.append(f"{len(rig)} cameras != 50")
    for cam in rig:
        R = cam.rotation
        if np.max(np.abs(R.T @ R - np.eye(3))) >= 1e-9:
            failures.append(f"camera {cam.id} rotation not orthonormal")
            break
        if abs(np.linalg.det(R) - 1.0) >= 1e-9:
            failures.append(f"camera {cam.id} determinant != 1")
            break

    def azimuths(cameras):
        az = [math.atan2(c.center()[1], c.center()[0]) for c in cameras]
        return np.sort(np.mod(az, 2.0 * math.pi))

    card = azimuths(rig[:4])
    gaps = np.diff(np.append(card, card[0] + 2.0 * math.pi))
    if np.max(np.abs(gaps - math.pi / 2.0)) >= 1e-9:
        failures.append("cardinal cameras not at 90 degree spacing")

    ring = azimuths(rig[4:])
    if len(ring) != 46:
        failures.append(f"ring has {len(ring)} cameras != 46")
    gaps = np.diff(np.append(ring, ring[0] + 2.0 * math.pi))
    if np.max(np.abs(gaps - 2.0 * math.pi / 46.0)) >= 1e-9:
        failures.append("ring cameras not evenly spaced")

    radii = [np.hypot(c.center()[0], c.center()[1]) for c in rig]
    if np.max(np.abs(np.array(radii) - 60.0)) >= 1e-9:
        failures.append("cameras not equidistant from the scene centre")

    _verdict(capsys, 2, "default 50-camera rig geometry", failures)


# ---------------------------------------------------------------------------
# 3. seed-fixed generation
# ---------------------------------------------------------------------------

def test_03_seeded_generation(capsys, tmp_path):
    failures = []
    config = GeneratorConfig(scenes=5, frames_per_scene=10, views=8, seed=20260814)

    start = time.perf_counter()
    plan = generate_dataset(config)
    manifest = write_dataset(plan, tmp_path / "a", version="acceptance")
    elapsed = time.perf_counter() - start
    if elapsed >= 30.0:
        failures.append(f"generation took {elapsed:.1f}s >= 30s")

    split_sizes = Counter(plan.splits.values())
    if (split_sizes.get("train"), split_sizes.get("val"), split_sizes.get("test")) != (3, 1, 1):
        failures.append(f"split sizes {dict(split_sizes)} != 3:1:1")

    out_of_range = 0
    merge_bad = 0
    for entry in manifest.scenes:
        for fe in entry.frames:
            frame = fe.frame
            if not (config.count_min <= frame.person_count <= config.count_max):
                out_of_range += 1
            partition = partition_frame(frame, entry.scene, config.capacity)
            if any(len(a.persons) > config.capacity for a in partition.areas):
                merge_bad += 1
            elif merge_areas(partition) != sorted(frame.persons, key=lambda p: p.id):
                merge_bad += 1
    if out_of_range:
        failures.append(f"{out_of_range} frames outside [{config.count_min}, {config.count_max}]")
    if merge_bad:
        failures.append(f"{merge_bad} frames fail the split/merge identity")

    plan2 = generate_dataset(GeneratorConfig(scenes=5, frames_per_scene=10, views=8, seed=20260814))
    write_dataset(plan2, tmp_path / "b", version="acceptance")
    if _tree_digest(tmp_path / "a") != _tree_digest(tmp_path / "b"):
        failures.append("rerun with the same seed is not byte-identical")

    _verdict(capsys, 3, "seed-fixed generation (5 scenes x 10 frames x 8 views)", failures)


# ---------------------------------------------------------------------------
# 4. density map mass
# ---------------------------------------------------------------------------

def test_04_density_map_mass(capsys):
    failures = []
    rng = np.random.default_rng(44)
    rows, cols, sigma = 128, 96, 3.0
    radius = 4.0 * sigma
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(0, 1001))
        pts = np.column_stack([
            rng.uniform(-radius - 6.0, rows + radius + 6.0, n),
            rng.uniform(-radius - 6.0, cols + radius + 6.0, n),
        ])
        gmap = render_density_map(pts, rows, cols, sigma=sigma)
        expected = 0
        for pr, pc in pts:
            # the documented truncation window: +-4 sigma, clipped to the map
            r_ok = max(0, math.ceil(pr - radius)) <= min(rows - 1, math.floor(pr + radius))
            c_ok = max(0, math.ceil(pc - radius)) <= min(cols - 1, math.floor(pc + radius))
            if r_ok and c_ok:
                expected += 1
        err = abs(float(gmap.values.sum(dtype=np.float64)) - expected)
        worst = max(worst, err)
    if worst >= 1e-3:
        failures.append(f"max |mass - count| = {worst:.2e} >= 1e-3")
    _verdict(capsys, 4, "density map unit mass (100 random maps)", failures)


# ---------------------------------------------------------------------------
# 5. matching and detection scores
# ---------------------------------------------------------------------------

def test_05_matching_exact(capsys):
    failures = []
    rng = np.random.default_rng(55)
    count_bad = 0
    distance_bad = 0
    metric_bad = 0
    for _ in range(200):
        n_pred = int(rng.integers(0, 13))
        n_gt = int(rng.integers(0, 13))
        pred = rng.uniform(0, 5, (n_pred, 2))
        gt = rng.uniform(0, 5, (n_gt, 2))
        threshold = float(rng.uniform(0.4, 2.2))

        report = match_points(pred, gt, threshold)
        tp, fp, fn, total = brute_force_match(pred, gt, threshold)
        if (report.tp, report.fp, report.fn) != (tp, fp, fn):
            count_bad += 1
            continue
        if abs(sum(report.distances) - total) > 1e-9:
            distance_bad += 1
            continue

        want = detection_metrics_scalar(tp, fp, fn, report.distances, threshold)
        got = {}
        for key, fn_ in (("moda", moda), ("modp", modp)):
            try:
                got[key] = fn_(report)
            except UndefinedMetric:
                got[key] = None
        try:
            got["precision"], got["recall"], got["f1"] = precision_recall_f1(report)
        except UndefinedMetric:
            got["precision"] = got["recall"] = got["f1"] = None
        for key in ("moda", "modp"):
            if (want[key] is None) != (got[key] is None):
                metric_bad += 1
            elif want[key] is not None and abs(want[key] - got[key]) > 1e-12:
                metric_bad += 1
        if want["precision"] is not None and want["recall"] is not None:
            for key in ("precision", "recall", "f1"):
                if abs(want[key] - got[key]) > 1e-12:
                    metric_bad += 1

    if count_bad:
        failures.append(f"{count_bad}/200 instances disagree with exhaustive tp/fp/fn")
    if distance_bad:
        failures.append(f"{distance_bad}/200 instances disagree on total distance")
    if metric_bad:
        failures.append(f"{metric_bad} metric values off the scalar formulas")
    _verdict(capsys, 5, "matching vs exhaustive search (200 instances)", failures)


# ---------------------------------------------------------------------------
# 6. counting formulas
# ---------------------------------------------------------------------------

def test_06_counting_formulas(capsys):
    failures = []
    stats = counting_stats([110, 190], [100, 200])
    if abs(stats.mae - 10.0) > 1e-12:
        failures.append(f"hand case MAE {stats.mae} != 10")
    if abs(stats.mse - 10.0) > 1e-12:
        failures.append(f"hand case MSE {stats.mse} != 10")
    if abs(stats.nae - 0.075) > 1e-12:
        failures.append(f"hand case NAE {stats.nae} != 0.075")

    rng = np.random.default_rng(66)
    for _ in range(30):
        n = int(rng.integers(1, 60))
        gt = rng.integers(0, 1200, n).astype(float)
        pred = np.maximum(gt + rng.normal(0, 40, n), 0.0)
        stats = counting_stats(pred, gt)
        mae, mse, nae = counting_metrics_scalar(list(pred), list(gt))
        if abs(stats.mae - mae) > 1e-12 or abs(stats.mse - mse) > 1e-12:
            failures.append("random draw disagrees with scalar MAE/MSE")
            break
        if (nae is None) != (stats.nae is None) or (
                nae is not None and abs(stats.nae - nae) > 1e-12):
            failures.append("random draw disagrees with scalar NAE")
            break

    gt = [0, 399, 400, 699, 700, 5000]
    pred = [3, 410, 390, 700, 720, 4900]
    stats = counting_stats(pred, gt)
    sizes = {name: s.n for name, s in stats.buckets.items()}
    if sizes != {"sparse": 2, "medium": 2, "congested": 2}:
        failures.append(f"bucket boundary sizes wrong: {sizes}")
    for name, lo, hi in (("sparse", 0, 399), ("medium", 400, 699), ("congested", 700, None)):
        keep = [(p, g) for p, g in zip(pred, gt) if g >= lo and (hi is None or g <= hi)]
        mae, mse, _nae = counting_metrics_scalar(*zip(*keep))
        if abs(stats.buckets[name].mae - mae) > 1e-12 or abs(stats.buckets[name].mse - mse) > 1e-12:
            failures.append(f"bucket {name} stats off the scalar formulas")

    _verdict(capsys, 6, "counting error formulas", failures)


# ---------------------------------------------------------------------------
# 7. transport solver
# ---------------------------------------------------------------------------

def test_07_transport_solver(capsys):
    failures = []
    payload = json.loads((DATA_DIR / "ot_oracle.json").read_text())
    instances = payload["instances"]
    if len(instances) != 50:
        failures.append(f"{len(instances)} reference instances != 50")

    worst_gap = 0.0
    non_monotone = 0
    zero_plan_bad = 0
    elapsed = 0.0
    for inst in instances:
        problem = OtProblem(
            a=np.array(inst["a"]),
            src_coords=np.array(inst["src"]),
            b=np.array(inst["b"]),
            dst_coords=np.array(inst["dst"]),
            epsilon=inst["epsilon"],
            tau_a=inst["tau"],
            tau_b=inst["tau"],
        )
        start = time.perf_counter()
        sol = solve(problem, max_iters=2000, tol=1e-7)
        elapsed += time.perf_counter() - start

        worst_gap = max(worst_gap, abs(sol.objective - inst["objective"]))
        if np.any(np.diff(np.asarray(sol.objective_trace)) > 1e-12):
            non_monotone += 1

        zero = evaluate_objective(problem, np.zeros((problem.n, problem.m)))
        analytic = inst["tau"] * float(problem.a @ problem.a) + inst["tau"] * float(problem.b.sum())
        if abs(zero - analytic) > 1e-12 * max(1.0, abs(analytic)):
            zero_plan_bad += 1

    if worst_gap > 1e-3:
        failures.append(f"max |objective - reference| = {worst_gap:.2e} > 1e-3")
    if non_monotone:
        failures.append(f"{non_monotone} instances with increasing objective trace")
    if zero_plan_bad:
        failures.append(f"{zero_plan_bad} zero-plan objectives off the closed form")
    if elapsed >= 10.0:
        failures.append(f"solves took {elapsed:.2f}s >= 10s")

    _verdict(capsys, 7, "transport solver vs long-run reference (50 instances)", failures)


# ---------------------------------------------------------------------------
# 8. multi-view fusion
# ---------------------------------------------------------------------------

def test_08_fusion(capsys):
    failures = []
    rng = np.random.default_rng(88)

    w = softmax_weights(rng.normal(0, 4, (7, 40, 50)))
    if np.max(np.abs(w.sum(axis=0) - 1.0)) >= 1e-6:
        failures.append("softmax weights do not sum to 1 within 1e-6")

    maps = [
        GridMap(values=rng.uniform(0, 2, (30, 30)), kind=MapKind.GROUND_DENSITY)
        for _ in range(5)
    ]
    if fuse_max([maps[0], maps[0]]) != fuse_max([maps[0]]):
        failures.append("fuse_max is not idempotent")
    perm = [maps[i] for i in rng.permutation(5)]
    if not np.array_equal(fuse_max(maps).values, fuse_max(perm).values):
        failures.append("fuse_max is not permutation invariant")

    # toy scene: twenty well-separated people, five ring views, uniform
    # attention; the fused peak must sit in each person's occupancy cell
    image_w, image_h = 1280, 720
    grid = GroundGrid.for_scene(16.0, 16.0, cell_size=0.5)
    people = [(2.25 + 3.0 * i, 2.25 + 3.0 * j) for i in range(5) for j in range(4)]
    persons = [
        PersonRecord(id=k, position=WorldPoint(x, y, 0.0), action="stand",
                     character_model=0)
        for k, (x, y) in enumerate(people)
    ]
    frame = FrameRecord(scene_id=0, frame_id=0, seed=88,
                        environment=sample_environment(make_frame_rng(88)),
                        persons=persons)
    cameras = place_camera_ring(
        scene_center=WorldPoint(8.0, 8.0, 0.0),
        radius=18.0,
        height=6.0,
        pitch_deg=-math.degrees(math.atan2(6.0, 18.0)),
        count=5,
        fov_deg=90.0,
        image_width=image_w,
        image_height=image_h,
    )
    annotations = annotate_views(frame, cameras)
    seen = np.zeros(len(people), dtype=bool)
    stack_maps = []
    for ann, cam in zip(annotations, cameras):
        points = []
        for pid, u, v, vis in ann.entries:
            seen[pid] |= vis
            if vis:
                points.append((v, u))
        gmap = render_density_map(points, image_h, image_w, sigma=3.0)
        stack_maps.append(GridMap(values=gmap.values, kind=MapKind.PIXEL_DENSITY,
                                  view_id=cam.id))
    if not seen.all():
        failures.append("toy precondition broken: some people unseen in all views")

    stack = ViewMapStack(maps=stack_maps, cameras=list(cameras))
    fused = ground_pipeline(stack, np.zeros((5, image_h, image_w)), grid, height=1.75)

    mismatches = 0
    for x, y in people:
        r, c = grid_index(grid, x, y)
        window = fused.values[max(r - 2, 0):r + 3, max(c - 2, 0):c + 3]
        peak = np.unravel_index(np.argmax(window), window.shape)
        if peak != (r - max(r - 2, 0), c - max(c - 2, 0)):
            mismatches += 1
    if mismatches:
        failures.append(f"{mismatches}/20 fused peaks miss the occupancy cell")

    _verdict(capsys, 8, "multi-view fusion (toy 20-person / 5-view scene)", failures)


# ---------------------------------------------------------------------------
# 9. environment sampling
# ---------------------------------------------------------------------------

def test_09_environment_distribution(capsys):
    failures = []
    draws = 1_000_000
    rng = make_master_rng(9090)

    weather = Counter()
    parts = Counter()
    periods = Counter()
    for _ in range(draws):
        env = sample_environment(rng)
        weather[env.weather] += 1
        parts[env.time_part] += 1
        if env.time_part is TimePart.EVENING:
            periods[evening_period_for_hour(env.hour)] += 1

    expected = DEFAULT_WEATHER_MODEL.expected_shares()
    for kind, share in expected.items():
        observed = weather.get(kind, 0) / draws
        if abs(observed - share) >= 0.01:
            failures.append(f"weather {kind.value}: {observed:.4f} vs {share:.4f}")
    order = [k for k in expected if expected[k] > 0]
    result = chisquare(
        [weather.get(k, 0) for k in order],
        f_exp=[expected[k] * draws for k in order],
    )
    if result.pvalue <= 0.01:
        failures.append(f"weather chi-square p = {result.pvalue:.4f} <= 0.01")

    for part in TimePart:
        observed = parts.get(part, 0) / draws
        if abs(observed - 0.2) >= 0.01:
            failures.append(f"time part {part.value}: {observed:.4f} vs 0.2")

    for name in EVENING_PERIODS:
        observed = periods.get(name, 0) / draws
        if abs(observed - 0.05) >= 0.01:
            failures.append(f"evening period {name}: {observed:.4f} vs 0.05")

    _verdict(capsys, 9, "environment sampling distribution (1e6 draws)", failures)


# ---------------------------------------------------------------------------
# 10. formats round trip
# ---------------------------------------------------------------------------

def test_10_format_round_trip(capsys, tmp_path):
    failures = []
    fixtures = [
        dict(scenes=2, frames_per_scene=2, views=4, count_min=6, count_max=12,
             capacity=5, separation=0.25, scene_size_x=18.0, scene_size_y=14.0,
             cell_size=0.5, seed=101),
        dict(scenes=1, frames_per_scene=3, views=6, count_min=4, count_max=9,
             capacity=3, separation=0.3, scene_size_x=12.0, scene_size_y=20.0,
             cell_size=0.4, seed=202),
        dict(scenes=3, frames_per_scene=1, views=5, count_min=8, count_max=8,
             capacity=64, separation=0.25, scene_size_x=15.0, scene_size_y=15.0,
             cell_size=0.5, seed=303),
    ]
    dataset_dir = None
    for i, kwargs in enumerate(fixtures):
        out = tmp_path / f"fixture_{i}"
        written = write_dataset(generate_dataset(GeneratorConfig(**kwargs)), out,
                                version="acceptance")
        reread = read_dataset(out)
        if reread != written:
            failures.append(f"fixture {i} does not round trip")
        dataset_dir = out

    # corruption must be reported with the offending file and byte offset
    sample_den = next(dataset_dir.rglob("*.den"))
    blob = bytearray(sample_den.read_bytes())
    bad_magic = tmp_path / "bad_magic.den"
    bad_magic.write_bytes(b"XXXX" + bytes(blob[4:]))
    try:
        read_map(bad_magic)
        failures.append("corrupt magic accepted")
    except FormatError as err:
        if err.offset != 0 or str(bad_magic) not in str(err):
            failures.append(f"magic corruption misreported: {err}")

    truncated = tmp_path / "truncated.den"
    truncated.write_bytes(bytes(blob[: len(blob) - 7]))
    try:
        read_map(truncated)
        failures.append("truncated map accepted")
    except FormatError as err:
        if err.offset != len(blob) - 7 or str(truncated) not in str(err):
            failures.append(f"truncation misreported: {err}")

    sample_dots = next(dataset_dir.rglob("*.dots"))
    text = sample_dots.read_bytes()
    bad_dots = tmp_path / "bad.dots"
    bad_dots.write_bytes(text + b"banana\n")
    try:
        read_dots(bad_dots, view_id=0)
        failures.append("corrupt dots accepted")
    except FormatError as err:
        if err.offset != len(text) or str(bad_dots) not in str(err):
            failures.append(f"dots corruption misreported: {err}")

    broken = tmp_path / "broken_manifest"
    broken.mkdir()
    (broken / "manifest.json").write_text("{not json")
    try:
        read_dataset(broken)
        failures.append("corrupt manifest accepted")
    except FormatError as err:
        if "manifest.json" not in str(err):
            failures.append(f"manifest corruption misreported: {err}")

    _verdict(capsys, 10, "format round trip and corruption reporting", failures)
