import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpparse.core import Keypoint, PersonKeypoints
from kpparse.skeleton import (
    ARM,
    COCO,
    HEAD,
    LEG,
    PASCAL,
    TORSO,
    ConnectionTable,
    Segment,
    SkeletonRaster,
    assign_region_labels,
    background_regions,
    build_segments,
    keypoint_distance,
    rasterize,
    region_evidence,
    segment_pixels,
)
from kpparse.superpixels import SuperPixelPartition

from oracles import brute_distance


def _person(**points):
    return PersonKeypoints.from_points([Keypoint(k, x, y, True) for k, (x, y) in points.items()])


def _full_pascal(dx=0.0):
    pts = {
        "forehead": (20, 5), "neck": (20, 15),
        "left_shoulder": (26, 17), "right_shoulder": (14, 17),
        "left_elbow": (30, 25), "right_elbow": (10, 25),
        "left_wrist": (32, 33), "right_wrist": (8, 33),
        "left_hip": (24, 35), "right_hip": (16, 35),
        "left_knee": (25, 45), "right_knee": (15, 45),
        "left_ankle": (25, 55), "right_ankle": (15, 55),
    }
    return _person(**{k: (x + dx, y) for k, (x, y) in pts.items()})


def test_nose_only_gives_no_segments():
    assert build_segments([_person(nose=(5, 5))], COCO) == []


def test_single_arm_row():
    table = ConnectionTable("t", ("shoulder", "elbow"), (("shoulder", "elbow", ARM),))
    segs = build_segments([_person(shoulder=(10, 10), elbow=(30, 10))], table)
    assert segs == [Segment((10.0, 10.0), (30.0, 10.0), ARM)]


def test_two_persons_double_torso_rows():
    segs = build_segments([_full_pascal(), _full_pascal(dx=40)], PASCAL)
    per_person = sum(1 for r in PASCAL.rows if r[2] == TORSO)
    assert sum(s.label == TORSO for s in segs) == 2 * per_person
    assert len(segs) == 2 * len(PASCAL.rows)


def test_invisible_keypoint_breaks_rows():
    p = PersonKeypoints.from_points([Keypoint("forehead", 1, 1, True), Keypoint("neck", 1, 9, False)])
    assert build_segments([p], PASCAL) == []


def test_coco_neck_derived_from_shoulders():
    p = _person(nose=(20, 5), left_shoulder=(26, 17), right_shoulder=(14, 17))
    segs = build_segments([p], COCO)
    head = [s for s in segs if s.label == HEAD]
    assert head == [Segment((20.0, 5.0), (20.0, 17.0), HEAD)]


def test_coco_row_count_for_full_person():
    names = COCO.keypoints
    p = _person(**{n: (float(i), float(i)) for i, n in enumerate(names)})
    assert len(build_segments([p], COCO)) == len(COCO.rows)


def test_horizontal_segment_radius_zero():
    r = rasterize([Segment((0, 5), (10, 5), ARM)], 16, 12, 0)
    ys, xs = np.nonzero(r.labels)
    assert set(zip(xs.tolist(), ys.tolist())) == {(x, 5) for x in range(11)}


def test_empty_segment_list():
    r = rasterize([], 8, 6, 3)
    assert not r.labels.any()
    assert (r.provenance == -1).all()


def test_point_segment_radius_one_is_disk():
    r = rasterize([Segment((2, 2), (2, 2), HEAD)], 6, 6, 1)
    ys, xs = np.nonzero(r.labels)
    expected = {(x, y) for y in range(6) for x in range(6) if (x - 2) ** 2 + (y - 2) ** 2 <= 1}
    assert set(zip(xs.tolist(), ys.tolist())) == expected
    assert len(expected) == 5


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 19), st.floats(0, 14), st.floats(0, 19), st.floats(0, 14), st.floats(0, 3))
def test_segment_pixels_cover_capsule(ax, ay, bx, by, radius):
    m = segment_pixels(Segment((ax, ay), (bx, by), ARM), 15, 20, radius)
    ys, xs = np.mgrid[0:15, 0:20]
    a, b = np.array([ax, ay]), np.array([bx, by])
    d = b - a
    denom = d @ d
    t = np.clip(((xs - ax) * d[0] + (ys - ay) * d[1]) / denom, 0, 1) if denom > 0 else 0
    dist = np.hypot(xs - ax - t * d[0], ys - ay - t * d[1])
    assert np.all(m[dist <= radius - 1e-6])
    assert m[int(round(ay)), int(round(ax))] and m[int(round(by)), int(round(bx))]


def test_draw_order_extremities_win():
    segs = [Segment((0, 5), (10, 5), ARM), Segment((5, 0), (5, 10), TORSO)]
    r = rasterize(segs, 11, 11, 0)
    assert r.labels[5, 5] == ARM
    assert r.provenance[5, 5] == 0
    segs = [Segment((0, 5), (10, 5), LEG), Segment((5, 0), (5, 10), HEAD)]
    assert rasterize(segs, 11, 11, 0).labels[5, 5] == HEAD


def _raster(labels):
    labels = np.array(labels, np.uint8)
    return SkeletonRaster(labels, np.where(labels > 0, 0, -1).astype(np.int32))


def test_majority_overlap_label():
    part = SuperPixelPartition.from_region_map(np.zeros((1, 14), int))
    ev = assign_region_labels(part, _raster([[HEAD] * 10 + [TORSO] * 4]), 5)
    assert ev.part_label.tolist() == [HEAD]
    assert ev.overlap[0].tolist() == [0, 10, 4, 0, 0]


def test_no_overlap_no_label():
    part = SuperPixelPartition.from_region_map(np.zeros((2, 2), int))
    assert assign_region_labels(part, _raster(np.zeros((2, 2))), 5).part_label.tolist() == [0]


def test_tie_goes_to_smaller_label():
    part = SuperPixelPartition.from_region_map(np.zeros((1, 10), int))
    ev = assign_region_labels(part, _raster([[ARM] * 5 + [LEG] * 5]), 5)
    assert ev.part_label.tolist() == [ARM]


def _kp(x, y):
    return [_person(nose=(x, y))]


def test_background_disk_not_flagged_far_corner_flagged():
    region_map = np.ones((200, 200), int)
    ys, xs = np.mgrid[0:200, 0:200]
    region_map[np.hypot(xs - 100, ys - 100) <= 40] = 0
    region_map[:15, :15] = 2
    part = SuperPixelPartition.from_region_map(region_map)
    ev = background_regions(part, _kp(100, 100), 50)
    corner = part.region_of[0, 0]
    disk = part.region_of[100, 100]
    assert ev.background[corner]
    assert not ev.background[disk]
    # the corner's nearest pixel (14, 14) is sqrt(2) * 86 > 120 away
    assert np.hypot(86, 86) > 120


def test_no_keypoints_flags_everything():
    part = SuperPixelPartition.from_region_map(np.arange(12).reshape(3, 4))
    assert background_regions(part, [], 50).background.all()


def test_skeleton_regions_not_background():
    part = SuperPixelPartition.from_region_map(np.zeros((3, 3), int))
    ev = assign_region_labels(part, _raster([[HEAD, 0, 0], [0, 0, 0], [0, 0, 0]]), 5)
    assert not background_regions(part, [], 0, ev).background.any()


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 14), st.integers(0, 11)), min_size=1, max_size=5))
def test_keypoint_distance_matches_brute_force(points):
    persons = [_person(**{f"p{i}": p for i, p in enumerate(points)})]
    assert np.allclose(keypoint_distance(persons, 12, 15), brute_distance(points, 12, 15))


def test_region_evidence_on_full_person():
    strips = np.broadcast_to(np.arange(120) // 4, (60, 120))
    part = SuperPixelPartition.from_region_map(strips)
    _, ev = region_evidence(part, [_full_pascal()], PASCAL, 5, 3, 50)
    assert not np.any((ev.part_label > 0) & ev.background)
    assert (ev.part_label > 0).any()
    # strips beyond x = 50 + 32 are far from every keypoint
    assert ev.background[-1]
