import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from kpparse.core import ImagePlane
from kpparse.superpixels import SuperPixelPartition, build_adjacency, segment_graph_based


def _rand_image(seed, h=40, w=48):
    return ImagePlane(np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8))


def test_constant_image_is_one_region():
    for scale in (1.0, 100.0, 10000.0):
        p = segment_graph_based(ImagePlane(np.full((32, 32, 3), 77, np.uint8)), scale, 10, 0.5)
        assert p.region_count == 1


def test_half_black_half_white_matches_color_components():
    px = np.zeros((32, 32, 3), np.uint8)
    px[:, 16:] = 255
    p = segment_graph_based(ImagePlane(px), 100, 10, 0.0)
    oracle, count = ndimage.label(px[..., 0] == 255)
    assert p.region_count == 2 == count + 1
    left = p.region_of[:, :16]
    right = p.region_of[:, 16:]
    assert len(np.unique(left)) == 1 and len(np.unique(right)) == 1
    assert left[0, 0] != right[0, 0]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_min_size_respected(seed):
    p = segment_graph_based(_rand_image(seed), 100, 60, 0.5)
    assert p.sizes.min() >= 60
    assert p.sizes.sum() == 40 * 48


def test_regions_are_connected_and_contiguous():
    p = segment_graph_based(_rand_image(3), 100, 30, 0.5)
    assert set(np.unique(p.region_of)) == set(range(p.region_count))
    for r in range(p.region_count):
        _, k = ndimage.label(p.region_of == r)
        assert k == 1


def test_segmentation_is_deterministic():
    a = segment_graph_based(_rand_image(9), 100, 60, 0.5)
    b = segment_graph_based(_rand_image(9), 100, 60, 0.5)
    assert np.array_equal(a.region_of, b.region_of)


def test_partition_statistics():
    p = SuperPixelPartition.from_region_map(np.array([[5, 5, 2], [5, 2, 2]]))
    assert p.region_of.tolist() == [[0, 0, 1], [0, 1, 1]]
    assert p.sizes.tolist() == [3, 3]
    assert p.bboxes.tolist() == [[0, 0, 1, 1], [1, 0, 2, 1]]
    assert np.allclose(p.centroids[0], (1 / 3, 1 / 3))


def test_adjacency_examples():
    assert build_adjacency(SuperPixelPartition.from_region_map(np.zeros((4, 4), int))).edge_count == 0
    assert build_adjacency(SuperPixelPartition.from_region_map(np.array([[0], [1]]))).edges.tolist() == [[0, 1]]
    strips = SuperPixelPartition.from_region_map(np.repeat(np.arange(3), 3).reshape(3, 3))
    g = build_adjacency(strips)
    assert g.edges.tolist() == [[0, 1], [1, 2]]
    assert g.degrees().tolist() == [1, 2, 1]
    assert g.neighbors(1) == [0, 2]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_adjacency_matches_pixel_pair_enumeration(seed):
    rng = np.random.default_rng(seed)
    p = SuperPixelPartition.from_region_map(rng.integers(0, 5, (6, 7)))
    r = p.region_of
    pairs = set()
    for y in range(6):
        for x in range(7):
            for dy, dx in ((0, 1), (1, 0)):
                if y + dy < 6 and x + dx < 7 and r[y, x] != r[y + dy, x + dx]:
                    a, b = sorted((int(r[y, x]), int(r[y + dy, x + dx])))
                    pairs.add((a, b))
    assert [tuple(e) for e in build_adjacency(p).edges.tolist()] == sorted(pairs)
