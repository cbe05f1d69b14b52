import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ssc_place.exceptions import ShapeError
from ssc_place.point_model import LabeledCloud, PriorityTable, SemanticClass as C, default_priority
from ssc_place.ssc import (
    SscDescriptor,
    SscParams,
    best_column_shift,
    block_index,
    encode,
    encode_height,
    similarity,
)

from oracles import encode_oracle, similarity_oracle

SMALL = SscParams(ns=12, nr=5, rmax=10.0)


def desc(grid, params=None):
    grid = np.asarray(grid, dtype=np.uint8)
    return SscDescriptor(grid, params or SscParams(grid.shape[1], grid.shape[0], 50.0))


@pytest.mark.parametrize("r, phi, expected", [
    (0.5, 0.0, (1, 181)),
    (0.0, -math.pi, (1, 1)),
    (49.999, math.pi - 1e-9, (50, 360)),
    (10.2, 0.0, (11, 181)),
    (1.0, math.pi, (2, 1)),
])
def test_block_index(r, phi, expected):
    assert block_index(r, phi) == expected


def test_block_index_out_of_range():
    assert block_index(50.0, 0.3) is None
    assert block_index(80.0, -2.0) is None
    with pytest.raises(ValueError):
        block_index(-1.0, 0.0)


def test_params_validation():
    for kw in (dict(ns=0), dict(nr=0), dict(rmax=0.0)):
        with pytest.raises(ValueError):
            SscParams(**kw)


def test_sign_beats_building_in_one_block():
    cloud = LabeledCloud([[5.0, 0.1, 0.0], [5.1, 0.1, 2.0]], [C.BUILDING, C.TRAFFIC_SIGN])
    d = encode(cloud)
    assert np.count_nonzero(d.grid) == 1
    assert d.grid.max() == C.TRAFFIC_SIGN


def test_empty_cloud_encodes_to_zeros():
    d = encode(LabeledCloud.empty())
    assert d.grid.shape == (50, 360) and not d.grid.any()
    assert d.occupancy == 0.0


def test_single_car_point():
    d = encode(LabeledCloud([[10.2, 0.0, 0.0]], [C.CAR]))
    rows, cols = np.nonzero(d.grid)
    # 1-based (11, 181)
    assert (rows.tolist(), cols.tolist()) == ([10], [180])
    assert d.grid[10, 180] == C.CAR
    assert d.class_counts() == {"car": 1}


def test_unlabeled_and_far_points_are_dropped():
    cloud = LabeledCloud([[1.0, 1.0, 0.0], [60.0, 0.0, 0.0], [0.0, 50.0, 0.0]], [C.UNLABELED, C.POLE, C.POLE])
    assert not encode(cloud).grid.any()


def test_similarity_examples():
    a = np.zeros((2, 3), np.uint8)
    b = np.zeros((2, 3), np.uint8)
    a[0, 0], a[0, 1] = C.CAR, C.ROAD
    b[0, 0], b[0, 1], b[1, 2] = C.CAR, C.BUILDING, C.POLE
    assert similarity(desc(a), desc(b)) == pytest.approx(1 / 3)
    assert similarity(desc(b), desc(b)) == 1.0
    c = np.zeros((2, 3), np.uint8)
    c[1, 0] = C.CAR
    assert similarity(desc(a), desc(c)) == 0.0
    assert similarity(desc(np.zeros((2, 3))), desc(np.zeros((2, 3)))) == 0.0


def test_similarity_shape_mismatch():
    with pytest.raises(ShapeError):
        similarity(desc(np.ones((2, 3))), desc(np.ones((3, 2))))


def test_descriptor_shape_must_match_params():
    with pytest.raises(ShapeError):
        SscDescriptor(np.zeros((3, 3)), SscParams(4, 3))


def test_binary_and_csv_round_trip(tmp_path, scene):
    d = encode(scene)
    blob = d.to_bytes()
    assert len(blob) == 8 + 50 * 360
    assert blob[:8] == (360).to_bytes(4, "little") + (50).to_bytes(4, "little")
    back = SscDescriptor.from_bytes(blob)
    assert np.array_equal(back.grid, d.grid) and back.params == d.params
    d.save(tmp_path / "d.ssc")
    assert np.array_equal(SscDescriptor.load(tmp_path / "d.ssc").grid, d.grid)
    assert np.array_equal(SscDescriptor.from_csv(d.to_csv()).grid, d.grid)


@pytest.mark.parametrize("blob", [b"\x01\x00", (4).to_bytes(4, "little") + (2).to_bytes(4, "little") + b"\0" * 7])
def test_truncated_blobs(blob):
    with pytest.raises(ShapeError):
        SscDescriptor.from_bytes(blob)


def test_height_variant_bins():
    cloud = LabeledCloud([[1.0, 0.0, -10.0], [3.0, 0.0, 0.0], [5.0, 0.0, 30.0]], [0, 0, 0])
    g = encode_height(cloud, SMALL).grid
    assert sorted(g[g > 0].tolist()) == [1, 6, 20]
    with pytest.raises(ValueError):
        encode_height(cloud, SMALL, n_bins=0)


def test_best_column_shift_undoes_a_roll(scene):
    d = encode(scene)
    rolled = desc(np.roll(d.grid, 17, axis=1))
    shift, score = best_column_shift(d, rolled)
    assert (shift, score) == (17, 1.0)
    assert np.array_equal(np.roll(rolled.grid, -shift, axis=1), d.grid)


class_codes = st.integers(0, 19)
grids = hnp.arrays(np.uint8, (4, 9), elements=st.sampled_from([0, 0, 0, 1, 9, 13, 16, 19]))


@given(grids, grids)
def test_similarity_symmetric_bounded_and_matches_oracle(a, b):
    s = similarity(desc(a), desc(b))
    assert s == similarity(desc(b), desc(a))
    assert 0.0 <= s <= 1.0
    assert s == pytest.approx(similarity_oracle(a, b), abs=0)
    if s == 1.0:
        assert np.array_equal(a, b)


@given(grids)
def test_self_similarity_is_one(a):
    if a.any():
        assert similarity(desc(a), desc(a)) == 1.0


point_lists = st.lists(
    st.tuples(st.floats(-12, 12), st.floats(-12, 12), st.floats(-2, 5), class_codes),
    min_size=0, max_size=120,
)


def to_cloud(pts):
    if not pts:
        return LabeledCloud.empty()
    return LabeledCloud([p[:3] for p in pts], [p[3] for p in pts])


@given(point_lists)
def test_encode_matches_loop_oracle(pts):
    cloud = to_cloud(pts)
    pr = default_priority()
    expected = encode_oracle(cloud.xyz, cloud.labels, pr.ranks, SMALL.nr, SMALL.ns, SMALL.rmax)
    assert np.array_equal(encode(cloud, SMALL, pr).grid, expected)


@given(point_lists, st.randoms(use_true_random=False))
def test_encode_ignores_point_order(pts, rnd):
    shuffled = list(pts)
    rnd.shuffle(shuffled)
    assert np.array_equal(encode(to_cloud(pts), SMALL).grid, encode(to_cloud(shuffled), SMALL).grid)


def promoted(table: PriorityTable, cls: int) -> PriorityTable:
    """Swap ``cls`` with the class ranked directly above it."""
    ranks = list(table.ranks)
    r = ranks[cls]
    if r == 19:
        return table
    other = ranks.index(r + 1)
    ranks[cls], ranks[other] = r + 1, r
    return PriorityTable(tuple(ranks))


@given(point_lists, st.integers(1, 19), st.permutations(list(range(1, 20))))
def test_promoting_a_class_never_loses_its_cells(pts, cls, perm):
    cloud = to_cloud(pts)
    base = PriorityTable(tuple([0] + list(perm)))
    before = np.count_nonzero(encode(cloud, SMALL, base).grid == cls)
    after = np.count_nonzero(encode(cloud, SMALL, promoted(base, cls)).grid == cls)
    assert after >= before
