import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptseg.segmenter import (
    Axis,
    BBoxPrompt,
    DegeneratePolygon,
    DimsMismatch,
    EmptyHistogram,
    InvalidPrompt,
    LassoPrompt,
    OutOfBounds,
    PointPrompt,
    Polarity,
    ReferenceSegmenter,
    ScribblePrompt,
    SegmenterBackend,
    SegmenterParams,
    apply_prompt,
    otsu_threshold,
    prompt_from_dict,
    prompt_to_dict,
    rasterize_polygon,
    region_grow,
)
from promptseg.volume import Mask3D

from .conftest import make_volume
from .oracles import grow_bruteforce, otsu_bruteforce, point_in_polygon

GROW0 = SegmenterParams(tolerance=0.0, radius=None)


def random_grow_case(rng: np.random.Generator):
    dims = tuple(int(d) for d in rng.integers(1, 9, size=3))
    n = dims[0] * dims[1] * dims[2]
    # few intensity levels so the tolerance boundary is actually exercised
    vox = (rng.integers(0, 5, size=n) * 2).astype(np.uint8)
    image = make_volume(dims, vox)
    n_seeds = int(rng.integers(1, 5))
    seeds = [tuple(int(rng.integers(0, d)) for d in dims) for _ in range(n_seeds)]
    tolerance = float(rng.choice([0.0, 1.0, 2.0, 4.0, 255.0]))
    radius = None if rng.random() < 0.5 else int(rng.integers(0, 7))
    return image, seeds, tolerance, radius


class TestRegionGrow:
    def test_blocked_by_intensity_step(self):
        image = make_volume((4, 1, 1), [0, 0, 100, 0])
        assert region_grow(image, [(0, 0, 0)], 0.0, None) == {(0, 0, 0), (1, 0, 0)}

    def test_uniform_image_floods_everywhere(self):
        image = make_volume((3, 3, 3), [5] * 27)
        assert len(region_grow(image, [(1, 1, 1)], 0.0, None)) == 27

    def test_radius_zero_admits_only_seeds(self):
        image = make_volume((3, 3, 3), list(range(27)))
        assert region_grow(image, [(2, 0, 1)], 1000.0, 0) == {(2, 0, 1)}

    def test_seeds_always_included(self):
        image = make_volume((2, 1, 1), [0, 200])
        assert region_grow(image, [(0, 0, 0), (1, 0, 0)], 0.0, None) == {(0, 0, 0), (1, 0, 0)}

    def test_out_of_bounds_seed(self):
        image = make_volume((4, 1, 1), [0, 0, 0, 0])
        with pytest.raises(OutOfBounds):
            region_grow(image, [(9, 0, 0)], 0.0, None)

    def test_first_reaching_seed_sets_reference(self):
        # seed A at intensity 0 reaches the middle voxel (intensity 1) first;
        # growth past it must compare against A's intensity, not the voxel's
        image = make_volume((5, 1, 1), [0, 1, 2, 3, 9])
        grown = region_grow(image, [(0, 0, 0)], 1.0, None)
        assert grown == {(0, 0, 0), (1, 0, 0)}

    @settings(max_examples=120, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_matches_bruteforce_oracle(self, seed):
        rng = np.random.default_rng(seed)
        image, seeds, tolerance, radius = random_grow_case(rng)
        got = region_grow(image, seeds, tolerance, radius)
        want = grow_bruteforce(image.dims, image.voxels, seeds, tolerance, radius)
        assert got == want


class TestOtsuThreshold:
    def test_mass_at_histogram_edges(self):
        counts = [0] * 256
        counts[0] = 10
        counts[255] = 10
        assert otsu_threshold(counts, 0.0, 255.0) == 1.0

    def test_two_clusters(self):
        counts = [0] * 256
        counts[50] = 7
        counts[200] = 7
        assert otsu_threshold(counts, 0.0, 255.0) == 51.0

    def test_single_occupied_bin_returns_lo(self):
        counts = [0] * 256
        counts[77] = 5
        assert otsu_threshold(counts, 3.5, 9.0) == 3.5

    def test_empty_histogram(self):
        with pytest.raises(EmptyHistogram):
            otsu_threshold([0] * 256, 0.0, 1.0)

    @settings(max_examples=150, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_matches_exhaustive_scan(self, seed):
        rng = np.random.default_rng(seed)
        counts = np.zeros(256, dtype=int)
        occupied = rng.integers(1, 9)
        bins = rng.integers(0, 256, size=occupied)
        counts[bins] = rng.integers(1, 50, size=occupied)
        lo, hi = sorted(rng.uniform(-100, 300, size=2))
        got = otsu_threshold(counts.tolist(), lo, hi)
        want = otsu_bruteforce(counts.tolist(), lo, hi)
        assert got == pytest.approx(want, abs=1e-12)


def simple_polygon(rng: np.random.Generator, span=32.0):
    """Star-shaped (hence simple) polygon with dyadic coords; never zero area."""
    while True:
        k = int(rng.integers(3, 9))
        pts = rng.integers(-16, int(span * 8) + 16, size=(k, 2)) / 8.0
        center = pts.mean(axis=0)
        order = np.argsort(np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0]))
        pts = pts[order]
        area2 = 0.0
        for (x1, y1), (x2, y2) in zip(pts, np.roll(pts, -1, axis=0)):
            area2 += x1 * y2 - x2 * y1
        if area2 != 0.0:
            return [(float(x), float(y)) for x, y in pts]


class TestRasterizePolygon:
    def test_axis_aligned_square(self):
        bitmap = rasterize_polygon([(0, 0), (4, 0), (4, 4), (0, 4)], (8, 8))
        assert bitmap.sum() == 16
        assert bitmap[:4, :4].all()

    def test_triangle_half_open_boundary(self):
        bitmap = rasterize_polygon([(0, 0), (2, 0), (0, 2)], (4, 4))
        assert {(int(a), int(b)) for a, b in zip(*np.nonzero(bitmap))} == {(0, 0), (1, 0), (0, 1)}

    def test_orientation_free(self):
        poly = [(0.5, 0.5), (5.0, 1.0), (4.0, 6.5), (1.0, 5.0)]
        cw = rasterize_polygon(poly[::-1], (8, 8))
        ccw = rasterize_polygon(poly, (8, 8))
        assert (cw == ccw).all()

    def test_adjacent_polygons_never_double_claim(self):
        left = rasterize_polygon([(0, 0), (3, 0), (3, 4), (0, 4)], (8, 8))
        right = rasterize_polygon([(3, 0), (6, 0), (6, 4), (3, 4)], (8, 8))
        assert not (left & right).any()
        assert (left | right).sum() == 24

    def test_degenerate_polygon(self):
        with pytest.raises(DegeneratePolygon):
            rasterize_polygon([(0, 0), (1, 1), (2, 2)], (4, 4))
        with pytest.raises(DegeneratePolygon):
            rasterize_polygon([(0, 0), (1, 1)], (4, 4))

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_matches_point_in_polygon_oracle(self, seed):
        rng = np.random.default_rng(seed)
        poly = simple_polygon(rng, span=14.0)
        w, h = int(rng.integers(1, 17)), int(rng.integers(1, 17))
        bitmap = rasterize_polygon(poly, (w, h))
        for a in range(w):
            for b in range(h):
                assert bitmap[a, b] == point_in_polygon(a + 0.5, b + 0.5, poly), (a, b, poly)


class TestApplyPrompt:
    def test_negative_on_empty_mask_is_noop(self):
        image = make_volume((4, 1, 1), [0, 0, 100, 0])
        mask = Mask3D.zeros(image.dims)
        out = apply_prompt(image, mask, PointPrompt((0, 0, 0), Polarity.NEGATIVE), GROW0)
        assert out == mask

    def test_positive_bbox_on_constant_region(self):
        image = make_volume((4, 4, 4), [7] * 64)
        mask = Mask3D.zeros(image.dims)
        out = apply_prompt(image, mask, BBoxPrompt((1, 1, 1), (2, 3, 2)), GROW0)
        region = out.as_xyz()
        assert region[1:3, 1:4, 1:3].all()
        assert out.count() == 2 * 3 * 2

    def test_positive_point_derived_case(self):
        image = make_volume((4, 1, 1), [0, 0, 100, 0])
        out = apply_prompt(image, Mask3D.zeros(image.dims), PointPrompt((0, 0, 0)), GROW0)
        assert out.bits.tolist() == [1, 1, 0, 0]

    def test_bbox_otsu_splits_bimodal_box(self):
        values = np.zeros((4, 4, 1), dtype=np.uint8)
        values[2:, :, :] = 200
        image = make_volume((4, 4, 1), values.transpose(2, 1, 0).reshape(-1))
        out = apply_prompt(image, Mask3D.zeros(image.dims), BBoxPrompt((0, 0, 0), (3, 3, 0)), GROW0)
        assert out.as_xyz()[2:, :, 0].all()
        assert not out.as_xyz()[:2, :, 0].any()

    def test_input_mask_never_mutated(self):
        image = make_volume((4, 1, 1), [0, 0, 0, 0])
        mask = Mask3D.zeros(image.dims)
        before = mask.bits.tolist()
        apply_prompt(image, mask, PointPrompt((0, 0, 0)), GROW0)
        assert mask.bits.tolist() == before

    def test_dims_mismatch(self):
        image = make_volume((4, 1, 1), [0] * 4)
        with pytest.raises(DimsMismatch):
            apply_prompt(image, Mask3D.zeros((2, 1, 1)), PointPrompt((0, 0, 0)), GROW0)

    def test_bbox_min_exceeding_max(self):
        image = make_volume((4, 4, 4), [0] * 64)
        with pytest.raises(InvalidPrompt):
            apply_prompt(image, Mask3D.zeros(image.dims), BBoxPrompt((2, 0, 0), (1, 3, 3)), GROW0)

    def test_point_out_of_bounds(self):
        image = make_volume((4, 1, 1), [0] * 4)
        with pytest.raises(OutOfBounds):
            apply_prompt(image, Mask3D.zeros(image.dims), PointPrompt((9, 0, 0)), GROW0)

    def test_lasso_slice_out_of_bounds(self):
        image = make_volume((4, 4, 2), [0] * 32)
        prompt = LassoPrompt(Axis.Z, 5, ((0, 0), (3, 0), (0, 3)))
        with pytest.raises(OutOfBounds):
            apply_prompt(image, Mask3D.zeros(image.dims), prompt, GROW0)

    @pytest.mark.parametrize(
        "axis,expected_voxel",
        [
            (Axis.Z, (0, 1, 2)),  # plane coords (a, b) = (x, y) on slice z
            (Axis.Y, (0, 2, 1)),  # plane coords (a, b) = (x, z) on slice y
            (Axis.X, (2, 0, 1)),  # plane coords (a, b) = (y, z) on slice x
        ],
    )
    def test_lasso_plane_axis_mapping(self, axis, expected_voxel):
        image = make_volume((3, 4, 5), [0] * 60)
        # unit square around pixel (0, 1): only center (0.5, 1.5) falls inside
        prompt = LassoPrompt(axis, 2, ((0.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0)))
        out = apply_prompt(image, Mask3D.zeros(image.dims), prompt, GROW0)
        set_voxels = list(zip(*np.nonzero(out.as_xyz())))
        assert set_voxels == [expected_voxel]

    def test_scribble_single_point_equals_point(self):
        rng = np.random.default_rng(21)
        vox = rng.integers(0, 4, size=4 * 3 * 2) * 3
        image = make_volume((4, 3, 2), vox)
        mask = Mask3D.zeros(image.dims)
        params = SegmenterParams(3.0, None)
        a = apply_prompt(image, mask, PointPrompt((1, 2, 1)), params)
        b = apply_prompt(image, mask, ScribblePrompt(((1, 2, 1),)), params)
        assert a == b

    def test_scribble_multi_seed(self):
        image = make_volume((5, 1, 1), [0, 50, 0, 50, 0])
        out = apply_prompt(image, Mask3D.zeros(image.dims), ScribblePrompt(((0, 0, 0), (2, 0, 0))), GROW0)
        assert out.bits.tolist() == [1, 0, 1, 0, 0]


def random_prompt(rng: np.random.Generator, dims):
    kind = rng.choice(["point", "bbox", "scribble", "lasso"])
    polarity = Polarity.POSITIVE if rng.random() < 0.5 else Polarity.NEGATIVE
    def coord():
        return tuple(int(rng.integers(0, d)) for d in dims)
    if kind == "point":
        return PointPrompt(coord(), polarity)
    if kind == "scribble":
        return ScribblePrompt(tuple(coord() for _ in range(rng.integers(1, 4))), polarity)
    if kind == "bbox":
        a, b = coord(), coord()
        lo = tuple(min(x, y) for x, y in zip(a, b))
        hi = tuple(max(x, y) for x, y in zip(a, b))
        return BBoxPrompt(lo, hi, polarity)
    axis = Axis(str(rng.choice(["x", "y", "z"])))
    extent = {Axis.X: dims[0], Axis.Y: dims[1], Axis.Z: dims[2]}[axis]
    return LassoPrompt(axis, int(rng.integers(0, extent)), tuple(simple_polygon(rng, span=6.0)), polarity)


def random_case(seed):
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in rng.integers(1, 7, size=3))
    n = dims[0] * dims[1] * dims[2]
    image = make_volume(dims, (rng.integers(0, 4, size=n) * 5).astype(np.uint8))
    mask = Mask3D(dims, rng.integers(0, 2, size=n, dtype=np.uint8))
    prompt = random_prompt(rng, dims)
    params = SegmenterParams(float(rng.choice([0.0, 5.0, 100.0])), None if rng.random() < 0.7 else int(rng.integers(0, 5)))
    return image, mask, prompt, params


class TestPromptProperties:
    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_locality_bbox_and_lasso(self, seed):
        image, mask, prompt, params = random_case(seed)
        out = apply_prompt(image, mask, prompt, params)
        diff3 = (out.as_xyz() != mask.as_xyz())
        if isinstance(prompt, BBoxPrompt):
            outside = diff3.copy()
            outside[
                prompt.min[0] : prompt.max[0] + 1,
                prompt.min[1] : prompt.max[1] + 1,
                prompt.min[2] : prompt.max[2] + 1,
            ] = False
            assert not outside.any()
        elif isinstance(prompt, LassoPrompt):
            outside = diff3.copy()
            axis = Axis(prompt.axis)
            if axis is Axis.Z:
                outside[:, :, prompt.slice_index] = False
            elif axis is Axis.Y:
                outside[:, prompt.slice_index, :] = False
            else:
                outside[prompt.slice_index, :, :] = False
            assert not outside.any()

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_polarity_duality(self, seed):
        image, mask, prompt, params = random_case(seed)
        import dataclasses

        positive = dataclasses.replace(prompt, polarity=Polarity.POSITIVE)
        negative = dataclasses.replace(prompt, polarity=Polarity.NEGATIVE)
        added = apply_prompt(image, mask, positive, params)
        removed = apply_prompt(image, added, negative, params)
        # removing the same region takes away at least everything it added
        assert not (removed.bits & ~mask.bits).any()
        back = apply_prompt(image, removed, positive, params)
        assert not (mask.bits & ~back.bits & ~removed.bits).any()

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_idempotence(self, seed):
        image, mask, prompt, params = random_case(seed)
        once = apply_prompt(image, mask, prompt, params)
        twice = apply_prompt(image, once, prompt, params)
        assert once == twice

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_purity(self, seed):
        image, mask, prompt, params = random_case(seed)
        a = apply_prompt(image, mask, prompt, params)
        b = apply_prompt(image, mask, prompt, params)
        assert a.bits.tobytes() == b.bits.tobytes()


class TestBackendInterface:
    def test_reference_segmenter_is_a_backend(self):
        backend = ReferenceSegmenter()
        assert isinstance(backend, SegmenterBackend)
        assert backend.thread_safe is True

    def test_backend_output_dims(self):
        image = make_volume((3, 2, 1), [0] * 6)
        out = ReferenceSegmenter(GROW0).apply(image, Mask3D.zeros(image.dims), PointPrompt((0, 0, 0)))
        assert out.dims == image.dims


class TestPromptWireFormat:
    @settings(max_examples=80, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_dict_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        prompt = random_prompt(rng, (5, 6, 7))
        assert prompt_from_dict(prompt_to_dict(prompt)) == prompt

    def test_rejects_unknown_kind(self):
        with pytest.raises(InvalidPrompt):
            prompt_from_dict({"kind": "blob", "polarity": "positive"})

    def test_rejects_bad_polarity(self):
        with pytest.raises(InvalidPrompt):
            prompt_from_dict({"kind": "point", "polarity": "sideways", "coord": [0, 0, 0]})

    def test_rejects_short_polygon(self):
        with pytest.raises(InvalidPrompt):
            prompt_from_dict({"kind": "lasso", "polarity": "positive", "axis": "z", "slice": 0, "polygon": [[0, 0]]})
