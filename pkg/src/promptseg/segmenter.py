"""Deterministic segmentation backend driven by user prompts.

Four prompt kinds, each carrying a positive (add) or negative (remove)
polarity:

* point    — tolerance-bounded region growing from one seed
* scribble — the same growth seeded by every stroke voxel
* bbox     — Otsu threshold over the box's intensity histogram
* lasso    — even-odd polygon fill on a single slice

The prompt region depends only on the image and the prompt, never on the
input mask, so applying the same prompt twice is idempotent. Positive
prompts union the region into the mask, negative prompts subtract it.

Region growing is breadth-first over the 6-connected voxel graph. A voxel
is admitted when its intensity lies within ``tolerance`` of the seed whose
wavefront reaches it first (ties: seed list order, then neighbor order
-x,+x,-y,+y,-z,+z) and its BFS depth from that seed is at most ``radius``.
Voxel spacing is ignored; distances are graph hops.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar, Protocol, Sequence, Union, runtime_checkable

import numpy as np

from .volume import Mask3D, Volume3D

HISTOGRAM_BINS = 256
NEIGHBOR_OFFSETS = ((-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1))

Coord = tuple[int, int, int]


class SegmenterError(ValueError):
    pass


class OutOfBounds(SegmenterError):
    pass


class DimsMismatch(SegmenterError):
    pass


class DegeneratePolygon(SegmenterError):
    pass


class EmptyHistogram(SegmenterError):
    pass


class InvalidPrompt(SegmenterError):
    pass


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Axis(str, Enum):
    X = "x"
    Y = "y"
    Z = "z"


@dataclass(frozen=True)
class PointPrompt:
    coord: Coord
    polarity: Polarity = Polarity.POSITIVE


@dataclass(frozen=True)
class BBoxPrompt:
    """Axis-aligned box; both corners are inclusive."""

    min: Coord
    max: Coord
    polarity: Polarity = Polarity.POSITIVE


@dataclass(frozen=True)
class ScribblePrompt:
    points: tuple[Coord, ...]
    polarity: Polarity = Polarity.POSITIVE


@dataclass(frozen=True)
class LassoPrompt:
    """Closed polygon filled on one slice perpendicular to ``axis``.

    In-plane pixel coords (a, b) map to voxels per axis:
    Z -> (a, b, slice), Y -> (a, slice, b), X -> (slice, a, b).
    """

    axis: Axis
    slice_index: int
    polygon: tuple[tuple[float, float], ...]
    polarity: Polarity = Polarity.POSITIVE


Prompt = Union[PointPrompt, BBoxPrompt, ScribblePrompt, LassoPrompt]


@dataclass(frozen=True)
class SegmenterParams:
    """Knobs of the reference backend.

    ``radius`` is a BFS depth bound in hops; None means unbounded.
    Connectivity (6-neighborhood) and histogram bins (256) are fixed.
    """

    tolerance: float = 10.0
    radius: int | None = None

    def __post_init__(self):
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.radius is not None and self.radius < 0:
            raise ValueError("radius must be >= 0 or None")


@runtime_checkable
class SegmenterBackend(Protocol):
    """One capability: compute the next mask from (image, mask, prompt).

    Implementations must be pure in those three inputs and state via
    ``thread_safe`` whether concurrent calls are allowed.
    """

    thread_safe: bool

    def apply(self, image: Volume3D, mask: Mask3D, prompt: Prompt) -> Mask3D: ...


def _check_coord(coord, dims) -> Coord:
    if len(coord) != 3:
        raise InvalidPrompt(f"coordinate needs 3 components, got {len(coord)}")
    i, j, k = (int(c) for c in coord)
    if not (0 <= i < dims[0] and 0 <= j < dims[1] and 0 <= k < dims[2]):
        raise OutOfBounds(f"voxel ({i}, {j}, {k}) outside dims {dims}")
    return (i, j, k)


def _flat_index(coord: Coord, dims) -> int:
    return coord[0] + dims[0] * (coord[1] + dims[1] * coord[2])


def region_grow(
    image: Volume3D,
    seeds: Sequence[Coord],
    tolerance: float,
    radius: int | None = None,
) -> set[Coord]:
    """Multi-source BFS region growing; returns the grown voxel set."""
    grown = _region_grow_flat(image, seeds, tolerance, radius)
    nx, ny, _ = image.dims
    flat = np.flatnonzero(grown)
    x = flat % nx
    y = (flat // nx) % ny
    z = flat // (nx * ny)
    return {(int(i), int(j), int(k)) for i, j, k in zip(x, y, z)}


def _region_grow_flat(image, seeds, tolerance, radius) -> np.ndarray:
    """Core growth; returns a flat bool array of claimed voxels.

    Level-synchronous but claim-order-exact: within a level, a voxel is
    claimed by the first admissible (frontier position, neighbor rank)
    candidate, which reproduces sequential BFS with the documented
    tie-breaks.
    """
    if not seeds:
        raise InvalidPrompt("need at least one seed")
    nx, ny, nz = image.dims
    n = nx * ny * nz
    checked = [_check_coord(s, image.dims) for s in seeds]
    seed_flat: list[int] = []
    seen: set[int] = set()
    for coord in checked:
        f = _flat_index(coord, image.dims)
        if f not in seen:
            seen.add(f)
            seed_flat.append(f)

    intensity = image.voxels.astype(np.float64, copy=False)
    claimed = np.zeros(n, dtype=bool)
    frontier = np.asarray(seed_flat, dtype=np.int64)
    claimed[frontier] = True
    seed_ref = intensity[frontier]  # intensity of each voxel's claiming seed

    plane = nx * ny
    depth = 0
    while frontier.size and (radius is None or depth < radius):
        x = frontier % nx
        y = (frontier // nx) % ny
        z = frontier // plane
        in_bounds = (x > 0, x < nx - 1, y > 0, y < ny - 1, z > 0, z < nz - 1)
        offsets = (-1, 1, -nx, nx, -plane, plane)

        targets: list[np.ndarray] = []
        refs: list[np.ndarray] = []
        keys: list[np.ndarray] = []
        for rank in range(6):
            pos = np.flatnonzero(in_bounds[rank])
            t = frontier[pos] + offsets[rank]
            keep = ~claimed[t]
            t, pos = t[keep], pos[keep]
            ref = seed_ref[pos]
            keep = np.abs(intensity[t] - ref) <= tolerance
            targets.append(t[keep])
            refs.append(ref[keep])
            keys.append(pos[keep] * 6 + rank)
        t_all = np.concatenate(targets)
        if not t_all.size:
            break
        ref_all = np.concatenate(refs)
        key_all = np.concatenate(keys)

        order = np.lexsort((key_all, t_all))
        t_sorted = t_all[order]
        first = np.ones(t_sorted.size, dtype=bool)
        first[1:] = t_sorted[1:] != t_sorted[:-1]
        winners = order[first]
        winners = winners[np.argsort(key_all[winners], kind="stable")]

        frontier = t_all[winners]
        seed_ref = ref_all[winners]
        claimed[frontier] = True
        depth += 1
    return claimed


def otsu_threshold(histogram: Sequence[int], lo: float, hi: float) -> float:
    """Histogram cut maximizing between-class variance, in intensity units.

    Scans the 255 cut positions between adjacent bins with exact integer
    arithmetic, so ties resolve deterministically to the smallest cut. The
    returned value is the intensity of the first upper-class bin, with the
    256 bins spanning lo..hi linearly. Degenerate histograms (all mass in
    one bin) return ``lo`` so the whole range thresholds as foreground.
    """
    counts = [int(c) for c in histogram]
    if len(counts) != HISTOGRAM_BINS:
        raise ValueError(f"need {HISTOGRAM_BINS} bins, got {len(counts)}")
    if any(c < 0 for c in counts):
        raise ValueError("histogram counts must be non-negative")
    if not np.isfinite(lo) or not np.isfinite(hi) or hi < lo:
        raise ValueError(f"bad value range [{lo}, {hi}]")
    total = sum(counts)
    if total == 0:
        raise EmptyHistogram("all counts are zero")
    moment = sum(i * c for i, c in enumerate(counts))

    # Between-class variance at cut c is (S0*w1 - S1*w0)^2 / (w0*w1); compare
    # candidates as exact fractions to keep the smallest-cut tie rule honest.
    best_cut = None
    best_num = 0
    best_den = 1
    w0 = 0
    s0 = 0
    for cut in range(1, HISTOGRAM_BINS):
        w0 += counts[cut - 1]
        s0 += (cut - 1) * counts[cut - 1]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        num = (s0 * w1 - (moment - s0) * w0) ** 2
        if num * best_den > best_num * (w0 * w1):
            best_cut = cut
            best_num = num
            best_den = w0 * w1
    if best_cut is None or best_num == 0:
        return float(lo)
    return float(lo) + best_cut * (float(hi) - float(lo)) / (HISTOGRAM_BINS - 1)


def rasterize_polygon(
    polygon: Sequence[tuple[float, float]],
    plane_dims: tuple[int, int],
) -> np.ndarray:
    """Fill a polygon on a (w, h) pixel grid; returns bool array indexed [a, b].

    Pixel (a, b) is set when its center (a+0.5, b+0.5) is inside under the
    even-odd rule. Crossings are counted half-open in y (y_min <= yc < y_max)
    and inclusive toward +x (center exactly on an edge counts as covered by
    the region to its left), so abutting polygons never claim a pixel twice.
    """
    pts = [(float(u), float(v)) for u, v in polygon]
    if len(pts) < 3:
        raise DegeneratePolygon(f"need >= 3 vertices, got {len(pts)}")
    area2 = 0.0
    for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
        area2 += x1 * y2 - x2 * y1
    if area2 == 0.0:
        raise DegeneratePolygon("polygon has zero area")

    w, h = int(plane_dims[0]), int(plane_dims[1])
    out = np.zeros((w, h), dtype=bool)
    centers = np.arange(w, dtype=np.float64) + 0.5
    for b in range(h):
        yc = b + 0.5
        crossings = np.zeros(w, dtype=np.int64)
        for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
            if y1 == y2:
                continue
            upward = y2 > y1
            ylo, yhi = (y1, y2) if upward else (y2, y1)
            if not (ylo <= yc < yhi):
                continue
            det = (x2 - x1) * (yc - y1) - (y2 - y1) * (centers - x1)
            crossings += (det >= 0.0) if upward else (det <= 0.0)
        out[:, b] = (crossings & 1).astype(bool)
    return out


def _box_region(image: Volume3D, prompt: BBoxPrompt) -> np.ndarray:
    lo_corner = _check_coord(prompt.min, image.dims)
    hi_corner = _check_coord(prompt.max, image.dims)
    if any(a > b for a, b in zip(lo_corner, hi_corner)):
        raise InvalidPrompt(f"box min {lo_corner} exceeds max {hi_corner}")
    box = tuple(slice(a, b + 1) for a, b in zip(lo_corner, hi_corner))
    values = image.as_xyz()[box].astype(np.float64)
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        threshold = lo
    else:
        counts, _ = np.histogram(values, bins=HISTOGRAM_BINS, range=(lo, hi))
        threshold = otsu_threshold(counts.tolist(), lo, hi)
    region = np.zeros(image.dims, dtype=bool)
    region[box] = values >= threshold
    return region.transpose(2, 1, 0).reshape(-1)


def _lasso_region(image: Volume3D, prompt: LassoPrompt) -> np.ndarray:
    nx, ny, nz = image.dims
    axis = Axis(prompt.axis)
    extent = {Axis.X: nx, Axis.Y: ny, Axis.Z: nz}[axis]
    s = int(prompt.slice_index)
    if not 0 <= s < extent:
        raise OutOfBounds(f"slice {s} outside axis {axis.value} extent {extent}")
    plane = {Axis.Z: (nx, ny), Axis.Y: (nx, nz), Axis.X: (ny, nz)}[axis]
    bitmap = rasterize_polygon(prompt.polygon, plane)
    region = np.zeros(image.dims, dtype=bool)
    if axis is Axis.Z:
        region[:, :, s] = bitmap
    elif axis is Axis.Y:
        region[:, s, :] = bitmap
    else:
        region[s, :, :] = bitmap
    return region.transpose(2, 1, 0).reshape(-1)


def prompt_region(image: Volume3D, prompt: Prompt, params: SegmenterParams) -> np.ndarray:
    """Flat bool array of the voxels a prompt selects; mask-independent."""
    if isinstance(prompt, PointPrompt):
        return _region_grow_flat(image, [prompt.coord], params.tolerance, params.radius)
    if isinstance(prompt, ScribblePrompt):
        if not prompt.points:
            raise InvalidPrompt("scribble needs at least one point")
        return _region_grow_flat(image, list(prompt.points), params.tolerance, params.radius)
    if isinstance(prompt, BBoxPrompt):
        return _box_region(image, prompt)
    if isinstance(prompt, LassoPrompt):
        return _lasso_region(image, prompt)
    raise InvalidPrompt(f"unknown prompt type {type(prompt).__name__}")


def apply_prompt(
    image: Volume3D,
    mask: Mask3D,
    prompt: Prompt,
    params: SegmenterParams | None = None,
) -> Mask3D:
    """Union (positive) or subtract (negative) the prompt region into the mask."""
    if mask.dims != image.dims:
        raise DimsMismatch(f"mask dims {mask.dims} != image dims {image.dims}")
    params = params or SegmenterParams()
    region = prompt_region(image, prompt, params)
    polarity = Polarity(prompt.polarity)
    if polarity is Polarity.POSITIVE:
        bits = mask.bits | region
    else:
        bits = mask.bits & ~region
    return Mask3D(image.dims, bits.astype(np.uint8, copy=False))


@dataclass(frozen=True)
class ReferenceSegmenter:
    """The deterministic stand-in backend; safe to call concurrently."""

    params: SegmenterParams = field(default_factory=SegmenterParams)
    thread_safe: ClassVar[bool] = True

    def apply(self, image: Volume3D, mask: Mask3D, prompt: Prompt) -> Mask3D:
        return apply_prompt(image, mask, prompt, self.params)


# --- Wire representation of prompts (shared by server, SDK, and scripts) ---

_AXIS_VALUES = {a.value for a in Axis}


def prompt_to_dict(prompt: Prompt) -> dict:
    polarity = Polarity(prompt.polarity).value
    if isinstance(prompt, PointPrompt):
        return {"kind": "point", "polarity": polarity, "coord": list(prompt.coord)}
    if isinstance(prompt, BBoxPrompt):
        return {"kind": "bbox", "polarity": polarity, "min": list(prompt.min), "max": list(prompt.max)}
    if isinstance(prompt, ScribblePrompt):
        return {"kind": "scribble", "polarity": polarity, "points": [list(p) for p in prompt.points]}
    if isinstance(prompt, LassoPrompt):
        return {
            "kind": "lasso",
            "polarity": polarity,
            "axis": Axis(prompt.axis).value,
            "slice": int(prompt.slice_index),
            "polygon": [[float(u), float(v)] for u, v in prompt.polygon],
        }
    raise InvalidPrompt(f"unknown prompt type {type(prompt).__name__}")


def _int_triple(value, what: str) -> Coord:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise InvalidPrompt(f"{what} must be a 3-element array")
    try:
        return tuple(int(c) for c in value)
    except (TypeError, ValueError) as exc:
        raise InvalidPrompt(f"{what} must hold integers") from exc


def prompt_from_dict(payload) -> Prompt:
    if not isinstance(payload, dict):
        raise InvalidPrompt("prompt must be an object")
    kind = payload.get("kind")
    raw_polarity = payload.get("polarity", "positive")
    try:
        polarity = Polarity(raw_polarity)
    except ValueError as exc:
        raise InvalidPrompt(f"bad polarity {raw_polarity!r}") from exc
    if kind == "point":
        return PointPrompt(_int_triple(payload.get("coord"), "coord"), polarity)
    if kind == "bbox":
        return BBoxPrompt(_int_triple(payload.get("min"), "min"), _int_triple(payload.get("max"), "max"), polarity)
    if kind == "scribble":
        points = payload.get("points")
        if not isinstance(points, list) or not points:
            raise InvalidPrompt("points must be a non-empty array")
        return ScribblePrompt(tuple(_int_triple(p, "scribble point") for p in points), polarity)
    if kind == "lasso":
        axis = payload.get("axis")
        if axis not in _AXIS_VALUES:
            raise InvalidPrompt(f"bad axis {axis!r}")
        slice_index = payload.get("slice")
        if not isinstance(slice_index, int) or isinstance(slice_index, bool):
            raise InvalidPrompt("slice must be an integer")
        polygon = payload.get("polygon")
        if not isinstance(polygon, list) or len(polygon) < 3:
            raise InvalidPrompt("polygon must be an array of >= 3 points")
        verts = []
        for p in polygon:
            if not isinstance(p, (list, tuple)) or len(p) != 2:
                raise InvalidPrompt("polygon points must be 2-element arrays")
            try:
                verts.append((float(p[0]), float(p[1])))
            except (TypeError, ValueError) as exc:
                raise InvalidPrompt("polygon points must be numeric") from exc
        return LassoPrompt(Axis(axis), slice_index, tuple(verts), polarity)
    raise InvalidPrompt(f"unknown prompt kind {kind!r}")
