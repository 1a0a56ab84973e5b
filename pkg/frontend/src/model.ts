export type Dims = [number, number, number];
export type Vec3 = [number, number, number];
export type Axis = "x" | "y" | "z";
export type Polarity = "positive" | "negative";
export type Dtype = "U8" | "I16" | "U16" | "F32";
export type Tool = "point" | "bbox" | "scribble" | "lasso" | "none";

export type VoxelArray = Uint8Array | Int16Array | Uint16Array | Float32Array;

/** Dense scalar volume; voxels flat in x-fastest order (i + nx*(j + ny*k)). */
export interface Volume {
  dims: Dims;
  spacing: [number, number, number];
  dtype: Dtype;
  voxels: VoxelArray;
}

/** Binary mask congruent with a volume; same x-fastest layout. */
export interface Mask {
  dims: Dims;
  bits: Uint8Array;
}

export type Prompt =
  | { kind: "point"; polarity: Polarity; coord: Vec3 }
  | { kind: "bbox"; polarity: Polarity; min: Vec3; max: Vec3 }
  | { kind: "scribble"; polarity: Polarity; points: Vec3[] }
  | { kind: "lasso"; polarity: Polarity; axis: Axis; slice: number; polygon: [number, number][] };

export interface UiSegment {
  name: string;
  color: [number, number, number];
  mask: Mask;
  digest: string;
}

export interface ViewState {
  volume: Volume | null;
  axis: Axis;
  sliceIndex: number;
  windowMin: number;
  windowMax: number;
  overlayOpacity: number;
  tool: Tool;
  polarity: Polarity;
  segments: UiSegment[];
  activeSegment: number;
  showInactiveSegments: boolean;
}

export const SEGMENT_COLORS: [number, number, number][] = [
  [230, 75, 60],
  [60, 130, 230],
  [70, 190, 90],
  [240, 180, 40],
  [180, 90, 220],
  [50, 200, 200],
  [235, 120, 180],
  [150, 160, 60],
];

export function initialViewState(): ViewState {
  return {
    volume: null,
    axis: "z",
    sliceIndex: 0,
    windowMin: 0,
    windowMax: 255,
    overlayOpacity: 0.5,
    tool: "point",
    polarity: "positive",
    segments: [],
    activeSegment: 0,
    showInactiveSegments: true,
  };
}

export function voxelCount(dims: Dims): number {
  return dims[0] * dims[1] * dims[2];
}

export function zeroMask(dims: Dims): Mask {
  return { dims, bits: new Uint8Array(voxelCount(dims)) };
}

export function axisExtent(dims: Dims, axis: Axis): number {
  return axis === "x" ? dims[0] : axis === "y" ? dims[1] : dims[2];
}

/**
 * In-plane extents for a slice perpendicular to `axis`.
 * Plane coords (a, b) map to voxels: z -> (a, b, s); y -> (a, s, b); x -> (s, a, b).
 */
export function planeDims(dims: Dims, axis: Axis): [number, number] {
  if (axis === "z") return [dims[0], dims[1]];
  if (axis === "y") return [dims[0], dims[2]];
  return [dims[1], dims[2]];
}

export function planeToVoxel(axis: Axis, slice: number, a: number, b: number): Vec3 {
  if (axis === "z") return [a, b, slice];
  if (axis === "y") return [a, slice, b];
  return [slice, a, b];
}

export function volumeIntensityRange(volume: Volume): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < volume.voxels.length; i++) {
    const v = volume.voxels[i];
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return [lo, hi];
}
