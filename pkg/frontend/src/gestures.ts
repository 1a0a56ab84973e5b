/**
 * Pointer traces to prompts. Everything here is a pure function of the
 * recorded plane coordinates, so replaying a trace yields byte-identical
 * prompt payloads.
 *
 * click            -> point prompt at the voxel under the cursor
 * drag rectangle   -> bbox prompt (single slice thick; a depth option
 *                     extends it symmetrically along the viewing axis)
 * freehand stroke  -> scribble prompt (sampled voxel path, deduplicated)
 * closed freehand  -> lasso polygon on the current slice
 */

import type { Axis, Dims, Polarity, Prompt, Tool, Vec3 } from "./model.js";
import { axisExtent, planeDims, planeToVoxel } from "./model.js";

export interface PlanePoint {
  a: number;
  b: number;
}

const CLICK_SLOP = 0.75; // plane units; below this a drag counts as a click

function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}

/** Canvas pixel -> continuous plane coords, clamped onto the slice. */
export function canvasToPlane(
  canvasX: number,
  canvasY: number,
  canvasWidth: number,
  canvasHeight: number,
  dims: Dims,
  axis: Axis,
): PlanePoint {
  const [w, h] = planeDims(dims, axis);
  const a = clamp((canvasX / canvasWidth) * w, 0, w - 1e-6);
  const b = clamp((canvasY / canvasHeight) * h, 0, h - 1e-6);
  return { a, b };
}

export function planePointToVoxel(point: PlanePoint, dims: Dims, axis: Axis, slice: number): Vec3 {
  const [w, h] = planeDims(dims, axis);
  const a = clamp(Math.floor(point.a), 0, w - 1);
  const b = clamp(Math.floor(point.b), 0, h - 1);
  return planeToVoxel(axis, slice, a, b);
}

export interface GestureContext {
  tool: Tool;
  polarity: Polarity;
  axis: Axis;
  slice: number;
  dims: Dims;
  bboxDepth: number; // extra slices on each side of the current one
}

/** Turn a completed pointer trace (down..up, plane coords) into a prompt. */
export function traceToPrompt(trace: PlanePoint[], context: GestureContext): Prompt | null {
  if (trace.length === 0 || context.tool === "none") return null;
  const { tool, polarity, axis, slice, dims } = context;
  const first = trace[0];
  const last = trace[trace.length - 1];

  if (tool === "point") {
    return { kind: "point", polarity, coord: planePointToVoxel(first, dims, axis, slice) };
  }

  if (tool === "bbox") {
    const span = Math.max(Math.abs(last.a - first.a), Math.abs(last.b - first.b));
    const lowPoint = { a: Math.min(first.a, last.a), b: Math.min(first.b, last.b) };
    const highPoint = { a: Math.max(first.a, last.a), b: Math.max(first.b, last.b) };
    if (span < CLICK_SLOP) return null; // a zero-area drag is not a box
    const low = planePointToVoxel(lowPoint, dims, axis, slice);
    const high = planePointToVoxel(highPoint, dims, axis, slice);
    const depth = Math.max(0, Math.floor(context.bboxDepth));
    const axisIndex = axis === "x" ? 0 : axis === "y" ? 1 : 2;
    low[axisIndex] = clamp(slice - depth, 0, axisExtent(dims, axis) - 1);
    high[axisIndex] = clamp(slice + depth, 0, axisExtent(dims, axis) - 1);
    return { kind: "bbox", polarity, min: low, max: high };
  }

  if (tool === "scribble") {
    const points: Vec3[] = [];
    let previous: string | null = null;
    for (const sample of trace) {
      const voxel = planePointToVoxel(sample, dims, axis, slice);
      const key = voxel.join(",");
      if (key !== previous) {
        points.push(voxel);
        previous = key;
      }
    }
    return { kind: "scribble", polarity, points };
  }

  // lasso: the polygon is the trace itself (closed implicitly by fill rule)
  if (trace.length < 3) return null;
  const polygon = trace.map((p) => [p.a, p.b] as [number, number]);
  return { kind: "lasso", polarity, axis, slice, polygon };
}
