/**
 * Pure slice rendering: grayscale under window/level with segment masks
 * blended on top. Produces plain RGBA buffers so the pipeline is testable
 * without a canvas; the DOM shell only blits the result.
 */

import type { Axis, Mask, UiSegment, ViewState, Volume } from "./model.js";
import { planeDims, planeToVoxel } from "./model.js";

export interface SliceFrame {
  width: number;
  height: number;
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

function flatIndex(dims: [number, number, number], x: number, y: number, z: number): number {
  return x + dims[0] * (y + dims[1] * z);
}

/** Row-major (b * width + a) scalar slice through the volume. */
export function extractSlice(volume: Volume, axis: Axis, slice: number): Float32Array {
  const [w, h] = planeDims(volume.dims, axis);
  const out = new Float32Array(w * h);
  for (let b = 0; b < h; b++) {
    for (let a = 0; a < w; a++) {
      const [x, y, z] = planeToVoxel(axis, slice, a, b);
      out[b * w + a] = volume.voxels[flatIndex(volume.dims, x, y, z)];
    }
  }
  return out;
}

export function extractMaskSlice(mask: Mask, axis: Axis, slice: number): Uint8Array {
  const [w, h] = planeDims(mask.dims, axis);
  const out = new Uint8Array(w * h);
  for (let b = 0; b < h; b++) {
    for (let a = 0; a < w; a++) {
      const [x, y, z] = planeToVoxel(axis, slice, a, b);
      out[b * w + a] = mask.bits[flatIndex(mask.dims, x, y, z)];
    }
  }
  return out;
}

export function windowLevel(value: number, windowMin: number, windowMax: number): number {
  const span = windowMax - windowMin;
  if (span <= 0) return value >= windowMax ? 255 : 0;
  const t = (value - windowMin) / span;
  return Math.round(255 * Math.min(1, Math.max(0, t)));
}

function blend(
  base: [number, number, number],
  color: [number, number, number],
  alpha: number,
): [number, number, number] {
  return [
    Math.round(base[0] * (1 - alpha) + color[0] * alpha),
    Math.round(base[1] * (1 - alpha) + color[1] * alpha),
    Math.round(base[2] * (1 - alpha) + color[2] * alpha),
  ];
}

export function renderSlice(view: ViewState): SliceFrame {
  if (view.volume === null) throw new Error("no volume to render");
  const [w, h] = planeDims(view.volume.dims, view.axis);
  const values = extractSlice(view.volume, view.axis, view.sliceIndex);
  const overlays: { slice: Uint8Array; segment: UiSegment; alpha: number }[] = [];
  view.segments.forEach((segment, index) => {
    const active = index === view.activeSegment;
    if (!active && !view.showInactiveSegments) return;
    overlays.push({
      slice: extractMaskSlice(segment.mask, view.axis, view.sliceIndex),
      segment,
      alpha: active ? view.overlayOpacity : view.overlayOpacity / 2,
    });
  });
  const rgba = new Uint8ClampedArray(w * h * 4);
  for (let i = 0; i < w * h; i++) {
    const gray = windowLevel(values[i], view.windowMin, view.windowMax);
    let pixel: [number, number, number] = [gray, gray, gray];
    for (const overlay of overlays) {
      if (overlay.slice[i]) pixel = blend(pixel, overlay.segment.color, overlay.alpha);
    }
    rgba[4 * i] = pixel[0];
    rgba[4 * i + 1] = pixel[1];
    rgba[4 * i + 2] = pixel[2];
    rgba[4 * i + 3] = 255;
  }
  return { width: w, height: h, rgba };
}
