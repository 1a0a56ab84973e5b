/**
 * Minimal NIfTI-1 reader for files dropped onto the page. Single-file .nii
 * only, both byte orders, optionally gzipped. Parsed volumes are re-encoded
 * as SVOL1 before upload; intensity scaling (scl_slope/scl_inter) is ignored.
 */

import type { Dims, Dtype, Volume, VoxelArray } from "./model.js";
import { CodecError } from "./codec.js";

const HEADER_LEN = 348;
const DATATYPES: Record<number, Dtype> = { 2: "U8", 4: "I16", 512: "U16", 16: "F32" };
const BYTES_PER: Record<Dtype, number> = { U8: 1, I16: 2, U16: 2, F32: 4 };

export async function gunzip(bytes: Uint8Array): Promise<Uint8Array> {
  const stream = new Blob([bytes as BlobPart]).stream().pipeThrough(new DecompressionStream("gzip"));
  const buffer = await new Response(stream).arrayBuffer();
  return new Uint8Array(buffer);
}

export function looksGzipped(bytes: Uint8Array): boolean {
  return bytes.length >= 2 && bytes[0] === 0x1f && bytes[1] === 0x8b;
}

export async function parseNifti(raw: Uint8Array): Promise<Volume> {
  const bytes = looksGzipped(raw) ? await gunzip(raw) : raw;
  if (bytes.length < HEADER_LEN) throw new CodecError("BadHeader");
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);

  let little: boolean;
  if (view.getInt32(0, true) === HEADER_LEN) little = true;
  else if (view.getInt32(0, false) === HEADER_LEN) little = false;
  else throw new CodecError("BadHeader");

  const magicOk = bytes[344] === 0x6e && bytes[345] === 0x2b && bytes[346] === 0x31 && bytes[347] === 0;
  if (!magicOk) throw new CodecError("BadMagic");

  const dim = Array.from({ length: 8 }, (_, i) => view.getInt16(40 + 2 * i, little));
  const ndim = dim[0];
  if (ndim < 1 || ndim > 7) throw new CodecError("BadHeader");
  for (let i = 1; i <= ndim; i++) if (dim[i] < 1) throw new CodecError("BadHeader");
  for (let i = 4; i <= ndim; i++) if (dim[i] !== 1) throw new CodecError("BadHeader");
  const dims: Dims = [dim[1], ndim >= 2 ? dim[2] : 1, ndim >= 3 ? dim[3] : 1];

  const datatype = view.getInt16(70, little);
  const dtype = DATATYPES[datatype];
  if (dtype === undefined) throw new CodecError("UnsupportedDatatype");

  const spacing: [number, number, number] = [1, 1, 1];
  for (let axis = 1; axis <= 3; axis++) {
    const s = axis <= ndim ? view.getFloat32(76 + 4 * axis, little) : 1.0;
    if (!Number.isFinite(s) || s <= 0) throw new CodecError("NonPositivePixdim");
    spacing[axis - 1] = s;
  }

  const voxOffset = view.getFloat32(108, little);
  if (!Number.isFinite(voxOffset) || voxOffset !== Math.floor(voxOffset) || voxOffset < HEADER_LEN) {
    throw new CodecError("BadHeader");
  }

  const n = dims[0] * dims[1] * dims[2];
  const itemSize = BYTES_PER[dtype];
  const start = voxOffset;
  if (bytes.length < start + n * itemSize) throw new CodecError("TruncatedPayload");

  let voxels: VoxelArray;
  if (dtype === "U8") voxels = bytes.slice(start, start + n);
  else {
    const out = dtype === "I16" ? new Int16Array(n) : dtype === "U16" ? new Uint16Array(n) : new Float32Array(n);
    for (let i = 0; i < n; i++) {
      const offset = start + i * itemSize;
      out[i] =
        dtype === "I16"
          ? view.getInt16(offset, little)
          : dtype === "U16"
            ? view.getUint16(offset, little)
            : view.getFloat32(offset, little);
    }
    voxels = out;
  }
  return { dims, spacing, dtype, voxels };
}
