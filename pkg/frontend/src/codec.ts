/**
 * Binary wire formats shared with the server, byte-compatible with the
 * Python implementation.
 *
 * SVOL1: "SVOL" | 0x01 | dtype code | nx ny nz u32le | sx sy sz f32le | voxels
 * RLE:   nx ny nz u32le, then LEB128 run lengths alternating from value 0.
 */

import type { Dims, Dtype, Mask, Volume, VoxelArray } from "./model.js";
import { voxelCount } from "./model.js";

export const SVOL_HEADER_LEN = 30;

const DTYPE_CODES: Record<Dtype, number> = { U8: 0, I16: 1, U16: 2, F32: 3 };
const CODE_DTYPES: Record<number, Dtype> = { 0: "U8", 1: "I16", 2: "U16", 3: "F32" };
const BYTES_PER: Record<Dtype, number> = { U8: 1, I16: 2, U16: 2, F32: 4 };

export class CodecError extends Error {}

export function looksLikeSvol(bytes: Uint8Array): boolean {
  return bytes.length >= 4 && bytes[0] === 0x53 && bytes[1] === 0x56 && bytes[2] === 0x4f && bytes[3] === 0x4c;
}

export function encodeSvol(volume: Volume): Uint8Array {
  const n = voxelCount(volume.dims);
  const itemSize = BYTES_PER[volume.dtype];
  const out = new Uint8Array(SVOL_HEADER_LEN + n * itemSize);
  const view = new DataView(out.buffer);
  out.set([0x53, 0x56, 0x4f, 0x4c]); // "SVOL"
  out[4] = 1;
  out[5] = DTYPE_CODES[volume.dtype];
  view.setUint32(6, volume.dims[0], true);
  view.setUint32(10, volume.dims[1], true);
  view.setUint32(14, volume.dims[2], true);
  view.setFloat32(18, volume.spacing[0], true);
  view.setFloat32(22, volume.spacing[1], true);
  view.setFloat32(26, volume.spacing[2], true);
  for (let i = 0; i < n; i++) {
    const offset = SVOL_HEADER_LEN + i * itemSize;
    if (volume.dtype === "U8") out[offset] = volume.voxels[i];
    else if (volume.dtype === "I16") view.setInt16(offset, volume.voxels[i], true);
    else if (volume.dtype === "U16") view.setUint16(offset, volume.voxels[i], true);
    else view.setFloat32(offset, volume.voxels[i], true);
  }
  return out;
}

export function decodeSvol(bytes: Uint8Array): Volume {
  if (bytes.length >= 4 && (bytes[0] !== 0x53 || bytes[1] !== 0x56 || bytes[2] !== 0x4f || bytes[3] !== 0x4c)) {
    throw new CodecError("BadMagic");
  }
  if (bytes.length < SVOL_HEADER_LEN) throw new CodecError("TruncatedPayload");
  if (bytes[4] !== 1) throw new CodecError("UnsupportedVersion");
  const dtype = CODE_DTYPES[bytes[5]];
  if (dtype === undefined) throw new CodecError("UnknownDtype");
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const dims: Dims = [view.getUint32(6, true), view.getUint32(10, true), view.getUint32(14, true)];
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw new CodecError("ZeroDim");
  const spacing: [number, number, number] = [
    view.getFloat32(18, true),
    view.getFloat32(22, true),
    view.getFloat32(26, true),
  ];
  if (!spacing.every((s) => Number.isFinite(s) && s > 0)) throw new CodecError("NonPositiveSpacing");
  const n = voxelCount(dims);
  const itemSize = BYTES_PER[dtype];
  if (bytes.length - SVOL_HEADER_LEN !== n * itemSize) throw new CodecError("TruncatedPayload");
  let voxels: VoxelArray;
  if (dtype === "U8") voxels = bytes.slice(SVOL_HEADER_LEN);
  else {
    const out =
      dtype === "I16" ? new Int16Array(n) : dtype === "U16" ? new Uint16Array(n) : new Float32Array(n);
    for (let i = 0; i < n; i++) {
      const offset = SVOL_HEADER_LEN + i * itemSize;
      out[i] =
        dtype === "I16"
          ? view.getInt16(offset, true)
          : dtype === "U16"
            ? view.getUint16(offset, true)
            : view.getFloat32(offset, true);
    }
    voxels = out;
  }
  return { dims, spacing, dtype, voxels };
}

function leb128Encode(value: number, out: number[]): void {
  for (;;) {
    const byte = value & 0x7f;
    value = Math.floor(value / 128);
    if (value > 0) out.push(byte | 0x80);
    else {
      out.push(byte);
      return;
    }
  }
}

export function rleEncode(mask: Mask): Uint8Array {
  const n = mask.bits.length;
  const runs: number[] = [];
  let current = 0;
  let length = 0;
  for (let i = 0; i < n; i++) {
    if (mask.bits[i] === current) length += 1;
    else {
      runs.push(length);
      current = mask.bits[i];
      length = 1;
    }
  }
  runs.push(length);
  const body: number[] = [];
  for (const run of runs) leb128Encode(run, body);
  const out = new Uint8Array(12 + body.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, mask.dims[0], true);
  view.setUint32(4, mask.dims[1], true);
  view.setUint32(8, mask.dims[2], true);
  out.set(body, 12);
  return out;
}

export function rleDecode(bytes: Uint8Array): Mask {
  if (bytes.length < 12) throw new CodecError("TruncatedPayload");
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const dims: Dims = [view.getUint32(0, true), view.getUint32(4, true), view.getUint32(8, true)];
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw new CodecError("ZeroDim");
  const n = voxelCount(dims);
  const bits = new Uint8Array(n);
  let offset = 12;
  let position = 0;
  let value = 0;
  let runIndex = 0;
  while (offset < bytes.length) {
    let run = 0;
    let shift = 1;
    for (;;) {
      if (offset >= bytes.length) throw new CodecError("TruncatedVarint");
      const byte = bytes[offset++];
      run += (byte & 0x7f) * shift;
      if ((byte & 0x80) === 0) break;
      shift *= 128;
    }
    if (run === 0 && runIndex > 0) throw new CodecError("InteriorZeroRun");
    if (position + run > n) throw new CodecError("RunSumMismatch");
    if (value === 1) bits.fill(1, position, position + run);
    position += run;
    value ^= 1;
    runIndex += 1;
  }
  if (position !== n) throw new CodecError("RunSumMismatch");
  return { dims, bits };
}

export async function sha256Hex(bytes: Uint8Array): Promise<string> {
  const digest = await globalThis.crypto.subtle.digest("SHA-256", bytes as BufferSource);
  return Array.from(new Uint8Array(digest), (b) => b.toString(16).padStart(2, "0")).join("");
}

export function digestVolume(volume: Volume): Promise<string> {
  return sha256Hex(encodeSvol(volume));
}

export function digestMask(mask: Mask): Promise<string> {
  return sha256Hex(rleEncode(mask));
}
