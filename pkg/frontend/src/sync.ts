/**
 * Browser-side mirror of the SDK sync contract: track the digests the
 * server last acknowledged, upload image/mask only when they differ, send
 * prompts with digest preconditions, and on a 428 invalidate exactly the
 * stale resource, resync once, and retry once.
 */

import { ApiClient, StaleError } from "./api.js";
import type { PromptReply } from "./api.js";
import { digestMask, encodeSvol, rleDecode, rleEncode, sha256Hex } from "./codec.js";
import type { Mask, Prompt, Volume } from "./model.js";
import { zeroMask } from "./model.js";

export interface SyncReport {
  imageUploaded: boolean;
  maskUploaded: boolean;
}

export interface PromptOutcome {
  mask: Mask;
  digest: string;
  revision: number;
  changedVoxels: number;
  retried: boolean;
}

export class SyncLoopError extends Error {}

export class SessionSync {
  localImage: Volume | null = null;
  localImageDigest: string | null = null;
  ackedImageDigest: string | null = null;
  ackedMaskDigest: string | null = null;
  serverRevision = 0;

  private imageBytes: Uint8Array | null = null;

  constructor(
    public api: ApiClient,
    public token: string,
  ) {}

  async setImage(volume: Volume): Promise<void> {
    this.localImage = volume;
    this.imageBytes = encodeSvol(volume);
    this.localImageDigest = await sha256Hex(this.imageBytes);
  }

  async ensureSynced(activeMask: Mask | null, activeMaskDigest: string | null): Promise<SyncReport> {
    if (this.localImage === null || this.imageBytes === null) throw new Error("no image loaded");
    let imageUploaded = false;
    let maskUploaded = false;
    if (this.localImageDigest !== this.ackedImageDigest) {
      const ack = await this.api.putImage(this.token, this.imageBytes);
      const replaced = ack.revision !== this.serverRevision;
      this.serverRevision = ack.revision;
      this.ackedImageDigest = ack.digest;
      if (replaced) this.ackedMaskDigest = await digestMask(zeroMask(this.localImage.dims));
      imageUploaded = true;
    }
    if (activeMask !== null && activeMaskDigest !== null && activeMaskDigest !== this.ackedMaskDigest) {
      const ack = await this.api.putMask(this.token, rleEncode(activeMask));
      this.serverRevision = ack.revision;
      this.ackedMaskDigest = ack.digest;
      maskUploaded = true;
    }
    return { imageUploaded, maskUploaded };
  }

  /** Mark the mask un-acked so the next sync uploads it (segment switch). */
  invalidateMaskAck(): void {
    this.ackedMaskDigest = null;
  }

  async prompt(prompt: Prompt, activeMask: Mask, activeMaskDigest: string): Promise<PromptOutcome> {
    await this.ensureSynced(activeMask, activeMaskDigest);
    let retried = false;
    for (;;) {
      let reply: PromptReply;
      try {
        reply = await this.api.postPrompt(this.token, prompt, this.ackedImageDigest ?? "", this.ackedMaskDigest);
      } catch (error) {
        if (error instanceof StaleError && !retried) {
          retried = true;
          if (error.errorName === "StaleImage") this.ackedImageDigest = null;
          else this.ackedMaskDigest = null;
          await this.ensureSynced(activeMask, activeMaskDigest);
          continue;
        }
        if (error instanceof StaleError) throw new SyncLoopError(`second 428 (${error.errorName}) after resync`);
        throw error;
      }
      const mask = rleDecode(reply.body);
      this.ackedMaskDigest = reply.digest;
      this.serverRevision = reply.revision;
      return { mask, digest: reply.digest, revision: reply.revision, changedVoxels: reply.changedVoxels, retried };
    }
  }

  async reset(): Promise<{ mask: Mask; digest: string }> {
    if (this.localImage === null) throw new Error("no image loaded");
    this.serverRevision = await this.api.reset(this.token);
    const mask = zeroMask(this.localImage.dims);
    const digest = await digestMask(mask);
    this.ackedMaskDigest = digest;
    return { mask, digest };
  }
}
