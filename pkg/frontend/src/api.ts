/** Typed client for the session REST surface. */

import type { Prompt } from "./model.js";

export type FetchFn = typeof fetch;

export interface UploadAck {
  digest: string;
  revision: number;
}

export interface MaskReply {
  body: Uint8Array;
  digest: string;
  revision: number;
}

export interface PromptReply extends MaskReply {
  changedVoxels: number;
}

export interface SessionStatus {
  has_image: boolean;
  image_digest: string | null;
  mask_digest: string | null;
  revision: number;
  prompt_count: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public errorName: string,
    public detail: string,
  ) {
    super(`${status} ${errorName}: ${detail}`);
  }
}

/** 428: the server's copy differs from what we believed; resync and retry. */
export class StaleError extends ApiError {}

async function errorFrom(response: Response): Promise<ApiError> {
  let name = "unknown";
  let detail = "";
  try {
    const body = await response.json();
    name = String(body.error ?? "unknown");
    detail = String(body.detail ?? "");
  } catch {
    // non-JSON error body; keep defaults
  }
  const cls = response.status === 428 ? StaleError : ApiError;
  return new cls(response.status, name, detail);
}

export class ApiClient {
  private baseUrl: string;
  private fetchFn: FetchFn;

  constructor(baseUrl: string, fetchFn: FetchFn = fetch) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn;
  }

  private async request(method: string, path: string, init: RequestInit = {}): Promise<Response> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, { method, ...init });
    if (!response.ok) throw await errorFrom(response);
    return response;
  }

  async health(): Promise<boolean> {
    const response = await this.request("GET", "/v1/health");
    return (await response.json()).status === "ok";
  }

  async createSession(): Promise<string> {
    const response = await this.request("POST", "/v1/session");
    return (await response.json()).token;
  }

  async putImage(token: string, svolBytes: Uint8Array): Promise<UploadAck> {
    const response = await this.request("PUT", `/v1/session/${token}/image`, {
      body: svolBytes as BodyInit,
      headers: { "content-type": "application/octet-stream" },
    });
    return await response.json();
  }

  async putMask(token: string, rleBytes: Uint8Array): Promise<UploadAck> {
    const response = await this.request("PUT", `/v1/session/${token}/mask`, {
      body: rleBytes as BodyInit,
      headers: { "content-type": "application/octet-stream" },
    });
    return await response.json();
  }

  async postPrompt(
    token: string,
    prompt: Prompt,
    expectedImageDigest: string,
    expectedMaskDigest: string | null,
  ): Promise<PromptReply> {
    const response = await this.request("POST", `/v1/session/${token}/prompt`, {
      body: JSON.stringify({
        prompt,
        expected_image_digest: expectedImageDigest,
        expected_mask_digest: expectedMaskDigest,
      }),
      headers: { "content-type": "application/json" },
    });
    return {
      body: new Uint8Array(await response.arrayBuffer()),
      digest: response.headers.get("x-mask-digest") ?? "",
      revision: Number(response.headers.get("x-revision")),
      changedVoxels: Number(response.headers.get("x-changed-voxels")),
    };
  }

  async reset(token: string): Promise<number> {
    const response = await this.request("POST", `/v1/session/${token}/reset`);
    return (await response.json()).revision;
  }

  async getMask(token: string): Promise<MaskReply> {
    const response = await this.request("GET", `/v1/session/${token}/mask`);
    return {
      body: new Uint8Array(await response.arrayBuffer()),
      digest: response.headers.get("x-mask-digest") ?? "",
      revision: Number(response.headers.get("x-revision")),
    };
  }

  async getStatus(token: string): Promise<SessionStatus> {
    const response = await this.request("GET", `/v1/session/${token}`);
    return await response.json();
  }
}
