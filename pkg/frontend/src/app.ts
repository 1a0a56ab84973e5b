/**
 * DOM shell wiring the viewer together. All segmentation math happens on
 * the server: every overlay change is the decoded payload of a server
 * response, and each request/response is appended to the network log
 * panel so the traffic is inspectable.
 *
 * Keyboard map (underlined on the buttons): P point, B bbox, S scribble,
 * L lasso, T toggle polarity, R reset segment, N next segment. Arrow keys
 * and the mouse wheel step slices.
 */

import { ApiClient, ApiError } from "./api.js";
import type { FetchFn } from "./api.js";
import { decodeSvol, digestMask, looksLikeSvol } from "./codec.js";
import { canvasToPlane, traceToPrompt } from "./gestures.js";
import type { PlanePoint } from "./gestures.js";
import type { Axis, Prompt, Tool, UiSegment, Volume } from "./model.js";
import { SEGMENT_COLORS, axisExtent, initialViewState, volumeIntensityRange, zeroMask } from "./model.js";
import type { ViewState } from "./model.js";
import { parseNifti } from "./nifti.js";
import { renderSlice } from "./render.js";
import type { SliceFrame } from "./render.js";
import { SessionSync } from "./sync.js";

export interface NetworkEvent {
  method: string;
  path: string;
  status: number;
}

export interface AppOptions {
  fetchFn?: FetchFn;
}

const TOOL_KEYS: Record<string, Tool> = { p: "point", b: "bbox", s: "scribble", l: "lasso" };

export class App {
  view: ViewState = initialViewState();
  sync: SessionSync | null = null;
  networkLog: NetworkEvent[] = [];
  lastFrame: SliceFrame | null = null;

  private doc: Document;
  private fetchFn: FetchFn;
  private canvas: HTMLCanvasElement;
  private trace: PlanePoint[] = [];
  private tracking = false;
  private busy = false;
  private queue: Prompt[] = [];
  private inflight: Promise<void> = Promise.resolve();
  private keyHandler!: (ev: Event) => void;

  constructor(doc: Document, options: AppOptions = {}) {
    this.doc = doc;
    const rawFetch = options.fetchFn ?? fetch.bind(globalThis);
    this.fetchFn = this.loggingFetch(rawFetch);
    this.canvas = this.element<HTMLCanvasElement>("viewport");
    this.wireDom();
    this.updateControls();
  }

  // -- DOM plumbing --

  private element<T extends HTMLElement>(id: string): T {
    const node = this.doc.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node as T;
  }

  private loggingFetch(inner: FetchFn): FetchFn {
    return async (input, init) => {
      const method = init?.method ?? "GET";
      const url = typeof input === "string" ? input : input instanceof URL ? input.href : input.url;
      const path = url.replace(/^https?:\/\/[^/]+/, "");
      const response = await inner(input, init);
      this.networkLog.push({ method, path, status: response.status });
      const log = this.doc.getElementById("network-log");
      if (log) {
        const item = this.doc.createElement("li");
        item.textContent = `${method} ${path} -> ${response.status}`;
        log.appendChild(item);
        while (log.childElementCount > 50) log.removeChild(log.firstChild!);
      }
      return response;
    };
  }

  private wireDom(): void {
    const on = (id: string, event: string, handler: (ev: Event) => void) =>
      this.element(id).addEventListener(event, handler);

    on("btn-connect", "click", () => {
      void this.connect(this.element<HTMLInputElement>("server-url").value);
    });
    on("btn-reset", "click", () => void this.resetSegment());
    on("btn-next", "click", () => void this.nextSegment());
    for (const tool of ["point", "bbox", "scribble", "lasso"] as Tool[]) {
      on(`tool-${tool}`, "click", () => this.setTool(tool));
    }
    on("btn-positive", "click", () => this.setPolarity("positive"));
    on("btn-negative", "click", () => this.setPolarity("negative"));
    on("axis-select", "change", (ev) => this.setAxis((ev.target as HTMLSelectElement).value as Axis));
    on("slice-slider", "input", (ev) => this.setSlice(Number((ev.target as HTMLInputElement).value)));
    on("window-min", "input", (ev) => {
      this.view.windowMin = Number((ev.target as HTMLInputElement).value);
      this.render();
    });
    on("window-max", "input", (ev) => {
      this.view.windowMax = Number((ev.target as HTMLInputElement).value);
      this.render();
    });
    on("opacity", "input", (ev) => {
      this.view.overlayOpacity = Number((ev.target as HTMLInputElement).value);
      this.render();
    });

    this.canvas.addEventListener("pointerdown", (ev) => this.pointerDown(ev as PointerEvent));
    this.canvas.addEventListener("pointermove", (ev) => this.pointerMove(ev as PointerEvent));
    this.canvas.addEventListener("pointerup", (ev) => this.pointerUp(ev as PointerEvent));
    this.canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      this.setSlice(this.view.sliceIndex + (ev.deltaY > 0 ? 1 : -1));
    });

    this.keyHandler = (ev) => this.handleKey(ev as KeyboardEvent);
    this.doc.addEventListener("keydown", this.keyHandler);

    this.canvas.addEventListener("dragover", (ev) => ev.preventDefault());
    this.canvas.addEventListener("drop", (ev) => {
      ev.preventDefault();
      const file = (ev as DragEvent).dataTransfer?.files?.[0];
      if (file) {
        void file.arrayBuffer().then((buffer) => this.loadFile(new Uint8Array(buffer)));
      }
    });

    const saved = this.storedServerUrl();
    if (saved) this.element<HTMLInputElement>("server-url").value = saved;
  }

  private storedServerUrl(): string | null {
    try {
      return this.doc.defaultView?.localStorage?.getItem("promptseg-server-url") ?? null;
    } catch {
      return null;
    }
  }

  // -- session & data --

  async connect(serverUrl: string): Promise<void> {
    try {
      const api = new ApiClient(serverUrl, this.fetchFn);
      await api.health();
      const token = await api.createSession();
      this.sync = new SessionSync(api, token);
      try {
        this.doc.defaultView?.localStorage?.setItem("promptseg-server-url", serverUrl);
      } catch {
        // storage may be unavailable; the connection still works
      }
      this.setStatus(`connected (${token.slice(0, 8)}…)`);
      if (this.view.volume) await this.sync.setImage(this.view.volume);
    } catch (error) {
      this.sync = null;
      this.setStatus("connection failed");
      this.toast(`connect: ${describe(error)}`);
    }
  }

  async loadFile(bytes: Uint8Array): Promise<void> {
    try {
      const volume = looksLikeSvol(bytes) ? decodeSvol(bytes) : await parseNifti(bytes);
      await this.loadVolume(volume);
    } catch (error) {
      this.toast(`load: ${describe(error)}`);
    }
  }

  async loadVolume(volume: Volume): Promise<void> {
    this.view.volume = volume;
    this.view.segments = [];
    this.view.activeSegment = 0;
    this.view.sliceIndex = Math.floor(axisExtent(volume.dims, this.view.axis) / 2);
    const [lo, hi] = volumeIntensityRange(volume);
    this.view.windowMin = lo;
    this.view.windowMax = hi > lo ? hi : lo + 1;
    if (this.sync) await this.sync.setImage(volume);
    this.updateControls();
    this.render();
  }

  // -- view state --

  setTool(tool: Tool): void {
    this.view.tool = tool;
    this.updateControls();
  }

  setPolarity(polarity: "positive" | "negative"): void {
    this.view.polarity = polarity;
    this.updateControls();
  }

  togglePolarity(): void {
    this.setPolarity(this.view.polarity === "positive" ? "negative" : "positive");
  }

  setAxis(axis: Axis): void {
    this.view.axis = axis;
    if (this.view.volume) {
      this.view.sliceIndex = Math.min(this.view.sliceIndex, axisExtent(this.view.volume.dims, axis) - 1);
    }
    this.updateControls();
    this.render();
  }

  setSlice(index: number): void {
    if (!this.view.volume) return;
    const extent = axisExtent(this.view.volume.dims, this.view.axis);
    this.view.sliceIndex = Math.min(extent - 1, Math.max(0, index));
    this.updateControls();
    this.render();
  }

  private bboxDepth(): number {
    const input = this.doc.getElementById("bbox-depth") as HTMLInputElement | null;
    return input ? Number(input.value) || 0 : 0;
  }

  // -- gestures --

  private planePoint(ev: { clientX: number; clientY: number }): PlanePoint | null {
    if (!this.view.volume) return null;
    const rect = this.canvas.getBoundingClientRect();
    const width = rect.width || this.canvas.width || 1;
    const height = rect.height || this.canvas.height || 1;
    return canvasToPlane(
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      width,
      height,
      this.view.volume.dims,
      this.view.axis,
    );
  }

  pointerDown(ev: { clientX: number; clientY: number }): void {
    const point = this.planePoint(ev);
    if (!point) return;
    this.tracking = true;
    this.trace = [point];
  }

  pointerMove(ev: { clientX: number; clientY: number }): void {
    if (!this.tracking) return;
    const point = this.planePoint(ev);
    if (point) this.trace.push(point);
  }

  pointerUp(ev: { clientX: number; clientY: number }): void {
    if (!this.tracking) return;
    this.tracking = false;
    const point = this.planePoint(ev);
    if (point) this.trace.push(point);
    const volume = this.view.volume;
    if (!volume) return;
    const prompt = traceToPrompt(this.trace, {
      tool: this.view.tool,
      polarity: this.view.polarity,
      axis: this.view.axis,
      slice: this.view.sliceIndex,
      dims: volume.dims,
      bboxDepth: this.bboxDepth(),
    });
    this.trace = [];
    if (prompt) this.commitPrompt(prompt);
  }

  handleKey(ev: KeyboardEvent): void {
    const key = ev.key.toLowerCase();
    if (key in TOOL_KEYS) this.setTool(TOOL_KEYS[key]);
    else if (key === "t") this.togglePolarity();
    else if (key === "r") void this.resetSegment();
    else if (key === "n") void this.nextSegment();
    else if (ev.key === "ArrowUp" || ev.key === "ArrowRight") this.setSlice(this.view.sliceIndex + 1);
    else if (ev.key === "ArrowDown" || ev.key === "ArrowLeft") this.setSlice(this.view.sliceIndex - 1);
  }

  // -- server round-trips --

  /** Resolves when every queued state change has been answered and drawn. */
  idle(): Promise<void> {
    return this.inflight;
  }

  private ensureSegment(): UiSegment {
    if (this.view.segments.length === 0) {
      this.view.segments.push(this.newSegment());
      this.view.activeSegment = 0;
      this.updateControls();
    }
    return this.view.segments[this.view.activeSegment];
  }

  private newSegment(): UiSegment {
    const volume = this.view.volume;
    if (!volume) throw new Error("load an image first");
    const index = this.view.segments.length;
    return {
      name: `Segment ${index + 1}`,
      color: SEGMENT_COLORS[index % SEGMENT_COLORS.length],
      mask: zeroMask(volume.dims),
      digest: "",
    };
  }

  commitPrompt(prompt: Prompt): void {
    // one request in flight; later gestures queue rather than drop
    this.queue.push(prompt);
    this.inflight = this.inflight.then(() => this.drain());
  }

  private async drain(): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    try {
      while (this.queue.length > 0) {
        const prompt = this.queue.shift()!;
        await this.runPrompt(prompt);
      }
    } finally {
      this.busy = false;
    }
  }

  private async runPrompt(prompt: Prompt): Promise<void> {
    if (!this.sync) {
      this.toast("not connected");
      return;
    }
    if (!this.view.volume) {
      this.toast("no image loaded");
      return;
    }
    const segment = this.ensureSegment();
    if (!segment.digest) segment.digest = await digestMask(segment.mask);
    try {
      const outcome = await this.sync.prompt(prompt, segment.mask, segment.digest);
      segment.mask = outcome.mask;
      segment.digest = outcome.digest;
      this.setStatus(`${prompt.kind} ${prompt.polarity}: ${outcome.changedVoxels} voxels changed`);
      this.render();
    } catch (error) {
      this.toast(`prompt: ${describe(error)}`);
    }
  }

  async resetSegment(): Promise<void> {
    if (!this.sync || this.view.segments.length === 0) return;
    const run = this.inflight.then(async () => {
      try {
        const { mask, digest } = await this.sync!.reset();
        const segment = this.view.segments[this.view.activeSegment];
        segment.mask = mask;
        segment.digest = digest;
        this.setStatus("segment reset");
        this.render();
      } catch (error) {
        this.toast(`reset: ${describe(error)}`);
      }
    });
    this.inflight = run;
    await run;
  }

  async nextSegment(): Promise<void> {
    if (!this.view.volume || !this.sync) return;
    const run = this.inflight.then(async () => {
      try {
        const segment = this.newSegment();
        segment.digest = await digestMask(segment.mask);
        this.view.segments.push(segment);
        this.view.activeSegment = this.view.segments.length - 1;
        await this.sync!.ensureSynced(segment.mask, segment.digest);
        this.updateControls();
        this.render();
      } catch (error) {
        this.toast(`next segment: ${describe(error)}`);
      }
    });
    this.inflight = run;
    await run;
  }

  switchSegment(index: number): void {
    if (index < 0 || index >= this.view.segments.length || index === this.view.activeSegment) return;
    this.view.activeSegment = index;
    this.sync?.invalidateMaskAck(); // next sync re-uploads this segment's mask
    this.updateControls();
    this.render();
  }

  /** Detach document-level listeners (the canvas listeners die with the DOM). */
  dispose(): void {
    this.doc.removeEventListener("keydown", this.keyHandler);
  }

  // -- output --

  render(): void {
    if (!this.view.volume) return;
    const frame = renderSlice(this.view);
    this.lastFrame = frame;
    this.blit(frame);
    const label = this.doc.getElementById("slice-label");
    if (label) {
      const extent = axisExtent(this.view.volume.dims, this.view.axis);
      label.textContent = `${this.view.axis.toUpperCase()} ${this.view.sliceIndex + 1}/${extent}`;
    }
  }

  private blit(frame: SliceFrame): void {
    const ctx = this.canvas.getContext ? this.canvas.getContext("2d") : null;
    if (!ctx || typeof ImageData === "undefined") return; // headless: lastFrame carries the output
    this.canvas.width = frame.width;
    this.canvas.height = frame.height;
    ctx.putImageData(new ImageData(frame.rgba, frame.width, frame.height), 0, 0);
  }

  private setStatus(text: string): void {
    const node = this.doc.getElementById("connection-status");
    if (node) node.textContent = text;
  }

  toast(message: string): void {
    const node = this.doc.getElementById("toast");
    if (node) {
      node.textContent = message;
      node.classList.add("visible");
      setTimeout(() => node.classList.remove("visible"), 4000);
    }
  }

  private updateControls(): void {
    for (const tool of ["point", "bbox", "scribble", "lasso"]) {
      const button = this.doc.getElementById(`tool-${tool}`);
      if (button) button.classList.toggle("active", this.view.tool === tool);
    }
    const positive = this.doc.getElementById("btn-positive");
    const negative = this.doc.getElementById("btn-negative");
    if (positive) positive.classList.toggle("active", this.view.polarity === "positive");
    if (negative) negative.classList.toggle("active", this.view.polarity === "negative");

    const slider = this.doc.getElementById("slice-slider") as HTMLInputElement | null;
    if (slider && this.view.volume) {
      slider.max = String(axisExtent(this.view.volume.dims, this.view.axis) - 1);
      slider.value = String(this.view.sliceIndex);
    }

    const list = this.doc.getElementById("segment-list");
    if (list) {
      list.textContent = "";
      this.view.segments.forEach((segment, index) => {
        const item = this.doc.createElement("li");
        const swatch = this.doc.createElement("span");
        swatch.className = "swatch";
        swatch.style.backgroundColor = `rgb(${segment.color.join(",")})`;
        item.appendChild(swatch);
        item.appendChild(this.doc.createTextNode(segment.name));
        item.classList.toggle("active", index === this.view.activeSegment);
        item.addEventListener("click", () => this.switchSegment(index));
        list.appendChild(item);
      });
    }
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.errorName} (${error.status})`;
  return error instanceof Error ? error.message : String(error);
}
