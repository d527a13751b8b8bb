/**
 * DOM bootstrap: wires the controller to the canvas and controls.
 *
 * Left click adds a positive (green) point, right click a negative (red)
 * one. The mask from each click response is alpha-blended over the image;
 * the overlay selector switches to the per-stage similarity or attention
 * heatmaps. Undo/redo of view state does not exist on purpose: the server
 * owns the session, the page only renders responses.
 */

import { Client } from "./api.js";
import { markerRadius, renderPlan, type DrawOp } from "./overlay.js";
import { SessionController, STAGE_COUNT, type OverlayMode, type UiState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function fileToBase64(file: File): Promise<string> {
  const buf = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  for (const b of buf) binary += String.fromCharCode(b);
  return btoa(binary);
}

function pngUrl(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

function loadImage(src: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error("image decode failed"));
    img.src = src;
  });
}

class CanvasView {
  private baseImage: HTMLImageElement | null = null;
  private painting = false;
  private dirtyPlan: DrawOp[] | null = null;

  constructor(private readonly canvas: HTMLCanvasElement) {}

  async setImage(b64: string, width: number, height: number): Promise<void> {
    this.baseImage = await loadImage(pngUrl(b64));
    this.canvas.width = width;
    this.canvas.height = height;
  }

  /** Coalesce repaints; plans arrive faster than PNGs decode. */
  paint(plan: DrawOp[]): void {
    this.dirtyPlan = plan;
    if (!this.painting) void this.drain();
  }

  private async drain(): Promise<void> {
    this.painting = true;
    while (this.dirtyPlan !== null) {
      const plan = this.dirtyPlan;
      this.dirtyPlan = null;
      await this.execute(plan);
    }
    this.painting = false;
  }

  private async execute(plan: DrawOp[]): Promise<void> {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const w = this.canvas.width;
    const h = this.canvas.height;
    const r = markerRadius(w);
    for (const op of plan) {
      if (op.kind === "image") {
        ctx.clearRect(0, 0, w, h);
        if (this.baseImage) ctx.drawImage(this.baseImage, 0, 0, w, h);
      } else if (op.kind === "blend") {
        const img = await loadImage(pngUrl(op.png));
        ctx.save();
        ctx.globalAlpha = op.alpha;
        ctx.drawImage(img, 0, 0, w, h);
        if (op.tint === "mask") {
          // recolor the grayscale mask to a blue wash where it is set
          ctx.globalCompositeOperation = "multiply";
          ctx.fillStyle = "#3b82f6";
          ctx.fillRect(0, 0, w, h);
        }
        ctx.restore();
      } else {
        ctx.save();
        ctx.globalAlpha = op.pending ? 0.5 : 1.0;
        ctx.fillStyle = op.color;
        ctx.strokeStyle = "#ffffff";
        ctx.lineWidth = Math.max(1, r / 3);
        ctx.beginPath();
        ctx.arc(op.col + 0.5, op.row + 0.5, r, 0, Math.PI * 2);
        ctx.fill();
        ctx.stroke();
        ctx.restore();
      }
    }
  }
}

function mount(): void {
  const canvas = el<HTMLCanvasElement>("canvas");
  const view = new CanvasView(canvas);
  const client = new Client("");  // same origin; use `clickseg serve` behind it
  const controller = new SessionController(client);

  const imageInput = el<HTMLInputElement>("image-file");
  const maskInput = el<HTMLInputElement>("mask-file");
  const gtInput = el<HTMLInputElement>("gt-file");
  const openBtn = el<HTMLButtonElement>("open");
  const undoBtn = el<HTMLButtonElement>("undo");
  const resetBtn = el<HTMLButtonElement>("reset");
  const modeSel = el<HTMLSelectElement>("overlay-mode");
  const stageSel = el<HTMLSelectElement>("stage");
  const counter = el<HTMLSpanElement>("counter");
  const iouOut = el<HTMLSpanElement>("iou");
  const badge = el<HTMLSpanElement>("badge");
  const banner = el<HTMLDivElement>("banner");
  const exportBtn = el<HTMLButtonElement>("export-log");
  const importBtn = el<HTMLButtonElement>("import-log");
  const logBox = el<HTMLTextAreaElement>("log-box");

  // exactly the four encoder stages
  for (let i = 0; i < STAGE_COUNT; i++) {
    const opt = document.createElement("option");
    opt.value = String(i);
    opt.textContent = `stage ${i}`;
    stageSel.appendChild(opt);
  }

  let lastImageB64: string | null = null;

  controller.onChange = (s: UiState) => {
    counter.textContent = String(s.clicks.length);
    iouOut.textContent = s.iou === null ? "-" : s.iou.toFixed(4);
    badge.style.display = s.correctionMode ? "inline" : "none";
    undoBtn.disabled = !controller.canUndo;
    resetBtn.disabled = s.sessionId === null;
    banner.textContent = s.error ?? "";
    banner.style.display = s.error ? "block" : "none";
    view.paint(renderPlan(s));
  };

  openBtn.addEventListener("click", () => {
    void (async () => {
      const file = imageInput.files?.[0];
      if (!file) return;
      const imageB64 = await fileToBase64(file);
      const maskFile = maskInput.files?.[0];
      const gtFile = gtInput.files?.[0];
      const maskB64 = maskFile ? await fileToBase64(maskFile) : undefined;
      const gtB64 = gtFile ? await fileToBase64(gtFile) : undefined;
      await controller.openImage(imageB64, maskB64, gtB64);
      const s = controller.state;
      if (s.sessionId !== null) {
        lastImageB64 = imageB64;
        await view.setImage(imageB64, s.width, s.height);
        view.paint(renderPlan(s));
      }
    })();
  });

  function canvasToImage(ev: MouseEvent): { row: number; col: number } {
    const rect = canvas.getBoundingClientRect();
    const col = Math.floor(((ev.clientX - rect.left) / rect.width) * canvas.width);
    const row = Math.floor(((ev.clientY - rect.top) / rect.height) * canvas.height);
    return {
      row: Math.min(Math.max(row, 0), canvas.height - 1),
      col: Math.min(Math.max(col, 0), canvas.width - 1),
    };
  }

  canvas.addEventListener("click", (ev) => {
    if (controller.state.sessionId === null) return;
    const { row, col } = canvasToImage(ev);
    void controller.click(row, col, 1);
  });
  canvas.addEventListener("contextmenu", (ev) => {
    ev.preventDefault();
    if (controller.state.sessionId === null) return;
    const { row, col } = canvasToImage(ev);
    void controller.click(row, col, 0);
  });

  undoBtn.addEventListener("click", () => void controller.undo());
  resetBtn.addEventListener("click", () => void controller.reset());

  const applyOverlay = () => {
    const mode = modeSel.value as OverlayMode;
    void controller.setOverlay(mode, Number(stageSel.value));
  };
  modeSel.addEventListener("change", applyOverlay);
  stageSel.addEventListener("change", applyOverlay);

  exportBtn.addEventListener("click", () => {
    logBox.value = JSON.stringify(controller.exportLog(), null, 2);
  });
  importBtn.addEventListener("click", () => {
    void (async () => {
      if (lastImageB64 === null) return;
      let log;
      try {
        log = JSON.parse(logBox.value) as { clicks: [] };
      } catch {
        controller.state = { ...controller.state, error: "log is not valid JSON" };
        controller.onChange?.(controller.state);
        return;
      }
      // fresh session, then replay: demonstrates that the log plus the
      // image fully determine the mask
      await controller.openImage(lastImageB64);
      await view.setImage(lastImageB64, controller.state.width, controller.state.height);
      await controller.replayLog(log);
    })();
  });

  undoBtn.disabled = true;
  resetBtn.disabled = true;
}

if (typeof document !== "undefined") {
  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", mount);
  } else {
    mount();
  }
}
