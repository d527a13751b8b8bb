/**
 * UI state and the session controller.
 *
 * The controller is deliberately stateless with respect to the model: it
 * keeps the click log, the PNG strings from the last server response, and
 * nothing else. Reloading the page and replaying the same click log through
 * a fresh controller reproduces the identical masks, byte for byte, because
 * every mask shown ever only came from a server response.
 *
 * Requests are serialized through a promise chain: one in-flight request
 * per session, later actions queued client-side in arrival order. A click
 * draws its marker optimistically (flagged pending) and rolls it back if
 * the server rejects it.
 */

import {
  ApiError,
  Client,
  type ClickRecord,
  type StatePayload,
} from "./api.js";

export type OverlayMode = "mask" | "similarity" | "attention";

export const STAGE_COUNT = 4;

export interface UiState {
  sessionId: string | null;
  width: number;
  height: number;
  correctionMode: boolean;
  clicks: ClickRecord[];        // confirmed by the server
  pending: ClickRecord | null;  // optimistic marker awaiting the server
  maskPng: string | null;
  probPng: string | null;
  iou: number | null;
  overlayMode: OverlayMode;
  stage: number;                // 0 .. STAGE_COUNT-1
  heatmapPng: string | null;    // similarity/attention image for the stage
  undoDepth: number;
  error: string | null;
  busy: boolean;
}

export function initialState(): UiState {
  return {
    sessionId: null,
    width: 0,
    height: 0,
    correctionMode: false,
    clicks: [],
    pending: null,
    maskPng: null,
    probPng: null,
    iou: null,
    overlayMode: "mask",
    stage: 0,
    heatmapPng: null,
    undoDepth: 0,
    error: null,
    busy: false,
  };
}

export interface ClickLog {
  clicks: ClickRecord[];
}

export class SessionController {
  state: UiState = initialState();
  onChange: ((s: UiState) => void) | null = null;

  private chain: Promise<unknown> = Promise.resolve();

  constructor(private readonly client: Client) {}

  private notify(): void {
    if (this.onChange) this.onChange(this.state);
  }

  /** Serialize jobs so at most one request is in flight for this session. */
  private enqueue<T>(job: () => Promise<T>): Promise<T> {
    const run = this.chain.then(job);
    // errors are surfaced by the job itself; keep the chain alive
    this.chain = run.catch(() => undefined);
    return run;
  }

  get canUndo(): boolean {
    // mirrors the server exactly: undo returns 409 iff undo_depth is 0
    return this.state.sessionId !== null && this.state.undoDepth > 0;
  }

  async openImage(
    imagePng: string,
    initialMaskPng?: string,
    gtPng?: string,
  ): Promise<void> {
    return this.enqueue(async () => {
      this.state = { ...initialState(), busy: true };
      this.notify();
      try {
        const created = await this.client.createSession(
          imagePng, initialMaskPng, gtPng);
        this.state = {
          ...this.state,
          sessionId: created.session_id,
          width: created.width,
          height: created.height,
          correctionMode: created.correction_mode,
          // before any click the server has not produced a mask; in
          // correction mode show the mask the user just uploaded
          maskPng: created.correction_mode ? (initialMaskPng ?? null) : null,
          busy: false,
        };
      } catch (e) {
        this.state = {
          ...initialState(),
          error: e instanceof ApiError ? e.detail : String(e),
        };
      }
      this.notify();
    });
  }

  private applyPayload(p: StatePayload): void {
    this.state = {
      ...this.state,
      clicks: this.state.clicks.slice(0, p.click_count),
      maskPng: p.mask_png,
      probPng: p.prob_png,
      iou: p.iou,
      // one history entry per click on this server, so the depth the
      // server would report is exactly the click count
      undoDepth: p.click_count,
      pending: null,
      busy: false,
      error: null,
    };
  }

  async click(row: number, col: number, polarity: 0 | 1): Promise<void> {
    const record: ClickRecord = { row, col, polarity };
    // optimistic marker; confirmed or rolled back when the response lands
    this.state = { ...this.state, pending: record, busy: true };
    this.notify();
    return this.enqueue(async () => {
      const id = this.state.sessionId;
      if (id === null) return;
      try {
        const payload = await this.client.click(id, record);
        this.state = { ...this.state, clicks: [...this.state.clicks, record] };
        this.applyPayload(payload);
      } catch (e) {
        // marker rollback
        this.state = {
          ...this.state,
          pending: null,
          busy: false,
          error: e instanceof ApiError ? e.detail : String(e),
        };
      }
      this.notify();
    });
  }

  async undo(): Promise<void> {
    if (!this.canUndo) return;
    return this.enqueue(async () => {
      const id = this.state.sessionId;
      if (id === null) return;
      try {
        this.applyPayload(await this.client.undo(id));
      } catch (e) {
        this.state = {
          ...this.state,
          error: e instanceof ApiError ? e.detail : String(e),
        };
      }
      this.notify();
    });
  }

  async reset(): Promise<void> {
    return this.enqueue(async () => {
      const id = this.state.sessionId;
      if (id === null) return;
      try {
        this.applyPayload(await this.client.reset(id));
      } catch (e) {
        this.state = {
          ...this.state,
          error: e instanceof ApiError ? e.detail : String(e),
        };
      }
      this.notify();
    });
  }

  /**
   * Switch the overlay view. Never touches click state. A stage outside the
   * encoder's range throws synchronously: that is a wiring bug, not a
   * server condition, so it must not vanish into a rejected promise.
   */
  setOverlay(mode: OverlayMode, stage: number): Promise<void> {
    if (stage < 0 || stage >= STAGE_COUNT) {
      throw new RangeError(`stage must be 0..${STAGE_COUNT - 1}, got ${stage}`);
    }
    this.state = { ...this.state, overlayMode: mode, stage };
    this.notify();
    if (mode === "mask") return Promise.resolve();
    return this.enqueue(async () => {
      const id = this.state.sessionId;
      if (id === null) return;
      try {
        const ov = await this.client.overlays(id, stage);
        const png = mode === "similarity" ? ov.similarity_png : ov.attention_png;
        this.state = { ...this.state, heatmapPng: png };
      } catch (e) {
        this.state = {
          ...this.state,
          error: e instanceof ApiError ? e.detail : String(e),
        };
      }
      this.notify();
    });
  }

  /**
   * Echo check against the server's click log. Returns true when the local
   * marker list matches the server exactly (order, coordinates, polarity).
   */
  async sync(): Promise<boolean> {
    return this.enqueue(async () => {
      const id = this.state.sessionId;
      if (id === null) return false;
      const info = await this.client.info(id);
      this.state = { ...this.state, undoDepth: info.undo_depth };
      this.notify();
      const local = this.state.clicks;
      if (local.length !== info.clicks.length) return false;
      return local.every((c, i) => {
        const s = info.clicks[i];
        return s !== undefined && s.row === c.row && s.col === c.col
          && s.polarity === c.polarity;
      });
    });
  }

  exportLog(): ClickLog {
    return { clicks: this.state.clicks.map((c) => ({ ...c })) };
  }

  /**
   * Replay a recorded log through the normal click path, one queued request
   * per click. Used by the import button and the replay-fidelity test.
   */
  async replayLog(log: ClickLog): Promise<void> {
    for (const c of log.clicks) {
      await this.click(c.row, c.col, c.polarity);
    }
  }
}
