/**
 * Typed client for the clickseg HTTP session service.
 *
 * Mirrors the payload schemas documented in the repository README exactly;
 * everything image-shaped travels as base64 PNG strings and is treated as
 * opaque bytes here. The fetch implementation is injectable so tests can
 * count or reorder requests.
 */

export interface ClickRecord {
  row: number;
  col: number;
  polarity: 0 | 1; // 1 foreground, 0 background
}

export interface CreateResponse {
  session_id: string;
  height: number;
  width: number;
  correction_mode: boolean;
}

export interface StatePayload {
  click_count: number;
  mask_png: string;
  prob_png: string;
  iou: number | null;
}

export interface SessionInfo {
  click_count: number;
  clicks: ClickRecord[];
  height: number;
  width: number;
  correction_mode: boolean;
  undo_depth: number;
}

export interface OverlayResponse {
  stage: number;
  similarity_png: string;
  attention_png: string;
}

export interface HealthResponse {
  status: string;
  kernel_backend: string;
  model_input_size: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function parse<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: unknown };
      if (typeof body.detail === "string") detail = body.detail;
      else if (body.detail !== undefined) detail = JSON.stringify(body.detail);
    } catch {
      // non-JSON error body, keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class Client {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private post<T>(path: string, body?: unknown): Promise<T> {
    return this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? "{}" : JSON.stringify(body),
    }).then((r) => parse<T>(r));
  }

  private get<T>(path: string): Promise<T> {
    return this.fetchFn(this.base + path).then((r) => parse<T>(r));
  }

  createSession(
    imagePng: string,
    initialMaskPng?: string,
    gtPng?: string,
  ): Promise<CreateResponse> {
    return this.post("/session", {
      image_png: imagePng,
      initial_mask_png: initialMaskPng ?? null,
      gt_png: gtPng ?? null,
    });
  }

  info(sessionId: string): Promise<SessionInfo> {
    return this.get(`/session/${sessionId}`);
  }

  click(sessionId: string, c: ClickRecord): Promise<StatePayload> {
    return this.post(`/session/${sessionId}/click`, c);
  }

  undo(sessionId: string): Promise<StatePayload> {
    return this.post(`/session/${sessionId}/undo`);
  }

  reset(sessionId: string): Promise<StatePayload> {
    return this.post(`/session/${sessionId}/reset`);
  }

  overlays(sessionId: string, stage: number): Promise<OverlayResponse> {
    return this.get(`/session/${sessionId}/overlays?stage=${stage}`);
  }

  health(): Promise<HealthResponse> {
    return this.get("/healthz");
  }
}
