"""Session-based HTTP API for interactive segmentation.

JSON in, JSON out, with PNG payloads base64-encoded. Each session owns an
image, an ordered click list, and the rolling previous-mask channel; replaying
the same click log against the same checkpoint reproduces every response
byte for byte. Arbitrary image sizes are handled by an aspect-preserving
resize to the model frame with bottom/right padding; clicks arrive in
original-image coordinates and masks return at the original size.

Endpoints (all payload schemas in README):
  POST /session                    create from image (+ optional masks)
  GET  /session/{id}               click-log echo for client sync
  POST /session/{id}/click         add a click, get updated masks
  POST /session/{id}/undo          pop the last click
  POST /session/{id}/reset         back to the initial state
  GET  /session/{id}/overlays      similarity / attention heatmaps
  GET  /healthz                    liveness and backend report
"""

from __future__ import annotations

import base64
import io
import secrets
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from . import _kernels
from .clicks import NEGATIVE, POSITIVE, ClickSet
from .evaluation import iou
from .interaction import render_click_maps
from .model.affinity import aggregate_attention
from .model.encoder import ClickSegModel, assemble_input
from .model.similarity import click_to_patch

MAX_PAYLOAD_PIXELS = 4096 * 4096


class ClickRequest(BaseModel):
    row: int
    col: int
    polarity: int  # 1 positive, 0 negative


class CreateRequest(BaseModel):
    image_png: str
    initial_mask_png: str | None = None
    gt_png: str | None = None


@dataclass
class _HistoryEntry:
    clicks: list[tuple[int, int, int]]
    prev: np.ndarray     # model-frame float map fed to the next forward
    binary: np.ndarray   # original-size uint8 mask
    prob: np.ndarray     # original-size float map


@dataclass
class Session:
    image: np.ndarray          # (3, H, W) original size
    model_image: np.ndarray    # (3, S, S) model frame
    scale: float
    scaled_hw: tuple[int, int]
    initial_mask: np.ndarray | None  # original-size uint8, correction mode
    gt: np.ndarray | None
    history: list[_HistoryEntry] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def click_tuples(self) -> list[tuple[int, int, int]]:
        return self.history[-1].clicks

    def click_set(self, model_size: int) -> ClickSet:
        cs = ClickSet(model_size, model_size)
        for r, c, pol in self.click_tuples:
            mr, mc = self.to_model(r, c)
            cs.add(mr, mc, pol)
        return cs

    def to_model(self, row: int, col: int) -> tuple[int, int]:
        h, w = self.scaled_hw
        return (min(int(row * self.scale), h - 1),
                min(int(col * self.scale), w - 1))


def _decode_png(b64: str, field_name: str) -> Image.Image:
    try:
        raw = base64.b64decode(b64, validate=True)
        img = Image.open(io.BytesIO(raw))
        img.load()
    except Exception:
        raise HTTPException(400, f"{field_name}: not decodable image data")
    if img.width * img.height > MAX_PAYLOAD_PIXELS:
        raise HTTPException(413, f"{field_name}: image too large")
    return img


def _encode_png(gray: np.ndarray) -> str:
    img = Image.fromarray(gray.astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _fit_to_frame(arr_hw3: np.ndarray, size: int) -> tuple[np.ndarray, float, tuple[int, int]]:
    """Aspect-preserving bilinear fit into (size, size), padded bottom/right."""
    h, w = arr_hw3.shape[:2]
    scale = size / max(h, w)
    nh, nw = max(1, round(h * scale)), max(1, round(w * scale))
    ys = np.clip((np.arange(nh) + 0.5) / scale - 0.5, 0, h - 1)
    xs = np.clip((np.arange(nw) + 0.5) / scale - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x0 = np.floor(xs).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    r = (arr_hw3[y0][:, x0] * (1 - fy) * (1 - fx)
         + arr_hw3[y0][:, x1] * (1 - fy) * fx
         + arr_hw3[y1][:, x0] * fy * (1 - fx)
         + arr_hw3[y1][:, x1] * fy * fx)
    out = np.zeros((size, size, arr_hw3.shape[2]))
    out[:nh, :nw] = r
    return out, scale, (nh, nw)


def _to_original(model_map: np.ndarray, session: Session) -> np.ndarray:
    """Crop the padded frame and nearest-resize back to the original size."""
    nh, nw = session.scaled_hw
    h, w = session.image.shape[1:]
    cropped = model_map[:nh, :nw]
    ys = np.clip(((np.arange(h) + 0.5) * nh / h).astype(int), 0, nh - 1)
    xs = np.clip(((np.arange(w) + 0.5) * nw / w).astype(int), 0, nw - 1)
    return cropped[ys][:, xs]


def create_app(model: ClickSegModel, max_sessions: int = 64) -> FastAPI:
    app = FastAPI(title="clickseg service")
    sessions: OrderedDict[str, Session] = OrderedDict()
    registry_lock = threading.Lock()
    size = model.config.input_size

    def get_session(session_id: str) -> Session:
        with registry_lock:
            s = sessions.get(session_id)
            if s is None:
                raise HTTPException(404, "unknown session")
            sessions.move_to_end(session_id)
            return s

    def run_model(session: Session, clicks: ClickSet, prev: np.ndarray):
        maps = render_click_maps(clicks, size, size, model.config.click_radius)
        x6 = assemble_input(session.model_image, maps, prev[None])
        return model.forward(x6, clicks)

    def state_payload(session: Session) -> dict:
        entry = session.history[-1]
        payload = {
            "click_count": len(entry.clicks),
            "mask_png": _encode_png(entry.binary * 255),
            "prob_png": _encode_png(np.rint(entry.prob * 255.0)),
            "iou": None,
        }
        if session.gt is not None:
            payload["iou"] = iou(entry.binary, session.gt)
        return payload

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "kernel_backend": _kernels.BACKEND,
                "model_input_size": size}

    @app.post("/session")
    def create_session(req: CreateRequest):
        img = _decode_png(req.image_png, "image_png").convert("RGB")
        arr = np.asarray(img, dtype=np.float64) / 255.0  # (H, W, 3)
        fitted, scale, scaled_hw = _fit_to_frame(arr, size)
        session = Session(
            image=np.ascontiguousarray(arr.transpose(2, 0, 1)),
            model_image=np.ascontiguousarray(fitted.transpose(2, 0, 1)),
            scale=scale, scaled_hw=scaled_hw,
            initial_mask=None, gt=None)

        h, w = arr.shape[:2]
        prev_model = np.zeros((size, size))
        binary0 = np.zeros((h, w), dtype=np.uint8)
        prob0 = np.zeros((h, w))
        if req.initial_mask_png is not None:
            m = _decode_png(req.initial_mask_png, "initial_mask_png")
            if m.size != img.size:
                raise HTTPException(
                    400, f"initial_mask_png: size {m.size} does not match "
                         f"image size {img.size}")
            mask = (np.asarray(m.convert("L")) >= 128).astype(np.uint8)
            session.initial_mask = mask
            fitted_m, _, _ = _fit_to_frame(
                mask[:, :, None].astype(np.float64), size)
            prev_model = (fitted_m[:, :, 0] >= 0.5).astype(np.float64)
            binary0 = mask
            prob0 = mask.astype(np.float64)
        if req.gt_png is not None:
            g = _decode_png(req.gt_png, "gt_png")
            if g.size != img.size:
                raise HTTPException(
                    400, f"gt_png: size {g.size} does not match image size "
                         f"{img.size}")
            session.gt = (np.asarray(g.convert("L")) >= 128).astype(np.uint8)

        session.history.append(_HistoryEntry(
            clicks=[], prev=prev_model, binary=binary0, prob=prob0))
        sid = secrets.token_hex(16)
        with registry_lock:
            sessions[sid] = session
            while len(sessions) > max_sessions:
                sessions.popitem(last=False)
        return {"session_id": sid, "height": h, "width": w,
                "correction_mode": session.initial_mask is not None}

    @app.get("/session/{session_id}")
    def session_info(session_id: str):
        session = get_session(session_id)
        with session.lock:
            h, w = session.image.shape[1:]
            return {
                "click_count": len(session.click_tuples),
                "clicks": [{"row": r, "col": c, "polarity": p}
                           for r, c, p in session.click_tuples],
                "height": h, "width": w,
                "correction_mode": session.initial_mask is not None,
                "undo_depth": len(session.history) - 1,
            }

    @app.post("/session/{session_id}/click")
    def add_click(session_id: str, req: ClickRequest):
        session = get_session(session_id)
        with session.lock:
            h, w = session.image.shape[1:]
            if not (0 <= req.row < h and 0 <= req.col < w):
                raise HTTPException(
                    422, f"click ({req.row}, {req.col}) outside {h}x{w}")
            if req.polarity not in (POSITIVE, NEGATIVE):
                raise HTTPException(422, "polarity must be 0 or 1")
            new_clicks = session.click_tuples + [(req.row, req.col, req.polarity)]
            cs = ClickSet(size, size)
            for r, c, pol in new_clicks:
                mr, mc = session.to_model(r, c)
                cs.add(mr, mc, pol)
            prev = session.history[-1].prev
            result = run_model(session, cs, prev)
            prob_model, binary_model = model.predict_mask(result.logits)
            session.history.append(_HistoryEntry(
                clicks=new_clicks,
                prev=prob_model,
                binary=_to_original(binary_model, session).astype(np.uint8),
                prob=_to_original(prob_model, session)))
            return state_payload(session)

    @app.post("/session/{session_id}/undo")
    def undo(session_id: str):
        session = get_session(session_id)
        with session.lock:
            if len(session.history) <= 1:
                raise HTTPException(409, "nothing to undo")
            session.history.pop()
            return state_payload(session)

    @app.post("/session/{session_id}/reset")
    def reset(session_id: str):
        session = get_session(session_id)
        with session.lock:
            del session.history[1:]
            return state_payload(session)

    @app.get("/session/{session_id}/overlays")
    def overlays(session_id: str, stage: int = 0):
        session = get_session(session_id)
        if not (0 <= stage <= 3):
            raise HTTPException(422, f"stage must be 0..3, got {stage}")
        with session.lock:
            cs = session.click_set(size)
            # recompute the forward pass that produced the current mask, so
            # the heatmaps describe the state on screen
            prev = session.history[-2].prev if len(session.history) > 1 \
                else session.history[0].prev
            result = run_model(session, cs, prev)
            side = model.config.grid_side(stage)

            if result.similarity is not None:
                s = result.similarity[stage].values.data.reshape(side, side)
            else:
                s = np.ones((side, side))
            sim_gray = np.rint(np.clip(s, 0.0, 1.0) * 255.0)

            agg = aggregate_attention(result.attention[stage]).data
            rows = [click_to_patch(c, stage, model.config)
                    for c in cs.positives]
            if rows:
                att = agg[rows].mean(axis=0)
            else:
                att = agg.mean(axis=0)
            att = att.reshape(side, side)
            peak = att.max()
            att_gray = np.rint(att / peak * 255.0) if peak > 0 \
                else np.zeros_like(att)
            up = size // side
            sim_full = np.kron(sim_gray, np.ones((up, up)))
            att_full = np.kron(att_gray, np.ones((up, up)))
            return {
                "stage": stage,
                "similarity_png": _encode_png(_to_original(sim_full, session)),
                "attention_png": _encode_png(_to_original(att_full, session)),
            }

    @app.exception_handler(ValueError)
    def value_error_handler(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    return app


def serve(checkpoint: str, port: int = 8000, host: str = "127.0.0.1",
          max_sessions: int = 64) -> None:
    import uvicorn

    from .model.checkpoint import load_checkpoint
    model, _ = load_checkpoint(checkpoint)
    app = create_app(model, max_sessions=max_sessions)
    uvicorn.run(app, host=host, port=port, log_level="warning")
