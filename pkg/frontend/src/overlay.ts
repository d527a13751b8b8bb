/**
 * Pure view layer: turn a UiState into an ordered list of draw operations.
 *
 * Keeping this a data transformation (no canvas access) lets the tests
 * assert on exactly what would be painted: which PNG is blended, which
 * markers with which colors, in what order. main.ts executes the plan.
 */

import type { ClickRecord } from "./api.js";
import type { UiState } from "./state.js";

// Marker color convention: green = positive/foreground, red = negative.
export const POSITIVE_COLOR = "#22c55e";
export const NEGATIVE_COLOR = "#ef4444";
export const MASK_ALPHA = 0.45;
export const HEATMAP_ALPHA = 0.6;

export interface ImageOp {
  kind: "image";
}

export interface BlendOp {
  kind: "blend";
  png: string;
  alpha: number;
  tint: "mask" | "heat";
}

export interface MarkerOp {
  kind: "marker";
  row: number;
  col: number;
  color: string;
  pending: boolean;
}

export type DrawOp = ImageOp | BlendOp | MarkerOp;

export function markerColor(polarity: 0 | 1): string {
  return polarity === 1 ? POSITIVE_COLOR : NEGATIVE_COLOR;
}

function marker(c: ClickRecord, pending: boolean): MarkerOp {
  return {
    kind: "marker",
    row: c.row,
    col: c.col,
    color: markerColor(c.polarity),
    pending,
  };
}

/** Ordered paint list: base image, then one overlay blend, then markers. */
export function renderPlan(state: UiState): DrawOp[] {
  const ops: DrawOp[] = [{ kind: "image" }];

  if (state.overlayMode === "mask") {
    if (state.maskPng !== null) {
      ops.push({ kind: "blend", png: state.maskPng, alpha: MASK_ALPHA, tint: "mask" });
    }
  } else if (state.heatmapPng !== null) {
    ops.push({ kind: "blend", png: state.heatmapPng, alpha: HEATMAP_ALPHA, tint: "heat" });
  }

  for (const c of state.clicks) ops.push(marker(c, false));
  if (state.pending !== null) ops.push(marker(state.pending, true));
  return ops;
}

/** Marker radius in image pixels, scaled so markers stay visible on small frames. */
export function markerRadius(imageWidth: number): number {
  return Math.max(3, Math.round(imageWidth / 80));
}
