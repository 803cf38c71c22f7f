/** Viewport state and navigation. Zoom is display pixels per full-res image
 * pixel, clamped between fit-to-screen and 4x native. */

import { PyramidDescriptor, levelScale } from "./descriptor.js";

export interface ViewportState {
  /** view center in normalized image coordinates (0..1 per axis) */
  centerX: number;
  centerY: number;
  /** display px per full-resolution image px */
  zoom: number;
  /** viewport size in CSS px */
  viewW: number;
  viewH: number;
  /** fraction of the viewport (from the right edge) showing layer B */
  sliderPosition: number;
}

export const MAX_NATIVE_ZOOM = 4;

export function fitZoom(desc: PyramidDescriptor, viewW: number, viewH: number): number {
  return Math.min(viewW / desc.width, viewH / desc.height);
}

export function clampZoom(desc: PyramidDescriptor, state: ViewportState, zoom: number): number {
  return Math.min(MAX_NATIVE_ZOOM, Math.max(fitZoom(desc, state.viewW, state.viewH), zoom));
}

export function initialState(desc: PyramidDescriptor, viewW: number, viewH: number): ViewportState {
  return {
    centerX: 0.5,
    centerY: 0.5,
    zoom: fitZoom(desc, viewW, viewH),
    viewW,
    viewH,
    sliderPosition: 0,
  };
}

/** Visible rectangle in full-resolution image pixels. */
export function visibleRect(desc: PyramidDescriptor, s: ViewportState): { x0: number; y0: number; x1: number; y1: number } {
  const w = s.viewW / s.zoom;
  const h = s.viewH / s.zoom;
  const cx = s.centerX * desc.width;
  const cy = s.centerY * desc.height;
  return { x0: cx - w / 2, y0: cy - h / 2, x1: cx + w / 2, y1: cy + h / 2 };
}

/** Pick the level whose pixels best match display pixels: the displayed
 * px-per-level-px ratio stays in [1, 2) until the top level runs out. */
export function chooseLevel(desc: PyramidDescriptor, zoom: number): number {
  const ideal = desc.maxLevel + Math.floor(Math.log2(zoom) + 1e-9);
  return Math.min(desc.maxLevel, Math.max(0, ideal));
}

export function pan(desc: PyramidDescriptor, s: ViewportState, dxPx: number, dyPx: number): ViewportState {
  return {
    ...s,
    centerX: clamp01(s.centerX - dxPx / s.zoom / desc.width),
    centerY: clamp01(s.centerY - dyPx / s.zoom / desc.height),
  };
}

/** Zoom by `factor` keeping the image point under (pxX, pxY) fixed. */
export function zoomAbout(
  desc: PyramidDescriptor,
  s: ViewportState,
  factor: number,
  pxX: number,
  pxY: number,
): ViewportState {
  const zoom = clampZoom(desc, s, s.zoom * factor);
  if (zoom === s.zoom) {
    return s;
  }
  const rect = visibleRect(desc, s);
  const imgX = rect.x0 + pxX / s.zoom;
  const imgY = rect.y0 + pxY / s.zoom;
  const newCx = imgX - (pxX - s.viewW / 2) / zoom;
  const newCy = imgY - (pxY - s.viewH / 2) / zoom;
  return {
    ...s,
    zoom,
    centerX: clamp01(newCx / desc.width),
    centerY: clamp01(newCy / desc.height),
  };
}

function clamp01(v: number): number {
  return Math.min(1, Math.max(0, v));
}

/** Resolution correctness: displayed px per chosen-level px. */
export function displayRatio(desc: PyramidDescriptor, zoom: number): number {
  return zoom / levelScale(desc, chooseLevel(desc, zoom));
}
