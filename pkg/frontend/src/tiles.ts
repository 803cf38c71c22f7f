/** Visible-tile selection and the A/B slider's per-layer partition. */

import { PyramidDescriptor, levelScale, tileCounts } from "./descriptor.js";
import { ViewportState, chooseLevel, visibleRect } from "./viewport.js";

export interface TileAddress {
  level: number;
  col: number;
  row: number;
}

export const PREFETCH_RING = 1;

function tileRange(
  desc: PyramidDescriptor,
  level: number,
  lo: number,
  hi: number,
  axis: "x" | "y",
  ring: number,
): [number, number] {
  const scale = levelScale(desc, level);
  const ts = desc.tileSize;
  const [cols, rows] = tileCounts(desc, level);
  const count = axis === "x" ? cols : rows;
  let a = Math.floor((lo * scale) / ts) - ring;
  let b = Math.floor(((hi - 1e-9) * scale) / ts) + ring;
  a = Math.max(0, a);
  b = Math.min(count - 1, b);
  return [a, b];
}

/** Tiles of the zoom-matched level intersecting the viewport, plus a
 * one-tile prefetch ring, row-major. */
export function visibleTiles(desc: PyramidDescriptor, state: ViewportState, ring = PREFETCH_RING): TileAddress[] {
  const level = chooseLevel(desc, state.zoom);
  const rect = visibleRect(desc, state);
  const x0 = Math.max(0, rect.x0);
  const y0 = Math.max(0, rect.y0);
  const x1 = Math.min(desc.width, rect.x1);
  const y1 = Math.min(desc.height, rect.y1);
  if (x1 <= x0 || y1 <= y0) {
    return [];
  }
  const [c0, c1] = tileRange(desc, level, x0, x1, "x", ring);
  const [r0, r1] = tileRange(desc, level, y0, y1, "y", ring);
  const out: TileAddress[] = [];
  for (let row = r0; row <= r1; row++) {
    for (let col = c0; col <= c1; col++) {
      out.push({ level, col, row });
    }
  }
  return out;
}

export interface SliderPartition {
  a: TileAddress[];
  b: TileAddress[];
  /** image-space x of the split line */
  splitX: number;
  disabled: boolean;
  message?: string;
}

export function descriptorsComparable(a: PyramidDescriptor, b: PyramidDescriptor): boolean {
  return a.width === b.width && a.height === b.height;
}

/** Partition tile fetches for the comparison slider: layer A shows left of
 * the split, layer B right of it. sliderPosition is the fraction of the
 * viewport given to B, measured from the right edge, so 0 shows only A. */
export function sliderTiles(
  descA: PyramidDescriptor,
  descB: PyramidDescriptor,
  state: ViewportState,
  ring = PREFETCH_RING,
): SliderPartition {
  if (!descriptorsComparable(descA, descB)) {
    return {
      a: visibleTiles(descA, state, ring),
      b: [],
      splitX: Infinity,
      disabled: true,
      message: `pyramid sizes differ: ${descA.width}x${descA.height} vs ${descB.width}x${descB.height}`,
    };
  }
  const rect = visibleRect(descA, state);
  const x0 = Math.max(0, rect.x0);
  const x1 = Math.min(descA.width, rect.x1);
  const splitX = x1 - state.sliderPosition * (x1 - x0);
  const level = chooseLevel(descA, state.zoom);
  const y0 = Math.max(0, rect.y0);
  const y1 = Math.min(descA.height, rect.y1);
  const a: TileAddress[] = [];
  const b: TileAddress[] = [];
  if (y1 > y0 && x1 > x0) {
    const [r0, r1] = tileRange(descA, level, y0, y1, "y", ring);
    if (splitX > x0) {
      const [c0, c1] = tileRange(descA, level, x0, Math.min(splitX, x1), "x", ring);
      for (let row = r0; row <= r1; row++) {
        for (let col = c0; col <= c1; col++) {
          a.push({ level, col, row });
        }
      }
    }
    if (splitX < x1) {
      const [c0, c1] = tileRange(descB, level, Math.max(splitX, x0), x1, "x", ring);
      for (let row = r0; row <= r1; row++) {
        for (let col = c0; col <= c1; col++) {
          b.push({ level, col, row });
        }
      }
    }
  }
  return { a, b, splitX, disabled: false };
}

export function tileKey(layer: string, t: TileAddress): string {
  return `${layer}:${t.level}:${t.col}_${t.row}`;
}
