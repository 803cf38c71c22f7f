/** DZI descriptor parsing and level geometry.
 *
 * Level L of a pyramid over a WxH image has dimensions
 * ceil(dim / 2^(maxLevel - L)) with maxLevel = ceil(log2(max(W, H)));
 * maxLevel is full resolution, level 0 is 1x1.
 */

export interface PyramidDescriptor {
  width: number;
  height: number;
  tileSize: number;
  overlap: number;
  format: string;
  maxLevel: number;
}

function attr(xml: string, name: string): string | null {
  const m = xml.match(new RegExp(`${name}\\s*=\\s*"([^"]*)"`));
  return m ? m[1] : null;
}

export function parseDescriptor(xml: string): PyramidDescriptor {
  if (!/<Image[\s>]/.test(xml)) {
    throw new Error("not a DZI descriptor: missing <Image> element");
  }
  const sizeMatch = xml.match(/<Size\b[^>]*>/);
  if (!sizeMatch) {
    throw new Error("malformed DZI descriptor: missing <Size> element");
  }
  const width = Number(attr(sizeMatch[0], "Width"));
  const height = Number(attr(sizeMatch[0], "Height"));
  const tileSize = Number(attr(xml, "TileSize"));
  const overlap = Number(attr(xml, "Overlap"));
  const format = attr(xml, "Format") ?? "png";
  if (
    !Number.isFinite(width) || !Number.isFinite(height) ||
    !Number.isFinite(tileSize) || !Number.isFinite(overlap) ||
    width < 1 || height < 1 || tileSize < 1
  ) {
    throw new Error("malformed DZI descriptor: bad Size/TileSize/Overlap");
  }
  return {
    width,
    height,
    tileSize,
    overlap,
    format,
    maxLevel: Math.max(0, Math.ceil(Math.log2(Math.max(width, height)))),
  };
}

export async function loadDescriptor(url: string, fetchFn = fetch): Promise<PyramidDescriptor> {
  const resp = await fetchFn(url);
  if (!resp.ok) {
    throw new Error(`cannot load descriptor ${url}: HTTP ${resp.status}`);
  }
  return parseDescriptor(await resp.text());
}

/** Fraction of full resolution at a level: 2^(level - maxLevel). */
export function levelScale(desc: PyramidDescriptor, level: number): number {
  return Math.pow(2, level - desc.maxLevel);
}

export function levelDims(desc: PyramidDescriptor, level: number): [number, number] {
  if (level < 0 || level > desc.maxLevel) {
    throw new Error(`level ${level} outside 0..${desc.maxLevel}`);
  }
  const shift = Math.pow(2, desc.maxLevel - level);
  return [Math.max(1, Math.ceil(desc.width / shift)), Math.max(1, Math.ceil(desc.height / shift))];
}

export function tileCounts(desc: PyramidDescriptor, level: number): [number, number] {
  const [w, h] = levelDims(desc, level);
  return [Math.ceil(w / desc.tileSize), Math.ceil(h / desc.tileSize)];
}

/** URL of one tile relative to where the .dzi lives. */
export function tileUrl(base: string, name: string, desc: PyramidDescriptor, level: number, col: number, row: number): string {
  return `${base}${name}_files/${level}/${col}_${row}.${desc.format}`;
}

/** Pixel rectangle a tile covers within its level, overlap margins included. */
export function tileRect(
  desc: PyramidDescriptor,
  level: number,
  col: number,
  row: number,
): { x: number; y: number; w: number; h: number } {
  const [lw, lh] = levelDims(desc, level);
  const ts = desc.tileSize;
  const x = col * ts - (col > 0 ? desc.overlap : 0);
  const y = row * ts - (row > 0 ? desc.overlap : 0);
  const x1 = Math.min((col + 1) * ts + desc.overlap, lw);
  const y1 = Math.min((row + 1) * ts + desc.overlap, lh);
  return { x, y, w: x1 - x, h: y1 - y };
}
