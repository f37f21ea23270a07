/**
 * Minimal deterministic SVG line plots: fixed canvas, fixed palette, no
 * timestamps or generated ids, so identical inputs give identical bytes.
 */

export interface Series {
  label: string;
  xs: number[];
  ys: number[];
  /** optional shaded band (same x grid as xs) */
  bandLo?: number[];
  bandHi?: number[];
  dashed?: boolean;
  color: string;
}

export interface PlotOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  width?: number;
  height?: number;
}

export const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
  "#7f7f7f",
];

/** Stable short formatting for coordinates and tick labels. */
export function fmt(x: number): string {
  if (!Number.isFinite(x)) return "0";
  if (x === 0) return "0";
  const s = x.toPrecision(6);
  return s.includes(".") || s.includes("e")
    ? s.replace(/\.?0+($|e)/, "$1")
    : s;
}

function niceStep(span: number, target: number): number {
  const raw = span / Math.max(target, 1);
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const m of [1, 2, 5, 10]) {
    if (raw <= m * mag) return m * mag;
  }
  return 10 * mag;
}

export function ticks(lo: number, hi: number, target = 6): number[] {
  if (!(hi > lo)) return [lo];
  const step = niceStep(hi - lo, target);
  const first = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = first; v <= hi + 1e-12 * step; v += step) {
    out.push(Math.abs(v) < 1e-12 * step ? 0 : v);
  }
  return out;
}

interface Extent {
  lo: number;
  hi: number;
}

function extend(ext: Extent, values: number[]): void {
  for (const v of values) {
    if (!Number.isFinite(v)) continue;
    if (v < ext.lo) ext.lo = v;
    if (v > ext.hi) ext.hi = v;
  }
}

const esc = (s: string) =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

export function renderPlot(opts: PlotOptions): string {
  const width = opts.width ?? 760;
  const height = opts.height ?? 480;
  const margin = { left: 78, right: 18, top: 42, bottom: 56 };
  const iw = width - margin.left - margin.right;
  const ih = height - margin.top - margin.bottom;

  const xExt: Extent = { lo: Infinity, hi: -Infinity };
  const yExt: Extent = { lo: Infinity, hi: -Infinity };
  for (const s of opts.series) {
    extend(xExt, s.xs);
    extend(yExt, s.ys);
    if (s.bandLo) extend(yExt, s.bandLo);
    if (s.bandHi) extend(yExt, s.bandHi);
  }
  if (!Number.isFinite(xExt.lo)) Object.assign(xExt, { lo: 0, hi: 1 });
  if (!Number.isFinite(yExt.lo)) Object.assign(yExt, { lo: 0, hi: 1 });
  if (xExt.hi === xExt.lo) xExt.hi = xExt.lo + 1;
  if (yExt.hi === yExt.lo) {
    yExt.lo -= 0.5;
    yExt.hi += 0.5;
  }
  // small vertical padding so lines do not sit on the frame
  const pad = 0.04 * (yExt.hi - yExt.lo);
  yExt.lo -= pad;
  yExt.hi += pad;

  const sx = (x: number) => margin.left + ((x - xExt.lo) / (xExt.hi - xExt.lo)) * iw;
  const sy = (y: number) => margin.top + ih - ((y - yExt.lo) / (yExt.hi - yExt.lo)) * ih;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
  );
  parts.push(`<rect width="${width}" height="${height}" fill="#ffffff"/>`);

  // frame and grid
  for (const tx of ticks(xExt.lo, xExt.hi)) {
    const X = fmt(sx(tx));
    parts.push(
      `<line x1="${X}" y1="${margin.top}" x2="${X}" y2="${margin.top + ih}" ` +
        `stroke="#dddddd" stroke-width="1"/>`,
      `<text x="${X}" y="${margin.top + ih + 20}" font-size="12" ` +
        `text-anchor="middle" fill="#333333">${fmt(tx)}</text>`,
    );
  }
  for (const ty of ticks(yExt.lo, yExt.hi)) {
    const Y = fmt(sy(ty));
    parts.push(
      `<line x1="${margin.left}" y1="${Y}" x2="${margin.left + iw}" y2="${Y}" ` +
        `stroke="#dddddd" stroke-width="1"/>`,
      `<text x="${margin.left - 8}" y="${Y}" font-size="12" dy="0.35em" ` +
        `text-anchor="end" fill="#333333">${fmt(ty)}</text>`,
    );
  }
  parts.push(
    `<rect x="${margin.left}" y="${margin.top}" width="${iw}" height="${ih}" ` +
      `fill="none" stroke="#333333" stroke-width="1"/>`,
  );

  // bands first so the lines draw on top
  for (const s of opts.series) {
    if (!s.bandLo || !s.bandHi) continue;
    const pts: string[] = [];
    for (let i = 0; i < s.xs.length; i++) {
      if (!Number.isFinite(s.xs[i]) || !Number.isFinite(s.bandHi[i])) continue;
      pts.push(`${fmt(sx(s.xs[i]))},${fmt(sy(s.bandHi[i]))}`);
    }
    for (let i = s.xs.length - 1; i >= 0; i--) {
      if (!Number.isFinite(s.xs[i]) || !Number.isFinite(s.bandLo[i])) continue;
      pts.push(`${fmt(sx(s.xs[i]))},${fmt(sy(s.bandLo[i]))}`);
    }
    if (pts.length >= 3) {
      parts.push(
        `<polygon points="${pts.join(" ")}" fill="${s.color}" ` +
          `fill-opacity="0.15" stroke="none"/>`,
      );
    }
  }

  for (const s of opts.series) {
    const pts: string[] = [];
    for (let i = 0; i < s.xs.length; i++) {
      if (!Number.isFinite(s.xs[i]) || !Number.isFinite(s.ys[i])) continue;
      pts.push(`${fmt(sx(s.xs[i]))},${fmt(sy(s.ys[i]))}`);
    }
    const dash = s.dashed ? ` stroke-dasharray="7 4"` : "";
    parts.push(
      `<polyline points="${pts.join(" ")}" fill="none" stroke="${s.color}" ` +
        `stroke-width="1.8"${dash}/>`,
    );
  }

  // legend (top-left inside the frame)
  opts.series.forEach((s, i) => {
    const y = margin.top + 16 + 18 * i;
    const dash = s.dashed ? ` stroke-dasharray="7 4"` : "";
    parts.push(
      `<line x1="${margin.left + 10}" y1="${y}" x2="${margin.left + 38}" ` +
        `y2="${y}" stroke="${s.color}" stroke-width="1.8"${dash}/>`,
      `<text x="${margin.left + 44}" y="${y}" font-size="12" dy="0.35em" ` +
        `fill="#333333">${esc(s.label)}</text>`,
    );
  });

  parts.push(
    `<text x="${width / 2}" y="24" font-size="15" text-anchor="middle" ` +
      `fill="#111111">${esc(opts.title)}</text>`,
    `<text x="${margin.left + iw / 2}" y="${height - 14}" font-size="13" ` +
      `text-anchor="middle" fill="#111111">${esc(opts.xLabel)}</text>`,
    `<text x="20" y="${margin.top + ih / 2}" font-size="13" text-anchor="middle" ` +
      `fill="#111111" transform="rotate(-90 20 ${margin.top + ih / 2})">` +
      `${esc(opts.yLabel)}</text>`,
  );
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
