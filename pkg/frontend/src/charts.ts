// SVG chart building as pure string functions: value series in, markup
// out. No DOM access here, which keeps every path and tick computation
// unit-testable byte for byte.

export interface XY {
  x: number;
  y: number;
}

export interface ChartSeries {
  label: string;
  color: string;
  points: XY[];
}

export interface ChartLayout {
  width: number;
  height: number;
  padLeft: number;
  padRight: number;
  padTop: number;
  padBottom: number;
}

export const DEFAULT_LAYOUT: ChartLayout = {
  width: 560,
  height: 180,
  padLeft: 58,
  padRight: 12,
  padTop: 10,
  padBottom: 22,
};

/** Linear map from a value domain onto a pixel range; a degenerate domain
 * pins every value to the middle of the range. */
export function scaleLinear(
  domain: [number, number],
  range: [number, number],
): (value: number) => number {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  if (d0 === d1) return () => (r0 + r1) / 2;
  const k = (r1 - r0) / (d1 - d0);
  return (value: number) => r0 + (value - d0) * k;
}

/** Round tick positions covering [min, max]: at most `count` multiples of
 * a 1/2/5 step. Always returns at least the two endpoints' neighbours. */
export function ticks(min: number, max: number, count = 4): number[] {
  if (min === max) return [min];
  const span = max - min;
  const rawStep = span / Math.max(count, 1);
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  const norm = rawStep / mag;
  const step = (norm >= 5 ? 10 : norm >= 2 ? 5 : norm >= 1 ? 2 : 1) * mag;
  const out: number[] = [];
  for (let v = Math.ceil(min / step) * step; v <= max + step / 1e6; v += step) {
    out.push(Math.round(v * 1e9) / 1e9); // clear float crumbs off the grid
  }
  return out;
}

const px = (n: number): string => String(Math.round(n * 100) / 100);

/** Straight polyline through the points. */
export function linePath(points: XY[], sx: (x: number) => number, sy: (y: number) => number): string {
  if (points.length === 0) return "";
  const parts = points.map((p, i) => `${i === 0 ? "M" : "L"}${px(sx(p.x))},${px(sy(p.y))}`);
  return parts.join("");
}

/** Step-after path: each value holds until the next sample. The honest
 * shape for cumulative counters, which only move at events. */
export function stepPath(points: XY[], sx: (x: number) => number, sy: (y: number) => number): string {
  if (points.length === 0) return "";
  let d = `M${px(sx(points[0].x))},${px(sy(points[0].y))}`;
  for (let i = 1; i < points.length; i++) {
    d += `H${px(sx(points[i].x))}V${px(sy(points[i].y))}`;
  }
  return d;
}

/** Joint [min, max] over every series' values on one axis. */
export function extent(series: ChartSeries[], pick: (p: XY) => number): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    for (const p of s.points) {
      const v = pick(p);
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (lo === Infinity) return [0, 1];
  return [lo, hi];
}

export interface ChartOptions {
  layout?: ChartLayout;
  /** Render values as axis labels; defaults to String. */
  format?: (value: number) => string;
  /** Use straight segments instead of steps. */
  straight?: boolean;
}

/**
 * Render a counter chart as a standalone `<svg>` string: y gridlines with
 * labels, one step path per series, and an inline legend.
 */
export function svgChart(series: ChartSeries[], options: ChartOptions = {}): string {
  const layout = options.layout ?? DEFAULT_LAYOUT;
  const format = options.format ?? ((v: number) => String(v));
  const { width, height, padLeft, padRight, padTop, padBottom } = layout;
  const drawn = series.filter((s) => s.points.length > 0);
  const [x0, x1] = extent(drawn, (p) => p.x);
  let [y0, y1] = extent(drawn, (p) => p.y);
  if (y0 > 0) y0 = 0; // counters read from a zero baseline
  const sx = scaleLinear([x0, x1], [padLeft, width - padRight]);
  const sy = scaleLinear([y0, y1], [height - padBottom, padTop]);
  const parts: string[] = [
    `<svg viewBox="0 0 ${width} ${height}" class="chart" role="img">`,
  ];
  for (const tick of ticks(y0, y1)) {
    const y = px(sy(tick));
    parts.push(
      `<line x1="${px(padLeft)}" y1="${y}" x2="${px(width - padRight)}" y2="${y}" class="grid"/>`,
      `<text x="${px(padLeft - 6)}" y="${y}" class="tick" text-anchor="end" dominant-baseline="middle">${format(tick)}</text>`,
    );
  }
  for (const s of drawn) {
    const d = options.straight ? linePath(s.points, sx, sy) : stepPath(s.points, sx, sy);
    parts.push(`<path d="${d}" fill="none" stroke="${s.color}" stroke-width="1.5"/>`);
  }
  let legendX = padLeft;
  for (const s of series) {
    parts.push(
      `<circle cx="${px(legendX + 4)}" cy="${px(height - 6)}" r="3" fill="${s.color}"/>`,
      `<text x="${px(legendX + 11)}" y="${px(height - 2)}" class="legend">${s.label}</text>`,
    );
    legendX += 14 + 7 * s.label.length;
  }
  parts.push("</svg>");
  return parts.join("");
}
