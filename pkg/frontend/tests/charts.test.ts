import { describe, expect, it } from "vitest";
import {
  DEFAULT_LAYOUT,
  extent,
  linePath,
  scaleLinear,
  stepPath,
  svgChart,
  ticks,
} from "../src/charts.js";
import type { ChartSeries } from "../src/charts.js";

describe("scaleLinear", () => {
  it("maps the domain onto the range", () => {
    const s = scaleLinear([0, 10], [0, 100]);
    expect(s(0)).toBe(0);
    expect(s(5)).toBe(50);
    expect(s(10)).toBe(100);
  });

  it("supports inverted pixel ranges", () => {
    const s = scaleLinear([0, 10], [100, 0]);
    expect(s(0)).toBe(100);
    expect(s(10)).toBe(0);
  });

  it("pins a degenerate domain to mid-range", () => {
    const s = scaleLinear([7, 7], [0, 100]);
    expect(s(7)).toBe(50);
    expect(s(123)).toBe(50);
  });
});

describe("ticks", () => {
  it("picks 1/2/5 steps that cover the span", () => {
    expect(ticks(0, 10, 4)).toEqual([0, 5, 10]);
    expect(ticks(0, 100, 4)).toEqual([0, 50, 100]);
    expect(ticks(0, 7, 4)).toEqual([0, 2, 4, 6]);
    expect(ticks(0, 1, 4)).toEqual([0, 0.5, 1]);
  });

  it("collapses a flat domain to a single tick", () => {
    expect(ticks(3, 3)).toEqual([3]);
  });
});

const sx = scaleLinear([0, 10], [0, 100]);
const sy = scaleLinear([0, 10], [100, 0]);

describe("paths", () => {
  it("renders a straight polyline", () => {
    expect(
      linePath(
        [
          { x: 0, y: 0 },
          { x: 10, y: 10 },
        ],
        sx,
        sy,
      ),
    ).toBe("M0,100L100,0");
  });

  it("renders counters as hold-then-jump steps", () => {
    expect(
      stepPath(
        [
          { x: 0, y: 0 },
          { x: 5, y: 2 },
          { x: 10, y: 2 },
        ],
        sx,
        sy,
      ),
    ).toBe("M0,100H50V80H100V80");
  });

  it("returns nothing for an empty series", () => {
    expect(linePath([], sx, sy)).toBe("");
    expect(stepPath([], sx, sy)).toBe("");
  });

  it("keeps two decimals of pixel precision", () => {
    const tight = scaleLinear([0, 3], [0, 1]);
    expect(linePath([{ x: 1, y: 0 }], tight, sy)).toBe("M0.33,100");
  });
});

describe("extent", () => {
  it("spans every series", () => {
    const series: ChartSeries[] = [
      { label: "a", color: "#111", points: [{ x: 1, y: 5 }] },
      { label: "b", color: "#222", points: [{ x: 9, y: -2 }] },
    ];
    expect(extent(series, (p) => p.x)).toEqual([1, 9]);
    expect(extent(series, (p) => p.y)).toEqual([-2, 5]);
  });

  it("falls back to a unit interval when empty", () => {
    expect(extent([], (p) => p.x)).toEqual([0, 1]);
  });
});

describe("svgChart", () => {
  const series: ChartSeries[] = [
    {
      label: "merges",
      color: "#2ecc71",
      points: [
        { x: 0, y: 0 },
        { x: 50, y: 8 },
        { x: 100, y: 20 },
      ],
    },
    { label: "empty", color: "#123456", points: [] },
  ];

  it("emits one path per non-empty series plus grid and legend", () => {
    const html = svgChart(series);
    expect(html.startsWith(`<svg viewBox="0 0 ${DEFAULT_LAYOUT.width} ${DEFAULT_LAYOUT.height}"`)).toBe(true);
    expect(html.match(/<path /g)).toHaveLength(1);
    expect(html).toContain('stroke="#2ecc71"');
    expect(html.match(/class="grid"/g)).toHaveLength(ticks(0, 20).length);
    expect(html).toContain(">merges</text>");
    expect(html).toContain(">empty</text>"); // legend lists even quiet series
    expect(html).toContain("</svg>");
  });

  it("anchors the value axis at zero and honours a custom formatter", () => {
    const html = svgChart(
      [{ label: "x", color: "#fff", points: [{ x: 0, y: 5 }, { x: 1, y: 9 }] }],
      { format: (v) => `#${v}`, straight: true },
    );
    // baseline forced to zero, so the 0 gridline exists even though
    // every sample is above it
    expect(html).toContain(">#0</text>");
    expect(html).toContain("L");
    expect(html).not.toContain("H");
  });
});
