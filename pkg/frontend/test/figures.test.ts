import { mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";
import { AggregateRow } from "../src/csv.js";
import { FigureSpec, buildFigure, render } from "../src/figures.js";

const HEADER = "t,regret_mean,regret_std,regret_over_sqrt_t,n_eff";

function rows(values: Array<[number, number, number]>): AggregateRow[] {
  return values.map(([t, mean, std]) => ({
    t,
    regret_mean: mean,
    regret_std: std,
    regret_over_sqrt_t: mean / Math.sqrt(t),
    n_eff: 10,
  }));
}

function dataFor(labels: string[], series?: AggregateRow[]) {
  const data = new Map<string, AggregateRow[]>();
  for (const label of labels) {
    data.set(label, series ?? rows([[10, 1, 0.2], [20, 2, 0.4], [30, 3, 0.5]]));
  }
  return data;
}

function spec(kind: FigureSpec["kind"], labels: string[]): FigureSpec {
  return {
    kind,
    inputs: labels.map((label) => ({ label, path: `${label}.csv` })),
    out: "unused.svg",
  };
}

describe("buildFigure", () => {
  it("renders a flat line for constant zero regret", () => {
    const data = dataFor(["z"], rows([[1, 0, 0], [2, 0, 0], [3, 0, 0]]));
    const svg = buildFigure(spec("regret", ["z"]), data);
    const match = svg.match(/<polyline points="([^"]+)"/);
    expect(match).not.toBeNull();
    const ys = match![1].split(" ").map((p) => p.split(",")[1]);
    expect(new Set(ys).size).toBe(1);
  });

  it("draws one styled line per series with legend entries", () => {
    const svg = buildFigure(spec("regret", ["n1", "n10"]), dataFor(["n1", "n10"]));
    expect((svg.match(/<polyline /g) ?? []).length).toBe(2);
    expect(svg).toContain(">n1</text>");
    expect(svg).toContain(">n10</text>");
    // distinct palette colors
    expect(svg).toContain("#1f77b4");
    expect(svg).toContain("#d62728");
  });

  it("dashes naive-labelled series only in comparison mode", () => {
    const labels = ["mf_n10", "naive_n10"];
    const cmp = buildFigure(spec("comparison", labels), dataFor(labels));
    const lines = cmp.match(/<polyline [^>]+/g)!;
    expect(lines[0]).not.toContain("stroke-dasharray");
    expect(lines[1]).toContain("stroke-dasharray");
    const plain = buildFigure(spec("regret", labels), dataFor(labels));
    for (const line of plain.match(/<polyline [^>]+/g)!) {
      expect(line).not.toContain("stroke-dasharray");
    }
  });

  it("plots the regret_over_sqrt_t column verbatim", () => {
    const data = dataFor(["a"], [
      { t: 4, regret_mean: 8, regret_std: 0, regret_over_sqrt_t: 99, n_eff: 5 },
      { t: 9, regret_mean: 9, regret_std: 0, regret_over_sqrt_t: 101, n_eff: 5 },
    ]);
    const svg = buildFigure(spec("regret_over_sqrt_t", ["a"]), data);
    // y-axis spans the column values, not mean/sqrt(t) recomputation
    expect(svg).toContain(">100</text>");
  });

  it("shades a mean +/- std band", () => {
    const svg = buildFigure(spec("selection", ["s"]), dataFor(["s"]));
    expect(svg).toContain("<polygon");
    expect(svg).toContain('fill-opacity="0.15"');
  });

  it("rejects unknown kinds, duplicates, and empty input lists", () => {
    expect(() =>
      buildFigure({ kind: "pie" as never, inputs: [{ label: "a", path: "a" }], out: "o" },
        dataFor(["a"])),
    ).toThrowError(/unknown figure kind/);
    expect(() =>
      buildFigure(spec("regret", ["a", "a"]), dataFor(["a"])),
    ).toThrowError(/duplicate/);
    expect(() => buildFigure(spec("regret", []), new Map())).toThrowError(
      /at least one/,
    );
  });
});

describe("render", () => {
  it("is byte-identical across repeated invocations", () => {
    const dir = mkdtempSync(join(tmpdir(), "mftfig-"));
    const csv = `${HEADER}\n10,1.5,0.2,0.474,8\n20,2.2,0.3,0.492,8\n`;
    const input = join(dir, "n10_aggregate.csv");
    writeFileSync(input, csv);
    const outA = join(dir, "a.svg");
    const outB = join(dir, "b.svg");
    const mk = (out: string): FigureSpec => ({
      kind: "regret",
      inputs: [{ label: "n10", path: input }],
      out,
    });
    render(mk(outA));
    render(mk(outB));
    expect(readFileSync(outA)).toEqual(readFileSync(outB));
    expect(readFileSync(outA, "utf8")).toContain("<svg");
  });

  it("propagates schema errors from inputs", () => {
    const dir = mkdtempSync(join(tmpdir(), "mftfig-"));
    const input = join(dir, "bad.csv");
    writeFileSync(input, "t,regret_mean\n1,1\n");
    expect(() =>
      render({
        kind: "regret",
        inputs: [{ label: "x", path: input }],
        out: join(dir, "x.svg"),
      }),
    ).toThrowError(/missing column/);
  });
});
