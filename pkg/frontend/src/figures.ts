/**
 * Figure construction from aggregate CSVs.
 *
 * Four kinds, one per benchmark figure:
 *  - regret:              cumulative regret vs time, one line per series
 *  - regret_over_sqrt_t:  the regret_over_sqrt_t column, verbatim
 *  - comparison:          like regret; labels starting with "naive" draw
 *                         dashed, everything else solid
 *  - selection:           like regret, series are agent-selection schemes
 *
 * Every kind shades mean +/- one across-seed standard deviation (scaled
 * by 1/sqrt(t) in the sqrt view).  Rendering is a pure function of the
 * parsed rows, so repeated invocations produce identical bytes.
 */

import { readFileSync, writeFileSync } from "fs";
import { AggregateRow, parseAggregateCsv } from "./csv.js";
import { PALETTE, Series, renderPlot } from "./svg.js";

export const FIGURE_KINDS = [
  "regret",
  "regret_over_sqrt_t",
  "comparison",
  "selection",
] as const;

export type FigureKind = (typeof FIGURE_KINDS)[number];

export interface FigureInput {
  label: string;
  path: string;
}

export interface FigureSpec {
  kind: FigureKind;
  inputs: FigureInput[];
  out: string;
  title?: string;
  xLabel?: string;
  yLabel?: string;
}

const TITLES: Record<FigureKind, [string, string]> = {
  regret: ["Expected regret vs time", "mean cumulative regret"],
  regret_over_sqrt_t: ["Regret growth rate", "regret / sqrt(t)"],
  comparison: ["Structured vs joint learner", "mean cumulative regret"],
  selection: ["Agent-selection schemes", "mean relative regret"],
};

function toSeries(
  kind: FigureKind,
  label: string,
  rows: AggregateRow[],
  color: string,
): Series {
  const xs = rows.map((r) => r.t);
  let ys: number[];
  let bandLo: number[];
  let bandHi: number[];
  if (kind === "regret_over_sqrt_t") {
    ys = rows.map((r) => r.regret_over_sqrt_t);
    bandLo = rows.map((r) => (r.regret_mean - r.regret_std) / Math.sqrt(r.t));
    bandHi = rows.map((r) => (r.regret_mean + r.regret_std) / Math.sqrt(r.t));
  } else {
    ys = rows.map((r) => r.regret_mean);
    bandLo = rows.map((r) => r.regret_mean - r.regret_std);
    bandHi = rows.map((r) => r.regret_mean + r.regret_std);
  }
  return {
    label,
    xs,
    ys,
    bandLo,
    bandHi,
    dashed: kind === "comparison" && label.startsWith("naive"),
    color,
  };
}

export function validateSpec(spec: FigureSpec): void {
  if (!FIGURE_KINDS.includes(spec.kind)) {
    throw new Error(
      `unknown figure kind ${spec.kind}; expected one of ${FIGURE_KINDS.join(", ")}`,
    );
  }
  if (spec.inputs.length === 0) {
    throw new Error("at least one input series is required");
  }
  const seen = new Set<string>();
  for (const input of spec.inputs) {
    if (seen.has(input.label)) {
      throw new Error(`duplicate series label ${input.label}`);
    }
    seen.add(input.label);
  }
}

/** Build the SVG text for a figure from already-loaded rows. */
export function buildFigure(
  spec: FigureSpec,
  data: Map<string, AggregateRow[]>,
): string {
  validateSpec(spec);
  const [title, yLabel] = TITLES[spec.kind];
  const series = spec.inputs.map((input, i) =>
    toSeries(spec.kind, input.label, data.get(input.label)!, PALETTE[i % PALETTE.length]),
  );
  return renderPlot({
    title: spec.title ?? title,
    xLabel: spec.xLabel ?? "time step t",
    yLabel: spec.yLabel ?? yLabel,
    series,
  });
}

/** Load the inputs, build the figure, and write the image file. */
export function render(spec: FigureSpec): void {
  validateSpec(spec);
  const data = new Map<string, AggregateRow[]>();
  for (const input of spec.inputs) {
    const text = readFileSync(input.path, "utf8");
    data.set(input.label, parseAggregateCsv(text, input.path));
  }
  writeFileSync(spec.out, buildFigure(spec, data));
}
