#!/usr/bin/env node
/**
 * mft-figures --kind K --inputs label=path[,label=path...] --out FILE
 *
 * Renders one figure (SVG) from experiment aggregate CSVs.  Exits 0 on
 * success, 2 on usage or input errors (message on stderr).
 */

import { realpathSync } from "fs";
import { pathToFileURL } from "url";
import { FIGURE_KINDS, FigureKind, FigureSpec, render } from "./figures.js";

const USAGE =
  "usage: mft-figures --kind <" +
  FIGURE_KINDS.join("|") +
  "> --inputs label=path[,label=path...] --out FILE";

export function parseArgs(argv: string[]): FigureSpec {
  const opts = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!flag.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(USAGE);
    }
    opts.set(flag.slice(2), argv[i + 1]);
  }
  const kind = opts.get("kind");
  const inputsText = opts.get("inputs");
  const out = opts.get("out");
  if (!kind || !inputsText || !out) {
    throw new Error(USAGE);
  }
  const inputs = inputsText.split(",").map((item) => {
    const eq = item.indexOf("=");
    if (eq <= 0) {
      throw new Error(`bad --inputs entry ${item}; expected label=path`);
    }
    return { label: item.slice(0, eq), path: item.slice(eq + 1) };
  });
  return { kind: kind as FigureKind, inputs, out };
}

export function main(argv: string[]): number {
  try {
    render(parseArgs(argv));
    return 0;
  } catch (err) {
    console.error(`mft-figures: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
}

function invokedDirectly(): boolean {
  if (!process.argv[1]) return false;
  try {
    return import.meta.url === pathToFileURL(realpathSync(process.argv[1])).href;
  } catch {
    return false;
  }
}

if (invokedDirectly()) {
  process.exit(main(process.argv.slice(2)));
}

