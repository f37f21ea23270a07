/**
 * Aggregate-CSV parsing.
 *
 * The experiment harness writes one aggregate file per series with the
 * fixed header `t,regret_mean,regret_std,regret_over_sqrt_t,n_eff`.
 * Parsing is strict about the presence of those columns (extra columns
 * are ignored) and tolerant about non-finite values, which occur when
 * every seed has diverged at a time step.
 */

export const AGGREGATE_COLUMNS = [
  "t",
  "regret_mean",
  "regret_std",
  "regret_over_sqrt_t",
  "n_eff",
] as const;

export interface AggregateRow {
  t: number;
  regret_mean: number;
  regret_std: number;
  regret_over_sqrt_t: number;
  n_eff: number;
}

export function parseAggregateCsv(text: string, source: string): AggregateRow[] {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new Error(`${source}: empty file; expected header ${AGGREGATE_COLUMNS.join(",")}`);
  }
  const header = lines[0].split(",").map((h) => h.trim());
  const index = new Map<string, number>();
  header.forEach((name, i) => index.set(name, i));
  const missing = AGGREGATE_COLUMNS.filter((c) => !index.has(c));
  if (missing.length > 0) {
    throw new Error(
      `${source}: missing column(s) ${missing.join(", ")}; ` +
        `expected schema ${AGGREGATE_COLUMNS.join(",")}`,
    );
  }
  const rows: AggregateRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    const get = (col: (typeof AGGREGATE_COLUMNS)[number]) =>
      Number(parts[index.get(col)!]);
    const row: AggregateRow = {
      t: get("t"),
      regret_mean: get("regret_mean"),
      regret_std: get("regret_std"),
      regret_over_sqrt_t: get("regret_over_sqrt_t"),
      n_eff: get("n_eff"),
    };
    if (!Number.isFinite(row.t)) {
      throw new Error(`${source}: line ${i + 1}: bad time value ${parts[index.get("t")!]}`);
    }
    rows.push(row);
  }
  return rows;
}
