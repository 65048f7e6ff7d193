export type FigureKind =
  | "sweep-convergence"
  | "density-overlay"
  | "rate-curve"
  | "lemma-m";

export const FIGURE_KINDS: FigureKind[] = [
  "sweep-convergence",
  "density-overlay",
  "rate-curve",
  "lemma-m",
];

export interface FigureSpec {
  kind: FigureKind;
  inputs: string[];
  output: string;
  width?: number;
  height?: number;
}

export interface SweepRow {
  seed: number;
  eps: number;
  x: number;
  eps_log_q: number;
  neg_J: number;
  abs_err: number;
  method: string;
  ess_flag: number;
}

export interface DensityRow {
  x: number;
  log_rho: number;
  log_q: number;
  se_log: number;
  ess: number;
}

export interface RateRow {
  x: number;
  J_value: number;
}

export interface TrackingEntry {
  eps: number;
  T_eps: number;
  median_sup_dev: number;
  fitted_C: number;
}

export interface TrackingStats {
  entries: TrackingEntry[];
  sup_devs: Record<string, number[]>;
}

/** Raised for missing inputs, header mismatches, empty tables. */
export class SchemaError extends Error {}
