import { mkdirSync, writeFileSync } from "fs";
import { dirname, basename, join } from "path";
import * as echarts from "echarts";
import {
  DENSITY_COLUMNS,
  RATE_COLUMNS,
  SWEEP_COLUMNS,
  expandInputs,
  pickByName,
  readCsv,
  readJson,
} from "./io.js";
import {
  DensityRow,
  FigureSpec,
  RateRow,
  SchemaError,
  SweepRow,
  TrackingStats,
} from "./types.js";

const AXIS_TEXT = { nameLocation: "middle" as const, nameGap: 32 };

function baseOption(title: string): any {
  return {
    animation: false,
    backgroundColor: "#ffffff",
    title: { text: title, left: "center", textStyle: { fontSize: 14 } },
    grid: { left: 70, right: 30, top: 60, bottom: 55 },
  };
}

/** Per-seed sup errors as scatter, per-eps medians as a line, log-log. */
export function sweepConvergenceOption(sweepCsv: string, summaryJson: string): any {
  const rows = readCsv<SweepRow>(sweepCsv, SWEEP_COLUMNS);
  if (rows.length === 0) {
    throw new SchemaError(`${sweepCsv} has no data rows (empty seed set?)`);
  }
  const summary = readJson(summaryJson);
  if (typeof summary.median_sup_err !== "object" || summary.median_sup_err === null) {
    throw new SchemaError(`${summaryJson} lacks the median_sup_err map`);
  }
  const sup = new Map<string, number>();
  for (const r of rows) {
    const key = `${r.seed}|${r.eps}`;
    sup.set(key, Math.max(sup.get(key) ?? 0, r.abs_err));
  }
  const scatter: [number, number][] = [];
  for (const [key, v] of sup) scatter.push([Number(key.split("|")[1]), v]);
  scatter.sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  const medians = Object.entries(summary.median_sup_err)
    .map(([eps, v]) => [Number(eps), v as number] as [number, number])
    .sort((a, b) => a[0] - b[0]);

  return {
    ...baseOption("Convergence of the scaled log-density error"),
    legend: { top: 28 },
    xAxis: { type: "log", name: "ε", ...AXIS_TEXT },
    yAxis: {
      type: "log",
      name: "sup_x |ε log q̂ + J̄(x, X₁)|",
      ...AXIS_TEXT,
      nameGap: 48,
    },
    series: [
      {
        name: "per-seed sup error",
        type: "scatter",
        symbolSize: 6,
        itemStyle: { opacity: 0.45 },
        data: scatter,
      },
      {
        name: "median over seeds",
        type: "line",
        symbolSize: 8,
        lineStyle: { width: 2 },
        data: medians,
      },
    ],
  };
}

function sameGrid(a: number[], b: number[]): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if (Math.abs(a[i] - b[i]) > 1e-9 * (1 + Math.abs(b[i]))) return false;
  }
  return true;
}

function methodTag(densityCsv: string): { method: string; eps: number | null } {
  const metaPath = join(dirname(densityCsv), "metadata.json");
  try {
    const meta = readJson(metaPath);
    return { method: String(meta.method), eps: Number(meta.eps) };
  } catch {
    return { method: basename(dirname(densityCsv)), eps: null };
  }
}

/** Normalized densities per method plus the rate-function profile. */
export function densityOverlayOption(densityCsvs: string[], rateCsv: string): any {
  if (densityCsvs.length === 0) {
    throw new SchemaError("density-overlay needs at least one density.csv");
  }
  const rate = readCsv<RateRow>(rateCsv, RATE_COLUMNS);
  if (rate.length < 2) throw new SchemaError(`${rateCsv} has too few rows`);
  const xs = rate.map((r) => r.x);

  const series: any[] = [];
  let eps: number | null = null;
  for (const path of densityCsvs) {
    const rows = readCsv<DensityRow>(path, DENSITY_COLUMNS);
    if (rows.length === 0) throw new SchemaError(`${path} has no data rows`);
    if (!sameGrid(rows.map((r) => r.x), xs)) {
      throw new SchemaError(`${path}: x grid does not match ${rateCsv}`);
    }
    const tag = methodTag(path);
    if (eps === null) eps = tag.eps;
    series.push({
      name: tag.method,
      type: "line",
      showSymbol: false,
      lineStyle: { width: 2 },
      data: rows.map((r) => [r.x, Math.exp(r.log_q)]),
    });
  }
  if (eps === null || !(eps > 0)) {
    throw new SchemaError("no metadata.json beside the densities carries eps");
  }

  const weights = rate.map((r) => Math.exp(-r.J_value / (eps as number)));
  let mass = 0;
  for (let i = 0; i + 1 < xs.length; i++) {
    mass += 0.5 * (weights[i] + weights[i + 1]) * (xs[i + 1] - xs[i]);
  }
  series.push({
    name: "exp(-J̄/ε), normalized",
    type: "line",
    showSymbol: false,
    lineStyle: { width: 2, type: "dashed" },
    data: xs.map((x, i) => [x, weights[i] / mass]),
  });

  return {
    ...baseOption(`Conditional density estimates, ε = ${eps}`),
    legend: { top: 28 },
    xAxis: { type: "value", name: "x", ...AXIS_TEXT },
    yAxis: { type: "value", name: "q̂(x)", ...AXIS_TEXT, nameGap: 48 },
    series,
  };
}

/** The rate function over its window, anchor marked at the minimum. */
export function rateCurveOption(rateCsv: string): any {
  const rate = readCsv<RateRow>(rateCsv, RATE_COLUMNS);
  if (rate.length < 2) throw new SchemaError(`${rateCsv} has too few rows`);
  let imin = 0;
  rate.forEach((r, i) => {
    if (r.J_value < rate[imin].J_value) imin = i;
  });
  return {
    ...baseOption("Rate function"),
    xAxis: { type: "value", name: "x", ...AXIS_TEXT },
    yAxis: { type: "value", name: "J̄(x, X₁)", ...AXIS_TEXT, nameGap: 48 },
    series: [
      {
        name: "J",
        type: "line",
        showSymbol: false,
        lineStyle: { width: 2 },
        data: rate.map((r) => [r.x, r.J_value]),
      },
      {
        name: "anchor",
        type: "scatter",
        symbolSize: 9,
        data: [[rate[imin].x, rate[imin].J_value]],
      },
    ],
  };
}

/** Tracking deviations against the horizon, with the fitted decay curve. */
export function lemmaMOption(trackingJson: string): any {
  const stats = readJson(trackingJson) as TrackingStats;
  if (!Array.isArray(stats.entries) || stats.entries.length === 0) {
    throw new SchemaError(`${trackingJson} has no entries`);
  }
  const scatter: [number, number][] = [];
  for (const entry of stats.entries) {
    const key = Object.keys(stats.sup_devs ?? {}).find(
      (k) => Number(k) === entry.eps
    );
    for (const d of key ? stats.sup_devs[key] : []) scatter.push([entry.T_eps, d]);
  }
  const medians = stats.entries
    .map((e) => [e.T_eps, e.median_sup_dev] as [number, number])
    .sort((a, b) => a[0] - b[0]);
  const cbar =
    stats.entries.reduce((s, e) => s + e.fitted_C, 0) / stats.entries.length;
  const tmin = medians[0][0] * 0.9;
  const tmax = medians[medians.length - 1][0] * 1.1;
  const fit: [number, number][] = [];
  for (let i = 0; i <= 50; i++) {
    const t = tmin + ((tmax - tmin) * i) / 50;
    fit.push([t, cbar / Math.sqrt(t)]);
  }
  return {
    ...baseOption("Filter tracking error vs horizon"),
    legend: { top: 28 },
    xAxis: {
      type: "log",
      name: "T_ε = log(1/ε)",
      ...AXIS_TEXT,
    },
    yAxis: {
      type: "log",
      name: "sup_s |m̃_s − X₁|",
      ...AXIS_TEXT,
      nameGap: 48,
    },
    series: [
      {
        name: "per-seed sup deviation",
        type: "scatter",
        symbolSize: 6,
        itemStyle: { opacity: 0.45 },
        data: scatter,
      },
      {
        name: "median",
        type: "line",
        symbolSize: 8,
        lineStyle: { width: 2 },
        data: medians,
      },
      {
        name: "C̄/√T",
        type: "line",
        showSymbol: false,
        lineStyle: { width: 1.5, type: "dashed" },
        data: fit,
      },
    ],
  };
}

export function buildOption(spec: FigureSpec): any {
  const inputs = expandInputs(spec.inputs);
  switch (spec.kind) {
    case "sweep-convergence": {
      const [sweep] = pickByName(inputs, "sweep.csv");
      const [summary] = pickByName(inputs, "summary.json");
      if (!sweep || !summary) {
        throw new SchemaError("sweep-convergence needs sweep.csv and summary.json");
      }
      return sweepConvergenceOption(sweep, summary);
    }
    case "density-overlay": {
      const densities = pickByName(inputs, "density.csv");
      const [rate] = pickByName(inputs, "rate.csv");
      if (!rate) throw new SchemaError("density-overlay needs a rate.csv");
      return densityOverlayOption(densities, rate);
    }
    case "rate-curve": {
      const [rate] = pickByName(inputs, "rate.csv");
      if (!rate) throw new SchemaError("rate-curve needs a rate.csv");
      return rateCurveOption(rate);
    }
    case "lemma-m": {
      const [tracking] = pickByName(inputs, "tracking.json");
      if (!tracking) throw new SchemaError("lemma-m needs a tracking.json");
      return lemmaMOption(tracking);
    }
    default:
      throw new SchemaError(`unknown figure kind: ${(spec as any).kind}`);
  }
}

/**
 * The renderer embeds process-global counters in class and clip-path names
 * (zr3-cls-17 and the like). Renumber them by first appearance so the text
 * depends only on the drawing, not on how many charts this process made.
 */
function stableIdentifiers(svg: string): string {
  const seen = new Map<string, string>();
  return svg.replace(/zr\d+-(cls-|c)(\d+)/g, (token, prefix) => {
    let name = seen.get(token);
    if (name === undefined) {
      name = `zr-${prefix}${seen.size}`;
      seen.set(token, name);
    }
    return name;
  });
}

/** Render to SVG text. Pure function of the input files, no timestamps. */
export function renderFigure(spec: FigureSpec): string {
  const option = buildOption(spec);
  const chart = echarts.init(null, null, {
    renderer: "svg",
    ssr: true,
    width: spec.width ?? 800,
    height: spec.height ?? 520,
  });
  chart.setOption(option);
  const svg = chart.renderToSVGString();
  chart.dispose();
  return stableIdentifiers(svg);
}

/** Render and write; nothing is written when rendering fails. */
export function writeFigure(spec: FigureSpec): void {
  const svg = renderFigure(spec);
  mkdirSync(dirname(spec.output), { recursive: true });
  writeFileSync(spec.output, svg);
}
