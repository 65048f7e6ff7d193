import { existsSync, readFileSync, statSync } from "fs";
import { join } from "path";
import Papa from "papaparse";
import { SchemaError } from "./types.js";

export const SWEEP_COLUMNS = [
  "seed", "eps", "x", "eps_log_q", "neg_J", "abs_err", "method", "ess_flag",
];
export const DENSITY_COLUMNS = ["x", "log_rho", "log_q", "se_log", "ess"];
export const RATE_COLUMNS = ["x", "J_value"];

/**
 * Parse a CSV file and check its header against the published schema.
 * Data rows may legitimately be empty for some callers; emptiness is the
 * caller's decision, a bad header never is.
 */
export function readCsv<T>(path: string, columns: string[]): T[] {
  if (!existsSync(path)) throw new SchemaError(`input file not found: ${path}`);
  const parsed = Papa.parse<T>(readFileSync(path, "utf8"), {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new SchemaError(`${path}: ${parsed.errors[0].message}`);
  }
  const fields = parsed.meta.fields ?? [];
  if (fields.join(",") !== columns.join(",")) {
    throw new SchemaError(
      `${path}: expected columns ${columns.join(",")}, found ${fields.join(",")}`
    );
  }
  return parsed.data;
}

export function readJson(path: string): any {
  if (!existsSync(path)) throw new SchemaError(`input file not found: ${path}`);
  try {
    return JSON.parse(readFileSync(path, "utf8"));
  } catch (err) {
    throw new SchemaError(`${path}: not valid JSON (${(err as Error).message})`);
  }
}

const KNOWN_FILES = [
  "sweep.csv",
  "summary.json",
  "density.csv",
  "rate.csv",
  "tracking.json",
];

/** Expand directories into the known report files they contain. */
export function expandInputs(inputs: string[]): string[] {
  const out: string[] = [];
  for (const p of inputs) {
    if (existsSync(p) && statSync(p).isDirectory()) {
      let found = false;
      for (const name of KNOWN_FILES) {
        const candidate = join(p, name);
        if (existsSync(candidate)) {
          out.push(candidate);
          found = true;
        }
      }
      if (!found) throw new SchemaError(`directory has no report files: ${p}`);
    } else {
      out.push(p);
    }
  }
  return out;
}

export function pickByName(inputs: string[], name: string): string[] {
  return inputs.filter((p) => p.endsWith(name));
}
