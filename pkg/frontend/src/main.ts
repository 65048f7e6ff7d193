#!/usr/bin/env node
// Batch figure tool: --kind <name> --in <file-or-dir> [--in ...] --out <svg>
import { parseArgs } from "node:util";
import { writeFigure } from "./figures.js";
import { FIGURE_KINDS, FigureKind, FigureSpec, SchemaError } from "./types.js";

const USAGE = `usage: figures --kind <${FIGURE_KINDS.join("|")}> --in PATH [--in PATH ...] --out FILE.svg [--width N] [--height N]`;

export function run(argv: string[]): number {
  let values;
  try {
    values = parseArgs({
      args: argv,
      options: {
        kind: { type: "string" },
        in: { type: "string", multiple: true },
        out: { type: "string" },
        width: { type: "string" },
        height: { type: "string" },
      },
    }).values;
  } catch (err) {
    console.error(`${(err as Error).message}\n${USAGE}`);
    return 2;
  }
  if (!values.kind || !values.in?.length || !values.out) {
    console.error(USAGE);
    return 2;
  }
  if (!FIGURE_KINDS.includes(values.kind as FigureKind)) {
    console.error(`unknown kind: ${values.kind}\n${USAGE}`);
    return 2;
  }
  const spec: FigureSpec = {
    kind: values.kind as FigureKind,
    inputs: values.in,
    output: values.out,
    width: values.width ? Number(values.width) : undefined,
    height: values.height ? Number(values.height) : undefined,
  };
  try {
    writeFigure(spec);
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
  console.log(`wrote ${spec.output}`);
  return 0;
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(run(process.argv.slice(2)));
}
