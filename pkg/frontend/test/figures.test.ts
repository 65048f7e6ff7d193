import { execFileSync } from "node:child_process";
import {
  copyFileSync,
  existsSync,
  mkdirSync,
  mkdtempSync,
  readFileSync,
  rmSync,
  writeFileSync,
} from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { renderFigure, writeFigure } from "../src/figures.js";
import { run } from "../src/main.js";
import { SchemaError } from "../src/types.js";

let FX: string;

function smallnoise(args: string[]): void {
  execFileSync("smallnoise", args, { stdio: "pipe" });
}

beforeAll(() => {
  FX = mkdtempSync(join(tmpdir(), "snfig-"));
  smallnoise([
    "sweep", "--model", "linear-ou", "--eps-list", "0.4,0.2,0.1,0.05",
    "--seeds", "0,1", "--grid-points", "11", "--method", "kalman",
    "--out", join(FX, "sweep"),
  ]);
  for (const method of ["kalman", "grid-bayes", "picard-mc"]) {
    smallnoise([
      "density", "--model", "linear-pure", "--eps", "0.3", "--seed", "2",
      "--method", method, "--paths", "2000", "--grid-points", "21",
      "--out", join(FX, "ovl", method),
    ]);
  }
  const meta = JSON.parse(
    readFileSync(join(FX, "ovl", "kalman", "metadata.json"), "utf8")
  );
  const xs = readFileSync(join(FX, "ovl", "kalman", "density.csv"), "utf8")
    .trim().split("\n").slice(1).map((l) => l.split(",")[0]);
  smallnoise([
    "rate", "--model", "linear-pure", "--x1", String(meta.x1),
    "--grid-min", xs[0], "--grid-max", xs[xs.length - 1],
    "--grid-n", String(xs.length), "--out", join(FX, "ovl", "rate"),
  ]);
  smallnoise([
    "tracking", "--model", "linear-pure", "--eps-list", "0.3,0.2",
    "--seeds", "0,1,2", "--out", join(FX, "tracking"),
  ]);
}, 180_000);

afterAll(() => {
  rmSync(FX, { recursive: true, force: true });
});

describe("sweep-convergence", () => {
  it("renders medians and scatter with labeled axes", () => {
    const svg = renderFigure({
      kind: "sweep-convergence",
      inputs: [join(FX, "sweep")],
      output: "unused.svg",
    });
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg).toContain("ε");
    expect(svg).toContain("median over seeds");
  });

  it("refuses an empty seed set and writes nothing", () => {
    const dir = join(FX, "empty");
    mkdirSync(dir, { recursive: true });
    writeFileSync(
      join(dir, "sweep.csv"),
      "seed,eps,x,eps_log_q,neg_J,abs_err,method,ess_flag\n"
    );
    writeFileSync(join(dir, "summary.json"), JSON.stringify({ median_sup_err: {} }));
    const out = join(dir, "fig.svg");
    expect(() =>
      writeFigure({ kind: "sweep-convergence", inputs: [dir], output: out })
    ).toThrow(SchemaError);
    expect(existsSync(out)).toBe(false);
  });
});

describe("density-overlay", () => {
  const inputs = () => [
    join(FX, "ovl", "kalman"),
    join(FX, "ovl", "grid-bayes"),
    join(FX, "ovl", "picard-mc"),
    join(FX, "ovl", "rate"),
  ];

  it("overlays every method plus the rate profile", () => {
    const svg = renderFigure({
      kind: "density-overlay",
      inputs: inputs(),
      output: "unused.svg",
    });
    for (const tag of ["kalman", "grid-bayes", "picard-mc"]) {
      expect(svg).toContain(tag);
    }
    expect(svg).toContain("normalized");
  });

  it("rejects mismatched grids", () => {
    const dir = join(FX, "shifted");
    mkdirSync(dir, { recursive: true });
    const lines = readFileSync(join(FX, "ovl", "kalman", "density.csv"), "utf8")
      .trim().split("\n");
    const cols = lines[1].split(",");
    cols[0] = String(Number(cols[0]) + 0.01);
    lines[1] = cols.join(",");
    writeFileSync(join(dir, "density.csv"), lines.join("\n") + "\n");
    copyFileSync(
      join(FX, "ovl", "kalman", "metadata.json"),
      join(dir, "metadata.json")
    );
    expect(() =>
      renderFigure({
        kind: "density-overlay",
        inputs: [dir, join(FX, "ovl", "rate")],
        output: "unused.svg",
      })
    ).toThrow(/grid does not match/);
  });
});

describe("rate-curve and lemma-m", () => {
  it("renders the rate function", () => {
    const svg = renderFigure({
      kind: "rate-curve",
      inputs: [join(FX, "ovl", "rate")],
      output: "unused.svg",
    });
    expect(svg).toContain("Rate function");
  });

  it("renders tracking deviations against the horizon", () => {
    const svg = renderFigure({
      kind: "lemma-m",
      inputs: [join(FX, "tracking")],
      output: "unused.svg",
    });
    expect(svg).toContain("T_ε");
    expect(svg).toContain("median");
  });
});

describe("file handling", () => {
  it("reruns are byte-identical", () => {
    for (const [kind, inputs] of [
      ["sweep-convergence", [join(FX, "sweep")]],
      ["rate-curve", [join(FX, "ovl", "rate")]],
      ["lemma-m", [join(FX, "tracking")]],
    ] as const) {
      const a = join(FX, `${kind}-a.svg`);
      const b = join(FX, `${kind}-b.svg`);
      writeFigure({ kind, inputs: [...inputs], output: a });
      writeFigure({ kind, inputs: [...inputs], output: b });
      expect(readFileSync(a)).toEqual(readFileSync(b));
    }
  });

  it("schema mismatch in a csv is caught by header check", () => {
    const dir = join(FX, "badheader");
    mkdirSync(dir, { recursive: true });
    writeFileSync(join(dir, "rate.csv"), "x,J\n0.0,0.0\n1.0,0.5\n");
    expect(() =>
      renderFigure({ kind: "rate-curve", inputs: [dir], output: "unused.svg" })
    ).toThrow(/expected columns/);
  });
});

describe("command line", () => {
  it("writes the figure and exits 0", () => {
    const out = join(FX, "cli.svg");
    const code = run([
      "--kind", "sweep-convergence", "--in", join(FX, "sweep"), "--out", out,
    ]);
    expect(code).toBe(0);
    expect(readFileSync(out, "utf8")).toContain("<svg");
  });

  it("bad usage exits 2, missing inputs exit 1", () => {
    expect(run(["--kind", "sweep-convergence"])).toBe(2);
    expect(run(["--kind", "nope", "--in", "x", "--out", "y.svg"])).toBe(2);
    expect(
      run([
        "--kind", "rate-curve", "--in", join(FX, "no-such-dir"),
        "--out", join(FX, "nope.svg"),
      ])
    ).toBe(1);
    expect(existsSync(join(FX, "nope.svg"))).toBe(false);
  });
});
