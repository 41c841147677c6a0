/**
 * Hyperparameter grids: architecture (filters x dense-layer neurons) and
 * learning rate.  Emits validation-MAE matrices as CSV for inspection.
 * Desk-scale epoch counts are fine; the point is the relative ordering.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { readSamples } from "./format.js";
import { gridNormalizedAdjacency } from "./graph.js";
import { DEFAULT_CONFIG, TrainConfig, train } from "./train.js";

export interface GridResult {
  rows: string[];
  cols: string[];
  mae: number[][];
}

export async function architectureGrid(
  samplesPath: string,
  base: TrainConfig,
  filterGrid: number[],
  neuronGrid: number[],
): Promise<GridResult> {
  const samples = readSamples(samplesPath);
  const aHat = gridNormalizedAdjacency(base.rows, base.cols);
  const mae: number[][] = [];
  for (const filters of filterGrid) {
    const row: number[] = [];
    for (const neurons of neuronGrid) {
      const cfg: TrainConfig = {
        ...base,
        filters,
        dense: [neurons / 2, neurons / 2] as [number, number],
      };
      const { report } = await train(samples, aHat, cfg);
      row.push(Math.min(...report.valMaePerEpoch));
    }
    mae.push(row);
  }
  return {
    rows: filterGrid.map(String),
    cols: neuronGrid.map(String),
    mae,
  };
}

export async function learningRateGrid(
  samplesPath: string,
  base: TrainConfig,
  lrGrid: number[],
): Promise<GridResult> {
  const samples = readSamples(samplesPath);
  const aHat = gridNormalizedAdjacency(base.rows, base.cols);
  const row: number[] = [];
  for (const lr of lrGrid) {
    const { report } = await train(samples, aHat, { ...base, learningRate: lr });
    row.push(Math.min(...report.valMaePerEpoch));
  }
  return { rows: ["mae"], cols: lrGrid.map(String), mae: [row] };
}

export function toCsv(result: GridResult): string {
  const lines = ["," + result.cols.join(",")];
  result.rows.forEach((name, i) => {
    lines.push(name + "," + result.mae[i].map((v) => v.toFixed(3)).join(","));
  });
  return lines.join("\n") + "\n";
}

async function mainCli(): Promise<number> {
  const args = new Map<string, string>();
  const argv = process.argv.slice(2);
  for (let i = 0; i < argv.length; i += 2) args.set(argv[i], argv[i + 1]);
  const samplesPath = args.get("--samples");
  const out = args.get("--out") ?? "grid.csv";
  const kind = args.get("--kind") ?? "architecture";
  if (!samplesPath) {
    console.error("usage: gridsearch --samples samples.bin --kind architecture|lr "
      + "[--config config.json] [--out grid.csv]");
    return 2;
  }
  let cfg = { ...DEFAULT_CONFIG };
  const cfgPath = args.get("--config");
  if (cfgPath) cfg = { ...cfg, ...JSON.parse(readFileSync(cfgPath, "utf8")) };
  const result =
    kind === "lr"
      ? await learningRateGrid(samplesPath, cfg, [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
      : await architectureGrid(samplesPath, cfg, [32, 64, 128],
                               [128, 256, 512, 1024, 2048, 4096]);
  writeFileSync(out, toCsv(result));
  console.log(`wrote ${out}`);
  return 0;
}

const isMain = process.argv[1]?.endsWith("gridsearch.js");
if (isMain) {
  mainCli().then((code) => process.exit(code));
}
