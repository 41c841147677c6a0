import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { readWeights, writeSamples, writeWeights } from "../src/format.js";
import { forwardBatch } from "../src/forward.js";
import { gridNormalizedAdjacency } from "../src/graph.js";
import { makeSynthetic, shuffleLabels } from "../src/synth.js";
import { DEFAULT_CONFIG, TrainConfig, splitIndices, subset, train } from "../src/train.js";

const GRID = { rows: 8, cols: 8 };

const FAST: TrainConfig = {
  ...DEFAULT_CONFIG,
  ...GRID,
  filters: 12,
  dense: [48, 48],
  learningRate: 3e-3,
  epochs: 15,
  batchSize: 512,
  dropout: 0.5,
  patience: 6,
  seed: 7,
};

describe("training pipeline", () => {
  it("learns a planted signal and beats the lookup-table baseline", async () => {
    const samples = makeSynthetic({ ...GRID, count: 20000, seed: 11, noiseSd: 120 });
    const aHat = gridNormalizedAdjacency(GRID.rows, GRID.cols);
    const { report } = await train(samples, aHat, FAST);
    expect(report.valMaePerEpoch.every(Number.isFinite)).toBe(true);
    expect(report.testMae).toBeLessThan(report.tableMae);
    expect(report.testR2).toBeGreaterThan(0.5);
  }, 1_200_000);

  it("shuffled labels carry no signal", async () => {
    const samples = shuffleLabels(
      makeSynthetic({ ...GRID, count: 20000, seed: 11, noiseSd: 120 }), 5);
    const aHat = gridNormalizedAdjacency(GRID.rows, GRID.cols);
    const { report } = await train(samples, aHat,
                                   { ...FAST, epochs: 8, patience: 8 });
    expect(report.testR2).toBeLessThan(0.1);
  }, 1_200_000);

  it("near-constant labels converge to near-zero error", async () => {
    const samples = makeSynthetic({ ...GRID, count: 4000, seed: 3, noiseSd: 1 });
    samples.labels.fill(500);
    const aHat = gridNormalizedAdjacency(GRID.rows, GRID.cols);
    const { report } = await train(samples, aHat, {
      ...FAST, epochs: 60, patience: 60, learningRate: 1.0, dropout: 0.0,
    });
    expect(report.testMae).toBeLessThan(25);
  }, 1_200_000);

  it("is deterministic for a fixed seed", async () => {
    const samples = makeSynthetic({ ...GRID, count: 1500, seed: 2, noiseSd: 50 });
    const aHat = gridNormalizedAdjacency(GRID.rows, GRID.cols);
    const cfg = { ...FAST, epochs: 2, patience: 2 };
    const dir = mkdtempSync(join(tmpdir(), "det-"));
    const a = join(dir, "a.bin");
    const b = join(dir, "b.bin");
    writeWeights(a, (await train(samples, aHat, cfg)).weights);
    writeWeights(b, (await train(samples, aHat, cfg)).weights);
    expect(readFileSync(a).equals(readFileSync(b))).toBe(true);
  }, 600_000);
});

describe("cross-implementation contract", () => {
  it("simulator forward pass matches the trainer within 1e-4", async () => {
    const samples = makeSynthetic({ ...GRID, count: 3000, seed: 21, noiseSd: 100 });
    const aHat = gridNormalizedAdjacency(GRID.rows, GRID.cols);
    const { weights } = await train(samples, aHat,
                                    { ...FAST, epochs: 3, patience: 3 });
    const dir = mkdtempSync(join(tmpdir(), "xcheck-"));
    const weightPath = join(dir, "weights.bin");
    writeWeights(weightPath, weights);

    const probeRaw = makeSynthetic({ ...GRID, count: 100, seed: 99, noiseSd: 100 });
    const probePath = join(dir, "probe.bin");
    writeSamples(probePath, probeRaw.nVertices, probeRaw.features, probeRaw.time,
                 probeRaw.labels);
    const mine = forwardBatch(readWeights(weightPath), probeRaw, aHat);

    const cfgPath = join(dir, "config.json");
    const outPath = join(dir, "preds.csv");
    const cfg = {
      network: { kind: "grid", rows: GRID.rows, cols: GRID.cols, spacing_m: 300.0 },
    };
    const fs = await import("node:fs");
    fs.writeFileSync(cfgPath, JSON.stringify(cfg));
    const proc = spawnSync(
      "python3",
      ["-m", "evpool.cli", "gcn-eval", "--weights", weightPath, "--features",
       probePath, "--out", outPath, "--config", cfgPath],
      { encoding: "utf8" },
    );
    expect(proc.status, proc.stderr).toBe(0);
    const lines = readFileSync(outPath, "utf8").trim().split("\n").slice(1);
    expect(lines.length).toBe(100);
    let worst = 0;
    lines.forEach((line, i) => {
      const theirs = parseFloat(line.split(",")[1]);
      worst = Math.max(worst, Math.abs(theirs - mine[i]));
    });
    expect(worst).toBeLessThan(1e-4);
  }, 600_000);
});
