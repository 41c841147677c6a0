/**
 * Training pipeline for the idle-time predictor.
 *
 * Reads the simulator's binary sample datasets, splits 70/10/20, scales
 * the fleet and demand channels by their training-set maxima (stored in
 * the exported header so inference matches), and fits the two
 * graph-convolution + two dense layer architecture with Adam on MSE,
 * dropout between the graph convolutions.  Exports the shared weight
 * format plus a JSON report with per-epoch validation MAE.
 */

import * as tf from "@tensorflow/tfjs";
import { readFileSync, writeFileSync } from "node:fs";
import {
  LAYER_NAMES,
  LayerName,
  Layer,
  SampleSet,
  TIME_FEATURES,
  Weights,
  readSamples,
  writeWeights,
} from "./format.js";
import { forwardBatch } from "./forward.js";
import { gridNormalizedAdjacency } from "./graph.js";
import { TableBaseline } from "./table.js";

export interface TrainConfig {
  rows: number;
  cols: number;
  filters: number;
  dense: [number, number];
  learningRate: number;
  epochs: number;
  batchSize: number;
  dropout: number;
  seed: number;
  splits: [number, number, number]; // train / validation / test
  patience: number;
}

export const DEFAULT_CONFIG: TrainConfig = {
  rows: 15,
  cols: 15,
  filters: 64,
  dense: [256, 256],
  learningRate: 1e-4,
  epochs: 200,
  batchSize: 128,
  dropout: 0.5,
  seed: 0,
  splits: [0.7, 0.1, 0.2],
  patience: 25,
};

export interface TrainReport {
  config: TrainConfig;
  nSamples: number;
  valMaePerEpoch: number[];
  testMae: number;
  testR2: number;
  tableMae: number;
  fleetScale: number;
  demandScale: number;
}

/** Deterministic PRNG so shuffles are reproducible across runs. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function seededShuffle(n: number, rand: () => number): number[] {
  const idx = Array.from({ length: n }, (_, i) => i);
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [idx[i], idx[j]] = [idx[j], idx[i]];
  }
  return idx;
}

export function splitIndices(
  n: number,
  splits: [number, number, number],
  seed: number,
): [number[], number[], number[]] {
  const order = seededShuffle(n, mulberry32(seed));
  const nTrain = Math.floor(n * splits[0]);
  const nVal = Math.floor(n * splits[1]);
  return [
    order.slice(0, nTrain),
    order.slice(nTrain, nTrain + nVal),
    order.slice(nTrain + nVal),
  ];
}

function channelMax(samples: SampleSet, indices: number[], channel: number): number {
  const n = samples.nVertices;
  let best = 0;
  for (const i of indices) {
    const base = i * 3 * n + channel * n;
    for (let v = 0; v < n; v++) {
      const val = samples.features[base + v];
      if (val > best) best = val;
    }
  }
  return best > 0 ? best : 1.0;
}

function gatherScaled(
  samples: SampleSet,
  indices: number[],
  fleetScale: number,
  demandScale: number,
): { x: tf.Tensor3D; t: tf.Tensor2D; y: tf.Tensor2D } {
  const n = samples.nVertices;
  const count = indices.length;
  const x = new Float32Array(count * 3 * n);
  const t = new Float32Array(count * TIME_FEATURES);
  const y = new Float32Array(count);
  indices.forEach((src, dst) => {
    const from = src * 3 * n;
    for (let v = 0; v < n; v++) {
      x[dst * 3 * n + v] = samples.features[from + v];
      x[dst * 3 * n + n + v] = samples.features[from + n + v] / fleetScale;
      x[dst * 3 * n + 2 * n + v] = samples.features[from + 2 * n + v] / demandScale;
    }
    t.set(
      samples.time.subarray(src * TIME_FEATURES, (src + 1) * TIME_FEATURES),
      dst * TIME_FEATURES,
    );
    y[dst] = samples.labels[src];
  });
  return {
    x: tf.tensor3d(x, [count, 3, n]),
    t: tf.tensor2d(t, [count, TIME_FEATURES]),
    y: tf.tensor2d(y, [count, 1]),
  };
}

class GcnModel {
  vars: Record<string, tf.Variable>;
  aHat: tf.Tensor2D;
  n: number;
  filters: number;

  constructor(n: number, aHat64: Float64Array, cfg: TrainConfig) {
    this.n = n;
    this.filters = cfg.filters;
    this.aHat = tf.tensor2d(Float32Array.from(aHat64), [n, n]);
    const init = (shape: number[], i: number) =>
      tf.variable(
        tf.initializers
          .glorotUniform({ seed: cfg.seed * 100 + i })
          .apply(shape) as tf.Tensor,
      );
    const zeros = (k: number) => tf.variable(tf.zeros([k]));
    const [d1, d2] = cfg.dense;
    this.vars = {
      w1: init([3, cfg.filters], 1),
      b1: zeros(cfg.filters),
      w2: init([cfg.filters, cfg.filters], 2),
      b2: zeros(cfg.filters),
      wd1: init([n * cfg.filters + TIME_FEATURES, d1], 3),
      bd1: zeros(d1),
      wd2: init([d1, d2], 4),
      bd2: zeros(d2),
      wo: init([d2, 1], 5),
      bo: zeros(1),
    };
  }

  /** x: (B, 3, N); t: (B, 6) -> (B, 1) */
  predict(x: tf.Tensor3D, t: tf.Tensor2D, training: boolean, dropout: number,
          dropSeed = 0): tf.Tensor2D {
    return tf.tidy(() => {
      const batch = x.shape[0];
      const xT = x.transpose([0, 2, 1]); // (B, N, 3)
      const prop1 = tf.einsum("ij,bjk->bik", this.aHat, xT) as tf.Tensor3D;
      let h = tf
        .matMul(prop1.reshape([batch * this.n, 3]), this.vars.w1 as tf.Tensor2D)
        .add(this.vars.b1)
        .relu()
        .reshape([batch, this.n, this.filters]) as tf.Tensor3D;
      if (training && dropout > 0) {
        h = tf.dropout(h, dropout, undefined, dropSeed) as tf.Tensor3D;
      }
      const prop2 = tf.einsum("ij,bjk->bik", this.aHat, h) as tf.Tensor3D;
      const h2 = tf
        .matMul(prop2.reshape([batch * this.n, this.filters]),
                this.vars.w2 as tf.Tensor2D)
        .add(this.vars.b2)
        .relu()
        .reshape([batch, this.n * this.filters]);
      const z = tf.concat([h2, t], 1);
      const v1 = tf.matMul(z, this.vars.wd1 as tf.Tensor2D).add(this.vars.bd1).relu();
      const v2 = tf.matMul(v1, this.vars.wd2 as tf.Tensor2D).add(this.vars.bd2).relu();
      return tf.matMul(v2, this.vars.wo as tf.Tensor2D).add(this.vars.bo) as tf.Tensor2D;
    });
  }

  export(fleetScale: number, demandScale: number): Weights {
    const grab = (v: tf.Variable): Float32Array =>
      new Float32Array(v.dataSync() as Float32Array);
    const layer = (w: tf.Variable, b: tf.Variable): Layer => ({
      w: grab(w),
      wShape: [w.shape[0]!, w.shape[1]!],
      b: grab(b),
    });
    const layers = {
      gc1: layer(this.vars.w1, this.vars.b1),
      gc2: layer(this.vars.w2, this.vars.b2),
      dense1: layer(this.vars.wd1, this.vars.bd1),
      dense2: layer(this.vars.wd2, this.vars.bd2),
      out: layer(this.vars.wo, this.vars.bo),
    } as Record<LayerName, Layer>;
    return { nVertices: this.n, layers, fleetScale, demandScale };
  }

  dispose() {
    for (const v of Object.values(this.vars)) v.dispose();
    this.aHat.dispose();
  }
}

export interface TrainResult {
  weights: Weights;
  report: TrainReport;
}

export async function train(
  samples: SampleSet,
  aHat64: Float64Array,
  cfg: TrainConfig,
): Promise<TrainResult> {
  if (samples.count < 100) {
    throw new Error(`need at least 100 samples, got ${samples.count}`);
  }
  const [trainIdx, valIdx, testIdx] = splitIndices(samples.count, cfg.splits, cfg.seed);
  const fleetScale = channelMax(samples, trainIdx, 1);
  const demandScale = channelMax(samples, trainIdx, 2);
  const model = new GcnModel(samples.nVertices, aHat64, cfg);
  const optimizer = tf.train.adam(cfg.learningRate);
  const val = gatherScaled(samples, valIdx, fleetScale, demandScale);
  const trainData = gatherScaled(samples, trainIdx, fleetScale, demandScale);
  const rand = mulberry32(cfg.seed + 1);
  const valMaePerEpoch: number[] = [];
  let bestVal = Infinity;
  let bestWeights: Weights | null = null;
  let sinceBest = 0;
  let step = 0;
  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    const order = seededShuffle(trainIdx.length, rand);
    for (let start = 0; start < order.length; start += cfg.batchSize) {
      const batchIdx = order.slice(start, start + cfg.batchSize);
      const take = tf.tensor1d(Int32Array.from(batchIdx), "int32");
      const xb = tf.gather(trainData.x, take) as tf.Tensor3D;
      const tb = tf.gather(trainData.t, take) as tf.Tensor2D;
      const yb = tf.gather(trainData.y, take) as tf.Tensor2D;
      step += 1;
      const seed = cfg.seed * 1_000_003 + step;
      optimizer.minimize(
        () =>
          tf.losses.meanSquaredError(
            yb,
            model.predict(xb, tb, true, cfg.dropout, seed),
          ) as tf.Scalar,
        false,
        Object.values(model.vars),
      );
      take.dispose();
      xb.dispose();
      tb.dispose();
      yb.dispose();
    }
    const valPred = model.predict(val.x, val.t, false, 0);
    const valMae = tf.losses.absoluteDifference(val.y, valPred).dataSync()[0];
    valPred.dispose();
    if (!Number.isFinite(valMae)) {
      throw new Error(`validation MAE diverged at epoch ${epoch}`);
    }
    valMaePerEpoch.push(valMae);
    if (valMae < bestVal - 1e-9) {
      bestVal = valMae;
      bestWeights = model.export(fleetScale, demandScale);
      sinceBest = 0;
    } else {
      sinceBest += 1;
      if (sinceBest >= cfg.patience) break;
    }
  }
  const weights = bestWeights ?? model.export(fleetScale, demandScale);
  // evaluate with the reference float64 forward pass on raw features
  const testSet = subset(samples, testIdx);
  const pred = forwardBatch(weights, testSet, aHat64);
  let absSum = 0;
  let sqSum = 0;
  let mean = 0;
  for (let i = 0; i < testIdx.length; i++) mean += testSet.labels[i];
  mean /= Math.max(testIdx.length, 1);
  let varSum = 0;
  for (let i = 0; i < testIdx.length; i++) {
    const err = testSet.labels[i] - pred[i];
    absSum += Math.abs(err);
    sqSum += err * err;
    varSum += (testSet.labels[i] - mean) ** 2;
  }
  const table = TableBaseline.fit(samples, trainIdx);
  const report: TrainReport = {
    config: cfg,
    nSamples: samples.count,
    valMaePerEpoch,
    testMae: absSum / Math.max(testIdx.length, 1),
    testR2: varSum > 0 ? 1 - sqSum / varSum : 0,
    tableMae: table.mae(samples, testIdx),
    fleetScale,
    demandScale,
  };
  model.dispose();
  optimizer.dispose();
  val.x.dispose(); val.t.dispose(); val.y.dispose();
  trainData.x.dispose(); trainData.t.dispose(); trainData.y.dispose();
  return { weights, report };
}

export function subset(samples: SampleSet, indices: number[]): SampleSet {
  const n = samples.nVertices;
  const features = new Float32Array(indices.length * 3 * n);
  const time = new Float32Array(indices.length * TIME_FEATURES);
  const labels = new Float32Array(indices.length);
  indices.forEach((src, dst) => {
    features.set(samples.features.subarray(src * 3 * n, (src + 1) * 3 * n), dst * 3 * n);
    time.set(
      samples.time.subarray(src * TIME_FEATURES, (src + 1) * TIME_FEATURES),
      dst * TIME_FEATURES,
    );
    labels[dst] = samples.labels[src];
  });
  return { nVertices: n, count: indices.length, features, time, labels };
}

async function mainCli(): Promise<number> {
  const args = new Map<string, string>();
  const argv = process.argv.slice(2);
  for (let i = 0; i < argv.length; i += 2) args.set(argv[i], argv[i + 1]);
  const samplesPath = args.get("--samples");
  const outPath = args.get("--out");
  if (!samplesPath || !outPath) {
    console.error(
      "usage: train --samples samples.bin --out weights.bin " +
        "[--report report.json] [--config config.json]",
    );
    return 2;
  }
  let cfg = { ...DEFAULT_CONFIG };
  const cfgPath = args.get("--config");
  if (cfgPath) {
    cfg = { ...cfg, ...JSON.parse(readFileSync(cfgPath, "utf8")) };
  }
  const samples = readSamples(samplesPath);
  if (samples.nVertices !== cfg.rows * cfg.cols) {
    console.error(
      `sample vertex count ${samples.nVertices} != grid ${cfg.rows}x${cfg.cols}`,
    );
    return 3;
  }
  const aHat = gridNormalizedAdjacency(cfg.rows, cfg.cols);
  const { weights, report } = await train(samples, aHat, cfg);
  writeWeights(outPath, weights);
  writeFileSync(args.get("--report") ?? outPath + ".report.json",
                JSON.stringify(report, null, 2));
  console.log(
    `test MAE ${report.testMae.toFixed(1)} s vs table ${report.tableMae.toFixed(1)} s; ` +
      `R^2 ${report.testR2.toFixed(4)}`,
  );
  return 0;
}

const isMain = process.argv[1]?.endsWith("train.js");
if (isMain) {
  mainCli().then((code) => process.exit(code));
}
