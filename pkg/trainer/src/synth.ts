/**
 * Synthetic sample generation for trainer self-tests: a smooth planted
 * idle-time surface over vertex position and time of day, plus noise.
 * The fleet and demand channels carry structured nuisance values so the
 * normalization path is exercised.
 */

import { TIME_FEATURES, SampleSet } from "./format.js";
import { mulberry32 } from "./train.js";

export interface SynthOptions {
  rows: number;
  cols: number;
  count: number;
  seed: number;
  noiseSd: number;
}

function gaussian(rand: () => number): number {
  // Box-Muller
  const u = Math.max(rand(), 1e-12);
  const v = rand();
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
}

export function plantedLabel(
  vertex: number, rows: number, cols: number, timeOfDayH: number,
): number {
  const r = Math.floor(vertex / cols) / Math.max(rows - 1, 1);
  const c = (vertex % cols) / Math.max(cols - 1, 1);
  const base = 600 + 500 * r + 300 * Math.sin(Math.PI * c);
  const daily = 450 * Math.sin((2 * Math.PI * (timeOfDayH - 4 - 6 * r)) / 24);
  return Math.max(base + daily, 30);
}

export function makeSynthetic(opts: SynthOptions): SampleSet {
  const n = opts.rows * opts.cols;
  const rand = mulberry32(opts.seed);
  const features = new Float32Array(opts.count * 3 * n);
  const time = new Float32Array(opts.count * TIME_FEATURES);
  const labels = new Float32Array(opts.count);
  for (let i = 0; i < opts.count; i++) {
    const vertex = Math.floor(rand() * n);
    const hour = Math.floor(rand() * 24);
    const minute = Math.floor(rand() * 60);
    const weekday = Math.floor(rand() * 7);
    const base = i * 3 * n;
    features[base + vertex] = 1;
    for (let v = 0; v < n; v++) {
      features[base + n + v] = Math.floor(rand() * 4) * 5; // seats-like
      features[base + 2 * n + v] = rand() * 0.5; // demand-rate-like
    }
    const tb = i * TIME_FEATURES;
    time[tb] = Math.sin((2 * Math.PI * hour) / 24);
    time[tb + 1] = Math.cos((2 * Math.PI * hour) / 24);
    time[tb + 2] = Math.sin((2 * Math.PI * minute) / 60);
    time[tb + 3] = Math.cos((2 * Math.PI * minute) / 60);
    time[tb + 4] = Math.sin((2 * Math.PI * weekday) / 7);
    time[tb + 5] = Math.cos((2 * Math.PI * weekday) / 7);
    labels[i] =
      plantedLabel(vertex, opts.rows, opts.cols, hour + minute / 60) +
      opts.noiseSd * gaussian(rand);
  }
  return { nVertices: n, count: opts.count, features, time, labels };
}

export function shuffleLabels(samples: SampleSet, seed: number): SampleSet {
  const rand = mulberry32(seed);
  const labels = Float32Array.from(samples.labels);
  for (let i = labels.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [labels[i], labels[j]] = [labels[j], labels[i]];
  }
  return { ...samples, labels };
}
