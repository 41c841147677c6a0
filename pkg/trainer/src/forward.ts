/**
 * Reference forward pass in float64, mirroring the simulator's inference
 * arithmetic exactly: two graph convolutions over A_hat, flatten plus
 * time features, two ReLU dense layers, linear output clipped at zero.
 * Training uses tfjs; this implementation is what evaluation reports and
 * the cross-implementation contract are measured against.
 */

import { TIME_FEATURES, Weights } from "./format.js";

function matMul(
  a: Float64Array, aRows: number, aCols: number,
  b: ArrayLike<number>, bCols: number,
): Float64Array {
  const out = new Float64Array(aRows * bCols);
  for (let i = 0; i < aRows; i++) {
    for (let k = 0; k < aCols; k++) {
      const av = a[i * aCols + k];
      if (av === 0) continue;
      for (let j = 0; j < bCols; j++) {
        out[i * bCols + j] += av * b[k * bCols + j];
      }
    }
  }
  return out;
}

function addBiasRelu(m: Float64Array, rows: number, cols: number, b: ArrayLike<number>) {
  for (let i = 0; i < rows; i++) {
    for (let j = 0; j < cols; j++) {
      const v = m[i * cols + j] + b[j];
      m[i * cols + j] = v > 0 ? v : 0;
    }
  }
}

export function forward(
  weights: Weights,
  features: Float32Array, // 3 x N row-major
  time: Float32Array, // 6
  aHat: Float64Array, // N x N row-major
): number {
  const n = weights.nVertices;
  if (features.length !== 3 * n) {
    throw new Error(`features for ${features.length / 3} vertices, weights for ${n}`);
  }
  // scale fleet and demand rows, transpose to N x 3
  const xT = new Float64Array(n * 3);
  const fleetScale = weights.fleetScale > 0 ? weights.fleetScale : 1.0;
  const demandScale = weights.demandScale > 0 ? weights.demandScale : 1.0;
  for (let v = 0; v < n; v++) {
    xT[v * 3] = features[v];
    xT[v * 3 + 1] = features[n + v] / fleetScale;
    xT[v * 3 + 2] = features[2 * n + v] / demandScale;
  }
  const gc1 = weights.layers.gc1;
  const gc2 = weights.layers.gc2;
  const f = gc1.wShape[1];
  let h = matMul(matMul(aHat, n, n, xT, 3), n, 3, gc1.w, f);
  addBiasRelu(h, n, f, gc1.b);
  h = matMul(matMul(aHat, n, n, h, f), n, f, gc2.w, f);
  addBiasRelu(h, n, f, gc2.b);
  const z = new Float64Array(n * f + TIME_FEATURES);
  z.set(h);
  for (let i = 0; i < TIME_FEATURES; i++) z[n * f + i] = time[i];
  const d1 = weights.layers.dense1;
  const d2 = weights.layers.dense2;
  const out = weights.layers.out;
  let v1 = matMul(z, 1, z.length, d1.w, d1.wShape[1]);
  addBiasRelu(v1, 1, d1.wShape[1], d1.b);
  let v2 = matMul(v1, 1, v1.length, d2.w, d2.wShape[1]);
  addBiasRelu(v2, 1, d2.wShape[1], d2.b);
  let y = out.b[0];
  for (let i = 0; i < v2.length; i++) y += v2[i] * out.w[i];
  return y > 0 ? y : 0;
}

export function forwardBatch(
  weights: Weights,
  samples: { features: Float32Array; time: Float32Array; count: number; nVertices: number },
  aHat: Float64Array,
): Float64Array {
  const out = new Float64Array(samples.count);
  const n = samples.nVertices;
  for (let i = 0; i < samples.count; i++) {
    out[i] = forward(
      weights,
      samples.features.subarray(i * 3 * n, (i + 1) * 3 * n),
      samples.time.subarray(i * TIME_FEATURES, (i + 1) * TIME_FEATURES),
      aHat,
    );
  }
  return out;
}
