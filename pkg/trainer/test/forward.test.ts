import { describe, expect, it } from "vitest";

import { Weights } from "../src/format.js";
import { forward } from "../src/forward.js";
import { gridNormalizedAdjacency, normalize } from "../src/graph.js";

function zeroWeights(n = 2, f = 2, d1 = 2, d2 = 2): Weights {
  const mk = (rows: number, cols: number) => ({
    w: new Float32Array(rows * cols),
    wShape: [rows, cols] as [number, number],
    b: new Float32Array(cols),
  });
  return {
    nVertices: n,
    layers: {
      gc1: mk(3, f),
      gc2: mk(f, f),
      dense1: mk(n * f + 6, d1),
      dense2: mk(d1, d2),
      out: mk(d2, 1),
    },
    fleetScale: 1,
    demandScale: 1,
  };
}

const A_HALF = Float64Array.from([0.5, 0.5, 0.5, 0.5]);

describe("reference forward pass", () => {
  it("zero weights produce zero", () => {
    const w = zeroWeights();
    const y = forward(w, Float32Array.from([1, 0, 2, 4, 0, 6]),
                      Float32Array.from([0, 1, 0.5, 0.5, 0, 1]), A_HALF);
    expect(y).toBe(0);
  });

  it("reproduces the hand-worked two-vertex case", () => {
    // mirrors the simulator's unit case: expected output exactly 25
    const w = zeroWeights();
    w.layers.gc1 = {
      w: Float32Array.from([1, 0, 0, 1, 1, 1]),
      wShape: [3, 2],
      b: Float32Array.from([0.5, -100]),
    };
    w.layers.gc2 = {
      w: Float32Array.from([1, 1, 1, 0]),
      wShape: [2, 2],
      b: Float32Array.from([0, 1]),
    };
    const d1w = new Float32Array(10 * 2);
    for (let i = 0; i < 10; i++) d1w[i * 2] = 1; // column 0: sum
    d1w[0 * 2 + 1] = 1; // column 1: first element
    w.layers.dense1 = { w: d1w, wShape: [10, 2], b: Float32Array.from([-1, 2]) };
    w.layers.dense2 = {
      w: Float32Array.from([1, 0, 0, 2]),
      wShape: [2, 2],
      b: Float32Array.from([0, 0]),
    };
    w.layers.out = { w: Float32Array.from([0.5, 1]), wShape: [2, 1],
                     b: Float32Array.from([3]) };
    const y = forward(w, Float32Array.from([1, 0, 2, 4, 0, 6]),
                      Float32Array.from([0, 1, 0.5, 0.5, 0, 1]), A_HALF);
    expect(y).toBeCloseTo(25.0, 9);
  });

  it("clips negative outputs at zero", () => {
    const w = zeroWeights();
    w.layers.out = { w: new Float32Array(2), wShape: [2, 1],
                     b: Float32Array.from([-5]) };
    const y = forward(w, new Float32Array(6), new Float32Array(6), A_HALF);
    expect(y).toBe(0);
  });

  it("applies the stored channel scales", () => {
    const w = zeroWeights(2, 2, 2, 2);
    w.layers.gc1 = {
      w: Float32Array.from([0, 0, 1, 0, 0, 0]), // reads the fleet channel
      wShape: [3, 2],
      b: new Float32Array(2),
    };
    w.layers.gc2 = {
      w: Float32Array.from([1, 0, 0, 0]),
      wShape: [2, 2],
      b: new Float32Array(2),
    };
    const d1w = new Float32Array(10 * 2);
    d1w[0] = 1;
    w.layers.dense1 = { w: d1w, wShape: [10, 2], b: new Float32Array(2) };
    w.layers.dense2 = {
      w: Float32Array.from([1, 0, 0, 0]),
      wShape: [2, 2],
      b: new Float32Array(2),
    };
    w.layers.out = { w: Float32Array.from([1, 0]), wShape: [2, 1],
                     b: new Float32Array(1) };
    const feats = Float32Array.from([0, 0, 8, 8, 0, 0]);
    const time = new Float32Array(6);
    const unscaled = forward(w, feats, time, A_HALF);
    w.fleetScale = 2;
    const scaled = forward(w, feats, time, A_HALF);
    expect(scaled).toBeCloseTo(unscaled / 2, 9);
  });

  it("grid adjacency is symmetric-normalized with self loops", () => {
    const a = gridNormalizedAdjacency(2, 2);
    // every vertex has degree 2 + self loop = 3: diagonal 1/3, edges 1/3
    expect(a[0]).toBeCloseTo(1 / 3, 12);
    expect(a[1]).toBeCloseTo(1 / 3, 12);
    expect(a[3]).toBe(0); // diagonal corners not adjacent
    const single = normalize(new Float64Array(1), 1);
    expect(single[0]).toBeCloseTo(1.0, 12);
  });
});
