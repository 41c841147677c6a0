/** Symmetric-normalized adjacency with self loops for lattice networks. */

export function gridNormalizedAdjacency(rows: number, cols: number): Float64Array {
  const n = rows * cols;
  const adj = new Float64Array(n * n);
  const connect = (a: number, b: number) => {
    adj[a * n + b] = 1;
    adj[b * n + a] = 1;
  };
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const i = r * cols + c;
      if (c + 1 < cols) connect(i, i + 1);
      if (r + 1 < rows) connect(i, i + cols);
    }
  }
  return normalize(adj, n);
}

export function normalize(adjacency: Float64Array, n: number): Float64Array {
  const withLoops = Float64Array.from(adjacency);
  for (let i = 0; i < n; i++) withLoops[i * n + i] += 1;
  const invSqrtDeg = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    let deg = 0;
    for (let j = 0; j < n; j++) deg += withLoops[i * n + j];
    invSqrtDeg[i] = 1 / Math.sqrt(deg);
  }
  const out = new Float64Array(n * n);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      out[i * n + j] = invSqrtDeg[i] * withLoops[i * n + j] * invSqrtDeg[j];
    }
  }
  return out;
}
