/**
 * Shared binary formats: idle-time sample datasets and predictor weights.
 *
 * Weight file: one JSON header line, then per layer the float32 weight
 * matrix (row-major, little-endian) followed by the bias vector, then a
 * CRC32 trailer over the payload bytes.  Sample file: one fixed-width
 * 128-byte JSON header line, then per record 3*N feature floats, 6 time
 * floats and the label.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const WEIGHT_FORMAT = "gcn-weights-v1";
export const SAMPLE_FORMAT = "idle-samples-v1";
export const TIME_FEATURES = 6;
const SAMPLE_HEADER_BYTES = 128;

export const LAYER_NAMES = ["gc1", "gc2", "dense1", "dense2", "out"] as const;
export type LayerName = (typeof LAYER_NAMES)[number];

export interface Layer {
  w: Float32Array;
  wShape: [number, number];
  b: Float32Array;
}

export interface Weights {
  nVertices: number;
  layers: Record<LayerName, Layer>;
  fleetScale: number;
  demandScale: number;
}

export interface SampleSet {
  nVertices: number;
  count: number;
  /** count x 3 x N, flattened row-major */
  features: Float32Array;
  /** count x 6 */
  time: Float32Array;
  labels: Float32Array;
}

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(buf: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < buf.length; i++) {
    c = CRC_TABLE[(c ^ buf[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function readSamples(path: string): SampleSet {
  const buf = readFileSync(path);
  const newline = buf.indexOf(0x0a);
  const header = JSON.parse(buf.subarray(0, newline).toString("utf8"));
  if (header.format !== SAMPLE_FORMAT) {
    throw new Error(`unexpected sample format ${header.format}`);
  }
  const n: number = header.n_vertices;
  const count: number = header.count;
  const width = 3 * n + TIME_FEATURES + 1;
  const body = buf.subarray(newline + 1);
  if (body.length !== count * width * 4) {
    throw new Error("sample payload does not match header count");
  }
  // copy out of the pooled (possibly misaligned) node buffer
  const all = new Float32Array(
    buf.buffer.slice(buf.byteOffset + newline + 1, buf.byteOffset + buf.length),
  );
  const features = new Float32Array(count * 3 * n);
  const time = new Float32Array(count * TIME_FEATURES);
  const labels = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    features.set(all.subarray(i * width, i * width + 3 * n), i * 3 * n);
    time.set(
      all.subarray(i * width + 3 * n, i * width + 3 * n + TIME_FEATURES),
      i * TIME_FEATURES,
    );
    labels[i] = all[i * width + width - 1];
  }
  return { nVertices: n, count, features, time, labels };
}

export function writeSamples(
  path: string,
  nVertices: number,
  features: Float32Array,
  time: Float32Array,
  labels: Float32Array,
): void {
  const count = labels.length;
  const head = JSON.stringify({
    count,
    format: SAMPLE_FORMAT,
    n_vertices: nVertices,
  });
  const headerBuf = Buffer.alloc(SAMPLE_HEADER_BYTES, 0x20);
  headerBuf.write(head, 0, "utf8");
  headerBuf[SAMPLE_HEADER_BYTES - 1] = 0x0a;
  const width = 3 * nVertices + TIME_FEATURES + 1;
  const body = new Float32Array(count * width);
  for (let i = 0; i < count; i++) {
    body.set(features.subarray(i * 3 * nVertices, (i + 1) * 3 * nVertices), i * width);
    body.set(
      time.subarray(i * TIME_FEATURES, (i + 1) * TIME_FEATURES),
      i * width + 3 * nVertices,
    );
    body[i * width + width - 1] = labels[i];
  }
  writeFileSync(path, Buffer.concat([headerBuf, Buffer.from(body.buffer)]));
}

export function writeWeights(path: string, weights: Weights): void {
  const layerMeta = LAYER_NAMES.map((name) => ({
    name,
    w: weights.layers[name].wShape,
    b: [weights.layers[name].b.length],
  }));
  const header = {
    format: WEIGHT_FORMAT,
    layers: layerMeta,
    n_vertices: weights.nVertices,
    scales: { demand: weights.demandScale, fleet: weights.fleetScale },
  };
  const parts: Buffer[] = [];
  for (const name of LAYER_NAMES) {
    const { w, b } = weights.layers[name];
    parts.push(Buffer.from(new Float32Array(w).buffer));
    parts.push(Buffer.from(new Float32Array(b).buffer));
  }
  const payload = Buffer.concat(parts);
  const crc = Buffer.alloc(4);
  crc.writeUInt32LE(crc32(payload), 0);
  writeFileSync(
    path,
    Buffer.concat([Buffer.from(JSON.stringify(header) + "\n", "utf8"), payload, crc]),
  );
}

export function readWeights(path: string): Weights {
  const buf = readFileSync(path);
  const newline = buf.indexOf(0x0a);
  const header = JSON.parse(buf.subarray(0, newline).toString("utf8"));
  if (header.format !== WEIGHT_FORMAT) {
    throw new Error(`unexpected weight format ${header.format}`);
  }
  const payload = buf.subarray(newline + 1, buf.length - 4);
  const crc = buf.readUInt32LE(buf.length - 4);
  if (crc32(payload) !== crc) {
    throw new Error("weight checksum mismatch");
  }
  const layers = {} as Record<LayerName, Layer>;
  const floats = new Float32Array(
    payload.buffer.slice(payload.byteOffset, payload.byteOffset + payload.length),
  );
  let offset = 0;
  for (const meta of header.layers) {
    const [rows, cols] = meta.w;
    const w = floats.slice(offset, offset + rows * cols);
    offset += rows * cols;
    const b = floats.slice(offset, offset + meta.b[0]);
    offset += meta.b[0];
    layers[meta.name as LayerName] = { w, wShape: [rows, cols], b };
  }
  if (offset !== floats.length) {
    throw new Error("payload size does not match declared shapes");
  }
  const scales = header.scales ?? {};
  return {
    nVertices: header.n_vertices,
    layers,
    fleetScale: scales.fleet ?? 1.0,
    demandScale: scales.demand ?? 1.0,
  };
}
