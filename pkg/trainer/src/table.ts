/**
 * Bucketed-mean idle-time baseline: (vertex, hour, weekday-class) with
 * fallback to the graph-wide hour bucket and then the global mean.  Used
 * as the reference the trained model has to beat on held-out data.
 */

import { SampleSet, TIME_FEATURES } from "./format.js";

export function decodeHourWeekday(time: ArrayLike<number>, offset = 0): [number, number] {
  const hour =
    ((Math.round((Math.atan2(time[offset], time[offset + 1]) * 24) / (2 * Math.PI)) % 24) +
      24) % 24;
  const weekday =
    ((Math.round((Math.atan2(time[offset + 4], time[offset + 5]) * 7) / (2 * Math.PI)) % 7) +
      7) % 7;
  return [hour, weekday];
}

export class TableBaseline {
  private buckets = new Map<string, number>();
  private hourBuckets = new Map<string, number>();
  private globalMean = 0;

  static fit(samples: SampleSet, indices: number[]): TableBaseline {
    const sums = new Map<string, [number, number]>();
    const hourSums = new Map<string, [number, number]>();
    const table = new TableBaseline();
    let total = 0;
    const n = samples.nVertices;
    for (const i of indices) {
      let vertex = 0;
      let bestVal = -Infinity;
      for (let v = 0; v < n; v++) {
        const val = samples.features[i * 3 * n + v];
        if (val > bestVal) {
          bestVal = val;
          vertex = v;
        }
      }
      const [hour, weekday] = decodeHourWeekday(samples.time, i * TIME_FEATURES);
      const wclass = weekday >= 5 ? "we" : "wd";
      const label = samples.labels[i];
      for (const [key, store] of [
        [`${vertex}:${hour}:${wclass}`, sums],
        [`${hour}:${wclass}`, hourSums],
      ] as const) {
        const cur = store.get(key) ?? [0, 0];
        store.set(key, [cur[0] + label, cur[1] + 1]);
      }
      total += label;
    }
    for (const [key, [s, c]] of sums) table.buckets.set(key, s / c);
    for (const [key, [s, c]] of hourSums) table.hourBuckets.set(key, s / c);
    table.globalMean = indices.length ? total / indices.length : 0;
    return table;
  }

  predict(vertex: number, hour: number, weekday: number): number {
    const wclass = weekday >= 5 ? "we" : "wd";
    return (
      this.buckets.get(`${vertex}:${hour}:${wclass}`) ??
      this.hourBuckets.get(`${hour}:${wclass}`) ??
      this.globalMean
    );
  }

  mae(samples: SampleSet, indices: number[]): number {
    const n = samples.nVertices;
    let sum = 0;
    for (const i of indices) {
      let vertex = 0;
      let bestVal = -Infinity;
      for (let v = 0; v < n; v++) {
        const val = samples.features[i * 3 * n + v];
        if (val > bestVal) {
          bestVal = val;
          vertex = v;
        }
      }
      const [hour, weekday] = decodeHourWeekday(samples.time, i * TIME_FEATURES);
      sum += Math.abs(samples.labels[i] - this.predict(vertex, hour, weekday));
    }
    return indices.length ? sum / indices.length : 0;
  }
}
