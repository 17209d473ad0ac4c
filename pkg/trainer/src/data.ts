/** Dataset archive reader: manifest.json plus per-edge-type raw float32
 * record matrices produced by the engine's generate command. */

import * as fs from "node:fs";
import * as path from "node:path";

import { Grids } from "./losses.js";

export interface Dataset {
  grids: Grids;
  epsilon: number;
  records: Record<string, Float64Array[]>;
  manifest: Record<string, unknown>;
}

export function loadDataset(dir: string): Dataset {
  const manifest = JSON.parse(fs.readFileSync(path.join(dir, "manifest.json"), "utf-8"));
  if (manifest.format !== "driftgraph-dataset") {
    throw new Error(`${dir}: not a dataset archive`);
  }
  const grids: Grids = {
    nOrigin: manifest.grids.n_origin,
    nTarget: manifest.grids.n_target,
    nInit: manifest.grids.n_init,
  };
  const records: Record<string, Float64Array[]> = {};
  for (const [etype, rec] of Object.entries<Record<string, any>>(manifest.records)) {
    const buf = fs.readFileSync(path.join(dir, rec.file));
    const f32 = new Float32Array(buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength));
    const dim = rec.record_dim;
    if (f32.length !== rec.count * dim) throw new Error(`${dir}: truncated ${rec.file}`);
    const rows: Float64Array[] = [];
    for (let i = 0; i < rec.count; i++) {
      const row = new Float64Array(dim);
      for (let j = 0; j < dim; j++) row[j] = f32[i * dim + j];
      rows.push(row);
    }
    records[etype] = rows;
  }
  return { grids, epsilon: manifest.eps, records, manifest };
}
