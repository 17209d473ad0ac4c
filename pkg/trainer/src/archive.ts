/**
 * Model archive writer/reader: canonical JSON manifest plus one raw
 * little-endian float32 binary per tensor.  This is the engine's loading
 * contract, so tensor names, shapes and checksums must match exactly.
 */

import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

import { Arch, DeepOnet, EdgeType } from "./model.js";
import { Tensor } from "./tensor.js";

const FORMAT = "deeponet-archive";
const VERSION = 1;

/** Archive-facing shape: biases are one-dimensional. */
function archiveShape(model: DeepOnet, name: string): number[] {
  const [r, c] = model.tensorShape(name);
  if (name.endsWith(".b")) return [r];
  return [r, c];
}

export function saveModel(model: DeepOnet, dir: string, provenance: object = {}): void {
  fs.mkdirSync(dir, { recursive: true });
  const tensors: object[] = [];
  for (const name of model.tensorNames()) {
    const t = model.params.get(name)!;
    const f32 = new Float32Array(t.data.length);
    for (let i = 0; i < t.data.length; i++) f32[i] = Math.fround(t.data[i]);
    const buf = Buffer.from(f32.buffer);
    const file = name.replace(/\./g, "_") + ".bin";
    fs.writeFileSync(path.join(dir, file), buf);
    tensors.push({
      name,
      file,
      shape: archiveShape(model, name),
      dtype: "float32",
      sha256: createHash("sha256").update(buf).digest("hex"),
    });
  }
  const manifest = {
    format: FORMAT,
    version: VERSION,
    edge_type: model.edgeType,
    eps: model.epsilon,
    arch: {
      n_sensor: model.arch.nSensor,
      width: model.arch.width,
      depth: model.arch.depth,
      p: model.arch.p,
      n_frequencies: model.arch.nFreq,
      activation: "tanh",
      branch: "gated-mlp",
      trunk: "fourier-mlp",
      input_order: ["u_origin", "u_target", "u_init", "nu"],
      normalization: "none",
    },
    domain: { horizon: 1.0, length: 1.0 },
    provenance,
    tensors,
  };
  fs.writeFileSync(path.join(dir, "manifest.json"),
                   canonicalJson(manifest));
}

export function loadModel(dir: string): DeepOnet {
  const manifest = JSON.parse(fs.readFileSync(path.join(dir, "manifest.json"), "utf-8"));
  if (manifest.format !== FORMAT) throw new Error(`${dir}: not a model archive`);
  if (manifest.version !== VERSION) throw new Error(`${dir}: unsupported version`);
  const arch: Arch = {
    nSensor: manifest.arch.n_sensor,
    width: manifest.arch.width,
    depth: manifest.arch.depth,
    p: manifest.arch.p,
    nFreq: manifest.arch.n_frequencies,
  };
  const model = new DeepOnet(arch, manifest.eps, manifest.edge_type as EdgeType);
  for (const spec of manifest.tensors) {
    const buf = fs.readFileSync(path.join(dir, spec.file));
    const digest = createHash("sha256").update(buf).digest("hex");
    if (digest !== spec.sha256) throw new Error(`${dir}: checksum mismatch for ${spec.name}`);
    const f32 = new Float32Array(buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength));
    const [r, c] = model.tensorShape(spec.name);
    if (f32.length !== r * c) throw new Error(`${dir}: bad shape for ${spec.name}`);
    const data = new Float64Array(f32.length);
    for (let i = 0; i < f32.length; i++) data[i] = f32[i];
    model.params.set(spec.name, Tensor.param(data, r, c));
  }
  for (const name of model.tensorNames()) {
    if (!model.params.has(name)) throw new Error(`${dir}: missing tensor ${name}`);
  }
  return model;
}

/** Sorted-key JSON with two-space indentation and a trailing newline. */
export function canonicalJson(obj: unknown): string {
  const sort = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(sort);
    if (v && typeof v === "object") {
      const out: Record<string, unknown> = {};
      for (const k of Object.keys(v as object).sort()) {
        out[k] = sort((v as Record<string, unknown>)[k]);
      }
      return out;
    }
    return v;
  };
  return JSON.stringify(sort(obj), null, 2) + "\n";
}
