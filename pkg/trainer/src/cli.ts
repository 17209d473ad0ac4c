/**
 * Trainer entry point.
 *
 *   train    --dataset DIR --out DIR [--edge-type inflow|inner|outflow|all]
 *            [--width N] [--epochs N] [--seed N]
 *   validate --dataset DIR --model DIR
 *   fixtures --model DIR --out FILE [--count N]  (loss fixtures for
 *            cross-implementation checks)
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { canonicalJson, loadModel, saveModel } from "./archive.js";
import { loadDataset } from "./data.js";
import { edgeLoss, initLoss, pdeLoss, sensorParts } from "./losses.js";
import { EdgeType } from "./model.js";
import { DEFAULT_CONFIG, train, validate, writeLossCurves } from "./train.js";

function parseArgs(argv: string[]): { cmd: string; opts: Record<string, string> } {
  const [cmd, ...rest] = argv;
  const opts: Record<string, string> = {};
  for (let i = 0; i < rest.length; i += 2) {
    if (!rest[i].startsWith("--")) throw new Error(`bad argument ${rest[i]}`);
    opts[rest[i].slice(2)] = rest[i + 1];
  }
  return { cmd, opts };
}

function cmdTrain(opts: Record<string, string>): number {
  const ds = loadDataset(opts["dataset"]);
  const outDir = opts["out"];
  const types: EdgeType[] = opts["edge-type"] && opts["edge-type"] !== "all"
    ? [opts["edge-type"] as EdgeType]
    : ["inflow", "inner", "outflow"];
  for (const etype of types) {
    const sensors = ds.records[etype];
    if (!sensors || sensors.length === 0) throw new Error(`no ${etype} records in dataset`);
    const cfg = {
      ...DEFAULT_CONFIG,
      edgeType: etype,
      width: opts["width"] ? parseInt(opts["width"], 10) : DEFAULT_CONFIG.width,
      epochs: opts["epochs"] ? parseInt(opts["epochs"], 10) : DEFAULT_CONFIG.epochs,
      seed: opts["seed"] ? parseInt(opts["seed"], 10) : DEFAULT_CONFIG.seed,
      edgeWeight: opts["edge-weight"] ? parseFloat(opts["edge-weight"]) : DEFAULT_CONFIG.edgeWeight,
      lr0: opts["lr0"] ? parseFloat(opts["lr0"]) : DEFAULT_CONFIG.lr0,
      collocation: (opts["collocation"] as "uniform" | "endpoints") ?? DEFAULT_CONFIG.collocation,
    };
    console.log(`training ${etype} model on ${sensors.length} records ` +
                `(width ${cfg.width}, ${cfg.epochs} epochs)`);
    const result = train(cfg, sensors, ds.grids, ds.epsilon,
                         (line) => console.log(`  ${line}`));
    const modelDir = path.join(outDir, etype);
    saveModel(result.model, modelDir, {
      trainer: "driftgraph-trainer",
      dataset: path.resolve(opts["dataset"]),
      records: sensors.length,
      epochs: cfg.epochs,
      seed: cfg.seed,
      validation: result.validation,
      initial_validation: result.initialValidation,
    });
    writeLossCurves(path.join(outDir, `${etype}_loss.csv`), result);
    const v0 = result.initialValidation;
    const v1 = result.validation;
    const sum = (v: typeof v0) => v.pde + v.init + v.edge;
    console.log(`  validation ${sum(v0).toExponential(3)} -> ${sum(v1).toExponential(3)}`);
  }
  return 0;
}

function cmdValidate(opts: Record<string, string>): number {
  const ds = loadDataset(opts["dataset"]);
  const model = loadModel(opts["model"]);
  const sensors = ds.records[model.edgeType];
  const v = validate(model, sensors, ds.grids);
  console.log(canonicalJson({ edge_type: model.edgeType, ...v }));
  return 0;
}

/** Deterministic fixtures plus this trainer's loss values on them. */
function cmdFixtures(opts: Record<string, string>): number {
  const model = loadModel(opts["model"]);
  const count = opts["count"] ? parseInt(opts["count"], 10) : 100;
  const grids = {
    nOrigin: 101, nTarget: 101, nInit: 101,
  };
  const n = model.arch.nSensor;
  if (n !== grids.nOrigin + grids.nTarget + grids.nInit + 1) {
    // fall back to equal thirds for reduced sensor sizes
    const third = Math.floor((n - 1) / 3);
    grids.nOrigin = third;
    grids.nTarget = third;
    grids.nInit = n - 1 - 2 * third;
  }
  let s = 12345;
  const rand = () => {
    s ^= s << 13; s >>>= 0;
    s ^= s >> 17; s >>>= 0;
    s ^= s << 5; s >>>= 0;
    return (s + 0.5) / 4294967296;
  };
  const fixtures = [];
  const results = [];
  for (let k = 0; k < count; k++) {
    const row = new Float64Array(n);
    for (let i = 0; i < n - 1; i++) row[i] = 0.5 * rand();
    row[n - 1] = 0.5 + rand();
    const nPts = 8;
    const pde = Array.from({ length: nPts }, () => [rand(), rand()]);
    const initPts = Array.from({ length: nPts }, () => rand());
    const bcTs = Array.from({ length: nPts }, () => rand());
    const parts = sensorParts(row, grids);
    fixtures.push({
      u_origin: Array.from(parts.uOrigin),
      u_target: Array.from(parts.uTarget),
      u_init: Array.from(parts.uInit),
      nu: parts.nu,
      edge_type: model.edgeType,
      pde_points: pde,
      init_points: initPts,
      bc_times: bcTs,
    });
    const sensors = [row];
    const manyRow = (m: number) => Array.from({ length: m }, () => row);
    const lPde = pdeLoss(model, manyRow(nPts),
                         Float64Array.from(pde, (q) => q[0]),
                         Float64Array.from(pde, (q) => q[1]), grids).item();
    const lInit = initLoss(model, manyRow(nPts), Float64Array.from(initPts), grids).item();
    const lEdge = edgeLoss(model, manyRow(nPts), Float64Array.from(bcTs), grids).item();
    results.push({ l_pde: lPde, l_init: lInit, l_edge: lEdge });
    void sensors;
  }
  fs.writeFileSync(opts["out"], canonicalJson({ fixtures, results }));
  return 0;
}

export function main(argv: string[]): number {
  const { cmd, opts } = parseArgs(argv);
  if (cmd === "train") return cmdTrain(opts);
  if (cmd === "validate") return cmdValidate(opts);
  if (cmd === "fixtures") return cmdFixtures(opts);
  console.error(`unknown command ${cmd}; use train | validate | fixtures`);
  return 2;
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
