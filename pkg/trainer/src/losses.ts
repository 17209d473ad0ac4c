/**
 * Physics-informed losses for one edge type, built entirely from tape ops so
 * they are differentiable in the weights.
 *
 * The sensor row layout is (u_origin | u_target | u_init | nu) on uniform
 * grids over [0, 1]; flux means J = -eps rho_x + nu rho (1 - rho).
 */

import { DeepOnet, EdgeType } from "./model.js";
import {
  Tensor, add, addConst, addScalars, meanAll, mseConst, mul, mulColConst, rowDot, scale, sub,
} from "./tensor.js";

export interface Grids {
  nOrigin: number;
  nTarget: number;
  nInit: number;
}

export function sensorParts(row: Float64Array | number[], grids: Grids) {
  const a = Float64Array.from(row);
  const { nOrigin, nTarget, nInit } = grids;
  return {
    uOrigin: a.subarray(0, nOrigin),
    uTarget: a.subarray(nOrigin, nOrigin + nTarget),
    uInit: a.subarray(nOrigin + nTarget, nOrigin + nTarget + nInit),
    nu: a[nOrigin + nTarget + nInit],
  };
}

export function interpUniform(series: Float64Array, t: number): number {
  const n = series.length;
  const pos = Math.min(Math.max(t * (n - 1), 0), n - 1);
  const j = Math.min(Math.floor(pos), n - 2);
  const w = pos - j;
  return (1 - w) * series[j] + w * series[j + 1];
}

function batchTensor(rows: Float64Array[], cols: number): Tensor {
  const out = Tensor.zeros(rows.length, cols);
  rows.forEach((r, i) => out.data.set(r, i * cols));
  return out;
}

/** Pointwise strong-form residual loss at (t, x) collocation points. */
export function pdeLoss(model: DeepOnet, sensors: Float64Array[], ts: Float64Array,
                        xs: Float64Array, grids: Grids): Tensor {
  const u = batchTensor(sensors, model.arch.nSensor);
  const b = model.branch(u);
  const [t0x, t1x, t2x] = model.trunk(ts, xs, 2, [0, 1]);
  const [, t1t] = model.trunk(ts, xs, 1, [1, 0]);
  const rho = rowDot(b, t0x);
  const rhoT = rowDot(b, t1t);
  const rhoX = rowDot(b, t1x);
  const rhoXX = rowDot(b, t2x);
  const nus = Float64Array.from(sensors, (s) => sensorParts(s, grids).nu);
  // residual = rho_t - eps rho_xx + nu (1 - 2 rho) rho_x
  const fprime = addConst(scale(rho, -2), 1);
  const resid = add(
    sub(rhoT, scale(rhoXX, model.epsilon)),
    mulColConst(mul(fprime, rhoX), nus),
  );
  return meanAll(mul(resid, resid));
}

/** Initial-condition misfit at x collocation points. */
export function initLoss(model: DeepOnet, sensors: Float64Array[], xs: Float64Array,
                         grids: Grids): Tensor {
  const u = batchTensor(sensors, model.arch.nSensor);
  const b = model.branch(u);
  const [t0] = model.trunk(new Float64Array(xs.length), xs, 0);
  const rho = rowDot(b, t0);
  const target = Float64Array.from(xs, (x, i) =>
    interpUniform(sensorParts(sensors[i], grids).uInit as Float64Array, x));
  return mseConst(rho, target);
}

function fluxAt(model: DeepOnet, b: Tensor, ts: Float64Array, x: number,
                nus: Float64Array): { rho: Tensor; flux: Tensor } {
  const xsFixed = new Float64Array(ts.length).fill(x);
  const [t0, t1] = model.trunk(ts, xsFixed, 1, [0, 1]);
  const rho = rowDot(b, t0);
  const rhoX = rowDot(b, t1);
  const f = mul(rho, addConst(scale(rho, -1), 1)); // rho (1 - rho)
  const flux = add(scale(rhoX, -model.epsilon), mulColConst(f, nus));
  return { rho, flux };
}

/** Boundary residual loss at time collocation points; the variant follows
 * the edge type. */
export function edgeLoss(model: DeepOnet, sensors: Float64Array[], ts: Float64Array,
                         grids: Grids): Tensor {
  const u = batchTensor(sensors, model.arch.nSensor);
  const b = model.branch(u);
  const nus = Float64Array.from(sensors, (s) => sensorParts(s, grids).nu);
  const origin = fluxAt(model, b, ts, 0.0, nus);
  const target = fluxAt(model, b, ts, 1.0, nus);
  const uo = Float64Array.from(ts, (t, i) =>
    interpUniform(sensorParts(sensors[i], grids).uOrigin as Float64Array, t));
  const ut = Float64Array.from(ts, (t, i) =>
    interpUniform(sensorParts(sensors[i], grids).uTarget as Float64Array, t));

  let r0: Tensor;
  let r1: Tensor;
  if (model.edgeType === "inflow") {
    // u_origin (1 - rho(0)) - J(0)
    const oneMinusRho = addConst(scale(origin.rho, -1), 1);
    r0 = sub(mulColConst(oneMinusRho, uo), origin.flux);
    r1 = sub(constCol(ut), target.flux);
  } else if (model.edgeType === "inner") {
    r0 = sub(constCol(uo), origin.flux);
    r1 = sub(constCol(ut), target.flux);
  } else {
    r0 = sub(constCol(uo), origin.flux);
    // u_target rho(1) - J(1)
    r1 = sub(mulColConst(target.rho, ut), target.flux);
  }
  return addScalars([meanAll(mul(r0, r0)), meanAll(mul(r1, r1))]);
}

function constCol(values: Float64Array): Tensor {
  return new Tensor(Float64Array.from(values), values.length, 1);
}

export interface LossValues {
  pde: number;
  init: number;
  edge: number;
}

/** Total objective and its parts for one batch triple. */
export function objective(
  model: DeepOnet,
  pdeBatch: { sensors: Float64Array[]; ts: Float64Array; xs: Float64Array },
  initBatch: { sensors: Float64Array[]; xs: Float64Array },
  bcBatch: { sensors: Float64Array[]; ts: Float64Array },
  grids: Grids,
  edgeWeight = 1.0,
): { total: Tensor; values: LossValues } {
  const lp = pdeLoss(model, pdeBatch.sensors, pdeBatch.ts, pdeBatch.xs, grids);
  const li = initLoss(model, initBatch.sensors, initBatch.xs, grids);
  const le = edgeLoss(model, bcBatch.sensors, bcBatch.ts, grids);
  return {
    total: addScalars([lp, li, edgeWeight === 1.0 ? le : scale(le, edgeWeight)]),
    values: { pde: lp.item(), init: li.item(), edge: le.item() },
  };
}
