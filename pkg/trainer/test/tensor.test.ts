import { describe, expect, test } from "vitest";

import {
  Tensor, add, addConst, addScalars, concatCols, cos, linear, meanAll, mseConst, mul,
  mulColConst, mulRowConst, rowDot, scale, sin, sub, tanh,
} from "../src/tensor.js";

function numericalGrad(f: (p: Float64Array) => number, p: Float64Array, i: number,
                       h = 1e-6): number {
  const plus = Float64Array.from(p);
  const minus = Float64Array.from(p);
  plus[i] += h;
  minus[i] -= h;
  return (f(plus) - f(minus)) / (2 * h);
}

describe("autodiff primitives", () => {
  test("linear matches finite differences", () => {
    const W0 = Float64Array.from([0.3, -0.2, 0.5, 0.1, 0.7, -0.4]);
    const x = Tensor.fromArray([1.0, 2.0, -1.0, 0.5, 0.2, 0.3], 2, 3);
    const f = (w: Float64Array) => {
      const W = Tensor.param(Float64Array.from(w), 2, 3);
      return meanAll(tanh(linear(x, W, null))).item();
    };
    const W = Tensor.param(Float64Array.from(W0), 2, 3);
    const loss = meanAll(tanh(linear(x, W, null)));
    loss.backward();
    for (let i = 0; i < W0.length; i++) {
      expect(W.grad![i]).toBeCloseTo(numericalGrad(f, W0, i), 7);
    }
  });

  test("bias gradient", () => {
    const x = Tensor.fromArray([0.5, -0.3, 0.2, 0.9], 2, 2);
    const b0 = Float64Array.from([0.1, -0.2]);
    const f = (bv: Float64Array) => {
      const W = Tensor.fromArray([1, 0, 0, 1], 2, 2);
      const b = Tensor.param(Float64Array.from(bv), 1, 2);
      return meanAll(mul(linear(x, W, b), linear(x, W, b))).item();
    };
    const W = Tensor.fromArray([1, 0, 0, 1], 2, 2);
    const b = Tensor.param(Float64Array.from(b0), 1, 2);
    const y = linear(x, W, b);
    meanAll(mul(y, y)).backward();
    for (let i = 0; i < 2; i++) {
      expect(b.grad![i]).toBeCloseTo(numericalGrad(f, b0, i), 7);
    }
  });

  test("elementwise chain rules", () => {
    const p0 = Float64Array.from([0.4, -0.6, 1.2]);
    const f = (pv: Float64Array) => {
      const p = Tensor.param(Float64Array.from(pv), 1, 3);
      const y = add(mul(sin(p), cos(p)), scale(tanh(p), 0.5));
      return meanAll(mul(y, y)).item();
    };
    const p = Tensor.param(Float64Array.from(p0), 1, 3);
    const y = add(mul(sin(p), cos(p)), scale(tanh(p), 0.5));
    meanAll(mul(y, y)).backward();
    for (let i = 0; i < 3; i++) {
      expect(p.grad![i]).toBeCloseTo(numericalGrad(f, p0, i), 7);
    }
  });

  test("rowDot, concatCols, const broadcasts, mse", () => {
    const p0 = Float64Array.from([0.2, 0.8, -0.5, 0.3]);
    const target = Float64Array.from([0.1, -0.4]);
    const row = Float64Array.from([2.0, -1.0]);
    const col = Float64Array.from([0.5, 1.5]);
    const f = (pv: Float64Array) => {
      const p = Tensor.param(Float64Array.from(pv), 2, 2);
      const q = concatCols(mulRowConst(p, row), mulColConst(p, col));
      const d = rowDot(q, q);
      return addScalars([mseConst(d, target), meanAll(sub(d, addConst(d, -1)))]).item();
    };
    const p = Tensor.param(Float64Array.from(p0), 2, 2);
    const q = concatCols(mulRowConst(p, row), mulColConst(p, col));
    const d = rowDot(q, q);
    addScalars([mseConst(d, target), meanAll(sub(d, addConst(d, -1)))]).backward();
    for (let i = 0; i < 4; i++) {
      expect(p.grad![i]).toBeCloseTo(numericalGrad(f, p0, i), 6);
    }
  });
});
