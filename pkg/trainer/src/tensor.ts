/**
 * Minimal reverse-mode autodiff on dense row-major matrices.
 *
 * Every op records its parents and a backward closure on a shared tape;
 * calling backward() on a scalar output accumulates gradients into each
 * tensor's grad buffer.  Only the ops the operator-network losses need are
 * implemented.
 */

export class Tensor {
  data: Float64Array;
  rows: number;
  cols: number;
  grad: Float64Array | null = null;
  requiresGrad: boolean;
  parents: Tensor[] = [];
  backwardFn: (() => void) | null = null;

  constructor(data: Float64Array, rows: number, cols: number, requiresGrad = false) {
    if (data.length !== rows * cols) {
      throw new Error(`tensor data length ${data.length} != ${rows}x${cols}`);
    }
    this.data = data;
    this.rows = rows;
    this.cols = cols;
    this.requiresGrad = requiresGrad;
  }

  static zeros(rows: number, cols: number, requiresGrad = false): Tensor {
    return new Tensor(new Float64Array(rows * cols), rows, cols, requiresGrad);
  }

  static fromArray(values: number[] | Float64Array, rows: number, cols: number): Tensor {
    return new Tensor(Float64Array.from(values), rows, cols);
  }

  static param(values: Float64Array, rows: number, cols: number): Tensor {
    const t = new Tensor(values, rows, cols, true);
    t.grad = new Float64Array(rows * cols);
    return t;
  }

  item(): number {
    if (this.rows * this.cols !== 1) throw new Error("item() needs a 1x1 tensor");
    return this.data[0];
  }

  ensureGrad(): Float64Array {
    if (!this.grad) this.grad = new Float64Array(this.rows * this.cols);
    return this.grad;
  }

  /** Reverse pass from this scalar. */
  backward(): void {
    if (this.rows * this.cols !== 1) throw new Error("backward() needs a scalar");
    const order: Tensor[] = [];
    const seen = new Set<Tensor>();
    const visit = (t: Tensor) => {
      if (seen.has(t)) return;
      seen.add(t);
      for (const p of t.parents) visit(p);
      order.push(t);
    };
    visit(this);
    this.ensureGrad()[0] = 1.0;
    for (let i = order.length - 1; i >= 0; i--) {
      const node = order[i];
      if (node.backwardFn && node.grad) node.backwardFn();
    }
  }
}

function track(out: Tensor, parents: Tensor[], backwardFn: () => void): Tensor {
  if (parents.some((p) => p.requiresGrad || p.backwardFn !== null)) {
    out.parents = parents;
    out.backwardFn = backwardFn;
    out.requiresGrad = true;
  }
  return out;
}

/** y = x W^T + b  (x: [B,n], W: [m,n], b: [m]) -> [B,m] */
export function linear(x: Tensor, W: Tensor, b: Tensor | null): Tensor {
  const B = x.rows, n = x.cols, m = W.rows;
  if (W.cols !== n) throw new Error(`linear: ${n} inputs vs W ${W.rows}x${W.cols}`);
  const out = Tensor.zeros(B, m);
  const xd = x.data, wd = W.data, od = out.data, bd = b ? b.data : null;
  for (let i = 0; i < B; i++) {
    const xi = i * n, oi = i * m;
    for (let j = 0; j < m; j++) {
      const wj = j * n;
      let acc = bd ? bd[j] : 0.0;
      for (let k = 0; k < n; k++) acc += xd[xi + k] * wd[wj + k];
      od[oi + j] = acc;
    }
  }
  const parents = b ? [x, W, b] : [x, W];
  return track(out, parents, () => {
    const go = out.grad!;
    if (x.requiresGrad || x.backwardFn) {
      const gx = x.ensureGrad();
      for (let i = 0; i < B; i++) {
        const oi = i * m, xi = i * n;
        for (let j = 0; j < m; j++) {
          const g = go[oi + j];
          if (g === 0.0) continue;
          const wj = j * n;
          for (let k = 0; k < n; k++) gx[xi + k] += g * wd[wj + k];
        }
      }
    }
    if (W.requiresGrad) {
      const gw = W.ensureGrad();
      for (let i = 0; i < B; i++) {
        const oi = i * m, xi = i * n;
        for (let j = 0; j < m; j++) {
          const g = go[oi + j];
          if (g === 0.0) continue;
          const wj = j * n;
          for (let k = 0; k < n; k++) gw[wj + k] += g * xd[xi + k];
        }
      }
    }
    if (b && b.requiresGrad) {
      const gb = b.ensureGrad();
      for (let i = 0; i < B; i++) {
        const oi = i * m;
        for (let j = 0; j < m; j++) gb[j] += go[oi + j];
      }
    }
  });
}

function unaryOp(x: Tensor, f: (v: number) => number,
                 dfFromOut: (out: number, v: number) => number): Tensor {
  const out = Tensor.zeros(x.rows, x.cols);
  const xd = x.data, od = out.data;
  for (let i = 0; i < xd.length; i++) od[i] = f(xd[i]);
  return track(out, [x], () => {
    const gx = x.ensureGrad();
    const go = out.grad!;
    for (let i = 0; i < xd.length; i++) gx[i] += go[i] * dfFromOut(od[i], xd[i]);
  });
}

export const tanh = (x: Tensor) => unaryOp(x, Math.tanh, (o) => 1 - o * o);
export const sin = (x: Tensor) => unaryOp(x, Math.sin, (_o, v) => Math.cos(v));
export const cos = (x: Tensor) => unaryOp(x, Math.cos, (_o, v) => -Math.sin(v));

function binOp(a: Tensor, b: Tensor, f: (x: number, y: number) => number,
               dfa: (x: number, y: number) => number,
               dfb: (x: number, y: number) => number): Tensor {
  if (a.rows !== b.rows || a.cols !== b.cols) throw new Error("shape mismatch");
  const out = Tensor.zeros(a.rows, a.cols);
  const ad = a.data, bd = b.data, od = out.data;
  for (let i = 0; i < ad.length; i++) od[i] = f(ad[i], bd[i]);
  return track(out, [a, b], () => {
    const go = out.grad!;
    if (a.requiresGrad || a.backwardFn) {
      const ga = a.ensureGrad();
      for (let i = 0; i < ad.length; i++) ga[i] += go[i] * dfa(ad[i], bd[i]);
    }
    if (b.requiresGrad || b.backwardFn) {
      const gb = b.ensureGrad();
      for (let i = 0; i < bd.length; i++) gb[i] += go[i] * dfb(ad[i], bd[i]);
    }
  });
}

export const add = (a: Tensor, b: Tensor) => binOp(a, b, (x, y) => x + y, () => 1, () => 1);
export const sub = (a: Tensor, b: Tensor) => binOp(a, b, (x, y) => x - y, () => 1, () => -1);
export const mul = (a: Tensor, b: Tensor) =>
  binOp(a, b, (x, y) => x * y, (_x, y) => y, (x) => x);

export function scale(x: Tensor, c: number): Tensor {
  const out = Tensor.zeros(x.rows, x.cols);
  for (let i = 0; i < x.data.length; i++) out.data[i] = c * x.data[i];
  return track(out, [x], () => {
    const gx = x.ensureGrad();
    for (let i = 0; i < x.data.length; i++) gx[i] += c * out.grad![i];
  });
}

export function addConst(x: Tensor, c: number): Tensor {
  const out = Tensor.zeros(x.rows, x.cols);
  for (let i = 0; i < x.data.length; i++) out.data[i] = x.data[i] + c;
  return track(out, [x], () => {
    const gx = x.ensureGrad();
    for (let i = 0; i < x.data.length; i++) gx[i] += out.grad![i];
  });
}

/** Elementwise multiply by a constant row, broadcast over rows. */
export function mulRowConst(x: Tensor, row: Float64Array): Tensor {
  if (row.length !== x.cols) throw new Error("row length mismatch");
  const out = Tensor.zeros(x.rows, x.cols);
  for (let i = 0; i < x.rows; i++) {
    for (let j = 0; j < x.cols; j++) out.data[i * x.cols + j] = x.data[i * x.cols + j] * row[j];
  }
  return track(out, [x], () => {
    const gx = x.ensureGrad();
    for (let i = 0; i < x.rows; i++) {
      for (let j = 0; j < x.cols; j++) gx[i * x.cols + j] += out.grad![i * x.cols + j] * row[j];
    }
  });
}

/** Elementwise multiply by a constant column, broadcast over cols. */
export function mulColConst(x: Tensor, col: Float64Array): Tensor {
  if (col.length !== x.rows) throw new Error("col length mismatch");
  const out = Tensor.zeros(x.rows, x.cols);
  for (let i = 0; i < x.rows; i++) {
    for (let j = 0; j < x.cols; j++) out.data[i * x.cols + j] = x.data[i * x.cols + j] * col[i];
  }
  return track(out, [x], () => {
    const gx = x.ensureGrad();
    for (let i = 0; i < x.rows; i++) {
      for (let j = 0; j < x.cols; j++) gx[i * x.cols + j] += out.grad![i * x.cols + j] * col[i];
    }
  });
}

/** Row-wise dot product of two [B,p] tensors -> [B,1]. */
export function rowDot(a: Tensor, b: Tensor): Tensor {
  if (a.rows !== b.rows || a.cols !== b.cols) throw new Error("shape mismatch");
  const B = a.rows, p = a.cols;
  const out = Tensor.zeros(B, 1);
  for (let i = 0; i < B; i++) {
    let acc = 0.0;
    for (let j = 0; j < p; j++) acc += a.data[i * p + j] * b.data[i * p + j];
    out.data[i] = acc;
  }
  return track(out, [a, b], () => {
    if (a.requiresGrad || a.backwardFn) {
      const ga = a.ensureGrad();
      for (let i = 0; i < B; i++) {
        for (let j = 0; j < p; j++) ga[i * p + j] += out.grad![i] * b.data[i * p + j];
      }
    }
    if (b.requiresGrad || b.backwardFn) {
      const gb = b.ensureGrad();
      for (let i = 0; i < B; i++) {
        for (let j = 0; j < p; j++) gb[i * p + j] += out.grad![i] * a.data[i * p + j];
      }
    }
  });
}

export function concatCols(a: Tensor, b: Tensor): Tensor {
  if (a.rows !== b.rows) throw new Error("row mismatch");
  const B = a.rows, ca = a.cols, cb = b.cols;
  const out = Tensor.zeros(B, ca + cb);
  for (let i = 0; i < B; i++) {
    out.data.set(a.data.subarray(i * ca, (i + 1) * ca), i * (ca + cb));
    out.data.set(b.data.subarray(i * cb, (i + 1) * cb), i * (ca + cb) + ca);
  }
  return track(out, [a, b], () => {
    if (a.requiresGrad || a.backwardFn) {
      const ga = a.ensureGrad();
      for (let i = 0; i < B; i++) {
        for (let j = 0; j < ca; j++) ga[i * ca + j] += out.grad![i * (ca + cb) + j];
      }
    }
    if (b.requiresGrad || b.backwardFn) {
      const gb = b.ensureGrad();
      for (let i = 0; i < B; i++) {
        for (let j = 0; j < cb; j++) gb[i * cb + j] += out.grad![i * (ca + cb) + ca + j];
      }
    }
  });
}

/** Mean of all entries -> [1,1]. */
export function meanAll(x: Tensor): Tensor {
  const out = Tensor.zeros(1, 1);
  let acc = 0.0;
  for (let i = 0; i < x.data.length; i++) acc += x.data[i];
  out.data[0] = acc / x.data.length;
  return track(out, [x], () => {
    const gx = x.ensureGrad();
    const g = out.grad![0] / x.data.length;
    for (let i = 0; i < x.data.length; i++) gx[i] += g;
  });
}

export function addScalars(terms: Tensor[]): Tensor {
  const out = Tensor.zeros(1, 1);
  for (const t of terms) {
    if (t.rows * t.cols !== 1) throw new Error("addScalars needs scalars");
    out.data[0] += t.data[0];
  }
  return track(out, terms, () => {
    for (const t of terms) t.ensureGrad()[0] += out.grad![0];
  });
}

/** Mean squared deviation from a constant target column -> [1,1]. */
export function mseConst(x: Tensor, target: Float64Array): Tensor {
  if (x.cols !== 1 || target.length !== x.rows) throw new Error("mseConst shapes");
  const out = Tensor.zeros(1, 1);
  let acc = 0.0;
  for (let i = 0; i < x.rows; i++) {
    const d = x.data[i] - target[i];
    acc += d * d;
  }
  out.data[0] = acc / x.rows;
  return track(out, [x], () => {
    const gx = x.ensureGrad();
    const g = out.grad![0] * 2.0 / x.rows;
    for (let i = 0; i < x.rows; i++) gx[i] += g * (x.data[i] - target[i]);
  });
}

/** Fused gated blend (1 - z) u + z v, one node instead of four. */
export function gatedBlend(z: Tensor, u: Tensor, v: Tensor): Tensor {
  if (z.rows !== u.rows || z.cols !== u.cols || z.rows !== v.rows || z.cols !== v.cols) {
    throw new Error("gatedBlend shape mismatch");
  }
  const out = Tensor.zeros(z.rows, z.cols);
  const zd = z.data, ud = u.data, vd = v.data, od = out.data;
  for (let i = 0; i < zd.length; i++) od[i] = (1 - zd[i]) * ud[i] + zd[i] * vd[i];
  return track(out, [z, u, v], () => {
    const go = out.grad!;
    if (z.requiresGrad || z.backwardFn) {
      const gz = z.ensureGrad();
      for (let i = 0; i < zd.length; i++) gz[i] += go[i] * (vd[i] - ud[i]);
    }
    if (u.requiresGrad || u.backwardFn) {
      const gu = u.ensureGrad();
      for (let i = 0; i < zd.length; i++) gu[i] += go[i] * (1 - zd[i]);
    }
    if (v.requiresGrad || v.backwardFn) {
      const gv = v.ensureGrad();
      for (let i = 0; i < zd.length; i++) gv[i] += go[i] * zd[i];
    }
  });
}
