/**
 * Operator network: gated-encoder branch on the sensor vector, Fourier
 * feature trunk on (t, x), output = inner product of the two p-vectors.
 *
 * Spatial and temporal derivatives of the output are produced by carrying
 * first and second Taylor components through the trunk as ordinary tape
 * tensors, so weight gradients flow through the derivatives as well.
 */

import {
  Tensor, addConst, concatCols, gatedBlend, linear, mul, mulRowConst, rowDot, scale,
  sin, cos, sub, tanh,
} from "./tensor.js";

export interface Arch {
  nSensor: number;
  width: number;
  depth: number;
  p: number;
  nFreq: number;
}

export type EdgeType = "inflow" | "inner" | "outflow";

export class DeepOnet {
  arch: Arch;
  epsilon: number;
  edgeType: EdgeType;
  params = new Map<string, Tensor>();

  constructor(arch: Arch, epsilon: number, edgeType: EdgeType) {
    this.arch = arch;
    this.epsilon = epsilon;
    this.edgeType = edgeType;
  }

  tensorNames(): string[] {
    const names = ["branch.enc_u.W", "branch.enc_u.b", "branch.enc_v.W", "branch.enc_v.b"];
    for (let k = 1; k <= this.arch.depth; k++) names.push(`branch.hidden${k}.W`, `branch.hidden${k}.b`);
    names.push("branch.out.W", "branch.out.b", "trunk.frequencies");
    for (let k = 1; k <= this.arch.depth; k++) names.push(`trunk.hidden${k}.W`, `trunk.hidden${k}.b`);
    names.push("trunk.out.W", "trunk.out.b");
    return names;
  }

  tensorShape(name: string): [number, number] {
    const { nSensor, width, p, nFreq } = this.arch;
    if (name === "trunk.frequencies") return [nFreq, 2];
    const [part, layer, kind] = name.split(".");
    if (kind === "b") return layer === "out" ? [p, 1] : [width, 1];
    if (layer === "out") return [p, width];
    if (part === "branch") {
      const fanIn = layer === "enc_u" || layer === "enc_v" || layer === "hidden1" ? nSensor : width;
      return [width, fanIn];
    }
    return [width, layer === "hidden1" ? 2 * nFreq : width];
  }

  /** Glorot-normal init with a seeded xorshift generator. */
  init(seed: number): void {
    let s = (seed >>> 0) || 1;
    const next = () => {
      // xorshift32 -> uniform in (0,1)
      s ^= s << 13; s >>>= 0;
      s ^= s >> 17; s >>>= 0;
      s ^= s << 5; s >>>= 0;
      return (s + 0.5) / 4294967296;
    };
    const normal = () => {
      const u = next(), v = next();
      return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
    };
    for (const name of this.tensorNames()) {
      const [r, c] = this.tensorShape(name);
      const buf = new Float64Array(r * c);
      if (name === "trunk.frequencies") {
        for (let i = 0; i < buf.length; i++) buf[i] = normal();
      } else if (!name.endsWith(".b")) {
        const sc = Math.sqrt(2.0 / (r + c));
        for (let i = 0; i < buf.length; i++) buf[i] = sc * normal();
      }
      this.params.set(name, Tensor.param(buf, r, c));
    }
  }

  trainable(): Tensor[] {
    return this.tensorNames().filter((n) => n !== "trunk.frequencies")
      .map((n) => this.params.get(n)!);
  }

  private p(name: string): Tensor {
    const t = this.params.get(name);
    if (!t) throw new Error(`missing tensor ${name}`);
    return t;
  }

  /** Branch output [B, p] from sensor rows [B, nSensor]. */
  branch(u: Tensor): Tensor {
    const lin = (x: Tensor, w: string, b: string) =>
      linear(x, this.p(w), biasAsVector(this.p(b)));
    const U = tanh(lin(u, "branch.enc_u.W", "branch.enc_u.b"));
    const V = tanh(lin(u, "branch.enc_v.W", "branch.enc_v.b"));
    let H = u;
    for (let k = 1; k <= this.arch.depth; k++) {
      const Z = tanh(lin(H, `branch.hidden${k}.W`, `branch.hidden${k}.b`));
      H = gatedBlend(Z, U, V);
    }
    return lin(H, "branch.out.W", "branch.out.b");
  }

  /**
   * Trunk basis values and Taylor components along ``direction`` (wt, wx):
   * returns [T0] (order 0), [T0, T1] (order 1) or [T0, T1, T2] (order 2).
   */
  trunk(ts: Float64Array, xs: Float64Array, order: 0 | 1 | 2,
        direction: [number, number] = [0, 1]): Tensor[] {
    const B = ts.length;
    const freq = this.p("trunk.frequencies");
    const nf = this.arch.nFreq;
    const a = Tensor.zeros(B, nf);
    const da = new Float64Array(nf);
    for (let j = 0; j < nf; j++) {
      da[j] = 2 * Math.PI * (freq.data[j * 2] * direction[0] + freq.data[j * 2 + 1] * direction[1]);
    }
    for (let i = 0; i < B; i++) {
      for (let j = 0; j < nf; j++) {
        a.data[i * nf + j] = 2 * Math.PI * (freq.data[j * 2] * ts[i] + freq.data[j * 2 + 1] * xs[i]);
      }
    }
    const sinA = sin(a);
    const cosA = cos(a);
    let comps: Tensor[] = [concatCols(sinA, cosA)];
    if (order >= 1) {
      comps.push(concatCols(mulRowConst(cosA, da), scale(mulRowConst(sinA, da), -1)));
    }
    if (order >= 2) {
      const da2 = da.map((v) => v * v);
      comps.push(concatCols(scale(mulRowConst(sinA, da2), -1), scale(mulRowConst(cosA, da2), -1)));
    }
    for (let k = 1; k <= this.arch.depth; k++) {
      const W = this.p(`trunk.hidden${k}.W`);
      const b = biasAsVector(this.p(`trunk.hidden${k}.b`));
      const z = comps.map((t, idx) => linear(t, W, idx === 0 ? b : null));
      const t0 = tanh(z[0]);
      const out: Tensor[] = [t0];
      if (order >= 1) {
        const gate = addConst(scale(mul(t0, t0), -1), 1); // 1 - t0^2
        out.push(mul(gate, z[1]));
        if (order >= 2) {
          // d2 tanh(z) = (1 - t0^2) z2 - 2 t0 (1 - t0^2) z1^2
          const z1sq = mul(z[1], z[1]);
          out.push(sub(mul(gate, z[2]), scale(mul(mul(t0, gate), z1sq), 2)));
        }
      }
      comps = out;
    }
    const Wout = this.p("trunk.out.W");
    const bout = biasAsVector(this.p("trunk.out.b"));
    return comps.map((t, idx) => linear(t, Wout, idx === 0 ? bout : null));
  }
}

/** View a [m,1] parameter as a length-m bias vector for linear(). */
function biasAsVector(b: Tensor): Tensor {
  if (b.cols === 1) {
    const v = new Tensor(b.data, 1, b.rows, b.requiresGrad);
    v.grad = b.ensureGrad();
    // route gradient accumulation through the same buffer
    v.requiresGrad = b.requiresGrad;
    return v;
  }
  return b;
}

/** rho = <branch, trunk0> for each row. */
export function dotOutput(branchOut: Tensor, trunkComp: Tensor): Tensor {
  return rowDot(branchOut, trunkComp);
}
