/**
 * Desk-scale end-to-end training (B1): generate data with the engine, train
 * the three edge models, check the validation loss drops at least tenfold,
 * export archives, and verify a coupled solve with them reaches relative
 * space-time L2 error <= 0.3 against the finite-volume reference.
 *
 * Long-running (tens of minutes); the three models train as parallel child
 * processes.
 */

import { execFileSync, spawn } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, describe, expect, test } from "vitest";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "driftgraph-b1-"));
const root = path.resolve(path.dirname(new URL(import.meta.url).pathname), "..");

afterAll(() => {
  fs.rmSync(tmp, { recursive: true, force: true });
});

function py(args: string[], timeoutMs = 1800_000): string {
  return execFileSync("python3", ["-m", "driftgraph.cli", ...args],
                      { stdio: ["ignore", "pipe", "pipe"], timeout: timeoutMs }).toString();
}

function trainInChild(etype: string, dataset: string, out: string): Promise<void> {
  return new Promise((resolve, reject) => {
    const child = spawn("node", [path.join(root, "dist", "cli.js"), "train",
                                 "--dataset", dataset, "--out", out,
                                 "--edge-type", etype, "--width", "32",
                                 "--epochs", "2000", "--seed", "11"],
                        { stdio: ["ignore", "inherit", "inherit"] });
    child.on("exit", (code) => code === 0 ? resolve()
      : reject(new Error(`training ${etype} exited with ${code}`)));
    child.on("error", reject);
  });
}

describe("desk-scale training (B1)", () => {
  test("trains, exports, and couples within tolerance", async () => {
    execFileSync("npx", ["tsc"], { cwd: root, stdio: "pipe" });

    // 50 instances on the three data graphs give >= 200 records per edge type
    const genDir = path.join(tmp, "gen");
    const cfg = path.join(tmp, "gen.toml");
    fs.writeFileSync(cfg, "[generate]\nn_instances = 50\n[gp]\nprofile = \"train\"\n");
    py(["generate", "--config", cfg, "--seed", "100", "--out", genDir]);
    const dataset = path.join(genDir, "dataset");
    const manifest = JSON.parse(fs.readFileSync(path.join(dataset, "manifest.json"), "utf-8"));
    for (const etype of ["inflow", "inner", "outflow"]) {
      expect(manifest.records[etype].count).toBeGreaterThanOrEqual(200);
    }

    const modelsDir = path.join(tmp, "models");
    await Promise.all(["inflow", "inner", "outflow"].map(
      (etype) => trainInChild(etype, dataset, modelsDir)));

    // validation loss decreased at least tenfold from initialization
    for (const etype of ["inflow", "inner", "outflow"]) {
      const man = JSON.parse(fs.readFileSync(
        path.join(modelsDir, etype, "manifest.json"), "utf-8"));
      const v0 = man.provenance.initial_validation;
      const v1 = man.provenance.validation;
      const sum = (v: any) => v.pde + v.init + v.edge;
      console.log(`${etype}: validation ${sum(v0).toExponential(3)} -> ` +
                  `${sum(v1).toExponential(3)}`);
      expect(sum(v1)).toBeLessThan(sum(v0) / 10);
    }

    // coupled solve on the double-Y graph against the reference solver
    const coupleCfg = path.join(tmp, "couple.toml");
    fs.writeFileSync(coupleCfg, [
      "[graph]", 'builtin = "fig1"',
      "[gp]", 'profile = "test"',
      "[coupling]", "iterations = 1500", "lr = 0.02",
      "",
    ].join("\n"));
    const coupleOut = path.join(tmp, "couple");
    const stdout = py(["couple", "--config", coupleCfg, "--seed", "7",
                       "--out", coupleOut, "--surrogate", `archive:${modelsDir}`]);
    console.log(stdout.trim());
    const report = JSON.parse(fs.readFileSync(path.join(coupleOut, "report.json"), "utf-8"));
    console.log(`[B1] coupled rel L2 vs FVM: ${report.l2_rel_vs_fvm}`);
    expect(report.l2_rel_vs_fvm).toBeLessThan(0.3);
  }, 3600_000);
});
