import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, describe, expect, test } from "vitest";

import { loadModel, saveModel } from "../src/archive.js";
import { main } from "../src/cli.js";
import { DeepOnet } from "../src/model.js";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "driftgraph-b2-"));

afterAll(() => {
  fs.rmSync(tmp, { recursive: true, force: true });
});

describe("cross-implementation loss agreement (B2)", () => {
  test("trainer and engine edge losses agree to 1e-6 relative on 100 fixtures", () => {
    for (const etype of ["inflow", "inner", "outflow"] as const) {
      const model = new DeepOnet(
        { nSensor: 304, width: 16, depth: 3, p: 16, nFreq: 5 }, 0.05, etype);
      model.init(42);
      const modelDir = path.join(tmp, `model-${etype}`);
      saveModel(model, modelDir);

      // evaluate with the float32-rounded weights the archive actually holds
      const fixturesFile = path.join(tmp, `${etype}-fixtures.json`);
      const rc = main(["fixtures", "--model", modelDir, "--out", fixturesFile,
                       "--count", etype === "inner" ? "100" : "20"]);
      expect(rc).toBe(0);
      const ours = JSON.parse(fs.readFileSync(fixturesFile, "utf-8"));

      const pyOut = path.join(tmp, `${etype}-py.json`);
      execFileSync("python3", [
        "-m", "driftgraph.cli", "edge-loss",
        "--model", modelDir, "--fixtures", fixturesFile, "--out", pyOut,
      ], { stdio: "pipe" });
      const theirs = JSON.parse(fs.readFileSync(pyOut, "utf-8"));

      expect(theirs.results.length).toBe(ours.results.length);
      for (let i = 0; i < ours.results.length; i++) {
        for (const key of ["l_pde", "l_init", "l_edge"] as const) {
          const a = ours.results[i][key];
          const b = theirs.results[i][key];
          const rel = Math.abs(a - b) / Math.max(Math.abs(b), 1e-30);
          expect(rel, `${etype} fixture ${i} ${key}: ${a} vs ${b}`).toBeLessThan(1e-6);
        }
      }
    }
  });

  test("archives round-trip through the trainer loader", () => {
    const model = new DeepOnet(
      { nSensor: 64, width: 8, depth: 2, p: 8, nFreq: 4 }, 0.05, "inner");
    model.init(3);
    const d1 = path.join(tmp, "rt1");
    const d2 = path.join(tmp, "rt2");
    saveModel(model, d1);
    saveModel(loadModel(d1), d2);
    for (const f of fs.readdirSync(d1).sort()) {
      expect(fs.readFileSync(path.join(d2, f)).equals(fs.readFileSync(path.join(d1, f))),
             `byte mismatch in ${f}`).toBe(true);
    }
  });
});
