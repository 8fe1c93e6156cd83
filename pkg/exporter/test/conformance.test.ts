/**
 * Cross-implementation conformance: everything this exporter writes must
 * be consumable by the decoding engine through its public surfaces (the
 * trace file format and the `daid` CLI). These tests spawn the engine:
 *
 *   1. `trace validate` accepts the exported file;
 *   2. the engine's recomputed visual attention scores match the
 *      exporter-side ones within 1e-5;
 *   3. a zero-intensity replay reproduces the source model's stored
 *      greedy tokens.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

import { beforeAll, describe, expect, it } from "vitest";

import { runExport, ExportResult } from "../src/export";

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO_ROOT = resolve(HERE, "..", "..");
const IMAGE = join(HERE, "fixtures", "sample_image.bin");
const PYTHON = process.env.DAID_PYTHON ?? "python3";

function engine(args: string[]) {
  return spawnSync(PYTHON, ["-m", "daid", ...args], {
    encoding: "utf-8",
    env: { ...process.env, PYTHONPATH: join(REPO_ROOT, "src") },
  });
}

let tracePath: string;
let result: ExportResult;

beforeAll(() => {
  tracePath = join(mkdtempSync(join(tmpdir(), "daid-conformance-")), "export.daid");
  result = runExport({
    model: "tiny-vlm-deep",
    prompt: "describe the scene in front of you",
    imagePath: IMAGE,
    outPath: tracePath,
    maxNewTokens: 8,
  });
});

describe("engine conformance", () => {
  it("passes `trace validate`", () => {
    const proc = engine(["trace", "validate", tracePath]);
    expect(proc.status, proc.stderr).toBe(0);
    expect(proc.stdout).toMatch(/^ok: 8 steps/);
  });

  it("engine-recomputed VAS matches exporter-side VAS within 1e-5", () => {
    const proc = engine(["trace", "inspect", tracePath, "--vas"]);
    expect(proc.status, proc.stderr).toBe(0);
    const info = JSON.parse(proc.stdout);
    expect(info.vas).toHaveLength(result.vas.length);
    let worst = 0;
    for (let step = 0; step < result.vas.length; step++) {
      for (let layer = 0; layer < result.vas[step].length; layer++) {
        worst = Math.max(worst, Math.abs(info.vas[step][layer] - result.vas[step][layer]));
      }
    }
    expect(worst).toBeLessThan(1e-5);
  });

  it("zero-intensity replay reproduces the stored greedy tokens", () => {
    const proc = engine([
      "decode", "--trace", tracePath,
      "--alpha", "0", "--beta", "0", "--gamma", "0",
      "--max-new-tokens", "8",
    ]);
    expect(proc.status, proc.stderr).toBe(0);
    const payload = JSON.parse(proc.stdout);
    expect(payload.tokens).toEqual(result.tokens);
  });

  it("anchored decoding consumes the trace without errors", () => {
    const proc = engine(["decode", "--trace", tracePath, "--strategy", "daid"]);
    expect(proc.status, proc.stderr).toBe(0);
    const payload = JSON.parse(proc.stdout);
    expect(payload.tokens).toHaveLength(8);
    for (const step of payload.steps) {
      if (step.shadow !== null) {
        expect(step.shadow).toBeLessThan(step.spotlight);
      }
    }
  });
});
