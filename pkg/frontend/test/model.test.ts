import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import {
  DEFAULT_BACKBONE,
  backward,
  forward,
  initBackbone,
  loadCheckpoint,
  saveCheckpoint,
  score,
  zeroGrads,
} from "../src/model.js";
import { encodeText, tokenize } from "../src/tokenizer.js";

const TINY = { vocabSize: 32, contextLength: 12, dim: 6 };

describe("tokenizer", () => {
  it("splits alphanumeric runs and structural symbols", () => {
    expect(tokenize("Conv(1x3x32x32, 128)(pads=1) --> Out")).toEqual([
      "Conv", "(", "1x3x32x32", "128", ")", "(", "pads", "1", ")", "-->", "Out",
    ]);
  });

  it("truncates tail-first with a warning", () => {
    const warnings: string[] = [];
    const text = Array.from({ length: 40 }, (_, i) => `tok${i}`).join(" ");
    const { ids, truncated } = encodeText(
      text,
      { vocabSize: 64, contextLength: 10 },
      (m) => warnings.push(m),
    );
    expect(truncated).toBe(true);
    expect(ids.length).toBe(10);
    expect(warnings).toHaveLength(1);
    // the head survives: first token id unchanged vs untruncated encoding
    const full = encodeText(text, { vocabSize: 64, contextLength: 100 }, () => {});
    expect(ids[0]).toBe(full.ids[0]);
  });
});

describe("backbone", () => {
  it("same seed gives identical parameters and scores", () => {
    const a = initBackbone(5, TINY);
    const b = initBackbone(5, TINY);
    expect(Array.from(a.params.emb)).toEqual(Array.from(b.params.emb));
    const ids = Int32Array.from([1, 2, 3, 4]);
    expect(score(a, ids)).toBe(score(b, ids));
  });

  it("backward matches finite differences", () => {
    const model = initBackbone(11, TINY);
    const ids = Int32Array.from([3, 9, 1, 3, 7]);
    const grads = zeroGrads(TINY);
    const { cache } = forward(model, ids);
    backward(model, cache, 1.0, grads);

    const eps = 1e-6;
    const keys = ["emb", "pos", "wq", "wk", "wv", "head", "bias"] as const;
    for (const key of keys) {
      const param = model.params[key];
      const grad = grads[key];
      // probe a few entries per tensor
      const probes = [0, Math.floor(param.length / 2), param.length - 1];
      for (const idx of probes) {
        const original = param[idx];
        param[idx] = original + eps;
        const plus = score(model, ids);
        param[idx] = original - eps;
        const minus = score(model, ids);
        param[idx] = original;
        const numeric = (plus - minus) / (2 * eps);
        expect(grad[idx]).toBeCloseTo(numeric, 5);
      }
    }
  });

  it("checkpoints round-trip scores exactly", () => {
    const dir = mkdtempSync(join(tmpdir(), "ckpt-"));
    const model = initBackbone(3, DEFAULT_BACKBONE);
    const path = join(dir, "model.json");
    saveCheckpoint(model, 3, path);
    const back = loadCheckpoint(path);
    const ids = Int32Array.from([10, 20, 30]);
    expect(score(back, ids)).toBe(score(model, ids));
  });

  it("rejects unknown checkpoint versions", () => {
    const dir = mkdtempSync(join(tmpdir(), "ckpt-"));
    const path = join(dir, "bad.json");
    writeFileSync(path, JSON.stringify({ version: "nope" }));
    expect(() => loadCheckpoint(path)).toThrow(/unsupported checkpoint/);
  });
});
