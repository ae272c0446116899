import { writeFileSync } from "node:fs";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { batchHinge } from "../src/hinge.js";
import { MissingText } from "../src/manifest.js";
import { loadCheckpoint, score } from "../src/model.js";
import { lrAt } from "../src/schedule.js";
import { scoreManifest } from "../src/score.js";
import { DEFAULT_CONFIG, finetune } from "../src/train.js";
import { encodeText } from "../src/tokenizer.js";
import { tempDir, toyItems, writeToyManifest } from "./helpers.js";

const quiet = () => {};

describe("defaults", () => {
  it("mirror the reference recipe", () => {
    expect(DEFAULT_CONFIG.learningRate).toBe(5e-5);
    expect(DEFAULT_CONFIG.epochs).toBe(5);
    expect(DEFAULT_CONFIG.batchSize).toBe(16);
    expect(DEFAULT_CONFIG.schedule).toBe("polynomial");
    expect(DEFAULT_CONFIG.endLearningRate).toBe(5e-6);
    expect(DEFAULT_CONFIG.weightDecay).toBe(0.1);
    expect(DEFAULT_CONFIG.warmupRatio).toBe(0.06);
  });

  it("schedule warms up then decays toward the end LR", () => {
    const cfg = {
      learningRate: 1e-3,
      endLearningRate: 1e-4,
      warmupRatio: 0.1,
      schedule: "polynomial" as const,
    };
    const total = 100;
    expect(lrAt(0, total, cfg)).toBeCloseTo(1e-4, 12);
    expect(lrAt(9, total, cfg)).toBeCloseTo(1e-3, 12);
    expect(lrAt(total - 1, total, cfg)).toBeCloseTo(1e-4, 3);
    const mid = lrAt(50, total, cfg);
    expect(mid).toBeLessThan(1e-3);
    expect(mid).toBeGreaterThan(1e-4);
  });
});

describe("batch hinge", () => {
  it("counts ordered pairs with distinct accuracies", () => {
    const { pairCount, meanLoss } = batchHinge(
      Float64Array.from([0, 0, 0]),
      Float64Array.from([3, 2, 1]),
      1.0,
    );
    expect(pairCount).toBe(3);
    expect(meanLoss).toBe(1.0); // all gaps zero, loss = margin
  });

  it("ties contribute no pairs", () => {
    const { pairCount } = batchHinge(
      Float64Array.from([1, 2]),
      Float64Array.from([5, 5]),
      1.0,
    );
    expect(pairCount).toBe(0);
  });
});

describe("finetune", () => {
  it("50 steps reduce mean hinge loss on a 100-sample toy manifest", () => {
    const dir = tempDir("train-");
    const items = toyItems(100, 1);
    const manifest = writeToyManifest(items, dir, "train.jsonl");
    const result = finetune(
      {
        trainManifest: manifest,
        outputPath: join(dir, "model.json"),
        config: { ...DEFAULT_CONFIG, maxSteps: 50 },
      },
      quiet,
    );
    expect(result.stepLosses.length).toBeGreaterThan(0);
    expect(result.lastEpochMeanLoss).toBeLessThan(result.firstEpochMeanLoss);
  });

  it("seeded runs produce identical loss curves", () => {
    const dir = tempDir("train-");
    const manifest = writeToyManifest(toyItems(40, 2), dir, "train.jsonl");
    const runConfig = { ...DEFAULT_CONFIG, epochs: 2 };
    const a = finetune(
      { trainManifest: manifest, outputPath: join(dir, "a.json"), config: runConfig },
      quiet,
    );
    const b = finetune(
      { trainManifest: manifest, outputPath: join(dir, "b.json"), config: runConfig },
      quiet,
    );
    expect(a.stepLosses).toEqual(b.stepLosses);
  });

  it("overfits a single comparable pair", () => {
    const dir = tempDir("train-");
    const items = [
      { id: "a", text: "Conv --> Relu --> Relu --> Out\n", accuracy: 90 },
      { id: "b", text: "Conv --> Out\n", accuracy: 10 },
    ];
    const manifest = writeToyManifest(items, dir, "pair.jsonl");
    const result = finetune(
      {
        trainManifest: manifest,
        outputPath: join(dir, "model.json"),
        config: { ...DEFAULT_CONFIG, learningRate: 5e-3, endLearningRate: 5e-4, epochs: 200 },
      },
      quiet,
    );
    const model = result.model;
    const tok = { vocabSize: model.config.vocabSize, contextLength: model.config.contextLength };
    const sa = score(model, encodeText(items[0].text, tok, quiet).ids);
    const sb = score(model, encodeText(items[1].text, tok, quiet).ids);
    expect(sa).toBeGreaterThan(sb);
  });

  it("raises MissingText on path-only records", () => {
    const dir = tempDir("train-");
    const path = join(dir, "paths.jsonl");
    writeFileSync(
      path,
      [
        JSON.stringify({ id: "a", path: "/nope.onnx", accuracy: 1 }),
        JSON.stringify({ id: "b", path: "/nope2.onnx", accuracy: 2 }),
      ].join("\n") + "\n",
    );
    expect(() =>
      finetune(
        { trainManifest: path, outputPath: join(dir, "m.json"), config: DEFAULT_CONFIG },
        quiet,
      ),
    ).toThrow(MissingText);
  });

  it("counts truncated records and keeps training", () => {
    const dir = tempDir("train-");
    const long = Array.from({ length: 4000 }, (_, i) => `Relu${i}`).join(" ");
    const items = [
      { id: "a", text: long + " --> Out\n", accuracy: 80 },
      { id: "b", text: "Conv --> Out\n", accuracy: 20 },
    ];
    const manifest = writeToyManifest(items, dir, "long.jsonl");
    const result = finetune(
      {
        trainManifest: manifest,
        outputPath: join(dir, "m.json"),
        config: { ...DEFAULT_CONFIG, epochs: 1 },
      },
      quiet,
    );
    expect(result.truncatedCount).toBe(1);
  });
});

describe("scoring", () => {
  it("is order-preserving and batch-size invariant", () => {
    const dir = tempDir("score-");
    const items = toyItems(20, 3);
    const manifest = writeToyManifest(items, dir, "val.jsonl");
    const ckpt = join(dir, "model.json");
    finetune(
      { trainManifest: manifest, outputPath: ckpt, config: { ...DEFAULT_CONFIG, epochs: 1 } },
      quiet,
    );
    const model = loadCheckpoint(ckpt);
    const batched = scoreManifest(model, manifest, quiet);
    expect(batched.map((e) => e.id)).toEqual(items.map((i) => i.id));
    // one-at-a-time scoring agrees within 1e-5 (exactly, in fact)
    const tok = { vocabSize: model.config.vocabSize, contextLength: model.config.contextLength };
    items.forEach((item, i) => {
      const single = score(model, encodeText(item.text, tok, quiet).ids);
      expect(Math.abs(single - batched[i].score)).toBeLessThanOrEqual(1e-5);
    });
  });

  it("scores an empty manifest to an empty file", () => {
    const dir = tempDir("score-");
    const manifest = join(dir, "empty.jsonl");
    writeFileSync(manifest, "");
    const ckpt = join(dir, "model.json");
    finetune(
      {
        trainManifest: writeToyManifest(toyItems(10, 4), dir, "t.jsonl"),
        outputPath: ckpt,
        config: { ...DEFAULT_CONFIG, epochs: 1 },
      },
      quiet,
    );
    const entries = scoreManifest(loadCheckpoint(ckpt), manifest, quiet);
    expect(entries).toEqual([]);
  });
});
