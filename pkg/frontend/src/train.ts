/**
 * Fine-tuning entry point: pairwise hinge over within-batch ordered pairs,
 * seeded shuffling, linear warmup into polynomial decay, decoupled weight
 * decay. Defaults mirror the reference recipe (lr 5e-5, 5 epochs, batch 16,
 * weight decay 0.1, warmup ratio 0.06, end lr 5e-6).
 */
import * as fs from "node:fs";

import { batchHinge } from "./hinge.js";
import { readManifest, requireTexts } from "./manifest.js";
import {
  DEFAULT_BACKBONE,
  Model,
  applyUpdate,
  backward,
  forward,
  initBackbone,
  loadCheckpoint,
  rng,
  saveCheckpoint,
  zeroGrads,
} from "./model.js";
import { ScheduleConfig, lrAt } from "./schedule.js";
import { encodeText } from "./tokenizer.js";

export interface TrainerConfig extends ScheduleConfig {
  epochs: number;
  batchSize: number;
  margin: number;
  seed: number;
  weightDecay: number;
  maxSteps?: number;
}

export const DEFAULT_CONFIG: TrainerConfig = {
  learningRate: 5e-5,
  endLearningRate: 5e-6,
  warmupRatio: 0.06,
  schedule: "polynomial",
  epochs: 5,
  batchSize: 16,
  margin: 1.0,
  seed: 42,
  weightDecay: 0.1,
};

export interface TrainRun {
  backbonePath?: string; // pretrained checkpoint; fresh seeded init otherwise
  trainManifest: string;
  valManifest?: string;
  outputPath: string;
  config: TrainerConfig;
}

export interface TrainResult {
  model: Model;
  stepLosses: number[];
  firstEpochMeanLoss: number;
  lastEpochMeanLoss: number;
  truncatedCount: number;
}

function shuffled(n: number, rand: () => number): number[] {
  const order = Array.from({ length: n }, (_, i) => i);
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [order[i], order[j]] = [order[j], order[i]];
  }
  return order;
}

export function finetune(run: TrainRun, warn: (msg: string) => void = console.warn): TrainResult {
  const cfg = run.config;
  const records = readManifest(run.trainManifest);
  const texts = requireTexts(records);
  const accuracies = Float64Array.from(records.map((r) => r.accuracy));

  const model = run.backbonePath
    ? loadCheckpoint(run.backbonePath)
    : initBackbone(cfg.seed);
  let truncatedCount = 0;
  const encoded = texts.map((text) => {
    const enc = encodeText(text, {
      vocabSize: model.config.vocabSize,
      contextLength: model.config.contextLength,
    }, warn);
    if (enc.truncated) truncatedCount += 1;
    return enc.ids;
  });

  const n = records.length;
  const batches = Math.max(1, Math.ceil(n / cfg.batchSize));
  const plannedSteps = cfg.epochs * batches;
  const totalSteps = Math.min(plannedSteps, cfg.maxSteps ?? plannedSteps);
  const rand = rng(cfg.seed);

  const stepLosses: number[] = [];
  const epochMeans: number[] = [];
  let step = 0;
  for (let epoch = 0; epoch < cfg.epochs && step < totalSteps; epoch++) {
    const order = shuffled(n, rand);
    const epochLosses: number[] = [];
    for (let b = 0; b < batches && step < totalSteps; b++) {
      const batch = order.slice(b * cfg.batchSize, (b + 1) * cfg.batchSize);
      const scores = new Float64Array(batch.length);
      const caches = batch.map((idx, pos) => {
        const out = forward(model, encoded[idx]);
        scores[pos] = out.score;
        return out.cache;
      });
      const batchAcc = Float64Array.from(batch.map((idx) => accuracies[idx]));
      const { meanLoss, coefficients, pairCount } = batchHinge(
        scores,
        batchAcc,
        cfg.margin,
      );
      const lr = lrAt(step, totalSteps, cfg);
      if (pairCount > 0) {
        const grads = zeroGrads(model.config);
        for (let pos = 0; pos < batch.length; pos++) {
          if (coefficients[pos] !== 0) {
            backward(model, caches[pos], coefficients[pos], grads);
          }
        }
        applyUpdate(model, grads, lr, cfg.weightDecay);
        stepLosses.push(meanLoss);
        epochLosses.push(meanLoss);
      }
      step += 1;
    }
    if (epochLosses.length) {
      epochMeans.push(epochLosses.reduce((a, b) => a + b, 0) / epochLosses.length);
    }
  }

  saveCheckpoint(model, cfg.seed, run.outputPath);
  return {
    model,
    stepLosses,
    firstEpochMeanLoss: epochMeans[0] ?? 0,
    lastEpochMeanLoss: epochMeans[epochMeans.length - 1] ?? 0,
    truncatedCount,
  };
}

// ---------------------------------------------------------------------------
// CLI

export function parseTrainArgs(argv: string[]): TrainRun & { logPath?: string } {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`usage error at ${argv[i]}`);
    }
    flags.set(argv[i].slice(2), argv[i + 1]);
  }
  const need = (key: string): string => {
    const value = flags.get(key);
    if (value === undefined) throw new Error(`missing required --${key}`);
    return value;
  };
  const num = (key: string, fallback: number): number =>
    flags.has(key) ? Number(flags.get(key)) : fallback;
  const schedule = (flags.get("schedule") ?? DEFAULT_CONFIG.schedule) as
    | "polynomial"
    | "constant";
  return {
    trainManifest: need("train"),
    valManifest: flags.get("val"),
    outputPath: need("model-out"),
    backbonePath: flags.get("backbone"),
    logPath: flags.get("log"),
    config: {
      learningRate: num("lr", DEFAULT_CONFIG.learningRate),
      endLearningRate: num("end-lr", DEFAULT_CONFIG.endLearningRate),
      warmupRatio: num("warmup", DEFAULT_CONFIG.warmupRatio),
      schedule,
      epochs: num("epochs", DEFAULT_CONFIG.epochs),
      batchSize: num("batch", DEFAULT_CONFIG.batchSize),
      margin: num("margin", DEFAULT_CONFIG.margin),
      seed: num("seed", DEFAULT_CONFIG.seed),
      weightDecay: num("weight-decay", DEFAULT_CONFIG.weightDecay),
      maxSteps: flags.has("max-steps") ? Number(flags.get("max-steps")) : undefined,
    },
  };
}

export function mainTrain(argv: string[]): number {
  let run: TrainRun & { logPath?: string };
  try {
    run = parseTrainArgs(argv);
  } catch (err) {
    console.error(`usage: ${(err as Error).message}`);
    return 2;
  }
  try {
    const result = finetune(run);
    if (run.logPath) {
      fs.writeFileSync(
        run.logPath,
        result.stepLosses.map((l, i) => JSON.stringify({ step: i, loss: l })).join("\n") + "\n",
      );
    }
    console.log(
      JSON.stringify({
        checkpoint: run.outputPath,
        steps: result.stepLosses.length,
        first_epoch_mean_loss: result.firstEpochMeanLoss,
        last_epoch_mean_loss: result.lastEpochMeanLoss,
        truncated_records: result.truncatedCount,
      }),
    );
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).name}: ${(err as Error).message}`);
    return 1;
  }
}

const isMain = process.argv[1]?.endsWith("train.js");
if (isMain) {
  process.exit(mainTrain(process.argv.slice(2)));
}
