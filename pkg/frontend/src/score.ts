/**
 * Score a manifest with a trained checkpoint: one {id, score} line per
 * record, order-preserving, directly consumable by the primary toolchain's
 * eval subcommand.
 */
import { readManifest, requireTexts, writePredictions } from "./manifest.js";
import { Model, loadCheckpoint, score } from "./model.js";
import { encodeText } from "./tokenizer.js";

export function scoreManifest(
  model: Model,
  manifestPath: string,
  warn: (msg: string) => void = console.warn,
): Array<{ id: string; score: number }> {
  const records = readManifest(manifestPath);
  const texts = requireTexts(records);
  return records.map((record, i) => {
    const { ids } = encodeText(texts[i], {
      vocabSize: model.config.vocabSize,
      contextLength: model.config.contextLength,
    }, warn);
    return { id: record.id, score: score(model, ids) };
  });
}

export function mainScore(argv: string[]): number {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      console.error(`usage error at ${argv[i]}`);
      return 2;
    }
    flags.set(argv[i].slice(2), argv[i + 1]);
  }
  const model = flags.get("model");
  const manifest = flags.get("manifest");
  const out = flags.get("out");
  if (!model || !manifest || !out) {
    console.error("usage: score --model m.json --manifest x.jsonl --out preds.jsonl");
    return 2;
  }
  try {
    const entries = scoreManifest(loadCheckpoint(model), manifest);
    writePredictions(entries, out);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).name}: ${(err as Error).message}`);
    return 1;
  }
}

const isMain = process.argv[1]?.endsWith("score.js");
if (isMain) {
  process.exit(mainScore(process.argv.slice(2)));
}
