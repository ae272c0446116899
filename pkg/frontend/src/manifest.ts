/**
 * JSONL manifest and prediction IO, matching the primary toolchain's
 * schemas exactly: records carry {id, text|path, accuracy, space, split},
 * predictions are {id, score} lines in input order.
 */
import * as fs from "node:fs";

export interface ManifestRecord {
  id: string;
  text?: string;
  path?: string;
  accuracy: number;
  space?: string;
  split?: string;
}

export class MissingText extends Error {
  constructor(id: string) {
    super(`record ${JSON.stringify(id)} has no inline encoding text`);
    this.name = "MissingText";
  }
}

export function readManifest(path: string): ManifestRecord[] {
  const records: ManifestRecord[] = [];
  const lines = fs.readFileSync(path, "utf-8").split("\n");
  lines.forEach((line, index) => {
    if (!line.trim()) return;
    let obj: unknown;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`line ${index + 1}: invalid JSON (${(err as Error).message})`);
    }
    const rec = obj as Record<string, unknown>;
    if (typeof rec.id !== "string" && typeof rec.id !== "number") {
      throw new Error(`line ${index + 1}: missing 'id'`);
    }
    if (typeof rec.accuracy !== "number") {
      throw new Error(`line ${index + 1}: missing numeric 'accuracy'`);
    }
    records.push({
      id: String(rec.id),
      text: typeof rec.text === "string" ? rec.text : undefined,
      path: typeof rec.path === "string" ? rec.path : undefined,
      accuracy: rec.accuracy,
      space: typeof rec.space === "string" ? rec.space : undefined,
      split: typeof rec.split === "string" ? rec.split : undefined,
    });
  });
  return records;
}

/** Inline text for every record; MissingText on path-only entries. */
export function requireTexts(records: ManifestRecord[]): string[] {
  return records.map((rec) => {
    if (rec.text === undefined) throw new MissingText(rec.id);
    return rec.text;
  });
}

export function writePredictions(
  entries: Array<{ id: string; score: number }>,
  path: string,
): void {
  const lines = entries.map((e) => JSON.stringify({ id: e.id, score: e.score }));
  fs.writeFileSync(path, lines.length ? lines.join("\n") + "\n" : "");
}
