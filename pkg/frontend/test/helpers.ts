import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** mulberry32 clone for test-side data generation. */
function rand(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface ToyItem {
  id: string;
  text: string;
  accuracy: number;
}

/** Encoding-shaped texts whose accuracy is monotone in depth and kernels. */
export function toyItems(n: number, seed: number): ToyItem[] {
  const rng = rand(seed);
  const items: ToyItem[] = [];
  for (let i = 0; i < n; i++) {
    const depth = 1 + Math.floor(rng() * 10);
    const kernels: number[] = [];
    const lines: string[] = [];
    for (let d = 0; d < depth; d++) {
      const k = 2 + Math.floor(rng() * 4);
      kernels.push(k);
      lines.push(
        `Conv(prev, 8x8x${k}x${k})(dilations=1,kernel_shape=${k},pads=1,strides=1)` +
          ` --> Relu(prev) --> Value${d + 1}:1x8x16x16`,
      );
    }
    lines.push("ReduceMean(Value1)(axes=[2,3]) --> Gemm(prev, 10x8, 10) --> Out");
    const accuracy = 5 * depth + 0.5 * kernels.reduce((a, b) => a + b, 0);
    items.push({ id: `toy${String(i).padStart(3, "0")}`, text: lines.join("\n") + "\n", accuracy });
  }
  return items;
}

export function writeToyManifest(items: ToyItem[], dir: string, name: string): string {
  const path = join(dir, name);
  const lines = items.map((item) =>
    JSON.stringify({ id: item.id, text: item.text, accuracy: item.accuracy, space: "toy" }),
  );
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

export function tempDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix));
}
