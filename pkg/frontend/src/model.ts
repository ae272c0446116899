/**
 * Small attention-based text scorer.
 *
 * embedding + positional -> one self-attention block with residual ->
 * mean pooling -> linear head producing a scalar score. Forward and
 * backward are written out by hand in float64, so training is bitwise
 * deterministic for a given seed; the backward pass is validated against
 * finite differences in the test suite.
 */
import * as fs from "node:fs";

export interface BackboneConfig {
  vocabSize: number;
  contextLength: number;
  dim: number;
}

export const DEFAULT_BACKBONE: BackboneConfig = {
  vocabSize: 512,
  contextLength: 128,
  dim: 16,
};

export interface Params {
  emb: Float64Array; // vocabSize x dim
  pos: Float64Array; // contextLength x dim
  wq: Float64Array; // dim x dim
  wk: Float64Array; // dim x dim
  wv: Float64Array; // dim x dim
  head: Float64Array; // dim
  bias: Float64Array; // 1
}

export interface Model {
  config: BackboneConfig;
  params: Params;
}

const PARAM_KEYS = ["emb", "pos", "wq", "wk", "wv", "head", "bias"] as const;

/** mulberry32: tiny deterministic PRNG for initialization. */
export function rng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussianInit(n: number, scale: number, rand: () => number): Float64Array {
  const out = new Float64Array(n);
  for (let i = 0; i < n; i += 2) {
    // Box-Muller
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    const r = Math.sqrt(-2 * Math.log(u));
    out[i] = r * Math.cos(2 * Math.PI * v) * scale;
    if (i + 1 < n) out[i + 1] = r * Math.sin(2 * Math.PI * v) * scale;
  }
  return out;
}

export function initBackbone(seed: number, config: BackboneConfig = DEFAULT_BACKBONE): Model {
  const rand = rng(seed);
  const d = config.dim;
  const scale = 1 / Math.sqrt(d);
  return {
    config,
    params: {
      emb: gaussianInit(config.vocabSize * d, scale, rand),
      pos: gaussianInit(config.contextLength * d, scale, rand),
      wq: gaussianInit(d * d, scale, rand),
      wk: gaussianInit(d * d, scale, rand),
      wv: gaussianInit(d * d, scale, rand),
      head: gaussianInit(d, scale, rand),
      bias: new Float64Array(1),
    },
  };
}

export function zeroGrads(config: BackboneConfig): Params {
  const d = config.dim;
  return {
    emb: new Float64Array(config.vocabSize * d),
    pos: new Float64Array(config.contextLength * d),
    wq: new Float64Array(d * d),
    wk: new Float64Array(d * d),
    wv: new Float64Array(d * d),
    head: new Float64Array(d),
    bias: new Float64Array(1),
  };
}

interface Cache {
  ids: Int32Array;
  x0: Float64Array; // n x d
  q: Float64Array;
  k: Float64Array;
  v: Float64Array;
  attn: Float64Array; // n x n, softmaxed
  pooled: Float64Array; // d
}

function matmulRows(x: Float64Array, w: Float64Array, n: number, d: number): Float64Array {
  // (n x d) . (d x d)
  const out = new Float64Array(n * d);
  for (let i = 0; i < n; i++) {
    for (let kk = 0; kk < d; kk++) {
      const xv = x[i * d + kk];
      if (xv === 0) continue;
      const wrow = kk * d;
      const orow = i * d;
      for (let j = 0; j < d; j++) out[orow + j] += xv * w[wrow + j];
    }
  }
  return out;
}

export function forward(model: Model, ids: Int32Array): { score: number; cache: Cache } {
  const { dim: d } = model.config;
  const p = model.params;
  const n = Math.max(ids.length, 1);
  const x0 = new Float64Array(n * d);
  for (let i = 0; i < n; i++) {
    const tok = i < ids.length ? ids[i] : 0;
    for (let j = 0; j < d; j++) {
      x0[i * d + j] = p.emb[tok * d + j] + p.pos[i * d + j];
    }
  }
  const q = matmulRows(x0, p.wq, n, d);
  const k = matmulRows(x0, p.wk, n, d);
  const v = matmulRows(x0, p.wv, n, d);
  const invSqrtD = 1 / Math.sqrt(d);
  const attn = new Float64Array(n * n);
  for (let i = 0; i < n; i++) {
    let maxS = -Infinity;
    for (let j = 0; j < n; j++) {
      let s = 0;
      for (let kk = 0; kk < d; kk++) s += q[i * d + kk] * k[j * d + kk];
      s *= invSqrtD;
      attn[i * n + j] = s;
      if (s > maxS) maxS = s;
    }
    let total = 0;
    for (let j = 0; j < n; j++) {
      const e = Math.exp(attn[i * n + j] - maxS);
      attn[i * n + j] = e;
      total += e;
    }
    for (let j = 0; j < n; j++) attn[i * n + j] /= total;
  }
  const pooled = new Float64Array(d);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < d; j++) {
      let h = 0;
      for (let t = 0; t < n; t++) h += attn[i * n + t] * v[t * d + j];
      pooled[j] += (x0[i * d + j] + h) / n;
    }
  }
  let score = p.bias[0];
  for (let j = 0; j < d; j++) score += pooled[j] * p.head[j];
  return { score, cache: { ids, x0, q, k, v, attn, pooled } };
}

export function score(model: Model, ids: Int32Array): number {
  return forward(model, ids).score;
}

/** Accumulate d(coeff * score)/d(params) into grads. */
export function backward(model: Model, cache: Cache, coeff: number, grads: Params): void {
  const { dim: d } = model.config;
  const p = model.params;
  const { ids, x0, q, k, v, attn } = cache;
  const n = Math.max(ids.length, 1);

  grads.bias[0] += coeff;
  for (let j = 0; j < d; j++) grads.head[j] += coeff * cache.pooled[j];

  // dX1 = coeff * head / n for every position
  const dRow = new Float64Array(d);
  for (let j = 0; j < d; j++) dRow[j] = (coeff * p.head[j]) / n;

  const dX0 = new Float64Array(n * d);
  const dV = new Float64Array(n * d);
  const dQ = new Float64Array(n * d);
  const dK = new Float64Array(n * d);
  const invSqrtD = 1 / Math.sqrt(d);

  for (let i = 0; i < n; i++) {
    // residual path
    for (let j = 0; j < d; j++) dX0[i * d + j] += dRow[j];
    // dA[i, t] = dH[i] . v[t], with dH[i] = dRow
    const dA = new Float64Array(n);
    for (let t = 0; t < n; t++) {
      let s = 0;
      for (let j = 0; j < d; j++) s += dRow[j] * v[t * d + j];
      dA[t] = s;
      for (let j = 0; j < d; j++) dV[t * d + j] += attn[i * n + t] * dRow[j];
    }
    // softmax backward over row i
    let inner = 0;
    for (let t = 0; t < n; t++) inner += dA[t] * attn[i * n + t];
    for (let t = 0; t < n; t++) {
      const dS = attn[i * n + t] * (dA[t] - inner) * invSqrtD;
      for (let j = 0; j < d; j++) {
        dQ[i * d + j] += dS * k[t * d + j];
        dK[t * d + j] += dS * q[i * d + j];
      }
    }
  }

  // projections: dW = X0^T . dY, dX0 += dY . W^T
  const addProjection = (dY: Float64Array, w: Float64Array, gW: Float64Array) => {
    for (let i = 0; i < n; i++) {
      for (let kk = 0; kk < d; kk++) {
        const xv = x0[i * d + kk];
        const dyRow = i * d;
        const wRow = kk * d;
        let acc = 0;
        for (let j = 0; j < d; j++) {
          gW[wRow + j] += xv * dY[dyRow + j];
          acc += dY[dyRow + j] * w[wRow + j];
        }
        dX0[dyRow + kk] += acc;
      }
    }
  };
  addProjection(dQ, p.wq, grads.wq);
  addProjection(dK, p.wk, grads.wk);
  addProjection(dV, p.wv, grads.wv);

  for (let i = 0; i < n; i++) {
    const tok = i < ids.length ? ids[i] : 0;
    for (let j = 0; j < d; j++) {
      grads.emb[tok * d + j] += dX0[i * d + j];
      grads.pos[i * d + j] += dX0[i * d + j];
    }
  }
}

export function applyUpdate(
  model: Model,
  grads: Params,
  lr: number,
  weightDecay: number,
): void {
  for (const key of PARAM_KEYS) {
    const param = model.params[key];
    const grad = grads[key];
    const decay = key === "bias" ? 0 : weightDecay;
    for (let i = 0; i < param.length; i++) {
      param[i] -= lr * (grad[i] + decay * param[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// checkpoints

export interface Checkpoint {
  version: string;
  config: BackboneConfig;
  seed: number;
  params: Record<string, number[]>;
}

export function saveCheckpoint(model: Model, seed: number, path: string): void {
  const payload: Checkpoint = {
    version: "attention-scorer-v1",
    config: model.config,
    seed,
    params: Object.fromEntries(
      PARAM_KEYS.map((key) => [key, Array.from(model.params[key])]),
    ),
  };
  fs.writeFileSync(path, JSON.stringify(payload));
}

export function loadCheckpoint(path: string): Model {
  const payload = JSON.parse(fs.readFileSync(path, "utf-8")) as Checkpoint;
  if (payload.version !== "attention-scorer-v1") {
    throw new Error(`unsupported checkpoint version ${payload.version}`);
  }
  const params = Object.fromEntries(
    PARAM_KEYS.map((key) => [key, Float64Array.from(payload.params[key])]),
  ) as unknown as Params;
  return { config: payload.config, params };
}
