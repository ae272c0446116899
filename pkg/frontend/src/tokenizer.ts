/**
 * Hash tokenizer over encoding text. Tokens are alphanumeric runs plus the
 * structural symbols "-->", "(" and ")", hashed into a fixed id space.
 * Encodings longer than the context window are truncated tail-first with a
 * logged warning (the head of the encoding carries the stem of the net).
 */

const TOKEN_RE = /[A-Za-z0-9]+|-->|\(|\)/g;

export function tokenize(text: string): string[] {
  return text.match(TOKEN_RE) ?? [];
}

/** FNV-1a, stable across platforms. */
function fnv1a(s: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

export interface TokenizerConfig {
  vocabSize: number;
  contextLength: number;
}

export interface EncodedText {
  ids: Int32Array;
  truncated: boolean;
}

export function encodeText(
  text: string,
  cfg: TokenizerConfig,
  warn: (msg: string) => void = (msg) => console.warn(msg),
): EncodedText {
  const tokens = tokenize(text);
  const truncated = tokens.length > cfg.contextLength;
  const kept = truncated ? tokens.slice(0, cfg.contextLength) : tokens;
  if (truncated) {
    warn(
      `encoding of ${tokens.length} tokens truncated tail-first to ${cfg.contextLength}`,
    );
  }
  const ids = new Int32Array(kept.length);
  for (let i = 0; i < kept.length; i++) {
    ids[i] = fnv1a(kept[i]) % cfg.vocabSize;
  }
  return { ids, truncated };
}
