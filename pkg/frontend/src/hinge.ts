/**
 * Pairwise hinge objective over a batch: every ordered pair with distinct
 * accuracies contributes max(0, margin - (s_better - s_worse)). Returns the
 * mean loss plus a per-item gradient coefficient dLoss/dScore_k, so the
 * backbone backward pass runs once per item rather than once per pair.
 */

export interface BatchHinge {
  meanLoss: number;
  coefficients: Float64Array; // dLoss/dScore per item
  pairCount: number;
}

export function batchHinge(
  scores: Float64Array,
  accuracies: Float64Array,
  margin: number,
): BatchHinge {
  const n = scores.length;
  const coefficients = new Float64Array(n);
  let pairCount = 0;
  let lossSum = 0;
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      if (i === j || accuracies[i] <= accuracies[j]) continue;
      pairCount += 1;
      const gap = margin - (scores[i] - scores[j]);
      if (gap > 0) {
        lossSum += gap;
        coefficients[i] -= 1;
        coefficients[j] += 1;
      }
    }
  }
  if (pairCount > 0) {
    for (let k = 0; k < n; k++) coefficients[k] /= pairCount;
  }
  return {
    meanLoss: pairCount ? lossSum / pairCount : 0,
    coefficients,
    pairCount,
  };
}
