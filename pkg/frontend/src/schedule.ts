/** Linear warmup into polynomial (power 1) decay toward the end LR. */

export interface ScheduleConfig {
  learningRate: number;
  endLearningRate: number;
  warmupRatio: number;
  schedule: "polynomial" | "constant";
}

export function lrAt(step: number, totalSteps: number, cfg: ScheduleConfig): number {
  const warmup = Math.floor(cfg.warmupRatio * totalSteps);
  if (warmup > 0 && step < warmup) {
    return (cfg.learningRate * (step + 1)) / warmup;
  }
  if (cfg.schedule === "constant") return cfg.learningRate;
  const span = Math.max(1, totalSteps - warmup);
  const progress = Math.min(1, (step - warmup) / span);
  return cfg.endLearningRate + (cfg.learningRate - cfg.endLearningRate) * (1 - progress);
}
