/**
 * Supervised adaptation on the labeled session.
 *
 * The backbone itself stays frozen; what gets fine-tuned is the last
 * linear block of the embedding pipeline: an adapter matrix initialized
 * at identity, trained jointly with a throwaway softmax head on the
 * labeled session's (embedding, label) pairs. Every session is then
 * exported through the adapted map, so the engine sees the adapted,
 * frozen representation.
 */

import { Rng } from "./rng.js";

export interface AdaptConfig {
  epochs: number;
  batchSize: number;
  lr0: number;
  seed: number;
}

export const DEFAULT_ADAPT: AdaptConfig = {
  epochs: 20,
  batchSize: 32,
  lr0: 0.05,
  seed: 0,
};

export interface Adapter {
  apply(feature: Float64Array): Float64Array;
  /** Training accuracy of the throwaway head after adaptation. */
  headAccuracy: number;
}

export function identityAdapter(): Adapter {
  return { apply: (feature) => feature, headAccuracy: NaN };
}

export function trainAdapter(
  features: Float64Array[],
  labels: number[],
  numClasses: number,
  cfg: AdaptConfig = DEFAULT_ADAPT
): Adapter {
  const n = features.length;
  if (n === 0 || labels.length !== n) {
    throw new Error("adaptation needs aligned features and labels");
  }
  const dim = features[0].length;
  const rng = new Rng(cfg.seed >>> 0);

  // Adapter starts as identity; head rows start small so the adapted
  // space is initially the raw embedding space.
  const adapter = new Float64Array(dim * dim);
  for (let d = 0; d < dim; d++) adapter[d * dim + d] = 1.0;
  const head = new Float64Array(numClasses * dim);
  for (let i = 0; i < head.length; i++) head[i] = 0.1 * rng.gaussian();
  const bias = new Float64Array(numClasses);

  const order = Array.from({ length: n }, (_, i) => i);
  const z = new Float64Array(dim);
  const logits = new Float64Array(numClasses);
  const dz = new Float64Array(dim);

  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    const lr = cfg.lr0 * 0.5 * (1 + Math.cos((Math.PI * epoch) / Math.max(1, cfg.epochs)));
    rng.shuffle(order);
    for (let start = 0; start < n; start += cfg.batchSize) {
      const batch = order.slice(start, start + cfg.batchSize);
      for (const idx of batch) {
        const x = features[idx];
        const y = labels[idx];
        // forward
        for (let d = 0; d < dim; d++) {
          let acc = 0;
          const row = d * dim;
          for (let i = 0; i < dim; i++) acc += adapter[row + i] * x[i];
          z[d] = acc;
        }
        let maxLogit = -Infinity;
        for (let c = 0; c < numClasses; c++) {
          let acc = bias[c];
          const row = c * dim;
          for (let d = 0; d < dim; d++) acc += head[row + d] * z[d];
          logits[c] = acc;
          if (acc > maxLogit) maxLogit = acc;
        }
        let denom = 0;
        for (let c = 0; c < numClasses; c++) {
          logits[c] = Math.exp(logits[c] - maxLogit);
          denom += logits[c];
        }
        // backward: g = softmax - onehot, scaled by lr / batch
        const scale = lr / batch.length;
        dz.fill(0);
        for (let c = 0; c < numClasses; c++) {
          const g = (logits[c] / denom - (c === y ? 1 : 0)) * scale;
          bias[c] -= g;
          const row = c * dim;
          for (let d = 0; d < dim; d++) {
            dz[d] += head[row + d] * g;
            head[row + d] -= g * z[d];
          }
        }
        for (let d = 0; d < dim; d++) {
          const g = dz[d];
          if (g === 0) continue;
          const row = d * dim;
          for (let i = 0; i < dim; i++) adapter[row + i] -= g * x[i];
        }
      }
    }
  }

  let correct = 0;
  const apply = (feature: Float64Array): Float64Array => {
    const out = new Float64Array(dim);
    for (let d = 0; d < dim; d++) {
      let acc = 0;
      const row = d * dim;
      for (let i = 0; i < dim; i++) acc += adapter[row + i] * feature[i];
      out[d] = acc;
    }
    return out;
  };
  for (let idx = 0; idx < n; idx++) {
    const adapted = apply(features[idx]);
    let best = 0;
    let bestScore = -Infinity;
    for (let c = 0; c < numClasses; c++) {
      let acc = bias[c];
      const row = c * dim;
      for (let d = 0; d < dim; d++) acc += head[row + d] * adapted[d];
      if (acc > bestScore) {
        bestScore = acc;
        best = c;
      }
    }
    if (best === labels[idx]) correct += 1;
  }
  return { apply, headAccuracy: correct / n };
}
