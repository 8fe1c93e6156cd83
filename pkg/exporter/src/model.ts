/**
 * A small decoder-only transformer with instrumentation hooks.
 *
 * This is a real forward pass (QKV causal attention, pre-norm residual
 * blocks, GELU MLP, tied unembedding) over randomly initialized weights,
 * sized so it runs in milliseconds. The instrumentation exposes, for the
 * last query position of every layer: the post-block hidden state (for
 * logit-lens projection) and the per-head attention row (for visual
 * attention mass). What it does NOT have is trained knowledge; it exists
 * to exercise the export pipeline against a genuine attention/residual
 * computation.
 */

import { gaussianMatrix, mulberry32, hashString } from "./rng.js";
import { gelu, matVec, rmsNorm, softmaxInPlace, toF32 } from "./tensor.js";

export interface ModelConfig {
  name: string;
  layers: number;
  heads: number;
  dModel: number;
  vocab: number;
  /** number of pseudo-visual tokens injected after BOS */
  visualTokens: number;
  /** false simulates runtimes whose fused kernels cannot emit weights */
  exposeAttention: boolean;
  maxContext: number;
}

interface LayerWeights {
  wq: Float32Array;
  wk: Float32Array;
  wv: Float32Array;
  wo: Float32Array;
  attnNorm: Float32Array;
  mlpNorm: Float32Array;
  w1: Float32Array;
  w2: Float32Array;
}

export interface ForwardCapture {
  /** [L][V] logit-lens logits of every layer's last-position hidden state */
  layerLogits: Float32Array[];
  /** [L][H][contextLen] last-query attention rows, or null when not exposed */
  attnRows: Float64Array[][] | null;
}

export class TinyVlm {
  readonly config: ModelConfig;
  private readonly embedding: Float32Array; // [V, d]
  private readonly finalNorm: Float32Array;
  private readonly layers: LayerWeights[];
  private readonly headDim: number;

  constructor(config: ModelConfig) {
    if (config.dModel % config.heads !== 0) {
      throw new Error("dModel must be divisible by heads");
    }
    this.config = config;
    this.headDim = config.dModel / config.heads;
    const rng = mulberry32(hashString(config.name) ^ 0x5eed);
    const d = config.dModel;
    const scale = 1.0 / Math.sqrt(d);
    this.embedding = gaussianMatrix(rng, config.vocab, d, 0.5);
    this.layers = [];
    for (let l = 0; l < config.layers; l++) {
      this.layers.push({
        wq: gaussianMatrix(rng, d, d, scale),
        wk: gaussianMatrix(rng, d, d, scale),
        wv: gaussianMatrix(rng, d, d, scale),
        wo: gaussianMatrix(rng, d, d, scale),
        attnNorm: new Float32Array(d).fill(1),
        mlpNorm: new Float32Array(d).fill(1),
        w1: gaussianMatrix(rng, 4 * d, d, scale),
        w2: gaussianMatrix(rng, d, 4 * d, scale),
      });
    }
    this.finalNorm = new Float32Array(d).fill(1);
  }

  /** Final normalization + tied unembedding applied to one hidden state. */
  private logitLens(hidden: Float64Array): Float32Array {
    const { vocab, dModel } = this.config;
    const normed = rmsNorm(hidden, this.finalNorm);
    const logits = new Float64Array(vocab);
    for (let v = 0; v < vocab; v++) {
      let acc = 0;
      const base = v * dModel;
      for (let i = 0; i < dModel; i++) acc += this.embedding[base + i] * normed[i];
      logits[v] = acc;
    }
    return toF32(logits);
  }

  forward(context: number[]): ForwardCapture {
    const { layers: L, heads: H, dModel: d, vocab } = this.config;
    const T = context.length;
    if (T === 0) throw new Error("context must be non-empty");
    if (T > this.config.maxContext) {
      throw new Error(`context length ${T} exceeds maxContext ${this.config.maxContext}`);
    }
    const hd = this.headDim;
    // residual stream per position
    const x: Float64Array[] = [];
    for (let i = 0; i < T; i++) {
      const token = context[i];
      if (token < 0 || token >= vocab) throw new Error(`token ${token} out of range`);
      const row = new Float64Array(d);
      for (let j = 0; j < d; j++) row[j] = this.embedding[token * d + j];
      x.push(row);
    }

    const layerLogits: Float32Array[] = [];
    const attnRows: Float64Array[][] | null = this.config.exposeAttention ? [] : null;

    for (let l = 0; l < L; l++) {
      const w = this.layers[l];
      const q: Float64Array[] = [];
      const k: Float64Array[] = [];
      const v: Float64Array[] = [];
      for (let i = 0; i < T; i++) {
        const normed = rmsNorm(x[i], w.attnNorm);
        q.push(matVec(w.wq, d, d, normed));
        k.push(matVec(w.wk, d, d, normed));
        v.push(matVec(w.wv, d, d, normed));
      }
      const lastRows: Float64Array[] = [];
      for (let i = 0; i < T; i++) {
        const merged = new Float64Array(d);
        for (let h = 0; h < H; h++) {
          const off = h * hd;
          const scores = new Float64Array(i + 1);
          for (let j = 0; j <= i; j++) {
            let dot = 0;
            for (let c = 0; c < hd; c++) dot += q[i][off + c] * k[j][off + c];
            scores[j] = dot / Math.sqrt(hd);
          }
          softmaxInPlace(scores, i + 1);
          if (i === T - 1 && attnRows !== null) {
            const row = new Float64Array(T);
            row.set(scores.subarray(0, i + 1));
            lastRows.push(row);
          }
          for (let j = 0; j <= i; j++) {
            const weight = scores[j];
            for (let c = 0; c < hd; c++) merged[off + c] += weight * v[j][off + c];
          }
        }
        const attnOut = matVec(w.wo, d, d, merged);
        for (let c = 0; c < d; c++) x[i][c] += attnOut[c];
      }
      if (attnRows !== null) attnRows.push(lastRows);
      for (let i = 0; i < T; i++) {
        const normed = rmsNorm(x[i], w.mlpNorm);
        const inner = matVec(w.w1, 4 * d, d, normed);
        for (let c = 0; c < inner.length; c++) inner[c] = gelu(inner[c]);
        const proj = matVec(w.w2, d, 4 * d, inner);
        for (let c = 0; c < d; c++) x[i][c] += proj[c];
      }
      layerLogits.push(this.logitLens(x[T - 1]));
    }
    return { layerLogits, attnRows };
  }
}
