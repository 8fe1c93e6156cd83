/**
 * Export pipeline: run an instrumented generation and dump one trace
 * record per generated token.
 *
 * Per-layer logits come from the logit lens (final normalization + tied
 * unembedding applied to each layer's last-position hidden state), which
 * the trace header records as its logit mode. Attention is summed over
 * the visual span inside the hook; raw rows are never serialized.
 *
 * The exporter never applies the anchored calibration itself: its job is
 * to capture model internals, and decoding policy belongs to the engine
 * that replays the trace.
 */

import { readFileSync } from "node:fs";

import { HookUnsupported } from "./errors.js";
import { TinyVlm } from "./model.js";
import { loadModel } from "./registry.js";
import { argmaxF32 } from "./tensor.js";
import {
  LOGIT_MODE_LOGIT_LENS,
  TraceHeader,
  TraceStep,
  writeTrace,
} from "./trace.js";

export interface ExportJob {
  model: string;
  prompt: string;
  imagePath: string;
  outPath: string;
  maxNewTokens: number;
}

export interface ExportResult {
  header: TraceHeader;
  /** tokens the model chose greedily, one per record */
  tokens: number[];
  /** exporter-side head-averaged visual attention score per step, [steps][L] */
  vas: number[][];
}

const BOS = 0;

function hashBytes(bytes: Uint8Array, salt: number): number {
  let h = (0x811c9dc5 ^ salt) >>> 0;
  for (let i = 0; i < bytes.length; i++) {
    h ^= bytes[i];
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

/** Deterministic pseudo visual tokens derived from the image bytes. */
export function imageTokens(imageBytes: Uint8Array, count: number, vocab: number): number[] {
  const tokens: number[] = [];
  for (let k = 0; k < count; k++) {
    tokens.push(1 + (hashBytes(imageBytes, k) % (vocab - 1)));
  }
  return tokens;
}

export function textTokens(prompt: string, vocab: number): number[] {
  const bytes = Buffer.from(prompt, "utf-8");
  const tokens: number[] = [];
  for (const byte of bytes) tokens.push(1 + (byte % (vocab - 1)));
  return tokens;
}

/** Builds (context, visualSpan) with the span fixed before generation. */
export function buildContext(model: TinyVlm, prompt: string, imageBytes: Uint8Array) {
  const { vocab, visualTokens } = model.config;
  const image = imageTokens(imageBytes, visualTokens, vocab);
  const context = [BOS, ...image, ...textTokens(prompt, vocab)];
  const visualSpan = image.map((_, k) => 1 + k);
  return { context, visualSpan };
}

function massOverSpan(row: Float64Array, span: number[]): number {
  let acc = 0;
  for (const k of span) acc += row[k];
  return Math.fround(acc);
}

/** Head-averaged score per layer, computed from the f32 mass that will be
 *  serialized, so engine-side recomputation can be diffed against it. */
export function vasFromMass(visualMass: Float32Array[]): number[] {
  return visualMass.map((heads) => {
    let acc = 0;
    for (let h = 0; h < heads.length; h++) acc += heads[h];
    return acc / heads.length;
  });
}

export function runExport(job: ExportJob): ExportResult {
  const model = loadModel(job.model);
  if (!model.config.exposeAttention) {
    throw new HookUnsupported(
      `model '${job.model}' does not expose attention weights; cannot compute visual attention mass`
    );
  }
  if (job.maxNewTokens < 1) throw new Error("maxNewTokens must be >= 1");
  const imageBytes = readFileSync(job.imagePath);
  const { context, visualSpan } = buildContext(model, job.prompt, imageBytes);
  const promptLen = context.length;

  const steps: TraceStep[] = [];
  const tokens: number[] = [];
  const vas: number[][] = [];
  for (let t = 0; t < job.maxNewTokens; t++) {
    const capture = model.forward(context);
    if (capture.attnRows === null) {
      throw new HookUnsupported("attention weights unavailable mid-generation");
    }
    const visualMass = capture.attnRows.map(
      (headRows) => Float32Array.from(headRows.map((row) => massOverSpan(row, visualSpan)))
    );
    const finalLogits = capture.layerLogits[capture.layerLogits.length - 1];
    const chosen = argmaxF32(finalLogits);
    steps.push({ layerLogits: capture.layerLogits, visualMass, chosenToken: chosen });
    vas.push(vasFromMass(visualMass));
    tokens.push(chosen);
    context.push(chosen);
  }

  const header: TraceHeader = {
    layers: model.config.layers,
    heads: model.config.heads,
    vocab: model.config.vocab,
    logitMode: LOGIT_MODE_LOGIT_LENS,
    promptLen,
    visualSpan,
    stepCount: steps.length,
  };
  writeTrace(job.outPath, header, steps);
  return { header, tokens, vas };
}
