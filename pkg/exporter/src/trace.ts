/**
 * Binary trace writer. The byte layout is owned by the decoding engine and
 * documented field-by-field in docs/trace-format.md at the repository root;
 * this file must stay in lockstep with it.
 *
 * Everything is little-endian; floats are IEEE 754 binary32.
 */

import { writeFileSync } from "node:fs";

export const MAGIC = "DAID";
export const VERSION = 1;

export const LOGIT_MODE_LOGIT_LENS = 0;
export const LOGIT_MODE_PER_LAYER_HEAD = 1;
export const LOGIT_MODE_SYNTHETIC = 2;

export interface TraceHeader {
  layers: number;
  heads: number;
  vocab: number;
  logitMode: number;
  promptLen: number;
  visualSpan: number[];
  stepCount: number;
}

export interface TraceStep {
  /** [L][V] float32, layer-major */
  layerLogits: Float32Array[];
  /** [L][H] float32, attention mass on the visual span */
  visualMass: Float32Array[];
  /** token the model itself chose at this step */
  chosenToken: number;
}

export function headerSize(header: TraceHeader): number {
  return 33 + 4 * header.visualSpan.length;
}

export function recordSize(header: TraceHeader): number {
  const { layers, heads, vocab } = header;
  return 4 * (layers * vocab + layers * heads) + 4;
}

export function encodeHeader(header: TraceHeader): Buffer {
  const span = header.visualSpan;
  for (let i = 1; i < span.length; i++) {
    if (span[i] <= span[i - 1]) throw new Error("visual span must be sorted and unique");
  }
  if (span.length > 0 && span[span.length - 1] >= header.promptLen) {
    throw new Error("visual span index out of prompt range");
  }
  const buf = Buffer.alloc(headerSize(header));
  let off = buf.write(MAGIC, 0, "ascii");
  off = buf.writeUInt32LE(VERSION, off);
  off = buf.writeUInt32LE(header.layers, off);
  off = buf.writeUInt32LE(header.heads, off);
  off = buf.writeUInt32LE(header.vocab, off);
  off = buf.writeUInt8(header.logitMode, off);
  off = buf.writeUInt32LE(header.promptLen, off);
  off = buf.writeUInt32LE(span.length, off);
  for (const index of span) off = buf.writeUInt32LE(index, off);
  buf.writeUInt32LE(header.stepCount, off);
  return buf;
}

export function encodeRecord(header: TraceHeader, step: TraceStep): Buffer {
  const { layers, heads, vocab } = header;
  if (step.layerLogits.length !== layers || step.visualMass.length !== layers) {
    throw new Error("record layer count does not match header");
  }
  const buf = Buffer.alloc(recordSize(header));
  let off = 0;
  for (let l = 0; l < layers; l++) {
    const logits = step.layerLogits[l];
    if (logits.length !== vocab) throw new Error("record vocab size does not match header");
    for (let v = 0; v < vocab; v++) off = buf.writeFloatLE(logits[v], off);
  }
  for (let l = 0; l < layers; l++) {
    const mass = step.visualMass[l];
    if (mass.length !== heads) throw new Error("record head count does not match header");
    for (let h = 0; h < heads; h++) off = buf.writeFloatLE(mass[h], off);
  }
  buf.writeUInt32LE(step.chosenToken, off);
  return buf;
}

export function writeTrace(path: string, header: TraceHeader, steps: TraceStep[]): void {
  if (steps.length !== header.stepCount) {
    throw new Error(`got ${steps.length} steps for stepCount ${header.stepCount}`);
  }
  const parts = [encodeHeader(header)];
  for (const step of steps) parts.push(encodeRecord(header, step));
  writeFileSync(path, Buffer.concat(parts));
}
