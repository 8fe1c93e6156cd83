import { describe, expect, it } from "vitest";

import {
  LOGIT_MODE_LOGIT_LENS,
  TraceHeader,
  TraceStep,
  encodeHeader,
  encodeRecord,
  headerSize,
  recordSize,
} from "../src/trace";

const HEADER: TraceHeader = {
  layers: 2,
  heads: 1,
  vocab: 3,
  logitMode: LOGIT_MODE_LOGIT_LENS,
  promptLen: 4,
  visualSpan: [1, 2],
  stepCount: 1,
};

function step(chosen = 2): TraceStep {
  return {
    layerLogits: [Float32Array.from([0.5, -1, 2]), Float32Array.from([1, 2, 3])],
    visualMass: [Float32Array.from([0.25]), Float32Array.from([0.75])],
    chosenToken: chosen,
  };
}

describe("header encoding", () => {
  it("lays out every field at its documented offset", () => {
    const buf = encodeHeader(HEADER);
    expect(buf.length).toBe(33 + 4 * 2);
    expect(buf.toString("ascii", 0, 4)).toBe("DAID");
    expect(buf.readUInt32LE(4)).toBe(1); // version
    expect(buf.readUInt32LE(8)).toBe(2); // layers
    expect(buf.readUInt32LE(12)).toBe(1); // heads
    expect(buf.readUInt32LE(16)).toBe(3); // vocab
    expect(buf.readUInt8(20)).toBe(LOGIT_MODE_LOGIT_LENS);
    expect(buf.readUInt32LE(21)).toBe(4); // promptLen
    expect(buf.readUInt32LE(25)).toBe(2); // span count
    expect(buf.readUInt32LE(29)).toBe(1);
    expect(buf.readUInt32LE(33)).toBe(2);
    expect(buf.readUInt32LE(37)).toBe(1); // stepCount
  });

  it("computes sizes from the documented formulas", () => {
    expect(headerSize(HEADER)).toBe(33 + 4 * HEADER.visualSpan.length);
    expect(recordSize(HEADER)).toBe(4 * (2 * 3 + 2 * 1) + 4);
  });

  it("rejects unsorted or out-of-range spans", () => {
    expect(() => encodeHeader({ ...HEADER, visualSpan: [2, 1] })).toThrow(/sorted/);
    expect(() => encodeHeader({ ...HEADER, visualSpan: [1, 1] })).toThrow(/sorted/);
    expect(() => encodeHeader({ ...HEADER, visualSpan: [3, 4] })).toThrow(/range/);
  });
});

describe("record encoding", () => {
  it("serializes logits, mass, and the chosen token in order", () => {
    const buf = encodeRecord(HEADER, step());
    expect(buf.length).toBe(recordSize(HEADER));
    expect(buf.readFloatLE(0)).toBeCloseTo(0.5, 6);
    expect(buf.readFloatLE(4)).toBeCloseTo(-1, 6);
    expect(buf.readFloatLE(4 * 5)).toBeCloseTo(3, 6); // last logit of layer 1
    expect(buf.readFloatLE(4 * 6)).toBeCloseTo(0.25, 6); // mass, layer 0
    expect(buf.readFloatLE(4 * 7)).toBeCloseTo(0.75, 6);
    expect(buf.readUInt32LE(4 * 8)).toBe(2);
  });

  it("rejects shape mismatches against the header", () => {
    const bad = step();
    bad.layerLogits = [Float32Array.from([1, 2, 3])];
    expect(() => encodeRecord(HEADER, bad)).toThrow(/layer count/);
    const badVocab = step();
    badVocab.layerLogits[0] = Float32Array.from([1, 2]);
    expect(() => encodeRecord(HEADER, badVocab)).toThrow(/vocab/);
  });
});
