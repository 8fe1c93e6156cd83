/**
 * Minimal dense math over typed arrays. Weights live in Float32Array;
 * accumulation happens in float64 and results are rounded back to f32
 * where they are stored or serialized.
 */

/** y = W x for row-major W of shape [rows, cols]. */
export function matVec(w: Float32Array, rows: number, cols: number, x: Float64Array): Float64Array {
  const out = new Float64Array(rows);
  for (let r = 0; r < rows; r++) {
    let acc = 0;
    const base = r * cols;
    for (let c = 0; c < cols; c++) acc += w[base + c] * x[c];
    out[r] = acc;
  }
  return out;
}

export function rmsNorm(x: Float64Array, gain: Float32Array, eps = 1e-5): Float64Array {
  let ss = 0;
  for (let i = 0; i < x.length; i++) ss += x[i] * x[i];
  const inv = 1.0 / Math.sqrt(ss / x.length + eps);
  const out = new Float64Array(x.length);
  for (let i = 0; i < x.length; i++) out[i] = x[i] * inv * gain[i];
  return out;
}

/** In-place softmax over the first `n` entries; max-subtracted. */
export function softmaxInPlace(x: Float64Array, n: number): void {
  let max = -Infinity;
  for (let i = 0; i < n; i++) if (x[i] > max) max = x[i];
  let sum = 0;
  for (let i = 0; i < n; i++) {
    x[i] = Math.exp(x[i] - max);
    sum += x[i];
  }
  for (let i = 0; i < n; i++) x[i] /= sum;
}

export function gelu(x: number): number {
  return 0.5 * x * (1.0 + Math.tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

export function argmaxF32(x: Float32Array): number {
  let best = 0;
  for (let i = 1; i < x.length; i++) if (x[i] > x[best]) best = i;
  return best;
}

export function toF32(x: Float64Array): Float32Array {
  return Float32Array.from(x);
}
