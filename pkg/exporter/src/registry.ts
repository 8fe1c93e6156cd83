import { ModelLoadError } from "./errors.js";
import { ModelConfig, TinyVlm } from "./model.js";

const CONFIGS: Record<string, ModelConfig> = {
  "tiny-vlm": {
    name: "tiny-vlm",
    layers: 4,
    heads: 2,
    dModel: 16,
    vocab: 48,
    visualTokens: 6,
    exposeAttention: true,
    maxContext: 512,
  },
  "tiny-vlm-deep": {
    name: "tiny-vlm-deep",
    layers: 6,
    heads: 4,
    dModel: 32,
    vocab: 64,
    visualTokens: 8,
    exposeAttention: true,
    maxContext: 512,
  },
  // fused-kernel stand-in: forward works, attention weights are not emitted
  "tiny-vlm-fused": {
    name: "tiny-vlm-fused",
    layers: 4,
    heads: 2,
    dModel: 16,
    vocab: 48,
    visualTokens: 6,
    exposeAttention: false,
    maxContext: 512,
  },
};

export function availableModels(): string[] {
  return Object.keys(CONFIGS);
}

export function loadModel(id: string): TinyVlm {
  const config = CONFIGS[id];
  if (!config) {
    throw new ModelLoadError(
      `unknown model '${id}' (available: ${availableModels().join(", ")})`
    );
  }
  return new TinyVlm(config);
}
