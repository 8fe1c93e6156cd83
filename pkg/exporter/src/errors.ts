export class ModelLoadError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ModelLoadError";
  }
}

/** The selected model runtime cannot emit attention weights (fused kernels). */
export class HookUnsupported extends Error {
  constructor(message: string) {
    super(message);
    this.name = "HookUnsupported";
  }
}
