"""Generation loops: dual-anchor decoding plus comparison baselines.

Strategies:
  greedy  - argmax over final-layer logits, one forward pass per token.
  daid    - full anchored calibration pipeline, one forward pass per token.
  dola    - contrast against a fixed early layer (default L // 4) over the
            plausibility mask. Inspired by layer-contrast decoding; a
            comparison point, not a faithful reimplementation.
  vcdsim  - two forward passes per token, decoding greedily from the first.
            Token output is identical to greedy; it exists purely so
            benchmarks can measure the doubled pass cost of methods that
            need a second (perturbed-input) forward pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .calibration import decode_step, plausibility_set
from .core import DecodeConfig, StepDiagnostics, WrongStrategy, stable_softmax

STRATEGY_GREEDY = "greedy"
STRATEGY_DAID = "daid"
STRATEGY_DOLA = "dola"
STRATEGY_VCDSIM = "vcdsim"
STRATEGIES = (STRATEGY_GREEDY, STRATEGY_DAID, STRATEGY_DOLA, STRATEGY_VCDSIM)


@dataclass(frozen=True)
class StopCriteria:
    max_new_tokens: int
    stop_token: Optional[int] = None

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


@dataclass(frozen=True)
class GenerationResult:
    tokens: tuple[int, ...]
    per_step: tuple[StepDiagnostics, ...]
    strategy: str
    elapsed_ns: int
    forward_passes: int


def _greedy_diag(step) -> tuple[int, StepDiagnostics]:
    token = int(np.argmax(step.final_logits))
    p_final = float(stable_softmax(step.final_logits)[token])
    diag = StepDiagnostics(
        anchors=None,
        mask_count=step.vocab_size,
        chosen_token=token,
        p_final_of_chosen=p_final,
        p_daid_of_chosen=p_final,
    )
    return token, diag


def _dola_diag(step, cfg: DecodeConfig, early_layer: int) -> tuple[int, StepDiagnostics]:
    mask = plausibility_set(step.final_logits, cfg.gamma)
    p_final = stable_softmax(step.final_logits)
    p_early = stable_softmax(step.layer_logits[early_layer])
    contrast = np.where(mask.allowed, p_final - p_early, -np.inf)
    token = int(np.argmax(contrast))
    diag = StepDiagnostics(
        anchors=None,
        mask_count=mask.count,
        chosen_token=token,
        p_final_of_chosen=float(p_final[token]),
        p_daid_of_chosen=float(p_final[token]),
    )
    return token, diag


def generate(
    backend,
    prompt: Sequence[int],
    cfg: DecodeConfig,
    stop: StopCriteria,
    strategy: str = STRATEGY_DAID,
    dola_early_layer: Optional[int] = None,
) -> GenerationResult:
    """Runs one generation; deterministic given (backend seed, prompt, cfg)."""
    if strategy not in STRATEGIES:
        raise WrongStrategy(f"unknown strategy {strategy!r}")
    if len(prompt) == 0:
        raise ValueError("prompt must be non-empty")
    num_layers = backend.descriptor.dims.num_layers
    if dola_early_layer is None:
        dola_early_layer = max(0, num_layers // 4)
    if not 0 <= dola_early_layer < num_layers:
        raise ValueError(f"dola_early_layer {dola_early_layer} out of range")

    rng = np.random.default_rng(cfg.seed)
    context = list(prompt)
    tokens: list[int] = []
    per_step: list[StepDiagnostics] = []
    passes_before = backend.forward_pass_count
    started = time.monotonic_ns()
    for _ in range(stop.max_new_tokens):
        step = backend.step(context)
        if strategy == STRATEGY_DAID:
            token, diag = decode_step(step, cfg, rng)
        elif strategy == STRATEGY_DOLA:
            token, diag = _dola_diag(step, cfg, dola_early_layer)
        elif strategy == STRATEGY_VCDSIM:
            backend.step(context)  # second pass; result unused by design
            token, diag = _greedy_diag(step)
        else:
            token, diag = _greedy_diag(step)
        tokens.append(token)
        per_step.append(diag)
        context.append(token)
        if stop.stop_token is not None and token == stop.stop_token:
            break
    elapsed = time.monotonic_ns() - started
    return GenerationResult(
        tokens=tuple(tokens),
        per_step=tuple(per_step),
        strategy=strategy,
        elapsed_ns=elapsed,
        forward_passes=backend.forward_pass_count - passes_before,
    )


def anchor_trace(result: GenerationResult) -> list[tuple[int, Optional[int]]]:
    """Per-step (spotlight, shadow) series for plotting anchor dynamics."""
    if result.strategy != STRATEGY_DAID:
        raise WrongStrategy(f"anchor trace requires a daid result, got {result.strategy!r}")
    return [(d.anchors.spotlight, d.anchors.shadow) for d in result.per_step]
