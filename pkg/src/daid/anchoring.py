"""Visual attention scoring and spotlight/shadow layer selection.

The visual attention score of a layer is its attention mass on visual
tokens averaged across heads. The spotlight anchor is the layer where that
score peaks; the shadow anchor is the minimum-score layer, searched by
default only among layers preceding the spotlight so the suppressed state
predates visual integration. All ties break to the lowest layer index.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import (
    SHADOW_FALLBACK_LAYER_ZERO,
    AnchorSelection,
    AttentionSummary,
    DecodeConfig,
    StepIntrospection,
)


def compute_vas(attention: AttentionSummary) -> np.ndarray:
    """Per-layer visual attention score: head-mean of visual mass, length L.

    Averaging is done in float64 over the stored float32 mass.
    """
    return attention.visual_mass.mean(axis=1, dtype=np.float64)


def select_spotlight(vas: np.ndarray) -> int:
    """Index of the maximum score; np.argmax already takes the lowest on ties."""
    return int(np.argmax(vas))


def select_shadow(vas: np.ndarray, spotlight: int, cfg: DecodeConfig) -> tuple[Optional[int], bool]:
    """Minimum-score layer for suppression; returns (index_or_None, fallback_used).

    Constrained mode searches layers [0, spotlight); when the spotlight is
    layer 0 the search space is empty and the configured fallback applies.
    Unconstrained mode (ablation) searches every layer except the spotlight.
    """
    num_layers = vas.shape[0]
    if cfg.enforce_shadow_before_spotlight:
        if spotlight == 0:
            if cfg.shadow_fallback == SHADOW_FALLBACK_LAYER_ZERO:
                return 0, True
            return None, True
        return int(np.argmin(vas[:spotlight])), False
    if num_layers == 1:
        if cfg.shadow_fallback == SHADOW_FALLBACK_LAYER_ZERO:
            return 0, True
        return None, True
    masked = np.array(vas, dtype=np.float64)
    masked[spotlight] = np.inf  # exclude spotlight; lowest-index tie-break preserved
    return int(np.argmin(masked)), False


def select_anchors(step: StepIntrospection, cfg: DecodeConfig) -> AnchorSelection:
    vas = compute_vas(step.attention)
    spotlight = select_spotlight(vas)
    shadow, fallback_used = select_shadow(vas, spotlight, cfg)
    return AnchorSelection(
        spotlight=spotlight,
        shadow=shadow,
        vas_profile=vas,
        fallback_used=fallback_used,
    )
