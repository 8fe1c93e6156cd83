"""Shared domain types for the decoding engine.

Everything here is a plain value type: validated on construction, immutable
afterwards (arrays are frozen via the writeable flag), safe to share across
threads. Layer indices are 0-based throughout the package; 1-based indices
appear only in user-facing output.

Stored numeric data (logits, attention mass) is float32, matching what model
runtimes export. Derived quantities (softmax distributions, head averages)
are computed in float64 so replays agree across implementations to 1e-6.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

MASS_TOLERANCE = 1e-6  # slack on the [0,1] bound for row-stochastic sums

SHADOW_FALLBACK_SKIP = "skip_suppression"
SHADOW_FALLBACK_LAYER_ZERO = "use_layer_zero"
SAMPLING_GREEDY = "greedy"
SAMPLING_TEMPERATURE = "temperature"


class DaidError(Exception):
    """Base class for all engine errors."""


class ShapeMismatch(DaidError):
    pass


class NonFinite(DaidError):
    pass


class MassOutOfRange(DaidError):
    pass


class ContextTooLong(DaidError):
    pass


class BackendFailure(DaidError):
    pass


class InvalidProfile(DaidError):
    pass


class EmptyDataset(DaidError):
    pass


class WrongStrategy(DaidError):
    pass


def _frozen_f32(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains NaN or Inf")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelDims:
    """Static model geometry: layer count, head count, vocabulary size.

    ``context_len`` is the current context length (prompt length before
    decoding starts); it only matters for validating visual spans.
    """

    num_layers: int
    num_heads: int
    vocab_size: int
    context_len: int = 0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ShapeMismatch(f"num_layers must be >= 1, got {self.num_layers}")
        if self.num_heads < 1:
            raise ShapeMismatch(f"num_heads must be >= 1, got {self.num_heads}")
        if self.vocab_size < 2:
            raise ShapeMismatch(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.context_len < 0:
            raise ShapeMismatch(f"context_len must be >= 0, got {self.context_len}")


@dataclass(frozen=True)
class VisualSpan:
    """Context positions holding visual tokens. May be empty."""

    indices: tuple[int, ...]

    def __init__(self, indices: Sequence[int]):
        idx = tuple(sorted(set(int(i) for i in indices)))
        if idx and idx[0] < 0:
            raise ShapeMismatch("visual span indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    def validate_against(self, context_len: int) -> None:
        if self.indices and self.indices[-1] >= context_len:
            raise ShapeMismatch(
                f"visual span index {self.indices[-1]} out of range for context length {context_len}"
            )

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class AttentionSummary:
    """Per-layer, per-head attention mass on the visual span, shape [L, H].

    Entry (l, h) is the sum over visual-key positions of the attention row
    for the current query token. Rows of the source attention matrix are
    row-stochastic, so each entry lies in [0, 1].
    """

    visual_mass: np.ndarray

    def __init__(self, visual_mass):
        arr = _frozen_f32(visual_mass, "visual_mass")
        if arr.ndim != 2:
            raise ShapeMismatch(f"visual_mass must be 2-D [L, H], got shape {arr.shape}")
        object.__setattr__(self, "visual_mass", arr)

    @property
    def num_layers(self) -> int:
        return self.visual_mass.shape[0]

    @property
    def num_heads(self) -> int:
        return self.visual_mass.shape[1]


@dataclass(frozen=True)
class StepIntrospection:
    """Everything the model exposes for one decoding step.

    ``layer_logits`` is [L, V] float32; row L-1 is the final layer.
    ``attention`` is the pre-summed visual attention mass, [L, H].
    """

    layer_logits: np.ndarray
    attention: AttentionSummary

    def __init__(self, layer_logits, attention: AttentionSummary):
        arr = _frozen_f32(layer_logits, "layer_logits")
        if arr.ndim != 2:
            raise ShapeMismatch(f"layer_logits must be 2-D [L, V], got shape {arr.shape}")
        object.__setattr__(self, "layer_logits", arr)
        object.__setattr__(self, "attention", attention)

    @property
    def num_layers(self) -> int:
        return self.layer_logits.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.layer_logits.shape[1]

    @property
    def final_logits(self) -> np.ndarray:
        return self.layer_logits[-1]


@dataclass(frozen=True)
class DecodeConfig:
    """Knobs for one decoding run.

    alpha scales the spotlight reinforcement, beta the shadow suppression,
    gamma the plausibility threshold. ``enforce_shadow_before_spotlight``
    is the topological constraint; disabling it is the ablation setting.
    ``shadow_fallback`` decides what happens when the spotlight lands on
    layer 0 and no earlier layer exists.
    """

    alpha: float = 0.8
    beta: float = 0.2
    gamma: float = 0.1
    enforce_shadow_before_spotlight: bool = True
    shadow_fallback: str = SHADOW_FALLBACK_SKIP
    tie_break: str = "lowest_index"
    sampling: str = SAMPLING_GREEDY
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.shadow_fallback not in (SHADOW_FALLBACK_SKIP, SHADOW_FALLBACK_LAYER_ZERO):
            raise ValueError(f"unknown shadow_fallback {self.shadow_fallback!r}")
        if self.tie_break != "lowest_index":
            raise ValueError("tie_break is fixed to 'lowest_index'")
        if self.sampling not in (SAMPLING_GREEDY, SAMPLING_TEMPERATURE):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if self.sampling == SAMPLING_TEMPERATURE and not self.temperature > 0:
            raise ValueError("temperature must be > 0")


@dataclass(frozen=True)
class AnchorSelection:
    """Chosen spotlight/shadow layers plus the profile that justified them.

    ``fallback_used`` is set when the spotlight sits at layer 0 and the
    fallback policy decided the shadow (either skipped or pinned to 0); in
    the pinned case shadow == spotlight is permitted.
    """

    spotlight: int
    shadow: Optional[int]
    vas_profile: np.ndarray
    fallback_used: bool = False

    def __post_init__(self):
        prof = np.asarray(self.vas_profile, dtype=np.float64)
        prof.setflags(write=False)
        object.__setattr__(self, "vas_profile", prof)
        n = prof.shape[0]
        if not 0 <= self.spotlight < n:
            raise ShapeMismatch(f"spotlight {self.spotlight} out of range for {n} layers")
        if self.shadow is not None and not 0 <= self.shadow < n:
            raise ShapeMismatch(f"shadow {self.shadow} out of range for {n} layers")


@dataclass(frozen=True)
class CandidateMask:
    """Boolean vocabulary mask from the plausibility constraint."""

    allowed: np.ndarray
    count: int

    def __init__(self, allowed):
        arr = np.asarray(allowed, dtype=bool)
        arr.setflags(write=False)
        count = int(arr.sum())
        if count < 1:
            raise ShapeMismatch("candidate mask must allow at least one token")
        object.__setattr__(self, "allowed", arr)
        object.__setattr__(self, "count", count)


@dataclass(frozen=True)
class CalibratedDistribution:
    """Post-calibration, post-constraint output distribution.

    ``dist`` sums to 1 within 1e-6 and is exactly 0 outside the mask.
    ``renorm_constant`` is the probability mass the mask kept from the
    unconstrained softmax of the calibrated logits.
    """

    dist: np.ndarray
    mask: CandidateMask
    raw_calibrated_logits: np.ndarray
    renorm_constant: float


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step audit record emitted by the generation loops.

    ``anchors`` is None for strategies that do not anchor (greedy, the
    fixed-layer contrast baseline, the two-pass cost simulation).
    """

    anchors: Optional[AnchorSelection]
    mask_count: int
    chosen_token: int
    p_final_of_chosen: float
    p_daid_of_chosen: float


def validate_introspection(step: StepIntrospection, dims: ModelDims) -> None:
    """Checks a step against the model geometry; raises on violation.

    Raises ShapeMismatch for wrong layer/head/vocab counts, NonFinite for
    NaN/Inf logits, MassOutOfRange for attention mass outside [0, 1].
    Construction already rejects non-finite values, so NonFinite here only
    fires for arrays mutated through a non-frozen alias.
    """
    if step.layer_logits.shape != (dims.num_layers, dims.vocab_size):
        raise ShapeMismatch(
            f"layer_logits shape {step.layer_logits.shape} != "
            f"({dims.num_layers}, {dims.vocab_size})"
        )
    if step.attention.visual_mass.shape != (dims.num_layers, dims.num_heads):
        raise ShapeMismatch(
            f"visual_mass shape {step.attention.visual_mass.shape} != "
            f"({dims.num_layers}, {dims.num_heads})"
        )
    if not np.all(np.isfinite(step.layer_logits)):
        raise NonFinite("layer_logits contains NaN or Inf")
    mass = step.attention.visual_mass
    if mass.size and (mass.min() < -MASS_TOLERANCE or mass.max() > 1.0 + MASS_TOLERANCE):
        raise MassOutOfRange(
            f"visual_mass outside [0, 1]: min={mass.min()}, max={mass.max()}"
        )


def stable_softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax, computed in float64."""
    x = np.asarray(logits, dtype=np.float64)
    shifted = x - x.max()
    exps = np.exp(shifted)
    return exps / exps.sum()
