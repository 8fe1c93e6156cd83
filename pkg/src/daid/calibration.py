"""Dual-anchor logit calibration and the adaptive plausibility constraint.

The calibrated logits are

    (final + alpha * spotlight) * (1 + beta) - beta * shadow

computed in float64 over the float32 inputs. When no shadow layer exists
(spotlight at layer 0 with the skip fallback), the suppression term AND the
(1 + beta) amplification are both dropped, so alpha=beta=0 reduces exactly
to the final-layer distribution.

The candidate set keeps every token whose final-layer probability is at
least gamma times the maximum; the calibrated distribution is zeroed
outside that set and renormalized so it can be sampled.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import (
    SAMPLING_TEMPERATURE,
    CalibratedDistribution,
    CandidateMask,
    DecodeConfig,
    NonFinite,
    StepDiagnostics,
    StepIntrospection,
    stable_softmax,
)
from .anchoring import select_anchors


def calibrate_logits(
    final: np.ndarray,
    spot: np.ndarray,
    shad: Optional[np.ndarray],
    alpha: float,
    beta: float,
) -> np.ndarray:
    """Applies the dual-anchor formula; returns float64 logits, length V."""
    final64 = np.asarray(final, dtype=np.float64)
    spot64 = np.asarray(spot, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):  # finiteness checked below
        if shad is None:
            out = final64 + alpha * spot64
        else:
            out = (final64 + alpha * spot64) * (1.0 + beta) - beta * np.asarray(shad, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NonFinite("calibrated logits contain NaN or Inf")
    return out


def plausibility_set(final: np.ndarray, gamma: float) -> CandidateMask:
    """Tokens whose final-layer probability reaches gamma * max probability.

    The argmax token always qualifies, so the mask is never empty.
    """
    probs = stable_softmax(final)
    threshold = gamma * probs.max()
    return CandidateMask(probs >= threshold)


def apply_constraint(calibrated: np.ndarray, mask: CandidateMask) -> CalibratedDistribution:
    """Zeroes the calibrated softmax outside the mask and renormalizes.

    Disallowed entries are exactly 0.0. ``renorm_constant`` records the
    unconstrained softmax mass the mask retained.
    """
    full = stable_softmax(calibrated)
    kept = float(full[mask.allowed].sum())
    dist = np.where(mask.allowed, full / kept, 0.0)
    dist.setflags(write=False)
    raw = np.asarray(calibrated, dtype=np.float32)
    raw.setflags(write=False)
    return CalibratedDistribution(
        dist=dist,
        mask=mask,
        raw_calibrated_logits=raw,
        renorm_constant=kept,
    )


def calibrate_step(step: StepIntrospection, cfg: DecodeConfig):
    """Runs anchoring + calibration + constraint; returns (anchors, calibrated)."""
    anchors = select_anchors(step, cfg)
    final = step.final_logits
    spot = step.layer_logits[anchors.spotlight]
    shad = step.layer_logits[anchors.shadow] if anchors.shadow is not None else None
    calibrated = calibrate_logits(final, spot, shad, cfg.alpha, cfg.beta)
    mask = plausibility_set(final, cfg.gamma)
    return anchors, apply_constraint(calibrated, mask)


def choose_token(
    calibrated: CalibratedDistribution,
    cfg: DecodeConfig,
    rng: Optional[np.random.Generator] = None,
) -> int:
    """Greedy argmax (lowest token id on ties) or temperature sampling."""
    if cfg.sampling == SAMPLING_TEMPERATURE:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        scaled = np.asarray(calibrated.raw_calibrated_logits, dtype=np.float64) / cfg.temperature
        scaled = np.where(calibrated.mask.allowed, scaled, -np.inf)
        shifted = scaled - scaled.max()
        exps = np.exp(shifted)
        probs = exps / exps.sum()
        return int(rng.choice(probs.shape[0], p=probs))
    return int(np.argmax(calibrated.dist))


def decode_step(
    step: StepIntrospection,
    cfg: DecodeConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[int, StepDiagnostics]:
    """One full decoding step: anchors, calibration, constraint, selection."""
    anchors, calibrated = calibrate_step(step, cfg)
    token = choose_token(calibrated, cfg, rng)
    p_final = stable_softmax(step.final_logits)
    diagnostics = StepDiagnostics(
        anchors=anchors,
        mask_count=calibrated.mask.count,
        chosen_token=token,
        p_final_of_chosen=float(p_final[token]),
        p_daid_of_chosen=float(calibrated.dist[token]),
    )
    return token, diagnostics
