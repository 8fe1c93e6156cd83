"""Model abstraction and the deterministic synthetic toy backend.

The toy backend is not a trained network. It is a seeded generator that
plants per-layer logit preferences and a per-layer visual-attention curve,
so algorithmic claims (anchor selection, calibration flips, pass counts)
can be tested at desk scale. Every emitted float is a pure function of
(seed, context length, last context token), so repeated calls with the
same context are bit-identical and per-step cost does not grow with
context length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .core import (
    AttentionSummary,
    BackendFailure,
    ContextTooLong,
    InvalidProfile,
    ModelDims,
    StepIntrospection,
    VisualSpan,
)

LOGIT_MODE_LOGIT_LENS = "logit_lens"
LOGIT_MODE_PER_LAYER_HEAD = "per_layer_head"
LOGIT_MODE_SYNTHETIC = "synthetic"

_MIX_A = 0x9E3779B97F4A7C15
_MIX_B = 0xBF58476D1CE4E5B9
_U64 = 1 << 64


@dataclass(frozen=True)
class BackendDescriptor:
    dims: ModelDims
    visual_span: VisualSpan
    logit_mode: str
    name: str


class Backend(Protocol):
    """What the generation loops need from a model."""

    descriptor: BackendDescriptor
    forward_pass_count: int

    def step(self, context: Sequence[int]) -> StepIntrospection: ...


@dataclass(frozen=True)
class TokenPreference:
    """Additive logit boost for one token at one layer."""

    layer: int
    token: int
    strength: float


@dataclass(frozen=True)
class SeeingThenForgetting:
    """Drift pattern: a grounded token peaks mid-stack, a hallucinated one
    dominates elsewhere.

    The grounded token's boost is strength * exp(-decay * |layer - peak|);
    the hallucinated token gets a flat strength * hallucinated_level. With
    the defaults the grounded token wins only in a window around the peak,
    which is what the layer probe and the case-study flip rely on.
    """

    peak_layer: int
    decay: float = 0.8
    grounded_token: int = 0
    hallucinated_token: int = 1
    strength: float = 4.0
    hallucinated_level: float = 0.55


@dataclass(frozen=True)
class SyntheticProfile:
    """Generator parameters for the toy backend.

    vas_curve is the per-layer target visual attention score. Heads get
    i.i.d. jitter around it, bounded by head_jitter and clipped so mass
    stays in [0, 1]; a zero target therefore yields exactly zero mass.
    When vas_curve_alt is given, steps alternate between the two curves
    by context-length parity (used to plant oscillating anchor traces).
    """

    seed: int
    vas_curve: tuple[float, ...]
    vas_curve_alt: Optional[tuple[float, ...]] = None
    token_preferences: tuple[TokenPreference, ...] = ()
    drift: Optional[SeeingThenForgetting] = None
    base_noise: float = 0.1
    head_jitter: float = 0.05
    visual_span: tuple[int, ...] = (0,)
    max_context: int = 4096


def _drift_boosts(drift: SeeingThenForgetting, num_layers: int) -> list[TokenPreference]:
    prefs = []
    for layer in range(num_layers):
        grounded = drift.strength * math.exp(-drift.decay * abs(layer - drift.peak_layer))
        prefs.append(TokenPreference(layer, drift.grounded_token, grounded))
        prefs.append(TokenPreference(layer, drift.hallucinated_token,
                                     drift.strength * drift.hallucinated_level))
    return prefs


class ToyBackend:
    """Deterministic planted-structure backend; single generation stream."""

    def __init__(self, profile: SyntheticProfile, dims: ModelDims, name: str = "toy"):
        self.profile = profile
        self.dims = dims
        self.forward_pass_count = 0
        self._validate(profile, dims)
        span = VisualSpan(profile.visual_span)
        self.descriptor = BackendDescriptor(
            dims=dims, visual_span=span, logit_mode=LOGIT_MODE_SYNTHETIC, name=name
        )
        self._curves = [np.asarray(profile.vas_curve, dtype=np.float64)]
        if profile.vas_curve_alt is not None:
            self._curves.append(np.asarray(profile.vas_curve_alt, dtype=np.float64))
        # per-curve jitter amplitude, clipped so mass stays inside [0, 1]
        self._jitter = [
            np.minimum(profile.head_jitter, np.minimum(curve, 1.0 - curve))
            for curve in self._curves
        ]
        boosts = np.zeros((dims.num_layers, dims.vocab_size), dtype=np.float64)
        prefs = list(profile.token_preferences)
        if profile.drift is not None:
            prefs.extend(_drift_boosts(profile.drift, dims.num_layers))
        for pref in prefs:
            boosts[pref.layer, pref.token] += pref.strength
        self._boosts = boosts.astype(np.float32)

    @staticmethod
    def _validate(profile: SyntheticProfile, dims: ModelDims) -> None:
        curves = [profile.vas_curve] + (
            [profile.vas_curve_alt] if profile.vas_curve_alt is not None else []
        )
        for curve in curves:
            if len(curve) != dims.num_layers:
                raise InvalidProfile(
                    f"vas_curve length {len(curve)} != num_layers {dims.num_layers}"
                )
            if any(not (0.0 <= v <= 1.0) for v in curve):
                raise InvalidProfile("vas_curve entries must lie in [0, 1]")
        for pref in profile.token_preferences:
            if not 0 <= pref.layer < dims.num_layers:
                raise InvalidProfile(f"preference layer {pref.layer} out of range")
            if not 0 <= pref.token < dims.vocab_size:
                raise InvalidProfile(f"preference token {pref.token} out of range")
            if not math.isfinite(pref.strength):
                raise InvalidProfile("preference strength must be finite")
        if profile.drift is not None:
            drift = profile.drift
            if not 0 <= drift.peak_layer < dims.num_layers:
                raise InvalidProfile(f"drift peak_layer {drift.peak_layer} out of range")
            for token in (drift.grounded_token, drift.hallucinated_token):
                if not 0 <= token < dims.vocab_size:
                    raise InvalidProfile(f"drift token {token} out of range")
        if not 0.0 <= profile.head_jitter <= 0.05:
            raise InvalidProfile("head_jitter must lie in [0, 0.05]")
        if profile.base_noise < 0:
            raise InvalidProfile("base_noise must be non-negative")

    def _rng_for(self, context: Sequence[int]) -> np.random.Generator:
        mix = (len(context) * _MIX_A + int(context[-1]) * _MIX_B) % _U64
        return np.random.Generator(np.random.Philox(key=[self.profile.seed % _U64, mix]))

    def step(self, context: Sequence[int]) -> StepIntrospection:
        if len(context) == 0:
            raise BackendFailure("context must be non-empty")
        if len(context) > self.profile.max_context:
            raise ContextTooLong(
                f"context length {len(context)} exceeds {self.profile.max_context}"
            )
        self.forward_pass_count += 1
        dims = self.dims
        rng = self._rng_for(context)
        # draw order is fixed: logit noise first, then head jitter
        logits = rng.standard_normal((dims.num_layers, dims.vocab_size), dtype=np.float32)
        logits *= np.float32(self.profile.base_noise)
        logits += self._boosts
        curve_idx = len(context) % len(self._curves)
        curve = self._curves[curve_idx]
        jitter = self._jitter[curve_idx]
        unit = rng.uniform(-1.0, 1.0, size=dims.num_heads)
        mass = curve[:, None] + unit[None, :] * jitter[:, None]
        return StepIntrospection(
            layer_logits=logits,
            attention=AttentionSummary(mass.astype(np.float32)),
        )


def build_toy_backend(profile: SyntheticProfile, dims: ModelDims, name: str = "toy") -> ToyBackend:
    return ToyBackend(profile, dims, name=name)


def profile_from_dict(obj: dict) -> tuple[SyntheticProfile, ModelDims]:
    """Parses the toy-profile JSON schema used by fixtures and the CLI."""
    try:
        dims = ModelDims(
            num_layers=int(obj["layers"]),
            num_heads=int(obj["heads"]),
            vocab_size=int(obj["vocab"]),
            context_len=int(obj.get("context_len", 0)),
        )
        prefs = tuple(
            TokenPreference(int(p["layer"]), int(p["token"]), float(p["strength"]))
            for p in obj.get("token_preferences", [])
        )
        drift = None
        if "drift" in obj and obj["drift"] is not None:
            d = obj["drift"]
            if d.get("kind", "seeing_then_forgetting") != "seeing_then_forgetting":
                raise InvalidProfile(f"unknown drift kind {d.get('kind')!r}")
            drift = SeeingThenForgetting(
                peak_layer=int(d["peak_layer"]),
                decay=float(d.get("decay", 0.8)),
                grounded_token=int(d.get("grounded_token", 0)),
                hallucinated_token=int(d.get("hallucinated_token", 1)),
                strength=float(d.get("strength", 4.0)),
                hallucinated_level=float(d.get("hallucinated_level", 0.55)),
            )
        alt = obj.get("vas_curve_alt")
        profile = SyntheticProfile(
            seed=int(obj["seed"]),
            vas_curve=tuple(float(v) for v in obj["vas_curve"]),
            vas_curve_alt=tuple(float(v) for v in alt) if alt is not None else None,
            token_preferences=prefs,
            drift=drift,
            base_noise=float(obj.get("base_noise", 0.1)),
            head_jitter=float(obj.get("head_jitter", 0.05)),
            visual_span=tuple(int(i) for i in obj.get("visual_span", [0])),
            max_context=int(obj.get("max_context", 4096)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidProfile(f"malformed profile: {exc}") from exc
    return profile, dims


def load_profile(path) -> tuple[SyntheticProfile, ModelDims]:
    with open(path, "r", encoding="utf-8") as fh:
        return profile_from_dict(json.load(fh))
