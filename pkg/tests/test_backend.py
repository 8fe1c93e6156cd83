import time

import numpy as np
import pytest

from daid.anchoring import compute_vas, select_anchors
from daid.backend import (
    SeeingThenForgetting,
    SyntheticProfile,
    TokenPreference,
    build_toy_backend,
    profile_from_dict,
)
from daid.core import (
    BackendFailure,
    ContextTooLong,
    DecodeConfig,
    InvalidProfile,
    ModelDims,
    validate_introspection,
)

DIMS = ModelDims(num_layers=3, num_heads=2, vocab_size=12)


def test_same_context_is_bit_identical():
    backend = build_toy_backend(SyntheticProfile(seed=5, vas_curve=(0.1, 0.9, 0.3)), DIMS)
    first = backend.step([4, 5, 6])
    second = backend.step([4, 5, 6])
    assert np.array_equal(first.layer_logits, second.layer_logits)
    assert np.array_equal(first.attention.visual_mass, second.attention.visual_mass)


def test_fresh_instance_reproduces_streams():
    profile = SyntheticProfile(seed=17, vas_curve=(0.2, 0.6, 0.4))
    a = build_toy_backend(profile, DIMS)
    b = build_toy_backend(profile, DIMS)
    context = [1]
    for _ in range(6):
        sa, sb = a.step(context), b.step(context)
        assert np.array_equal(sa.layer_logits, sb.layer_logits)
        context.append(int(np.argmax(sa.final_logits)))


def test_planted_curve_is_recovered_within_jitter():
    curve = (0.1, 0.9, 0.3)
    backend = build_toy_backend(SyntheticProfile(seed=11, vas_curve=curve), DIMS)
    profiles = []
    context = [1, 2]
    for _ in range(50):
        step = backend.step(context)
        validate_introspection(step, DIMS)
        profiles.append(compute_vas(step.attention))
        context.append(0)
    mean_profile = np.mean(profiles, axis=0)
    assert np.max(np.abs(np.array(curve) - mean_profile)) < 0.05
    for profile in profiles:  # per-step deviation is bounded too
        assert np.max(np.abs(np.array(curve) - profile)) <= 0.05 + 1e-6


def test_all_zero_curve_yields_exact_zero_mass():
    backend = build_toy_backend(SyntheticProfile(seed=3, vas_curve=(0.0, 0.0, 0.0)), DIMS)
    for length in (1, 2, 5):
        step = backend.step([1] * length)
        assert np.all(step.attention.visual_mass == 0.0)


def test_uniform_curve_ties_break_to_layer_zero():
    backend = build_toy_backend(SyntheticProfile(seed=9, vas_curve=(0.5, 0.5, 0.5)), DIMS)
    for length in (1, 3, 7):
        anchors = select_anchors(backend.step([2] * length), DecodeConfig())
        assert anchors.spotlight == 0
        assert anchors.shadow is None and anchors.fallback_used


def test_seeing_then_forgetting_layerwise_tokens():
    profile = SyntheticProfile(
        seed=21,
        vas_curve=(0.2, 0.8, 0.3),
        drift=SeeingThenForgetting(peak_layer=1, grounded_token=4, hallucinated_token=7),
        base_noise=0.02,
    )
    backend = build_toy_backend(profile, DIMS)
    step = backend.step([1, 2, 3])
    per_layer = [int(np.argmax(step.layer_logits[l])) for l in range(3)]
    assert per_layer[1] == 4  # grounded wins at the peak
    assert per_layer[2] == 7  # hallucinated wins past it


def test_token_preferences_realized():
    profile = SyntheticProfile(
        seed=2,
        vas_curve=(0.4, 0.5, 0.6),
        token_preferences=(TokenPreference(0, 11, 5.0), TokenPreference(2, 1, 5.0)),
        base_noise=0.05,
    )
    backend = build_toy_backend(profile, DIMS)
    step = backend.step([9])
    assert int(np.argmax(step.layer_logits[0])) == 11
    assert int(np.argmax(step.layer_logits[2])) == 1


def test_forward_pass_counter():
    backend = build_toy_backend(SyntheticProfile(seed=1, vas_curve=(0.1, 0.2, 0.3)), DIMS)
    assert backend.forward_pass_count == 0
    backend.step([1])
    backend.step([1, 2])
    assert backend.forward_pass_count == 2


def test_empty_context_rejected():
    backend = build_toy_backend(SyntheticProfile(seed=1, vas_curve=(0.1, 0.2, 0.3)), DIMS)
    with pytest.raises(BackendFailure):
        backend.step([])


def test_context_too_long():
    profile = SyntheticProfile(seed=1, vas_curve=(0.1, 0.2, 0.3), max_context=8)
    backend = build_toy_backend(profile, DIMS)
    backend.step([1] * 8)
    with pytest.raises(ContextTooLong):
        backend.step([1] * 9)


def test_invalid_profiles_rejected():
    with pytest.raises(InvalidProfile):
        build_toy_backend(SyntheticProfile(seed=1, vas_curve=(0.1, 0.2)), DIMS)
    with pytest.raises(InvalidProfile):
        build_toy_backend(SyntheticProfile(seed=1, vas_curve=(0.1, 0.2, 1.4)), DIMS)
    with pytest.raises(InvalidProfile):
        build_toy_backend(
            SyntheticProfile(seed=1, vas_curve=(0.1, 0.2, 0.3),
                             token_preferences=(TokenPreference(5, 0, 1.0),)),
            DIMS,
        )
    with pytest.raises(InvalidProfile):
        build_toy_backend(
            SyntheticProfile(seed=1, vas_curve=(0.1, 0.2, 0.3),
                             drift=SeeingThenForgetting(peak_layer=3)),
            DIMS,
        )


def test_profile_from_dict_roundtrip():
    obj = {
        "seed": 42,
        "layers": 3,
        "heads": 2,
        "vocab": 12,
        "vas_curve": [0.1, 0.9, 0.3],
        "token_preferences": [{"layer": 1, "token": 2, "strength": 3.0}],
        "drift": {"peak_layer": 1, "grounded_token": 0, "hallucinated_token": 1},
        "visual_span": [0, 1],
    }
    profile, dims = profile_from_dict(obj)
    assert dims == ModelDims(3, 2, 12, 0)
    assert profile.token_preferences[0] == TokenPreference(1, 2, 3.0)
    assert profile.drift.peak_layer == 1
    build_toy_backend(profile, dims)
    with pytest.raises(InvalidProfile):
        profile_from_dict({"seed": 1})


def test_step_cost_does_not_grow_with_context():
    # O(L*H + L*V) per step: cost at context 1024 stays near cost at 16
    profile = SyntheticProfile(seed=8, vas_curve=(0.2, 0.5, 0.7))
    backend = build_toy_backend(profile, DIMS)

    def median_step_ns(length, reps=80):
        context = [1] * length
        backend.step(context)  # warm
        samples = []
        for _ in range(reps):
            start = time.perf_counter_ns()
            backend.step(context)
            samples.append(time.perf_counter_ns() - start)
        return sorted(samples)[reps // 2]

    short = median_step_ns(16)
    long = median_step_ns(1024)
    assert long < 3.0 * short, (short, long)
