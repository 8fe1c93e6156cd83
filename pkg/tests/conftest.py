import numpy as np
import pytest

from daid.core import AttentionSummary, StepIntrospection


def random_step(rng: np.random.Generator, num_layers: int, num_heads: int,
                vocab: int, logit_scale: float = 3.0) -> StepIntrospection:
    """Random but valid step; attention mass is quantized to 1/64 so head
    means are exact in any float width."""
    logits = rng.normal(0.0, logit_scale, size=(num_layers, vocab)).astype(np.float32)
    mass = rng.integers(0, 65, size=(num_layers, num_heads)).astype(np.float32) / 64.0
    return StepIntrospection(layer_logits=logits, attention=AttentionSummary(mass))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
