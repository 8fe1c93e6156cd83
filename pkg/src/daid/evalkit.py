"""Metrics, layer probes, hyperparameter sweeps, and the latency benchmark.

Caption hallucination metrics use exact string matching on lowercased
object names; synonym handling belongs to external tooling and is out of
scope here. Binary-QA scoring treats "yes" as the positive class.

Sweeps and probes run on planted synthetic scenarios committed as JSONL
fixtures, so every number they produce is hermetic and reproducible from
seeds alone.
"""

from __future__ import annotations

import json
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .backend import SyntheticProfile, _MIX_A, _MIX_B, _U64
from .calibration import decode_step
from .core import (
    AttentionSummary,
    DecodeConfig,
    EmptyDataset,
    ModelDims,
    StepIntrospection,
)
from .decoder import STRATEGY_GREEDY, StopCriteria, generate

YES = "yes"
NO = "no"
SWEEP_YES_TOKEN = 0
SWEEP_NO_TOKEN = 1


@dataclass(frozen=True)
class CaptionEval:
    """Objects mentioned by one generated caption vs. the annotated set."""

    mentioned: frozenset[str]
    ground_truth: frozenset[str]

    def __init__(self, mentioned: Iterable[str], ground_truth: Iterable[str]):
        object.__setattr__(self, "mentioned", frozenset(s.strip().lower() for s in mentioned))
        object.__setattr__(self, "ground_truth", frozenset(s.strip().lower() for s in ground_truth))

    @property
    def hallucinated(self) -> frozenset[str]:
        return self.mentioned - self.ground_truth


@dataclass(frozen=True)
class BinaryQaRecord:
    predicted: str
    gold: str

    def __post_init__(self):
        for value in (self.predicted, self.gold):
            if value not in (YES, NO):
                raise ValueError(f"binary answer must be 'yes' or 'no', got {value!r}")


def chair_i(evals: Sequence[CaptionEval]) -> float:
    """Hallucinated-object fraction over all mentioned objects.

    An empty mention pool (no objects mentioned anywhere) scores 0 by
    convention.
    """
    mentioned = sum(len(e.mentioned) for e in evals)
    if mentioned == 0:
        return 0.0
    hallucinated = sum(len(e.hallucinated) for e in evals)
    return hallucinated / mentioned


def chair_s(evals: Sequence[CaptionEval]) -> float:
    """Fraction of captions containing at least one hallucinated object."""
    if not evals:
        raise EmptyDataset("chair_s needs at least one caption")
    bad = sum(1 for e in evals if e.hallucinated)
    return bad / len(evals)


def pope_scores(records: Sequence[BinaryQaRecord], positive: str = YES) -> tuple[float, float]:
    """(accuracy, f1) with "yes" as the positive class unless overridden.

    When precision or recall has a zero denominator, f1 is 0 by convention.
    """
    if not records:
        raise EmptyDataset("pope_scores needs at least one record")
    if positive not in (YES, NO):
        raise ValueError(f"positive class must be 'yes' or 'no', got {positive!r}")
    tp = sum(1 for r in records if r.predicted == positive and r.gold == positive)
    fp = sum(1 for r in records if r.predicted == positive and r.gold != positive)
    fn = sum(1 for r in records if r.predicted != positive and r.gold == positive)
    tn = sum(1 for r in records if r.predicted != positive and r.gold != positive)
    accuracy = (tp + tn) / len(records)
    if tp + fp == 0 or tp + fn == 0:
        return accuracy, 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0.0:
        return accuracy, 0.0
    return accuracy, 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# layer probe


@dataclass(frozen=True)
class ProbeResult:
    """Greedy tokens decoded from each layer's logits plus gold agreement."""

    tokens_by_layer: tuple[tuple[int, ...], ...]
    agreement: tuple[float, ...]


def layer_probe(
    backend,
    prompts: Sequence[Sequence[int]],
    n_steps: int,
    gold_tokens: Union[int, Sequence[int]],
) -> ProbeResult:
    """Decodes n_steps greedily from every layer's logits, per prompt.

    Agreement per layer is the fraction of (prompt, step) pairs where the
    layer's greedy token equals the planted gold token; its complement
    (disagreement) serves as the per-layer hallucination-rate proxy on
    planted profiles. Probing the final layer is by construction identical
    to the greedy strategy.
    """
    num_layers = backend.descriptor.dims.num_layers
    if isinstance(gold_tokens, int):
        gold = [gold_tokens] * n_steps
    else:
        gold = list(gold_tokens)
        if len(gold) != n_steps:
            raise ValueError("gold_tokens length must equal n_steps")
    tokens_by_layer: list[tuple[int, ...]] = []
    agreement: list[float] = []
    for layer in range(num_layers):
        emitted: list[int] = []
        hits = 0
        for prompt in prompts:
            context = list(prompt)
            for t in range(n_steps):
                step = backend.step(context)
                token = int(np.argmax(step.layer_logits[layer]))
                emitted.append(token)
                hits += int(token == gold[t])
                context.append(token)
        tokens_by_layer.append(tuple(emitted))
        agreement.append(hits / (len(prompts) * n_steps))
    return ProbeResult(tokens_by_layer=tuple(tokens_by_layer), agreement=tuple(agreement))


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    alpha_grid: tuple[float, ...]
    beta_grid: tuple[float, ...]
    gamma_grid: tuple[float, ...]
    repetitions: int
    profile: SyntheticProfile
    dims: ModelDims

    def __post_init__(self):
        if not (self.alpha_grid and self.beta_grid and self.gamma_grid):
            raise ValueError("sweep grids must be non-empty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class SweepItem:
    """One planted binary scenario: logit vectors for the three roles.

    The item's vectors are installed at the profile's nominal anchor
    layers; the engine re-derives the anchors from jittered attention, so
    a sweep exercises the full selection + calibration pipeline.
    """

    gold: str
    final: tuple[float, ...]
    spot: tuple[float, ...]
    shad: tuple[float, ...]


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    beta: float
    gamma: float
    accuracy: float
    f1: float


def load_sweep_items(path) -> list[SweepItem]:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("type") != "sweep":
                raise ValueError(f"{path}:{line_no}: expected a sweep item")
            items.append(
                SweepItem(
                    gold=obj["gold"],
                    final=tuple(float(x) for x in obj["final"]),
                    spot=tuple(float(x) for x in obj["spot"]),
                    shad=tuple(float(x) for x in obj["shad"]),
                )
            )
    if not items:
        raise EmptyDataset(f"no sweep items in {path}")
    return items


def _sweep_step(spec: SweepSpec, item: SweepItem, item_index: int, rep: int) -> StepIntrospection:
    dims = spec.dims
    curve = np.asarray(spec.profile.vas_curve, dtype=np.float64)
    spot_layer = int(np.argmax(curve))
    shadow_layer = int(np.argmin(curve[:spot_layer])) if spot_layer > 0 else 0
    logits = np.zeros((dims.num_layers, dims.vocab_size), dtype=np.float32)
    logits[shadow_layer] = np.asarray(item.shad, dtype=np.float32)
    logits[spot_layer] = np.asarray(item.spot, dtype=np.float32)
    logits[dims.num_layers - 1] = np.asarray(item.final, dtype=np.float32)
    mix = ((rep + 1) * _MIX_A + (item_index + 1) * _MIX_B) % _U64
    rng = np.random.Generator(np.random.Philox(key=[spec.profile.seed % _U64, mix]))
    jitter = np.minimum(spec.profile.head_jitter, np.minimum(curve, 1.0 - curve))
    unit = rng.uniform(-1.0, 1.0, size=dims.num_heads)
    mass = curve[:, None] + unit[None, :] * jitter[:, None]
    return StepIntrospection(
        layer_logits=logits,
        attention=AttentionSummary(mass.astype(np.float32)),
    )


def _sweep_point(spec: SweepSpec, items: Sequence[SweepItem],
                 alpha: float, beta: float, gamma: float) -> SweepRow:
    accs, f1s = [], []
    for rep in range(spec.repetitions):
        cfg = DecodeConfig(alpha=alpha, beta=beta, gamma=gamma)
        records = []
        for index, item in enumerate(items):
            step = _sweep_step(spec, item, index, rep)
            token, _ = decode_step(step, cfg)
            predicted = YES if token == SWEEP_YES_TOKEN else NO
            records.append(BinaryQaRecord(predicted=predicted, gold=item.gold))
        acc, f1 = pope_scores(records)
        accs.append(acc)
        f1s.append(f1)
    return SweepRow(
        alpha=alpha, beta=beta, gamma=gamma,
        accuracy=sum(accs) / len(accs), f1=sum(f1s) / len(f1s),
    )


def run_sweep(spec: SweepSpec, items: Sequence[SweepItem], threads: int = 1) -> list[SweepRow]:
    """One row per (alpha, beta, gamma) grid point, averaged over repetitions.

    Rows come back in grid order regardless of thread scheduling, so the
    CSV is bit-stable across reruns with fixed seeds.
    """
    points = list(product(spec.alpha_grid, spec.beta_grid, spec.gamma_grid))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda p: _sweep_point(spec, items, *p), points))
    return [_sweep_point(spec, items, *point) for point in points]


def sweep_spec_from_dict(obj: dict) -> tuple[SweepSpec, str]:
    """Parses a sweep spec JSON; returns (spec, dataset_path)."""
    from .backend import profile_from_dict

    profile, dims = profile_from_dict(obj["profile"])
    spec = SweepSpec(
        alpha_grid=tuple(float(x) for x in obj["alpha_grid"]),
        beta_grid=tuple(float(x) for x in obj["beta_grid"]),
        gamma_grid=tuple(float(x) for x in obj["gamma_grid"]),
        repetitions=int(obj.get("repetitions", 1)),
        profile=profile,
        dims=dims,
    )
    return spec, obj["dataset"]


# ---------------------------------------------------------------------------
# latency benchmark


@dataclass(frozen=True)
class BenchRow:
    strategy: str
    ns_per_token: float
    forward_passes: int
    ratio_vs_greedy: float


def bench_latency(
    backend,
    prompt: Sequence[int],
    n_tokens: int,
    strategies: Sequence[str],
    cfg: Optional[DecodeConfig] = None,
    runs: int = 5,
    warmup: int = 1,
) -> list[BenchRow]:
    """Median ns/token over `runs` timed generations per strategy.

    Warm-up generations are excluded from timing. Ratios are against the
    greedy strategy, which is benchmarked even if not requested.
    """
    if n_tokens < 64:
        raise ValueError("benchmark needs n_tokens >= 64")
    cfg = cfg or DecodeConfig()
    stop = StopCriteria(max_new_tokens=n_tokens)
    ordered = list(strategies)
    if STRATEGY_GREEDY not in ordered:
        ordered.insert(0, STRATEGY_GREEDY)
    medians: dict[str, float] = {}
    passes: dict[str, int] = {}
    for strategy in ordered:
        for _ in range(warmup):
            generate(backend, prompt, cfg, stop, strategy=strategy)
        samples = []
        for _ in range(runs):
            result = generate(backend, prompt, cfg, stop, strategy=strategy)
            samples.append(result.elapsed_ns / len(result.tokens))
            passes[strategy] = result.forward_passes
        medians[strategy] = statistics.median(samples)
    greedy_ns = medians[STRATEGY_GREEDY]
    return [
        BenchRow(
            strategy=strategy,
            ns_per_token=medians[strategy],
            forward_passes=passes[strategy],
            ratio_vs_greedy=medians[strategy] / greedy_ns,
        )
        for strategy in ordered
    ]


# ---------------------------------------------------------------------------
# dataset and table IO


def load_dataset_jsonl(path) -> tuple[list[CaptionEval], list[BinaryQaRecord]]:
    """Reads the mixed metric dataset format: caption and pope lines."""
    captions: list[CaptionEval] = []
    pope: list[BinaryQaRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            kind = obj.get("type")
            if kind == "caption":
                captions.append(CaptionEval(obj["mentioned"], obj["gold"]))
            elif kind == "pope":
                pope.append(BinaryQaRecord(predicted=obj["pred"].lower(), gold=obj["gold"].lower()))
            else:
                raise ValueError(f"{path}:{line_no}: unknown record type {kind!r}")
    return captions, pope


def sweep_rows_to_csv(rows: Sequence[SweepRow]) -> str:
    lines = ["alpha,beta,gamma,accuracy,f1"]
    for r in rows:
        lines.append(f"{r.alpha!r},{r.beta!r},{r.gamma!r},{r.accuracy!r},{r.f1!r}")
    return "\n".join(lines) + "\n"


def bench_rows_to_csv(rows: Sequence[BenchRow]) -> str:
    lines = ["strategy,ns_per_token,forward_passes,ratio_vs_greedy"]
    for r in rows:
        lines.append(f"{r.strategy},{r.ns_per_token!r},{r.forward_passes},{r.ratio_vs_greedy!r}")
    return "\n".join(lines) + "\n"


def probe_to_csv(result: ProbeResult) -> str:
    lines = ["layer,agreement"]
    for layer, agreement in enumerate(result.agreement):
        lines.append(f"{layer},{agreement!r}")
    return "\n".join(lines) + "\n"
