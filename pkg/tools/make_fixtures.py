#!/usr/bin/env python3
"""Regenerates every committed fixture under fixtures/ deterministically.

Run from the repository root:

    python tools/make_fixtures.py

Fixture constructions
---------------------

case_flip.json
    A planted profile reproducing the qualitative case-study shape: the
    final layer slightly prefers a "hallucinated" token (planted margin
    ~0.2 in logit space, i.e. roughly a 55/45 split between the two race
    tokens), while the peak-attention layer (25 of 32) strongly prefers
    the grounded token and the minimum-attention early layer (2) carries
    the language-prior push toward the hallucinated token. Greedy decoding
    therefore emits the hallucinated token; anchored calibration with the
    default alpha=0.8, beta=0.2 flips the argmax to the grounded token and
    raises its probability.

seeing_forgetting.json
    Drift profile whose grounded-token boost peaks at layer 7 and decays
    both ways while the hallucinated token gets a flat boost; layer-wise
    greedy probing yields an agreement curve that rises to the peak layer
    and declines after it.

sweep_items.jsonl + sweep_spec.json
    Planted binary scenarios over a 4-token vocabulary (0 = yes, 1 = no,
    2/3 are -10-logit fillers). Margins are chosen so each scenario flips
    from wrong to right (or right to wrong) at a known threshold of one
    hyperparameter while staying indifferent to the other:

    * reinforcement scenarios: final prefers the wrong token by t, the
      spotlight prefers the right one by 1, the shadow is neutral, so the
      decision flips at alpha = t regardless of beta. Thresholds 0.35,
      0.55, 0.75 reward raising alpha up to 0.8.
    * over-reinforcement scenarios: the spotlight prefers the WRONG token
      by 1 while the final layer is right by t, so alpha beyond t breaks
      them. Thresholds 0.9, 1.1 punish alpha above 0.8.
    * suppression scenarios: the spotlight is neutral and the shadow
      pushes the wrong token by 1 more than the final margin t (wrong
      without suppression); the decision flips at beta = t. Thresholds
      0.1, 0.15 reward beta = 0.2.
    * over-suppression scenarios: the shadow pushes the RIGHT token by 1
      more than the final margin t (right without suppression), so beta
      beyond t breaks them. Thresholds 0.3, 0.5 punish beta above 0.2.

    Every scenario appears twice with the roles of yes/no mirrored, so
    accuracy and F1 coincide and the (alpha, beta) = (0.8, 0.2) grid
    point is the unique argmax of both.

bench.json
    A heavier geometry (16 layers, 8 heads, 2048 vocabulary) so backend
    work dominates and strategy overhead ratios are meaningful.

captions.jsonl / pope.jsonl
    Hand-auditable metric fixtures: exactly one hallucinated object out
    of three mentions across two captions (chair_i = 1/3, chair_s = 0.5)
    and a 3/1/1/5 confusion split (accuracy = 0.8, f1 = 0.75).

tiny.daid
    A 5-step trace of the toy backend (3 layers, 2 heads, 8 vocabulary)
    with the source model's own greedy choices stored per record.
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from daid.backend import build_toy_backend, profile_from_dict
from daid.traceio import TraceHeader, TraceRecord, write_trace
from daid.core import ModelDims, VisualSpan

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")
FIXTURES = os.path.join(ROOT, "fixtures")


def dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {os.path.relpath(path, ROOT)}")


def dump_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")
    print(f"wrote {os.path.relpath(path, ROOT)}")


def case_flip_profile():
    layers, peak, valley = 32, 25, 2
    curve = [0.12 + 0.55 * math.exp(-(((l - peak) / 5.0) ** 2)) for l in range(layers)]
    curve[valley] = 0.04
    grounded, hallucinated = 3, 9
    return {
        "seed": 90210,
        "layers": layers,
        "heads": 8,
        "vocab": 32,
        "vas_curve": [round(v, 6) for v in curve],
        "base_noise": 0.02,
        "visual_span": [0, 1, 2, 3],
        "token_preferences": [
            # final layer: hallucinated token narrowly ahead
            {"layer": layers - 1, "token": grounded, "strength": 6.0},
            {"layer": layers - 1, "token": hallucinated, "strength": 6.2007},
            # peak-attention layer: grounded token clearly ahead
            {"layer": peak, "token": grounded, "strength": 10.0},
            {"layer": peak, "token": hallucinated, "strength": 6.0},
            # minimum-attention early layer: language prior toward hallucinated
            {"layer": valley, "token": grounded, "strength": 6.0},
            {"layer": valley, "token": hallucinated, "strength": 8.0},
        ],
        "grounded_token": grounded,
        "hallucinated_token": hallucinated,
    }


def seeing_forgetting_profile():
    layers, peak = 12, 7
    curve = [round(0.1 + 0.6 * math.exp(-(((l - peak) / 3.0) ** 2)), 6) for l in range(layers)]
    return {
        "seed": 4711,
        "layers": layers,
        "heads": 4,
        "vocab": 32,
        "vas_curve": curve,
        "base_noise": 0.02,
        "visual_span": [0, 1],
        "drift": {
            "kind": "seeing_then_forgetting",
            "peak_layer": peak,
            "decay": 0.45,
            "grounded_token": 3,
            "hallucinated_token": 9,
            "strength": 4.0,
            "hallucinated_level": 0.55,
        },
    }


def bench_profile():
    layers = 16
    curve = [round(0.1 + 0.5 * math.exp(-(((l - 10) / 4.0) ** 2)), 6) for l in range(layers)]
    curve[1] = 0.03
    return {
        "seed": 1234,
        "layers": layers,
        "heads": 8,
        "vocab": 2048,
        "vas_curve": curve,
        "base_noise": 0.1,
        "visual_span": [0, 1, 2, 3, 4, 5, 6, 7],
    }


FILLER = -10.0


def sweep_scenarios():
    """(kind, threshold, final_margin, spot_margin, shad_margin) per scenario.

    Margins are (right token logit) - (wrong token logit).
    """
    out = []
    for t in (0.35, 0.55, 0.75):  # flips right at alpha = t
        out.append(("reinforce", t, -t, 1.0, 0.0))
    for t in (0.9, 1.1):  # flips wrong at alpha = t
        out.append(("over_reinforce", t, t, -1.0, 0.0))
    for t in (0.1, 0.15):  # flips right at beta = t
        out.append(("suppress", t, -t, 0.0, -(t + 1.0)))
    for t in (0.3, 0.5):  # flips wrong at beta = t
        out.append(("over_suppress", t, t, 0.0, t + 1.0))
    return out


def sweep_items():
    rows = []
    for kind, threshold, f, s, d in sweep_scenarios():
        for gold in ("yes", "no"):
            right = 0 if gold == "yes" else 1
            wrong = 1 - right

            def vec(margin):
                v = [FILLER, FILLER, FILLER, FILLER]
                v[right] = margin
                v[wrong] = 0.0
                return v

            rows.append({
                "type": "sweep",
                "scenario": kind,
                "threshold": threshold,
                "gold": gold,
                "final": vec(f),
                "spot": vec(s),
                "shad": vec(d),
            })
    return rows


def sweep_spec():
    return {
        "alpha_grid": [0.4, 0.6, 0.8, 1.0, 1.2],
        "beta_grid": [0.0, 0.2, 0.4, 0.6],
        "gamma_grid": [0.1],
        "repetitions": 3,
        "dataset": "sweep_items.jsonl",
        "profile": {
            "seed": 2024,
            "layers": 8,
            "heads": 4,
            "vocab": 4,
            "vas_curve": [0.3, 0.05, 0.35, 0.45, 0.55, 0.8, 0.5, 0.4],
            "visual_span": [0],
        },
    }


def caption_rows():
    return [
        {"type": "caption", "mentioned": ["dog", "cat", "car"], "gold": ["dog", "car"]},
        {"type": "caption", "mentioned": [], "gold": ["bench"]},
    ]


def pope_rows():
    rows = []
    rows += [{"type": "pope", "pred": "yes", "gold": "yes"}] * 3  # TP
    rows += [{"type": "pope", "pred": "yes", "gold": "no"}] * 1   # FP
    rows += [{"type": "pope", "pred": "no", "gold": "yes"}] * 1   # FN
    rows += [{"type": "pope", "pred": "no", "gold": "no"}] * 5    # TN
    return rows


def tiny_trace(path):
    profile, dims = profile_from_dict({
        "seed": 7,
        "layers": 3,
        "heads": 2,
        "vocab": 8,
        "vas_curve": [0.2, 0.7, 0.4],
        "visual_span": [0, 1],
        "base_noise": 1.0,
        "token_preferences": [
            {"layer": 1, "token": 2, "strength": 3.0},
        ],
    })
    backend = build_toy_backend(profile, dims)
    prompt = [1, 2, 3]
    steps, records = 5, []
    context = list(prompt)
    for _ in range(steps):
        step = backend.step(context)
        chosen = int(np.argmax(step.final_logits))
        records.append(TraceRecord(step=step, chosen_token=chosen))
        context.append(chosen)
    header = TraceHeader(
        dims=ModelDims(dims.num_layers, dims.num_heads, dims.vocab_size, len(prompt)),
        logit_mode="synthetic",
        prompt_len=len(prompt),
        visual_span=VisualSpan(profile.visual_span),
        step_count=steps,
    )
    write_trace(path, header, records)
    print(f"wrote {os.path.relpath(path, ROOT)}")


def main():
    dump_json(os.path.join(FIXTURES, "profiles", "case_flip.json"), case_flip_profile())
    dump_json(os.path.join(FIXTURES, "profiles", "seeing_forgetting.json"),
              seeing_forgetting_profile())
    dump_json(os.path.join(FIXTURES, "profiles", "bench.json"), bench_profile())
    dump_jsonl(os.path.join(FIXTURES, "sweep", "sweep_items.jsonl"), sweep_items())
    dump_json(os.path.join(FIXTURES, "sweep", "sweep_spec.json"), sweep_spec())
    dump_jsonl(os.path.join(FIXTURES, "eval", "captions.jsonl"), caption_rows())
    dump_jsonl(os.path.join(FIXTURES, "eval", "pope.jsonl"), pope_rows())
    tiny_trace(os.path.join(FIXTURES, "traces", "tiny.daid"))


if __name__ == "__main__":
    main()
