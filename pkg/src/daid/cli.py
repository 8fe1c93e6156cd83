"""Command-line entry point: decode, probe, sweep, bench, eval, trace.

Exit codes: 0 on success, 1 on runtime errors (printed to stderr with an
"error:" prefix), 2 on usage errors. Machine-readable outputs (JSON/CSV)
use 0-based layer indices; human-readable summary lines print layers
1-based and say so.

A config file passed with --config holds KEY=VALUE lines whose keys match
long flag names (e.g. alpha=0.5); explicit flags override the file, the
file overrides presets, presets override built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .anchoring import compute_vas
from .backend import build_toy_backend, load_profile
from .core import (
    SHADOW_FALLBACK_SKIP,
    DaidError,
    DecodeConfig,
)
from .decoder import STRATEGIES, STRATEGY_DAID, StopCriteria, generate
from .evalkit import (
    bench_latency,
    bench_rows_to_csv,
    chair_i,
    chair_s,
    layer_probe,
    load_dataset_jsonl,
    load_sweep_items,
    pope_scores,
    probe_to_csv,
    run_sweep,
    sweep_rows_to_csv,
    sweep_spec_from_dict,
)
from .traceio import read_trace, trace_backend

DIAG_SCHEMA = "daid-diag/1"
EVAL_SCHEMA = "daid-eval/1"

DEFAULTS = {"alpha": 0.8, "beta": 0.2, "gamma": 0.1}
PRESETS = {"pope": {"gamma": 0.9}}


class UsageError(Exception):
    pass


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{line_no}: expected KEY=VALUE")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _resolve(name: str, flag_value, config: dict[str, str], preset: Optional[str],
             cast=float):
    if flag_value is not None:
        return flag_value
    if name in config:
        try:
            return cast(config[name])
        except ValueError as exc:
            raise UsageError(f"config value for {name}: {exc}") from exc
    if preset and name in PRESETS.get(preset, {}):
        return PRESETS[preset][name]
    return DEFAULTS.get(name)


def _parse_tokens(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad token list {text!r}: {exc}") from exc


def _thread_count(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("DAID_THREADS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"DAID_THREADS: {exc}") from exc
    return os.cpu_count() or 1


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _diag_json(result, prompt, cfg: DecodeConfig) -> str:
    steps = []
    for index, diag in enumerate(result.per_step):
        entry = {
            "step": index,
            "chosen": diag.chosen_token,
            "mask_count": diag.mask_count,
            "p_final": diag.p_final_of_chosen,
            "p_daid": diag.p_daid_of_chosen,
        }
        if diag.anchors is not None:
            entry["spotlight"] = diag.anchors.spotlight
            entry["shadow"] = diag.anchors.shadow
            entry["fallback_used"] = diag.anchors.fallback_used
        steps.append(entry)
    payload = {
        "schema": DIAG_SCHEMA,
        "strategy": result.strategy,
        "prompt": list(prompt),
        "tokens": list(result.tokens),
        "forward_passes": result.forward_passes,
        "config": {
            "alpha": cfg.alpha,
            "beta": cfg.beta,
            "gamma": cfg.gamma,
            "shadow_constraint": cfg.enforce_shadow_before_spotlight,
            "sampling": cfg.sampling,
            "temperature": cfg.temperature,
            "seed": cfg.seed,
        },
        "steps": steps,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def _open_backend(args) -> tuple[object, list[int]]:
    if args.trace:
        backend = trace_backend(args.trace)
        if args.prompt_tokens is not None:
            prompt = _parse_tokens(args.prompt_tokens)
            if len(prompt) != backend.header.prompt_len:
                raise UsageError(
                    f"prompt length {len(prompt)} != trace prompt_len "
                    f"{backend.header.prompt_len}"
                )
        else:
            prompt = [0] * backend.header.prompt_len
        return backend, prompt
    profile, dims = load_profile(args.toy_profile)
    prompt = _parse_tokens(args.prompt_tokens) if args.prompt_tokens is not None else [1, 2, 3]
    return build_toy_backend(profile, dims), prompt


def cmd_decode(args) -> int:
    config = _parse_config_file(args.config) if args.config else {}
    cfg = DecodeConfig(
        alpha=_resolve("alpha", args.alpha, config, args.preset),
        beta=_resolve("beta", args.beta, config, args.preset),
        gamma=_resolve("gamma", args.gamma, config, args.preset),
        enforce_shadow_before_spotlight=not args.no_shadow_constraint,
        shadow_fallback=SHADOW_FALLBACK_SKIP,
        sampling="temperature" if args.temperature is not None else "greedy",
        temperature=args.temperature if args.temperature is not None else 1.0,
        seed=args.seed,
    )
    backend, prompt = _open_backend(args)
    max_new = args.max_new_tokens
    if args.trace:
        max_new = min(max_new, backend.header.step_count)  # a replay cannot outrun its trace
    result = generate(
        backend,
        prompt,
        cfg,
        StopCriteria(max_new_tokens=max_new),
        strategy=args.strategy,
    )
    text = _diag_json(result, prompt, cfg)
    if args.json_out:
        _write_text(args.json_out, text)
        print("tokens:", " ".join(str(t) for t in result.tokens))
        print(f"wrote diagnostics to {args.json_out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_probe(args) -> int:
    profile, dims = load_profile(args.toy_profile)
    backend = build_toy_backend(profile, dims)
    if args.gold_token is not None:
        gold = args.gold_token
    elif profile.drift is not None:
        gold = profile.drift.grounded_token
    else:
        raise UsageError("profile has no drift gold token; pass --gold-token")
    prompt = _parse_tokens(args.prompt_tokens) if args.prompt_tokens is not None else [1, 2, 3]
    result = layer_probe(backend, [prompt], args.steps, gold)
    _write_text(args.out, probe_to_csv(result))
    best = int(np.argmax(result.agreement))
    print(f"peak agreement {result.agreement[best]:.3f} at layer {best + 1} "
          f"of {dims.num_layers} (1-based)")
    return 0


def cmd_sweep(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        spec_obj = json.load(fh)
    spec, dataset = sweep_spec_from_dict(spec_obj)
    if not os.path.isabs(dataset):
        # relative paths resolve against the spec file first, then the CWD
        beside_spec = os.path.join(os.path.dirname(os.path.abspath(args.spec)), dataset)
        dataset = beside_spec if os.path.exists(beside_spec) else dataset
    items = load_sweep_items(dataset)
    rows = run_sweep(spec, items, threads=_thread_count(args.threads))
    _write_text(args.out, sweep_rows_to_csv(rows))
    best = max(rows, key=lambda r: r.f1)
    print(f"best f1 {best.f1:.4f} at alpha={best.alpha} beta={best.beta} gamma={best.gamma}")
    return 0


def cmd_bench(args) -> int:
    profile, dims = load_profile(args.toy_profile)
    backend = build_toy_backend(profile, dims)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise UsageError(f"unknown strategy {strategy!r}")
    rows = bench_latency(
        backend, [1, 2, 3], args.tokens, strategies, runs=args.runs
    )
    _write_text(args.out, bench_rows_to_csv(rows))
    for row in rows:
        print(f"{row.strategy:8s} {row.ns_per_token / 1000.0:10.1f} us/token  "
              f"passes={row.forward_passes}  x{row.ratio_vs_greedy:.2f} vs greedy")
    return 0


def cmd_eval(args) -> int:
    captions, pope = load_dataset_jsonl(args.dataset)
    if args.metric == "chair":
        payload = {
            "schema": EVAL_SCHEMA,
            "metric": "chair",
            "chair_i": chair_i(captions),
            "chair_s": chair_s(captions),
            "captions": len(captions),
        }
    else:
        accuracy, f1 = pope_scores(pope)
        payload = {
            "schema": EVAL_SCHEMA,
            "metric": "pope",
            "accuracy": accuracy,
            "f1": f1,
            "records": len(pope),
        }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
    _write_text(args.out, text)
    if args.out and args.out != "-":
        sys.stdout.write(text)
    return 0


def cmd_trace(args) -> int:
    if args.trace_cmd == "inspect":
        header, records = read_trace(args.path)
        info = {
            "version": header.version,
            "layers": header.dims.num_layers,
            "heads": header.dims.num_heads,
            "vocab": header.dims.vocab_size,
            "logit_mode": header.logit_mode,
            "prompt_len": header.prompt_len,
            "visual_span": list(header.visual_span.indices),
            "step_count": header.step_count,
        }
        if args.vas:
            vas = []
            source_tokens = []
            for record in records:
                vas.append([float(v) for v in compute_vas(record.step.attention)])
                source_tokens.append(record.chosen_token)
            info["vas"] = vas
            info["source_tokens"] = source_tokens
        else:
            records.close()
        sys.stdout.write(json.dumps(info, sort_keys=True, separators=(",", ":")) + "\n")
        return 0
    # validate: stream every record so truncation/corruption surfaces
    header, records = read_trace(args.path)
    count = sum(1 for _ in records)
    print(f"ok: {count} steps, {header.dims.num_layers} layers, "
          f"{header.dims.num_heads} heads, {header.dims.vocab_size} vocab")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="daid",
        description="Dual-anchor introspective decoding engine and benchmark kit",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_decode = sub.add_parser("decode", help="generate tokens from a trace or toy profile")
    source = p_decode.add_mutually_exclusive_group(required=True)
    source.add_argument("--trace", help="replay a recorded trace file")
    source.add_argument("--toy-profile", help="drive the synthetic toy backend")
    p_decode.add_argument("--alpha", type=float, default=None,
                          help="spotlight reinforcement intensity (default 0.8)")
    p_decode.add_argument("--beta", type=float, default=None,
                          help="shadow suppression intensity (default 0.2)")
    p_decode.add_argument("--gamma", type=float, default=None,
                          help="plausibility threshold (default 0.1)")
    p_decode.add_argument("--no-shadow-constraint", action="store_true",
                          help="ablation: let the shadow search cover all layers")
    p_decode.add_argument("--strategy", choices=STRATEGIES, default=STRATEGY_DAID)
    p_decode.add_argument("--max-new-tokens", type=int, default=20)
    p_decode.add_argument("--prompt-tokens", default=None,
                          help="comma-separated prompt token ids")
    p_decode.add_argument("--preset", choices=sorted(PRESETS), default=None,
                          help="named recipe, e.g. 'pope' sets gamma=0.9")
    p_decode.add_argument("--temperature", type=float, default=None,
                          help="sample with this temperature instead of greedy argmax")
    p_decode.add_argument("--seed", type=int, default=0)
    p_decode.add_argument("--config", default=None, help="KEY=VALUE config file")
    p_decode.add_argument("--json-out", default=None, help="write diagnostics JSON here")
    p_decode.set_defaults(func=cmd_decode)

    p_probe = sub.add_parser("probe", help="per-layer greedy agreement curve")
    p_probe.add_argument("--toy-profile", required=True)
    p_probe.add_argument("--out", required=True, help="CSV path ('-' for stdout)")
    p_probe.add_argument("--steps", type=int, default=10)
    p_probe.add_argument("--gold-token", type=int, default=None)
    p_probe.add_argument("--prompt-tokens", default=None)
    p_probe.set_defaults(func=cmd_probe)

    p_sweep = sub.add_parser("sweep", help="hyperparameter grid sweep")
    p_sweep.add_argument("--spec", required=True, help="sweep spec JSON")
    p_sweep.add_argument("--out", required=True, help="CSV path ('-' for stdout)")
    p_sweep.add_argument("--threads", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_bench = sub.add_parser("bench", help="latency benchmark across strategies")
    p_bench.add_argument("--toy-profile", required=True)
    p_bench.add_argument("--tokens", type=int, default=256)
    p_bench.add_argument("--runs", type=int, default=5)
    p_bench.add_argument("--strategies", default="greedy,daid,dola,vcdsim")
    p_bench.add_argument("--out", required=True, help="CSV path ('-' for stdout)")
    p_bench.set_defaults(func=cmd_bench)

    p_eval = sub.add_parser("eval", help="score a metrics dataset")
    p_eval.add_argument("--dataset", required=True, help="JSONL dataset path")
    p_eval.add_argument("--metric", choices=("chair", "pope"), required=True)
    p_eval.add_argument("--out", default=None, help="JSON path ('-' for stdout)")
    p_eval.set_defaults(func=cmd_eval)

    p_trace = sub.add_parser("trace", help="inspect or validate a trace file")
    trace_sub = p_trace.add_subparsers(dest="trace_cmd", required=True)
    p_inspect = trace_sub.add_parser("inspect", help="print the header as JSON")
    p_inspect.add_argument("path")
    p_inspect.add_argument("--vas", action="store_true",
                           help="also recompute per-step visual attention scores")
    p_inspect.set_defaults(func=cmd_trace)
    p_validate = trace_sub.add_parser("validate", help="exit 0 iff the file is well-formed")
    p_validate.add_argument("path")
    p_validate.set_defaults(func=cmd_trace)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DaidError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
