import os
import struct

import numpy as np
import pytest

from daid.anchoring import compute_vas
from daid.core import (
    BackendFailure,
    DecodeConfig,
    ModelDims,
    NonFinite,
    ShapeMismatch,
    VisualSpan,
)
from daid.decoder import STRATEGY_GREEDY, STRATEGY_VCDSIM, StopCriteria, generate
from daid.traceio import (
    BadMagic,
    TraceExhausted,
    TraceHeader,
    TraceRecord,
    Truncated,
    UnsupportedVersion,
    read_trace,
    trace_backend,
    write_trace,
)

from conftest import random_step

FIXTURE = os.path.join(os.path.dirname(__file__), "..", "fixtures", "traces", "tiny.daid")


def make_trace(rng, num_layers=2, num_heads=1, vocab=3, steps=1, prompt_len=2,
               span=(0,)):
    header = TraceHeader(
        dims=ModelDims(num_layers, num_heads, vocab, prompt_len),
        logit_mode="logit_lens",
        prompt_len=prompt_len,
        visual_span=VisualSpan(span),
        step_count=steps,
    )
    records = [
        TraceRecord(
            step=random_step(rng, num_layers, num_heads, vocab),
            chosen_token=int(rng.integers(vocab)),
        )
        for _ in range(steps)
    ]
    return header, records


def assert_struct_equal(a: TraceRecord, b: TraceRecord):
    assert np.array_equal(a.step.layer_logits, b.step.layer_logits)
    assert np.array_equal(a.step.attention.visual_mass, b.step.attention.visual_mass)
    assert a.chosen_token == b.chosen_token


def test_round_trip_bit_exact(tmp_path, rng):
    path = tmp_path / "t.daid"
    header, records = make_trace(rng, 3, 2, 5, steps=4)
    write_trace(path, header, records)
    got_header, got_records = read_trace(path)
    assert got_header == header
    got = list(got_records)
    assert len(got) == 4
    for a, b in zip(records, got):
        assert_struct_equal(a, b)


def test_round_trip_randomized_shapes(tmp_path, rng):
    for case in range(40):
        num_layers = int(rng.integers(1, 41))
        num_heads = int(rng.integers(1, 33))
        vocab = int(rng.integers(2, 4097))
        if num_layers * (vocab + num_heads) > 60_000:
            vocab = max(2, 60_000 // num_layers - num_heads)
        steps = int(rng.integers(1, 4))
        path = tmp_path / f"case{case}.daid"
        header, records = make_trace(rng, num_layers, num_heads, vocab, steps=steps,
                                     prompt_len=int(rng.integers(1, 6)), span=(0,))
        write_trace(path, header, records)
        got_header, got_records = read_trace(path)
        assert got_header == header
        for a, b in zip(records, got_records):
            assert_struct_equal(a, b)


def test_file_size_arithmetic(tmp_path, rng):
    # header is 33 + 4*span bytes; each record 4*(L*V + L*H) + 4
    path = tmp_path / "size.daid"
    header, records = make_trace(rng, 2, 1, 3, steps=1, span=(0, 1))
    write_trace(path, header, records)
    expected = (33 + 4 * 2) + 1 * (4 * (2 * 3 + 2 * 1) + 4)
    assert os.path.getsize(path) == expected
    assert header.header_size() + header.step_count * header.record_size() == expected


def test_record_count_mismatch_fails_before_write(tmp_path, rng):
    path = tmp_path / "missing.daid"
    header, records = make_trace(rng, steps=3)
    with pytest.raises(ShapeMismatch):
        write_trace(path, header, records[:2])
    assert not path.exists()


def test_record_shape_mismatch_fails_before_write(tmp_path, rng):
    path = tmp_path / "badshape.daid"
    header, records = make_trace(rng, num_layers=2, vocab=3, steps=2)
    bad = TraceRecord(step=random_step(rng, 2, 1, 4), chosen_token=0)
    with pytest.raises(ShapeMismatch):
        write_trace(path, header, [records[0], bad])
    assert not path.exists()


def test_bad_magic(tmp_path, rng):
    path = tmp_path / "x.daid"
    header, records = make_trace(rng)
    write_trace(path, header, records)
    blob = bytearray(path.read_bytes())
    blob[0:4] = b"XAID"
    path.write_bytes(blob)
    with pytest.raises(BadMagic):
        read_trace(path)


def test_unsupported_version(tmp_path, rng):
    path = tmp_path / "v9.daid"
    header, records = make_trace(rng)
    write_trace(path, header, records)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<I", blob, 4, 9)
    path.write_bytes(blob)
    with pytest.raises(UnsupportedVersion):
        read_trace(path)


def test_truncated_mid_record_reports_step(tmp_path, rng):
    path = tmp_path / "trunc.daid"
    header, records = make_trace(rng, steps=3)
    write_trace(path, header, records)
    full = path.read_bytes()
    cut = header.header_size() + header.record_size() + header.record_size() // 2
    path.write_bytes(full[:cut])
    got_header, got_records = read_trace(path)  # header still parses
    with pytest.raises(Truncated) as err:
        list(got_records)
    assert err.value.step == 1
    assert "truncated at step 1" in str(err.value)


def test_truncated_header(tmp_path, rng):
    path = tmp_path / "hdr.daid"
    header, records = make_trace(rng)
    write_trace(path, header, records)
    path.write_bytes(path.read_bytes()[:10])
    with pytest.raises(Truncated) as err:
        read_trace(path)
    assert err.value.step is None


def test_non_finite_record_rejected(tmp_path, rng):
    path = tmp_path / "nan.daid"
    header, records = make_trace(rng, num_layers=1, num_heads=1, vocab=2, steps=1)
    write_trace(path, header, records)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<f", blob, header.header_size(), float("nan"))
    path.write_bytes(blob)
    _, got_records = read_trace(path)
    with pytest.raises(NonFinite):
        list(got_records)


def test_trace_backend_replay_matches_records(tmp_path, rng):
    path = tmp_path / "replay.daid"
    header, records = make_trace(rng, 3, 2, 6, steps=4, prompt_len=2)
    write_trace(path, header, records)
    with trace_backend(path) as backend:
        context = [0, 0]
        for expected in records:
            step = backend.step(context)
            assert np.array_equal(step.layer_logits, expected.step.layer_logits)
            context.append(0)
        with pytest.raises(TraceExhausted):
            backend.step(context)
        with pytest.raises(BackendFailure):
            backend.step([0])  # shorter than the recorded prompt


def test_trace_backend_vas_matches_reader(tmp_path, rng):
    path = tmp_path / "vas.daid"
    header, records = make_trace(rng, 4, 3, 5, steps=3, prompt_len=1)
    write_trace(path, header, records)
    _, got_records = read_trace(path)
    reader_vas = [compute_vas(r.step.attention) for r in got_records]
    with trace_backend(path) as backend:
        context = [0]
        for step_vas in reader_vas:
            replayed = compute_vas(backend.step(context).attention)
            assert np.max(np.abs(replayed - step_vas)) < 1e-5
            context.append(0)


def test_greedy_replay_recovers_source_tokens(tmp_path, rng):
    # records whose chosen token is the stored argmax replay to themselves
    path = tmp_path / "greedy.daid"
    header, records = make_trace(rng, 2, 1, 7, steps=5, prompt_len=3)
    records = [
        TraceRecord(step=r.step, chosen_token=int(np.argmax(r.step.final_logits)))
        for r in records
    ]
    write_trace(path, header, records)
    with trace_backend(path) as backend:
        result = generate(backend, [0, 0, 0], DecodeConfig(alpha=0, beta=0, gamma=0),
                          StopCriteria(5), strategy=STRATEGY_GREEDY)
        assert list(result.tokens) == backend.source_tokens()


def test_two_pass_simulation_replays_same_record(tmp_path, rng):
    path = tmp_path / "vcd.daid"
    header, records = make_trace(rng, 2, 1, 7, steps=4, prompt_len=1)
    write_trace(path, header, records)
    with trace_backend(path) as backend:
        greedy = generate(backend, [0], DecodeConfig(), StopCriteria(4),
                          strategy=STRATEGY_GREEDY)
    with trace_backend(path) as backend:
        vcd = generate(backend, [0], DecodeConfig(), StopCriteria(4),
                       strategy=STRATEGY_VCDSIM)
        assert vcd.tokens == greedy.tokens
        assert vcd.forward_passes == 2 * len(vcd.tokens)


def test_committed_fixture_parses_and_replays():
    header, records = read_trace(FIXTURE)
    records = list(records)
    assert header.version == 1
    assert header.step_count == len(records) == 5
    with trace_backend(FIXTURE) as backend:
        result = generate(backend, [0] * header.prompt_len,
                          DecodeConfig(alpha=0, beta=0, gamma=0),
                          StopCriteria(header.step_count), strategy=STRATEGY_GREEDY)
        assert list(result.tokens) == backend.source_tokens()


def test_committed_exporter_fixture_conforms():
    # written by the separate exporter package; regenerate with
    #   node exporter/dist/cli.js export --model tiny-vlm \
    #     --prompt "a laptop on a desk" --image exporter/test/fixtures/sample_image.bin \
    #     --out fixtures/traces/exporter_tiny.daid --max-new-tokens 4
    path = os.path.join(os.path.dirname(__file__), "..", "fixtures", "traces",
                        "exporter_tiny.daid")
    header, records = read_trace(path)
    records = list(records)
    assert header.logit_mode == "logit_lens"
    assert header.step_count == len(records) == 4
    dims = header.dims
    from daid.core import validate_introspection
    for record in records:
        validate_introspection(record.step, dims)
        mass = record.step.attention.visual_mass
        assert mass.min() >= 0.0 and mass.max() <= 1.0
    with trace_backend(path) as backend:
        replay = generate(backend, [0] * header.prompt_len,
                          DecodeConfig(alpha=0, beta=0, gamma=0),
                          StopCriteria(header.step_count), strategy=STRATEGY_GREEDY)
        assert list(replay.tokens) == backend.source_tokens()
