"""Bit-exact binary trace format for offline decoding.

A trace file is a little-endian header followed by fixed-size records, one
per decoding step. The byte layout is the cross-language interface and is
documented field-by-field in docs/trace-format.md; keep the two in sync.

Header:
    offset 0   magic, 4 bytes, b"DAID"
    offset 4   version, u32, currently 1
    offset 8   num_layers L, u32
    offset 12  num_heads H, u32
    offset 16  vocab_size V, u32
    offset 20  logit_mode, u8 (0 = logit lens, 1 = per-layer head, 2 = synthetic)
    offset 21  prompt_len, u32
    offset 25  visual_span count N, u32
    offset 29  N sorted u32 visual span indices
    offset 29 + 4N  step_count, u32

Record (size 4 * (L*V + L*H) + 4 bytes):
    L*V float32 per-layer logits, layer-major
    L*H float32 per-layer/per-head visual attention mass, layer-major
    u32 token the source model itself chose at this step
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .backend import (
    LOGIT_MODE_LOGIT_LENS,
    LOGIT_MODE_PER_LAYER_HEAD,
    LOGIT_MODE_SYNTHETIC,
    BackendDescriptor,
)
from .core import (
    AttentionSummary,
    BackendFailure,
    DaidError,
    ModelDims,
    NonFinite,
    ShapeMismatch,
    StepIntrospection,
    VisualSpan,
)

MAGIC = b"DAID"
VERSION = 1

_MODE_TO_CODE = {
    LOGIT_MODE_LOGIT_LENS: 0,
    LOGIT_MODE_PER_LAYER_HEAD: 1,
    LOGIT_MODE_SYNTHETIC: 2,
}
_CODE_TO_MODE = {v: k for k, v in _MODE_TO_CODE.items()}


class TraceError(DaidError):
    pass


class BadMagic(TraceError):
    pass


class UnsupportedVersion(TraceError):
    pass


class Truncated(TraceError):
    def __init__(self, step: Optional[int]):
        self.step = step
        where = "in header" if step is None else f"at step {step}"
        super().__init__(f"truncated {where}")


class TraceExhausted(TraceError):
    pass


@dataclass(frozen=True)
class TraceHeader:
    dims: ModelDims
    logit_mode: str
    prompt_len: int
    visual_span: VisualSpan
    step_count: int
    version: int = VERSION

    def __post_init__(self):
        if self.logit_mode not in _MODE_TO_CODE:
            raise ShapeMismatch(f"unknown logit_mode {self.logit_mode!r}")
        if self.step_count < 1:
            raise ShapeMismatch("step_count must be >= 1")
        self.visual_span.validate_against(self.prompt_len)

    def record_size(self) -> int:
        d = self.dims
        return 4 * (d.num_layers * d.vocab_size + d.num_layers * d.num_heads) + 4

    def header_size(self) -> int:
        return 33 + 4 * len(self.visual_span)


@dataclass(frozen=True)
class TraceRecord:
    step: StepIntrospection
    chosen_token: int


def _encode_header(header: TraceHeader) -> bytes:
    d = header.dims
    parts = [
        MAGIC,
        struct.pack("<IIIIB", header.version, d.num_layers, d.num_heads, d.vocab_size,
                    _MODE_TO_CODE[header.logit_mode]),
        struct.pack("<II", header.prompt_len, len(header.visual_span)),
        struct.pack(f"<{len(header.visual_span)}I", *header.visual_span.indices),
        struct.pack("<I", header.step_count),
    ]
    return b"".join(parts)


def _encode_record(header: TraceHeader, record: TraceRecord) -> bytes:
    d = header.dims
    step = record.step
    if step.layer_logits.shape != (d.num_layers, d.vocab_size):
        raise ShapeMismatch(
            f"record logits shape {step.layer_logits.shape} does not match header"
        )
    if step.attention.visual_mass.shape != (d.num_layers, d.num_heads):
        raise ShapeMismatch(
            f"record mass shape {step.attention.visual_mass.shape} does not match header"
        )
    if not 0 <= record.chosen_token < d.vocab_size:
        raise ShapeMismatch(f"chosen token {record.chosen_token} out of range")
    return (
        np.ascontiguousarray(step.layer_logits, dtype="<f4").tobytes()
        + np.ascontiguousarray(step.attention.visual_mass, dtype="<f4").tobytes()
        + struct.pack("<I", record.chosen_token)
    )


def write_trace(path, header: TraceHeader, records: Sequence[TraceRecord]) -> None:
    """Serializes records; all shape checks happen before any byte is written."""
    if len(records) != header.step_count:
        raise ShapeMismatch(
            f"got {len(records)} records for step_count {header.step_count}"
        )
    encoded = [_encode_record(header, record) for record in records]
    with open(path, "wb") as fh:
        fh.write(_encode_header(header))
        for blob in encoded:
            fh.write(blob)


def _read_exact(fh, n: int, step: Optional[int]) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise Truncated(step)
    return data


def _parse_header(fh) -> TraceHeader:
    magic = fh.read(4)
    if len(magic) < 4:
        raise Truncated(None)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    version, L, H, V, mode_code = struct.unpack("<IIIIB", _read_exact(fh, 17, None))
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported trace version {version}")
    if mode_code not in _CODE_TO_MODE:
        raise ShapeMismatch(f"unknown logit_mode code {mode_code}")
    prompt_len, span_count = struct.unpack("<II", _read_exact(fh, 8, None))
    span = struct.unpack(f"<{span_count}I", _read_exact(fh, 4 * span_count, None))
    (step_count,) = struct.unpack("<I", _read_exact(fh, 4, None))
    if list(span) != sorted(set(span)):
        raise ShapeMismatch("visual span indices must be sorted and unique")
    return TraceHeader(
        dims=ModelDims(num_layers=L, num_heads=H, vocab_size=V, context_len=prompt_len),
        logit_mode=_CODE_TO_MODE[mode_code],
        prompt_len=prompt_len,
        visual_span=VisualSpan(span),
        step_count=step_count,
        version=version,
    )


def _decode_record(header: TraceHeader, blob: bytes, step_index: int) -> TraceRecord:
    d = header.dims
    n_logits = d.num_layers * d.vocab_size
    n_mass = d.num_layers * d.num_heads
    logits = np.frombuffer(blob, dtype="<f4", count=n_logits, offset=0)
    mass = np.frombuffer(blob, dtype="<f4", count=n_mass, offset=4 * n_logits)
    (chosen,) = struct.unpack_from("<I", blob, 4 * (n_logits + n_mass))
    if not np.all(np.isfinite(logits)) or not np.all(np.isfinite(mass)):
        raise NonFinite(f"non-finite value in record {step_index}")
    step = StepIntrospection(
        layer_logits=logits.reshape(d.num_layers, d.vocab_size),
        attention=AttentionSummary(mass.reshape(d.num_layers, d.num_heads)),
    )
    return TraceRecord(step=step, chosen_token=int(chosen))


def read_trace(path) -> tuple[TraceHeader, Iterator[TraceRecord]]:
    """Parses and validates the header eagerly; records stream lazily.

    The iterator holds the file handle and uses O(record) memory however
    long the trace is.
    """
    fh = open(path, "rb")
    try:
        header = _parse_header(fh)
    except Exception:
        fh.close()
        raise

    def records() -> Iterator[TraceRecord]:
        try:
            size = header.record_size()
            for index in range(header.step_count):
                blob = _read_exact(fh, size, index)
                yield _decode_record(header, blob, index)
        finally:
            fh.close()

    return header, records()


class TraceBackend:
    """Replays a trace as a backend: record t serves the t-th decode step.

    The step index is derived from the context length, so repeated calls
    with an unchanged context (e.g. the two-pass cost simulation) replay
    the same record. Records are fetched by seeking, O(record) memory.
    """

    def __init__(self, path):
        self._fh = open(path, "rb")
        try:
            self.header = _parse_header(self._fh)
        except Exception:
            self._fh.close()
            raise
        self._base = self.header.header_size()
        self._record_size = self.header.record_size()
        self._cache: tuple[int, TraceRecord] | None = None
        self.forward_pass_count = 0
        self.descriptor = BackendDescriptor(
            dims=self.header.dims,
            visual_span=self.header.visual_span,
            logit_mode=self.header.logit_mode,
            name=os.path.basename(str(path)),
        )

    def _record_at(self, index: int) -> TraceRecord:
        if self._cache is not None and self._cache[0] == index:
            return self._cache[1]
        self._fh.seek(self._base + index * self._record_size)
        blob = _read_exact(self._fh, self._record_size, index)
        record = _decode_record(self.header, blob, index)
        self._cache = (index, record)
        return record

    def step(self, context: Sequence[int]) -> StepIntrospection:
        if len(context) == 0:
            raise BackendFailure("context must be non-empty")
        index = len(context) - self.header.prompt_len
        if index < 0:
            raise BackendFailure(
                f"context length {len(context)} shorter than trace prompt "
                f"length {self.header.prompt_len}"
            )
        if index >= self.header.step_count:
            raise TraceExhausted(
                f"trace has {self.header.step_count} steps, step {index} requested"
            )
        self.forward_pass_count += 1
        return self._record_at(index).step

    def source_token(self, index: int) -> int:
        """Token the source model chose at the given step."""
        if not 0 <= index < self.header.step_count:
            raise TraceExhausted(f"step {index} out of range")
        return self._record_at(index).chosen_token

    def source_tokens(self) -> list[int]:
        return [self.source_token(i) for i in range(self.header.step_count)]

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def trace_backend(path) -> TraceBackend:
    return TraceBackend(path)
