"""Trace records, text trace parsing, and deterministic synthetic workloads."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, TextIO

LINE_BYTES = 64
PAGE_BYTES = 4096

SYNTH_KINDS = ("stream", "stride", "shared_stream", "pointer_chase_like")

_MASK64 = (1 << 64) - 1


class TraceFormatError(ValueError):
    """Malformed trace input; the message names the offending line."""


@dataclass(frozen=True, slots=True)
class TraceRecord:
    pc: int
    addr: int
    core_id: int
    is_write: bool
    seq: int


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for one synthetic workload.

    kind:
      stream             arithmetic address progression, one PC per core
      stride             same progression, intended for non-unit strides
      shared_stream      shared_fraction of accesses walk a region common to
                         all cores in the same global order; the rest stream
                         through a private per-core region
      pointer_chase_like seeded permutation walk over a per-core region
    """

    kind: str
    length: int
    stride_bytes: int = LINE_BYTES
    region_base: int = 0x10_0000
    shared_fraction: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in SYNTH_KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        if self.length <= 0:
            raise ValueError("length must be > 0")
        if self.kind in ("stream", "stride") and self.stride_bytes == 0:
            raise ValueError(f"stride_bytes must be nonzero for kind {self.kind!r}")
        if not 0.0 <= self.shared_fraction <= 1.0:
            raise ValueError("shared_fraction must lie in [0, 1]")
        if self.region_base < 0:
            raise ValueError("region_base must be non-negative")


def parse_trace(path) -> list[TraceRecord]:
    """Parse a trace file: one `<core> <pc:0xhex> <addr:0xhex> <R|W>` per line.

    `#`-prefixed comment lines and blank lines are ignored. Per-core sequence
    numbers are assigned in file order starting at 0.
    """
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace_lines(fh)


def parse_trace_lines(lines: Iterable[str]) -> list[TraceRecord]:
    records: list[TraceRecord] = []
    next_seq: dict[int, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 4:
            raise TraceFormatError(
                f"line {lineno}: expected 4 fields 'core pc addr R|W', got {len(parts)}"
            )
        core_s, pc_s, addr_s, rw = parts
        try:
            core = int(core_s, 10)
        except ValueError:
            raise TraceFormatError(f"line {lineno}: bad core id {core_s!r}") from None
        if core < 0:
            raise TraceFormatError(f"line {lineno}: bad core id {core_s!r}")
        try:
            pc = int(pc_s, 16)
            addr = int(addr_s, 16)
        except ValueError:
            raise TraceFormatError(
                f"line {lineno}: pc/addr must be hex, got {pc_s!r} {addr_s!r}"
            ) from None
        if rw not in ("R", "W"):
            raise TraceFormatError(f"line {lineno}: access type must be R or W, got {rw!r}")
        seq = next_seq.get(core, 0)
        next_seq[core] = seq + 1
        records.append(TraceRecord(pc=pc, addr=addr, core_id=core, is_write=(rw == "W"), seq=seq))
    return records


def interleave(per_core: Sequence[Sequence[TraceRecord]]) -> Iterator[TraceRecord]:
    """Round-robin merge of per-core streams, one record per core per turn."""
    if not per_core:
        return
    longest = max(len(seq) for seq in per_core)
    for i in range(longest):
        for seq in per_core:
            if i < len(seq):
                yield seq[i]


def format_record(rec: TraceRecord) -> str:
    rw = "W" if rec.is_write else "R"
    return f"{rec.core_id} {rec.pc:#x} {rec.addr:#x} {rw}"


def write_trace(path, per_core: Sequence[Sequence[TraceRecord]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_trace_lines(fh, per_core)


def write_trace_lines(fh: TextIO, per_core: Sequence[Sequence[TraceRecord]]) -> None:
    for rec in interleave(per_core):
        fh.write(format_record(rec) + "\n")


def split_by_core(records: Iterable[TraceRecord], n_cores: int | None = None) -> list[list[TraceRecord]]:
    """Group a flat record stream into per-core streams, preserving order."""
    buckets: dict[int, list[TraceRecord]] = {}
    max_core = -1
    for rec in records:
        buckets.setdefault(rec.core_id, []).append(rec)
        max_core = max(max_core, rec.core_id)
    count = n_cores if n_cores is not None else max_core + 1
    if max_core >= count:
        raise TraceFormatError(f"record core id {max_core} exceeds core count {count}")
    return [buckets.get(c, []) for c in range(count)]


def _mix(seed: int, salt: int) -> int:
    x = (seed & _MASK64) * 0x9E3779B97F4A7C15 + (salt + 1) * 0xBF58476D1CE4E5B9
    x &= _MASK64
    x ^= x >> 31
    return x & _MASK64


def _page_span(byte_span: int) -> int:
    return ((byte_span + PAGE_BYTES - 1) // PAGE_BYTES) * PAGE_BYTES


def generate(spec: SyntheticSpec, n_cores: int) -> list[list[TraceRecord]]:
    """Generate one record stream per core; pure function of (spec, n_cores)."""
    spec.validate()
    if n_cores < 1:
        raise ValueError("n_cores must be >= 1")
    if spec.kind == "shared_stream":
        return _gen_shared_stream(spec, n_cores)
    if spec.kind == "pointer_chase_like":
        return _gen_pointer_chase(spec, n_cores)
    return _gen_strided(spec, n_cores)


def _strided_addrs(base: int, length: int, stride: int) -> list[int]:
    start = base if stride > 0 else base + (length - 1) * (-stride)
    return [start + i * stride for i in range(length)]


def _gen_strided(spec: SyntheticSpec, n_cores: int) -> list[list[TraceRecord]]:
    span = _page_span(spec.length * abs(spec.stride_bytes) + abs(spec.stride_bytes))
    out = []
    for core in range(n_cores):
        base = spec.region_base + core * span
        pc = 0x40_0000 + core * 0x100
        addrs = _strided_addrs(base, spec.length, spec.stride_bytes)
        out.append(
            [TraceRecord(pc, addr, core, False, i) for i, addr in enumerate(addrs)]
        )
    return out


def _gen_shared_stream(spec: SyntheticSpec, n_cores: int) -> list[list[TraceRecord]]:
    step = abs(spec.stride_bytes) or LINE_BYTES
    f = spec.shared_fraction
    n_shared = int(f * spec.length)
    shared_base = spec.region_base
    shared_span = _page_span((n_shared + 1) * step)
    priv_span = _page_span((spec.length - n_shared + 1) * step)
    shared_pc = 0x50_0000
    out = []
    for core in range(n_cores):
        priv_base = shared_base + shared_span + core * priv_span
        priv_pc = 0x40_0000 + core * 0x100
        records = []
        shared_i = 0
        priv_i = 0
        acc = 0  # running count of shared slots handed out so far
        for i in range(spec.length):
            # even spread: slot i is shared iff floor((i+1)f) advances
            nxt = int((i + 1) * f)
            if nxt > acc:
                acc = nxt
                records.append(
                    TraceRecord(shared_pc, shared_base + shared_i * step, core, False, i)
                )
                shared_i += 1
            else:
                records.append(
                    TraceRecord(priv_pc, priv_base + priv_i * step, core, False, i)
                )
                priv_i += 1
        out.append(records)
    return out


def _gen_pointer_chase(spec: SyntheticSpec, n_cores: int) -> list[list[TraceRecord]]:
    span = _page_span(spec.length * LINE_BYTES)
    out = []
    for core in range(n_cores):
        rng = random.Random(_mix(spec.seed, core))
        order = list(range(spec.length))
        rng.shuffle(order)
        base = spec.region_base + core * span
        pc = 0x60_0000 + core * 0x100
        out.append(
            [TraceRecord(pc, base + slot * LINE_BYTES, core, False, i) for i, slot in enumerate(order)]
        )
    return out
