"""Behavioral model of the hierarchical asynchronous encoding pipeline.

The pipeline encodes neuron addresses two bits per hierarchy level.  For
``levels`` = L it serves N = 4**L neurons (the default, L = 3, is the
64-neuron geometry).  Per level it models: a masking stage (C-element-gated
request latches that decouple the slow neuron handshake from the fast
arbiter), a four-input arbitration stage, a static high-capacity pipeline
latch holding the one-hot winner, a dual-rail encoder, and completion
detectors both after the masking stage (the V validity flags) and after the
encoder (the D data flags).  A second pipeline stage merges the per-level
dual-rail codes into the output packet, and an acknowledge generator resets
the levels whose clusters have drained: low always, medium/high only when
the validity flags below them are clear, so consecutive events inside one
low-level cluster never re-arbitrate the upper levels.

Every signal transition is timestamped from a per-gate delay table
(unit-delay defaults, overridable per gate for fault injection) and written
to the kernel trace; ``check_timing`` audits three pipeline timing rules
from the trace alone:

* ``latch-close-before-data-reset`` -- a stage's latch must close before its
  input data resets,
* ``reopen-after-data-reset``       -- a stage must reopen only after its
  input data has reset,
* ``validity-before-data-cd``       -- a validity flag must already be high
  whenever its level's data flag rises (the masking CD answers as soon as
  requests are masked, while the data CD waits for the arbiter, the pipeline
  latch and the encoder, so nominal delays satisfy this easily),

plus a ``null-spacer`` audit that every dual-rail bus alternates between
valid and NULL.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .kernel import (
    Event,
    HandshakeChannel,
    HsAction,
    Kernel,
    TimingViolation,
    TraceRecord,
    violations_to_json,
)


class NotOneHot(ValueError):
    """A QDI encoder input had more than one bit set."""


# -- primitive elements ------------------------------------------------------


def c_element(a: int, b: int, prev: int) -> int:
    """State-holding gate: output follows the inputs only when they agree."""
    return a if a == b else prev


@dataclass(frozen=True)
class DualRailValue:
    """Per-bit (true_rail, false_rail) pairs, least-significant bit first.

    A bit is defined when exactly one rail is high; the word is NULL when
    every rail is low.  Both rails high is a fault and is never produced.
    """

    rails: tuple[tuple[int, int], ...]

    @classmethod
    def null(cls, width: int) -> "DualRailValue":
        return cls(tuple((0, 0) for _ in range(width)))

    @classmethod
    def encode(cls, value: int, width: int) -> "DualRailValue":
        return cls(tuple((1, 0) if (value >> i) & 1 else (0, 1) for i in range(width)))

    @property
    def width(self) -> int:
        return len(self.rails)

    @property
    def is_null(self) -> bool:
        return all(t == 0 and f == 0 for t, f in self.rails)

    @property
    def is_valid(self) -> bool:
        return all(t ^ f for t, f in self.rails)

    def value(self) -> Optional[int]:
        """The encoded integer, or None unless every bit is defined."""
        if not self.is_valid:
            return None
        return sum((t << i) for i, (t, f) in enumerate(self.rails))


class CdKind(Enum):
    OR_BASED = "or"
    XOR_BASED = "xor"


@dataclass
class CDBlock:
    kind: CdKind
    width: int


def completion_detect(block: CDBlock, inputs) -> bool:
    """Evaluate a completion detector.

    For bit-vector inputs the OR kind reports any active line, and the XOR
    kind reports the parity tree's output: high for a one-hot pattern, low
    when two grants overlap.  For dual-rail inputs, the XOR kind reports
    full validity (exactly one rail high per bit) and the OR kind reports
    any rail active.
    """
    if isinstance(inputs, DualRailValue):
        if block.kind is CdKind.OR_BASED:
            return any(t or f for t, f in inputs.rails)
        return inputs.is_valid
    bits = inputs & ((1 << block.width) - 1)
    if block.kind is CdKind.OR_BASED:
        return bits != 0
    return bool(bin(bits).count("1") & 1)


@dataclass
class MaskingStage:
    """Per-neuron masked-request latches gated by the cluster grant.

    A latch sets only while both the neuron request and the cluster grant
    are high, and clears only when its own request falls, so dropping the
    grant mid-handshake leaves in-flight masked requests up until their own
    four-phase cycle completes.
    """

    width: int
    state: int = 0

    def step(self, neuron_reqs: int, cluster_grant: int) -> int:
        mask = (1 << self.width) - 1
        reqs = neuron_reqs & mask
        if cluster_grant:
            self.state |= reqs
        self.state &= reqs  # request fall clears the latch
        return self.state


def mask_requests(neuron_reqs: int, cluster_grant: int, stage: MaskingStage) -> int:
    """Advance the masking stage one step; returns the masked bit-vector."""
    return stage.step(neuron_reqs, cluster_grant)


def qdi_encode(one_hot: int, width: int = 4) -> DualRailValue:
    """Encode a one-hot word to dual-rail binary; all-zero encodes to NULL."""
    out_width = max(1, (width - 1).bit_length())
    if one_hot == 0:
        return DualRailValue.null(out_width)
    if one_hot & (one_hot - 1):
        raise NotOneHot(f"input {one_hot:#b} has more than one bit set")
    if one_hot >= (1 << width):
        raise NotOneHot(f"input {one_hot:#b} wider than {width} bits")
    return DualRailValue.encode(one_hot.bit_length() - 1, out_width)


@dataclass
class AckGeneratorInputs:
    v_m: bool
    v_l: bool
    d_h: bool
    d_m: bool
    d_l: bool


@dataclass
class AckGeneratorState:
    ack: int = 0
    held_levels: set = field(default_factory=lambda: {"high", "medium", "low"})
    last_resets: set = field(default_factory=set)


def ack_generator_step(inputs: AckGeneratorInputs, packet_captured: bool, state: AckGeneratorState) -> int:
    """One evaluation of the acknowledge generator.

    A captured packet asserts the acknowledge and always resets the low
    level; the medium level resets only once no valid request remains below
    it (V_L low), and the high level additionally needs V_M low.  Without a
    packet the acknowledge holds its value.
    """
    if not packet_captured:
        state.last_resets = set()
        return state.ack
    resets = {"low"}
    if not inputs.v_l:
        resets.add("medium")
        if not inputs.v_m:
            resets.add("high")
    state.held_levels = {"high", "medium", "low"} - resets
    state.last_resets = resets
    state.ack = 1
    return state.ack


# -- delay model ---------------------------------------------------------------

DEFAULT_DELAYS = {
    "mask_gate": 1,
    "c_element": 1,
    "cd_mask": 2,  # post-masking CD (V flags)
    "arbiter": 200,  # four-input arbitration: depth-2 tree of two-input cells
    "hc_capture": 1,
    "latch_close": 1,
    "qdi_encode": 2,
    "cd_data": 2,  # post-encoder CD (D flags)
    "merge": 1,  # second-stage join
    "cd_packet": 2,
    "ack_gen": 1,
    "grant_feedback": 1,
    "neuron_release": 1,
    "arb_release": 1,
    "latch_reopen": 1,
}


def _resolve_delays(overrides: Optional[dict]) -> dict:
    delays = dict(DEFAULT_DELAYS)
    if overrides:
        unknown = set(overrides) - set(DEFAULT_DELAYS)
        if unknown:
            raise ValueError(f"unknown delay keys {sorted(unknown)}; known: {sorted(DEFAULT_DELAYS)}")
        delays.update(overrides)
    return delays


# -- the pipeline -------------------------------------------------------------


@dataclass(frozen=True)
class PipelinePacket:
    address: int
    valid: bool
    t_out: int
    neuron_id: int

    def address_bits(self, width: int = 6) -> str:
        return format(self.address, f"0{width}b")


class HatPipeline:
    """Timestamped model of the L-level encoding pipeline for N = 4**L neurons."""

    def __init__(self, levels: int = 3, delays: Optional[dict] = None, trace: bool = True):
        if levels < 1:
            raise ValueError("need at least one hierarchy level")
        self.levels = levels
        self.n = 4 ** levels
        self.delays = _resolve_delays(delays)
        self.kernel = Kernel(trace_capacity=None if trace else 0)
        self.kernel.add_component("pipeline", self._handle)
        self.out_channel = HandshakeChannel("out", kernel=self.kernel, carries_data=True)
        self.packets: list[PipelinePacket] = []
        self.arb_counts = [0] * levels
        self._held: list[Optional[int]] = [None] * levels  # latched digit per level
        self._queue: list[tuple[int, int, int]] = []  # (t, seq, neuron)
        self._seq = 0
        self._cycle_busy = False
        self._ready = 0
        self._sig: dict[str, int] = {}
        for k in range(levels):
            self._sig[f"hc1.l{k}.latch"] = 1  # latches start open
        self._sig["hc2.latch"] = 1

    # -- helpers ---------------------------------------------------------

    def _digit(self, neuron: int, level: int) -> int:
        return (neuron >> (2 * (self.levels - 1 - level))) & 3

    def _emit(self, t: int, signal: str, new: int) -> None:
        old = self._sig.get(signal, 0)
        if old != new:
            self.kernel.record("pipeline", signal, old, new, at=t)
            self._sig[signal] = new

    def inject(self, neuron: int, at: int) -> None:
        if not (0 <= neuron < self.n):
            raise ValueError(f"neuron {neuron} out of range for {self.n}-neuron pipeline")
        self.kernel.schedule(at, "pipeline", ("spike", neuron))

    def run(self) -> list[PipelinePacket]:
        self.kernel.run()
        return self.packets

    # -- event handling --------------------------------------------------

    def _handle(self, kernel: Kernel, event: Event) -> None:
        tag = event.payload[0]
        if tag == "spike":
            neuron = event.payload[1]
            self._emit(event.at, f"req.n{neuron}", 1)
            insort(self._queue, (event.at, self._seq, neuron))
            self._seq += 1
            if not self._cycle_busy:
                self._cycle_busy = True
                kernel.schedule(max(event.at, self._ready), "pipeline", ("cycle",))
        elif tag == "cycle":
            self._run_cycle(kernel, event.at)

    def _pop_next(self) -> tuple[int, int]:
        """Next queued event, preferring the held low cluster, then upward.

        This is the grant-hold rule: a cluster keeps its grant until none of
        its neurons are requesting.
        """
        for depth in range(self.levels - 1, 0, -1):
            if any(d is None for d in self._held[:depth]):
                continue
            for i, (t, _, neuron) in enumerate(self._queue):
                if all(self._digit(neuron, k) == self._held[k] for k in range(depth)):
                    self._queue.pop(i)
                    return neuron, t
        t, _, neuron = self._queue.pop(0)
        return neuron, t

    def _run_cycle(self, kernel: Kernel, now: int) -> None:
        neuron, t_req = self._pop_next()
        d = self.delays
        L = self.levels
        start = max(now, t_req)

        # which levels re-arbitrate: from the first digit change down
        first = L - 1
        for k in range(L):
            if self._held[k] is None or self._held[k] != self._digit(neuron, k):
                first = k
                break
        arb_levels = range(first, L)

        # safety net: release stale latched digits on re-arbitrated levels
        # (normally upper levels were already released in the return phase)
        entry = start
        for k in arb_levels:
            if self._held[k] is not None and k < L - 1:
                t_null = entry + d["arb_release"]
                self._emit(t_null, f"hc1.l{k}.data", 0)
                self._emit(t_null + d["qdi_encode"], f"rails.l{k}", 0)
                self._emit(t_null + d["qdi_encode"] + d["cd_data"], f"ackgen.d.l{k}", 0)
                self._emit(t_null + d["latch_reopen"], f"hc1.l{k}.latch", 1)
                self._held[k] = None
                entry = t_null + d["latch_reopen"]

        # forward wave: mask, arbitrate, capture, encode, flag -- top to low
        t_rails_latest = 0
        for k in arb_levels:
            t_masked = entry + d["mask_gate"] + d["c_element"]
            self._emit(t_masked, f"masked.l{k}", 1)
            if k >= 1:
                self._emit(t_masked + d["cd_mask"], f"ackgen.v.l{k}", 1)
            t_onehot = t_masked + d["arbiter"]
            self.arb_counts[k] += 1
            self._emit(t_onehot, f"hc1.l{k}.data", 1)
            t_capture = t_onehot + d["hc_capture"]
            self._emit(t_capture + d["latch_close"], f"hc1.l{k}.latch", 0)
            t_rails = t_capture + d["qdi_encode"]
            self._emit(t_rails, f"rails.l{k}", 1)
            self._emit(t_rails + d["cd_data"], f"ackgen.d.l{k}", 1)
            t_rails_latest = max(t_rails_latest, t_rails)
            self._held[k] = self._digit(neuron, k)
            entry = t_onehot  # the one-hot grant enables the next level's masking

        # packet assembly: per-level dual-rail codes merge in the second stage
        address = 0
        for k in range(L):
            code = qdi_encode(1 << self._held[k], 4)
            address |= code.value() << (2 * (L - 1 - k))
        t_pkt_rails = t_rails_latest + d["merge"]
        self._emit(t_pkt_rails, "hc2.data", 1)
        t_pkt_capture = t_pkt_rails + d["hc_capture"]
        self._emit(t_pkt_capture + d["latch_close"], "hc2.latch", 0)
        t_pkt_valid = t_pkt_capture + d["cd_packet"]
        t_ack_rise = t_pkt_valid + d["ack_gen"]
        self._emit(t_ack_rise, "ackgen.ack", 1)

        self.packets.append(PipelinePacket(address=address, valid=True, t_out=t_pkt_valid, neuron_id=neuron))

        # output channel four-phase handshake (bundled data)
        self.out_channel.set_data_valid(True, at=t_pkt_rails)
        self.out_channel.advance(HsAction.REQ_UP, at=t_pkt_valid)
        self.out_channel.advance(HsAction.ACK_UP, at=t_pkt_valid + 1)

        # return phase: grant feedback, neuron release, low-level data reset
        t_gfb = t_pkt_capture + d["grant_feedback"]
        t_req_fall = t_gfb + d["neuron_release"]
        self._emit(t_req_fall, f"req.n{neuron}", 0)
        t_masked_fall = t_req_fall + d["mask_gate"]
        low = L - 1
        self._emit(t_masked_fall, f"masked.l{low}", 0)
        t_onehot_null = t_req_fall + d["arb_release"]
        self._emit(t_onehot_null, f"hc1.l{low}.data", 0)
        t_rails_null = t_onehot_null + d["qdi_encode"]
        self._emit(t_rails_null, f"rails.l{low}", 0)
        self._emit(t_rails_null + d["cd_data"], f"ackgen.d.l{low}", 0)

        # the acknowledge deassert comes from the packet-capture path and
        # reopens the first stage; the data reset above travels independently
        t_ack_fall = t_pkt_capture + d["cd_packet"] + d["ack_gen"]
        self._emit(t_ack_fall, "ackgen.ack", 0)
        t_reopen = t_ack_fall + d["latch_reopen"]
        self._emit(t_reopen, f"hc1.l{low}.latch", 1)

        # packet bus returns to NULL
        t_pkt_null = t_rails_null + d["merge"]
        self._emit(t_pkt_null, "hc2.data", 0)
        t_pkt_flag_fall = t_pkt_null + d["cd_packet"]
        t_hc2_reopen = t_pkt_flag_fall + d["latch_reopen"]
        self._emit(t_hc2_reopen, "hc2.latch", 1)
        self.out_channel.advance(HsAction.REQ_DOWN, at=t_pkt_null)
        self.out_channel.set_data_valid(False, at=t_pkt_null)
        self.out_channel.advance(HsAction.ACK_DOWN, at=t_pkt_flag_fall)

        # validity flags fall bottom-up while their clusters are drained,
        # releasing the level above each cleared flag
        self._held[low] = None
        v_fall_time = t_masked_fall + d["cd_mask"]
        for k in range(L - 1, 0, -1):
            if any(self._held[j] is None for j in range(k)):
                continue
            cluster_pending = any(
                all(self._digit(nrn, j) == self._held[j] for j in range(k))
                for _, _, nrn in self._queue
            )
            if cluster_pending:
                break  # V_k stays high; levels above keep their grants
            self._emit(v_fall_time, f"ackgen.v.l{k}", 0)
            lvl = k - 1
            if self._held[lvl] is not None:
                t_null = v_fall_time + d["arb_release"]
                self._emit(t_null, f"hc1.l{lvl}.data", 0)
                self._emit(t_null + d["qdi_encode"], f"rails.l{lvl}", 0)
                self._emit(t_null + d["qdi_encode"] + d["cd_data"], f"ackgen.d.l{lvl}", 0)
                self._emit(t_null + d["latch_reopen"], f"hc1.l{lvl}.latch", 1)
                self._held[lvl] = None
            v_fall_time += d["cd_mask"]

        self._ready = max(t_reopen, t_hc2_reopen)
        if self._queue:
            kernel.schedule(self._ready, "pipeline", ("cycle",))
        else:
            self._cycle_busy = False


@dataclass
class PipelineRun:
    packets: list[PipelinePacket]
    trace: list[TraceRecord]
    arb_counts: list[int]
    levels: int
    n: int


def run_pipeline(events: Sequence[tuple[int, int]], delays: Optional[dict] = None, levels: int = 3) -> PipelineRun:
    """Push (neuron_id, t) events through a fresh pipeline; returns packets and trace."""
    pipe = HatPipeline(levels=levels, delays=delays)
    for neuron, t in events:
        pipe.inject(neuron, t)
    pipe.run()
    return PipelineRun(
        packets=pipe.packets,
        trace=pipe.kernel.trace_records(),
        arb_counts=pipe.arb_counts,
        levels=levels,
        n=pipe.n,
    )


# -- trace checkers -----------------------------------------------------------


def _edges(records: list[TraceRecord], signal: str, rising: bool) -> list[int]:
    if rising:
        return [r.time for r in records if r.signal == signal and r.old == 0 and r.new == 1]
    return [r.time for r in records if r.signal == signal and r.old == 1 and r.new == 0]


def check_timing(trace: Sequence[TraceRecord]) -> list[TimingViolation]:
    """Audit a pipeline trace against the three pipeline timing rules.

    Also reports ``null-spacer`` faults (a dual-rail bus transitioning out
    of the valid/NULL alternation).  A clean nominal run returns an empty
    list.
    """
    records = sorted(trace, key=lambda r: r.time)
    violations: list[TimingViolation] = []
    signals = {r.signal for r in records}

    stages = sorted(s[: -len(".latch")] for s in signals if s.endswith(".latch"))
    for stage in stages:
        closes = _edges(records, f"{stage}.latch", rising=False)
        reopens = _edges(records, f"{stage}.latch", rising=True)
        data_falls = _edges(records, f"{stage}.data", rising=False)
        for k in range(min(len(closes), len(data_falls))):
            if closes[k] >= data_falls[k]:
                violations.append(
                    TimingViolation(
                        "latch-close-before-data-reset",
                        closes[k],
                        f"{stage}: latch closed at {closes[k]} but input data reset at {data_falls[k]}",
                    )
                )
        for k in range(min(len(reopens), len(data_falls))):
            if reopens[k] <= data_falls[k]:
                violations.append(
                    TimingViolation(
                        "reopen-after-data-reset",
                        reopens[k],
                        f"{stage}: latch reopened at {reopens[k]} but input data reset at {data_falls[k]}",
                    )
                )

    # the acknowledge generator reads the validity flag the moment the data
    # flag settles, so V must already be high whenever D rises
    level_ids = sorted(int(s.rsplit(".l", 1)[1]) for s in signals if s.startswith("ackgen.v.l"))
    for k in level_ids:
        v_sig, d_sig = f"ackgen.v.l{k}", f"ackgen.d.l{k}"
        v_level = 0
        # a tie is a violation ("changed faster" is strict): at equal times
        # evaluate the data flag first
        pair = sorted(
            (r for r in records if r.signal in (v_sig, d_sig)),
            key=lambda r: (r.time, r.signal != d_sig),
        )
        for r in pair:
            if r.signal == v_sig:
                v_level = r.new
            elif r.old == 0 and r.new == 1 and not v_level:
                violations.append(
                    TimingViolation(
                        "validity-before-data-cd",
                        r.time,
                        f"level {k}: data flag rose at {r.time} before the validity flag settled",
                    )
                )

    for sig in sorted(s for s in signals if s.startswith("rails.") or s == "hc2.data"):
        last = 0
        for r in records:
            if r.signal != sig:
                continue
            if r.old != last or r.new == r.old:
                violations.append(
                    TimingViolation("null-spacer", r.time, f"{sig}: transition {r.old}->{r.new} out of sequence")
                )
            last = r.new
    return violations
