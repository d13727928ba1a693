"""Asynchronous CAM behavioral model: matching, cycle time, and energy.

The array uses NOR-type match semantics (an entry's match line can charge
only when every cell matches the key) sensed by current-race amplifiers.  A
search is a full four-phase handshake; what varies is how completion is
detected and which power-saving mechanisms are enabled:

* ``DelayLine``  -- the conventional scheme.  A configurable delay line,
  calibrated so it covers the dummy entry's worst observed completion time,
  times the acknowledge.  Robustness is bought with a fixed margin paid on
  every search.
* ``Cscd``       -- completion is sensed from the supply current: the
  acknowledge fires once the aggregate current falls below a threshold
  (expressed as a fraction of the dummy entry's charging current) plus a
  sensor delay, so each search pays only its own completion time.

* ``feedback``    -- a matching entry's amplifier shuts its own current
  source at the sense threshold, capping the match-line swing (default 0.6
  of full swing) instead of charging to the rail.
* ``speculative`` -- per-cell sense nodes close the current source before
  the request even arrives when a mismatch sits in the last ``n_tail`` bits
  (the cells adjacent to the amplifier), eliminating that entry's pull-down
  burn entirely.

Timing is modeled on the subtick grid with per-array entry jitter (device
mismatch, drawn once per array) and a per-search global operating-noise
multiplier whose amplitude grows mildly with array size (supply noise from
simultaneous switching); the noise is shared by all entries of a search so
match flags stay exact while completion times vary.  Energy coefficients
are calibration knobs, documented as fitted rather than derived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .kernel import TimingViolation, TraceRecord
from .workloads import SplitMix64


class IndexOutOfRange(IndexError):
    pass


class WidthMismatch(ValueError):
    pass


class Unsatisfiable(RuntimeError):
    """No delay-line setting eliminates timing errors."""


class InsufficientMargin(RuntimeError):
    """Some matching case's current change falls below the sense threshold."""


class SearchProtocolError(RuntimeError):
    """A search was issued while the previous handshake was incomplete."""


# -- parameters ---------------------------------------------------------------


@dataclass(frozen=True)
class CamTimingParams:
    """Charge-time and handshake timing knobs (subticks).

    ``noise_base``/``noise_per_level`` set the per-search operating-noise
    amplitude ``noise_base + noise_per_level * log4(n_entries)`` (capped at
    0.3): larger arrays see more simultaneous-switching supply noise, which
    is why the conventional delay line needs a larger margin at 512 entries
    than at 16.
    """

    base_charge: float = 40.0  # nominal full-match charge time
    dummy_slowdown: float = 1.2  # dummy sized slower than the slowest entry
    entry_jitter: float = 0.10  # per-entry device mismatch, one draw per array
    noise_base: float = 0.05
    noise_per_level: float = 0.04
    sl_setup: float = 2.0  # search-line valid to request rise
    ack_to_req_fall: float = 2.0
    return_cost: float = 10.0  # request fall + ML precharge + ack fall
    min_clock_pulse: float = 4.0
    min_reset_pulse: float = 4.0

    def search_noise(self, n_entries: int) -> float:
        levels = math.log(max(n_entries, 4), 4)
        return min(0.3, self.noise_base + self.noise_per_level * levels)


@dataclass(frozen=True)
class EnergyParams:
    """Per-search energy pricing.  Fitted calibration knobs, not predictions."""

    e_ml_full: float = 1.0  # full match-line swing, per entry
    e_pulldown_per_subtick: float = 0.005  # per mismatching entry per subtick on
    e_searchline_per_toggle_row: float = 0.02  # per toggled SL/SLB line per entry row
    e_dummy: float = 1.0
    e_cscd: float = 0.05  # completion machinery: current sensor
    e_delay_line: float = 0.40  # completion machinery: delay-line buffer chain
    swing_cap: float = 0.6  # feedback stops the ML at the sense threshold
    pd_current: float = 0.8  # pull-down supply draw relative to a charging ML

    def validate(self) -> None:
        for name, v in self.__dict__.items():
            if not v > 0:
                raise ValueError(f"energy parameter {name} must be positive")


@dataclass(frozen=True)
class DelayLine:
    """Configurable-delay completion.  ``delay`` in subticks; ``None`` applies
    the default margin to the array's dummy delay (the uncalibrated rule of
    thumb).  ``steps`` records the 8-bit setting when calibrated."""

    delay: Optional[float] = None
    steps: Optional[int] = None
    margin: float = 1.3


@dataclass(frozen=True)
class Cscd:
    sense_threshold: float = 0.5  # fraction of the dummy charging current
    sensor_delay: float = 1.0  # register/propagation after the crossing
    lag: float = 1.0  # first-order response of the sense amplifier


CompletionMode = Union[DelayLine, Cscd]


class CloseCause(Enum):
    NONE = "none"
    FEEDBACK = "feedback"
    SPECULATIVE = "speculative"
    DUMMY_OFF = "dummy-off"


@dataclass
class MlsaState:
    ml_level: float
    current_source_on: bool
    close_cause: CloseCause


@dataclass
class EnergyLedger:
    e_ml_charge: float
    e_pulldown: float
    e_searchline: float
    e_dummy: float
    e_cscd: float

    @property
    def total(self) -> float:
        return self.e_ml_charge + self.e_pulldown + self.e_searchline + self.e_dummy + self.e_cscd


_CAUSE_CODES = {1: CloseCause.FEEDBACK, 2: CloseCause.SPECULATIVE, 3: CloseCause.DUMMY_OFF}


@dataclass
class SearchResult:
    match_flags: np.ndarray  # bool per entry
    cycle_time: int  # subticks, request rise to acknowledge fall
    energy: EnergyLedger
    cause_codes: np.ndarray  # int8 codes, decoded by close_causes
    false_timing: bool
    t_req: float
    t_off: float
    t_ack_rise: float
    t_ack_fall: float
    # raw physical measures, kept so energy can be re-priced
    swings: np.ndarray = field(repr=False, default=None)
    pd_durations: np.ndarray = field(repr=False, default=None)
    sl_toggles: int = field(repr=False, default=0)
    completion_is_cscd: bool = field(repr=False, default=False)

    @property
    def close_causes(self) -> list[CloseCause]:
        return [_CAUSE_CODES[int(c)] for c in self.cause_codes]

    def matches(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.match_flags)]

    def mlsa_states(self) -> list[MlsaState]:
        return [
            MlsaState(ml_level=float(s), current_source_on=False, close_cause=c)
            for s, c in zip(self.swings, self.close_causes)
        ]


def energy_of_search(result: SearchResult, params: EnergyParams) -> EnergyLedger:
    """Price a search's raw physical measures with the given coefficients."""
    params.validate()
    n = len(result.swings)
    return EnergyLedger(
        e_ml_charge=float(np.sum(result.swings)) * params.e_ml_full,
        e_pulldown=float(np.sum(result.pd_durations)) * params.e_pulldown_per_subtick,
        e_searchline=params.e_searchline_per_toggle_row * result.sl_toggles * n,
        e_dummy=params.e_dummy,
        e_cscd=params.e_cscd if result.completion_is_cscd else params.e_delay_line,
    )


# -- the array ----------------------------------------------------------------


class CamArray:
    """A seeded CAM array with one completion mode and optional mechanisms.

    ``speculative`` is the tail length in bits (0 disables the mechanism);
    the tail is the low-order bits, the cells adjacent to the amplifier.
    """

    def __init__(
        self,
        n_entries: int,
        width: int = 11,
        seed: int = 0,
        completion: Optional[CompletionMode] = None,
        feedback: bool = False,
        speculative: int = 0,
        timing: CamTimingParams = CamTimingParams(),
        energy: EnergyParams = EnergyParams(),
        trace: bool = False,
    ):
        if n_entries < 1:
            raise ValueError("need at least one entry")
        if not (1 <= width <= 63):
            raise ValueError("width must be in [1, 63]")
        if not (0 <= speculative <= width):
            raise ValueError("speculative tail must be in [0, width]")
        if not timing.dummy_slowdown > 1:
            raise ValueError("dummy_slowdown must exceed 1")
        energy.validate()
        self.n_entries = n_entries
        self.width = width
        self.seed = seed
        self.completion: CompletionMode = completion if completion is not None else DelayLine()
        self.feedback = feedback
        self.n_tail = speculative
        self.timing = timing
        self.energy = energy
        self.stored = np.zeros(n_entries, dtype=np.uint64)
        rng = SplitMix64(seed ^ 0xCA3)
        jit = timing.entry_jitter
        self._charge = np.array(
            [timing.base_charge * (1.0 + rng.uniform(-jit, jit)) for _ in range(n_entries)]
        )
        self.dummy_delay = timing.dummy_slowdown * float(self._charge.max())
        self.dummy_delay_nominal = timing.dummy_slowdown * timing.base_charge
        self._search_rng = SplitMix64(seed ^ 0x5EA7C4)
        self._noise = timing.search_noise(n_entries)
        self._prev_key: Optional[int] = None
        self._clock = 0.0
        self._in_flight = False
        self.trace_enabled = trace
        self.trace: list[TraceRecord] = []
        self.name = f"cam{n_entries}x{width}"

    # -- storage ---------------------------------------------------------

    def write_entry(self, index: int, word: int) -> None:
        """Store a word.  Writing charges no search-side energy."""
        if not (0 <= index < self.n_entries):
            raise IndexOutOfRange(f"entry {index} out of range for {self.n_entries} entries")
        if not (0 <= word < (1 << self.width)):
            raise WidthMismatch(f"word {word:#x} does not fit in {self.width} bits")
        self.stored[index] = word

    def read_entry(self, index: int) -> int:
        if not (0 <= index < self.n_entries):
            raise IndexOutOfRange(f"entry {index} out of range for {self.n_entries} entries")
        return int(self.stored[index])

    def load(self, words: Iterable[int]) -> None:
        for i, w in enumerate(words):
            self.write_entry(i, w)

    # -- tracing ---------------------------------------------------------

    def _record(self, t: float, signal: str, old: int, new: int) -> None:
        if self.trace_enabled:
            self.trace.append(TraceRecord(int(round(t)), self.name, signal, old, new))

    # -- search ----------------------------------------------------------

    def _delay_line_delay(self) -> float:
        mode = self.completion
        return mode.delay if mode.delay is not None else mode.margin * self.dummy_delay

    def search(self, key: int, inject_early_req: bool = False) -> SearchResult:
        """Execute one full four-phase search.

        Raises SearchProtocolError if the previous handshake has not
        completed (searches on one array are strictly sequential).
        """
        if not (0 <= key < (1 << self.width)):
            raise WidthMismatch(f"key {key:#x} does not fit in {self.width} bits")
        if self._in_flight:
            raise SearchProtocolError("previous search handshake incomplete")
        self._in_flight = True
        tm = self.timing

        t_sl = self._clock
        t_req = t_sl + (tm.sl_setup if not inject_early_req else -1.0)
        self._record(t_sl, "sl_valid", 0, 1)
        self._record(t_req, "req", 0, 1)

        sigma = self._search_rng.uniform(-self._noise, self._noise)
        t_off_rel = self.dummy_delay * (1.0 + sigma)

        key64 = np.uint64(key)
        diff = self.stored ^ key64
        flags = diff == 0
        n_match = int(flags.sum())
        mismatch = ~flags
        if self.n_tail > 0:
            tail_mask = np.uint64((1 << self.n_tail) - 1)
            spec_closed = mismatch & ((diff & tail_mask) != 0)
        else:
            spec_closed = np.zeros(self.n_entries, dtype=bool)
        heads = mismatch & ~spec_closed

        # per-entry charge behavior
        swings = np.zeros(self.n_entries)
        swings[flags] = self.energy.swing_cap if self.feedback else 1.0
        pd_durations = np.zeros(self.n_entries)
        pd_durations[heads] = t_off_rel

        causes = np.full(self.n_entries, 3, dtype=np.int8)  # dummy-off
        causes[spec_closed] = 2
        if self.feedback:
            causes[flags] = 1

        toggles = self.width if self._prev_key is None else 2 * bin(self._prev_key ^ key).count("1")
        self._prev_key = key

        false_timing = False
        if isinstance(self.completion, DelayLine):
            delay = self._delay_line_delay()
            if delay < t_off_rel:
                false_timing = True
            ack_rise_rel = delay
            completion_is_cscd = False
        else:
            # residual current just before the dummy (always the last source)
            # shuts off; the lagged sense signal then decays below threshold
            residual = 1.0 + self.energy.pd_current * float(heads.sum())
            if not self.feedback:
                residual += float(n_match)
            theta = self.completion.sense_threshold
            decay = self.completion.lag * math.log(residual / theta)
            ack_rise_rel = t_off_rel + decay + self.completion.sensor_delay
            completion_is_cscd = True

        t_off = t_req + t_off_rel
        t_ack_rise = t_req + ack_rise_rel
        t_req_fall = t_ack_rise + tm.ack_to_req_fall
        t_ack_fall = t_ack_rise + tm.return_cost
        self._record(t_req, "vs", 0, 1)
        self._record(t_off, "vs", 1, 0)
        self._record(t_off, "off", 0, 1)
        self._record(t_ack_rise, "ack", 0, 1)
        self._record(t_req_fall, "req", 1, 0)
        self._record(t_req_fall, "off", 1, 0)
        self._record(t_req_fall, "sl_valid", 1, 0)
        self._record(t_ack_fall, "ack", 1, 0)
        self._clock = t_ack_fall  # ML precharged to ground by the return phase
        self._in_flight = False

        result = SearchResult(
            match_flags=flags,
            cycle_time=int(round(t_ack_fall - t_req)),
            energy=None,  # priced below
            cause_codes=causes,
            false_timing=false_timing,
            t_req=t_req,
            t_off=t_off,
            t_ack_rise=t_ack_rise,
            t_ack_fall=t_ack_fall,
            swings=swings,
            pd_durations=pd_durations,
            sl_toggles=toggles,
            completion_is_cscd=completion_is_cscd,
        )
        result.energy = energy_of_search(result, self.energy)
        return result


def write_entry(array: CamArray, index: int, word: int) -> CamArray:
    array.write_entry(index, word)
    return array


def search(array: CamArray, key: int) -> SearchResult:
    return array.search(key)


def cycle_time_model(array: CamArray, key: int) -> int:
    """Cycle time (subticks) of one search under the array's completion mode."""
    return array.search(key).cycle_time


def search_sequence(array: CamArray, keys: Sequence[int], squeeze: Optional[float] = None) -> list[SearchResult]:
    """Run searches back to back.

    ``squeeze`` overrides the inter-search spacing: the next request rises
    ``squeeze`` subticks after the previous request fell, modeling an
    over-aggressive issue rate for the pulse-width checkers.
    """
    results = []
    for key in keys:
        results.append(array.search(key))
        if squeeze is not None:
            # next request rises `squeeze` after the previous request fell,
            # instead of waiting out the return phase
            t_req_fall = results[-1].t_ack_rise + array.timing.ack_to_req_fall
            array._clock = t_req_fall + squeeze - array.timing.sl_setup
    return results


# -- probability of speculative closure ----------------------------------------


def speculative_close_probability(width: int, n_tail: int) -> Fraction:
    """Chance a uniform key lets the tail cells close the source early.

    Exactly (2**W - 2**(W-n) + 1) / 2**W: the keys with a mismatch in the
    last ``n_tail`` bits, plus the single fully matching key.
    """
    if not (0 <= n_tail <= width):
        raise ValueError("need 0 <= n_tail <= width")
    return Fraction(2**width - 2 ** (width - n_tail) + 1, 2**width)


# -- calibration ----------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    steps: int  # 8-bit delay-line setting
    delay: float  # subticks
    ratio: float  # delay relative to the design-typical dummy delay
    trials: int


def calibrate_delay_line(array: CamArray, trials: int, seed: int = 0) -> CalibrationResult:
    """Find the minimal 8-bit delay setting with zero timing errors.

    The sweep starts from zero delay and raises the setting until no trial's
    dummy completion outruns the acknowledge (equivalently: the first grid
    point covering the worst observed completion).  The grid step is 1/128
    of the design-typical dummy delay, so a jitter-free device calibrates to
    exactly that delay (ratio 1.0); under the default mismatch model the
    ratio lands around 1.3.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = SplitMix64(seed ^ 0xDE1A)
    noise = array.timing.search_noise(array.n_entries)
    worst = 0.0
    for _ in range(trials):
        sigma = rng.uniform(-noise, noise)
        worst = max(worst, array.dummy_delay * (1.0 + sigma))
    step = array.dummy_delay_nominal / 128.0
    setting = math.ceil(worst / step - 1e-9)
    if setting > 255:
        raise Unsatisfiable(
            f"worst completion {worst:.2f} exceeds the delay line's range {255 * step:.2f}"
        )
    delay = setting * step
    return CalibrationResult(steps=setting, delay=delay, ratio=delay / array.dummy_delay_nominal, trials=trials)


def calibrated(array: CamArray, trials: int = 200, seed: int = 0) -> CamArray:
    """Return the array with its delay line replaced by a calibrated one."""
    if not isinstance(array.completion, DelayLine):
        raise ValueError("only delay-line completion is calibrated")
    cal = calibrate_delay_line(array, trials, seed)
    array.completion = DelayLine(delay=cal.delay, steps=cal.steps, margin=array.completion.margin)
    return array


# -- worst-case current analysis -------------------------------------------------


@dataclass(frozen=True)
class MarginReport:
    cases: dict
    smallest_case: str
    threshold: float
    margin: float


def worst_case_current_margin(array: CamArray, seed: int = 0) -> MarginReport:
    """Peak current change per matching case, against the sense threshold.

    Cases: every entry matching; every entry with its mismatches confined to
    the tail cells (speculative closes all sources early, so only the dummy
    charges); mismatches confined to the head cells (pull-down paths burn
    until the dummy's off signal); and a random fill.  The tail case is the
    least visible to the sensor and must still exceed the threshold.
    """
    if not isinstance(array.completion, Cscd):
        raise ValueError("current margins apply to the current-sensing completion mode")
    pd = array.energy.pd_current
    n = array.n_entries
    n_tail = array.n_tail
    cases = {
        "all-match": 1.0 + float(n),
        "mismatch-in-tail": 1.0 if n_tail > 0 else 1.0 + pd * n,
        "mismatch-in-head": 1.0 + pd * n,
    }
    rng = SplitMix64(seed ^ 0xFACE)
    key = rng.uniform_int(1 << array.width)
    matches = heads = 0
    tail_mask = (1 << n_tail) - 1
    for _ in range(n):
        word = rng.uniform_int(1 << array.width)
        d = word ^ key
        if d == 0:
            matches += 1
        elif not (d & tail_mask):
            heads += 1
    cases["random"] = 1.0 + matches + pd * heads
    smallest = min(cases, key=cases.get)
    theta = array.completion.sense_threshold
    margin = cases[smallest] / theta
    if any(v < theta for v in cases.values()):
        raise InsufficientMargin(
            f"case {smallest!r} changes the current by {cases[smallest]:.2f}, below threshold {theta:.2f}"
        )
    return MarginReport(cases=cases, smallest_case=smallest, threshold=theta, margin=margin)


# -- trace checker ----------------------------------------------------------------


def check_cam_timing(
    trace: Sequence[TraceRecord],
    min_clock_pulse: float = CamTimingParams.min_clock_pulse,
    min_reset_pulse: float = CamTimingParams.min_reset_pulse,
) -> list[TimingViolation]:
    """Audit a search trace for handshake timing faults.

    * ``bundled-data``      -- a request rose at or before its search-line data
      settled,
    * ``clock-pulse-width`` -- a current-sense pulse narrower than the
      register's minimum clock pulse,
    * ``reset-pulse-width`` -- the request's low phase between searches
      shorter than the reset pulse floor.
    """
    records = sorted(trace, key=lambda r: r.time)
    violations: list[TimingViolation] = []
    sl_rises = [r.time for r in records if r.signal == "sl_valid" and r.new == 1]
    req_rises = [r.time for r in records if r.signal == "req" and r.new == 1]
    req_falls = [r.time for r in records if r.signal == "req" and r.new == 0]
    vs_rises = [r.time for r in records if r.signal == "vs" and r.new == 1]
    vs_falls = [r.time for r in records if r.signal == "vs" and r.new == 0]

    for k in range(min(len(sl_rises), len(req_rises))):
        if sl_rises[k] >= req_rises[k]:
            violations.append(
                TimingViolation(
                    "bundled-data",
                    req_rises[k],
                    f"request rose at {req_rises[k]} but its search-line data settled at {sl_rises[k]}",
                )
            )

    for rise, fall in zip(vs_rises, vs_falls):
        if fall - rise < min_clock_pulse:
            violations.append(
                TimingViolation(
                    "clock-pulse-width", rise, f"sense pulse width {fall - rise} below minimum {min_clock_pulse}"
                )
            )

    for fall, next_rise in zip(req_falls, req_rises[1:]):
        if next_rise - fall < min_reset_pulse:
            violations.append(
                TimingViolation(
                    "reset-pulse-width", fall, f"request low phase {next_rise - fall} below minimum {min_reset_pulse}"
                )
            )
    return violations
