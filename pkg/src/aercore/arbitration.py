"""Arbitration architecture models: closed-form latency/area and simulation.

Five architectures are supported.  Each has an exact analytic model (average
sparse latency, full-frame burst latency, and two-input-arbiter count, all
normalized to the two-input arbiter's delay and area) plus an event-driven
behavioral model that runs on the kernel and reproduces the analytic values:

* ``BINARY_TREE``    -- complete tree of two-input arbiters; every event pays
  a full request-up / grant-down round trip of 2*(log2 N - 1) units and
  events serialize, so a burst costs 2N*(log2 N - 1).
* ``GREEDY_TREE``    -- same sparse path; under load the grant drains a leaf
  pair in place (cost set by the neuron response time, default 0) and pays a
  constant 6-unit hop when it moves past a sibling pair, giving 3N - 6.
* ``TOKEN_RING``     -- the token rests just past the last serviced neuron
  and costs one unit per hop plus one for the grant, so a request at
  distance d costs d + 1 with d uniform over {0..N-1}: mean (N+1)/2.
  A burst is one sweep: N units.
* ``HIER_TOKEN_RING``-- two levels with sqrt(N) leaves per ring.  Sparse cost
  is top-ring travel plus leaf-ring travel (mean exactly sqrt(N)); under
  backlog the top-ring travel hides behind leaf service and each leaf-ring
  boundary crossing costs 2 units, giving N + 2*sqrt(N) for a burst.
* ``HIER_ARBITER_TREE`` -- log4 N levels of four-input arbiters (each a
  depth-2 tree of three two-input cells, 2 units per level), so a single
  sparse event costs log2 N.  Under burst the pipeline streams one encode
  per unit with one extra unit per 16-neuron block entered and a 3-unit
  start-up wave: (17/16)N + 3.

The burst/backlog constants that are not derivable from first principles
(the greedy 6-unit hop, the hierarchical-tree 3-unit wave and per-block
unit, the hierarchical-ring 2-unit boundary) are calibrated against the
closed forms and noted on the classes.
"""

from __future__ import annotations

import math
from bisect import bisect_left, insort
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional

from .kernel import SUBTICKS_PER_UNIT, Event, Kernel, to_units, units
from .workloads import Burst, Sparse, SplitMix64, Workload, generate


class InvalidN(ValueError):
    """The neuron count violates the architecture's structural constraint."""


class ArchitectureKind(Enum):
    BINARY_TREE = "binary"
    GREEDY_TREE = "greedy"
    TOKEN_RING = "token-ring"
    HIER_TOKEN_RING = "hier-ring"
    HIER_ARBITER_TREE = "hier-tree"

    @classmethod
    def parse(cls, name: str) -> "ArchitectureKind":
        name = name.strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown architecture {name!r}; expected one of {[k.value for k in cls]}")


ALL_KINDS = tuple(ArchitectureKind)


def _log2_exact(n: int) -> int:
    l = n.bit_length() - 1
    if n <= 0 or (1 << l) != n:
        raise InvalidN(f"N={n} is not a power of two")
    return l


def _log4_exact(n: int) -> int:
    l = _log2_exact(n)
    if l % 2 != 0:
        raise InvalidN(f"N={n} is not a power of four")
    return l // 2


def _isqrt_exact(n: int) -> int:
    r = math.isqrt(n)
    if r * r != n:
        raise InvalidN(f"N={n} is not a perfect square")
    return r


def validate_n(kind: ArchitectureKind, n: int) -> None:
    """Raise InvalidN unless ``n`` is structurally valid for ``kind``."""
    if n < 2:
        raise InvalidN(f"N={n}: need at least two neurons")
    if kind in (ArchitectureKind.BINARY_TREE, ArchitectureKind.GREEDY_TREE):
        _log2_exact(n)
    elif kind is ArchitectureKind.HIER_TOKEN_RING:
        if n < 4:
            raise InvalidN(f"N={n}: hierarchical ring needs at least 4 neurons")
        _isqrt_exact(n)
    elif kind is ArchitectureKind.HIER_ARBITER_TREE:
        if n < 4:
            raise InvalidN(f"N={n}: hierarchical tree needs at least 4 neurons")
        _log4_exact(n)


def analytic_sparse_latency(kind: ArchitectureKind, n: int) -> Fraction:
    """Average service latency, in units, for isolated single events."""
    validate_n(kind, n)
    if kind in (ArchitectureKind.BINARY_TREE, ArchitectureKind.GREEDY_TREE):
        return Fraction(2 * (_log2_exact(n) - 1))
    if kind is ArchitectureKind.TOKEN_RING:
        return Fraction(n + 1, 2)
    if kind is ArchitectureKind.HIER_TOKEN_RING:
        return Fraction(_isqrt_exact(n))
    return Fraction(_log2_exact(n))


def analytic_burst_latency(kind: ArchitectureKind, n: int) -> Fraction:
    """Time, in units, from a full-frame burst to the last encoded output."""
    validate_n(kind, n)
    if kind is ArchitectureKind.BINARY_TREE:
        return Fraction(2 * n * (_log2_exact(n) - 1))
    if kind is ArchitectureKind.GREEDY_TREE:
        return Fraction(3 * n - 6)
    if kind is ArchitectureKind.TOKEN_RING:
        return Fraction(n)
    if kind is ArchitectureKind.HIER_TOKEN_RING:
        return Fraction(n + 2 * _isqrt_exact(n))
    return Fraction(17 * n, 16) + 3


def arbiter_count(kind: ArchitectureKind, n: int) -> int:
    """Number of two-input arbiter cells (the normalized area cost)."""
    validate_n(kind, n)
    if kind in (ArchitectureKind.BINARY_TREE, ArchitectureKind.GREEDY_TREE):
        return n - 1
    if kind is ArchitectureKind.TOKEN_RING:
        return n
    if kind is ArchitectureKind.HIER_TOKEN_RING:
        return n + 2 * _isqrt_exact(n)
    return 3 * _log4_exact(n)


# -- two-input arbiter primitive -------------------------------------------


class TwoInputArbiter:
    """Sticky two-input mutual-exclusion cell.

    Grants exactly one side while its request stays high; a simultaneous
    pair of new requests is resolved by a seeded coin flip, standing in for
    analog metastability resolution.
    """

    def __init__(self, seed: int = 0):
        self._rng = SplitMix64(seed)
        self.grant: Optional[str] = None

    def decide(self, req_a: bool, req_b: bool) -> Optional[str]:
        if self.grant == "a" and req_a:
            return "a"
        if self.grant == "b" and req_b:
            return "b"
        if req_a and req_b:
            self.grant = "a" if self._rng.coin() else "b"
        elif req_a:
            self.grant = "a"
        elif req_b:
            self.grant = "b"
        else:
            self.grant = None
        return self.grant


def two_input_arbitrate(req_a: bool, req_b: bool, state: TwoInputArbiter) -> Optional[str]:
    """Evaluate one two-input arbitration step; returns 'a', 'b' or None."""
    return state.decide(req_a, req_b)


# -- configuration and events -----------------------------------------------


@dataclass(frozen=True)
class ArbiterConfig:
    kind: ArchitectureKind
    n_neurons: int
    greedy_neuron_response: int = 0  # units, added to every greedy service

    def __post_init__(self):
        validate_n(self.kind, self.n_neurons)
        if self.greedy_neuron_response < 0:
            raise InvalidN("greedy_neuron_response must be >= 0")


@dataclass(frozen=True)
class AddressEvent:
    neuron_id: int
    encoded_address: int
    t_request: int  # subticks
    t_output: int  # subticks

    @property
    def latency_units(self) -> Fraction:
        return to_units(self.t_output - self.t_request)


@dataclass
class SparseStats:
    mean: Fraction
    ci95: float
    trials: int

    @property
    def stderr(self) -> float:
        return self.ci95 / 1.96 if self.trials else 0.0


# -- instances ---------------------------------------------------------------


class ArbiterInstance:
    """Base class: pending-request bookkeeping, kernel glue, invariant counters.

    Subclasses implement ``_pick`` which selects the next neuron to service,
    its cost in subticks, and the arbiter cells its grant passes through.
    The four-phase output protocol serializes encodes, so one service is in
    flight at a time; per-cell grant intervals are checked for overlap
    anyway so a model regression shows up in ``mutex_violations``.

    Spikes landing on the same tick are registered before arbitration
    starts (a zero-delay kick event runs after them), which is what lets a
    full-frame burst present itself as one simultaneous request set.
    """

    kind: ArchitectureKind

    def __init__(self, config: ArbiterConfig, seed: int = 0):
        self.config = config
        self.n = config.n_neurons
        self.addr_bits = max(1, (self.n - 1).bit_length())
        self._seed = seed
        self.name = f"{config.kind.value}-{self.n}"
        self.reset()

    def reset(self) -> None:
        self._rng = SplitMix64(self._seed ^ 0xA5A5_5A5A)
        self._pending: list[int] = []  # sorted neuron ids
        self._arrival: dict[int, int] = {}
        self._busy = False
        self._kick_queued = False
        self.events: list[AddressEvent] = []
        self.accepted = 0
        self.rejected_while_pending = 0
        self.mutex_violations = 0
        self._cell_release: dict = {}
        self.last_output_t = 0
        self._reset_state()

    def _reset_state(self) -> None:  # per-kind topology state
        pass

    # -- kernel protocol ---------------------------------------------------

    def attach(self, kernel: Kernel) -> None:
        kernel.add_component(self.name, self.handle)

    def inject(self, kernel: Kernel, neuron: int, at: int) -> None:
        if not (0 <= neuron < self.n):
            raise InvalidN(f"neuron {neuron} out of range for N={self.n}")
        kernel.schedule(at, self.name, ("spike", neuron))

    def handle(self, kernel: Kernel, event: Event) -> None:
        tag = event.payload[0]
        if tag == "spike":
            neuron = event.payload[1]
            if neuron in self._arrival:
                # the neuron's handshake is still held open; it cannot issue
                # a second request until the first is encoded
                self.rejected_while_pending += 1
                return
            insort(self._pending, neuron)
            self._arrival[neuron] = event.at
            self.accepted += 1
            if not self._busy and not self._kick_queued:
                self._kick_queued = True
                kernel.schedule(event.at, self.name, ("kick",))
        elif tag == "kick":
            self._kick_queued = False
            if not self._busy and self._pending:
                self._start_service(kernel, event.at)
        elif tag == "done":
            _, neuron, t_req = event.payload
            self.events.append(AddressEvent(neuron, neuron, t_req, event.at))
            self.last_output_t = event.at
            self._busy = False
            self._drained(bool(self._pending))
            if self._pending:
                self._start_service(kernel, event.at)

    def _drained(self, more_pending: bool) -> None:
        """Hook called after each completed service (before the next starts)."""

    def _start_service(self, kernel: Kernel, now: int) -> None:
        neuron, cost, cells = self._pick(now)
        idx = bisect_left(self._pending, neuron)
        del self._pending[idx]
        t_req = self._arrival.pop(neuron)
        end = now + cost
        release = self._cell_release
        for cell in cells:
            if release.get(cell, -1) > now:
                self.mutex_violations += 1
            release[cell] = end
            if kernel.tracing:
                kernel.record(self.name, f"grant.{cell}", 0, 1, at=now)
                kernel.record(self.name, f"grant.{cell}", 1, 0, at=end)
        self._busy = True
        kernel.schedule(end, self.name, ("done", neuron, t_req))

    def _pick(self, now: int) -> tuple[int, int, tuple]:
        raise NotImplementedError


class BinaryTreeInstance(ArbiterInstance):
    kind = ArchitectureKind.BINARY_TREE

    def _reset_state(self) -> None:
        self.levels = _log2_exact(self.n)
        self._round_trip = units(2 * (self.levels - 1))

    def _winner(self) -> int:
        """Walk the tree root-down; earlier subtree request wins, ties flip a coin."""
        pending = self._pending
        if len(pending) == 1:
            return pending[0]
        arrival = self._arrival
        lo, hi = 0, self.n
        i, k = 0, len(pending)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            j = bisect_left(pending, mid, i, k)
            has_left = j > i
            has_right = k > j
            if has_left and has_right:
                a = min(arrival[pending[x]] for x in range(i, j))
                b = min(arrival[pending[x]] for x in range(j, k))
                go_left = a < b or (a == b and self._rng.coin())
            else:
                go_left = has_left
            if go_left:
                hi, k = mid, j
            else:
                lo, i = mid, j
        return lo

    def _path_cells(self, neuron: int) -> tuple:
        return tuple(("cell", lvl, neuron >> (self.levels - lvl)) for lvl in range(self.levels))

    def _pick(self, now: int) -> tuple[int, int, tuple]:
        neuron = self._winner()
        return neuron, self._round_trip, self._path_cells(neuron)


class GreedyTreeInstance(BinaryTreeInstance):
    """Binary tree whose grant drains nearby requests before releasing.

    Cost model under load: the sibling of the current leaf is serviced for
    the neuron response time alone, and moving the grant anywhere else costs
    a constant 6 units (local release, re-arbitration, descent).  A wave of
    simultaneous requests hitting an idle tree starts draining at its first
    leaf pair with no descent charge; with response time zero this makes a
    full frame finish at exactly 3N - 6.
    """

    kind = ArchitectureKind.GREEDY_TREE

    def _reset_state(self) -> None:
        super()._reset_state()
        self._cur_leaf: Optional[int] = None
        self._response = units(self.config.greedy_neuron_response)

    def _drained(self, more_pending: bool) -> None:
        if not more_pending:
            self._cur_leaf = None  # grant released once the tree empties

    def _pick(self, now: int) -> tuple[int, int, tuple]:
        if self._cur_leaf is None:
            neuron = self._winner()
            if len(self._pending) > 1:
                cost = self._response  # wave entry: grant meets the request front
            else:
                cost = self._round_trip + self._response
        else:
            sibling = self._cur_leaf ^ 1
            if sibling in self._arrival:
                neuron = sibling
                cost = self._response
            else:
                idx = bisect_left(self._pending, self._cur_leaf)
                neuron = self._pending[idx] if idx < len(self._pending) else self._pending[0]
                cost = units(6) + self._response
        self._cur_leaf = neuron
        return neuron, cost, self._path_cells(neuron)


class TokenRingInstance(ArbiterInstance):
    kind = ArchitectureKind.TOKEN_RING

    def _reset_state(self) -> None:
        self.token_position = 0

    def _pick(self, now: int) -> tuple[int, int, tuple]:
        p = self.token_position
        idx = bisect_left(self._pending, p)
        neuron = self._pending[idx] if idx < len(self._pending) else self._pending[0]
        hops = (neuron - p) % self.n
        cost = units(hops + 1)
        self.token_position = (neuron + 1) % self.n
        return neuron, cost, (("stage", neuron),)


class HierTokenRingInstance(ArbiterInstance):
    """Two-level token ring: sqrt(N) leaf rings of sqrt(N) neurons each.

    Sparse cost is top-ring hops plus leaf-ring hops (+1 for the grant);
    with requests backed up, the top token's travel hides behind leaf-ring
    service and each leaf-ring entry instead pays a fixed 2-unit boundary
    handoff, calibrated so a full frame costs exactly N + 2*sqrt(N).
    """

    kind = ArchitectureKind.HIER_TOKEN_RING

    def _reset_state(self) -> None:
        self.ring_size = _isqrt_exact(self.n)
        self.top_position = 0
        self.leaf_positions = [0] * self.ring_size
        self.current_cluster: Optional[int] = None

    def _pick(self, now: int) -> tuple[int, int, tuple]:
        r = self.ring_size
        pending = self._pending
        neuron = None
        cluster = None
        for k in range(r):
            c = (self.top_position + k) % r
            lo, hi = c * r, (c + 1) * r
            i = bisect_left(pending, lo)
            if i < len(pending) and pending[i] < hi:
                p_leaf = self.leaf_positions[c]
                j = bisect_left(pending, lo + p_leaf, i)
                if j < len(pending) and pending[j] < hi:
                    neuron = pending[j]
                else:
                    neuron = pending[i]
                cluster = c
                break
        assert neuron is not None and cluster is not None
        leaf_hops = (neuron - cluster * r - self.leaf_positions[cluster]) % r
        cost_units = leaf_hops + 1
        if cluster != self.current_cluster:
            if len(pending) > 1:
                cost_units += 2  # boundary handoff; top travel overlapped
            else:
                cost_units += (cluster - self.top_position) % r
        self.top_position = cluster
        self.current_cluster = cluster
        self.leaf_positions[cluster] = (neuron - cluster * r + 1) % r
        return neuron, units(cost_units), (("top", cluster), ("leaf", cluster, neuron % r))


class HierArbiterTreeInstance(ArbiterInstance):
    """Stacked four-input arbiters; a cluster keeps its grant until it drains.

    A lone event pays 2 units per hierarchy level (log2 N total).  Under a
    simultaneous batch the pipeline streams one encode per unit after a
    3-unit start-up wave, plus one unit each time the grant enters a new
    16-neuron block; those two constants are calibrated against the
    (17/16)N + 3 closed form.
    """

    kind = ArchitectureKind.HIER_ARBITER_TREE

    def _reset_state(self) -> None:
        self.levels = _log4_exact(self.n)
        self.current_low: Optional[int] = None  # 4-neuron block id
        self.current_med: Optional[int] = None  # 16-neuron block id

    def _drained(self, more_pending: bool) -> None:
        if not more_pending:
            self.current_low = None
            self.current_med = None

    def _cells(self, neuron: int) -> tuple:
        return tuple(("hat", lvl, neuron >> (2 * (self.levels - lvl))) for lvl in range(self.levels))

    def _next_grouped(self) -> int:
        """Next pending id: held 4-block first, then its 16-block, then upward."""
        pending = self._pending
        if self.current_low is not None:
            lo = self.current_low * 4
            i = bisect_left(pending, lo)
            if i < len(pending) and pending[i] < lo + 4:
                return pending[i]
        if self.current_med is not None:
            lo = self.current_med * 16
            i = bisect_left(pending, lo)
            if i < len(pending) and pending[i] < lo + 16:
                return pending[i]
            if i < len(pending):
                return pending[i]
        return pending[0]

    def _pick(self, now: int) -> tuple[int, int, tuple]:
        neuron = self._next_grouped()
        med = neuron >> 4 if self.levels >= 2 else None
        if self.current_low is None:
            if len(self._pending) > 1:
                # wave start-up: higher levels arbitrate ahead of the stream
                cost = units(3 + 1 + (1 if self.levels >= 2 else 0))
            else:
                cost = units(2 * self.levels)
        else:
            cost = units(1)
            if self.levels >= 2 and med != self.current_med:
                cost += units(1)
        self.current_low = neuron >> 2
        self.current_med = med
        return neuron, cost, self._cells(neuron)


_INSTANCE_CLASSES = {
    ArchitectureKind.BINARY_TREE: BinaryTreeInstance,
    ArchitectureKind.GREEDY_TREE: GreedyTreeInstance,
    ArchitectureKind.TOKEN_RING: TokenRingInstance,
    ArchitectureKind.HIER_TOKEN_RING: HierTokenRingInstance,
    ArchitectureKind.HIER_ARBITER_TREE: HierArbiterTreeInstance,
}


def build(config: ArbiterConfig, seed: int = 0) -> ArbiterInstance:
    """Construct the behavioral model for ``config``."""
    return _INSTANCE_CLASSES[config.kind](config, seed=seed)


# -- measurement entry points ------------------------------------------------


def simulate(instance: ArbiterInstance, workload: Workload) -> list[AddressEvent]:
    """Run one workload through a fresh copy of the instance's state."""
    instance.reset()
    if isinstance(workload, Sparse):
        _run_sparse(instance, workload.trials, SplitMix64(workload.seed))
        return instance.events
    kernel = Kernel()
    instance.attach(kernel)
    for neuron, t in generate(workload, instance.n):
        instance.inject(kernel, neuron, t)
    kernel.run()
    return instance.events


def _run_sparse(instance: ArbiterInstance, trials: int, rng: SplitMix64) -> None:
    kernel = Kernel()
    instance.attach(kernel)
    t = 0
    for _ in range(trials):
        neuron = rng.uniform_int(instance.n)
        instance.inject(kernel, neuron, t)
        kernel.run()
        t = instance.last_output_t


def measure_sparse(instance: ArbiterInstance, trials: int, seed: int = 0) -> SparseStats:
    """Mean single-event latency over ``trials`` drain-synchronized injections."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    instance.reset()
    _run_sparse(instance, trials, SplitMix64(seed))
    lat_sub = [e.t_output - e.t_request for e in instance.events]
    total = sum(lat_sub)
    mean = Fraction(total, trials * SUBTICKS_PER_UNIT)
    if trials > 1:
        m = total / trials
        var = sum((x - m) ** 2 for x in lat_sub) / (trials - 1)
        sd_units = math.sqrt(var) / SUBTICKS_PER_UNIT
        ci95 = 1.96 * sd_units / math.sqrt(trials)
    else:
        ci95 = 0.0
    return SparseStats(mean=mean, ci95=ci95, trials=trials)


def measure_burst(instance: ArbiterInstance, seed: int = 0) -> Fraction:
    """Time in units from an all-neuron burst at t=0 to the last output."""
    events = simulate(instance, Burst(window=0, seed=seed))
    return to_units(max(e.t_output for e in events))
