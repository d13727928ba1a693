"""Experiment harness: comparison tables, scaling sweeps, CAM reports, demo.

Everything here is reproducible byte for byte: outputs carry no timestamps,
all randomness is seeded, and every effective configuration is echoed and
hashed into the emitted files.  Simulated columns carry their trial counts
and confidence intervals; analytic columns are exact values from the model
formulas.  A tolerance-policy footer states, per architecture, how the
simulated numbers are expected to relate to the analytic ones.

The ``reference_ns`` / ``reference_area`` columns are fixed constants from a
22nm realization of these architectures, shown for context only; they are
technology-dependent and are not reproduced by the simulator, which works
in unit-normalized time.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from . import arbitration as arb
from . import cam as cam_mod
from .arbitration import ALL_KINDS, ArbiterConfig, ArchitectureKind, InvalidN
from .cam import CamArray, Cscd, DelayLine
from .workloads import Burst, SplitMix64, Workload

# Fixed context figures from a 22nm realization of these architectures;
# technology-dependent, never reproduced by the unit-normalized simulator.
REFERENCE_NS_SPARSE = {
    ("binary", 64): 1.7, ("binary", 256): 2.1,
    ("greedy", 64): 1.8, ("greedy", 256): 2.3,
    ("token-ring", 64): 25.3, ("token-ring", 256): 102.7,
    ("hier-ring", 64): 5.7, ("hier-ring", 256): 9.2,
    ("hier-tree", 64): 1.7, ("hier-tree", 256): 2.0,
}
REFERENCE_NS_BURST = {
    ("binary", 64): 83.7, ("binary", 256): 436.9,
    ("token-ring", 64): 40.5, ("token-ring", 256): 178.4,
    ("hier-ring", 64): 48.9, ("hier-ring", 256): 192.9,
    ("hier-tree", 64): 47.2, ("hier-tree", 256): 194.4,
}
REFERENCE_AREA = {
    ("binary", 64): 72.3, ("binary", 256): 277.4,
    ("greedy", 64): 83.4, ("greedy", 256): 286.7,
    ("token-ring", 64): 79.1, ("token-ring", 256): 272.5,
    ("hier-ring", 64): 89.2, ("hier-ring", 256): 296.3,
    ("hier-tree", 64): 59.4, ("hier-tree", 256): 192.4,
}
REFERENCE_CAM_AREA_UM2 = {
    (16, 11): {"conventional": 225.3, "proposed": 245.5},
    (512, 11): {"conventional": 7242.1, "proposed": 7620.6},
}

# Per-neuron wired-OR area overhead for the hierarchical tree, fitted so the
# 64-neuron point reproduces the 22nm reference area; calibration, not
# prediction.
HAT_AREA_OVERHEAD_PER_NEURON_BIT = (59.4 - 9.0) / (64 * 6)

TOLERANCE_POLICY = (
    "tolerances: binary/greedy/hier-tree sparse and all burst totals are exact; "
    "token-ring and hier-ring sparse means match the formula within max(0.5, 3*stderr); "
    "hier-tree burst matches (17/16)N+3 within 10%; reference_ns/reference_area are "
    "fixed 22nm context figures, technology-dependent and not reproduced by the simulator"
)


def cam_area_reference() -> Table:
    """Fixed square-micron context figures for the two CAM design points.

    Documentation only: the library has no area model, and these values are
    technology-dependent.
    """
    rows = [
        {
            "entries": n,
            "width": w,
            "conventional_um2": v["conventional"],
            "proposed_um2": v["proposed"],
            "increase": f"{(v['proposed'] / v['conventional'] - 1) * 100:.1f}%",
        }
        for (n, w), v in sorted(REFERENCE_CAM_AREA_UM2.items())
    ]
    return Table(
        "cam_area_reference",
        ["entries", "width", "conventional_um2", "proposed_um2", "increase"],
        rows,
        footer="fixed 22nm context figures; no area model is simulated",
    )


def hat_calibrated_area(n: int) -> float:
    """Arbiter count plus the fitted wired-OR overhead (context column only)."""
    return arb.arbiter_count(ArchitectureKind.HIER_ARBITER_TREE, n) + (
        HAT_AREA_OVERHEAD_PER_NEURON_BIT * n * max(1, (n - 1).bit_length())
    )


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, Fraction):
        return f"{float(v):g}"
    if isinstance(v, float):
        return f"{v:g}"
    return str(v)


@dataclass
class Table:
    name: str
    columns: list
    rows: list  # list of dicts
    footer: str = TOLERANCE_POLICY

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row.get(c)) for c in self.columns])
        w.writerow([f"# {self.footer}"] + [""] * (len(self.columns) - 1))
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "columns": self.columns,
            "rows": [{c: _fmt(r.get(c)) for c in self.columns} for r in self.rows],
            "footer": self.footer,
        }

    def cell(self, arch: str, column: str):
        for row in self.rows:
            if row.get("arch") == arch:
                return row.get(column)
        raise KeyError(arch)


def _valid(kind: ArchitectureKind, n: int) -> bool:
    try:
        arb.validate_n(kind, n)
        return True
    except InvalidN:
        return False


# -- arbitration tables -------------------------------------------------------


def table_latency_sparse(ns: Sequence[int] = (64, 256), trials: int = 20000, seed: int = 0) -> Table:
    """Analytic vs simulated mean sparse latency per architecture."""
    columns = ["arch"]
    for n in ns:
        columns += [f"analytic_n{n}", f"sim_n{n}", f"ci95_n{n}", f"reference_ns_n{n}"]
    rows = []
    for kind in ALL_KINDS:
        row = {"arch": kind.value}
        for n in ns:
            if not _valid(kind, n):
                continue
            row[f"analytic_n{n}"] = arb.analytic_sparse_latency(kind, n)
            inst = arb.build(ArbiterConfig(kind, n), seed=seed)
            deterministic = kind in (
                ArchitectureKind.BINARY_TREE,
                ArchitectureKind.GREEDY_TREE,
                ArchitectureKind.HIER_ARBITER_TREE,
            )
            t = 64 if deterministic else trials
            stats = arb.measure_sparse(inst, t, seed=seed)
            row[f"sim_n{n}"] = stats.mean
            row[f"ci95_n{n}"] = round(stats.ci95, 6)
            row[f"reference_ns_n{n}"] = REFERENCE_NS_SPARSE.get((kind.value, n))
        rows.append(row)
    return Table("latency_sparse", columns, rows)


def table_latency_burst(ns: Sequence[int] = (64, 256), seed: int = 0) -> Table:
    columns = ["arch"]
    for n in ns:
        columns += [f"analytic_n{n}", f"sim_n{n}", f"reference_ns_n{n}"]
    rows = []
    for kind in ALL_KINDS:
        row = {"arch": kind.value}
        for n in ns:
            if not _valid(kind, n):
                continue
            row[f"analytic_n{n}"] = arb.analytic_burst_latency(kind, n)
            inst = arb.build(ArbiterConfig(kind, n), seed=seed)
            row[f"sim_n{n}"] = arb.measure_burst(inst, seed=seed)
            row[f"reference_ns_n{n}"] = REFERENCE_NS_BURST.get((kind.value, n))
        rows.append(row)
    return Table("latency_burst", columns, rows)


def table_area(ns: Sequence[int] = (64, 256)) -> Table:
    columns = ["arch"]
    for n in ns:
        columns += [f"arbiters_n{n}", f"reference_area_n{n}", f"calibrated_n{n}"]
    rows = []
    for kind in ALL_KINDS:
        row = {"arch": kind.value}
        for n in ns:
            if not _valid(kind, n):
                continue
            row[f"arbiters_n{n}"] = arb.arbiter_count(kind, n)
            row[f"reference_area_n{n}"] = REFERENCE_AREA.get((kind.value, n))
            if kind is ArchitectureKind.HIER_ARBITER_TREE:
                row[f"calibrated_n{n}"] = round(hat_calibrated_area(n), 1)
        rows.append(row)
    return Table(
        "area",
        columns,
        rows,
        footer=(
            "arbiters = two-input arbiter count (the analytic model); reference_area is a fixed "
            "22nm-normalized context figure; calibrated adds the fitted per-neuron wired-OR overhead "
            "(fitted at N=64, shown for context, not a prediction)"
        ),
    )


# -- scaling sweep --------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    arch: str
    n: int
    mode: str
    analytic: Fraction
    sim_mean: Fraction
    sim_ci95: float
    trials: int
    seed: int


def _sweep_one(args) -> Optional[SweepPoint]:
    kind_value, n, mode, trials, seed = args
    kind = ArchitectureKind.parse(kind_value)
    if not _valid(kind, n):
        return None
    inst = arb.build(ArbiterConfig(kind, n), seed=seed)
    if mode == "sparse":
        analytic = arb.analytic_sparse_latency(kind, n)
        deterministic = kind in (
            ArchitectureKind.BINARY_TREE,
            ArchitectureKind.GREEDY_TREE,
            ArchitectureKind.HIER_ARBITER_TREE,
        )
        t = 64 if deterministic else trials
        stats = arb.measure_sparse(inst, t, seed=seed)
        return SweepPoint(kind.value, n, mode, analytic, stats.mean, stats.ci95, t, seed)
    if mode == "burst":
        analytic = arb.analytic_burst_latency(kind, n)
        total = arb.measure_burst(inst, seed=seed)
        return SweepPoint(kind.value, n, mode, analytic, total, 0.0, 1, seed)
    raise ValueError(f"unknown sweep mode {mode!r}; expected sparse or burst")


def sweep_scaling(
    ns: Sequence[int] = (16, 64, 256, 1024),
    mode: str = "sparse",
    trials: int = 20000,
    seed: int = 0,
    jobs: int = 1,
) -> list[SweepPoint]:
    """Latency scaling rows per (architecture, N); invalid Ns are skipped."""
    tasks = [(kind.value, n, mode, trials, seed) for kind in ALL_KINDS for n in ns]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    points = [p for p in results if p is not None]
    points.sort(key=lambda p: (p.arch, p.n))
    return points


def sweep_rows_csv(points: Iterable[SweepPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arch", "n", "mode", "analytic", "sim_mean", "sim_ci95", "trials", "seed"])
    for p in points:
        w.writerow([p.arch, p.n, p.mode, _fmt(p.analytic), _fmt(p.sim_mean), f"{p.sim_ci95:.6g}", p.trials, p.seed])
    return buf.getvalue()


def hat_dominates_sparse(points: Sequence[SweepPoint]) -> list[str]:
    """Check the sparse-mode ordering: the hierarchical tree is lowest at every N.

    Stochastic architectures are compared at a 3-standard-error allowance
    (their true means can tie the hierarchical tree exactly, e.g. at N=16).
    Returns a list of human-readable failures, empty when the ordering holds.
    """
    failures = []
    by_n: dict[int, dict[str, SweepPoint]] = {}
    for p in points:
        if p.mode == "sparse":
            by_n.setdefault(p.n, {})[p.arch] = p
    for n, archs in sorted(by_n.items()):
        hat = archs.get(ArchitectureKind.HIER_ARBITER_TREE.value)
        if hat is None:
            continue
        for name, p in archs.items():
            if name == hat.arch:
                continue
            allowance = 3.0 * (p.sim_ci95 / 1.96) if p.trials > 1 else 0.0
            if float(hat.sim_mean) > float(p.sim_mean) + allowance:
                failures.append(
                    f"n={n}: hier-tree mean {float(hat.sim_mean):.4f} exceeds {name} mean {float(p.sim_mean):.4f}"
                )
    return failures


# -- CAM report -------------------------------------------------------------------

CAM_VARIANTS = (
    ("conventional", dict(cscd=False, feedback=False, speculative=0)),
    ("cscd", dict(cscd=True, feedback=False, speculative=0)),
    ("cscd+feedback", dict(cscd=True, feedback=True, speculative=0)),
    ("cscd+speculative", dict(cscd=True, feedback=False, speculative=3)),
    ("cscd+full", dict(cscd=True, feedback=True, speculative=3)),
)

CAM_CASES = ("all-match", "all-mismatch", "random")


def _cam_keys(case: str, n: int, width: int, searches: int, rng: SplitMix64) -> tuple[list[int], list[int]]:
    """Stored words and search keys for one measurement case."""
    space = 1 << width
    if case == "all-match":
        word = rng.uniform_int(space)
        return [word] * n, [word] * searches
    stored = [rng.uniform_int(space) for _ in range(n)]
    keys = []
    if case == "all-mismatch":
        stored_set = set(stored)
        while len(keys) < searches:
            k = rng.uniform_int(space)
            if k not in stored_set:
                keys.append(k)
    else:
        keys = [rng.uniform_int(space) for _ in range(searches)]
    return stored, keys


@dataclass
class CamReportRow:
    entries: int
    width: int
    mode: str
    feedback: bool
    spec_tail: int
    case: str
    cycle_mean: float
    energy_mean: float
    seed: int


def cam_report(
    design_points: Sequence[tuple[int, int]] = ((16, 11), (512, 11)),
    cases: Sequence[str] = CAM_CASES,
    searches: int = 200,
    seed: int = 0,
    calibration_trials: int = 200,
) -> list[CamReportRow]:
    """Cycle-time and energy means for every design point, variant, and case.

    The same stored contents and key sequence drive every variant of a
    (design point, case) pair, so differences isolate the mechanisms.
    """
    rows = []
    case_salt = {"all-match": 0x11, "all-mismatch": 0x22, "random": 0x33}
    for n, width in design_points:
        for case in cases:
            key_rng = SplitMix64(seed ^ (n * 2654435761) ^ case_salt.get(case, 0x44))
            stored, keys = _cam_keys(case, n, width, searches, key_rng)
            for name, opts in CAM_VARIANTS:
                completion = Cscd() if opts["cscd"] else DelayLine()
                array = CamArray(
                    n,
                    width,
                    seed=seed,
                    completion=completion,
                    feedback=opts["feedback"],
                    speculative=min(opts["speculative"], width),
                )
                if not opts["cscd"]:
                    cam_mod.calibrated(array, trials=calibration_trials, seed=seed)
                array.load(stored)
                cycles = []
                energies = []
                for k in keys:
                    r = array.search(k)
                    cycles.append(r.cycle_time)
                    energies.append(r.energy.total)
                rows.append(
                    CamReportRow(
                        entries=n,
                        width=width,
                        mode="cscd" if opts["cscd"] else "delay-line",
                        feedback=opts["feedback"],
                        spec_tail=opts["speculative"],
                        case=case,
                        cycle_mean=statistics.mean(cycles),
                        energy_mean=statistics.mean(energies),
                        seed=seed,
                    )
                )
    return rows


def cam_rows_csv(rows: Iterable[CamReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["entries", "width", "mode", "feedback", "spec_tail", "case", "cycle_mean", "energy_mean", "seed"])
    for r in rows:
        w.writerow(
            [r.entries, r.width, r.mode, int(r.feedback), r.spec_tail, r.case, f"{r.cycle_mean:.6g}", f"{r.energy_mean:.6g}", r.seed]
        )
    return buf.getvalue()


def variant_name(row: CamReportRow) -> str:
    if row.mode == "delay-line":
        return "conventional"
    if row.feedback and row.spec_tail:
        return "cscd+full"
    if row.feedback:
        return "cscd+feedback"
    if row.spec_tail:
        return "cscd+speculative"
    return "cscd"


def cam_report_normalized(rows: Sequence[CamReportRow]) -> list[dict]:
    """Baseline-relative view of a CAM report.

    Each row gains ``cycle_vs_baseline`` and ``energy_vs_baseline`` ratios
    against the conventional variant of the same (design point, case).
    """
    baselines = {
        (r.entries, r.width, r.case): r for r in rows if r.mode == "delay-line"
    }
    out = []
    for r in rows:
        base = baselines[(r.entries, r.width, r.case)]
        out.append(
            {
                "entries": r.entries,
                "width": r.width,
                "variant": variant_name(r),
                "case": r.case,
                "cycle_vs_baseline": r.cycle_mean / base.cycle_mean,
                "energy_vs_baseline": r.energy_mean / base.energy_mean,
            }
        )
    return out


# -- end-to-end demo ---------------------------------------------------------------


@dataclass
class DemoRecord:
    neuron: int
    t_output_units: float
    targets: list


@dataclass
class DemoResult:
    records: list
    n: int
    cam_entries: int
    total_spikes: int
    total_matches: int


def aer_demo(
    n: int = 64,
    workload: Optional[Workload] = None,
    cam_entries: int = 64,
    cam_width: Optional[int] = None,
    tags: Optional[Sequence[int]] = None,
    seed: int = 0,
) -> DemoResult:
    """Arbitrate a spike workload and look each encoded address up in a CAM.

    The CAM entries hold source-address tags (identity by default): a spike
    from neuron i pairs with every entry whose tag equals i.
    """
    addr_bits = max(1, (n - 1).bit_length())
    width = cam_width if cam_width is not None else max(addr_bits, 11)
    if width < addr_bits:
        raise ValueError(f"CAM width {width} cannot hold {addr_bits}-bit addresses")
    workload = workload if workload is not None else Burst(window=0, seed=seed)
    kind = ArchitectureKind.HIER_ARBITER_TREE if _valid(ArchitectureKind.HIER_ARBITER_TREE, n) else ArchitectureKind.BINARY_TREE
    inst = arb.build(ArbiterConfig(kind, n), seed=seed)
    events = arb.simulate(inst, workload)
    array = CamArray(cam_entries, width, seed=seed, completion=Cscd(), feedback=True, speculative=min(3, width))
    if tags is None:
        tags = [i % n for i in range(cam_entries)]
    array.load(tags)
    records = []
    total = 0
    for ev in sorted(events, key=lambda e: (e.t_output, e.neuron_id)):
        res = array.search(ev.encoded_address)
        hits = res.matches()
        total += len(hits)
        records.append(
            DemoRecord(neuron=ev.neuron_id, t_output_units=ev.t_output / 100.0, targets=hits)
        )
    return DemoResult(records=records, n=n, cam_entries=cam_entries, total_spikes=len(events), total_matches=total)


# -- report bundling ---------------------------------------------------------------


def json_summary(tables: dict, violations: Sequence = (), config: Optional[dict] = None) -> str:
    payload = {
        "tables": tables,
        "violations": [v.to_dict() if hasattr(v, "to_dict") else v for v in violations],
        "config_hash": config_hash(config or {}),
    }
    if config is not None:
        payload["config"] = {k: _fmt(v) if isinstance(v, (Fraction, float)) else v for k, v in sorted(config.items())}
    return json.dumps(payload, sort_keys=True, indent=2, default=_fmt) + "\n"
