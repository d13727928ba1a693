#!/usr/bin/env python3
"""Walk one spike through the hierarchical encoding pipeline.

Shows the signal trace of a single encode (masking, per-level arbitration,
dual-rail encode, packet merge, acknowledge, return to NULL), then
demonstrates the grant-hold economy on a cluster burst and the three
timing-rule checkers with targeted fault injection.
"""

from aercore.pipeline import check_timing, run_pipeline

print("single event: neuron 21 (level digits 1,1,1)")
run = run_pipeline([(21, 0)])
packet = run.packets[0]
print(f"  packet address bits: {packet.address_bits()} at t={packet.t_out} subticks")
print("  trace excerpt:")
for rec in run.trace[:14]:
    print(f"    t={rec.time:5d}  {rec.signal:18s} {rec.old}->{rec.new}")
print(f"  ... {len(run.trace)} records total; timing violations: {check_timing(run.trace)}")

print()
print("burst of 4 confined to one low-level cluster (neurons 0..3)")
burst = run_pipeline([(i, 0) for i in range(4)])
high, med, low = burst.arb_counts
print(f"  arbitrations per level: high={high} medium={med} low={low}")
print("  the held upper-level grants mean only the low level re-arbitrates")

print()
print("fault injection: each timing rule fires under its own fault")
for constraint, overrides in [
    ("latch-close-before-data-reset", {"latch_close": 30}),
    ("reopen-after-data-reset", {"neuron_release": 40}),
    ("validity-before-data-cd", {"cd_mask": 250}),
]:
    faulty = run_pipeline([(21, 0), (22, 0)], delays=overrides)
    hits = sorted({v.constraint for v in check_timing(faulty.trace)})
    print(f"  inject {overrides} -> {hits}")
