#!/usr/bin/env python3
"""Asynchronous CAM: completion detection, calibration, and energy.

Walks through the conventional delay-line completion (and its calibration
margin), the current-sensing alternative, and the two power mechanisms
(feedback control for matches, speculative sense for mismatches), ending
with the full cycle-time and energy comparison across both design points.
"""

from aercore import bench
from aercore.cam import (
    CamArray,
    Cscd,
    DelayLine,
    calibrate_delay_line,
    speculative_close_probability,
    worst_case_current_margin,
)

print("delay-line calibration (512x11 array)")
arr = CamArray(512, 11, seed=3, completion=DelayLine())
cal = calibrate_delay_line(arr, trials=200, seed=11)
print(f"  minimal error-free 8-bit setting: {cal.steps} -> delay {cal.delay:.1f} subticks")
print(f"  ratio to the design-typical dummy delay: {cal.ratio:.2f} (margin paid on every search)")

print()
print("speculative sense: probability the tail cells close the source early")
p = speculative_close_probability(10, 3)
print(f"  width 10, tail 3: {p} = {float(p):.1%} of uniform keys")

print()
print("worst case for the current sensor")
cs = CamArray(512, 11, seed=3, completion=Cscd(), feedback=True, speculative=3)
report = worst_case_current_margin(cs)
for case, change in sorted(report.cases.items(), key=lambda kv: kv[1]):
    mark = "  <- smallest" if case == report.smallest_case else ""
    print(f"  {case:18s} current change {change:7.1f}{mark}")
print(f"  sensing margin {report.margin:.1f}x over threshold {report.threshold}")

print()
print("cycle time and energy, all variants (both design points, random case)")
rows = bench.cam_report(design_points=((16, 11), (512, 11)), searches=200, seed=0)
for entries in (16, 512):
    base = next(r for r in rows if r.entries == entries and r.case == "random" and r.mode == "delay-line")
    print(f"  {entries}x11:")
    for r in rows:
        if r.entries != entries or r.case != "random":
            continue
        name = bench.variant_name(r)
        print(
            f"    {name:18s} cycle {r.cycle_mean:6.1f} ({r.cycle_mean / base.cycle_mean:6.1%})"
            f"   energy {r.energy_mean:8.2f} ({r.energy_mean / base.energy_mean:6.1%})"
        )

print()
print("per-mechanism energy story at 512x11:")
for case in ("all-match", "all-mismatch"):
    by = {bench.variant_name(r): r for r in rows if r.entries == 512 and r.case == case}
    fb = 1 - by["cscd+feedback"].energy_mean / by["conventional"].energy_mean
    sp = 1 - by["cscd+speculative"].energy_mean / by["conventional"].energy_mean
    print(f"  {case:12s}: feedback saves {fb:6.1%}, speculative saves {sp:6.1%}")
print("  matches are saved by feedback (capped swing); mismatches by speculative sense")

print()
print("area context (fixed 22nm figures, not simulated):")
print(bench.cam_area_reference().to_csv())
