import csv
import io
import json
from fractions import Fraction

import pytest

from aercore import bench
from aercore.arbitration import ArchitectureKind, analytic_burst_latency, analytic_sparse_latency

K = ArchitectureKind


class TestTables:
    def test_sparse_table_analytic_cells_exact(self):
        table = bench.table_latency_sparse(ns=(64, 256), trials=2000, seed=0)
        for kind in K:
            for n in (64, 256):
                assert table.cell(kind.value, f"analytic_n{n}") == analytic_sparse_latency(kind, n)

    def test_sparse_table_expected_columns(self):
        table = bench.table_latency_sparse(ns=(64,), trials=2000, seed=0)
        col = [table.cell(k.value, "analytic_n64") for k in K]
        assert col == [10, 10, Fraction(65, 2), 8, 6]

    def test_burst_table_values(self):
        table = bench.table_latency_burst(ns=(64, 256), seed=0)
        assert [table.cell(k.value, "analytic_n64") for k in K] == [640, 186, 64, 80, 71]
        assert [table.cell(k.value, "sim_n256") for k in K] == [3584, 762, 256, 288, 275]

    def test_area_table_values(self):
        table = bench.table_area(ns=(64, 256))
        assert [table.cell(k.value, "arbiters_n64") for k in K] == [63, 63, 64, 80, 9]
        assert [table.cell(k.value, "arbiters_n256") for k in K] == [255, 255, 256, 288, 12]

    def test_area_table_small_hat_point(self):
        table = bench.table_area(ns=(4,))
        assert table.cell("hier-tree", "arbiters_n4") == 3

    def test_hat_calibrated_area_reference_point(self):
        assert bench.hat_calibrated_area(64) == pytest.approx(59.4)

    def test_cam_area_reference_table(self):
        table = bench.cam_area_reference()
        by = {(r["entries"], r["width"]): r for r in table.rows}
        assert by[(16, 11)]["conventional_um2"] == 225.3
        assert by[(512, 11)]["proposed_um2"] == 7620.6
        assert "no area model is simulated" in table.footer

    def test_csv_round_trips(self):
        table = bench.table_area(ns=(64,))
        text = table.to_csv()
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0][0] == "arch"
        assert len(rows) == 1 + 5 + 1  # header, architectures, footer
        assert rows[-1][0].startswith("# ")

    def test_footer_carries_tolerance_policy(self):
        assert "exact" in bench.table_latency_sparse(ns=(64,), trials=64).footer


class TestSweep:
    def test_invalid_points_skipped(self):
        points = bench.sweep_scaling(ns=(8,), mode="sparse", trials=64, seed=0)
        archs = {p.arch for p in points}
        # 8 is a power of two but neither a square nor a power of four
        assert archs == {"binary", "greedy", "token-ring"}

    def test_sparse_hat_column(self):
        points = bench.sweep_scaling(ns=(16, 64, 256, 1024), mode="sparse", trials=256, seed=0)
        hat = {p.n: p.sim_mean for p in points if p.arch == "hier-tree"}
        assert hat == {16: 4, 64: 6, 256: 8, 1024: 10}

    def test_burst_binary_1024(self):
        points = bench.sweep_scaling(ns=(1024,), mode="burst", seed=0)
        binary = next(p for p in points if p.arch == "binary")
        assert binary.sim_mean == 18432 == analytic_burst_latency(K.BINARY_TREE, 1024)

    def test_rows_csv_parses_and_round_trips(self):
        points = bench.sweep_scaling(ns=(16,), mode="sparse", trials=128, seed=3)
        text = bench.sweep_rows_csv(points)
        rows = list(csv.DictReader(io.StringIO(text)))
        assert len(rows) == len(points)
        assert {r["arch"] for r in rows} == {p.arch for p in points}
        again = bench.sweep_rows_csv(bench.sweep_scaling(ns=(16,), mode="sparse", trials=128, seed=3))
        assert again == text

    def test_parallel_jobs_identical_output(self):
        serial = bench.sweep_scaling(ns=(16, 64), mode="burst", seed=1, jobs=1)
        parallel = bench.sweep_scaling(ns=(16, 64), mode="burst", seed=1, jobs=2)
        assert serial == parallel


@pytest.fixture(scope="module")
def rows():
    return bench.cam_report(design_points=((16, 11),), searches=60, seed=0)


class TestCamReport:

    def test_schema(self, rows):
        text = bench.cam_rows_csv(rows)
        parsed = list(csv.DictReader(io.StringIO(text)))
        assert set(parsed[0]) == {
            "entries", "width", "mode", "feedback", "spec_tail", "case", "cycle_mean", "energy_mean", "seed",
        }
        assert len(parsed) == len(rows)

    def test_all_match_speculative_variant_equals_plain_cscd(self, rows):
        by = {(bench.variant_name(r), r.case): r for r in rows}
        spec = by[("cscd+speculative", "all-match")]
        plain = by[("cscd", "all-match")]
        assert spec.energy_mean == pytest.approx(plain.energy_mean)
        assert spec.cycle_mean == pytest.approx(plain.cycle_mean)

    def test_full_mechanisms_minimize_energy(self, rows):
        for case in bench.CAM_CASES:
            by = {bench.variant_name(r): r for r in rows if r.case == case}
            assert by["cscd+full"].energy_mean <= min(v.energy_mean for v in by.values()) + 1e-9

    def test_normalized_view_baseline_is_unity(self, rows):
        normalized = bench.cam_report_normalized(rows)
        for row in normalized:
            if row["variant"] == "conventional":
                assert row["cycle_vs_baseline"] == pytest.approx(1.0)
                assert row["energy_vs_baseline"] == pytest.approx(1.0)
            else:
                assert row["cycle_vs_baseline"] <= 1.0 + 1e-9


class TestDemo:
    def test_matching_tag_entries_flagged(self):
        result = bench.aer_demo(n=16, cam_entries=12, tags=[5, 1, 2, 3, 4, 0, 6, 7, 8, 5, 10, 11])
        rec5 = next(r for r in result.records if r.neuron == 5)
        assert rec5.targets == [0, 9]

    def test_empty_cam_never_matches(self):
        result = bench.aer_demo(n=16, cam_entries=8, tags=[0b11111111111] * 8)
        assert result.total_matches == 0

    def test_identity_burst_one_hot(self):
        result = bench.aer_demo(n=64, cam_entries=64)
        assert result.total_spikes == 64
        assert result.total_matches == 64
        assert all(r.targets == [r.neuron] for r in result.records)

    def test_width_must_hold_addresses(self):
        with pytest.raises(ValueError):
            bench.aer_demo(n=64, cam_entries=8, cam_width=3)


class TestJsonSummary:
    def test_shape_and_determinism(self):
        table = bench.table_area(ns=(64,))
        a = bench.json_summary({"area": table.to_dict()}, config={"n": 64})
        b = bench.json_summary({"area": table.to_dict()}, config={"n": 64})
        assert a == b
        payload = json.loads(a)
        assert set(payload) >= {"tables", "violations", "config_hash"}
        assert payload["tables"]["area"]["rows"]
