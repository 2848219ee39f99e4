import numpy as np
import pytest

from polyexp import bench
from polyexp.bench import (BenchRecord, MemoryCapExceeded, bench_grid, emit_csv,
                           expmap_error, memory_model, op_model, read_csv,
                           resolve_memory_cap)
from polyexp.synth import rot_z

TABLE_ANGLES = [-np.pi / 2, -np.pi / 4, -np.pi / 6, np.pi / 6, np.pi / 4,
                np.pi / 3, np.pi / 2, 2 * np.pi / 3, 3 * np.pi / 4]


class TestExpmapError:
    def test_identity(self):
        assert expmap_error(np.eye(4), "squaring") < 1e-15
        assert expmap_error(np.eye(4), "eigen") < 1e-15

    @pytest.mark.parametrize("theta", TABLE_ANGLES)
    @pytest.mark.parametrize("backend", ["squaring", "eigen"])
    def test_rotation_table_parity(self, theta, backend):
        # both backends stay at round-off level across the angle sweep
        assert expmap_error(rot_z(theta), backend) <= 1e-14

    def test_quarter_turn_eigen(self):
        assert expmap_error(rot_z(np.pi / 2), "eigen") <= 1e-14

    def test_two_thirds_turn_squaring(self):
        assert expmap_error(rot_z(2 * np.pi / 3), "squaring") <= 1e-14


class TestMemoryModel:
    def test_eigen_below_squaring_s6(self):
        for n in (30, 50, 100, 200):
            assert memory_model("eigen", n) < memory_model("squaring", n, s=6)

    def test_eigen_grows_only_by_outputs(self):
        n = 30
        per_out = 16 * 8 * n ** 3
        m1 = memory_model("eigen", n, m_timepoints=1)
        m8 = memory_model("eigen", n, m_timepoints=8)
        assert m8 - m1 == 7 * per_out

    def test_squaring_op_count_per_s(self):
        # one more squaring multiplication per unit of s
        for s in range(0, 8):
            assert (op_model("squaring", s=s + 1)["per_timepoint"]
                    == op_model("squaring", s=s)["per_timepoint"] + 1)
        assert op_model("squaring", s=4)["squaring_multiplications"] == 4

    def test_eigen_incremental_two_multiplications(self):
        ops = op_model("eigen", m_timepoints=8)
        assert ops["per_timepoint"] == 2
        assert ops["total"] == ops["setup"] + 8 * 2

    def test_eigen_timepoint_cost_ratio(self):
        sq = op_model("squaring", s=6)["per_timepoint"]
        ei = op_model("eigen")["per_timepoint"]
        assert ei <= sq / 3

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            memory_model("gpu", 10)


class TestBenchGrid:
    def test_small_grid_both_methods(self):
        for method in ("squaring", "eigen"):
            rec = bench_grid(8, method, s=6, repeats=1)
            assert rec.wall_time > 0
            assert rec.measured_error <= 1e-12
            assert rec.modeled_peak_bytes == memory_model(method, 8, s=6)

    def test_memory_cap_refusal(self):
        with pytest.raises(MemoryCapExceeded):
            bench_grid(100, "squaring", memory_cap_bytes=1 << 20)

    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv(bench.ENV_MEMORY_CAP, "12345")
        assert resolve_memory_cap() == 12345
        assert resolve_memory_cap(777) == 777

    def test_determinism_across_repeats(self):
        a = bench_grid(8, "eigen", repeats=2)
        b = bench_grid(8, "eigen", repeats=3)
        assert a.measured_error == b.measured_error


class TestCsv:
    def test_header_only_for_empty(self, tmp_path):
        p = tmp_path / "empty.csv"
        emit_csv([], p)
        lines = p.read_text().strip().splitlines()
        assert lines == ["method,n,s,repeats,wall_time_s,modeled_peak_bytes,max_error"]

    def test_two_records_three_lines(self, tmp_path):
        recs = [BenchRecord("squaring", 8, 6, 1, 0.5, 1000, 1e-15),
                BenchRecord("eigen", 8, 6, 1, 0.7, 900, 2e-15)]
        p = tmp_path / "two.csv"
        emit_csv(recs, p)
        assert len(p.read_text().strip().splitlines()) == 3

    def test_round_trip(self, tmp_path):
        recs = [BenchRecord("squaring", 30, 6, 3, 0.123456789, 41472000, 3.5e-15),
                BenchRecord("eigen", 30, 6, 3, 0.987654321, 34560000, 1.5e-15)]
        p = tmp_path / "rt.csv"
        emit_csv(recs, p)
        back = read_csv(p)
        for a, b in zip(recs, back):
            assert a.method == b.method and a.grid_n == b.grid_n and a.s == b.s
            assert abs(a.wall_time - b.wall_time) < 1e-9
            assert a.modeled_peak_bytes == b.modeled_peak_bytes
            assert abs(a.measured_error - b.measured_error) < 1e-21
