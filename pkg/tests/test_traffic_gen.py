from __future__ import annotations

import math

import numpy as np
import pytest

from robustflow import persist
from robustflow.traffic_gen import (
    DAY_S,
    MEGABIT_BYTES,
    TRACE_START_CLOCK_S,
    AnomalySpec,
    DiurnalProfile,
    GeneratorConfig,
    NodeSpec,
    default_diurnal_profile,
    generate,
    size_anomaly,
    week_config,
)

FLAT = DiurnalProfile(((0.0, 1.0),))


class TestProfile:
    def test_peak_and_trough(self):
        p = default_diurnal_profile()
        assert float(p(20 * 3600)) == 1.0
        assert float(p(4 * 3600)) == pytest.approx(0.2)
        assert len(p.samples) == 24
        assert max(v for _, v in p.samples) == 1.0

    def test_periodic(self):
        p = default_diurnal_profile()
        t = np.linspace(0, DAY_S, 97)
        assert np.allclose(p(t), p(t + DAY_S))

    def test_cosine_variant(self):
        p = default_diurnal_profile(sharpness=0)
        assert float(p(12 * 3600)) == pytest.approx(0.6)

    @pytest.mark.parametrize("samples", [((0.5, 1.0), (0.2, 0.5)), ((0.0, 0.5),), ((0.0, 1.0), (0.5, 0.0))])
    def test_invalid_samples(self, samples):
        with pytest.raises(ValueError):
            DiurnalProfile(samples)


class TestGenerate:
    def test_poisson_count(self):
        flows, _ = generate([NodeSpec("10.0.0.1")], FLAT, 1e5, seed=3)
        assert abs(len(flows) - 1e4) <= 3 * math.sqrt(1e4)

    def test_count_matches_profile_integral(self):
        prof = default_diurnal_profile()
        flows, _ = generate([NodeSpec("10.0.0.1")], prof, DAY_S, seed=5)
        t = np.array([f.start_time for f in flows])
        a, b = 6 * 3600.0, 14 * 3600.0
        expected = 0.1 * prof.integral(a, b)
        assert abs(np.sum((t >= a) & (t < b)) - expected) <= 4 * math.sqrt(expected)

    def test_reference_parameters(self):
        cfg = week_config()
        node = cfg.nodes[0]
        assert len(cfg.nodes) == 9 and cfg.horizon_s == 168 * 3600
        assert node.peak_rate_fps == 0.1
        assert node.peak_mean_size_bytes == 4 * MEGABIT_BYTES
        assert node.size_variance == pytest.approx(0.01 * MEGABIT_BYTES**2)
        assert cfg.start_clock_s == 17 * 3600

    def test_anomaly_scales_mean_size(self):
        prof = default_diurnal_profile()
        spec = size_anomaly("10.0.0.1")
        node = NodeSpec("10.0.0.1", peak_rate_fps=2.0)
        flows, _ = generate([node], prof, 3 * DAY_S, [spec], seed=7, start_clock_s=TRACE_START_CLOCK_S)
        inside = [f for f in flows if spec.start_s <= f.start_time < spec.end_s]
        m = node.peak_mean_size_bytes * prof(np.array([f.start_time for f in inside]) + TRACE_START_CLOCK_S)
        ratio = np.mean([f.size_bytes for f in inside]) / np.mean(m)
        assert len(inside) > 1000
        assert ratio == pytest.approx(1.3, abs=0.01)

    def test_anomaly_only_touches_its_node(self):
        nodes = [NodeSpec("10.0.0.1"), NodeSpec("10.0.0.2")]
        spec = AnomalySpec("10.0.0.2", 1000.0, 5000.0, 3.0)
        base, _ = generate(nodes, FLAT, 10_000, seed=1)
        hit, _ = generate(nodes, FLAT, 10_000, [spec], seed=1)
        assert [f.start_time for f in base] == [f.start_time for f in hit]
        for a, b in zip(base, hit):
            inside = a.user_ip == "10.0.0.2" and 1000 <= a.start_time < 6000
            assert (b.size_bytes > a.size_bytes) if inside else (a == b)

    def test_sizes_floored_at_one_byte(self):
        node = NodeSpec("10.0.0.1", peak_mean_size_bytes=1.0, size_variance=1e6)
        flows, _ = generate([node], FLAT, 10_000, seed=2)
        assert min(f.size_bytes for f in flows) == 1.0

    def test_hourly_counts_follow_profile(self):
        cfg = week_config(seed=4)
        flows, _ = generate(cfg.nodes, cfg.profile, cfg.horizon_s, seed=cfg.seed, start_clock_s=cfg.start_clock_s)
        hours = np.floor(np.array([f.start_time for f in flows]) / 3600).astype(int)
        counts = np.bincount(hours, minlength=168)
        centers = np.arange(168) * 3600 + 1800 + cfg.start_clock_s
        assert np.corrcoef(counts, default_diurnal_profile()(centers))[0, 1] > 0.9

    def test_ground_truth_matches_spec(self):
        spec = size_anomaly()
        _, truth = generate([NodeSpec("10.0.0.2")], FLAT, 7 * DAY_S, [spec], seed=0)
        assert truth.intervals() == [(59 * 3600.0, 59 * 3600.0 + 80 * 60.0)]
        assert truth.anomalies[0]["ip"] == "10.0.0.2"
        assert truth.horizon == (0.0, 7 * DAY_S)

    def test_sorted_output(self):
        flows, _ = generate([NodeSpec("a"), NodeSpec("b")], FLAT, 2000, seed=0)
        assert [f.start_time for f in flows] == sorted(f.start_time for f in flows)

    def test_same_seed_byte_identical(self, tmp_path):
        cfg = week_config(seed=11, anomalies=[size_anomaly()])
        for name in ("a.csv", "b.csv"):
            flows, _ = generate(cfg.nodes, None, DAY_S, cfg.anomalies, cfg.seed, cfg.start_clock_s)
            persist.write_flows(tmp_path / name, flows)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            generate([NodeSpec("a")], FLAT, 0)


class TestConfig:
    def test_json_round_trip(self):
        cfg = week_config(seed=3, anomalies=[size_anomaly()])
        cfg.profile = default_diurnal_profile()
        back = GeneratorConfig.from_json(cfg.to_json())
        assert back.to_json() == cfg.to_json()

    def test_invalid_node(self):
        with pytest.raises(ValueError):
            NodeSpec("a", peak_rate_fps=0)

    def test_invalid_anomaly(self):
        with pytest.raises(ValueError):
            AnomalySpec("a", 0.0, 0.0)
