from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import pytest

from robustflow.errors import Infeasible
from robustflow.pipeline import EstimateResult, RunConfig, detect_flows, estimate, evaluate, horizon_for
from robustflow.traffic_gen import (
    TRACE_START_CLOCK_S,
    GroundTruth,
    generate,
    size_anomaly,
    week_config,
)

REFERENCE_SEED = 1
TEST_SEED = 2


def run_generator(cfg):
    return generate(cfg.nodes, cfg.profile, cfg.horizon_s, cfg.anomalies, cfg.seed, cfg.start_clock_s)


def clock_hour(t: float) -> float:
    """Clock time of day (hours) of a trace-relative time in the week-long setup."""
    return ((t + TRACE_START_CLOCK_S) % 86400.0) / 3600.0


@dataclass
class WeekRun:
    cfg: RunConfig
    reference: list
    test: list
    truth: GroundTruth
    free: EstimateResult
    based: Optional[EstimateResult]
    based_error: Optional[Infeasible]
    roundtrip: list
    robust_test: list
    vanilla_test: list
    vanilla_reference: list
    robust_metrics: dict
    vanilla_metrics: dict


@pytest.fixture(scope="session")
def week_run() -> WeekRun:
    """One week of reference traffic and one week of test traffic with the injected anomaly."""
    cfg = RunConfig()
    reference, _ = run_generator(week_config(REFERENCE_SEED))
    test, truth = run_generator(week_config(TEST_SEED, [size_anomaly()]))
    free = estimate(reference, cfg, method="free")
    based, based_error = None, None
    try:
        based = estimate(reference, cfg, method="based")
    except Infeasible as exc:
        based_error = exc
    ref_horizon = horizon_for(reference, cfg)
    test_horizon = (0.0, truth.horizon[1])
    roundtrip = detect_flows(reference, free.features, free.robust, cfg, ref_horizon)
    robust_test = detect_flows(test, free.features, free.robust, cfg, test_horizon)
    vanilla_test = detect_flows(test, free.features, free.vanilla, cfg, test_horizon)
    vanilla_reference = detect_flows(reference, free.features, free.vanilla, cfg, ref_horizon)
    size = cfg.windowing.window_size_s
    return WeekRun(
        cfg, reference, test, truth, free, based, based_error, roundtrip,
        robust_test, vanilla_test, vanilla_reference,
        evaluate(robust_test, truth, size), evaluate(vanilla_test, truth, size),
    )
