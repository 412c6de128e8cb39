"""End-to-end estimate / detect / evaluate, shared by the CLI and the tests."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .detector import DetectionConfig, WindowVerdict, detect, vanilla_family
from .errors import EmptyReference
from .features import FeatureModel, fit_features, quantize_flows
from .flow_model import Flow, WindowingConfig, aggregate_windows
from .measures import DivergenceConfig
from .pl_learning import HistogramConfig, PLFamily, PeriodEstimate, estimate_periods, generate_candidates
from .pl_refinement import CoverageProblem, RefinementParams, Selection, build_coverage, refine_family
from .traffic_gen import GroundTruth

logger = logging.getLogger(__name__)

METHODS = ("free", "based", "both")


@dataclass
class RunConfig:
    windowing: WindowingConfig = field(default_factory=WindowingConfig)
    k: int = 2
    levels: tuple[int, int, int] = (2, 2, 8)
    seed: int = 0
    divergence: DivergenceConfig = field(default_factory=DivergenceConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    refinement: RefinementParams = field(default_factory=RefinementParams)
    histogram: HistogramConfig = field(default_factory=HistogramConfig)
    priors: list[tuple[float, float]] = field(default_factory=list)
    horizon_start: float = 0.0
    horizon_end: Optional[float] = None

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        data = dict(data)
        kw = {}
        if "windowing" in data:
            kw["windowing"] = WindowingConfig(**data.pop("windowing"))
        if "divergence" in data:
            kw["divergence"] = DivergenceConfig(**data.pop("divergence"))
        if "detection" in data:
            kw["detection"] = DetectionConfig(**data.pop("detection"))
        if "refinement" in data:
            kw["refinement"] = RefinementParams(**data.pop("refinement"))
        if "histogram" in data:
            kw["histogram"] = HistogramConfig(**data.pop("histogram"))
        if "levels" in data:
            kw["levels"] = tuple(int(v) for v in data.pop("levels"))
        if "priors" in data:
            kw["priors"] = [(float(a), float(b)) for a, b in data.pop("priors")]
        for key in ("k", "seed"):
            if key in data:
                kw[key] = int(data.pop(key))
        for key in ("horizon_start", "horizon_end"):
            if key in data:
                v = data.pop(key)
                kw[key] = None if v is None else float(v)
        if data:
            raise ValueError(f"unknown config key(s): {sorted(data)}")
        cfg = cls(**kw)
        if cfg.k < 1 or len(cfg.levels) != 3 or min(cfg.levels) < 1:
            raise ValueError("k and all quantization levels must be >= 1")
        return cfg

    def to_json(self) -> dict:
        w, d, r, h = self.windowing, self.detection, self.refinement, self.histogram
        return {
            "windowing": {"window_size_s": w.window_size_s, "hop_s": w.hop_s, "flow_gap_s": w.flow_gap_s},
            "k": self.k,
            "levels": list(self.levels),
            "seed": self.seed,
            "divergence": {"epsilon": self.divergence.epsilon},
            "detection": {"lambda_free": d.lambda_free, "lambda_based": d.lambda_based,
                          "min_flows_per_window": d.min_flows_per_window},
            "refinement": {"gamma_start": r.gamma_start, "r": r.r, "gamma_th": r.gamma_th},
            "histogram": {"bin_width_s": h.bin_width_s, "freq_threshold": h.freq_threshold,
                          "peak_min_prominence": h.peak_min_prominence},
            "priors": [list(p) for p in self.priors],
            "horizon_start": self.horizon_start,
            "horizon_end": self.horizon_end,
        }


def horizon_for(flows: Sequence, cfg: RunConfig) -> tuple[float, float]:
    if cfg.horizon_end is not None:
        return cfg.horizon_start, cfg.horizon_end
    if not flows:
        raise EmptyReference("no flows to derive a horizon from")
    last = max(f.start_time for f in flows)
    return cfg.horizon_start, max(last, cfg.horizon_start) + 1e-6


@dataclass
class EstimateResult:
    features: FeatureModel
    estimates: dict[int, PeriodEstimate]
    candidates: tuple[PLFamily, PLFamily]
    problems: tuple[Optional[CoverageProblem], Optional[CoverageProblem]]
    selections: tuple[Optional[Selection], Optional[Selection]]
    robust: tuple[Optional[PLFamily], Optional[PLFamily]]
    vanilla: tuple[PLFamily, PLFamily]

    def report(self) -> dict:
        out = {
            "alphabet_sizes": list(self.features.alphabet.sizes),
            "period_estimates": {
                str(a): {"t_d": e.t_d, "t_p": e.t_p} for a, e in sorted(self.estimates.items())
            },
        }
        for name, cand, prob, sel in zip(("free", "based"), self.candidates, self.problems, self.selections):
            if prob is None:
                out[name] = {"candidates": len(cand), "refined": False}
                continue
            out[name] = {
                "candidates": len(cand),
                "windows": int(prob.shape[0]),
                "d_shape": list(prob.d.shape),
                "lambda": prob.lam,
                "chosen": sel.indices,
                "primary_cost": sel.primary_cost,
                "secondary_cost": sel.secondary_cost,
                "chosen_provenance": [
                    {"source": cand.provenance[j].source, "segment": cand.provenance[j].segment,
                     "t_d": cand.provenance[j].t_d, "t_p": cand.provenance[j].t_p,
                     "tod_start": cand.provenance[j].tod_start, "tod_end": cand.provenance[j].tod_end}
                    for j in sel.indices
                ],
            }
        return out


def quantized_windows(flows: Sequence[Flow], model: FeatureModel, cfg: RunConfig, horizon=None):
    qflows = quantize_flows(flows, model.clusters, model.quantizer)
    if horizon is None:
        horizon = horizon_for(flows, cfg)
    return qflows, aggregate_windows(qflows, cfg.windowing, horizon)


def estimate(flows: Sequence[Flow], cfg: RunConfig, method: str = "both") -> EstimateResult:
    """Fit features, learn candidate PLs and refine the families on reference flows.

    ``method`` selects which families are refined ("free", "based" or "both");
    a family that is not refined is left as ``None`` in the result.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if not flows:
        raise EmptyReference("reference trace has no flows")
    model = fit_features(flows, cfg.k, cfg.levels, cfg.seed)
    qflows, windows = quantized_windows(flows, model, cfg)
    alphabet = model.alphabet
    estimates = estimate_periods(qflows, alphabet, cfg.histogram)
    for a, e in estimates.items():
        logger.info("feature %d: t_d=%s t_p=%s", a, e.t_d, e.t_p)
    cand_free, cand_based = generate_candidates(qflows, alphabet, estimates, cfg.priors, cfg.horizon_start)
    min_flows = cfg.detection.min_flows_per_window
    problems, selections, robust = [None, None], [None, None], [None, None]
    for slot, (name, cand, lam) in enumerate(
        (("free", cand_free, cfg.detection.lambda_free), ("based", cand_based, cfg.detection.lambda_based))
    ):
        if method in (name, "both"):
            problems[slot] = build_coverage(windows, cand, lam, cfg.divergence, min_flows)
            robust[slot], selections[slot] = refine_family(problems[slot], cand, cfg.refinement)
    return EstimateResult(
        features=model,
        estimates=estimates,
        candidates=(cand_free, cand_based),
        problems=tuple(problems),
        selections=tuple(selections),
        robust=tuple(robust),
        vanilla=vanilla_family(qflows, alphabet.sizes),
    )


def detect_flows(
    flows: Sequence[Flow],
    model: FeatureModel,
    families: tuple[Optional[PLFamily], Optional[PLFamily]],
    cfg: RunConfig,
    horizon=None,
) -> list[WindowVerdict]:
    _, windows = quantized_windows(flows, model, cfg, horizon)
    return detect(windows, families, cfg.detection, cfg.divergence, model.alphabet.total)


def evaluate(verdicts: Sequence[WindowVerdict], truth: GroundTruth, window_size_s: float) -> dict:
    """Window-level confusion counts and per-anomaly detection for both tests."""
    intervals = truth.intervals()

    def overlapping(v: WindowVerdict) -> list[int]:
        lo, hi = v.start_time, v.start_time + window_size_s
        return [k for k, (a, b) in enumerate(intervals) if lo < b and hi > a]

    out = {"windows": len(verdicts), "anomalies": len(intervals)}
    for name in ("free", "based"):
        tp = fp = fn = tn = 0
        detected = set()
        fp_windows = []
        scored = 0
        for v in verdicts:
            if getattr(v, f"div_{name}") is None:
                continue
            scored += 1
            alarm = getattr(v, f"alarm_{name}")
            hits = overlapping(v)
            if hits:
                if alarm:
                    tp += 1
                    detected.update(hits)
                else:
                    fn += 1
            elif alarm:
                fp += 1
                fp_windows.append(v.index)
            else:
                tn += 1
        out[name] = {
            "scored_windows": scored,
            "tp": tp, "fp": fp, "fn": fn, "tn": tn,
            "detected": len(detected),
            "detected_ids": sorted(detected),
            "false_alarm_rate": fp / (fp + tn) if fp + tn else 0.0,
            "false_alarm_windows": fp_windows,
        }
    return out
