"""Generalized Hoeffding tests over a finite PL family, per window."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import AlphabetMismatch, EmptyFamily, EmptyReference
from .flow_model import Window
from .measures import (
    DivergenceConfig,
    ModelBasedMeasure,
    ModelFreeMeasure,
    d_based,
    d_free,
    model_based_measure,
    model_free_measure,
)
from .pl_learning import MODEL_BASED, MODEL_FREE, PLFamily, Provenance


@dataclass(frozen=True)
class DetectionConfig:
    lambda_free: float = 0.6
    lambda_based: float = 0.4
    min_flows_per_window: int = 10

    def __post_init__(self):
        if not (self.lambda_free > 0 and self.lambda_based > 0):
            raise ValueError("thresholds must be positive")
        if self.min_flows_per_window < 0:
            raise ValueError("min_flows_per_window must be >= 0")


@dataclass(frozen=True)
class WindowVerdict:
    index: int
    start_time: float
    flow_count: int
    div_free: Optional[float] = None
    argmin_free: Optional[int] = None
    alarm_free: bool = False
    div_based: Optional[float] = None
    argmin_based: Optional[int] = None
    alarm_based: bool = False

    @property
    def sparse(self) -> bool:
        return self.div_free is None and self.div_based is None


def _argmin(values: list[float]) -> tuple[float, int]:
    j = int(np.argmin(values))  # first minimum
    return float(values[j]), j


def generalized_divergence_free(
    nu: ModelFreeMeasure, family: PLFamily, cfg: DivergenceConfig = DivergenceConfig()
) -> tuple[float, int]:
    """Smallest model-free divergence to any PL of the family, and which PL attains it."""
    if not len(family):
        raise EmptyFamily("model-free family is empty")
    return _argmin([d_free(nu, pl, cfg) for pl in family.pls])


def generalized_divergence_based(
    q: ModelBasedMeasure, family: PLFamily, cfg: DivergenceConfig = DivergenceConfig()
) -> tuple[float, int]:
    if not len(family):
        raise EmptyFamily("model-based family is empty")
    return _argmin([d_based(q, pl, cfg) for pl in family.pls])


def detect(
    windows: Sequence[Window],
    families: tuple[Optional[PLFamily], Optional[PLFamily]],
    cfg: DetectionConfig = DetectionConfig(),
    div_cfg: DivergenceConfig = DivergenceConfig(),
    alphabet_size: Optional[int] = None,
) -> list[WindowVerdict]:
    """One verdict per window; pass ``None`` for a family to skip that test."""
    free_fam, based_fam = families
    for fam, kind in ((free_fam, MODEL_FREE), (based_fam, MODEL_BASED)):
        if fam is None:
            continue
        if fam.kind != kind:
            raise ValueError(f"expected a {kind} family, got {fam.kind}")
        if alphabet_size is not None and fam.alphabet_size != alphabet_size:
            raise AlphabetMismatch(f"{kind} family has |alphabet|={fam.alphabet_size}, windows use {alphabet_size}")
    size = alphabet_size
    if size is None:
        size = (free_fam or based_fam).alphabet_size
    verdicts = []
    for w in windows:
        n = len(w.flows)
        fields: dict = {}
        if n >= cfg.min_flows_per_window and n > 0:
            if free_fam is not None:
                value, j = generalized_divergence_free(model_free_measure(w.flows, size), free_fam, div_cfg)
                fields.update(div_free=value, argmin_free=j, alarm_free=value >= cfg.lambda_free)
            if based_fam is not None:
                q = model_based_measure(w.flows, size)
                if not q.insufficient:
                    value, j = generalized_divergence_based(q, based_fam, div_cfg)
                    fields.update(div_based=value, argmin_based=j, alarm_based=value >= cfg.lambda_based)
        verdicts.append(WindowVerdict(w.index, w.start, n, **fields))
    return verdicts


def vanilla_family(flows, alphabet_sizes: tuple[int, int, int, int]) -> tuple[PLFamily, PLFamily]:
    """Single-PL families fitted to all reference flows (the stationary baseline)."""
    if not len(flows):
        raise EmptyReference("vanilla PL needs at least one reference flow")
    size = int(np.prod(alphabet_sizes))
    prov = Provenance("vanilla", None, None, 0, 0.0, 0.0)
    return (
        PLFamily(MODEL_FREE, [model_free_measure(flows, size)], [prov], tuple(alphabet_sizes)),
        PLFamily(MODEL_BASED, [model_based_measure(flows, size)], [prov], tuple(alphabet_sizes)),
    )
