"""Period estimation from per-channel inter-arrival histograms and
candidate PL generation by pooling matching segments across periods.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import NoPeriodAvailable
from .features import QuantizedFlow, SymbolAlphabet
from .measures import (
    ModelBasedMeasure,
    ModelFreeMeasure,
    based_from_counts,
    free_from_counts,
    pair_counts,
    symbols_of,
)

logger = logging.getLogger(__name__)

MODEL_FREE = "model-free"
MODEL_BASED = "model-based"


@dataclass(frozen=True, eq=False)
class Channel:
    """Flows whose feature ``feature`` (1-based) is quantized to ``level``."""

    feature: int
    level: int
    times: np.ndarray


@dataclass(frozen=True)
class PeriodEstimate:
    t_d: Optional[float] = None
    t_p: Optional[float] = None

    @property
    def periodic(self) -> bool:
        return self.t_d is not None and self.t_p is not None


@dataclass(frozen=True)
class HistogramConfig:
    bin_width_s: float = 600.0
    freq_threshold: float = 0.05
    peak_min_prominence: float = 0.02

    def __post_init__(self):
        if not self.bin_width_s > 0:
            raise ValueError("bin_width_s must be positive")
        for name in ("freq_threshold", "peak_min_prominence"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class Provenance:
    """Where a candidate PL came from.

    ``source`` is ``"feature-<a>"``, ``"prior-<i>"`` or ``"vanilla"``;
    ``tod_start``/``tod_end`` give the segment's offset range inside the
    period, in seconds from the horizon start.
    """

    source: str
    t_d: Optional[float]
    t_p: Optional[float]
    segment: int
    tod_start: float
    tod_end: float

    @property
    def key(self) -> tuple:
        return (self.t_d, self.t_p, self.segment)


@dataclass
class PLFamily:
    kind: str
    pls: list
    provenance: list[Provenance]
    alphabet_sizes: tuple[int, int, int, int]
    c_v: list[Optional[float]] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in (MODEL_FREE, MODEL_BASED):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if len(self.pls) != len(self.provenance):
            raise ValueError("one provenance record per PL required")
        if not self.c_v:
            self.c_v = [None] * len(self.pls)
        size = math.prod(self.alphabet_sizes)
        for pl in self.pls:
            if pl.alphabet_size != size:
                raise ValueError("all PLs must share the family alphabet")

    def __len__(self) -> int:
        return len(self.pls)

    @property
    def alphabet_size(self) -> int:
        return math.prod(self.alphabet_sizes)

    def subset(self, indices: Sequence[int], c_v: Optional[Sequence[float]] = None) -> "PLFamily":
        idx = list(indices)
        return PLFamily(
            self.kind,
            [self.pls[i] for i in idx],
            [self.provenance[i] for i in idx],
            self.alphabet_sizes,
            [float(c_v[i]) for i in idx] if c_v is not None else [self.c_v[i] for i in idx],
        )


def extract_channels(flows: Sequence[QuantizedFlow], alphabet: SymbolAlphabet) -> list[Channel]:
    if not flows:
        return []
    times = np.fromiter((f.start_time for f in flows), dtype=float, count=len(flows))
    levels = alphabet.decode(symbols_of(flows))
    order = np.argsort(times, kind="stable")
    times, levels = times[order], levels[order]
    channels = []
    for axis in range(4):
        col = levels[:, axis]
        for level in np.unique(col):
            channels.append(Channel(axis + 1, int(level), times[col == level]))
    return channels


def _local_peaks(counts: np.ndarray) -> list[int]:
    """Bins of runs of equal counts that exceed both neighbors; leftmost bin of each run."""
    peaks = []
    n = len(counts)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and counts[j + 1] == counts[i]:
            j += 1
        left = counts[i - 1] if i > 0 else 0
        right = counts[j + 1] if j + 1 < n else 0
        if counts[i] > left and counts[i] > right:
            peaks.append(i)
        i = j + 1
    return peaks


def estimate_channel(ch: Channel, cfg: HistogramConfig = HistogramConfig()) -> PeriodEstimate:
    """Change timescale and period from the histogram of inter-arrival times.

    ``t_d`` is the right edge of the first bin whose relative frequency drops
    below ``freq_threshold``.  Peaks are looked for among intervals longer
    than ``t_d``, with frequencies taken relative to those intervals only; the
    mean peak location approximates half the period.
    """
    times = np.sort(np.asarray(ch.times, dtype=float))
    if len(times) < 2:
        return PeriodEstimate()
    intervals = np.diff(times)
    w = cfg.bin_width_s
    bins = np.floor(intervals / w).astype(np.int64)
    counts = np.bincount(bins)
    rel = counts / len(intervals)
    below = np.flatnonzero(rel < cfg.freq_threshold)
    first = int(below[0]) if len(below) else len(counts)
    t_d = (first + 1) * w

    tail = bins[intervals > t_d]
    if len(tail) == 0:
        return PeriodEstimate(t_d=t_d)
    tail_counts = np.bincount(tail, minlength=len(counts)).astype(float)
    tail_counts[: first + 1] = 0
    tail_rel = tail_counts / len(tail)
    peaks = [b for b in _local_peaks(tail_counts) if tail_rel[b] >= cfg.peak_min_prominence]
    if not peaks:
        return PeriodEstimate(t_d=t_d)
    centers = (np.asarray(peaks, dtype=float) + 0.5) * w
    return PeriodEstimate(t_d=t_d, t_p=float(2.0 * centers.mean()))


def estimate_feature(estimates: Sequence[PeriodEstimate]) -> PeriodEstimate:
    if not estimates:
        raise ValueError("no channel estimates given")
    tds = [e.t_d for e in estimates if e.t_d is not None]
    tps = [e.t_p for e in estimates if e.t_p is not None]
    return PeriodEstimate(
        t_d=float(np.mean(tds)) if tds else None,
        t_p=float(np.mean(tps)) if tps else None,
    )


def estimate_periods(
    flows: Sequence[QuantizedFlow], alphabet: SymbolAlphabet, cfg: HistogramConfig = HistogramConfig()
) -> dict[int, PeriodEstimate]:
    """Per-feature estimates keyed by feature number 1..4."""
    by_feature: dict[int, list[PeriodEstimate]] = {}
    for ch in extract_channels(flows, alphabet):
        by_feature.setdefault(ch.feature, []).append(estimate_channel(ch, cfg))
    return {a: estimate_feature(ests) for a, ests in sorted(by_feature.items())}


def segment_layout(t_d: float, t_p: float) -> tuple[int, float]:
    """Number of segments per period and their length (they tile the period)."""
    n = max(1, int(math.floor(t_p / t_d)))
    return n, t_p / n


def segment_labels(times: np.ndarray, t_d: float, t_p: float, t0: float = 0.0) -> np.ndarray:
    n, length = segment_layout(t_d, t_p)
    phase = np.mod(np.asarray(times, dtype=float) - t0, t_p)
    return np.minimum((phase // length).astype(np.int64), n - 1)


def _segment_pair_counts(symbols: np.ndarray, times: np.ndarray, labels: np.ndarray, t_p: float, t0: float,
                         n_segments: int, alphabet_size: int) -> np.ndarray:
    """Pair counts per segment, counting pairs only inside one occurrence of a segment."""
    occurrence = np.floor((times - t0) / t_p).astype(np.int64) * n_segments + labels
    counts = np.zeros((n_segments, alphabet_size, alphabet_size))
    if len(symbols) < 2:
        return counts
    same = occurrence[1:] == occurrence[:-1]
    np.add.at(counts, (labels[1:][same], symbols[:-1][same], symbols[1:][same]), 1.0)
    return counts


def segment_measures(
    flows: Sequence[QuantizedFlow], alphabet_size: int, t_d: float, t_p: float, t0: float = 0.0
) -> tuple[list[Optional[ModelFreeMeasure]], list[Optional[ModelBasedMeasure]]]:
    """Empirical measures of every segment pooled across periods (None when empty)."""
    n, _ = segment_layout(t_d, t_p)
    times = np.fromiter((f.start_time for f in flows), dtype=float, count=len(flows))
    symbols = symbols_of(flows)
    labels = segment_labels(times, t_d, t_p, t0)
    free = np.zeros((n, alphabet_size))
    np.add.at(free, (labels, symbols), 1.0)
    pairs = _segment_pair_counts(symbols, times, labels, t_p, t0, n, alphabet_size)
    mf = [free_from_counts(free[s]) if free[s].sum() > 0 else None for s in range(n)]
    mb = [based_from_counts(pairs[s]) if pairs[s].sum() > 0 else None for s in range(n)]
    return mf, mb


def generate_candidates(
    flows: Sequence[QuantizedFlow],
    alphabet: SymbolAlphabet,
    estimates: Mapping[int, PeriodEstimate],
    priors: Sequence[tuple[float, float]] = (),
    t0: float = 0.0,
) -> tuple[PLFamily, PLFamily]:
    """Candidate model-free and model-based families.

    Each periodic feature estimate and each prior ``(t_d, t_p)`` contributes
    one PL per non-empty segment; identical ``(t_d, t_p, segment)`` triples are
    kept once.
    """
    pairs: list[tuple[str, float, float]] = []
    for a, est in sorted(estimates.items()):
        if est.periodic and est.t_p > est.t_d:
            pairs.append((f"feature-{a}", est.t_d, est.t_p))
    for i, (t_d, t_p) in enumerate(priors):
        if not 0 < t_d <= t_p:
            raise ValueError(f"invalid prior (t_d={t_d}, t_p={t_p})")
        pairs.append((f"prior-{i}", float(t_d), float(t_p)))
    if not pairs:
        raise NoPeriodAvailable("no feature is periodic and no prior (t_d, t_p) was given")

    size = alphabet.total
    free_pls, free_prov, based_pls, based_prov = [], [], [], []
    seen_free, seen_based = set(), set()
    for source, t_d, t_p in pairs:
        n, length = segment_layout(t_d, t_p)
        mf, mb = segment_measures(flows, size, t_d, t_p, t0)
        for s in range(n):
            prov = Provenance(source, t_d, t_p, s, s * length, (s + 1) * length)
            if mf[s] is None:
                logger.warning("%s: segment %d of %d has no flows; skipped", source, s, n)
                continue
            if prov.key not in seen_free:
                seen_free.add(prov.key)
                free_pls.append(mf[s])
                free_prov.append(prov)
            if mb[s] is not None and prov.key not in seen_based:
                seen_based.add(prov.key)
                based_pls.append(mb[s])
                based_prov.append(prov)
    if not free_pls:
        raise NoPeriodAvailable("every segment is empty")
    return (
        PLFamily(MODEL_FREE, free_pls, free_prov, alphabet.sizes),
        PLFamily(MODEL_BASED, based_pls, based_prov, alphabet.sizes),
    )
