"""Flow features: IP clustering, quantization and the symbol alphabet.

A flow is reduced to four discrete features (cluster label, distance to the
cluster center, size, duration); the tuple is encoded as a single symbol by
mixed-radix numbering.
"""

from __future__ import annotations

import ipaddress
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyReference, SymbolOutOfAlphabet, TooFewPoints
from .flow_model import Flow

FEATURE_NAMES = ("cluster", "distance", "size", "duration")

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-9
KMEANS_RESTARTS = 10


def ip_to_vector(ip: str) -> np.ndarray:
    """Dotted quad -> float 4-vector of octets."""
    return np.array(list(ipaddress.IPv4Address(ip).packed), dtype=float)


@dataclass(frozen=True, eq=False)
class IpClusterModel:
    k: int
    centers: np.ndarray  # (k, 4)
    seed: int = 0

    def assign(self, ip: str) -> tuple[int, float]:
        """Cluster label and Euclidean distance to that cluster's center."""
        d = np.linalg.norm(self.centers - ip_to_vector(ip), axis=1)
        label = int(np.argmin(d))  # lowest index on ties
        return label, float(d[label])


def _sse(points: np.ndarray, centers: np.ndarray) -> float:
    d = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
    return float(np.sum(np.min(d, axis=1) ** 2))


def _lloyd(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    centers = centers.copy()
    for _ in range(KMEANS_MAX_ITER):
        d = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
        labels = np.argmin(d, axis=1)
        new = centers.copy()
        for j in range(len(centers)):
            members = points[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        shift = float(np.max(np.linalg.norm(new - centers, axis=1)))
        centers = new
        if shift < KMEANS_TOL:
            break
    return centers


def fit_ip_clusters(
    ips: Iterable[str], k: int, seed: int = 0, restarts: int = KMEANS_RESTARTS
) -> IpClusterModel:
    """Seeded k-means on IPs viewed as octet 4-vectors.

    Each restart starts from the first ``k`` points of a seeded shuffle of the
    sorted unique IPs; the run with the lowest within-cluster SSE wins (the
    earliest on ties).  The result does not depend on input order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    unique = sorted(set(ips), key=lambda s: ipaddress.IPv4Address(s))
    if len(unique) < k:
        raise TooFewPoints(f"{len(unique)} distinct IPs for k={k}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    points = np.array([ip_to_vector(ip) for ip in unique])
    rng = np.random.default_rng(seed)
    best, best_sse = None, np.inf
    for _ in range(restarts):
        order = rng.permutation(len(points))
        centers = _lloyd(points, points[order[:k]])
        sse = _sse(points, centers)
        if sse < best_sse:
            best, best_sse = centers, sse
    return IpClusterModel(k=k, centers=best, seed=seed)


@dataclass(frozen=True)
class FeatureBins:
    """Equal-width bins over ``[lo, hi]``; values outside clamp to the end bins."""

    levels: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.hi < self.lo:
            raise ValueError(f"hi ({self.hi}) < lo ({self.lo})")

    def quantize(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if self.hi <= self.lo:
            return np.zeros(v.shape, dtype=np.int64)
        q = np.floor((v - self.lo) / (self.hi - self.lo) * self.levels)
        return np.clip(q, 0, self.levels - 1).astype(np.int64)


@dataclass(frozen=True)
class SymbolAlphabet:
    """Product alphabet (K, distance levels, size levels, duration levels)."""

    sizes: tuple[int, int, int, int]

    @property
    def total(self) -> int:
        return math.prod(self.sizes)

    def encode(self, levels) -> np.ndarray:
        """Mixed-radix encode; ``levels`` has shape (..., 4)."""
        lv = np.asarray(levels, dtype=np.int64)
        sym = np.zeros(lv.shape[:-1], dtype=np.int64)
        for axis, size in enumerate(self.sizes):
            col = lv[..., axis]
            if np.any((col < 0) | (col >= size)):
                raise SymbolOutOfAlphabet(f"feature {axis + 1} level outside [0, {size})")
            sym = sym * size + col
        return sym

    def decode(self, symbols) -> np.ndarray:
        s = np.asarray(symbols, dtype=np.int64)
        if np.any((s < 0) | (s >= self.total)):
            raise SymbolOutOfAlphabet(f"symbol outside [0, {self.total})")
        out = np.empty(s.shape + (4,), dtype=np.int64)
        rest = s.copy()
        for axis in range(3, -1, -1):
            out[..., axis] = rest % self.sizes[axis]
            rest //= self.sizes[axis]
        return out


@dataclass(frozen=True)
class Quantizer:
    distance: FeatureBins
    size: FeatureBins
    duration: FeatureBins
    k: int

    @property
    def alphabet(self) -> SymbolAlphabet:
        return SymbolAlphabet((self.k, self.distance.levels, self.size.levels, self.duration.levels))


@dataclass(frozen=True, slots=True)
class QuantizedFlow:
    symbol: int
    start_time: float


@dataclass(frozen=True)
class FeatureModel:
    """Everything needed to turn raw flows into symbols; persisted by ``estimate``."""

    clusters: IpClusterModel
    quantizer: Quantizer

    @property
    def alphabet(self) -> SymbolAlphabet:
        return self.quantizer.alphabet


def _raw_features(flows: Sequence[Flow], model: IpClusterModel):
    cache: dict[str, tuple[int, float]] = {}
    labels = np.empty(len(flows), dtype=np.int64)
    dist = np.empty(len(flows))
    for i, f in enumerate(flows):
        hit = cache.get(f.user_ip)
        if hit is None:
            hit = cache[f.user_ip] = model.assign(f.user_ip)
        labels[i], dist[i] = hit
    sizes = np.fromiter((f.size_bytes for f in flows), dtype=float, count=len(flows))
    durations = np.fromiter((f.duration_s for f in flows), dtype=float, count=len(flows))
    return labels, dist, sizes, durations


def fit_quantizer(
    flows: Sequence[Flow], model: IpClusterModel, levels: tuple[int, int, int]
) -> Quantizer:
    if not flows:
        raise EmptyReference("cannot fit a quantizer on zero flows")
    _, dist, sizes, durations = _raw_features(flows, model)
    l_da, l_b, l_dt = levels
    return Quantizer(
        distance=FeatureBins(l_da, float(dist.min()), float(dist.max())),
        size=FeatureBins(l_b, float(sizes.min()), float(sizes.max())),
        duration=FeatureBins(l_dt, float(durations.min()), float(durations.max())),
        k=model.k,
    )


def fit_features(
    flows: Sequence[Flow], k: int, levels: tuple[int, int, int], seed: int = 0
) -> FeatureModel:
    if not flows:
        raise EmptyReference("no reference flows")
    clusters = fit_ip_clusters({f.user_ip for f in flows}, k, seed)
    return FeatureModel(clusters, fit_quantizer(flows, clusters, levels))


def flow_symbols(flows: Sequence[Flow], model: IpClusterModel, quantizer: Quantizer) -> np.ndarray:
    labels, dist, sizes, durations = _raw_features(flows, model)
    levels = np.stack(
        [
            labels,
            quantizer.distance.quantize(dist),
            quantizer.size.quantize(sizes),
            quantizer.duration.quantize(durations),
        ],
        axis=-1,
    )
    return quantizer.alphabet.encode(levels)


def quantize_flows(
    flows: Sequence[Flow], model: IpClusterModel, quantizer: Quantizer
) -> list[QuantizedFlow]:
    if not flows:
        return []
    symbols = flow_symbols(flows, model, quantizer)
    return [QuantizedFlow(int(s), f.start_time) for s, f in zip(symbols, flows)]
