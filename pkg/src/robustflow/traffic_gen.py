"""Synthetic flow traffic with a diurnal pattern and injected anomalies.

Every node emits flows as an inhomogeneous Poisson process with rate
``peak_rate * p(t)`` (sampled by thinning); flow sizes are Gaussian around
``peak_mean_size * p(t)``, and durations are exponential.  An anomaly scales
one node's mean flow size over a time interval.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .flow_model import Flow

DAY_S = 86400.0
MEGABIT_BYTES = 125_000.0


@dataclass(frozen=True)
class DiurnalProfile:
    """Periodic piecewise-linear profile given by ``(phase, level)`` samples.

    Phases are fractions of the period measured from clock midnight, and the
    curve wraps from the last sample back to the first.
    """

    samples: tuple[tuple[float, float], ...]
    period_s: float = DAY_S

    def __post_init__(self):
        if not self.period_s > 0:
            raise ValueError("period_s must be positive")
        if not self.samples:
            raise ValueError("profile needs at least one sample")
        phases = [p for p, _ in self.samples]
        levels = [v for _, v in self.samples]
        if any(not 0 <= p < 1 for p in phases) or any(b <= a for a, b in zip(phases, phases[1:])):
            raise ValueError("phases must be strictly increasing within [0, 1)")
        if any(not 0 < v <= 1 for v in levels):
            raise ValueError("levels must lie in (0, 1]")
        if not math.isclose(max(levels), 1.0):
            raise ValueError("profile must be normalized to a maximum level of 1")

    def __call__(self, t) -> np.ndarray:
        phases = np.array([p for p, _ in self.samples])
        levels = np.array([v for _, v in self.samples])
        xp = np.concatenate([phases - 1.0, phases, phases + 1.0])
        fp = np.concatenate([levels, levels, levels])
        phase = np.mod(np.asarray(t, dtype=float), self.period_s) / self.period_s
        return np.interp(phase, xp, fp)

    def integral(self, a: float, b: float, steps: int = 20000) -> float:
        """Numerical integral of the profile over ``[a, b]``."""
        x = np.linspace(a, b, steps + 1)
        return float(np.trapezoid(self(x), x))


PROFILE_SHARPNESS = 2.0


def default_diurnal_profile(sharpness: float = PROFILE_SHARPNESS) -> DiurnalProfile:
    """24 hourly samples: trough 0.2 at 04:00, peak 1.0 at 20:00.

    The rise (04:00-20:00) and fall (20:00-04:00) follow half cosines, squashed
    through ``tanh(sharpness * c) / tanh(sharpness)`` so that day and night form
    plateaus joined by shorter transitions.  ``sharpness=0`` gives the plain
    cosine.
    """
    samples = []
    for hour in range(24):
        if 4 <= hour <= 20:
            c = -math.cos(math.pi * (hour - 4) / 16)
        else:
            c = math.cos(math.pi * ((hour - 20) % 24) / 8)
        if sharpness > 0:
            c = math.tanh(sharpness * c) / math.tanh(sharpness)
        samples.append((hour / 24, round(0.6 + 0.4 * c, 12)))
    return DiurnalProfile(tuple(samples))


@dataclass(frozen=True)
class NodeSpec:
    ip: str
    peak_rate_fps: float = 0.1
    peak_mean_size_bytes: float = 4 * MEGABIT_BYTES
    size_variance: float = 0.01 * MEGABIT_BYTES**2
    mean_duration_s: float = 10.0

    def __post_init__(self):
        for name in ("peak_rate_fps", "peak_mean_size_bytes", "size_variance", "mean_duration_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class AnomalySpec:
    ip: str
    start_s: float
    duration_s: float
    mean_size_multiplier: float = 1.3

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError("anomaly duration must be positive")
        if not self.mean_size_multiplier > 0:
            raise ValueError("mean_size_multiplier must be positive")

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass
class GroundTruth:
    horizon: tuple[float, float]
    anomalies: list[dict] = field(default_factory=list)

    def intervals(self) -> list[tuple[float, float]]:
        return [(a["start"], a["end"]) for a in self.anomalies]

    def to_json(self) -> dict:
        return {"horizon": list(self.horizon), "anomalies": self.anomalies}

    @classmethod
    def from_json(cls, data: dict) -> "GroundTruth":
        return cls(tuple(data["horizon"]), list(data.get("anomalies", [])))


def default_nodes(n_internal: int = 6, n_external: int = 3, **overrides) -> list[NodeSpec]:
    """Users of the reference experiment: internal hosts plus a few Internet hosts."""
    internal = [f"10.0.0.{i + 1}" for i in range(n_internal)]
    external = [f"128.197.{10 + 7 * i}.{20 + 11 * i}" for i in range(n_external)]
    return [NodeSpec(ip, **overrides) for ip in internal + external]


def _node_flows(node: NodeSpec, profile: DiurnalProfile, horizon_s: float,
                anomalies: Sequence[AnomalySpec], rng: np.random.Generator, start_clock_s: float = 0.0):
    # Thinning against the peak rate; the profile never exceeds 1.
    n = rng.poisson(node.peak_rate_fps * horizon_s)
    t = np.sort(rng.uniform(0.0, horizon_s, size=n))
    p = profile(t + start_clock_s)
    keep = rng.uniform(size=n) < p
    t, p = t[keep], p[keep]
    mean = node.peak_mean_size_bytes * p
    for a in anomalies:
        if a.ip == node.ip:
            inside = (t >= a.start_s) & (t < a.end_s)
            mean = np.where(inside, mean * a.mean_size_multiplier, mean)
    sizes = np.maximum(rng.normal(mean, math.sqrt(node.size_variance)), 1.0)
    durations = rng.exponential(node.mean_duration_s, size=len(t))
    return t, sizes, durations


def generate(
    nodes: Sequence[NodeSpec],
    profile: Optional[DiurnalProfile],
    horizon_s: float,
    anomalies: Sequence[AnomalySpec] = (),
    seed: int = 0,
    start_clock_s: float = 0.0,
) -> tuple[list[Flow], GroundTruth]:
    """Flows of all nodes merged by start time, plus the anomaly labels.

    Flow and anomaly times are relative to the trace start; ``start_clock_s``
    is the clock time of day at which the trace starts.
    """
    if not horizon_s > 0:
        raise ValueError("horizon_s must be positive")
    if profile is None:
        profile = default_diurnal_profile()
    children = np.random.SeedSequence(seed).spawn(len(nodes))
    parts_t, parts_s, parts_d, parts_ip = [], [], [], []
    for i, (node, child) in enumerate(zip(nodes, children)):
        t, s, d = _node_flows(node, profile, horizon_s, anomalies, np.random.default_rng(child), start_clock_s)
        parts_t.append(t)
        parts_s.append(s)
        parts_d.append(d)
        parts_ip.append(np.full(len(t), i))
    t = np.concatenate(parts_t)
    s = np.concatenate(parts_s)
    d = np.concatenate(parts_d)
    who = np.concatenate(parts_ip)
    order = np.lexsort((who, t))
    flows = [
        Flow(nodes[who[i]].ip, float(s[i]), float(d[i]), float(t[i]))
        for i in order
    ]
    truth = GroundTruth(
        (0.0, float(horizon_s)),
        [
            {"id": k, "ip": a.ip, "start": a.start_s, "end": a.end_s,
             "mean_size_multiplier": a.mean_size_multiplier}
            for k, a in enumerate(anomalies)
        ],
    )
    return flows, truth


@dataclass
class GeneratorConfig:
    nodes: list[NodeSpec]
    horizon_s: float = 7 * DAY_S
    seed: int = 0
    profile: Optional[DiurnalProfile] = None
    anomalies: list[AnomalySpec] = field(default_factory=list)
    start_clock_s: float = 0.0

    @classmethod
    def from_json(cls, data: dict) -> "GeneratorConfig":
        if "nodes" in data:
            nodes = [NodeSpec(**n) for n in data["nodes"]]
        else:
            nodes = default_nodes(**data.get("default_nodes", {}))
        profile = None
        if data.get("profile"):
            prof = data["profile"]
            profile = DiurnalProfile(tuple(tuple(s) for s in prof["samples"]), prof.get("period_s", DAY_S))
        return cls(
            nodes=nodes,
            horizon_s=float(data.get("horizon_s", 7 * DAY_S)),
            seed=int(data.get("seed", 0)),
            profile=profile,
            anomalies=[AnomalySpec(**a) for a in data.get("anomalies", [])],
            start_clock_s=float(data.get("start_clock_s", 0.0)),
        )

    def to_json(self) -> dict:
        out = {
            "seed": self.seed,
            "horizon_s": self.horizon_s,
            "nodes": [asdict(n) for n in self.nodes],
            "anomalies": [asdict(a) for a in self.anomalies],
            "start_clock_s": self.start_clock_s,
        }
        if self.profile is not None:
            out["profile"] = {"period_s": self.profile.period_s, "samples": [list(s) for s in self.profile.samples]}
        return out


TRACE_START_CLOCK_S = 17 * 3600.0


def size_anomaly(ip: str = "10.0.0.2") -> AnomalySpec:
    """+30% mean flow size on one node from hour 59 for 80 minutes."""
    return AnomalySpec(ip, 59 * 3600.0, 80 * 60.0, 1.3)


def week_config(seed: int = 0, anomalies: Sequence[AnomalySpec] = ()) -> GeneratorConfig:
    """One week of traffic from nine users starting at 5 pm, default profile."""
    return GeneratorConfig(
        nodes=default_nodes(),
        horizon_s=7 * DAY_S,
        seed=seed,
        anomalies=list(anomalies),
        start_clock_s=TRACE_START_CLOCK_S,
    )
