"""Packets, flows and detection windows.

Packets from one monitored port are compiled into flows per user IP, and
flows are then grouped into fixed-size (possibly overlapping) windows by
their transmission time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Generic, Iterable, Sequence, TypeVar

import numpy as np

from .errors import UnsortedInput

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class Packet:
    user_ip: str
    size_bytes: float
    start_time: float

    def __post_init__(self):
        if self.size_bytes < 0:
            raise ValueError(f"negative packet size {self.size_bytes}")
        if self.start_time < 0:
            raise ValueError(f"negative packet start time {self.start_time}")


@dataclass(frozen=True, slots=True)
class Flow:
    """One compiled flow: who, how many bytes, how long, and when it began."""

    user_ip: str
    size_bytes: float
    duration_s: float
    start_time: float

    def __post_init__(self):
        if self.size_bytes < 0:
            raise ValueError(f"negative flow size {self.size_bytes}")
        if self.duration_s < 0:
            raise ValueError(f"negative flow duration {self.duration_s}")


@dataclass(frozen=True)
class WindowingConfig:
    window_size_s: float = 2000.0
    hop_s: float = 2000.0
    flow_gap_s: float = 1.0

    def __post_init__(self):
        for name in ("window_size_s", "hop_s", "flow_gap_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


T = TypeVar("T")


@dataclass(frozen=True)
class Window(Generic[T]):
    index: int
    start: float
    end: float
    flows: tuple[T, ...]

    @property
    def empty(self) -> bool:
        return not self.flows

    def __len__(self) -> int:
        return len(self.flows)


def compile_flows(packets: Sequence[Packet], flow_gap_s: float) -> list[Flow]:
    """Merge consecutive packets of the same IP whose gap is below ``flow_gap_s``.

    Packets of different IPs may interleave; each IP is tracked on its own.
    """
    if not flow_gap_s > 0:
        raise ValueError("flow_gap_s must be positive")
    # per ip: [first_t, last_t, bytes]
    open_flows: dict[str, list[float]] = {}
    done: list[tuple[float, int, Flow]] = []
    prev_t = -math.inf
    seq = 0

    def close(ip: str, state: list[float]):
        nonlocal seq
        first, last, size = state
        done.append((first, seq, Flow(ip, size, last - first, first)))
        seq += 1

    for p in packets:
        if p.start_time < prev_t:
            raise UnsortedInput(f"packet at t={p.start_time} follows t={prev_t}")
        prev_t = p.start_time
        state = open_flows.get(p.user_ip)
        if state is not None and p.start_time - state[1] < flow_gap_s:
            state[1] = p.start_time
            state[2] += p.size_bytes
            continue
        if state is not None:
            close(p.user_ip, state)
        open_flows[p.user_ip] = [p.start_time, p.start_time, p.size_bytes]

    for ip, state in open_flows.items():
        close(ip, state)
    done.sort(key=lambda item: (item[0], item[1]))
    return [f for _, _, f in done]


def window_count(cfg: WindowingConfig, t0: float, t1: float) -> int:
    """Number of whole windows that fit in ``[t0, t1)``."""
    span = t1 - t0
    if span < cfg.window_size_s:
        return 0
    return int(math.floor((span - cfg.window_size_s) / cfg.hop_s + 1e-9)) + 1


def aggregate_windows(
    flows: Sequence[T], cfg: WindowingConfig, horizon: tuple[float, float]
) -> list[Window[T]]:
    """Group flows (anything with ``start_time``) into windows over ``horizon``.

    Window ``k`` spans ``[t0 + k*hop, t0 + k*hop + size)``; only windows lying
    entirely inside the horizon are emitted, and flows outside every window
    are dropped and counted in the log.
    """
    t0, t1 = horizon
    if not t1 > t0:
        raise ValueError(f"empty horizon {horizon}")
    times = start_times(flows)
    if len(times) > 1 and np.any(np.diff(times) < 0):
        raise UnsortedInput("flows must be sorted by start_time")
    n = window_count(cfg, t0, t1)
    windows: list[Window[T]] = []
    covered = np.zeros(len(times), dtype=bool)
    for k in range(n):
        start = t0 + k * cfg.hop_s
        end = start + cfg.window_size_s
        lo = int(np.searchsorted(times, start, side="left"))
        hi = int(np.searchsorted(times, end, side="left"))
        covered[lo:hi] = True
        windows.append(Window(k, start, end, tuple(flows[lo:hi])))
    dropped = int(len(times) - covered.sum())
    if dropped:
        logger.info("dropped %d flow(s) outside the windowed horizon [%g, %g)", dropped, t0, t1)
    n_empty = sum(1 for w in windows if w.empty)
    if n_empty:
        logger.info("%d of %d windows are empty", n_empty, len(windows))
    return windows


def start_times(flows: Iterable) -> np.ndarray:
    return np.fromiter((f.start_time for f in flows), dtype=float)
