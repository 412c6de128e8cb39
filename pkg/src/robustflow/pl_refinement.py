"""PL refinement as weighted set cover.

Window ``i`` is covered by PL ``j`` when their divergence is at most the
detection threshold.  We look for a small set of PLs covering every
reference window, preferring PLs whose covered windows are regularly spaced
(low coefficient of variation of the gaps).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyFamily, Infeasible, TooLarge
from .flow_model import Window
from .measures import DivergenceConfig, d_based_matrix, d_free_matrix, model_based_measure, model_free_measure
from .pl_learning import MODEL_BASED, MODEL_FREE, PLFamily

logger = logging.getLogger(__name__)

EXACT_MAX_N = 20


@dataclass(frozen=True, eq=False)
class CoverageProblem:
    a: np.ndarray  # (M, N) 0/1
    c_v: np.ndarray  # (N,)
    lam: float
    d: np.ndarray  # (M, N)
    window_index: np.ndarray  # (M,) original window indices

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape

    @classmethod
    def from_divergences(cls, d, lam: float, window_index=None) -> "CoverageProblem":
        d = np.asarray(d, dtype=float)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"divergence matrix must be non-empty 2-D, got shape {d.shape}")
        idx = np.arange(d.shape[0]) if window_index is None else np.asarray(window_index)
        a = (d <= lam).astype(np.int8)
        c_v = np.array([coefficient_of_variation(a[:, j], idx) for j in range(a.shape[1])])
        return cls(a, c_v, float(lam), d, idx)

    @classmethod
    def from_matrix(cls, a, c_v=None) -> "CoverageProblem":
        """Problem straight from a 0/1 matrix (no divergences behind it)."""
        a = np.asarray(a, dtype=np.int8)
        if c_v is None:
            c_v = [coefficient_of_variation(a[:, j]) for j in range(a.shape[1])]
        d = np.where(a == 1, 0.0, 1.0)
        return cls(a, np.asarray(c_v, dtype=float), 0.5, d, np.arange(a.shape[0]))


@dataclass(frozen=True)
class RefinementParams:
    gamma_start: float = 1.0
    r: float = 0.5
    gamma_th: float = 0.01

    def __post_init__(self):
        if not 0 < self.r < 1:
            raise ValueError("r must lie in (0, 1)")
        if not 0 < self.gamma_th <= self.gamma_start:
            raise ValueError("need 0 < gamma_th <= gamma_start")

    @property
    def gamma_secondary(self) -> float:
        return self.gamma_th


@dataclass(frozen=True, eq=False)
class Selection:
    chosen: np.ndarray  # (N,) 0/1
    primary_cost: int
    secondary_cost: float

    @property
    def indices(self) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.chosen)]

    def cost(self, gamma: float) -> float:
        return self.primary_cost + gamma * self.secondary_cost


def coefficient_of_variation(column, window_index=None) -> float:
    """Sample std / mean of the gaps between consecutive covered windows.

    Fewer than three covered windows give fewer than two gaps, and 0 is
    returned.
    """
    col = np.asarray(column)
    idx = np.arange(len(col)) if window_index is None else np.asarray(window_index)
    covered = np.sort(idx[col.astype(bool)])
    gaps = np.diff(covered).astype(float)
    if len(gaps) < 2:
        return 0.0
    return float(np.std(gaps, ddof=1) / np.mean(gaps))


def build_coverage(
    windows: Sequence[Window],
    family: PLFamily,
    lam: float,
    cfg: DivergenceConfig = DivergenceConfig(),
    min_flows: int = 0,
) -> CoverageProblem:
    """Divergence matrix between reference windows and candidates, thresholded at ``lam``.

    Windows with fewer than ``min_flows`` flows can never raise an alarm, so
    they are left out of the cover.
    """
    if not len(family):
        raise EmptyFamily("no candidate PLs")
    kept = [w for w in windows if len(w.flows) >= min_flows and len(w.flows) > 0]
    if family.kind == MODEL_BASED:
        kept = [w for w in kept if len(w.flows) >= 2]
    if not kept:
        raise ValueError("no usable reference windows")
    size = family.alphabet_size
    if family.kind == MODEL_FREE:
        measures = [model_free_measure(w.flows, size) for w in kept]
        d = d_free_matrix(measures, family.pls, cfg)
    else:
        measures = [model_based_measure(w.flows, size) for w in kept]
        d = _chunked_based(measures, family.pls, cfg)
    return CoverageProblem.from_divergences(d, lam, [w.index for w in kept])


def _chunked_based(measures, pls, cfg, chunk: int = 64) -> np.ndarray:
    rows = [d_based_matrix(measures[i : i + chunk], pls, cfg) for i in range(0, len(measures), chunk)]
    return np.vstack(rows)


def _selection(problem: CoverageProblem, chosen: np.ndarray) -> Selection:
    chosen = chosen.astype(np.int8)
    covered = problem.a @ chosen
    if np.any(covered < 1):
        raise AssertionError("selection leaves windows uncovered")
    return Selection(chosen, int(chosen.sum()), float(problem.c_v @ chosen))


def _check_feasible(problem: CoverageProblem):
    bad = np.flatnonzero(problem.a.sum(axis=1) == 0)
    if len(bad):
        raise Infeasible([int(problem.window_index[i]) for i in bad])


def greedy_set_cover(problem: CoverageProblem, gamma: float) -> Selection:
    """Repeatedly take the PL with the best newly-covered / (1 + gamma * c_v) ratio."""
    _check_feasible(problem)
    a = problem.a.astype(bool)
    m, n = a.shape
    weight = 1.0 + gamma * problem.c_v
    chosen = np.zeros(n, dtype=np.int8)
    uncovered = np.ones(m, dtype=bool)
    while uncovered.any():
        gain = a[uncovered].sum(axis=0).astype(float)
        ratio = np.where(chosen == 0, gain / weight, -np.inf)
        j = int(np.argmax(ratio))  # first maximum = lowest index
        chosen[j] = 1
        uncovered &= ~a[:, j]
    return _selection(problem, chosen)


def exact_set_cover(problem: CoverageProblem, gamma: float) -> Selection:
    """Optimal cover by enumerating every subset (N <= 20).

    Cost is ``|x| + gamma * c_v'x``; among equal costs the lexicographically
    smallest 0/1 vector wins.
    """
    m, n = problem.shape
    if n > EXACT_MAX_N:
        raise TooLarge(f"{n} candidates; exhaustive search is limited to {EXACT_MAX_N}")
    _check_feasible(problem)
    full = (1 << m) - 1
    col_masks = [sum(1 << i for i in range(m) if problem.a[i, j]) for j in range(n)]
    cover = [0] * (1 << n)
    cost = [0.0] * (1 << n)
    best = None
    for mask in range(1, 1 << n):
        low = mask & -mask
        j = low.bit_length() - 1
        rest = mask ^ low
        cover[mask] = cover[rest] | col_masks[j]
        cost[mask] = cost[rest] + 1.0 + gamma * problem.c_v[j]
        if cover[mask] != full:
            continue
        if best is None or cost[mask] < cost[best] - 1e-12:
            best = mask
        elif abs(cost[mask] - cost[best]) <= 1e-12 and _lex_key(mask, n) < _lex_key(best, n):
            best = mask
    chosen = np.array([(best >> j) & 1 for j in range(n)], dtype=np.int8)
    return _selection(problem, chosen)


def _lex_key(mask: int, n: int) -> tuple[int, ...]:
    return tuple((mask >> j) & 1 for j in range(n))


def heuristic_refine(problem: CoverageProblem, params: RefinementParams = RefinementParams()) -> Selection:
    """Greedy covers over a decreasing sweep of secondary weights; keep the cheapest.

    Every candidate cover is scored with the final weight ``gamma_th``; the
    first one found wins ties.
    """
    _check_feasible(problem)
    best, best_cost = None, np.inf
    gamma = params.gamma_start
    while gamma >= params.gamma_th:
        sel = greedy_set_cover(problem, gamma)
        gamma *= params.r
        c = sel.cost(params.gamma_secondary)
        if c < best_cost:
            best, best_cost = sel, c
    if best is None:
        raise ValueError("sweep ran zero iterations")
    return _selection(problem, best.chosen)


def refine_family(problem: CoverageProblem, family: PLFamily, params: RefinementParams = RefinementParams()):
    """Run the sweep and return ``(refined family, selection)``."""
    sel = heuristic_refine(problem, params)
    logger.info(
        "%s refinement: %d of %d PLs selected (lambda=%g)", family.kind, sel.primary_cost, len(family), problem.lam
    )
    return family.subset(sel.indices, problem.c_v), sel
