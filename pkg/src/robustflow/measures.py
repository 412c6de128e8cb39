"""Empirical measures of symbol sequences and the floored KL divergences.

Model-free measures are symbol frequencies (i.i.d. view); model-based
measures are frequencies of consecutive symbol pairs (first-order Markov
view).  Both divergences floor every probability at ``epsilon`` before
taking logs and do not renormalize afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import AlphabetMismatch, SymbolOutOfAlphabet

DEFAULT_EPSILON = 1e-20


@dataclass(frozen=True)
class DivergenceConfig:
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not 0 < self.epsilon <= 1e-6:
            raise ValueError(f"epsilon must lie in (0, 1e-6], got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class ModelFreeMeasure:
    probs: np.ndarray
    support_count: int

    @property
    def alphabet_size(self) -> int:
        return len(self.probs)

    @property
    def insufficient(self) -> bool:
        return self.support_count == 0


@dataclass(frozen=True, eq=False)
class ModelBasedMeasure:
    pair_probs: np.ndarray
    support_count: int  # number of consecutive pairs

    @property
    def alphabet_size(self) -> int:
        return self.pair_probs.shape[0]

    @property
    def insufficient(self) -> bool:
        return self.support_count == 0

    def empty_rows(self) -> np.ndarray:
        return self.pair_probs.sum(axis=1) == 0


def symbols_of(seq: Iterable) -> np.ndarray:
    """Symbols from QuantizedFlow objects, or plain integers, as an int array."""
    if isinstance(seq, np.ndarray):
        return seq.astype(np.int64, copy=False)
    items = list(seq)
    if items and hasattr(items[0], "symbol"):
        return np.fromiter((q.symbol for q in items), dtype=np.int64, count=len(items))
    return np.asarray(items, dtype=np.int64).reshape(-1)


def _check_range(symbols: np.ndarray, alphabet_size: int):
    if alphabet_size < 1:
        raise ValueError("alphabet_size must be >= 1")
    if symbols.size and (symbols.min() < 0 or symbols.max() >= alphabet_size):
        raise SymbolOutOfAlphabet(f"symbol outside [0, {alphabet_size})")


def free_counts(seq, alphabet_size: int) -> np.ndarray:
    s = symbols_of(seq)
    _check_range(s, alphabet_size)
    return np.bincount(s, minlength=alphabet_size).astype(float)


def pair_counts(seq, alphabet_size: int) -> np.ndarray:
    s = symbols_of(seq)
    _check_range(s, alphabet_size)
    counts = np.zeros((alphabet_size, alphabet_size))
    if len(s) >= 2:
        np.add.at(counts, (s[:-1], s[1:]), 1.0)
    return counts


def free_from_counts(counts: np.ndarray) -> ModelFreeMeasure:
    n = float(counts.sum())
    probs = counts / n if n > 0 else np.zeros_like(counts, dtype=float)
    return ModelFreeMeasure(probs, int(round(n)))


def based_from_counts(counts: np.ndarray) -> ModelBasedMeasure:
    n = float(counts.sum())
    probs = counts / n if n > 0 else np.zeros_like(counts, dtype=float)
    return ModelBasedMeasure(probs, int(round(n)))


def model_free_measure(seq, alphabet_size: int) -> ModelFreeMeasure:
    """Relative symbol frequencies; the empty sequence gives the zero measure."""
    return free_from_counts(free_counts(seq, alphabet_size))


def model_based_measure(seq, alphabet_size: int) -> ModelBasedMeasure:
    """Relative frequencies of consecutive pairs, normalized by the pair count."""
    return based_from_counts(pair_counts(seq, alphabet_size))


def conditional_probs(m: ModelBasedMeasure) -> np.ndarray:
    """Row-normalized pair matrix; rows that never occur stay all-zero."""
    rows = m.pair_probs.sum(axis=1, keepdims=True)
    out = np.zeros_like(m.pair_probs, dtype=float)
    np.divide(m.pair_probs, rows, out=out, where=rows > 0)
    return out


def _same_alphabet(a, b):
    if a.alphabet_size != b.alphabet_size:
        raise AlphabetMismatch(f"alphabet sizes differ: {a.alphabet_size} vs {b.alphabet_size}")


def d_free(nu: ModelFreeMeasure, mu: ModelFreeMeasure, cfg: DivergenceConfig = DivergenceConfig()) -> float:
    _same_alphabet(nu, mu)
    nu_hat = np.maximum(nu.probs, cfg.epsilon)
    mu_hat = np.maximum(mu.probs, cfg.epsilon)
    return float(np.sum(nu_hat * np.log(nu_hat / mu_hat)))


def _floored_conditionals(pair_probs: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    joint = np.maximum(pair_probs, eps)
    return joint, joint / joint.sum(axis=-1, keepdims=True)


def d_based(q: ModelBasedMeasure, pi: ModelBasedMeasure, cfg: DivergenceConfig = DivergenceConfig()) -> float:
    _same_alphabet(q, pi)
    q_joint, q_cond = _floored_conditionals(q.pair_probs, cfg.epsilon)
    _, pi_cond = _floored_conditionals(pi.pair_probs, cfg.epsilon)
    return float(np.sum(q_joint * np.log(q_cond / pi_cond)))


# Batched forms used when filling whole window-by-PL divergence matrices.

def d_free_matrix(
    nus: Sequence[ModelFreeMeasure], mus: Sequence[ModelFreeMeasure], cfg: DivergenceConfig = DivergenceConfig()
) -> np.ndarray:
    """``D[i, j] = d_free(nus[i], mus[j])`` for all pairs."""
    nu = np.maximum(np.stack([m.probs for m in nus]), cfg.epsilon)
    mu = np.maximum(np.stack([m.probs for m in mus]), cfg.epsilon)
    if nu.shape[1] != mu.shape[1]:
        raise AlphabetMismatch(f"alphabet sizes differ: {nu.shape[1]} vs {mu.shape[1]}")
    self_term = np.sum(nu * np.log(nu), axis=1)
    return self_term[:, None] - nu @ np.log(mu).T


def d_based_matrix(
    qs: Sequence[ModelBasedMeasure], pis: Sequence[ModelBasedMeasure], cfg: DivergenceConfig = DivergenceConfig()
) -> np.ndarray:
    q = np.stack([m.pair_probs for m in qs])
    p = np.stack([m.pair_probs for m in pis])
    if q.shape[1:] != p.shape[1:]:
        raise AlphabetMismatch(f"alphabet sizes differ: {q.shape[1]} vs {p.shape[1]}")
    q_joint, q_cond = _floored_conditionals(q, cfg.epsilon)
    _, p_cond = _floored_conditionals(p, cfg.epsilon)
    q_joint = q_joint.reshape(len(qs), -1)
    self_term = np.sum(q_joint * np.log(q_cond.reshape(len(qs), -1)), axis=1)
    return self_term[:, None] - q_joint @ np.log(p_cond.reshape(len(pis), -1)).T
