"""Sub-population enrolment entropy with perturbation bootstrap."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Collection, Iterable

import numpy as np

from .graphcore import SliceSpec
from .ingest import EnrolmentRecord, StudentMeta, SubpopSelector


class UndefinedEntropyError(ValueError):
    pass


@dataclass(frozen=True)
class SubpopCounts:
    standards: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def n_standards(self) -> int:
        """Support size: standards with a nonzero count."""
        return int((self.counts > 0).sum())

    @property
    def empty(self) -> bool:
        return self.total == 0

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.standards, self.counts.tolist()))


@dataclass(frozen=True)
class EntropyEstimate:
    point: float
    reps: int
    mean: float
    std: float
    ci_low: float
    ci_high: float
    seed: int
    perturb: float
    total: float
    n_standards: int


def subpop_counts(
    records: Iterable[EnrolmentRecord],
    students: Iterable[StudentMeta],
    selector: SubpopSelector | None = None,
    slice: SliceSpec | None = None,
    standards: Collection[str] | None = None,
) -> SubpopCounts:
    """Enrolment counts per standard for students matching both slice and selector.

    ``standards`` restricts counting to a network's node set (typically the
    pruned graph of the slice); ``None`` counts every standard.
    """
    selector = selector or SubpopSelector()
    slice = slice or SliceSpec()
    chosen = {s.student_id for s in students if slice.matches(s) and selector.matches(s)}
    allowed = None if standards is None else set(standards)
    tally: dict[str, int] = {}
    for r in records:
        if r.student_id in chosen and (allowed is None or r.standard_id in allowed):
            tally[r.standard_id] = tally.get(r.standard_id, 0) + 1
    keys = tuple(sorted(tally))
    return SubpopCounts(keys, np.array([tally[k] for k in keys], dtype=float))


def _entropy(counts: np.ndarray, log=np.log) -> float:
    # -sum p log p / log T rewritten as (log T - sum c log c / T) / log T:
    # same value, but uniform and point-mass counts come out exact
    total = math.fsum(counts)
    if total <= 1:
        raise UndefinedEntropyError(
            f"entropy undefined for total count {total:g}: the log-total normalizer must be positive")
    c = counts[counts > 0]
    if c.size == 1:
        return 0.0
    log_total = float(log(total))
    return (log_total - math.fsum(c * log(c)) / total) / log_total


def entropy(c: SubpopCounts | np.ndarray, base: float | None = None) -> float:
    """Shannon entropy of the count distribution divided by log(total count).

    Zero counts contribute nothing.  The result does not depend on ``base``;
    it is accepted only to make that checkable.
    """
    counts = np.asarray(c.counts if isinstance(c, SubpopCounts) else c, dtype=float)
    if (counts < 0).any():
        raise ValueError("counts must be non-negative")
    if base is None:
        return _entropy(counts)
    return _entropy(counts, log=lambda x: np.log(x) / math.log(base))


def _replicate(counts: np.ndarray, perturb: float, seed: int, rep: int) -> float:
    rng = np.random.default_rng([seed, rep])
    factors = rng.uniform(1 - perturb, 1 + perturb, size=counts.size)
    perturbed = counts * factors
    assert perturbed.sum() > 0, "perturbed replicate has zero total"
    return _entropy(perturbed)


def bootstrap_entropy(c: SubpopCounts | np.ndarray, reps: int = 1000, perturb: float = 0.20,
                      seed: int = 0, workers: int = 1) -> EntropyEstimate:
    """Perturb every count by an independent uniform factor in [1-perturb, 1+perturb].

    Replicate ``r`` draws from its own stream seeded by ``(seed, r)``, so the
    estimate is identical for any ``workers``.  CI is the 2.5/97.5 percentile.
    """
    counts = np.asarray(c.counts if isinstance(c, SubpopCounts) else c, dtype=float)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not 0 <= perturb < 1:
        raise ValueError("perturb must be in [0, 1)")
    point = _entropy(counts)
    values = np.empty(reps)

    def run(chunk: range) -> None:
        for r in chunk:
            values[r] = _replicate(counts, perturb, seed, r)

    workers = max(1, min(workers, reps))
    bounds = np.linspace(0, reps, workers + 1).astype(int)
    chunks = [range(bounds[i], bounds[i + 1]) for i in range(workers)]
    if workers == 1:
        run(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, chunks))
    ordered = np.sort(values)
    lo, hi = np.percentile(ordered, [2.5, 97.5])
    if ordered[0] == ordered[-1]:
        mean, std = float(ordered[0]), 0.0
    else:
        mean, std = float(ordered.mean()), float(ordered.std())
    return EntropyEstimate(
        point=point,
        reps=reps,
        mean=mean,
        std=std,
        ci_low=float(lo),
        ci_high=float(hi),
        seed=seed,
        perturb=perturb,
        total=float(counts.sum()),
        n_standards=int((counts > 0).sum()),
    )
