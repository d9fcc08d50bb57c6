"""Excess-risk bound expressions for the multi-process and superposition strategies.

All values are reported up to the same universal constant, which cancels in
the comparison between strategies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BoundReport, EventSequence


def _capacity(C: int, n: int) -> float:
    """``C * log(1 + n / C)``: the dimension term of the bound for C parameters and n samples."""
    return C * math.log1p(n / C)


def capacity_gap(D: int, M: int, I: int) -> float:
    """``D(M+D) log(1 + MI/(D(M+D))) - D(1+D) log(1 + MI/(D(1+D)))``; nonnegative for M >= 1."""
    n = M * I
    return _capacity(D * (M + D), n) - _capacity(D * (1 + D), n)


def condition_rhs(B_mu: float, D: int, M: int, I: int) -> float:
    """Largest ``B_sigma_mu`` for which superposition has the tighter bound."""
    return M * B_mu + B_mu * capacity_gap(D, M, I)


def bound_expressions(B_mu: float, B_A: float, B_sigma_mu: float, D: int, M: int, I: int) -> BoundReport:
    if min(B_mu, B_A, B_sigma_mu) < 0:
        raise ValueError("norm bounds must be nonnegative")
    if min(D, M, I) < 1:
        raise ValueError("D, M and I must be >= 1")
    n = M * I
    small = _capacity(D * (1 + D), n)
    large = _capacity(D * (M + D), n)
    bound_multi = (B_A + M * B_mu + B_mu * large) / n
    bound_super = (B_A + B_sigma_mu + B_mu * small) / n
    bound_single = (B_A + B_mu + B_mu * small) / n
    return BoundReport(
        B_mu=float(B_mu),
        B_A=float(B_A),
        B_sigma_mu=float(B_sigma_mu),
        D=int(D),
        M=int(M),
        I=int(I),
        bound_single=bound_single,
        bound_multi=bound_multi,
        bound_super=bound_super,
        condition_holds=bool(bound_super <= bound_multi),
    )


@dataclass(frozen=True)
class Scenario:
    kind: str  # "identical", "complementary" or "general"
    B_sigma_mu: float
    B_mu: float
    M: int


def classify_scenario(mus: Sequence[Sequence[float]]) -> Scenario:
    """Classify a set of exogenous rate vectors and compute their norm bounds.

    ``identical`` wins over ``complementary`` when both apply (e.g. M=1).
    """
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    if mus.shape[0] == 0:
        raise ValueError("need at least one exogenous rate vector")
    total = mus.sum(axis=0)
    B_sigma_mu = float(total @ total)
    B_mu = float(np.max(np.einsum("ij,ij->i", mus, mus)))
    support = mus != 0
    if np.all(mus == mus[0]):
        kind = "identical"
    elif np.all(support.sum(axis=0) <= 1):
        kind = "complementary"
    else:
        kind = "general"
    return Scenario(kind, B_sigma_mu, B_mu, mus.shape[0])


def events_per_sequence(seqs: Sequence[EventSequence]) -> int:
    """Mean event count per sequence, rounded up (at least 1)."""
    if not seqs:
        raise ValueError("no sequences")
    return max(1, math.ceil(sum(len(s) for s in seqs) / len(seqs)))


def report_for_rates(mus, B_A: float, I: int) -> BoundReport:
    """Bound report with ``B_mu`` and ``B_sigma_mu`` computed exactly from the rate vectors."""
    sc = classify_scenario(mus)
    D = np.atleast_2d(np.asarray(mus)).shape[1]
    return bound_expressions(sc.B_mu, B_A, sc.B_sigma_mu, D, sc.M, I)
