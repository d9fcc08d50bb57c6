"""Least-squares and maximum-likelihood estimators.

The least-squares route solves ``min ||W (N - X theta)||^2`` with
``theta >= 0`` by accelerated projected gradient followed by an exact
active-set (Lawson-Hanson) refinement. The likelihood route is the usual
branching-structure EM for exponential kernels.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import EventSequence, FitResult, RegressionBundle, superpose
from .design import (
    build_multi,
    build_single,
    build_super,
    counting_labels,
    kernel_integrals,
    pairwise_type_sums,
    plan_from_sources,
    source_blocks,
)

log = logging.getLogger(__name__)

#: Above this many free parameters the solver stays sparse and skips the active-set pass.
DENSE_MAX_PARAMS = 2500


class RankDeficiencyWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# nonnegative least squares


def _fista(grad_fn, loss_fn, lip, P, tol, max_iter):
    """Projected FISTA; stops on relative loss change < tol."""
    x = np.zeros(P)
    y = x.copy()
    tk = 1.0
    f_prev = loss_fn(x)
    it = 0
    for it in range(1, max_iter + 1):
        x_new = np.maximum(y - grad_fn(y) / lip, 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        y = x_new + ((tk - 1.0) / t_new) * (x_new - x)
        x, tk = x_new, t_new
        f = loss_fn(x)
        if abs(f_prev - f) <= tol * max(abs(f), np.finfo(float).tiny):
            break
        f_prev = f
    return x, it


def _solve_passive(G, c, passive):
    z = np.zeros(c.size)
    if passive.any():
        idx = np.flatnonzero(passive)
        z[idx] = np.linalg.lstsq(G[np.ix_(idx, idx)], c[idx], rcond=None)[0]
    return z


def _active_set(G, c, x0, max_iter):
    """Lawson-Hanson on the normal equations, warm-started from the support of ``x0``."""
    passive = x0 > 0
    x = np.where(passive, x0, 0.0)
    kkt_tol = 1e-11 * max(np.abs(c).max(initial=0.0), np.finfo(float).tiny)
    it = 0
    for it in range(1, max_iter + 1):
        while True:
            z = _solve_passive(G, c, passive)
            bad = passive & (z <= 0)
            if not bad.any():
                x = z
                break
            ratio = x[bad] / (x[bad] - z[bad])
            k = np.flatnonzero(bad)[np.argmin(ratio)]
            x = x + ratio.min() * (z - x)
            x[k] = 0.0
            passive &= x > 0
        grad = c - G @ x
        grad[passive] = -np.inf
        k = int(np.argmax(grad))
        if grad[k] <= kkt_tol:
            break
        passive[k] = True
    return x, passive, it


def nnls(A: np.ndarray, b: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> tuple[np.ndarray, int]:
    """Dense nonnegative least squares ``min ||A x - b||, x >= 0``. Returns ``(x, iterations)``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    P = A.shape[1]
    if P == 0:
        return np.zeros(0), 0
    G = A.T @ A
    c = A.T @ b
    bb = b @ b
    lip = np.linalg.eigvalsh(G)[-1]
    if lip <= 0:
        return np.zeros(P), 0
    x, pg_iters = _fista(lambda v: G @ v - c, lambda v: 0.5 * (v @ G @ v) - c @ v + 0.5 * bb, lip, P, tol, max_iter)
    x, passive, as_iters = _active_set(G, c, x, max_iter)
    # polish on the final support with an orthogonal solve
    if passive.any():
        z = np.zeros(P)
        z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
        if np.all(z[passive] > 0):
            x = z
    return x, pg_iters + as_iters


def _sparse_lipschitz(A, iters: int = 100) -> float:
    rng = np.random.default_rng(0)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        u = A.T @ (A @ v)
        est = np.linalg.norm(u)
        if est == 0:
            return 0.0
        v = u / est
    return 1.01 * est


# ---------------------------------------------------------------------------
# least-squares fit


def fit_ls(bundle: RegressionBundle, nonneg: bool = True, tol: float = 1e-10, max_iter: int = 10_000) -> FitResult:
    """Minimise the bundle's weighted squared loss.

    All-zero columns are pinned at 0. A rank-deficient remainder is solved
    with a small ridge term ``1e-8 * trace(X'X) / P`` and flagged. With
    ``nonneg=False`` the unconstrained minimum-norm solution is returned.
    """
    Xw, Nw = bundle.weighted()
    Xw = sp.csc_matrix(Xw)
    L, P = Xw.shape
    live = np.diff(Xw.indptr) > 0
    n_live = int(live.sum())
    diag = {"solver": "dense", "nonneg": nonneg, "zero_columns": int(P - n_live),
            "rank_deficient": False, "ridge": 0.0}
    if L < n_live:
        warnings.warn(f"{L} rows for {n_live} free parameters; the problem is underdetermined", RankDeficiencyWarning)
        diag["underdetermined"] = True

    theta = np.zeros(P)
    iters = 0
    if n_live and n_live <= DENSE_MAX_PARAMS:
        A = Xw[:, live].toarray()
        b = Nw
        s = np.linalg.svd(A, compute_uv=False)
        rank = int(np.sum(s > s[0] * max(A.shape) * np.finfo(float).eps)) if s.size else 0
        diag["rank"] = rank
        if rank < n_live:
            lam = 1e-8 * float(np.sum(s**2)) / P
            diag.update(rank_deficient=True, ridge=lam)
            warnings.warn(f"rank {rank} < {n_live}; using ridge {lam:.3g}", RankDeficiencyWarning)
            A = np.vstack([A, np.sqrt(lam) * np.eye(n_live)])
            b = np.concatenate([b, np.zeros(n_live)])
        if nonneg:
            x, iters = nnls(A, b, tol=tol, max_iter=max_iter)
        else:
            x = np.linalg.lstsq(A, b, rcond=None)[0]
            iters = 1
        theta[live] = x
    elif n_live:
        A = Xw[:, live].tocsr()
        diag["solver"] = "sparse_pg"
        lip = _sparse_lipschitz(A)
        if nonneg:
            def grad_fn(v):
                return A.T @ (A @ v - Nw)

            def loss_fn(v):
                r = A @ v - Nw
                return 0.5 * r @ r

            x, iters = _fista(grad_fn, loss_fn, lip, n_live, tol, max_iter)
        else:
            x = sp.linalg.lsqr(A, Nw, atol=tol, btol=tol)[0]
            iters = 1
        theta[live] = x
    if nonneg:
        theta = np.maximum(theta, 0.0)
    return FitResult(
        strategy=bundle.layout,
        theta=theta,
        D=bundle.D,
        w=bundle.w,
        num_mu_blocks=bundle.num_mu_blocks,
        loss=bundle.loss(theta),
        iterations=iters,
        diagnostics=diag,
    )


@dataclass(frozen=True)
class RecoveredSources:
    mus: np.ndarray  # (S, D)
    source_ids: tuple
    empty: tuple  # per source: True if it had no events


def recover_sources(
    A_hat: np.ndarray, seqs: Sequence[EventSequence], w: float, by_source: bool = True
) -> RecoveredSources:
    """Per-source exogenous rates given a fixed infectivity matrix.

    For each source, the endogenous part of the compensator is moved to the
    label side and the remaining weighted problem ``sum (y_i - t_i mu_{d_i})^2 / t_i^2``
    separates per dimension into ``mu_d = max(0, mean_i y_i / t_i)``.
    Sequences are pooled by ``source_id`` when ``by_source`` is set and every
    sequence is tagged; otherwise each sequence is its own source.
    """
    A_hat = np.asarray(A_hat, dtype=float)
    if np.any(A_hat < 0):
        raise ValueError("A_hat must be nonnegative")
    if not seqs:
        return RecoveredSources(np.zeros((0, A_hat.shape[0])), (), ())
    D = seqs[0].D
    if by_source and all(s.source_id is not None for s in seqs):
        blocks, ids = source_blocks(seqs)
    else:
        blocks, ids = list(range(len(seqs))), tuple(s.source_id for s in seqs)
    S = len(ids)
    sums = np.zeros((S, D))
    counts = np.zeros((S, D))
    for m, s in enumerate(seqs):
        if not len(s):
            continue
        F = kernel_integrals(s.times, s.dims, D, w)
        endo = np.einsum("ij,ij->i", F, A_hat[s.dims])
        ratio = (counting_labels(s) - endo) / s.times
        sums[blocks[m]] += np.bincount(s.dims, weights=ratio, minlength=D)
        counts[blocks[m]] += np.bincount(s.dims, minlength=D)
    mus = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    empty = tuple(bool(c.sum() == 0) for c in counts)
    return RecoveredSources(np.maximum(mus, 0.0), ids, empty)


# ---------------------------------------------------------------------------
# maximum likelihood (EM)


class _EMData:
    """Quantities that stay fixed across EM iterations.

    Only ``E[i, d'] = sum_{j < i, d_j = d'} exp(-w (t_i - t_j))`` is needed:
    summing the parent responsibilities ``a[d_i, d_j] exp(-w (t_i - t_j)) / lambda_i``
    over parents of one type gives ``a[d_i, d'] E[i, d'] / lambda_i``.
    """

    def __init__(self, seqs: Sequence[EventSequence], w: float, blocks: Sequence[int], num_blocks: int):
        self.D = D = seqs[0].D
        self.horizon = np.zeros(num_blocks)  # total observed time per block
        self.tail = np.zeros(D)  # sum_j (1 - exp(-w (T - t_j))) / w per parent type
        self.counts = np.zeros((num_blocks, D))
        blk, dims, E = [], [], []
        for s, b in zip(seqs, blocks):
            self.horizon[b] += s.T
            if not len(s):
                continue
            blk.append(np.full(len(s), b))
            dims.append(s.dims)
            E.append(pairwise_type_sums(s.times, s.dims, D, lambda lag: np.exp(-w * lag)))
            self.tail += np.bincount(s.dims, weights=-np.expm1(-w * (s.T - s.times)) / w, minlength=D)
            self.counts[b] += np.bincount(s.dims, minlength=D)
        self.blk = np.concatenate(blk)
        self.dims = np.concatenate(dims)
        self.E = np.concatenate(E)
        # flat index of (block, dim) and one-hot of the child type
        self.cell = self.blk * D + self.dims
        self.onehot = np.zeros((self.dims.size, D))
        self.onehot[np.arange(self.dims.size), self.dims] = 1.0

    def step(self, mus: np.ndarray, A: np.ndarray):
        """Log-likelihood at ``(mus, A)`` and the EM update."""
        base = mus.ravel()[self.cell]
        trig = A[self.dims] * self.E  # (n, D): a[d_i, d'] E[i, d']
        lam = base + trig.sum(axis=1)
        ll = np.log(lam).sum() - mus.sum(axis=1) @ self.horizon - A.sum(axis=0) @ self.tail
        mu_num = np.bincount(self.cell, weights=base / lam, minlength=mus.size).reshape(mus.shape)
        A_num = self.onehot.T @ (trig / lam[:, None])
        new_mus = mu_num / np.where(self.horizon > 0, self.horizon, 1.0)[:, None]
        new_A = np.divide(A_num, self.tail[None, :], out=np.zeros_like(A), where=self.tail[None, :] > 0)
        return float(ll), new_mus, new_A


def _mle_blocks(seqs, layout):
    if layout == "single":
        return [0] * len(seqs), 1
    if layout == "multi":
        blocks, ids = source_blocks(seqs)
        return blocks, len(ids)
    raise ValueError(f"unknown MLE layout {layout!r}")


def log_likelihood(seqs: Sequence[EventSequence], theta: np.ndarray, w: float, layout: str = "single") -> float:
    """Sum over sequences of ``sum_i log lambda(t_i) - int_0^T sum_d lambda_d``."""
    blocks, S = _mle_blocks(seqs, layout)
    data = _EMData(seqs, w, blocks, S)
    D = data.D
    theta = np.asarray(theta, dtype=float)
    mus = theta[: S * D].reshape(S, D)
    A = theta[S * D:].reshape((D, D), order="F")
    return data.step(mus, A)[0]


def fit_mle(
    seqs: Sequence[EventSequence],
    w: float,
    layout: str = "single",
    max_iters: int = 1000,
    tol: float = 1e-8,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> FitResult:
    """EM for the exponential-kernel Hawkes likelihood.

    ``layout="multi"`` gives every source its own exogenous rate. Iteration
    stops once the relative log-likelihood gain drops below ``tol``. The
    default start is ``mu_d = 0.5 * n_d / T_total`` and ``a = 0.1 w / D``.
    """
    if not seqs or sum(len(s) for s in seqs) == 0:
        raise ValueError("no events to fit")
    blocks, S = _mle_blocks(seqs, layout)
    data = _EMData(seqs, w, blocks, S)
    D = data.D
    if init is None:
        mus = 0.5 * data.counts / data.horizon[:, None]
        A = np.full((D, D), 0.1 * w / D)
    else:
        mus = np.array(init[0], dtype=float).reshape(S, D)
        A = np.array(init[1], dtype=float)
    trace = []
    converged = False
    for _ in range(max_iters):
        ll, new_mus, new_A = data.step(mus, A)
        if not np.isfinite(ll):
            raise FloatingPointError("zero intensity at an observed event")
        if trace and abs(ll - trace[-1]) <= tol * abs(trace[-1]):
            trace.append(ll)
            converged = True
            break
        trace.append(ll)
        mus, A = new_mus, new_A
    if not converged:
        trace.append(data.step(mus, A)[0])
    theta = np.concatenate([mus.ravel(), A.flatten(order="F")])
    return FitResult(
        strategy=f"mle-{layout}",
        theta=theta,
        D=D,
        w=w,
        num_mu_blocks=S,
        loss=-trace[-1],
        iterations=len(trace) - 1,
        diagnostics={"loglik_trace": trace, "converged": converged},
    )


# ---------------------------------------------------------------------------
# strategy front end

STRATEGIES = ("single", "multi", "super")


def fit_strategy(
    seqs: Sequence[EventSequence],
    strategy: str,
    estimator: str = "ls",
    w: float = 1.0,
    groups: Sequence[Sequence[int]] | None = None,
    **kwargs,
) -> FitResult:
    """Fit one of the three strategies with either estimator.

    ``single`` pools all sequences into one process, ``multi`` gives each
    source its own exogenous rate, ``super`` superposes ``groups`` first.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if estimator == "ls":
        build = {"single": build_single, "multi": build_multi}.get(strategy)
        bundle = build(seqs, w) if build else build_super(seqs, w, groups)
        return fit_ls(bundle, **kwargs)
    if estimator == "mle":
        if strategy == "super":
            groups = plan_from_sources(seqs) if groups is None else groups
            merged = [superpose([seqs[i] for i in g]) for g in groups]
            res = fit_mle(merged, w, "single", **kwargs)
        else:
            res = fit_mle(seqs, w, strategy, **kwargs)
        return replace(res, strategy=f"mle-{strategy}")
    raise ValueError(f"unknown estimator {estimator!r}")
