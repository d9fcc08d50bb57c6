"""Event-sequence generators: cluster (branching) construction and Ogata thinning."""

from __future__ import annotations

import logging

import numpy as np

from .core import EventSequence, HawkesModel

log = logging.getLogger(__name__)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; identical keys give identical streams."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def _check(model: HawkesModel, T: float) -> None:
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    if not model.stationary:
        raise ValueError(
            f"model is not stationary (spectral radius of A/w = {model.spectral_radius:.4g}); "
            "the expected cluster size is infinite"
        )


def _finish(times, dims, model, T, source_id):
    times = np.asarray(times, dtype=float)
    dims = np.asarray(dims, dtype=np.int64)
    return EventSequence.from_events(times, dims, T=T, D=model.D, source_id=source_id)


def spawn_offspring(model: HawkesModel, times: np.ndarray, dims: np.ndarray, rng: np.random.Generator):
    """First-generation children of the given events, without truncation.

    An event of type d' produces Poisson(``A[d, d'] / w``) children of each
    type d, each delayed by Exp(w).
    """
    D, w = model.D, model.w
    # counts[p, d]: children of type d spawned by parent p
    counts = rng.poisson(model.branching_matrix[:, dims].T)
    per_parent = counts.sum(axis=1)
    child_d = np.repeat(np.tile(np.arange(D), times.size), counts.ravel())
    child_t = np.repeat(times, per_parent) + rng.exponential(1.0 / w, size=per_parent.sum())
    return child_t, child_d


def simulate_branching(model: HawkesModel, T: float, seed=None, source_id: int | None = None) -> EventSequence:
    """Cluster construction.

    Immigrants of type d arrive as a Poisson process of rate ``mu[d]``; every
    event spawns children via :func:`spawn_offspring`. Children past ``T``
    are dropped together with their (later) descendants.
    """
    _check(model, T)
    rng = np.random.default_rng(seed)
    n_imm = rng.poisson(model.mu * T)
    gen_t = rng.uniform(0.0, T, size=n_imm.sum())
    gen_d = np.repeat(np.arange(model.D), n_imm)
    all_t, all_d = [gen_t], [gen_d]
    while gen_t.size:
        child_t, child_d = spawn_offspring(model, gen_t, gen_d, rng)
        keep = child_t <= T
        gen_t, gen_d = child_t[keep], child_d[keep]
        all_t.append(gen_t)
        all_d.append(gen_d)
    return _finish(np.concatenate(all_t), np.concatenate(all_d), model, T, source_id)


def simulate_thinning(model: HawkesModel, T: float, seed=None, source_id: int | None = None) -> EventSequence:
    """Ogata thinning using the exact, piecewise-decreasing total intensity as the bound."""
    _check(model, T)
    rng = np.random.default_rng(seed)
    mu, A, w = model.mu, model.A, model.w
    excite = np.zeros(model.D)  # endogenous intensity at time `t`
    t = 0.0
    times, dims = [], []
    while True:
        bound = mu.sum() + excite.sum()
        if bound <= 0:
            break
        s = t + rng.exponential(1.0 / bound)
        if s > T:
            break
        excite = excite * np.exp(-w * (s - t))
        t = s
        lam = mu + excite
        u = rng.uniform(0.0, bound)
        total = lam.sum()
        if u < total:
            d = int(np.searchsorted(np.cumsum(lam), u, side="right"))
            d = min(d, model.D - 1)
            times.append(t)
            dims.append(d)
            excite = excite + A[:, d]
    return _finish(times, dims, model, T, source_id)


SIMULATORS = {"branching": simulate_branching, "thinning": simulate_thinning}


def random_infectivity(D: int, rng: np.random.Generator, spectral_norm: float = 0.5) -> np.ndarray:
    """i.i.d. U[0, 1] entries rescaled to the requested spectral norm."""
    A = rng.uniform(0.0, 1.0, size=(D, D))
    return A * (spectral_norm / np.linalg.norm(A, 2))


def make_synthetic_suite(
    K: int,
    D: int,
    seqs_per_model: int = 20,
    T: float = 100.0,
    target_events: float | None = 50,
    seed: int = 0,
    method: str = "branching",
    w: float = 1.0,
) -> tuple[list[HawkesModel], list[EventSequence]]:
    """K models sharing one infectivity matrix, each with a one-hot exogenous rate.

    Returns the models and a flat, model-major list of ``K * seqs_per_model``
    sequences tagged with ``source_id = k``. Event counts are whatever T and
    mu produce; ``target_events`` is only compared against the expectation
    and logged.
    """
    if K < 1 or D < 1:
        raise ValueError("K and D must be >= 1")
    rng = substream(seed, 0)
    A = random_infectivity(D, rng)
    models = []
    for _ in range(K):
        mu = np.zeros(D)
        mu[rng.integers(D)] = rng.uniform(0.0, 1.0)
        models.append(HawkesModel(mu, A, w))
    simulate = SIMULATORS[method]
    seqs = [
        simulate(models[k], T, seed=substream(seed, 1, k, s), source_id=k)
        for k in range(K)
        for s in range(seqs_per_model)
    ]
    if target_events:
        expected = np.mean([m.stationary_rates().sum() * T for m in models])
        log.info("expected events per sequence %.1f (target %s)", expected, target_events)
    return models, seqs
