"""Synthetic comparison of the four learning strategies."""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import EventSequence
from .design import build_multi, build_super
from .estimators import fit_strategy
from .simulate import make_synthetic_suite

STRATEGIES = ("single_source_hp", "multi_source_hp", "multi_source_mhp", "superposition_hp")


def relative_error(A_hat: np.ndarray, A_star: np.ndarray) -> float:
    """``||A_hat - A_star||_F / ||A_star||_F``."""
    A_hat = np.asarray(A_hat, dtype=float)
    A_star = np.asarray(A_star, dtype=float)
    if A_hat.shape != A_star.shape:
        raise ValueError(f"shape mismatch {A_hat.shape} vs {A_star.shape}")
    ref = np.linalg.norm(A_star)
    if ref == 0:
        raise ValueError("reference matrix is zero")
    return float(np.linalg.norm(A_hat - A_star) / ref)


def superposition_plan(K: int, seqs_per_model: int | Sequence[int]) -> list[list[tuple[int, int]]]:
    """Group g holds sequence g of every model, as ``(model, index)`` pairs.

    With unequal counts only the first ``min(counts)`` indices are paired.
    """
    counts = [seqs_per_model] * K if isinstance(seqs_per_model, int) else list(seqs_per_model)
    if len(counts) != K:
        raise ValueError(f"expected {K} sequence counts, got {len(counts)}")
    n = min(counts)
    if len(set(counts)) > 1:
        warnings.warn(f"unequal sequence counts {counts}; pairing the first {n} of each model")
    return [[(k, g) for k in range(K)] for g in range(n)]


@dataclass(frozen=True)
class ExperimentConfig:
    K: tuple = (2, 5, 10)
    D: tuple = (5, 10)
    seqs_per_model: int = 20
    T: float = 100.0
    trials: int = 10
    estimator: str = "ls"
    strategies: tuple = STRATEGIES
    seed: int = 0
    w: float = 1.0

    def __post_init__(self):
        for name in ("K", "D", "strategies"):
            val = getattr(self, name)
            object.__setattr__(self, name, tuple(val) if isinstance(val, (list, tuple)) else (val,))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.strategies:
            raise ValueError("no strategies selected")
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies {sorted(unknown)}")
        if self.estimator not in ("ls", "mle"):
            raise ValueError(f"unknown estimator {self.estimator!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        extra = set(data) - set(known)
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**known)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(frozen=True)
class TrialResult:
    estimator: str
    strategy: str
    K: int
    D: int
    trial: int
    rel_error: float
    seconds: float
    seed: int
    error: str | None = None


def trial_seed(base: int, K: int, D: int, trial: int) -> int:
    return int(np.random.SeedSequence(base, spawn_key=(K, D, trial)).generate_state(1)[0])


def run_trial(config: ExperimentConfig, K: int, D: int, trial: int) -> list[TrialResult]:
    seed = trial_seed(config.seed, K, D, trial)
    models, seqs = make_synthetic_suite(K, D, config.seqs_per_model, config.T, seed=seed, w=config.w)
    A_star = models[0].A
    n = config.seqs_per_model
    groups = [[k * n + g for k, g in grp] for grp in superposition_plan(K, n)]
    plans = {
        "single_source_hp": (seqs[:n], "single", None),
        "multi_source_hp": (seqs, "single", None),
        "multi_source_mhp": (seqs, "multi", None),
        "superposition_hp": (seqs, "super", groups),
    }
    out = []
    for name in config.strategies:
        data, strategy, grp = plans[name]
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit = fit_strategy(data, strategy, config.estimator, config.w, groups=grp)
            err, msg = relative_error(fit.A, A_star), None
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            err, msg = math.nan, f"{type(exc).__name__}: {exc}"
        out.append(TrialResult(config.estimator, name, K, D, trial, err, time.perf_counter() - t0, seed, msg))
    return out


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    results: list = field(default_factory=list)

    def summary(self) -> list[dict]:
        rows = []
        for K in self.config.K:
            for D in self.config.D:
                for s in self.config.strategies:
                    errs = np.array([r.rel_error for r in self.results
                                     if r.K == K and r.D == D and r.strategy == s and r.error is None])
                    rows.append({
                        "estimator": self.config.estimator, "strategy": s, "K": K, "D": D,
                        "mean_rel_error": float(errs.mean()) if errs.size else math.nan,
                        "std_rel_error": float(errs.std(ddof=1)) if errs.size > 1 else 0.0,
                        "n_trials": int(errs.size),
                    })
        return rows

    def mean_error(self, strategy: str, K: int, D: int) -> float:
        for row in self.summary():
            if (row["strategy"], row["K"], row["D"]) == (strategy, K, D):
                return row["mean_rel_error"]
        raise KeyError((strategy, K, D))

    def failures(self) -> list[TrialResult]:
        return [r for r in self.results if r.error is not None]

    def mhp_beats_super(self) -> dict:
        """Per ``(K, D)``: whether the multi-process fit beat the superposition fit on mean error."""
        if not {"multi_source_mhp", "superposition_hp"} <= set(self.config.strategies):
            return {}
        return {
            (K, D): bool(self.mean_error("multi_source_mhp", K, D) < self.mean_error("superposition_hp", K, D))
            for K in self.config.K
            for D in self.config.D
        }

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "results.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["estimator", "strategy", "K", "D", "trial", "rel_error", "seconds"])
            for r in self.results:
                w.writerow([r.estimator, r.strategy, r.K, r.D, r.trial, repr(r.rel_error), f"{r.seconds:.6f}"])
        with (out / "summary.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            cols = ["estimator", "strategy", "K", "D", "mean_rel_error", "std_rel_error", "n_trials"]
            w.writerow(cols)
            for row in self.summary():
                w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
        report = {
            "config": self.config.to_dict(),
            "trial_seeds": sorted({(r.K, r.D, r.trial, r.seed) for r in self.results}),
            "mhp_beats_super": [
                {"K": K, "D": D, "mhp_beats_super": v} for (K, D), v in self.mhp_beats_super().items()
            ],
            "failures": [asdict(r) for r in self.failures()],
        }
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Fresh synthetic suite per ``(K, D, trial)``; all strategies fit on the same data."""
    tasks = [(K, D, t) for K in config.K for D in config.D for t in range(config.trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda a: run_trial(config, *a), tasks))
    else:
        chunks = [run_trial(config, *a) for a in tasks]
    order = {s: i for i, s in enumerate(config.strategies)}
    results = sorted((r for c in chunks for r in c), key=lambda r: (r.K, r.D, r.trial, order[r.strategy]))
    return ExperimentReport(config, results)


# ---------------------------------------------------------------------------
# cost of building the design matrix


def _uniform_sequences(M: int, I: int, D: int, T: float, seed: int):
    rng = np.random.default_rng(seed)
    return [
        EventSequence.from_events(np.sort(rng.uniform(0, T, I)), rng.integers(0, D, I), T=T, D=D, source_id=m)
        for m in range(M)
    ]


def design_cost(
    M: int, total_events: int = 6000, D: int = 5, T: float = 100.0, repeats: int = 5, seed: int = 0
) -> dict:
    """Best-of-``repeats`` wall time to build the multi and superposition problems.

    ``total_events`` is split over M sequences of I events each. The multi
    problem touches ``M * I**2`` event pairs, the superposed one ``(M * I)**2``,
    so the time ratio should approach M once the quadratic part dominates.
    """
    I = max(1, total_events // M)
    seqs = _uniform_sequences(M, I, D, T, seed)
    groups = [list(range(M))]

    def best(fn):
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return min(times)

    multi = best(lambda: build_multi(seqs, 1.0))
    sup = best(lambda: build_super(seqs, 1.0, groups))
    return {"M": M, "I": I, "multi_seconds": multi, "super_seconds": sup, "ratio": sup / multi}
