"""Domain types shared across the package.

Conventions
-----------
* Dimensions are 0-indexed in memory and 1-indexed in every file format.
* ``vec(A)`` is column-major: entry ``a[d, d']`` sits at offset ``d + D * d'``.
* The triggering kernel is ``a[d, d'] * exp(-w * t)``, so the branching
  matrix (expected offspring counts) is ``A / w``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

#: Events at t=0 are moved to ``T * ZERO_SHIFT`` so that the 1/t weights stay finite.
ZERO_SHIFT = 1e-9


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def spectral_radius(M: np.ndarray) -> float:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def vec(A: np.ndarray) -> np.ndarray:
    """Column-major vectorisation."""
    return np.asarray(A).flatten(order="F")


def unvec(v: np.ndarray, D: int) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape((D, D), order="F")


@dataclass(frozen=True)
class HawkesModel:
    """Exponential-kernel Hawkes process ``HP(mu, A)`` with decay rate ``w``."""

    mu: np.ndarray
    A: np.ndarray
    w: float = 1.0

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if mu.ndim != 1:
            raise ValueError("mu must be a vector")
        if A.shape != (mu.size, mu.size):
            raise ValueError(f"A has shape {A.shape}, expected {(mu.size, mu.size)}")
        if not (np.isfinite(self.w) and self.w > 0):
            raise ValueError(f"decay w must be positive, got {self.w}")
        if np.any(mu < 0) or not np.all(np.isfinite(mu)):
            raise ValueError("mu must be finite and nonnegative")
        if np.any(A < 0) or not np.all(np.isfinite(A)):
            raise ValueError("A must be finite and nonnegative")
        object.__setattr__(self, "mu", _frozen(mu))
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "w", float(self.w))

    @property
    def D(self) -> int:
        return self.mu.size

    @property
    def branching_matrix(self) -> np.ndarray:
        return self.A / self.w

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.branching_matrix)

    @property
    def stationary(self) -> bool:
        return self.spectral_radius < 1.0

    def stationary_rates(self) -> np.ndarray:
        """Long-run event rate per dimension, ``(I - A/w)^{-1} mu``."""
        if not self.stationary:
            raise ValueError("model is not stationary")
        return np.linalg.solve(np.eye(self.D) - self.branching_matrix, self.mu)

    def to_dict(self) -> dict:
        return {"D": self.D, "w": self.w, "mu": self.mu.tolist(), "A": self.A.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "HawkesModel":
        try:
            model = cls(mu=data["mu"], A=data["A"], w=data["w"])
        except KeyError as exc:
            raise ValueError(f"model JSON is missing key {exc}") from None
        if "D" in data and int(data["D"]) != model.D:
            raise ValueError(f"model JSON declares D={data['D']} but mu has length {model.D}")
        return model


@dataclass(frozen=True)
class ValidationReport:
    D: int
    spectral_radius: float
    stationary: bool


def validate_model(model: HawkesModel) -> ValidationReport:
    """Spectral radius of ``A / w`` and the resulting stationarity flag."""
    if model.A.shape != (model.D, model.D):
        raise ValueError("dimension mismatch between mu and A")
    rho = model.spectral_radius
    return ValidationReport(D=model.D, spectral_radius=rho, stationary=rho < 1.0)


def _break_ties(times: np.ndarray, T: float) -> np.ndarray:
    """Nudge non-increasing neighbours up by one ulp so the sequence is strictly increasing.

    If that pushes events past ``T``, the tail is pinned at ``T`` and ties are
    resolved downwards instead.
    """
    if times.size < 2 or np.all(np.diff(times) > 0):
        return times
    times = times.copy()
    for k in range(1, times.size):
        if times[k] <= times[k - 1]:
            times[k] = np.nextafter(times[k - 1], np.inf)
    if times[-1] > T:
        times[-1] = T
        for k in range(times.size - 2, -1, -1):
            if times[k] < times[k + 1]:
                break
            times[k] = np.nextafter(times[k + 1], -np.inf)
    return times


@dataclass(frozen=True)
class EventSequence:
    """A canonical event sequence on ``(0, T]``.

    Use :meth:`from_events` to build one from raw (possibly unsorted, tied
    or zero-time) data; the plain constructor only validates.
    """

    times: np.ndarray
    dims: np.ndarray
    T: float
    D: int
    source_id: int | None = None

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        dims = np.atleast_1d(np.asarray(self.dims, dtype=np.int64))
        if times.shape != dims.shape or times.ndim != 1:
            raise ValueError("times and dims must be 1-D arrays of equal length")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if int(self.D) < 1:
            raise ValueError("D must be >= 1")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("timestamps must be strictly increasing")
            if times[0] <= 0 or times[-1] > self.T:
                raise ValueError("timestamps must lie in (0, T]")
            if dims.min() < 0 or dims.max() >= self.D:
                raise ValueError(f"dimension index out of range for D={self.D}")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "dims", _frozen(dims, np.int64))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "D", int(self.D))
        if self.source_id is not None:
            object.__setattr__(self, "source_id", int(self.source_id))

    @classmethod
    def from_events(
        cls,
        times: Iterable[float],
        dims: Iterable[int],
        T: float,
        D: int,
        source_id: int | None = None,
        tie_keys: Sequence[int] | None = None,
    ) -> "EventSequence":
        """Sort, shift t=0 events to ``ZERO_SHIFT * T`` and break ties.

        Ties are ordered by ``(t, tie_key, dim)``; ``tie_keys`` defaults to the
        input order, so same-time events keep the order they were given in.
        """
        times = np.asarray(list(times), dtype=float)
        dims = np.asarray(list(dims), dtype=np.int64)
        if times.shape != dims.shape:
            raise ValueError("times and dims differ in length")
        if np.any(~np.isfinite(times)) or np.any(times < 0) or np.any(times > T):
            raise ValueError("timestamps must lie in [0, T]")
        if tie_keys is None:
            tie_keys = np.arange(times.size)
        order = np.lexsort((dims, np.asarray(tie_keys), times))
        times = times[order]
        dims = dims[order]
        times = np.where(times <= 0, ZERO_SHIFT * T, times)
        times = _break_ties(times, T)
        if times.size and times[0] <= 0:
            raise ValueError("too many tied events to separate within (0, T]")
        return cls(times=times, dims=dims, T=T, D=D, source_id=source_id)

    @classmethod
    def empty(cls, T: float, D: int, source_id: int | None = None) -> "EventSequence":
        return cls(times=np.empty(0), dims=np.empty(0, dtype=np.int64), T=T, D=D, source_id=source_id)

    def __len__(self) -> int:
        return self.times.size

    def counts(self) -> np.ndarray:
        return np.bincount(self.dims, minlength=self.D)

    def with_source(self, source_id: int | None) -> "EventSequence":
        return EventSequence(self.times, self.dims, self.T, self.D, source_id)


def superpose(sequences: Sequence[EventSequence]) -> EventSequence:
    """Merge sequences into the sequence of the summed counting process.

    Ties are ordered by ``(t, source_id, dim)`` and then separated by one ulp.
    The result carries no source tag.
    """
    if not sequences:
        raise ValueError("need at least one sequence to superpose")
    T, D = sequences[0].T, sequences[0].D
    for s in sequences[1:]:
        if s.T != T:
            raise ValueError(f"mismatched horizons: {s.T} vs {T}")
        if s.D != D:
            raise ValueError(f"mismatched dimensions: {s.D} vs {D}")
    times = np.concatenate([s.times for s in sequences])
    dims = np.concatenate([s.dims for s in sequences])
    src = np.concatenate(
        [np.full(len(s), -1 if s.source_id is None else s.source_id) for s in sequences]
    )
    return EventSequence.from_events(times, dims, T=T, D=D, source_id=None, tie_keys=src)


# ---------------------------------------------------------------------------
# Regression and fit containers


@dataclass(frozen=True)
class RegressionBundle:
    """Weighted least-squares problem ``|| W (N - X theta) ||^2``.

    ``X`` is a CSR matrix with ``num_mu_blocks * D + D**2`` columns; the
    first ``num_mu_blocks * D`` are exogenous, the rest are ``vec(A)``.
    ``scale`` is the per-row factor folded into ``W`` (``1/M`` for the
    superposition layout, 1 otherwise).
    """

    N: np.ndarray
    X: object  # scipy.sparse.csr_matrix
    W: np.ndarray
    layout: str
    D: int
    num_mu_blocks: int
    index: np.ndarray  # (L, 2) rows -> (sequence, event)
    source_ids: tuple = ()
    w: float = 1.0

    def __post_init__(self):
        if self.layout not in ("single", "multi", "super"):
            raise ValueError(f"unknown layout {self.layout!r}")
        L = self.N.shape[0]
        if self.X.shape != (L, self.num_params) or self.W.shape != (L,):
            raise ValueError("inconsistent bundle shapes")
        if L and not (np.all(np.isfinite(self.W)) and np.all(self.W > 0)):
            raise ValueError("weights must be finite and positive")
        for name in ("N", "W", "index"):
            getattr(self, name).setflags(write=False)

    @property
    def num_rows(self) -> int:
        return self.N.shape[0]

    @property
    def num_params(self) -> int:
        return self.D * (self.num_mu_blocks + self.D)

    @property
    def mu_columns(self) -> slice:
        return slice(0, self.D * self.num_mu_blocks)

    @property
    def A_columns(self) -> slice:
        return slice(self.D * self.num_mu_blocks, self.num_params)

    def weighted(self):
        """Return ``(W X, W N)``."""
        return sp.diags(self.W) @ self.X, self.W * self.N

    def loss(self, theta: np.ndarray) -> float:
        r = self.W * (self.N - self.X @ np.asarray(theta, dtype=float))
        return float(r @ r)

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split a parameter vector into ``(mus, A)`` with ``mus`` of shape (blocks, D)."""
        theta = np.asarray(theta, dtype=float)
        mus = theta[self.mu_columns].reshape(self.num_mu_blocks, self.D)
        return mus, unvec(theta[self.A_columns], self.D)

    def join(self, mus: np.ndarray, A: np.ndarray) -> np.ndarray:
        mus = np.asarray(mus, dtype=float).reshape(self.num_mu_blocks, self.D)
        return np.concatenate([mus.ravel(), vec(A)])


@dataclass(frozen=True)
class FitResult:
    """Estimated parameters in the layout ``[mu^1; ...; mu^S; vec(A)]``."""

    strategy: str
    theta: np.ndarray
    D: int
    w: float
    num_mu_blocks: int
    loss: float
    iterations: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = _frozen(self.theta)
        if theta.size != self.D * (self.num_mu_blocks + self.D):
            raise ValueError("theta does not match the declared layout")
        object.__setattr__(self, "theta", theta)

    @property
    def mus(self) -> np.ndarray:
        return self.theta[: self.D * self.num_mu_blocks].reshape(self.num_mu_blocks, self.D)

    @property
    def A(self) -> np.ndarray:
        return unvec(self.theta[self.D * self.num_mu_blocks:], self.D)

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.A / self.w)

    @property
    def stationary(self) -> bool:
        return self.spectral_radius < 1.0

    @property
    def models(self) -> tuple["HawkesModel", ...]:
        return models_from_theta(self.theta, self.D, self.num_mu_blocks, self.w)

    def to_model_dict(self) -> dict:
        """Model JSON. ``mu`` is the summed exogenous rate; ``mus`` lists the per-source rates."""
        out = {"D": self.D, "w": self.w, "mu": self.mus.sum(axis=0).tolist(), "A": self.A.tolist()}
        out["mus"] = self.mus.tolist()
        return out

    def diagnostics_dict(self) -> dict:
        out = {
            "strategy": self.strategy,
            "loss": self.loss,
            "iterations": self.iterations,
            "stationary": self.stationary,
            "spectral_radius": self.spectral_radius,
        }
        out.update(self.diagnostics)
        return out


def models_from_theta(theta, D: int, num_mu_blocks: int, w: float) -> tuple[HawkesModel, ...]:
    theta = np.asarray(theta, dtype=float)
    mus = theta[: D * num_mu_blocks].reshape(num_mu_blocks, D)
    A = unvec(theta[D * num_mu_blocks:], D)
    return tuple(HawkesModel(mu, A, w) for mu in mus)


def theta_from_models(models: Sequence[HawkesModel]) -> np.ndarray:
    A = models[0].A
    if any(not np.array_equal(m.A, A) for m in models[1:]):
        raise ValueError("models do not share an infectivity matrix")
    return np.concatenate([np.concatenate([m.mu for m in models]), vec(A)])


@dataclass(frozen=True)
class BoundReport:
    """Excess-risk bound expressions, up to a universal constant."""

    B_mu: float
    B_A: float
    B_sigma_mu: float
    D: int
    M: int
    I: int
    bound_single: float
    bound_multi: float
    bound_super: float
    condition_holds: bool
    note: str = "bounds are reported up to a universal constant"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------------------
# File formats


def sidecar_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_sequences(path: str | Path, sequences: Sequence[EventSequence]) -> None:
    """Write ``seq_id,t,dim`` rows (dims 1-indexed) plus the JSON sidecar."""
    if not sequences:
        raise ValueError("nothing to write")
    T, D = sequences[0].T, sequences[0].D
    if any(s.T != T or s.D != D for s in sequences):
        raise ValueError("all sequences in one file must share T and D")
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seq_id", "t", "dim"])
        for k, s in enumerate(sequences):
            for t, d in zip(s.times.tolist(), s.dims.tolist()):
                writer.writerow([k, repr(t), d + 1])
    header = {"D": D, "T": T, "num_seqs": len(sequences)}
    if any(s.source_id is not None for s in sequences):
        header["source_ids"] = [s.source_id for s in sequences]
    sidecar_path(path).write_text(json.dumps(header, indent=2) + "\n")


def read_sequences(path: str | Path) -> list[EventSequence]:
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise FileNotFoundError(f"missing sidecar header {side}")
    header = json.loads(side.read_text())
    try:
        D, T, n = int(header["D"]), float(header["T"]), int(header["num_seqs"])
    except KeyError as exc:
        raise ValueError(f"sidecar is missing key {exc}") from None
    sources = header.get("source_ids") or [None] * n
    times = [[] for _ in range(n)]
    dims = [[] for _ in range(n)]
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"seq_id", "t", "dim"} <= set(reader.fieldnames):
            raise ValueError("event CSV needs the header seq_id,t,dim")
        for row in reader:
            k = int(row["seq_id"])
            if not 0 <= k < n:
                raise ValueError(f"seq_id {k} outside 0..{n - 1}")
            times[k].append(float(row["t"]))
            dims[k].append(int(row["dim"]) - 1)
    return [
        EventSequence.from_events(times[k], dims[k], T=T, D=D, source_id=sources[k])
        for k in range(n)
    ]


def write_model(path: str | Path, model: HawkesModel) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def read_model(path: str | Path) -> HawkesModel:
    return HawkesModel.from_dict(json.loads(Path(path).read_text()))
