"""Assembly of the weighted least-squares problems for the three learning strategies.

Each observed event ``(t_i, d_i)`` gives one regression row:

* label: ``N_{d_i}(t_i)``, the count of type-``d_i`` events up to and including ``t_i``;
* features: the time integral of the linear predictor, i.e. ``t_i`` in the
  exogenous column of ``d_i`` and ``sum_{t_j < t_i, d_j = d'} (1 - exp(-w (t_i - t_j))) / w``
  in the column of ``a[d_i, d']``;
* weight: ``1 / t_i`` (times ``1/M`` for a superposition of M sequences).

Labels and features are divided by ``sqrt(L)``, L being the total number of rows.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import EventSequence, RegressionBundle, superpose

#: Events closer than ``TIE_WINDOW * T`` count as simultaneous when forming labels.
TIE_WINDOW = 1e-12

# rows per block of pairwise kernel evaluations, and a cap on entries held at once
_BLOCK_ROWS = 256
_BLOCK_ENTRIES = 1 << 21


def compensator_features(seq: EventSequence, w: float, t: float, d: int) -> np.ndarray:
    """Integrated feature row of dimension ``d`` at time ``t`` (length ``D * (1 + D)``)."""
    if t <= 0:
        raise ValueError("t must be positive")
    D = seq.D
    if not 0 <= d < D:
        raise ValueError(f"dimension {d} out of range")
    row = np.zeros(D * (1 + D))
    row[d] = t
    past = seq.times < t
    contrib = -np.expm1(-w * (t - seq.times[past])) / w
    endo = np.bincount(seq.dims[past], weights=contrib, minlength=D)
    row[D + d + D * np.arange(D)] = endo
    return row


def pairwise_type_sums(times: np.ndarray, dims: np.ndarray, D: int, fn) -> np.ndarray:
    """``S[i, d'] = sum_{j < i, d_j = d'} fn(t_i - t_j)``, evaluated pair by pair."""
    n = times.size
    S = np.zeros((n, D))
    if n == 0:
        return S
    onehot = np.zeros((n, D))
    onehot[np.arange(n), dims] = 1.0
    step = max(1, min(_BLOCK_ROWS, _BLOCK_ENTRIES // n))
    for start in range(0, n, step):
        stop = min(n, start + step)
        lag = times[start:stop, None] - times[None, :stop]
        K = fn(np.maximum(lag, 0.0))
        K[lag <= 0] = 0.0
        S[start:stop] = K @ onehot[:stop]
    return S


def kernel_integrals(times: np.ndarray, dims: np.ndarray, D: int, w: float) -> np.ndarray:
    """``F[i, d'] = sum_{j < i, d_j = d'} (1 - exp(-w (t_i - t_j))) / w``.

    Quadratic in the sequence length.
    """
    return pairwise_type_sums(times, dims, D, lambda lag: -np.expm1(-w * lag) / w)


def counting_labels(seq: EventSequence) -> np.ndarray:
    """``N_{d_i}(t_i)`` for every event, counting near-simultaneous events together."""
    labels = np.empty(len(seq))
    tol = TIE_WINDOW * seq.T
    for d in np.unique(seq.dims):
        idx = np.flatnonzero(seq.dims == d)
        td = seq.times[idx]
        labels[idx] = np.searchsorted(td, td + tol, side="right")
    return labels


def _assemble(
    seqs: Sequence[EventSequence],
    w: float,
    blocks: Sequence[int],
    num_blocks: int,
    scales: Sequence[float],
    layout: str,
    source_ids: tuple = (),
) -> RegressionBundle:
    if not seqs:
        raise ValueError("no sequences given")
    D = seqs[0].D
    if any(s.D != D for s in seqs):
        raise ValueError("sequences disagree on D")
    L = sum(len(s) for s in seqs)
    if L == 0:
        raise ValueError("sequences contain no events")
    norm = 1.0 / np.sqrt(L)
    off_A = num_blocks * D

    labels, weights, index = [], [], []
    rows, cols, vals = [], [], []
    r0 = 0
    for m, s in enumerate(seqs):
        n = len(s)
        if n == 0:
            continue
        t, d = s.times, s.dims
        r = r0 + np.arange(n)
        labels.append(counting_labels(s) * norm)
        weights.append(scales[m] / t)
        index.append(np.column_stack([np.full(n, m), np.arange(n)]))
        # exogenous column
        rows.append(r)
        cols.append(blocks[m] * D + d)
        vals.append(t * norm)
        # endogenous columns a[d_i, d'] for all d'
        F = kernel_integrals(t, d, D, w) * norm
        ii, jj = np.nonzero(F)
        rows.append(r[ii])
        cols.append(off_A + d[ii] + D * jj)
        vals.append(F[ii, jj])
        r0 += n

    P = D * (num_blocks + D)
    X = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(L, P)
    )
    X.sort_indices()
    return RegressionBundle(
        N=np.concatenate(labels),
        X=X,
        W=np.concatenate(weights),
        layout=layout,
        D=D,
        num_mu_blocks=num_blocks,
        index=np.concatenate(index).astype(np.int64),
        source_ids=source_ids,
        w=w,
    )


def build_single(seqs: Sequence[EventSequence], w: float) -> RegressionBundle:
    """One Hawkes process for all sequences: ``theta = [mu; vec(A)]``."""
    return _assemble(seqs, w, [0] * len(seqs), 1, [1.0] * len(seqs), "single")


def source_blocks(seqs: Sequence[EventSequence]) -> tuple[list[int], tuple]:
    """Map each sequence to a source block in order of first appearance.

    Untagged sequences each form their own source.
    """
    keys: dict = {}
    blocks = []
    for m, s in enumerate(seqs):
        key = ("src", s.source_id) if s.source_id is not None else ("seq", m)
        blocks.append(keys.setdefault(key, len(keys)))
    labels = tuple(k[1] if k[0] == "src" else None for k in keys)
    return blocks, labels


def build_multi(seqs: Sequence[EventSequence], w: float) -> RegressionBundle:
    """Per-source exogenous rates with a shared ``A``: ``theta = [mu^1; ...; mu^S; vec(A)]``."""
    blocks, labels = source_blocks(seqs)
    return _assemble(seqs, w, blocks, len(labels), [1.0] * len(seqs), "multi", labels)


def plan_from_sources(seqs: Sequence[EventSequence]) -> list[list[int]]:
    """Group the g-th sequence of every source together (flat indices).

    Without at least two distinct source tags everything goes into one group.
    """
    by_source: dict = {}
    for m, s in enumerate(seqs):
        by_source.setdefault(s.source_id, []).append(m)
    if len(by_source) < 2 or None in by_source:
        return [list(range(len(seqs)))]
    n = min(len(v) for v in by_source.values())
    return [[v[g] for v in by_source.values()] for g in range(n)]


def build_super(
    seqs: Sequence[EventSequence], w: float, groups: Sequence[Sequence[int]] | None = None
) -> RegressionBundle:
    """Superpose each group, then build the single-process problem with weights scaled by 1/M.

    ``groups`` lists flat indices into ``seqs``; the default pairs sequences
    by position across sources (see :func:`plan_from_sources`).
    """
    if groups is None:
        groups = plan_from_sources(seqs)
    merged = [superpose([seqs[i] for i in g]) for g in groups]
    scales = [1.0 / len(g) for g in groups]
    return _assemble(merged, w, [0] * len(merged), 1, scales, "super")


# ---------------------------------------------------------------------------
# plain-text dump, for debugging


def write_bundle_text(bundle: RegressionBundle, path: str | Path) -> None:
    """Dense text dump: three header lines, then ``seq event N W x_1 .. x_P`` per row."""
    X = bundle.X.toarray()
    with Path(path).open("w") as fh:
        fh.write("# superhawkes-bundle v1\n")
        fh.write(
            f"# layout={bundle.layout} D={bundle.D} blocks={bundle.num_mu_blocks} "
            f"w={bundle.w!r} rows={bundle.num_rows} cols={bundle.num_params}\n"
        )
        fh.write("# seq event N W X...\n")
        for k in range(bundle.num_rows):
            vals = [repr(float(v)) for v in (bundle.N[k], bundle.W[k], *X[k])]
            fh.write(f"{bundle.index[k, 0]} {bundle.index[k, 1]} " + " ".join(vals) + "\n")


def read_bundle_text(path: str | Path) -> RegressionBundle:
    lines = Path(path).read_text().splitlines()
    meta = dict(kv.split("=") for kv in lines[1].lstrip("# ").split())
    body = np.loadtxt(lines[3:], ndmin=2) if len(lines) > 3 else np.empty((0, 4))
    return RegressionBundle(
        N=body[:, 2].copy(),
        X=sp.csr_matrix(body[:, 4:]),
        W=body[:, 3].copy(),
        layout=meta["layout"],
        D=int(meta["D"]),
        num_mu_blocks=int(meta["blocks"]),
        index=body[:, :2].astype(np.int64),
        w=float(meta["w"]),
    )
