"""Cold-start top-N recommendation from a learned infectivity matrix.

Pipeline: ratings CSV -> filtered per-user purchase sequences -> fit ``A``
with the superposition and multi-process strategies -> score items for each
user at the start of the test window -> precision / recall / F1 at N.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .core import EventSequence, HawkesModel
from .estimators import fit_strategy
from .simulate import simulate_branching, substream

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0
DEFAULT_N = (5, 10, 20)
METHODS = ("superposition_hp", "multi_source_mhp", "most_popular")


class RecDataError(ValueError):
    """Input ratings are unusable (nothing survives parsing or filtering)."""


@dataclass(frozen=True)
class RatingEvent:
    user: str
    item: str
    timestamp: float  # days since the unix epoch
    rating: int

    def __post_init__(self):
        if not 1 <= self.rating <= 5:
            raise ValueError(f"rating {self.rating} outside 1..5")
        if not math.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")


def parse_timestamp(text: str) -> float:
    """Days since the epoch from unix seconds or an ISO date / datetime (naive means UTC)."""
    text = text.strip()
    try:
        value = float(text)
    except ValueError:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return dt.timestamp() / SECONDS_PER_DAY
    if not math.isfinite(value):
        raise ValueError("non-finite timestamp")
    return value / SECONDS_PER_DAY


def _parse_rating(text: str) -> int:
    value = float(text)
    if value != int(value) or not 1 <= value <= 5:
        raise ValueError(f"bad rating {text!r}")
    return int(value)


def read_ratings(stream: TextIO | str | Path) -> tuple[list[RatingEvent], int]:
    """Parse ``user,item,rating,timestamp`` rows; returns the events and the number of skipped rows.

    A leading header row is recognised and not counted as malformed.
    """
    if isinstance(stream, (str, Path)):
        with open(stream, newline="") as fh:
            return read_ratings(fh)
    events, skipped = [], 0
    for k, row in enumerate(csv.reader(stream)):
        if not row or all(not c.strip() for c in row):
            continue
        if k == 0 and [c.strip().lower() for c in row] == ["user", "item", "rating", "timestamp"]:
            continue
        try:
            if len(row) != 4:
                raise ValueError("expected 4 fields")
            user, item = row[0].strip(), row[1].strip()
            if not user or not item:
                raise ValueError("empty id")
            events.append(RatingEvent(user, item, parse_timestamp(row[3]), _parse_rating(row[2])))
        except ValueError:
            skipped += 1
    if skipped:
        log.warning("skipped %d malformed rating rows", skipped)
    return events, skipped


def _window_day(v) -> float:
    """Window bounds are ISO dates or plain numbers of days since the epoch."""
    try:
        return float(v)
    except (TypeError, ValueError):
        return parse_timestamp(str(v))


@dataclass(frozen=True)
class FilterParams:
    min_item_ratings: int = 40
    max_train_events: int = 3
    min_train_events: int = 1
    min_rating: int = 4
    train_window: tuple = ("2014-01-01", "2014-04-01")
    test_window: tuple = ("2014-04-01", "2014-08-01")

    def windows_in_days(self) -> tuple[float, float, float, float]:
        a, b = (_window_day(v) for v in self.train_window)
        c, d = (_window_day(v) for v in self.test_window)
        if not (a < b and c < d):
            raise ValueError("windows must have start < end")
        if c < b:
            raise ValueError("test window must not start before the training window ends")
        return a, b, c, d


@dataclass
class RecDataset:
    items: list  # item id per dimension
    users: list
    train: list  # EventSequence per user, times in days since the train-window start
    truth: list  # set of dimensions per user
    train_start: float
    train_end: float
    test_start: float
    test_end: float
    skipped_rows: int = 0

    @property
    def D(self) -> int:
        return len(self.items)

    @property
    def M(self) -> int:
        return len(self.users)

    @property
    def query_time(self) -> float:
        """Time of recommendation on the training clock: the start of the test window."""
        return self.test_start - self.train_start

    def popularity(self) -> np.ndarray:
        """Training-window purchase count per item."""
        counts = np.zeros(self.D)
        for s in self.train:
            counts += s.counts()
        return counts

    def stats(self) -> dict:
        return {
            "users": self.M,
            "items": self.D,
            "train_events": int(sum(len(s) for s in self.train)),
            "test_events": int(sum(len(t) for t in self.truth)),
            "skipped_rows": self.skipped_rows,
        }


def filter_events(events: Iterable[RatingEvent], params: FilterParams = FilterParams(), skipped: int = 0) -> RecDataset:
    """Apply the item, activity and rating filters and build per-user sequences.

    * items need at least ``min_item_ratings`` ratings in the whole input;
    * users need ``min_train_events``..``max_train_events`` purchases of such
      items in the train window, all rated ``>= min_rating``, and at least one
      such purchase in the test window.

    The vocabulary is the set of kept items that surviving users touch.
    """
    events = list(events)
    a, b, c, d = params.windows_in_days()
    item_counts = Counter(e.item for e in events)
    popular = {i for i, n in item_counts.items() if n >= params.min_item_ratings}

    # input order is kept so same-day purchases stay in file order
    train_by_user: dict = {}
    test_by_user: dict = {}
    for k, e in enumerate(events):
        if e.item not in popular:
            continue
        if a <= e.timestamp < b:
            train_by_user.setdefault(e.user, []).append((k, e))
        elif c <= e.timestamp < d:
            test_by_user.setdefault(e.user, set()).add(e.item)

    keep = []
    for user, rows in train_by_user.items():
        if not params.min_train_events <= len(rows) <= params.max_train_events:
            continue
        if any(e.rating < params.min_rating for _, e in rows):
            continue
        if not test_by_user.get(user):
            continue
        keep.append(user)
    if not keep:
        raise RecDataError("no users survive filtering")
    keep.sort()
    vocab = sorted({e.item for u in keep for _, e in train_by_user[u]} | {i for u in keep for i in test_by_user[u]})
    dim = {item: j for j, item in enumerate(vocab)}

    T = b - a
    train, truth = [], []
    for m, user in enumerate(keep):
        rows = train_by_user[user]
        train.append(EventSequence.from_events(
            np.array([e.timestamp - a for _, e in rows]),
            np.array([dim[e.item] for _, e in rows]),
            T=T, D=len(vocab), source_id=m,
            tie_keys=np.array([k for k, _ in rows]),
        ))
        truth.append({dim[i] for i in test_by_user[user]})
    return RecDataset(vocab, keep, train, truth, a, b, c, d, skipped)


def ingest_and_filter(stream: TextIO | str | Path, params: FilterParams = FilterParams()) -> RecDataset:
    events, skipped = read_ratings(stream)
    if not events:
        raise RecDataError(f"no parseable rating rows ({skipped} malformed)")
    return filter_events(events, params, skipped)


# ---------------------------------------------------------------------------
# scoring and ranking


def score_items(A_hat: np.ndarray, w: float, history: EventSequence, t: float, relative: bool = False) -> np.ndarray:
    """``score[d] = sum_i A_hat[d, d_i] exp(-w (t - t_i))`` over history events before ``t``.

    With ``relative`` the scores are multiplied by ``exp(w (t - t_last))``;
    the ranking is unchanged and long gaps no longer underflow to zero.
    """
    A_hat = np.asarray(A_hat, dtype=float)
    past = history.times < t
    lags = t - history.times[past]
    if lags.size == 0:
        return np.zeros(A_hat.shape[0])
    if relative:
        lags = lags - lags.min()
    kern = np.exp(-w * lags)
    return A_hat[:, history.dims[past]] @ kern


@dataclass(frozen=True)
class Ranking:
    items: tuple
    short: bool  # fewer than N candidates were available


def recommend_topn(
    scores: np.ndarray, N: int, exclude: Iterable[int] = (), popularity: np.ndarray | None = None
) -> Ranking:
    """Top N by score, ties broken by popularity (descending) then index (ascending)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    scores = np.asarray(scores, dtype=float)
    D = scores.size
    pop = np.zeros(D) if popularity is None else np.asarray(popularity, dtype=float)
    mask = np.ones(D, dtype=bool)
    ex = np.fromiter(exclude, dtype=np.int64)
    mask[ex[(ex >= 0) & (ex < D)]] = False
    cand = np.flatnonzero(mask)
    order = cand[np.lexsort((cand, -pop[cand], -scores[cand]))]
    top = tuple(int(i) for i in order[:N])
    return Ranking(top, len(top) < N)


def most_popular_baseline(data: RecDataset, N: int) -> Ranking:
    """Same list for everyone: items by training purchase count, ties by index."""
    pop = data.popularity()
    return recommend_topn(pop, N, popularity=pop)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    users: int

    def to_dict(self) -> dict:
        return {"P": self.precision, "R": self.recall, "F1": self.f1, "users": self.users}


def evaluate(recs: Sequence[Sequence[int]], truth: Sequence[set], N: int | None = None) -> Metrics:
    """Per-user precision, recall and F1 (percent), averaged over users.

    Lists are truncated to N when given. Empty lists and P = R = 0 score zero.
    """
    if len(recs) != len(truth):
        raise ValueError("recs and truth must cover the same users")
    if not recs:
        raise ValueError("no users to evaluate")
    P = np.zeros(len(recs))
    R = np.zeros(len(recs))
    F = np.zeros(len(recs))
    for m, (r, t) in enumerate(zip(recs, truth)):
        r = list(r)[:N] if N is not None else list(r)
        if not r or not t:
            continue
        hit = len(set(r) & set(t))
        P[m] = 100.0 * hit / len(r)
        R[m] = 100.0 * hit / len(t)
        if P[m] + R[m] > 0:
            F[m] = 2 * P[m] * R[m] / (P[m] + R[m])
    return Metrics(float(P.mean()), float(R.mean()), float(F.mean()), len(recs))


# ---------------------------------------------------------------------------
# pipeline


def contiguous_groups(M: int, group_size: int = 20) -> list[list[int]]:
    """``ceil(M / group_size)`` consecutive blocks of users."""
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    return [list(range(s, min(M, s + group_size))) for s in range(0, M, group_size)]


@dataclass
class RecReport:
    dataset: dict
    N: tuple
    lists: dict  # method -> per-user ranked dimension lists (length max N)
    fallback: list  # per user: MostPopular used because the history was empty
    metrics: dict  # N -> method -> Metrics
    fit_diagnostics: dict = field(default_factory=dict)

    def metrics_dict(self) -> dict:
        return {str(n): {k: m.to_dict() for k, m in by.items()} for n, by in self.metrics.items()}

    def write(self, out_dir: str | Path, data: RecDataset) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "recs.jsonl").open("w") as fh:
            for m, user in enumerate(data.users):
                row = {"user": user, "fallback": self.fallback[m]}
                row.update({k: [data.items[d] for d in v[m]] for k, v in self.lists.items()})
                row["truth"] = sorted(data.items[d] for d in data.truth[m])
                fh.write(json.dumps(row) + "\n")
        (out / "metrics.json").write_text(json.dumps(self.metrics_dict(), indent=2) + "\n")


def fit_infectivity(data: RecDataset, strategy: str, w: float = 1.0, estimator: str = "ls",
                    group_size: int = 20) -> tuple[np.ndarray, dict]:
    """Fit ``A`` on the users' training sequences with ``super`` or ``multi``."""
    groups = contiguous_groups(data.M, group_size) if strategy == "super" else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit = fit_strategy(data.train, strategy, estimator, w, groups=groups)
    diag = fit.diagnostics_dict()
    diag["warnings"] = sorted({str(c.message).split(";")[0] for c in caught})
    return fit.A, diag


def run_recommendation(
    data: RecDataset,
    N: Sequence[int] = DEFAULT_N,
    w: float = 1.0,
    estimator: str = "ls",
    group_size: int = 20,
    exclude_bought: bool = True,
) -> RecReport:
    N = tuple(sorted(set(int(n) for n in N)))
    if not N or N[0] < 1:
        raise ValueError("N values must be >= 1")
    top = N[-1]
    pop = data.popularity()
    baseline = list(most_popular_baseline(data, top).items)
    fitted = {
        "superposition_hp": fit_infectivity(data, "super", w, estimator, group_size),
        "multi_source_mhp": fit_infectivity(data, "multi", w, estimator, group_size),
    }
    lists = {}
    fallback = []
    t = data.query_time
    for name, (A_hat, _) in fitted.items():
        per_user = []
        for m, seq in enumerate(data.train):
            if len(seq) == 0:
                per_user.append(baseline)
                if name == "superposition_hp":
                    fallback.append(True)
                continue
            if name == "superposition_hp":
                fallback.append(False)
            scores = score_items(A_hat, w, seq, t, relative=True)
            exclude = set(seq.dims.tolist()) if exclude_bought else ()
            per_user.append(list(recommend_topn(scores, top, exclude, pop).items))
        lists[name] = per_user
    lists["most_popular"] = [baseline] * data.M
    metrics = {n: {k: evaluate(v, data.truth, n) for k, v in lists.items()} for n in N}
    return RecReport(data.stats(), N, lists, fallback, metrics, {k: d for k, (_, d) in fitted.items()})


# ---------------------------------------------------------------------------
# synthetic purchase data


def synthetic_infectivity(seed: int, num_items: int, w: float, links: int = 2, spectral_norm: float = 0.6) -> np.ndarray:
    """Sparse item-to-item ``A``: each item excites ``links`` random other items."""
    rng = substream(seed, 0)
    D = num_items
    A = np.zeros((D, D))
    for j in range(D):
        targets = rng.choice(np.delete(np.arange(D), j), size=links, replace=False)
        A[targets, j] = rng.uniform(0.5, 1.0, size=links)
    return A * (spectral_norm * w / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12))


def synthetic_ratings(
    seed: int = 0,
    num_users: int = 400,
    num_items: int = 30,
    w: float = 0.05,
    rate: float = 0.008,
    links: int = 2,
    spectral_norm: float = 0.85,
    favourites: int = 3,
    params: FilterParams = FilterParams(),
) -> list[RatingEvent]:
    """Purchases drawn from Hawkes models sharing :func:`synthetic_infectivity`.

    Every user buys spontaneously from ``favourites`` items at a total
    ``rate`` per day. Times span the train and test windows of ``params``;
    ratings are mostly 4 or 5.
    """
    A = synthetic_infectivity(seed, num_items, w, links, spectral_norm)
    rng = substream(seed, 1)
    a, _, _, d = params.windows_in_days()
    D = num_items
    events = []
    for m in range(num_users):
        mu = np.zeros(D)
        fav = rng.choice(D, size=favourites, replace=False)
        mu[fav] = rate * rng.dirichlet(np.ones(favourites))
        seq = simulate_branching(HawkesModel(mu, A, w), d - a, seed=substream(seed, 2, m))
        ratings = rng.choice([3, 4, 5], size=len(seq), p=[0.05, 0.35, 0.6])
        for t, item, r in zip(seq.times, seq.dims, ratings):
            events.append(RatingEvent(f"u{m:05d}", f"i{item:03d}", a + float(t), int(r)))
    return events


def ratings_to_csv(events: Iterable[RatingEvent]) -> str:
    """Serialise to ``user,item,rating,timestamp`` with unix-second timestamps."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for e in events:
        w.writerow([e.user, e.item, e.rating, repr(e.timestamp * SECONDS_PER_DAY)])
    return buf.getvalue()
