import numpy as np
import pytest
from scipy import stats

from superhawkes.core import HawkesModel
from superhawkes.simulate import (
    make_synthetic_suite,
    random_infectivity,
    simulate_branching,
    simulate_thinning,
    spawn_offspring,
    substream,
)

SAMPLERS = [simulate_branching, simulate_thinning]


@pytest.mark.parametrize("sim", SAMPLERS)
def test_zero_mu_gives_empty(sim):
    m = HawkesModel(np.zeros(3), np.full((3, 3), 0.2))
    assert len(sim(m, 100.0, seed=1)) == 0


@pytest.mark.parametrize("sim", SAMPLERS)
def test_poisson_reduction(sim):
    lam, T, n = 0.7, 20.0, 1000
    m = HawkesModel([lam], [[0.0]])
    counts = np.array([len(sim(m, T, seed=s)) for s in range(n)])
    se = np.sqrt(lam * T / n)
    assert abs(counts.mean() - lam * T) < 3 * se


@pytest.mark.parametrize("sim", SAMPLERS)
def test_rejects_non_stationary_and_bad_horizon(sim):
    with pytest.raises(ValueError, match="stationary"):
        sim(HawkesModel([0.1], [[1.5]]), 10.0)
    with pytest.raises(ValueError):
        sim(HawkesModel([0.1], [[0.1]]), 0.0)


@pytest.mark.parametrize("sim", SAMPLERS)
def test_events_valid_and_reproducible(sim):
    m = HawkesModel([0.3, 0.2], [[0.3, 0.2], [0.1, 0.4]], w=1.3)
    a = sim(m, 50.0, seed=7, source_id=4)
    b = sim(m, 50.0, seed=7, source_id=4)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.dims, b.dims)
    assert a.source_id == 4
    assert len(a) == 0 or (a.times[0] > 0 and a.times[-1] <= 50.0 and np.all(np.diff(a.times) > 0))


@pytest.mark.parametrize("sim", SAMPLERS)
def test_long_run_rate_one_dim(sim):
    # mu / (1 - a/w) = 0.5 / 0.75
    m = HawkesModel([0.5], [[0.25]])
    rates = [len(sim(m, 1000.0, seed=s)) / 1000.0 for s in range(40)]
    assert np.mean(rates) == pytest.approx(2.0 / 3.0, rel=0.05)


def test_expected_offspring_per_parent():
    A = np.array([[0.3, 0.5], [0.2, 0.1]])
    m = HawkesModel([0.0, 0.0], A, w=2.0)
    rng = np.random.default_rng(0)
    n = 20000
    for parent in range(2):
        _, child_d = spawn_offspring(m, np.zeros(n), np.full(n, parent), rng)
        per_parent = child_d.size / n
        expected = A[:, parent].sum() / m.w
        se = np.sqrt(expected / n)  # Poisson variance
        assert abs(per_parent - expected) < 3 * se


def test_offspring_delays_are_exponential():
    m = HawkesModel([0.0], [[0.9]], w=3.0)
    t, _ = spawn_offspring(m, np.zeros(20000), np.zeros(20000, dtype=np.int64), np.random.default_rng(1))
    assert stats.kstest(t, "expon", args=(0, 1 / 3.0)).pvalue > 0.01


def test_samplers_agree_on_five_dims():
    rng = np.random.default_rng(11)
    A = random_infectivity(5, rng, 0.6)
    m = HawkesModel(rng.uniform(0.05, 0.3, 5), A)
    n_b = [len(simulate_branching(m, 20.0, seed=substream(1, s))) for s in range(500)]
    n_t = [len(simulate_thinning(m, 20.0, seed=substream(2, s))) for s in range(500)]
    assert stats.ks_2samp(n_b, n_t).pvalue > 0.01


def test_substreams_independent_and_stable():
    a = substream(5, 1, 2).random(3)
    assert np.array_equal(a, substream(5, 1, 2).random(3))
    assert not np.array_equal(a, substream(5, 2, 1).random(3))


def test_random_infectivity_norm():
    A = random_infectivity(6, np.random.default_rng(0))
    assert np.linalg.norm(A, 2) == pytest.approx(0.5)
    assert np.all(A >= 0)


def test_synthetic_suite_structure():
    models, seqs = make_synthetic_suite(2, 5, 20, 100.0, seed=3)
    assert len(models) == 2 and len(seqs) == 40
    assert np.array_equal(models[0].A, models[1].A)
    assert np.linalg.norm(models[0].A, 2) == pytest.approx(0.5)
    for m in models:
        assert np.count_nonzero(m.mu) == 1 and 0 < m.mu.max() <= 1
    assert [s.source_id for s in seqs] == [0] * 20 + [1] * 20
    # event counts follow from the random mu; check the order of magnitude only
    mean_events = np.mean([len(s) for s in seqs])
    assert 1 <= mean_events <= 500


def test_synthetic_suite_single_model_and_determinism():
    models, seqs = make_synthetic_suite(1, 3, 4, 50.0, seed=9)
    assert len(models) == 1 and {s.source_id for s in seqs} == {0}
    _, again = make_synthetic_suite(1, 3, 4, 50.0, seed=9)
    assert all(np.array_equal(a.times, b.times) for a, b in zip(seqs, again))


def test_synthetic_suite_expected_counts_near_fifty():
    # the expected count averaged over random mu draws is in the tens
    exp = []
    for seed in range(30):
        models, _ = make_synthetic_suite(2, 5, 1, 100.0, seed=seed)
        exp += [m.stationary_rates().sum() * 100 for m in models]
    assert 20 < np.mean(exp) < 200
