from itertools import combinations
from math import comb

import numpy as np
import pytest

from stokid.basis import builtin, parse_dictionary
from stokid.kramers_moyal import assemble_problem, bin_series, linear_increments
from stokid.search import (GreedyResult, default_samples, draw_subsets, greedy_search,
                           noise_experiment, random_dictionary, reduced_reference, subset_score)
from stokid.simulate import SimConfig, double_well, simulate_overdamped
from stokid.ssr import CvConfig, cross_validate

CFG = CvConfig(5, 4, 3)


@pytest.fixture(scope="module")
def binned():
    t = simulate_overdamped(double_well(), SimConfig(dt=5e-3, n_steps=200_000, seed=1))
    return bin_series(linear_increments(t), 40).with_means(
        -bin_series(linear_increments(t), 40).means, "gradient")


@pytest.fixture(scope="module")
def toy():
    return builtin("theta").subset(range(8), name="toy")


def test_sampled_search_matches_brute_force(binned, toy):
    result = greedy_search(toy, binned, sizes=[3], samples=60, config=CFG)
    assert result.samples == {3: 56}
    seen = sorted(r.subset for r in result.records)
    assert seen == list(combinations(range(8), 3))
    problem = assemble_problem(toy, binned)
    for r in result.records:
        oracle = cross_validate(problem.columns(r.subset), CFG).delta[-1]
        assert r.delta == pytest.approx(oracle, rel=1e-8, abs=1e-14)
    best = min((r for r in result.records), key=lambda r: r.delta)
    assert result.best(3) == best


def test_full_size_has_one_subset(binned, toy):
    result = greedy_search(toy, binned, sizes=[8], config=CFG)
    assert [r.subset for r in result.records] == [tuple(range(8))]
    assert result.records[0].contains_analytic
    with pytest.raises(ValueError):
        greedy_search(toy, binned, sizes=[9], config=CFG)


def test_analytic_flag(binned, toy):
    result = greedy_search(toy, binned, sizes=[4], config=CFG)
    flagged = [r.subset for r in result.records if r.contains_analytic]
    assert flagged == [(0, 1, 2, 3)]
    assert result.best(4).subset == (0, 1, 2, 3)


def test_rank_deficient_subsets_are_excluded(binned):
    # gauss 50 30 vanishes on the data, so any subset holding it is singular
    d = parse_dictionary("const; poly 1; poly 2; gauss 50 30")
    result = greedy_search(d, binned, sizes=[3], config=CFG, analytic=())
    flags = {r.subset: r.rank_deficient for r in result.records}
    assert flags == {(0, 1, 2): False, (0, 1, 3): True, (0, 2, 3): True, (1, 2, 3): True}
    assert result.best(3).subset == (0, 1, 2)
    assert subset_score(assemble_problem(d, binned), [0, 1], CFG) >= 0.0


def test_draws_are_deterministic_and_distinct():
    a = draw_subsets(30, 6, 500, 7)
    assert np.array_equal(a, draw_subsets(30, 6, 500, 7))
    assert len({tuple(s) for s in a}) == 500
    assert np.all(np.diff(a, axis=1) > 0)
    assert not np.array_equal(a, draw_subsets(30, 6, 500, 8))
    dense = draw_subsets(10, 5, 200, 0)
    assert len({tuple(s) for s in dense}) == 200
    assert draw_subsets(8, 3, 56, 0).shape == (56, 3)


def test_default_samples():
    assert default_samples(30, 3) == comb(30, 3)
    assert default_samples(30, 5) == 2000
    assert default_samples(30, 29) == 30
    assert default_samples(100, 6, cap=100_000) == 100_000


def test_reduced_reference():
    omega = builtin("omega")
    r = reduced_reference(omega, 30)
    assert r.K == 30
    for label in ("const", "poly 1", "poly 2", "poly 3"):
        r.index(label)
    assert r.labels() == reduced_reference(omega, 30).labels()
    with pytest.raises(ValueError):
        reduced_reference(omega, 2)


def test_random_dictionary_contents():
    omega = builtin("omega")
    d = random_dictionary(omega, 50, np.random.default_rng(0))
    assert d.K == 50 and len(set(d.labels())) == 50
    assert {"const", "poly 1", "poly 2", "poly 3"} <= set(d.labels())


def test_result_csv(tmp_path, binned, toy):
    result = greedy_search(toy, binned, sizes=[1, 2], config=CFG)
    assert isinstance(result, GreedyResult)
    result.write_csv(tmp_path / "g.csv")
    result.write_minimum_csv(tmp_path / "m.csv")
    rows = (tmp_path / "g.csv").read_text().splitlines()
    assert rows[0] == "n,delta,contains_analytic,rank_deficient,subset"
    assert len(rows) == 1 + 8 + 28
    curve = result.minimum_curve()
    assert set(curve) == {1, 2}


def test_noise_experiment_extremes(binned):
    exact = lambda x: double_well().gradient(np.reshape(x, (-1, 1)))[:, 0]
    omega = builtin("theta_prime")
    rep = noise_experiment(binned, exact, omega, n_dicts=3, f_values=(1.0, 0.0), dict_size=8,
                           config=CvConfig(5, 5, 11))
    assert rep.success[0.0] == 100.0
    assert rep.success[1.0] <= rep.success[0.0]
    assert 0.0 < rep.median_error
    doc = rep.to_json()
    assert doc["success_percent"] == [rep.success[1.0], 100.0]
