import json

import numpy as np
import pytest

from stokid.basis import Expansion, builtin, parse_dictionary
from stokid.kramers_moyal import (BinnedData, IncrementSeries, assemble_problem, assemble_unbinned,
                                  bin_series, linear_increments, quadratic_increments,
                                  relative_errors)
from stokid.simulate import SimConfig, constant, double_well, simulate_ito, simulate_overdamped
from stokid.ssr import least_squares
from stokid.trajectory import Trajectory, load_trajectory, save_trajectory


def test_line_and_constant_trajectories():
    dt = 0.01
    line = Trajectory(dt * np.arange(11), dt)
    assert np.allclose(linear_increments(line).values, 1.0)
    flat = Trajectory(np.full(6, 2.0), dt)
    assert np.all(linear_increments(flat).values == 0.0)
    assert np.all(quadratic_increments(flat).values == 0.0)


def test_quadratic_values_and_beta():
    t = Trajectory(np.array([0.0, 0.2, 0.1]), 0.5, beta=2.0)
    assert np.allclose(quadratic_increments(t).values, [0.2 ** 2 / 0.5, 0.1 ** 2 / 0.5])
    assert np.allclose(quadratic_increments(t, beta=1.0).values, [0.04, 0.01])


def test_several_trajectories_do_not_cross_boundaries():
    a = Trajectory(np.array([0.0, 1.0]), 1.0)
    b = Trajectory(np.array([10.0, 12.0]), 1.0)
    s = linear_increments([a, b])
    assert s.values.tolist() == [1.0, 2.0]
    assert s.anchors[:, 0].tolist() == [0.0, 10.0]
    with pytest.raises(ValueError):
        linear_increments([a, Trajectory(np.array([0.0, 1.0]), 2.0)])
    with pytest.raises(ValueError):
        linear_increments(Trajectory(np.array([0.0]), 1.0))


def test_binning_example():
    s = IncrementSeries("linear", np.array([1.0, 3.0, 5.0, 7.0]), np.array([0.1, 0.1, 0.9, 0.9]))
    b = bin_series(s, 2, (0.0, 1.0))
    assert b.weights.tolist() == [0.5, 0.5]
    assert b.means.tolist() == [2.0, 6.0]
    assert np.allclose(b.centers, [0.25, 0.75])


def test_binning_errors_and_defaults():
    s = IncrementSeries("linear", np.ones(3), np.full(3, 0.5))
    with pytest.raises(ValueError, match="degenerate"):
        bin_series(s, 4, (0.0, 1.0))
    with pytest.raises(ValueError):
        bin_series(s, 1)
    angles = IncrementSeries("linear", np.ones(2), np.array([-1.0, 1.0]), periodic=True)
    assert bin_series(angles, 63).edges[0] == -np.pi
    empty = bin_series(IncrementSeries("linear", np.ones(2), np.array([0.0, 1.0])), 5)
    assert empty.occupied.tolist() == [True, False, False, False, True]


def test_weighted_mean_of_bin_means_is_global_mean():
    rng = np.random.default_rng(0)
    s = IncrementSeries("linear", rng.normal(size=10_000), rng.uniform(-2, 3, 10_000))
    b = bin_series(s, 37)
    occ = b.occupied
    assert abs(np.sum(b.weights[occ] * b.means[occ]) - s.values.mean()) < 1e-12


def test_binned_json_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    s = IncrementSeries("quadratic", rng.normal(size=500), rng.uniform(0, 1, 500) ** 3)
    b = bin_series(s, 30)
    back = BinnedData.from_json(json.loads(json.dumps(b.to_json())))
    assert np.array_equal(back.counts, b.counts)
    assert np.array_equal(back.means, b.means)
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().startswith("center,weight,mean,count")


def test_assemble_problem_shapes():
    s = IncrementSeries("linear", np.arange(6.0), np.linspace(0, 1, 6))
    b = bin_series(s, 3)
    p = assemble_problem(parse_dictionary("const"), b)
    assert p.X.shape == (3, 1) and np.all(p.X == 1.0)
    with pytest.warns(UserWarning, match="underdetermined"):
        assemble_problem(builtin("theta"), b)


def test_single_occupancy_bins_match_unbinned_rows():
    x = np.array([0.125, 0.375, 0.625, 0.875])
    s = IncrementSeries("linear", np.array([2.0, -1.0, 0.5, 4.0]), x)
    d = parse_dictionary("const; poly 1; sin 2")
    binned = assemble_problem(d, bin_series(s, 4, (0.0, 1.0)))
    raw = assemble_unbinned(d, s)
    assert np.array_equal(binned.Y, raw.Y)
    assert np.array_equal(binned.weights, raw.weights)
    # samples sit on the bin centers, so the designs coincide
    assert np.allclose(binned.X, raw.X, rtol=0, atol=1e-15)


def test_row_scales():
    s = IncrementSeries("linear", np.arange(4.0), np.array([0.1, 0.1, 0.1, 0.9]))
    b = bin_series(s, 2, (0.0, 1.0))
    d = parse_dictionary("const")
    assert np.allclose(assemble_problem(d, b, "w").row_scale, [0.75, 0.25])
    assert np.allclose(assemble_problem(d, b, "sqrt").row_scale, np.sqrt([0.75, 0.25]))
    assert np.allclose(assemble_problem(d, b, "none").row_scale, 1.0)


def test_increments_from_saved_file_are_bit_identical(tmp_path):
    t = simulate_overdamped(double_well(), SimConfig(n_steps=5_000, seed=2))
    save_trajectory(t, tmp_path / "t.stkj")
    back = load_trajectory(tmp_path / "t.stkj")
    assert np.array_equal(linear_increments(back).values, linear_increments(t).values)
    assert np.array_equal(quadratic_increments(back).values, quadratic_increments(t).values)


def test_ornstein_uhlenbeck_drift_and_diffusion():
    b = Expansion(parse_dictionary("poly 1"), np.array([-1.0]))
    t = simulate_ito(b, constant(1.0), SimConfig(dt=1e-3, n_steps=2_000_000, seed=4,
                                                 initial_state=(0.0,)))
    d = parse_dictionary("const; poly 1")
    drift = least_squares(assemble_problem(d, bin_series(linear_increments(t), 40, (-2.5, 2.5))))
    diff = least_squares(assemble_problem(d, bin_series(quadratic_increments(t), 40, (-2.5, 2.5))))
    assert abs(drift[1] + 1.0) < 0.05
    assert abs(diff[0] - 1.0) < 0.05 and abs(diff[1]) < 0.05


def test_pure_diffusion_bin_means():
    t = simulate_ito(constant(0.0), constant(1.0), SimConfig(dt=1e-3, n_steps=1_000_000, seed=8,
                                                             initial_state=(0.0,)))
    b = bin_series(quadratic_increments(t), 20)
    busy = b.counts > 20_000
    assert busy.sum() >= 3
    assert np.all(np.abs(b.means[busy] - 1.0) < 0.05)


def test_relative_errors():
    s = IncrementSeries("linear", np.array([1.1, 3.15]), np.array([0.25, 0.75]))
    b = bin_series(s, 2, (0.0, 1.0))
    eps = relative_errors(b, lambda x: 4 * x)
    assert np.allclose(eps, [0.1, 0.05])
