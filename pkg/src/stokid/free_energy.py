"""Free-energy gradients from a fitted diffusion model and trajectory increments.

For a one-dimensional coordinate with drift ``b`` and diffusion ``a`` the
free energy satisfies ``F' = (a'/beta - b) / a``. Replacing ``b`` by the
linear increments gives per-sample targets that are binned and regressed on
the derivatives of a dictionary, so that ``F = sum_k v_k f_k`` up to a
constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .basis import Dictionary, Expansion, evaluate, evaluate_gradient, serialize
from .kramers_moyal import (SCHEMA_VERSION, IncrementSeries, RegressionProblem, bin_series,
                            linear_increments)
from .ssr import CvConfig, FitResult, fit, least_squares
from .trajectory import Trajectory


@dataclass(frozen=True)
class DiffusionModel:
    """Scalar diffusion ``a(x) = sum_k c_k f_k(x)`` of a 1D coordinate."""

    expansion: Expansion
    beta: float = 1.0

    @classmethod
    def from_fit(cls, result: FitResult, beta: float = 1.0) -> "DiffusionModel":
        return cls(result.expansion(), beta)

    @classmethod
    def constant(cls, value: float, beta: float = 1.0) -> "DiffusionModel":
        from .simulate import constant
        return cls(constant(value), beta)

    def __call__(self, x) -> np.ndarray:
        return self.expansion(x)

    def derivative(self, x) -> np.ndarray:
        return self.expansion.gradient(x)[0]


@dataclass(frozen=True)
class EnergyModel:
    """``F = sum_k v_k f_k`` represented through its gradient coefficients ``v``."""

    dictionary: Dictionary
    coefficients: np.ndarray
    beta: float = 1.0
    fit: FitResult | None = None

    def gradient(self, x) -> np.ndarray:
        return evaluate_gradient(self.dictionary, x)[0] @ self.coefficients

    def energy(self, x) -> np.ndarray:
        return evaluate(self.dictionary, x) @ self.coefficients

    def active_labels(self) -> list[str]:
        labels = self.dictionary.labels()
        return [labels[i] for i in np.flatnonzero(self.coefficients)]

    def to_json(self) -> dict:
        labels = self.dictionary.labels()
        doc = {
            "schema_version": SCHEMA_VERSION,
            "dictionary": self.dictionary.name,
            "dictionary_source": serialize(self.dictionary),
            "target": "free_energy",
            "beta": self.beta,
            "n_selected": int(np.count_nonzero(self.coefficients)),
            "coefficients": [{"index": int(i), "name": labels[i], "value": float(self.coefficients[i])}
                             for i in np.flatnonzero(self.coefficients)],
        }
        if self.fit is not None:
            doc["delta"] = self.fit.report.delta.tolist()
            doc["ratios"] = self.fit.report.ratios.tolist()
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def energy_series(traj: Trajectory, a: DiffusionModel, beta: float | None = None) -> IncrementSeries:
    """Per-sample targets ``(a'(x_l) / beta - dxi_l / s) / a(x_l)``."""
    if traj.d != 1:
        raise ValueError(f"free-energy regression needs a 1D trajectory, got d={traj.d}")
    beta = traj.beta if beta is None else beta
    lin = linear_increments(traj)
    x = lin.anchors
    av = a(x)
    bad = np.flatnonzero(~(av > 0))
    if bad.size:
        l = int(bad[0])
        raise ValueError(f"diffusion model is not positive at state {l} (x={x[l, 0]:.6g}, a={av[l]:.6g})")
    values = (a.derivative(x) / beta - lin.values) / av
    return IncrementSeries("energy", values, x, beta, lin.periodic, (0,))


def assemble_energy_problem(traj: Trajectory, dictionary: Dictionary, a: DiffusionModel, Q: int,
                            beta: float | None = None, range=None,
                            weighting: str = "sqrt") -> RegressionProblem:
    """Binned regression of the free-energy gradient on the dictionary derivatives."""
    binned = bin_series(energy_series(traj, a, beta), Q, range)
    occ = binned.occupied
    centers = binned.centers[occ]
    X = evaluate_gradient(dictionary, centers)[0]
    return RegressionProblem(X, binned.means[occ], binned.weights[occ], dictionary, "free_energy",
                             centers, weighting)


def fit_free_energy(problem: RegressionProblem, config: CvConfig | None = None,
                    beta: float = 1.0) -> EnergyModel:
    """Least-squares energy model; with ``config`` the SSR+CV sparse one.

    Terms with a vanishing derivative (the constant) carry no information and
    get a zero coefficient.
    """
    if config is None:
        return EnergyModel(problem.dictionary, least_squares(problem), beta)
    result = fit(problem, config)
    return EnergyModel(problem.dictionary, result.coefficients, beta, result)


def evaluate_free_energy(model: EnergyModel, points) -> np.ndarray:
    """``F`` at ``points`` shifted so that its minimum over them is zero."""
    F = model.energy(points)
    return F - np.min(F)


def boltzmann_weights(model: EnergyModel, edges) -> np.ndarray:
    """``exp(-beta F)`` at bin centers, normalized to unit mass over the bins."""
    edges = np.asarray(edges, dtype=float)
    centers = 0.5 * (edges[1:] + edges[:-1])
    p = np.exp(-model.beta * evaluate_free_energy(model, centers))
    return p / p.sum()


def write_energy_csv(model: EnergyModel, points, path) -> None:
    x = np.asarray(points, dtype=float).reshape(-1)
    F = evaluate_free_energy(model, x)
    boltz = np.exp(-model.beta * F)
    boltz /= boltz.sum()
    np.savetxt(path, np.column_stack([x, F, model.gradient(x), boltz]), delimiter=",",
               header="x,F,dF,boltzmann", comments="", fmt="%.17g")
