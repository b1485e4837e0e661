"""Kramers-Moyal increment series, binning and weighted regression problems.

Linear increments ``(xi(t+s) - xi(t)) / s`` estimate the drift, quadratic
increments ``beta / 2 * dxi_i dxi_j / s`` the diffusion. Averaging them in
spatial bins and weighting each bin by its share of the samples gives a
small weighted least-squares problem over a dictionary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .basis import Dictionary, evaluate
from .trajectory import Trajectory

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class IncrementSeries:
    kind: str
    values: np.ndarray
    anchors: np.ndarray
    beta: float = 1.0
    periodic: bool = False
    components: tuple[int, ...] = (0,)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        anchors = np.asarray(self.anchors, dtype=float)
        if anchors.ndim == 1:
            anchors = anchors[:, None]
        if values.shape != (anchors.shape[0],):
            raise ValueError("values and anchors must have the same length")
        if not np.all(np.isfinite(values)):
            raise ValueError("increment series contains non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "anchors", anchors)

    def __len__(self) -> int:
        return self.values.shape[0]

    def scaled(self, factor: float, kind: str | None = None) -> "IncrementSeries":
        return replace(self, values=factor * self.values, kind=kind or self.kind)


def _as_list(trajs) -> list[Trajectory]:
    return [trajs] if isinstance(trajs, Trajectory) else list(trajs)


def _check(trajs: Sequence[Trajectory]) -> None:
    if not trajs:
        raise ValueError("no trajectories given")
    for t in trajs:
        if t.states.shape[0] < 2:
            raise ValueError("a trajectory needs at least two states for increments")
    if len({t.dt for t in trajs}) != 1:
        raise ValueError("trajectories have different time steps")


def linear_increments(trajs, i: int = 0) -> IncrementSeries:
    """``Y_l = (xi_i(X_{l+1}) - xi_i(X_l)) / s`` anchored at ``X_l``.

    Several trajectories are concatenated without crossing their
    boundaries. Periodic (angular) coordinates use wrapped differences.
    """
    trajs = _as_list(trajs)
    _check(trajs)
    dt = trajs[0].dt
    values = np.concatenate([t.increments(i) / dt for t in trajs])
    anchors = np.concatenate([t.states[:-1] for t in trajs])
    return IncrementSeries("linear", values, anchors, trajs[0].beta,
                           trajs[0].periodic, (i,))


def quadratic_increments(trajs, i: int = 0, j: int = 0, beta: float | None = None) -> IncrementSeries:
    """``Y_l = beta / 2 * dxi_i * dxi_j / s`` anchored at ``X_l``."""
    trajs = _as_list(trajs)
    _check(trajs)
    dt = trajs[0].dt
    beta = trajs[0].beta if beta is None else beta
    values = np.concatenate([0.5 * beta * t.increments(i) * t.increments(j) / dt for t in trajs])
    anchors = np.concatenate([t.states[:-1] for t in trajs])
    return IncrementSeries("quadratic", values, anchors, beta, trajs[0].periodic, (i, j))


@dataclass(frozen=True)
class BinnedData:
    """Per-bin averages of an increment series over uniform 1D bins."""

    edges: np.ndarray
    counts: np.ndarray
    means: np.ndarray
    target_kind: str = "linear"
    beta: float = 1.0
    periodic: bool = False

    @property
    def Q(self) -> int:
        return self.counts.shape[0]

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def with_means(self, means, target_kind: str | None = None) -> "BinnedData":
        means = np.asarray(means, dtype=float)
        if means.shape != self.means.shape:
            raise ValueError("means must have one entry per bin")
        return replace(self, means=means, target_kind=target_kind or self.target_kind)

    def to_json(self, dict_name: str = "") -> dict:
        occ = self.occupied
        return {
            "schema_version": SCHEMA_VERSION,
            "q": self.Q,
            "centers": self.centers[occ].tolist(),
            "weights": self.weights[occ].tolist(),
            "means": self.means[occ].tolist(),
            "counts": self.counts[occ].tolist(),
            "edges": self.edges.tolist(),
            "dict_name": dict_name,
            "target_kind": self.target_kind,
            "beta": self.beta,
            "periodic": self.periodic,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "BinnedData":
        edges = np.asarray(doc["edges"], dtype=float)
        q = int(doc["q"])
        counts = np.zeros(q, dtype=np.int64)
        means = np.zeros(q)
        width = (edges[-1] - edges[0]) / q
        idx = np.rint((np.asarray(doc["centers"]) - edges[0]) / width - 0.5).astype(np.int64)
        counts[idx] = doc["counts"]
        means[idx] = doc["means"]
        return cls(edges, counts, means, doc.get("target_kind", "linear"),
                   doc.get("beta", 1.0), doc.get("periodic", False))

    def write_csv(self, path) -> None:
        occ = self.occupied
        table = np.column_stack([self.centers[occ], self.weights[occ], self.means[occ],
                                 self.counts[occ]])
        np.savetxt(path, table, delimiter=",", header="center,weight,mean,count",
                   comments="", fmt="%.17g")


def bin_series(series: IncrementSeries, Q: int, range: tuple[float, float] | None = None) -> BinnedData:
    """Average ``series`` over ``Q`` uniform bins of its (1D) anchor coordinate.

    The default range is the data extent, or [-pi, pi] for angular data.
    Samples outside an explicit range are dropped.
    """
    if Q < 2:
        raise ValueError(f"need at least two bins, got Q={Q}")
    if series.anchors.shape[1] != 1:
        raise ValueError("binning is implemented for one-dimensional anchors only")
    x = series.anchors[:, 0]
    y = series.values
    if range is None:
        range = (-np.pi, np.pi) if series.periodic else (float(x.min()), float(x.max()))
    lo, hi = float(range[0]), float(range[1])
    if not hi > lo:
        raise ValueError(f"degenerate binning range [{lo}, {hi}]")
    keep = (x >= lo) & (x <= hi)
    x, y = x[keep], y[keep]
    idx = np.floor((x - lo) / (hi - lo) * Q).astype(np.int64)
    np.clip(idx, 0, Q - 1, out=idx)
    counts = np.bincount(idx, minlength=Q)
    sums = np.bincount(idx, weights=y, minlength=Q)
    if np.count_nonzero(counts) < 2:
        raise ValueError("degenerate binning: all samples fall into a single bin")
    means = np.zeros(Q)
    occ = counts > 0
    means[occ] = sums[occ] / counts[occ]
    edges = np.linspace(lo, hi, Q + 1)
    return BinnedData(edges, counts, means, series.kind, series.beta, series.periodic)


@dataclass(frozen=True)
class RegressionProblem:
    """Weighted least-squares problem ``min || s * (Y - X c) ||^2``.

    ``weights`` are the bin fractions ``w_i``. The row scale ``s`` is
    ``sqrt(w)`` for the default ``weighting="sqrt"`` (each bin contributes
    ``w_i * r_i^2``), ``w`` for ``weighting="w"`` and 1 for ``"none"``.
    """

    X: np.ndarray
    Y: np.ndarray
    weights: np.ndarray
    dictionary: Dictionary | None = None
    target_kind: str = "linear"
    centers: np.ndarray | None = None
    weighting: str = "sqrt"
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if X.ndim != 2 or Y.shape != (X.shape[0],) or w.shape != Y.shape:
            raise ValueError(f"inconsistent shapes X{X.shape} Y{Y.shape} w{w.shape}")
        if np.any(w <= 0):
            raise ValueError("row weights must be positive")
        if self.weighting not in ("w", "sqrt", "none"):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "weights", w)
        if not self.labels:
            labels = tuple(self.dictionary.labels()) if self.dictionary is not None else \
                tuple(f"f{k}" for k in range(X.shape[1]))
            object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def K(self) -> int:
        return self.X.shape[1]

    @property
    def dict_name(self) -> str:
        return self.dictionary.name if self.dictionary is not None else ""

    @property
    def row_scale(self) -> np.ndarray:
        if self.weighting == "w":
            return self.weights
        if self.weighting == "sqrt":
            return np.sqrt(self.weights)
        return np.ones_like(self.weights)

    def rows(self, idx) -> "RegressionProblem":
        idx = np.asarray(idx)
        return replace(self, X=self.X[idx], Y=self.Y[idx], weights=self.weights[idx],
                       centers=None if self.centers is None else self.centers[idx])

    def columns(self, idx) -> "RegressionProblem":
        idx = [int(i) for i in idx]
        d = self.dictionary.subset(idx) if self.dictionary is not None else None
        return replace(self, X=self.X[:, idx], dictionary=d,
                       labels=tuple(self.labels[i] for i in idx))

    def with_target(self, Y, target_kind: str | None = None) -> "RegressionProblem":
        return replace(self, Y=np.asarray(Y, dtype=float),
                       target_kind=target_kind or self.target_kind)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "q": self.n_rows,
            "centers": [] if self.centers is None else np.asarray(self.centers).tolist(),
            "weights": self.weights.tolist(),
            "means": self.Y.tolist(),
            "dict_name": self.dict_name,
            "target_kind": self.target_kind,
            "weighting": self.weighting,
            "labels": list(self.labels),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def assemble_problem(d: Dictionary, binned: BinnedData, weighting: str = "sqrt") -> RegressionProblem:
    """Design matrix from ``d`` at the occupied bin centers, targets the bin means."""
    occ = binned.occupied
    if not occ.any():
        raise ValueError("no occupied bins")
    centers = binned.centers[occ]
    X = evaluate(d, centers)
    if occ.sum() < d.K:
        import warnings
        warnings.warn(f"underdetermined problem: {int(occ.sum())} occupied bins for K={d.K}",
                      stacklevel=2)
    return RegressionProblem(X, binned.means[occ], binned.weights[occ], d,
                             binned.target_kind, centers, weighting)


def assemble_unbinned(d: Dictionary, series: IncrementSeries, weighting: str = "sqrt") -> RegressionProblem:
    """One regression row per increment, each with weight ``1/N``."""
    n = len(series)
    X = evaluate(d, series.anchors)
    w = np.full(n, 1.0 / n)
    return RegressionProblem(X, series.values, w, d, series.kind, series.anchors, weighting)


def relative_errors(binned: BinnedData, exact) -> np.ndarray:
    """Per-bin ``|(Y_i - g(x_i)) / g(x_i)|`` over occupied bins."""
    occ = binned.occupied
    ref = np.asarray(exact(binned.centers[occ]), dtype=float).reshape(-1)
    return np.abs((binned.means[occ] - ref) / ref)
