"""Markov state models of 1D trajectories: implied timescales and stationary mass."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .trajectory import Trajectory


def discretize(traj_or_values, n_states: int, range: tuple[float, float] | None = None) -> np.ndarray:
    """Uniform-bin state labels in ``[0, n_states)``.

    The default range is [-pi, pi] for angular trajectories and the data
    extent otherwise. Values outside the range are clipped to the end bins.
    """
    if n_states < 1:
        raise ValueError(f"need at least one state, got {n_states}")
    if isinstance(traj_or_values, Trajectory):
        if traj_or_values.d != 1:
            raise ValueError("discretization needs a one-dimensional trajectory")
        x = traj_or_values.states[:, 0]
        periodic = traj_or_values.periodic
    else:
        x = np.asarray(traj_or_values, dtype=float).reshape(-1)
        periodic = False
    if range is None:
        range = (-np.pi, np.pi) if periodic else (float(x.min()), float(x.max()))
    lo, hi = range
    if hi <= lo:
        return np.zeros(x.shape[0], dtype=np.int64)
    idx = np.floor((x - lo) / (hi - lo) * n_states).astype(np.int64)
    return np.clip(idx, 0, n_states - 1)


@dataclass(frozen=True)
class MsmModel:
    lag: int
    dt: float
    counts: np.ndarray
    transition: np.ndarray
    eigenvalues: np.ndarray
    stationary: np.ndarray
    states: np.ndarray

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def lag_time(self) -> float:
        return self.lag * self.dt


def count_matrix(labels, lag: int, n_states: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if lag < 1:
        raise ValueError(f"lag must be >= 1, got {lag}")
    if labels.shape[0] <= lag:
        raise ValueError(f"trajectory of {labels.shape[0]} states is too short for lag {lag}")
    n = int(labels.max()) + 1 if n_states is None else n_states
    flat = labels[:-lag] * n + labels[lag:]
    return np.bincount(flat, minlength=n * n).reshape(n, n)


def estimate(labels, lag: int, dt: float = 1.0, n_states: int | None = None) -> MsmModel:
    """Reversible MSM from symmetrized sliding-window counts.

    States never visited are dropped; ``model.states`` maps rows back to
    labels. The transition matrix is ``T = D^-1 S`` with ``S = (C + C^T)/2``
    and ``D`` its row sums, so it has a real spectrum and stationary
    distribution ``diag(D) / sum(D)``.
    """
    C = count_matrix(labels, lag, n_states)
    S = 0.5 * (C + C.T)
    keep = np.flatnonzero(S.sum(axis=1) > 0)
    S = S[np.ix_(keep, keep)]
    n_comp, comp = connected_components(S > 0, directed=False)
    if n_comp > 1:
        groups = [keep[comp == c].tolist() for c in range(n_comp)]
        raise ValueError(f"disconnected state space with components {groups}")
    d = S.sum(axis=1)
    T = S / d[:, None]
    root = np.sqrt(d)
    lam = np.linalg.eigvalsh(S / root[:, None] / root[None, :])[::-1]
    return MsmModel(lag, dt, C, T, lam, d / d.sum(), keep)


def implied_timescales(model: MsmModel, m: int) -> np.ndarray:
    """``t_i = -tau / ln(lambda_{i+1})`` for i = 1..m; NaN where undefined."""
    lam = model.eigenvalues[1:m + 1]
    out = np.full(m, np.nan)
    ok = (lam > 0) & (lam < 1)
    out[: lam.shape[0]][ok] = -model.lag_time / np.log(lam[ok])
    return out


def timescale_table(labels, lags: Sequence[int], m: int, dt: float = 1.0,
                    n_states: int | None = None) -> dict[int, np.ndarray]:
    return {lag: implied_timescales(estimate(labels, lag, dt, n_states), m) for lag in lags}


def histogram(labels, n_states: int) -> np.ndarray:
    h = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_states).astype(float)
    return h / h.sum()


def compare_stationary(hist_a, hist_b) -> tuple[np.ndarray, float]:
    """Per-bin absolute differences of two normalized histograms and their maximum."""
    a = np.asarray(hist_a, dtype=float)
    b = np.asarray(hist_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"binning mismatch: {a.shape} vs {b.shape}")
    diff = np.abs(a / a.sum() - b / b.sum())
    return diff, float(diff.max())


def write_timescales_csv(path, tables: dict[str, dict[int, np.ndarray]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "lag", "index", "timescale"])
        for source, table in tables.items():
            for lag, ts in table.items():
                for i, t in enumerate(ts, start=1):
                    w.writerow([source, lag, i, "" if np.isnan(t) else repr(float(t))])


def write_stationary_csv(path, centers, hist_a, hist_b) -> None:
    np.savetxt(path, np.column_stack([centers, hist_a, hist_b]), delimiter=",",
               header="bin_center,prob_a,prob_b", comments="", fmt="%.17g")
