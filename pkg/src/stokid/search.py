"""Greedy evaluation of sub-dictionaries and the sampling-noise experiment.

Every subset of a reference dictionary is scored by the cross-validated
error of ordinary (non-sparse) weighted least squares on its columns. All
subsets of one size share the fold partitions, so per fold the fits reduce
to small solves against sub-blocks of the full Gram matrices, batched over
subsets.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Callable, Sequence

import numpy as np

from .basis import ANALYTIC_DW, Dictionary
from .kramers_moyal import BinnedData, RegressionProblem, assemble_problem, relative_errors
from .ssr import CvConfig, fit, fold_partition

# Relative eigenvalue floor of the column-normalized Gram matrix below which
# a subset counts as rank deficient.
RANK_TOL = 1e-12
_BATCH = 4096


@dataclass(frozen=True)
class GreedyRecord:
    subset: tuple[int, ...]
    delta: float
    contains_analytic: bool
    rank_deficient: bool = False

    @property
    def n(self) -> int:
        return len(self.subset)


@dataclass
class GreedyResult:
    records: list[GreedyRecord]
    labels: tuple[str, ...]
    analytic: tuple[int, ...]
    config: CvConfig
    samples: dict[int, int] = field(default_factory=dict)

    def sizes(self) -> list[int]:
        return sorted({r.n for r in self.records})

    def best(self, n: int) -> GreedyRecord | None:
        """Lowest-score full-rank record of size ``n`` (first on ties)."""
        best = None
        for r in self.records:
            if r.n == n and not r.rank_deficient and (best is None or r.delta < best.delta):
                best = r
        return best

    def minimum_curve(self) -> dict[int, float]:
        out = {}
        for n in self.sizes():
            b = self.best(n)
            if b is not None:
                out[n] = b.delta
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "delta", "contains_analytic", "rank_deficient", "subset"])
            for r in self.records:
                w.writerow([r.n, repr(r.delta), int(r.contains_analytic), int(r.rank_deficient),
                            " ".join(map(str, r.subset))])

    def write_minimum_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "min_delta", "contains_analytic", "subset"])
            for n in self.sizes():
                b = self.best(n)
                if b is None:
                    continue
                w.writerow([n, repr(b.delta), int(b.contains_analytic),
                            " ".join(self.labels[i] for i in b.subset)])


def default_samples(M: int, n: int, cap: int = 2000, exhaustive: Sequence[int] = (2, 3, 4)) -> int:
    """``C(M, n)`` for the small sizes in ``exhaustive``, else ``min(C(M, n), cap)``."""
    total = comb(M, n)
    return total if n in exhaustive else min(total, cap)


def draw_subsets(M: int, n: int, m: int, seed: int) -> np.ndarray:
    """``m`` distinct sorted ``n``-subsets of ``range(M)``; all of them if ``m >= C(M, n)``.

    The draw depends only on ``(seed, n)``.
    """
    total = comb(M, n)
    if m >= total:
        return np.array(list(combinations(range(M), n)), dtype=np.int64).reshape(total, n)
    rng = np.random.default_rng([seed, n])
    if 2 * m > total:
        every = np.array(list(combinations(range(M), n)), dtype=np.int64)
        pick = np.sort(rng.choice(total, m, replace=False))
        return every[pick]
    seen, out = set(), []
    while len(out) < m:
        s = tuple(sorted(rng.choice(M, n, replace=False).tolist()))
        if s not in seen:
            seen.add(s)
            out.append(s)
    return np.array(out, dtype=np.int64)


def _weighted_grams(problem: RegressionProblem, rows: np.ndarray):
    s2 = problem.row_scale[rows] ** 2
    X = problem.X[rows]
    y = problem.Y[rows]
    return X.T @ (s2[:, None] * X), X.T @ (s2 * y), float(np.sum(s2 * y * y))


def _subset_scores(problem: RegressionProblem, subsets: np.ndarray, config: CvConfig):
    """CV scores and rank flags of plain least squares on each subset."""
    B, n = subsets.shape
    per_rep = np.zeros((config.reps, B))
    flagged = np.zeros(B, dtype=bool)
    all_rows = np.arange(problem.n_rows)
    ii = subsets[:, :, None]
    jj = subsets[:, None, :]
    for rep in range(config.reps):
        for test in fold_partition(problem.n_rows, config.k, config.seed, rep):
            train = np.setdiff1d(all_rows, test, assume_unique=True)
            G, g, _ = _weighted_grams(problem, train)
            H, h, yy = _weighted_grams(problem, test)
            Gs = G[ii, jj]
            gs = g[subsets]
            scale = np.sqrt(np.einsum("bii->bi", Gs))
            scale[scale == 0.0] = 1.0
            Gn = Gs / (scale[:, :, None] * scale[:, None, :])
            eig = np.linalg.eigvalsh(Gn)
            bad = eig[:, 0] <= RANK_TOL * eig[:, -1]
            flagged |= bad
            Gn[bad] += np.eye(n)
            c = np.linalg.solve(Gn, (gs / scale)[:, :, None])[:, :, 0] / scale
            Hs = H[ii, jj]
            err = yy - 2.0 * np.einsum("bi,bi->b", c, h[subsets]) + np.einsum("bi,bij,bj->b", c, Hs, c)
            per_rep[rep] += np.maximum(err, 0.0)
    per_rep /= config.k
    delta = np.median(per_rep, axis=0) if config.aggregate == "median" else per_rep.mean(axis=0)
    if config.score == "rmse":
        delta = np.sqrt(delta)
    return delta, flagged


def subset_score(problem: RegressionProblem, subset, config: CvConfig = CvConfig()) -> float:
    """CV score of plain least squares restricted to the columns in ``subset``."""
    delta, _ = _subset_scores(problem, np.asarray([sorted(subset)], dtype=np.int64), config)
    return float(delta[0])


def greedy_search(omega: Dictionary, binned: BinnedData, sizes=None,
                  samples: int | Callable[[int, int], int] | None = None,
                  config: CvConfig = CvConfig(), analytic: Sequence[str] = ANALYTIC_DW,
                  weighting: str = "sqrt", problem: RegressionProblem | None = None) -> GreedyResult:
    """Score sub-dictionaries of ``omega`` of every size in ``sizes``.

    ``samples`` is either a fixed per-size sample count or a callable
    ``(M, n) -> m_n``; the default is :func:`default_samples`. Sizes with
    ``m_n >= C(M, n)`` are enumerated exhaustively.
    """
    if problem is None:
        problem = assemble_problem(omega, binned, weighting)
    M = problem.K
    sizes = range(1, M + 1) if sizes is None else sizes
    if samples is None:
        samples = default_samples
    wanted = set()
    for name in analytic:
        try:
            wanted.add(omega.index(name))
        except (KeyError, ValueError):
            pass
    wanted_t = tuple(sorted(wanted))
    records, counts = [], {}
    for n in sizes:
        if not 1 <= n <= M:
            raise ValueError(f"subset size {n} outside [1, {M}]")
        m = samples(M, n) if callable(samples) else int(samples)
        subsets = draw_subsets(M, n, m, config.seed)
        counts[n] = len(subsets)
        for lo in range(0, len(subsets), _BATCH):
            chunk = subsets[lo:lo + _BATCH]
            delta, flags = _subset_scores(problem, chunk, config)
            for s, dl, fl in zip(chunk, delta, flags):
                st = tuple(int(i) for i in s)
                records.append(GreedyRecord(st, float(dl), bool(wanted) and wanted.issubset(st),
                                            bool(fl)))
    return GreedyResult(records, problem.labels, wanted_t, config, counts)


def reduced_reference(omega: Dictionary, M: int = 30, seed: int = 0,
                      analytic: Sequence[str] = ANALYTIC_DW) -> Dictionary:
    """The analytic terms plus ``M - len(analytic)`` random other entries of ``omega``."""
    keep = [omega.index(a) for a in analytic]
    rest = np.array([i for i in range(omega.K) if i not in keep])
    if M < len(keep) or M - len(keep) > rest.size:
        raise ValueError(f"cannot build a reduced reference of size {M} from {omega.K} entries")
    rng = np.random.default_rng([seed, M])
    extra = rng.choice(rest, M - len(keep), replace=False)
    return omega.subset(sorted(keep + extra.tolist()), name=f"{omega.name}_{M}")


@dataclass
class NoiseReport:
    f_values: tuple[float, ...]
    success: dict[float, float]
    n_dicts: int
    seed: int
    median_error: float
    selections: dict[float, list[list[str]]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "f_values": list(self.f_values),
            "success_percent": [self.success[f] for f in self.f_values],
            "n_dicts": self.n_dicts,
            "seed": self.seed,
            "median_relative_error": self.median_error,
            "selections": {repr(f): self.selections.get(f, []) for f in self.f_values},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["f", "zeta", "success_percent", "n_dicts"])
            for f in self.f_values:
                w.writerow([repr(f), repr(f * self.median_error), repr(self.success[f]), self.n_dicts])


def random_dictionary(omega: Dictionary, size: int, rng: np.random.Generator,
                      analytic: Sequence[str] = ANALYTIC_DW) -> Dictionary:
    keep = [omega.index(a) for a in analytic]
    rest = np.array([i for i in range(omega.K) if i not in keep])
    extra = rng.choice(rest, size - len(keep), replace=False)
    return omega.subset(sorted(keep + extra.tolist()), name=f"random{size}")


def noise_experiment(binned: BinnedData, exact: Callable, omega: Dictionary, n_dicts: int = 20,
                     f_values: Sequence[float] = (1.0, 1e-3, 1e-6, 1e-9, 0.0), dict_size: int = 50,
                     config: CvConfig = CvConfig(), seed: int = 0,
                     analytic: Sequence[str] = ANALYTIC_DW, weighting: str = "sqrt") -> NoiseReport:
    """Success rate of SSR+CV at recovering the analytic terms under relative noise.

    ``binned`` supplies the bin centers, weights and measured means; ``exact``
    is the reference function (here U'). For each factor ``f`` the bin means
    are replaced by ``exact(x) * (1 + eta)`` with ``eta ~ N(0, f * median(eps))``
    where ``eps`` are the measured relative errors. A dictionary counts as a
    success when the selected active set is exactly ``analytic``.
    """
    eps = relative_errors(binned, exact)
    zeta0 = float(np.median(eps))
    occ = binned.occupied
    ref = np.asarray(exact(binned.centers[occ]), dtype=float).reshape(-1)
    target = set(analytic)
    success, picks = {}, {}
    dicts = [random_dictionary(omega, dict_size, np.random.default_rng([seed, j]), analytic)
             for j in range(n_dicts)]
    for fi, f in enumerate(f_values):
        hits, chosen = 0, []
        for j, d in enumerate(dicts):
            eta = np.random.default_rng([seed, j, fi + 1]).normal(0.0, 1.0, ref.shape[0])
            means = np.zeros(binned.Q)
            means[occ] = ref * (1.0 + f * zeta0 * eta)
            problem = assemble_problem(d, binned.with_means(means), weighting)
            result = fit(problem, config)
            labels = result.active_labels()
            chosen.append(labels)
            hits += set(labels) == target
        success[f] = 100.0 * hits / n_dicts
        picks[f] = chosen
    return NoiseReport(tuple(f_values), success, n_dicts, seed, zeta0, picks)
