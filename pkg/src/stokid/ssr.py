"""Stepwise sparse regression with k-fold cross-validated model selection.

The regressor repeatedly fits weighted least squares on the active columns
and drops the active coefficient of smallest magnitude, recording one
solution per sparsity level. Cross validation scores every level and the
selected solution size is the one after which the score jumps.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .basis import Expansion, parse_dictionary, serialize
from .kramers_moyal import SCHEMA_VERSION, RegressionProblem

__all__ = [
    "least_squares",
    "ssr_path",
    "SsrPath",
    "CvConfig",
    "CvReport",
    "cross_validate",
    "cv_score",
    "select_model",
    "fit",
    "FitResult",
    "fold_partition",
]


def _solve(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least-squares solution of ``A x = b`` and whether A had full column rank."""
    n = A.shape[1]
    norms = np.sqrt(np.einsum("ij,ij->j", A, A))
    norms[norms == 0.0] = 1.0
    As = A / norms
    if A.shape[0] >= n:
        Q, R, piv = scipy.linalg.qr(As, mode="economic", pivoting=True, check_finite=False)
        diag = np.abs(np.diag(R))
        tol = max(A.shape) * np.finfo(float).eps * (diag[0] if n else 0.0)
        if n == 0 or diag[-1] > tol:
            z = scipy.linalg.solve_triangular(R, Q.T @ b, check_finite=False)
            x = np.empty(n)
            x[piv] = z
            return x / norms, True
    x, *_ = np.linalg.lstsq(As, b, rcond=None)
    return x / norms, False


def least_squares(problem: RegressionProblem, active=None, return_info: bool = False):
    """Weighted least squares restricted to the ``active`` columns.

    Minimizes ``|| s * (Y - X[:, active] c) ||^2`` with ``s = problem.row_scale``
    by a column-pivoted QR factorization. Inactive coefficients are exactly
    zero. A rank-deficient design falls back to the minimum-norm solution;
    ``return_info=True`` also returns ``{"rank_deficient": bool}``.
    """
    K = problem.K
    active = np.arange(K) if active is None else np.asarray(sorted(int(i) for i in active))
    if active.size == 0:
        raise ValueError("active set is empty")
    s = problem.row_scale
    coef = np.zeros(K)
    sol, full = _solve(problem.X[:, active] * s[:, None], problem.Y * s)
    coef[active] = sol
    if return_info:
        return coef, {"rank_deficient": not full}
    return coef


def normal_equations(problem: RegressionProblem, active=None) -> np.ndarray:
    """Reference solution ``(X^T S^2 X)^-1 X^T S^2 Y`` by explicit inversion."""
    K = problem.K
    active = np.arange(K) if active is None else np.asarray(sorted(active))
    X = problem.X[:, active]
    s2 = problem.row_scale ** 2
    gram = X.T @ (s2[:, None] * X)
    coef = np.zeros(K)
    coef[active] = np.linalg.inv(gram) @ (X.T @ (s2 * problem.Y))
    return coef


@dataclass(frozen=True)
class SsrPath:
    """Solutions along the pruning path.

    ``coefficients[q]`` is the solution after ``q`` removals, i.e. with
    ``K - q`` active terms; ``active[q]`` its sorted active indices.
    """

    coefficients: np.ndarray
    active: tuple[tuple[int, ...], ...]
    residuals: np.ndarray
    rank_deficient: tuple[bool, ...] = ()

    @property
    def K(self) -> int:
        return self.coefficients.shape[1]

    def at_size(self, n: int) -> np.ndarray:
        return self.coefficients[self.K - n]

    def active_at_size(self, n: int) -> tuple[int, ...]:
        return self.active[self.K - n]

    def progress_matrix(self) -> np.ndarray:
        """0/1 matrix ``[k, n - 1]``: term k alive in the size-n solution."""
        out = np.zeros((self.K, self.K), dtype=np.int8)
        for q, act in enumerate(self.active):
            out[list(act), self.K - q - 1] = 1
        return out


def ssr_path(problem: RegressionProblem) -> SsrPath:
    """Run the stepwise sparse regressor down to a single surviving term.

    Each step zeroes the active coefficient with the smallest magnitude
    (lowest index on ties) and refits on the remaining columns.
    """
    K = problem.K
    if K < 1:
        raise ValueError("problem has no columns")
    s = problem.row_scale
    A_full = problem.X * s[:, None]
    b = problem.Y * s
    active = list(range(K))
    coefs = np.zeros((K, K))
    actives, residuals, flags = [], np.zeros(K), []
    for q in range(K):
        sol, full = _solve(A_full[:, active], b)
        coefs[q, active] = sol
        actives.append(tuple(active))
        residuals[q] = np.linalg.norm(b - A_full[:, active] @ sol)
        flags.append(not full)
        if len(active) == 1:
            break
        del active[int(np.argmin(np.abs(sol)))]
    return SsrPath(coefs, tuple(actives), residuals, tuple(flags))


@dataclass(frozen=True)
class CvConfig:
    """Cross-validation settings.

    Each repetition scores every solution size by the fold-averaged weighted
    squared held-out error. ``aggregate`` combines repetitions by their
    ``"median"`` (default) or ``"mean"``; ``score="rmse"`` reports the root
    of the aggregate. ``tau`` is the smallest score ratio that counts as a
    transition in :func:`select_model`.
    """

    k: int = 5
    reps: int = 50
    seed: int = 0
    score: str = "mse"
    aggregate: str = "median"
    tau: float = 2.0

    def __post_init__(self):
        if self.score not in ("mse", "rmse"):
            raise ValueError(f"unknown score {self.score!r}")
        if self.aggregate not in ("mean", "median"):
            raise ValueError(f"unknown aggregate {self.aggregate!r}")
        if self.k < 2:
            raise ValueError(f"need k >= 2 folds, got {self.k}")
        if self.reps < 1:
            raise ValueError(f"need at least one repetition, got {self.reps}")
        if not self.tau >= 1.0:
            raise ValueError(f"transition threshold must be >= 1, got {self.tau}")


def fold_partition(n_rows: int, k: int, seed: int, rep: int) -> list[np.ndarray]:
    """Random split of ``range(n_rows)`` into ``k`` near-equal folds."""
    if n_rows < k:
        raise ValueError(f"cannot split {n_rows} rows into {k} folds")
    rng = np.random.default_rng([seed, rep])
    return np.array_split(rng.permutation(n_rows), k)


@dataclass(frozen=True)
class CvReport:
    """``delta[n - 1]`` is the CV score of the size-n solution."""

    delta: np.ndarray
    k: int
    reps: int
    seed: int
    n_selected: int = 0
    score: str = "mse"
    per_rep: np.ndarray | None = field(default=None, repr=False)
    aggregate: str = "median"
    tau: float = 2.0

    @property
    def K(self) -> int:
        return self.delta.shape[0]

    @property
    def ratios(self) -> np.ndarray:
        """``ratios[n - 2] = delta[n-1] / delta[n]`` for n = 2..K."""
        num, den = self.delta[:-1], self.delta[1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = num / den
        r[(num == 0) & (den == 0)] = 1.0
        return r

    def at_size(self, n: int) -> float:
        return float(self.delta[n - 1])


def _fold_errors(problem: RegressionProblem, folds: list[np.ndarray]) -> np.ndarray:
    """Sum over folds of the weighted held-out squared error per solution size."""
    K = problem.K
    total = np.zeros(K)
    s = problem.row_scale
    all_rows = np.arange(problem.n_rows)
    for test in folds:
        train = np.setdiff1d(all_rows, test, assume_unique=True)
        path = ssr_path(problem.rows(train))
        resid = (problem.Y[test][:, None] - problem.X[test] @ path.coefficients.T) * s[test][:, None]
        err_by_q = np.einsum("ij,ij->j", resid, resid)
        # q -> n = K - q
        total += err_by_q[::-1]
    return total


def cross_validate(problem: RegressionProblem, config: CvConfig = CvConfig()) -> CvReport:
    """CV scores for every solution size of the SSR path.

    For each repetition the rows are split into ``k`` folds; SSR is trained
    on ``k - 1`` folds and the weighted squared prediction error summed on
    the held-out one, then averaged over folds. Repetitions are combined by
    ``config.aggregate``. The median guards against the rare partition whose
    training rows miss the support of a localized basis function, which
    would otherwise dominate the mean.
    """
    n_train = problem.n_rows - -(-problem.n_rows // config.k)
    if n_train < problem.K:
        raise ValueError(f"training folds hold {n_train} rows, fewer than K={problem.K} coefficients")
    per_rep = np.zeros((config.reps, problem.K))
    for rep in range(config.reps):
        folds = fold_partition(problem.n_rows, config.k, config.seed, rep)
        per_rep[rep] = _fold_errors(problem, folds) / config.k
    if config.aggregate == "median":
        delta = np.median(per_rep, axis=0)
    else:
        delta = per_rep.mean(axis=0)
    if config.score == "rmse":
        delta = np.sqrt(delta)
    report = CvReport(delta, config.k, config.reps, config.seed, 0, config.score, per_rep,
                      config.aggregate, config.tau)
    return replace(report, n_selected=select_model(report))


def cv_score(problem: RegressionProblem, q: int, k: int = 5, reps: int = 50, seed: int = 0,
             score: str = "mse", aggregate: str = "median") -> float:
    """CV score of the ``q``-sparse SSR solution."""
    if not 0 <= q < problem.K:
        raise ValueError(f"sparsity q must be in [0, {problem.K - 1}], got {q}")
    report = cross_validate(problem, CvConfig(k, reps, seed, score, aggregate))
    return report.at_size(problem.K - q)


def select_model(report: CvReport, tau: float | None = None) -> int:
    """Optimal solution size from a CV curve.

    Only sizes up to the score minimum ``m`` are candidates. Among them the
    size ``n`` maximizing ``delta[n-1] / delta[n]`` (larger n on ties) is
    returned if that ratio reaches ``tau``; otherwise no transition exists
    and the one-term solution is already as good as any, so 1 is returned.
    """
    tau = report.tau if tau is None else tau
    delta = report.delta
    m = int(np.argmin(delta))
    if m == 0:
        return 1
    r = report.ratios[:m]
    if np.max(r) < tau:
        return 1
    best = np.flatnonzero(r == np.max(r))
    return int(best[-1]) + 2


# increment kinds as reported in fit documents
_TARGET_NAMES = {"linear": "drift", "quadratic": "diffusion"}


@dataclass(frozen=True)
class FitResult:
    problem: RegressionProblem
    path: SsrPath
    report: CvReport
    n_selected: int
    coefficients: np.ndarray = field(repr=False)

    @property
    def active(self) -> tuple[int, ...]:
        return self.path.active_at_size(self.n_selected)

    @property
    def delta(self) -> float:
        return self.report.at_size(self.n_selected)

    def active_labels(self) -> list[str]:
        return [self.problem.labels[i] for i in self.active]

    def expansion(self):
        if self.problem.dictionary is None:
            raise ValueError("fit has no dictionary attached")
        return Expansion(self.problem.dictionary, self.coefficients)

    def to_json(self) -> dict:
        d = self.problem.dictionary
        return {
            "schema_version": SCHEMA_VERSION,
            "dictionary": self.problem.dict_name,
            "dictionary_source": serialize(d) if d is not None else None,
            "target": _TARGET_NAMES.get(self.problem.target_kind, self.problem.target_kind),
            "n_selected": self.n_selected,
            "coefficients": [
                {"index": int(i), "name": self.problem.labels[i], "value": float(self.coefficients[i])}
                for i in self.active
            ],
            "delta": self.report.delta.tolist(),
            "ratios": self.report.ratios.tolist(),
            "seed": self.report.seed,
            "k": self.report.k,
            "reps": self.report.reps,
            "score": self.report.score,
            "aggregate": self.report.aggregate,
            "tau": self.report.tau,
            "weighting": self.problem.weighting,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    def write_delta_csv(self, path) -> None:
        ratios = self.report.ratios
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "delta", "ratio", "selected"])
            for n in range(1, self.report.K + 1):
                ratio = "" if n == 1 else repr(float(ratios[n - 2]))
                w.writerow([n, repr(float(self.report.delta[n - 1])), ratio,
                            int(n == self.n_selected)])

    def write_progress_csv(self, path) -> None:
        mat = self.path.progress_matrix()
        K = self.path.K
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "name"] + [f"n{n}" for n in range(1, K + 1)])
            for k in range(K):
                w.writerow([k, self.problem.labels[k]] + mat[k].tolist())

    def write_curve_csv(self, path) -> None:
        """Fitted model at the bin centers next to the binned targets."""
        fitted = self.problem.X @ self.coefficients
        centers = self.problem.centers
        if centers is None:
            centers = np.arange(self.problem.n_rows)
        centers = np.asarray(centers).reshape(self.problem.n_rows, -1)[:, 0]
        table = np.column_stack([centers, self.problem.Y, fitted, self.problem.weights])
        np.savetxt(path, table, delimiter=",", header="center,binned,fitted,weight",
                   comments="", fmt="%.17g")


def fit(problem: RegressionProblem, config: CvConfig = CvConfig()) -> FitResult:
    """SSR path on all rows, CV over all sizes, and the selected solution."""
    path = ssr_path(problem)
    report = cross_validate(problem, config)
    n = report.n_selected
    return FitResult(problem, path, report, n, path.at_size(n).copy())


def load_fit(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if "schema_version" not in doc:
        raise ValueError(f"{path}: missing schema_version")
    return doc


def expansion_from_json(doc: dict):
    """Rebuild the fitted :class:`~stokid.basis.Expansion` from a fit document."""
    d = parse_dictionary(doc["dictionary_source"], doc.get("dictionary", "fit"))
    c = np.zeros(d.K)
    for entry in doc["coefficients"]:
        c[entry["index"]] = entry["value"]
    return Expansion(d, c)
