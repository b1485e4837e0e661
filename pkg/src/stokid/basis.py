"""Dictionaries of basis functions.

A dictionary is an ordered list of terms. Each term is a product of scalar
factors, each factor acting on one coordinate of the input point. All the
reference dictionaries shipped with the package are one-dimensional, so
their terms carry a single factor on coordinate 0.

The text format is a small line-oriented language::

    # comment
    const; poly 1; poly 2
    sin 7
    gauss 50 3
    poly 1 @0 * cos 2 @1

Entries are separated by newlines or semicolons. ``@i`` selects the
coordinate (default 0) and ``*`` multiplies factors into one term.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import chain

import numpy as np

__all__ = [
    "KINDS",
    "BasisFunction",
    "Term",
    "Dictionary",
    "DictionaryError",
    "parse_dictionary",
    "serialize",
    "evaluate",
    "evaluate_gradient",
    "builtin",
    "BUILTIN_NAMES",
    "ANALYTIC_DW",
    "Expansion",
]

# kind -> (required params, optional params with defaults)
KINDS: dict[str, tuple[int, tuple[float, ...]]] = {
    "const": (0, ()),
    "poly": (1, ()),
    "sin": (1, ()),
    "cos": (1, ()),
    "tanh": (1, (0.0,)),
    "sech2": (1, (0.0,)),
    "gauss": (2, ()),
    "tanh2shift": (1, ()),
}

# integer codes used by the compiled simulation kernels
KIND_CODES = {name: i for i, name in enumerate(KINDS)}


class DictionaryError(ValueError):
    """Raised for malformed dictionary sources or invalid entries."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


def _canonical(value: float) -> float:
    return float(f"{value:.12g}")


def _fmt(value: float) -> str:
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


@dataclass(frozen=True)
class BasisFunction:
    """Scalar basis function of one coordinate.

    ``params`` always holds the full parameter tuple, optional ones filled
    with their defaults, so that equal functions compare equal.
    """

    kind: str
    params: tuple[float, ...] = ()
    coord: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DictionaryError(f"unknown kind {self.kind!r}")
        required, optional = KINDS[self.kind]
        params = tuple(float(p) for p in self.params)
        if len(params) < required:
            raise DictionaryError(
                f"{self.kind} needs {required} parameter(s), got {len(params)}"
            )
        if len(params) > required + len(optional):
            raise DictionaryError(f"too many parameters for {self.kind}: {params}")
        params = params + optional[len(params) - required:]
        if not all(np.isfinite(params)):
            raise DictionaryError(f"non-finite parameter in {self.kind} {params}")
        if self.kind == "poly" and (params[0] < 0 or params[0] != int(params[0])):
            raise DictionaryError(f"poly exponent must be a non-negative integer, got {params[0]}")
        if self.coord < 0:
            raise DictionaryError(f"negative coordinate index {self.coord}")
        object.__setattr__(self, "params", params)

    def value(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        k = self.kind
        if k == "const":
            return np.ones_like(x)
        if k == "poly":
            return x ** int(p[0])
        if k == "sin":
            return np.sin(p[0] * x)
        if k == "cos":
            return np.cos(p[0] * x)
        if k == "tanh":
            return np.tanh(p[0] * x - p[1])
        if k == "sech2":
            return -p[0] * np.tanh(p[0] * x - p[1]) ** 2 + p[0]
        if k == "gauss":
            return np.exp(-p[0] * (x - p[1]) ** 2)
        # tanh2shift
        return np.tanh(x - p[0]) ** 2 + 1.0

    def derivative(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        k = self.kind
        if k == "const":
            return np.zeros_like(x)
        if k == "poly":
            n = int(p[0])
            return np.zeros_like(x) if n == 0 else n * x ** (n - 1)
        if k == "sin":
            return p[0] * np.cos(p[0] * x)
        if k == "cos":
            return -p[0] * np.sin(p[0] * x)
        if k == "tanh":
            t = np.tanh(p[0] * x - p[1])
            return p[0] * (1.0 - t * t)
        if k == "sech2":
            t = np.tanh(p[0] * x - p[1])
            return -2.0 * p[0] ** 2 * t * (1.0 - t * t)
        if k == "gauss":
            return -2.0 * p[0] * (x - p[1]) * np.exp(-p[0] * (x - p[1]) ** 2)
        t = np.tanh(x - p[0])
        return 2.0 * t * (1.0 - t * t)

    def canonical(self) -> tuple:
        return (self.kind, tuple(_canonical(v) for v in self.params), self.coord)

    def to_dsl(self) -> str:
        required, optional = KINDS[self.kind]
        params = list(self.params)
        # drop trailing optional params left at their default
        while len(params) > required and params[-1] == optional[len(params) - required - 1]:
            params.pop()
        text = " ".join([self.kind, *(_fmt(v) for v in params)])
        if self.coord:
            text += f" @{self.coord}"
        return text


@dataclass(frozen=True)
class Term:
    """Product of scalar factors; one column of the design matrix."""

    factors: tuple[BasisFunction, ...]

    def __post_init__(self):
        if not self.factors:
            raise DictionaryError("a term needs at least one factor")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def max_coord(self) -> int:
        return max(f.coord for f in self.factors)

    def canonical(self) -> tuple:
        return tuple(sorted(f.canonical() for f in self.factors))

    def to_dsl(self) -> str:
        return " * ".join(f.to_dsl() for f in self.factors)

    def __str__(self) -> str:
        return self.to_dsl()


@dataclass(frozen=True)
class Dictionary:
    """Ordered collection of terms with a label."""

    name: str
    functions: tuple[Term, ...]
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        functions = tuple(f if isinstance(f, Term) else Term((f,)) for f in self.functions)
        object.__setattr__(self, "functions", functions)
        seen: dict[tuple, int] = {}
        for i, term in enumerate(functions):
            key = term.canonical()
            if key in seen:
                raise DictionaryError(
                    f"duplicate entry {term.to_dsl()!r} at positions {seen[key]} and {i}"
                )
            seen[key] = i
        object.__setattr__(self, "_index", seen)

    @property
    def K(self) -> int:
        return len(self.functions)

    @property
    def dim(self) -> int:
        """Smallest point dimension the dictionary can be evaluated on."""
        return 1 + max((t.max_coord for t in self.functions), default=0)

    def labels(self) -> list[str]:
        return [t.to_dsl() for t in self.functions]

    def index(self, term: Term | BasisFunction | str) -> int:
        """Position of ``term`` (a Term, BasisFunction or one DSL entry)."""
        if isinstance(term, str):
            parsed = parse_dictionary(term)
            if parsed.K != 1:
                raise DictionaryError(f"expected a single entry, got {parsed.K}")
            term = parsed.functions[0]
        if isinstance(term, BasisFunction):
            term = Term((term,))
        try:
            return self._index[term.canonical()]
        except KeyError:
            raise KeyError(f"{term.to_dsl()!r} not in dictionary {self.name!r}") from None

    def subset(self, indices, name: str | None = None) -> "Dictionary":
        indices = [int(i) for i in indices]
        return Dictionary(name or f"{self.name}[{len(indices)}]",
                          tuple(self.functions[i] for i in indices))

    def __len__(self) -> int:
        return self.K

    def __add__(self, other: "Dictionary") -> "Dictionary":
        return Dictionary(f"{self.name}+{other.name}", self.functions + other.functions)


_NUMBER = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _parse_factor(text: str, line: int, column: int) -> BasisFunction:
    tokens = text.split()
    if not tokens:
        raise DictionaryError("empty factor", line, column)
    kind = tokens[0]
    if kind not in KINDS:
        raise DictionaryError(f"unknown kind {kind!r}", line, column)
    coord = 0
    args = tokens[1:]
    if args and args[-1].startswith("@"):
        spec = args.pop()[1:]
        if not spec.isdigit():
            raise DictionaryError(f"bad coordinate selector '@{spec}'", line, column)
        coord = int(spec)
    params = []
    for tok in args:
        if not _NUMBER.match(tok):
            raise DictionaryError(f"expected a number, got {tok!r}", line,
                                  column + text.index(tok))
        params.append(float(tok))
    required, optional = KINDS[kind]
    if len(params) < required:
        raise DictionaryError(f"missing parameter for {kind!r} (needs {required})", line, column)
    if len(params) > required + len(optional):
        raise DictionaryError(f"too many parameters for {kind!r}", line, column)
    try:
        return BasisFunction(kind, tuple(params), coord)
    except DictionaryError as exc:
        raise DictionaryError(str(exc), line, column) from None


def parse_dictionary(source: str, name: str = "custom") -> Dictionary:
    """Parse dictionary text into a :class:`Dictionary`.

    Raises
    ------
    DictionaryError
        On syntax errors, unknown kinds, missing parameters or duplicate
        entries. Syntax errors carry 1-based ``line`` and ``column``.
    """
    terms = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        offset = 0
        for chunk in body.split(";"):
            col = offset + 1
            offset += len(chunk) + 1
            if not chunk.strip():
                continue
            factors = []
            sub_offset = 0
            for piece in chunk.split("*"):
                lead = len(piece) - len(piece.lstrip())
                factors.append(_parse_factor(piece, lineno, col + sub_offset + lead))
                sub_offset += len(piece) + 1
            terms.append(Term(tuple(factors)))
    if not terms:
        raise DictionaryError("dictionary source contains no entries")
    return Dictionary(name, tuple(terms))


def serialize(d: Dictionary) -> str:
    """Render ``d`` in the text format, one entry per line."""
    return "".join(f"{t.to_dsl()}\n" for t in d.functions)


def _as_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValueError(f"points must be 1D or 2D, got shape {pts.shape}")
    if pts.shape[1] < dim:
        raise ValueError(f"dictionary needs {dim}-dimensional points, got {pts.shape[1]}")
    if not np.all(np.isfinite(pts)):
        bad = int(np.argmax(~np.all(np.isfinite(pts), axis=1)))
        raise ValueError(f"non-finite input point at row {bad}")
    return pts


def evaluate(d: Dictionary, points) -> np.ndarray:
    """Design matrix ``X[l, k] = f_k(point_l)`` of shape ``(N, K)``.

    1D ``points`` are treated as N scalar coordinates.
    """
    if d.K == 0:
        raise ValueError("empty dictionary")
    pts = _as_points(points, d.dim)
    out = np.empty((pts.shape[0], d.K))
    for k, term in enumerate(d.functions):
        col = np.ones(pts.shape[0])
        for f in term.factors:
            col = col * f.value(pts[:, f.coord])
        out[:, k] = col
    return out


def evaluate_gradient(d: Dictionary, points) -> np.ndarray:
    """Gradient tensor ``D[i, l, k] = df_k/dx_i(point_l)`` of shape ``(m, N, K)``."""
    if d.K == 0:
        raise ValueError("empty dictionary")
    pts = _as_points(points, d.dim)
    n, m = pts.shape
    out = np.zeros((m, n, d.K))
    for k, term in enumerate(d.functions):
        values = [f.value(pts[:, f.coord]) for f in term.factors]
        for j, f in enumerate(term.factors):
            part = f.derivative(pts[:, f.coord])
            for jj, v in enumerate(values):
                if jj != j:
                    part = part * v
            out[f.coord, :, k] += part
    return out


def _entries(text: str) -> tuple[Term, ...]:
    return parse_dictionary(text).functions


# Reference dictionaries of the double-well and lemon-slice benchmarks.
_THETA = """
const; poly 1; poly 2; poly 3; poly 4; poly 5; poly 6; poly 7; poly 8; poly 9; poly 10
sin 1; cos 1; sin 6; cos 6; sin 11; cos 11
tanh 10; sech2 10; gauss 50 0
"""

_THETA_PRIME = """
const; poly 1; poly 2; poly 3; sin 1; cos 11; sin 11
sech2 10; sech2 10 10
gauss 50 0; gauss 50 3; gauss 0.3 0; gauss 0.3 3; gauss 2 2; gauss 2 4; gauss 50 4
gauss 0.6 4; gauss 0.6 3
sech2 2 4
tanh2shift 4
"""

_THETA_2D = """
const; poly 1; poly 2; poly 3; poly 4; poly 5; poly 6; sin 1; cos 1
sin 4; cos 4; sin 7; cos 7; tanh 10
sech2 10; gauss 50 0; tanh 2; sech2 2; gauss 2 0; tanh 1
"""

OMEGA_SIZE = 100
OMEGA_SEED = 20190613

# Analytic terms of the double-well gradient.
ANALYTIC_DW = ("const", "poly 1", "poly 2", "poly 3")


def _omega_pool() -> list[Term]:
    # Shifted terms are centered at the integers 0..4, inside the sampled
    # double-well region; centers on its edges act as a second constant.
    centers = range(0, 5)
    pool = []
    for a in range(1, 13):
        pool += [f"sin {a}", f"cos {a}"]
    for a in (0.3, 0.6, 1, 2, 50):
        for c in centers:
            pool.append(f"gauss {_fmt(a)} {c}")
    for c in centers:
        pool.append(f"tanh2shift {c}")
    # sech2 with a=1 would be collinear with const + tanh2shift at the same center
    for a in (2, 5, 10):
        for c in centers:
            pool.append(f"sech2 {a} {a * c}")
    for a in (1, 2, 5, 10):
        for c in centers:
            pool.append(f"tanh {a} {a * c}")
    return [parse_dictionary(p).functions[0] for p in pool]


def _omega() -> tuple[Term, ...]:
    base = list(_entries(_THETA))
    keys = {t.canonical() for t in base}
    for t in _entries(_THETA_PRIME):
        if t.canonical() not in keys:
            base.append(t)
            keys.add(t.canonical())
    pool = [t for t in _omega_pool() if t.canonical() not in keys]
    rng = np.random.default_rng(OMEGA_SEED)
    picks = np.sort(rng.choice(len(pool), OMEGA_SIZE - len(base), replace=False))
    return tuple(chain(base, (pool[i] for i in picks)))


_BUILTIN_SOURCES = {
    "theta": lambda: _entries(_THETA),
    "theta_prime": lambda: _entries(_THETA_PRIME),
    "theta_2d": lambda: _entries(_THETA_2D),
    "omega": _omega,
}

_ALIASES = {"theta-prime": "theta_prime", "thetaprime": "theta_prime",
            "theta2d": "theta_2d", "theta-2d": "theta_2d"}

BUILTIN_NAMES = tuple(_BUILTIN_SOURCES)


def builtin(name: str) -> Dictionary:
    """Return one of the reference dictionaries by name.

    ``theta``, ``theta_prime`` (double-well, K=20), ``theta_2d`` (lemon slice
    angle, K=20) and ``omega`` (M=100 reference set containing the first two).
    """
    key = _ALIASES.get(name, name)
    if key not in _BUILTIN_SOURCES:
        raise KeyError(f"unknown builtin dictionary {name!r}; choose from {BUILTIN_NAMES}")
    return Dictionary(key, _BUILTIN_SOURCES[key]())


@dataclass(frozen=True)
class Expansion:
    """Linear combination ``sum_k c_k f_k`` over a dictionary."""

    dictionary: Dictionary
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float).copy()
        if c.shape != (self.dictionary.K,):
            raise ValueError(
                f"expected {self.dictionary.K} coefficients, got shape {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def __call__(self, points) -> np.ndarray:
        return evaluate(self.dictionary, points) @ self.coefficients

    def gradient(self, points) -> np.ndarray:
        """Array of shape ``(m, N)``."""
        return evaluate_gradient(self.dictionary, points) @ self.coefficients

    def active(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients)

    def describe(self, precision: int = 4) -> str:
        labels = self.dictionary.labels()
        parts = [f"{self.coefficients[i]:+.{precision}g}*[{labels[i]}]" for i in self.active()]
        return " ".join(parts) if parts else "0"

    def tables(self):
        """Flattened representation for the compiled integrators (1D only)."""
        if self.dictionary.dim > 1:
            raise ValueError("compiled evaluation supports one-dimensional dictionaries only")
        ptr = [0]
        kinds, params = [], []
        for term in self.dictionary.functions:
            for f in term.factors:
                kinds.append(KIND_CODES[f.kind])
                p = f.params + (0.0,) * (2 - len(f.params))
                params.append(p)
            ptr.append(len(kinds))
        return (np.asarray(ptr, dtype=np.int64), np.asarray(kinds, dtype=np.int64),
                np.asarray(params, dtype=float).reshape(-1, 2), self.coefficients.copy())
