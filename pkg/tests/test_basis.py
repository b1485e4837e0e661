import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stokid.basis import (KINDS, BasisFunction, Dictionary, DictionaryError, Expansion, builtin,
                          evaluate, evaluate_gradient, parse_dictionary, serialize)


def test_single_monomial():
    d = parse_dictionary("poly 3")
    assert d.K == 1
    assert evaluate(d, [2.0])[0, 0] == 8.0


def test_first_four_entries_of_theta():
    d = parse_dictionary("const; poly 1; poly 2; poly 3")
    assert d.labels() == builtin("theta").labels()[:4]
    assert d.labels() == builtin("theta_prime").labels()[:4]


def test_point_values():
    d = parse_dictionary("const\nsin 7")
    X = evaluate(d, [np.pi / 14, -3.0])
    assert X[0, 0] == 1.0 and X[1, 0] == 1.0
    assert X[0, 1] == pytest.approx(1.0, abs=1e-15)


def test_derivative_examples():
    d = parse_dictionary("poly 3; sin 7; gauss 50 3")
    D = evaluate_gradient(d, [2.0, 0.0, 3.0])
    assert D.shape == (1, 3, 3)
    assert D[0, 0, 0] == 12.0
    assert D[0, 1, 1] == 7.0
    assert D[0, 2, 2] == 0.0


def test_comments_and_separators():
    d = parse_dictionary("# header\nconst ; poly 2  # squared\n\n tanh 2 1; sech2 3")
    assert d.labels() == ["const", "poly 2", "tanh 2 1", "sech2 3"]


@pytest.mark.parametrize("src, line, col", [
    ("const\nfoo 1", 2, 1),
    ("const; poly", 1, 8),
    ("poly 1\ngauss 2", 2, 1),
    ("sin x", 1, 5),
])
def test_syntax_errors_carry_position(src, line, col):
    with pytest.raises(DictionaryError) as err:
        parse_dictionary(src)
    assert (err.value.line, err.value.column) == (line, col)


def test_bad_entries():
    for src in ("poly -1", "poly 1.5", "sin 1 2", "", "# only a comment", "sin 1 @x"):
        with pytest.raises(DictionaryError):
            parse_dictionary(src)


def test_duplicates_after_normalization():
    with pytest.raises(DictionaryError, match="duplicate"):
        parse_dictionary("tanh 2; tanh 2.0 0")
    with pytest.raises(DictionaryError, match="duplicate"):
        parse_dictionary("gauss 0.3 1; gauss 0.30000000000001 1")


def test_builtin_sizes():
    assert builtin("theta").K == 20
    assert builtin("theta_prime").K == 20
    t2 = builtin("theta_2d")
    assert t2.K == 20 and "const" in t2.labels() and "sin 7" in t2.labels()
    omega = builtin("omega")
    assert omega.K == 100
    for name in ("theta", "theta_prime"):
        for label in builtin(name).labels():
            omega.index(label)
    with pytest.raises(KeyError):
        builtin("theta3")


@pytest.mark.parametrize("name", ["theta", "theta_prime", "theta_2d", "omega"])
def test_serialize_round_trip_is_bit_identical(name):
    d = builtin(name)
    back = parse_dictionary(serialize(d), name)
    assert back.labels() == d.labels()
    x = np.linspace(-4.0, 6.0, 257)
    assert np.array_equal(evaluate(back, x), evaluate(d, x))


def test_concatenated_points():
    d = builtin("omega")
    a, b = np.linspace(-1, 2, 17), np.linspace(2, 5, 11)
    assert np.array_equal(evaluate(d, np.concatenate([a, b])), np.vstack([evaluate(d, a), evaluate(d, b)]))


def test_non_finite_points_rejected():
    with pytest.raises(ValueError, match="row 1"):
        evaluate(builtin("theta"), [0.0, np.nan])


def _function(kind, p1, p2):
    required, optional = KINDS[kind]
    if kind == "poly":
        return BasisFunction(kind, (float(int(abs(p1) * 2)),))
    params = [p1, p2][: required + len(optional)]
    if kind in ("tanh", "sech2"):
        params = [abs(p1) + 0.1, p2]
    if kind == "gauss":
        params = [abs(p1) * 10 + 0.1, p2]
    return BasisFunction(kind, tuple(params))


@settings(max_examples=100, deadline=None)
@given(kind=st.sampled_from(sorted(KINDS)),
       p1=st.floats(-5, 5), p2=st.floats(-5, 5), x=st.floats(-5, 5))
def test_derivative_matches_finite_difference(kind, p1, p2, x):
    f = _function(kind, p1, p2)
    h = 1e-6
    fd = (f.value(np.array([x + h])) - f.value(np.array([x - h]))) / (2 * h)
    an = f.derivative(np.array([x]))
    scale = max(1.0, float(np.max(np.abs(f.value(np.array([x - 1e-3, x, x + 1e-3]))))))
    assert abs(fd[0] - an[0]) <= 1e-6 * max(abs(an[0]), scale)


def test_product_term_gradient():
    d = parse_dictionary("poly 2 @0 * sin 1 @1; cos 2 @1")
    assert d.dim == 2
    pts = np.array([[1.5, 0.3], [-0.7, 2.0]])
    D = evaluate_gradient(d, pts)
    x, y = pts[:, 0], pts[:, 1]
    assert np.allclose(D[0, :, 0], 2 * x * np.sin(y))
    assert np.allclose(D[1, :, 0], x ** 2 * np.cos(y))
    assert np.allclose(D[0, :, 1], 0.0)
    assert np.allclose(D[1, :, 1], -2 * np.sin(2 * y))
    with pytest.raises(ValueError):
        evaluate(d, [1.0, 2.0])


def test_subset_index_and_concatenation():
    theta = builtin("theta")
    sub = theta.subset([3, 0])
    assert sub.labels() == ["poly 3", "const"]
    assert theta.index("poly 3") == 3
    assert (parse_dictionary("const") + parse_dictionary("sin 7")).K == 2
    with pytest.raises(DictionaryError):
        theta + theta


def test_expansion():
    d = parse_dictionary("const; poly 1; poly 2")
    e = Expansion(d, np.array([1.0, 0.0, -2.0]))
    assert np.allclose(e(np.array([0.0, 1.0])), [1.0, -1.0])
    assert np.allclose(e.gradient(np.array([0.5]))[0], [-2.0])
    assert e.active().tolist() == [0, 2]
    assert e.describe() == "+1*[const] -2*[poly 2]"
    with pytest.raises(ValueError):
        Expansion(d, np.ones(2))
