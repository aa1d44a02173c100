import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from featrel.data import (
    DiscreteDistribution,
    GaussianSpec,
    SampleMatrix,
    independent_binary_distribution,
    irrelevant_feature_distribution,
    make_rank1_gaussian,
    sample_gaussian,
)
from featrel.errors import (
    DimensionError,
    NumericError,
    SingularMatrixError,
    UsageError,
    WeightUnderflowError,
)
from featrel.model import FunctionModel, LinearModel, parse_expression
from featrel.valuefn import (
    Coalition,
    CoalitionValueTable,
    ValueFunctionSpec,
    all_coalitions,
    build_value_table,
    conditional_gaussian_value,
    conditional_kernel_value,
    exact_discrete_value,
    gaussian_condition,
    kernel_weights,
    marginal_mc,
)

F_X1 = parse_expression("x1", 2)
SHARED_BACKGROUND = SampleMatrix([[0.0, 0.0], [1.0, 1.0]])


# --------------------------------------------------------------- coalition


def test_coalition_basics():
    T = Coalition.of([0, 2], 4)
    assert T.bits == 0b0101 and len(T) == 2
    assert T.indices == (0, 2)
    assert T.complement().indices == (1, 3)
    assert 2 in T and 1 not in T
    assert T.with_(1).bits == 0b0111 and T.without(0).bits == 0b0100
    assert Coalition.empty(4).is_empty and Coalition.full(4).is_full
    assert len(all_coalitions(5)) == 32


def test_coalition_out_of_range():
    with pytest.raises(UsageError):
        Coalition.of([3], 3)
    with pytest.raises(UsageError):
        Coalition(0b1000, 3)


# ---------------------------------------------------------------- marginal


def test_marginal_irrelevant_feature():
    x = np.array([1.0, 1.0])
    assert marginal_mc(F_X1, x, Coalition.of([1], 2), SHARED_BACKGROUND) == 0.5
    assert marginal_mc(F_X1, x, Coalition.empty(2), SHARED_BACKGROUND) == 0.5
    assert marginal_mc(F_X1, x, Coalition.of([0], 2), SHARED_BACKGROUND) == 1.0


def test_marginal_full_coalition_ignores_background():
    f = parse_expression("x1 * x2 + 3", 2)
    bg = SampleMatrix(np.random.default_rng(0).normal(size=(5, 2)))
    assert marginal_mc(f, [2, 5], Coalition.full(2), bg) == 13.0


def test_marginal_linear_contribution_is_exact():
    # with a shared background, C(i|T) = a_i (x_i - mean of column i) exactly
    rng = np.random.default_rng(1)
    model = LinearModel(0.3, [1.0, -2.0, 0.5])
    bg = SampleMatrix(rng.normal(size=(200, 3)))
    x = rng.normal(size=3)
    m = bg.values.mean(axis=0)
    for T in all_coalitions(3):
        for i in set(range(3)) - set(T.indices):
            c = marginal_mc(model, x, T.with_(i), bg) - marginal_mc(model, x, T, bg)
            assert c == pytest.approx(model.coefficients[i] * (x[i] - m[i]), abs=1e-12)


def test_marginal_resampling_is_seeded():
    bg = SampleMatrix(np.random.default_rng(2).normal(size=(50, 2)))
    T = Coalition.of([0], 2)
    f = parse_expression("x1 + x2^2", 2)
    a = marginal_mc(f, [1, 1], T, bg, fixed_background=False, sample_count=30, seed=4)
    b = marginal_mc(f, [1, 1], T, bg, fixed_background=False, sample_count=30, seed=4)
    c = marginal_mc(f, [1, 1], T, bg, fixed_background=False, sample_count=30, seed=5)
    assert a == b and a != c


def test_marginal_dimension_mismatch():
    with pytest.raises(DimensionError):
        marginal_mc(F_X1, [1, 1], Coalition.empty(2), SampleMatrix(np.zeros((3, 3))))


# ------------------------------------------------------- Gaussian conditioning


def test_condition_diagonal_is_vacuous():
    spec = GaussianSpec([1.0, 2.0, 3.0], np.diag([1.0, 4.0, 9.0]))
    c = gaussian_condition(spec, Coalition.of([1], 3), [10.0])
    np.testing.assert_array_equal(c.mean, [1.0, 3.0])
    np.testing.assert_array_equal(c.cov, np.diag([1.0, 9.0]))


@pytest.mark.parametrize("rho, x1", [(0.5, 1.2), (-0.8, -0.4), (0.95, 2.0)])
def test_condition_bivariate_against_quadrature(rho, x1):
    # oracle: integrate the joint density numerically along the x2 axis
    joint = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]])
    pdf = lambda x2: joint.pdf([x1, x2])
    z = integrate.quad(pdf, -np.inf, np.inf)[0]
    m1 = integrate.quad(lambda t: t * pdf(t), -np.inf, np.inf)[0] / z
    m2 = integrate.quad(lambda t: t * t * pdf(t), -np.inf, np.inf)[0] / z
    c = gaussian_condition(GaussianSpec([0, 0], [[1, rho], [rho, 1]]), Coalition.of([0], 2), [x1])
    assert c.mean[0] == pytest.approx(m1, abs=1e-8)
    assert c.cov[0, 0] == pytest.approx(m2 - m1**2, abs=1e-8)
    # scalar regression formula
    assert c.mean[0] == pytest.approx(rho * x1, abs=1e-12)
    assert c.cov[0, 0] == pytest.approx(1 - rho**2, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_condition_rank1_has_zero_variance(seed):
    spec = make_rank1_gaussian(2, seed)
    c = np.sqrt(np.diag(spec.cov)) * np.sign(spec.cov[0])
    cond = gaussian_condition(spec, Coalition.of([0], 2), [0.7])
    assert cond.cov[0, 0] == 0.0
    assert cond.mean[0] == pytest.approx(0.7 * c[1] / c[0], rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31))
def test_condition_single_coordinate_regression(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    S = A @ A.T + 0.1 * np.eye(n)
    mu = rng.normal(size=n)
    x = rng.normal(size=n)
    # condition the last coordinate on all others, compared with solve()
    T = Coalition.of(range(n - 1), n)
    c = gaussian_condition(GaussianSpec(mu, S), T, x[:-1])
    s12 = S[-1, :-1]
    expect_mean = mu[-1] + s12 @ np.linalg.solve(S[:-1, :-1], x[:-1] - mu[:-1])
    expect_var = S[-1, -1] - s12 @ np.linalg.solve(S[:-1, :-1], s12)
    assert c.mean[0] == pytest.approx(expect_mean, abs=1e-9 * max(1, abs(expect_mean)))
    assert c.cov[0, 0] == pytest.approx(expect_var, rel=1e-8, abs=1e-12)


def test_condition_rejects_trivial_coalitions():
    spec = GaussianSpec([0, 0], np.eye(2))
    with pytest.raises(UsageError):
        gaussian_condition(spec, Coalition.empty(2), [])
    with pytest.raises(UsageError):
        gaussian_condition(spec, Coalition.full(2), [0, 0])


# ------------------------------------------------- conditional Gaussian value


def test_cond_gauss_linear_within_standard_error():
    S = np.array([[2.0, 0.6, 0.3], [0.6, 1.0, -0.4], [0.3, -0.4, 1.5]])
    mu = np.array([0.5, -1.0, 2.0])
    spec = GaussianSpec(mu, S)
    a = np.array([1.5, -2.0, 0.7])
    model = LinearModel(0.25, a)
    x = np.array([1.0, 0.3, -0.5])
    K = 1000
    for T in all_coalitions(3)[1:-1]:
        t = T.mask
        cond = gaussian_condition(spec, T, x[t])
        truth = 0.25 + a[t] @ x[t] + a[~t] @ cond.mean
        se = np.sqrt(a[~t] @ cond.cov @ a[~t] / K)
        got = conditional_gaussian_value(model, x, T, spec, K=K, seed=3)
        assert abs(got - truth) <= 4 * se


def test_cond_gauss_full_and_empty():
    spec = GaussianSpec([1.0, 2.0], np.eye(2))
    f = parse_expression("x1 * x2", 2)
    assert conditional_gaussian_value(f, [3, 4], Coalition.full(2), spec) == 12.0
    # E[X1 X2] = 2 under independence; SE of the product is about sqrt(6 / K)
    v = conditional_gaussian_value(f, [3, 4], Coalition.empty(2), spec, K=4000, seed=1)
    assert abs(v - 2.0) < 4 * np.sqrt(6 / 4000)


def test_cond_gauss_diagonal_agrees_with_marginal():
    spec = GaussianSpec([0.0, 1.0, -1.0], np.diag([1.0, 0.5, 2.0]))
    f = parse_expression("x1 * x2 + x3^2", 3)
    bg = sample_gaussian(spec, 20000, seed=9)
    x = np.array([0.4, 1.1, -0.2])
    T = Coalition.of([0], 3)
    a = conditional_gaussian_value(f, x, T, spec, K=20000, seed=2)
    b = marginal_mc(f, x, T, bg)
    # both estimate 0.4 * 1 + (2 + 1) = 3.4; x3^2 has variance 2*4 + 4*2*1 = 16
    assert abs(a - b) < 4 * np.sqrt(2 * (16 + 0.16 * 0.5) / 20000)


def test_cond_gauss_rank1_equals_plug_in():
    spec = make_rank1_gaussian(3, 7)
    c = np.linalg.eigh(spec.cov)[1][:, -1]
    model = LinearModel(0.0, [0.0, 1.0, 2.0])
    x = 1.3 * c
    # X is a multiple of c, so fixing x1 pins all coordinates and the value is f(x)
    v = conditional_gaussian_value(model, x, Coalition.of([0], 3), spec, K=50)
    assert v == pytest.approx(model.evaluate(x), abs=1e-10)


def test_cond_gauss_seeded():
    spec = GaussianSpec([0, 0], [[1, 0.5], [0.5, 1]])
    f = parse_expression("x1^2 + x2", 2)
    T = Coalition.of([1], 2)
    assert conditional_gaussian_value(f, [1, 1], T, spec, K=100, seed=5) == conditional_gaussian_value(
        f, [1, 1], T, spec, K=100, seed=5
    )


# ------------------------------------------------------------------ kernel


def test_kernel_distance_scalar():
    rng = np.random.default_rng(3)
    bg = SampleMatrix(rng.normal(2.0, 3.0, size=(40, 2)))
    x = np.array([1.0, 0.0])
    s = bg.values[:, 0].std(ddof=1)
    d = np.abs(x[0] - bg.values[:, 0]) / s
    s2 = 0.1
    w = kernel_weights(x, Coalition.of([0], 2), bg, s2)
    np.testing.assert_allclose(w, np.exp(-(d**2) / (2 * s2)), rtol=1e-12)


def test_kernel_mahalanobis_matches_scipy():
    from scipy.spatial.distance import mahalanobis

    rng = np.random.default_rng(4)
    bg = SampleMatrix(rng.normal(size=(30, 3)) @ rng.normal(size=(3, 3)))
    x = rng.normal(size=3)
    T = Coalition.of([0, 2], 3)
    VI = np.linalg.inv(np.cov(bg.values[:, [0, 2]], rowvar=False))
    d2 = np.array([mahalanobis(x[[0, 2]], b, VI) ** 2 for b in bg.values[:, [0, 2]]]) / 2
    np.testing.assert_allclose(kernel_weights(x, T, bg, 0.3), np.exp(-d2 / 0.6), rtol=1e-10)


def test_kernel_point_mass_limit():
    rng = np.random.default_rng(5)
    rows = rng.normal(size=(20, 2))
    x = rows[7].copy()
    f = parse_expression("x1 * 3 + x2^2", 2)
    v = conditional_kernel_value(f, x, Coalition.of([0], 2), SampleMatrix(rows), bandwidth=1e-6)
    assert v == pytest.approx(f.evaluate(x), abs=1e-9)


def test_kernel_equidistant_rows_average():
    # rows symmetric about x in column 1: equal weights
    rows = np.array([[1.0, 5.0], [-1.0, 7.0], [1.0, -2.0], [-1.0, 4.0]])
    f = parse_expression("x1 + x2", 2)
    v = conditional_kernel_value(f, [0.0, 0.0], Coalition.of([0], 2), SampleMatrix(rows), bandwidth=0.5)
    assert v == pytest.approx(np.mean(rows[:, 1]), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 5.0), st.integers(1, 30))
def test_kernel_convex_combination(seed, s2, k):
    rng = np.random.default_rng(seed)
    bg = SampleMatrix(rng.normal(size=(30, 3)))
    x = rng.normal(size=3)
    T = Coalition.of([0, 1], 3)
    f = parse_expression("x1 - 2*x2 + x3^3", 3)
    w = kernel_weights(x, T, bg, s2)
    assert np.all((w > 0) & (w <= 1))
    Z = bg.values.copy()
    Z[:, :2] = x[:2]
    fz = f.evaluate_batch(Z)
    v = conditional_kernel_value(f, x, T, bg, s2, k)
    assert fz.min() - 1e-12 <= v <= fz.max() + 1e-12


def test_kernel_neighbors_are_largest_weights():
    rows = np.array([[0.0, 1.0], [0.1, 2.0], [3.0, 100.0], [-0.05, 3.0], [2.5, 50.0]])
    f = parse_expression("x2", 2)
    bg = SampleMatrix(rows)
    w = kernel_weights([0.0, 0.0], Coalition.of([0], 2), bg, 0.1)
    top = np.argsort(-w)[:3]
    expect = w[top] @ rows[top, 1] / w[top].sum()
    assert conditional_kernel_value(f, [0, 0], Coalition.of([0], 2), bg, 0.1, 3) == pytest.approx(expect)
    assert set(top) == {0, 1, 3}


def test_kernel_zero_variance_column():
    bg = SampleMatrix([[1.0, 0.0], [1.0, 2.0], [1.0, 3.0]])
    with pytest.raises(SingularMatrixError):
        conditional_kernel_value(F_X1, [1, 1], Coalition.of([0], 2), bg)


def test_kernel_weight_underflow():
    bg = SampleMatrix([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
    with pytest.raises(WeightUnderflowError, match="bandwidth"):
        conditional_kernel_value(F_X1, [1e6, 0], Coalition.of([0], 2), bg, bandwidth=0.1)


def test_kernel_empty_coalition_is_plain_mean():
    rows = np.random.default_rng(6).normal(size=(10, 2))
    v = conditional_kernel_value(F_X1, [9, 9], Coalition.empty(2), SampleMatrix(rows))
    assert v == pytest.approx(rows[:, 0].mean(), abs=1e-15)


# ----------------------------------------------------------------- discrete


def test_exact_irrelevant_feature():
    d = irrelevant_feature_distribution()
    x = [1.0, 1.0]
    T2 = Coalition.of([1], 2)
    T1 = Coalition.of([0], 2)
    assert exact_discrete_value(F_X1, x, T2, d, "conditional") == 1.0
    assert exact_discrete_value(F_X1, x, T2, d, "marginal") == 0.5
    for mode in ("marginal", "conditional"):
        assert exact_discrete_value(F_X1, x, T1, d, mode) == 1.0
        assert exact_discrete_value(F_X1, x, Coalition.full(2), d, mode) == 1.0


def test_exact_conditional_zero_probability():
    with pytest.raises(NumericError, match="probability zero"):
        exact_discrete_value(F_X1, [1.0, 0.5], Coalition.of([1], 2), irrelevant_feature_distribution(), "conditional")
    # the marginal mode never conditions, so off-support instances are fine
    assert exact_discrete_value(F_X1, [1.0, 0.5], Coalition.of([1], 2), irrelevant_feature_distribution()) == 0.5


def _product_distribution(ps):
    pts = list(itertools.product([0.0, 1.0], repeat=len(ps)))
    probs = [np.prod([p if v else 1 - p for v, p in zip(pt, ps)]) for pt in pts]
    return DiscreteDistribution(pts, probs)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 0.95), min_size=2, max_size=4), st.integers(0, 2**31))
def test_independence_collapse(ps, seed):
    n = len(ps)
    rng = np.random.default_rng(seed)
    dist = _product_distribution(ps)
    W = rng.normal(size=(n, n))
    f = FunctionModel(lambda X: np.sin(X @ W).sum(axis=1) + X.prod(axis=1), n)
    x = rng.integers(0, 2, n).astype(float)
    for T in all_coalitions(n):
        a = exact_discrete_value(f, x, T, dist, "marginal")
        b = exact_discrete_value(f, x, T, dist, "conditional")
        assert a == pytest.approx(b, abs=1e-12)


# -------------------------------------------------------------------- tables


def test_table_irrelevant_feature_conditional():
    spec = ValueFunctionSpec("exact-discrete-conditional", discrete=irrelevant_feature_distribution())
    t = build_value_table(F_X1, [1, 1], spec)
    assert [t.g(Coalition(b, 2)) for b in range(4)] == [0.0, 0.5, 0.5, 0.5]


def test_table_irrelevant_feature_marginal():
    spec = ValueFunctionSpec("exact-discrete-marginal", discrete=irrelevant_feature_distribution())
    t = build_value_table(F_X1, [1, 1], spec)
    assert [t.g(Coalition(b, 2)) for b in range(4)] == [0.0, 0.5, 0.0, 0.5]


def test_table_constant_model():
    bg = SampleMatrix(np.random.default_rng(0).normal(size=(20, 3)))
    f = parse_expression("4.25", 3)
    for kind in ("marginal-mc", "conditional-kernel"):
        t = build_value_table(f, [0.1, 0.2, 0.3], ValueFunctionSpec(kind, background=bg))
        assert not t.dense().any()


def test_table_always_contains_empty_and_full():
    spec = ValueFunctionSpec("exact-discrete-marginal", discrete=independent_binary_distribution(0.3, 0.4))
    t = build_value_table(parse_expression("x1 + x2", 2), [2, 2], spec, coalitions=[Coalition.of([0], 2)])
    assert len(t) == 3
    assert t.g(Coalition.empty(2)) == 0.0
    assert t.g_full == pytest.approx(4 - 2.7, abs=1e-14)


def test_table_parallel_matches_serial():
    spec = ValueFunctionSpec("conditional-gaussian", gaussian=make_rank1_gaussian(4, 1), sample_count=200, seed=3)
    f = parse_expression("x1*x2 + x3 - x4^2", 4)
    x = [0.1, -0.3, 0.5, 0.2]
    a = build_value_table(f, x, spec).dense()
    b = build_value_table(f, x, spec, workers=4).dense()
    np.testing.assert_array_equal(a, b)


def test_table_contribution_and_arith():
    t = CoalitionValueTable.from_array([0.0, 1.0, 2.0, 5.0], 2)
    assert t.contribution(0, Coalition.of([1], 2)) == 3.0
    u = t.scaled(2.0) + t
    np.testing.assert_array_equal(u.dense(), [0, 3, 6, 15])
    with pytest.raises(UsageError):
        t.contribution(0, Coalition.of([0], 2))


def test_spec_requires_matching_source():
    bg = SampleMatrix(np.zeros((2, 2)))
    with pytest.raises(UsageError):
        ValueFunctionSpec("marginal-mc")
    with pytest.raises(UsageError):
        ValueFunctionSpec("marginal-mc", background=bg, discrete=irrelevant_feature_distribution())
    with pytest.raises(UsageError):
        ValueFunctionSpec("conditional-kernel", background=bg, bandwidth=0.0)
    with pytest.raises(UsageError):
        ValueFunctionSpec("nonsense", background=bg)
    assert ValueFunctionSpec("conditional-kernel", background=bg).bandwidth == 0.1


def test_spec_round_trip():
    spec = ValueFunctionSpec("conditional-gaussian", gaussian=make_rank1_gaussian(3, 2), sample_count=77, seed=9)
    back = ValueFunctionSpec.from_dict(spec.to_dict())
    assert back.kind == spec.kind and back.sample_count == 77 and back.seed == 9
    np.testing.assert_array_equal(back.gaussian.cov, spec.gaussian.cov)
