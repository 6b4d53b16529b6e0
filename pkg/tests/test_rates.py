import math

import numpy as np
import pytest

from loctimes.chain import generator_from_triples, srw_generator, validate_generator
from loctimes.density import cofactor, density
from loctimes.errors import (
    NotConvergedError,
    NotSymmetricError,
    TooEarlyError,
    UnboundedRateError,
)
from loctimes.rates import (
    density_upper_bound,
    eta,
    ldp_probability_bound,
    ldp_varadhan_bound,
    rate_general,
    rate_symmetric,
    rescaled_chi_discrete,
)

TWO_STATE = validate_generator([[0.0, 1.0], [1.0, 0.0]], (1, 2))


def random_symmetric_generator(rng, n):
    B = rng.uniform(0.3, 1.3, (n, n))
    B = 0.5 * (B + B.T)
    np.fill_diagonal(B, 0.0)
    A = B.copy()
    np.fill_diagonal(A, -B.sum(axis=1))
    return validate_generator(A, tuple(range(n)))


# ---------------------------------------------------------------------------
# eta
# ---------------------------------------------------------------------------

def test_eta_floor_at_one():
    g = validate_generator([[0.0, 0.0], [0.0, 0.0]], (0, 1))
    assert eta(g, (0, 1)) == 1.0


def test_eta_single_entry():
    g = validate_generator([[0.0, 3.0], [0.0, 0.0]], (1, 2))
    assert eta(g, (1, 2)) == 3.0


def test_eta_srw_box_with_interior_point():
    # unit-rate walk on an integer box: eta equals twice the dimension
    g = srw_generator(-3, 3)
    assert eta(g, (-1, 0, 1)) == 2.0
    # two-dimensional lattice box
    sites = [(i, j) for i in range(-1, 2) for j in range(-1, 2)]
    triples = []
    for (i, j) in sites:
        for (di, dj) in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            t = (i + di, j + dj)
            if t in sites:
                triples.append(((i, j), t, 1.0))
    g2 = generator_from_triples(tuple(sites), triples)
    assert eta(g2, tuple(sites)) == 4.0


def test_eta_monotone_in_R():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 7))
        g = random_symmetric_generator(rng, n)
        size_small = int(rng.integers(1, n))
        small = tuple(map(int, rng.choice(n, size=size_small, replace=False)))
        extra = [x for x in range(n) if x not in small]
        rng.shuffle(extra)
        big = small + tuple(extra[: int(rng.integers(1, len(extra) + 1))])
        assert eta(g, big) >= eta(g, small)


def test_hadamard_bound_spot_check():
    rng = np.random.default_rng(1)
    for _ in range(500):
        n = int(rng.integers(2, 7))
        B = rng.uniform(0.0, 2.0, (n, n)) * (rng.random((n, n)) < 0.7)
        np.fill_diagonal(B, 0.0)
        A = B.copy()
        np.fill_diagonal(A, -B.sum(axis=1))
        g = validate_generator(A, tuple(range(n)))
        eta_R = eta(g, tuple(range(n)))
        k = int(rng.integers(2, n + 1))
        X = sorted(map(int, rng.choice(n, size=k, replace=False)))
        a, b = rng.choice(X, 2)
        sub = -B[np.ix_(X, X)]
        val = abs(cofactor(sub, X.index(a), X.index(b)))
        assert val <= eta_R ** (len(X) - 1) * (1.0 + 1e-12) + 1e-12


# ---------------------------------------------------------------------------
# rate functions
# ---------------------------------------------------------------------------

def test_rate_symmetric_examples():
    assert rate_symmetric(TWO_STATE, [0.5, 0.5]) == pytest.approx(0.0, abs=1e-15)
    assert rate_symmetric(TWO_STATE, [1.0, 0.0]) == pytest.approx(1.0)
    assert rate_symmetric(TWO_STATE, [0.75, 0.25]) == pytest.approx(
        (math.sqrt(0.75) - math.sqrt(0.25)) ** 2)
    assert rate_symmetric(TWO_STATE, [0.75, 0.25]) == pytest.approx(0.1339746, abs=5e-8)


def test_rate_symmetric_requires_symmetry():
    g = validate_generator([[-2.0, 2.0], [1.0, -1.0]], (1, 2))
    with pytest.raises(NotSymmetricError):
        rate_symmetric(g, [0.5, 0.5])


def test_rate_general_matches_dirichlet_form_when_symmetric():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(2, 6))
        g = random_symmetric_generator(rng, n)
        mu = rng.dirichlet(np.ones(n))
        mu = np.maximum(mu, 1e-3)
        mu /= mu.sum()
        sol = rate_general(g, mu, tol=1e-11)
        assert sol.value == pytest.approx(rate_symmetric(g, mu), abs=1e-6)
        gvec = np.array([sol.minimizer[x] for x in g.states])
        ref = np.sqrt(mu) / math.sqrt(mu[0])
        assert np.max(np.abs(gvec - ref)) < 1e-4
        assert sol.final_gradient_norm <= 1e-11


def test_rate_general_uniform_symmetric_is_zero():
    g = srw_generator(0, 3)
    n = g.n_states
    sol = rate_general(g, np.full(n, 1.0 / n))
    assert sol.value == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(list(sol.minimizer.values()), 1.0, atol=1e-8)


def test_rate_general_asymmetric_matches_grid_oracle():
    g = validate_generator([[-2.0, 2.0], [1.0, -1.0]], (1, 2))
    mu = np.array([0.5, 0.5])
    # one gauge-free variable t = u2 - u1
    ts = np.linspace(-3, 3, 200_001)
    J = -0.5 * (-2.0 + 2.0 * np.exp(ts)) - 0.5 * (np.exp(-ts) - 1.0)
    k = int(np.argmax(J))
    # quadratic refinement around the best grid node
    t0, t1, t2 = ts[k - 1 : k + 2]
    j0, j1, j2 = J[k - 1 : k + 2]
    denom = j0 - 2 * j1 + j2
    t_star = t1 - 0.5 * (j2 - j0) / denom * (t1 - t0)
    j_star = -0.5 * (-2.0 + 2.0 * math.exp(t_star)) - 0.5 * (math.exp(-t_star) - 1.0)
    sol = rate_general(g, mu, tol=1e-12)
    assert sol.value == pytest.approx(j_star, abs=1e-8)
    assert sol.value == pytest.approx(0.5 * (3.0 - 2.0 * math.sqrt(2.0)), abs=1e-10)


def test_rate_general_objective_is_gauge_invariant():
    # scaling the returned minimizer leaves the evaluated objective unchanged
    g = validate_generator([[-2.0, 2.0], [1.0, -1.0]], (1, 2))
    mu = np.array([0.3, 0.7])
    sol = rate_general(g, mu, tol=1e-12)

    def objective(gvec):
        return -sum(
            mu[i] * sum(g.rates[i, j] * gvec[j] / gvec[i] for j in range(2))
            for i in range(2)
        )

    gvec = np.array([sol.minimizer[x] for x in g.states])
    assert objective(gvec) == pytest.approx(objective(7.3 * gvec), abs=1e-12)
    assert objective(gvec) == pytest.approx(sol.value, abs=1e-12)


def test_rate_general_zero_entries_restrict_support():
    g = srw_generator(0, 2)
    sol = rate_general(g, {0: 0.5, 1: 0.5, 2: 0.0})
    assert set(sol.minimizer) == {0, 1}
    assert sol.value > 0.0


def test_rate_general_singleton_support():
    sol = rate_general(TWO_STATE, [1.0, 0.0])
    assert sol.value == pytest.approx(1.0)
    assert sol.minimizer == {1: 1.0}


def test_rate_general_reducible_support_is_unbounded():
    g = validate_generator([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
                           (0, 1, 2))
    # support {0, 1} only connects 0 -> 1; no return path inside the support
    with pytest.raises(UnboundedRateError):
        rate_general(g, [0.5, 0.5, 0.0])


def test_rate_general_rejects_bad_mu():
    with pytest.raises(ValueError):
        rate_general(TWO_STATE, [0.7, 0.7])
    with pytest.raises(ValueError):
        rate_general(TWO_STATE, [-0.1, 1.1])


# ---------------------------------------------------------------------------
# pointwise density bound
# ---------------------------------------------------------------------------

def test_upper_bound_two_state_value():
    bound = density_upper_bound(TWO_STATE, (1, 2), 1, 2, [0.5, 0.5])
    assert bound == pytest.approx(math.exp(2.5), rel=1e-12)
    rho = density(TWO_STATE, (1, 2), 1, 2, [0.5, 0.5])
    assert rho <= bound


def test_upper_bound_singleton_reduces_to_rate_term():
    g = srw_generator(0, 3)
    T = 1.3
    bound = density_upper_bound(g, (1,), 1, 1, [T])
    assert bound == pytest.approx(math.exp(-T * rate_symmetric_on_r(g, (1,))), rel=1e-12)


def rate_symmetric_on_r(g, R):
    from loctimes.rates import rate_symmetric_on_subset
    return rate_symmetric_on_subset(g, R, {x: 1.0 for x in R})


def test_upper_bound_dominates_density_symmetric_sweep():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(1, 4))
        g = random_symmetric_generator(rng, max(n, 2))
        R = tuple(range(n))
        T = rng.uniform(0.4, 1.6)
        l = rng.dirichlet(np.ones(n)) * T
        l = np.maximum(l, 0.02 * T)
        a, b = rng.integers(0, n, 2)
        rho = density(g, R, a, b, l, tol=1e-10)
        bound = density_upper_bound(g, R, a, b, l)
        assert rho <= bound + 1e-12


def test_upper_bound_dominates_density_asymmetric():
    rng = np.random.default_rng(4)
    for _ in range(25):
        n = int(rng.integers(2, 4))
        B = rng.uniform(0.3, 1.3, (n, n))
        np.fill_diagonal(B, 0.0)
        A = B.copy()
        np.fill_diagonal(A, -B.sum(axis=1))
        g = validate_generator(A, tuple(range(n)))
        R = tuple(range(n))
        T = rng.uniform(0.4, 1.6)
        l = rng.dirichlet(np.ones(n)) * T
        l = np.maximum(l, 0.02 * T)
        a, b = rng.integers(0, n, 2)
        rho = density(g, R, a, b, l, tol=1e-10)
        bound = density_upper_bound(g, R, a, b, l)
        assert rho <= bound + 1e-12


# ---------------------------------------------------------------------------
# finite-time LDP bounds
# ---------------------------------------------------------------------------

def test_ldp_probability_bound_arithmetic():
    bound = ldp_probability_bound(TWO_STATE, (1, 2), 0.0, 10.0)
    expected = 2 * math.log(math.sqrt(8 * math.e) * 10.0) + math.log(2.0) + 2 / 40.0
    assert bound == pytest.approx(expected, rel=1e-14)


def test_ldp_bound_linear_in_inf_rate():
    T = 7.0
    b1 = ldp_probability_bound(TWO_STATE, (1, 2), 0.3, T)
    b2 = ldp_probability_bound(TWO_STATE, (1, 2), 0.8, T)
    assert (b2 - b1) / (0.8 - 0.3) == pytest.approx(-T, rel=1e-12)


def test_ldp_varadhan_matches_probability_bound_at_zero():
    assert ldp_varadhan_bound(TWO_STATE, (1, 2), 0.0, 5.0) == pytest.approx(
        ldp_probability_bound(TWO_STATE, (1, 2), 0.0, 5.0))


def test_ldp_bounds_reject_early_times():
    with pytest.raises(TooEarlyError):
        ldp_probability_bound(TWO_STATE, (1, 2), 0.0, 0.5)
    with pytest.raises(TooEarlyError):
        ldp_varadhan_bound(TWO_STATE, (1, 2), 0.0, 0.99)


# ---------------------------------------------------------------------------
# discrete rescaled variational quantity
# ---------------------------------------------------------------------------

def test_chi_discrete_zero_functional():
    for alpha in (1.0, 2.5):
        value = rescaled_chi_discrete(2, alpha, lambda v: 0.0, tol=1e-8, seed=1)
        assert abs(value) < 1e-10


def test_chi_discrete_linear_delta_matches_dense_grid():
    alpha = 1.5
    weight = 0.8

    def F(values):
        return weight * values[1]  # delta at the origin of the 3-site box

    value = rescaled_chi_discrete(1, alpha, F, tol=1e-9, seed=2)

    # exhaustive oracle over the 2-simplex
    grid = np.linspace(0.0, 1.0, 501)
    best = np.inf
    for m0 in grid:
        for m1 in grid:
            m2 = 1.0 - m0 - m1
            if m2 < 0:
                continue
            dirichlet = (math.sqrt(m0) - math.sqrt(m1)) ** 2 + (
                math.sqrt(m1) - math.sqrt(m2)) ** 2
            best = min(best, alpha**2 * dirichlet - weight * alpha * m1)
    assert value == pytest.approx(best, abs=2e-5)


def test_chi_discrete_gradient_path_matches_numeric():
    def F(values):
        return 0.3 * float(values.sum() ** 2)

    def grad_F(values):
        return 0.6 * values.sum() * np.ones_like(values)

    v1 = rescaled_chi_discrete(1, 1.2, F, tol=1e-8, seed=3)
    v2 = rescaled_chi_discrete(1, 1.2, F, tol=1e-8, seed=3, grad_F=grad_F)
    assert v1 == pytest.approx(v2, abs=1e-7)
