"""Rate functions, the pointwise density bound, and finite-time LDP bounds.

The occupation-measure rate function of a chain with generator A is

    I_A(mu) = -inf { <A g, mu/g> : g positive },

which collapses to the Dirichlet form <sqrt(mu), (-A) sqrt(mu)> when A is
symmetric.  The general case is solved by substituting g = e^u: the objective
becomes concave in u, and a damped Newton iteration with the gauge u = 0
pinned at the first support state finds the optimum.
"""

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .chain import Generator
from .density import _coerce_point
from .errors import (
    NotConvergedError,
    NotSymmetricError,
    TooEarlyError,
    UnboundedRateError,
)


# ---------------------------------------------------------------------------
# eta: the Hadamard-bound constant
# ---------------------------------------------------------------------------

def eta(gen: Generator, R: Sequence) -> float:
    """Maximum absolute row/column sum of the off-diagonal part over R,
    floored at 1.  Nondecreasing in R."""
    R = tuple(R)
    if not R:
        raise ValueError("eta needs a nonempty subset")
    B = gen.submatrix(R)
    np.fill_diagonal(B, 0.0)
    absB = np.abs(B)
    return float(max(absB.sum(axis=1).max(), absB.sum(axis=0).max(), 1.0))


# ---------------------------------------------------------------------------
# rate functions
# ---------------------------------------------------------------------------

def _coerce_probability(gen: Generator, mu) -> np.ndarray:
    if isinstance(mu, dict):
        vec = np.array([float(mu.get(x, 0.0)) for x in gen.states])
    else:
        vec = np.asarray(mu, dtype=float)
        if vec.shape != (gen.n_states,):
            raise ValueError("mu does not match the state set")
    if np.any(vec < 0):
        raise ValueError("mu must be nonnegative")
    if abs(vec.sum() - 1.0) > 1e-9:
        raise ValueError(f"mu must sum to 1, got {vec.sum():.12f}")
    return vec


def rate_symmetric(gen: Generator, mu) -> float:
    """Dirichlet-form value <sqrt(mu), (-A) sqrt(mu)> for symmetric A."""
    if not gen.is_symmetric():
        raise NotSymmetricError("rate_symmetric needs a symmetric generator")
    vec = _coerce_probability(gen, mu)
    s = np.sqrt(vec)
    return float(s @ (-gen.rates) @ s)


@dataclass
class RateSolution:
    """Value and gauge-fixed minimizer of the occupation rate function."""

    value: float
    minimizer: Dict
    iterations: int
    final_gradient_norm: float


def _support_objective(A_sub: np.ndarray, mu_sub: np.ndarray):
    """Concave objective J(u) = -sum_x mu_x sum_y A[x,y] e^{u_y - u_x} and its
    derivatives, on the support submatrix."""
    offdiag = A_sub.copy()
    np.fill_diagonal(offdiag, 0.0)
    const = -float(np.dot(mu_sub, np.diag(A_sub)))

    def pieces(u: np.ndarray):
        W = mu_sub[:, None] * offdiag * np.exp(u[None, :] - u[:, None])
        J = const - W.sum()
        grad = W.sum(axis=1) - W.sum(axis=0)  # out minus in at each state
        C = W + W.T
        H = C - np.diag(C.sum(axis=1))
        return J, grad, H

    return pieces


def rate_general(
    gen: Generator, mu, tol: float = 1e-10, max_iter: int = 200
) -> RateSolution:
    """Variational rate function for a general conservative generator.

    Maximizes the concave objective in u = log g over the support of mu with
    u pinned to 0 at the first support state; a damped Newton iteration with
    backtracking converges to the global value.  The support submatrix must
    be irreducible (strongly connected through positive rates), otherwise the
    optimum escapes to infinity and ``UnboundedRateError`` is raised.
    """
    vec = _coerce_probability(gen, mu)
    support = np.nonzero(vec > 0)[0]
    labels = [gen.states[i] for i in support]
    A_sub = gen.rates[np.ix_(support, support)]
    mu_sub = vec[support]
    m = len(support)
    if m == 1:
        return RateSolution(
            value=float(-A_sub[0, 0] * mu_sub[0]),
            minimizer={labels[0]: 1.0},
            iterations=0,
            final_gradient_norm=0.0,
        )

    adjacency = csr_matrix((A_sub > 0).astype(int))
    n_comp, _ = connected_components(adjacency, directed=True, connection="strong")
    if n_comp > 1:
        raise UnboundedRateError(
            "support of mu is not irreducible under the generator"
        )

    pieces = _support_objective(A_sub, mu_sub)
    # warm start g = sqrt(mu), exact for symmetric generators
    u = 0.5 * (np.log(mu_sub) - np.log(mu_sub[0]))
    J, grad, H = pieces(u)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        g_red = grad[1:]
        gnorm = float(np.linalg.norm(g_red))
        if gnorm <= tol:
            break
        H_red = H[1:, 1:]
        try:
            step = np.linalg.solve(-H_red, g_red)
        except np.linalg.LinAlgError:
            ridge = 1e-12 * max(1.0, float(np.trace(-H_red)))
            step = np.linalg.solve(-H_red + ridge * np.eye(m - 1), g_red)
        alpha = 1.0
        while alpha > 1e-14:
            u_try = u.copy()
            u_try[1:] += alpha * step
            J_try, grad_try, H_try = pieces(u_try)
            if J_try >= J + 1e-4 * alpha * float(g_red @ step):
                u, J, grad, H = u_try, J_try, grad_try, H_try
                break
            alpha *= 0.5
        else:
            break
    gnorm = float(np.linalg.norm(grad[1:]))
    if gnorm > tol:
        raise NotConvergedError(
            f"rate_general: gradient norm {gnorm:.3e} above tol after {iterations} iterations"
        )
    g = np.exp(u - u[0])
    return RateSolution(
        value=float(J),
        minimizer={lab: float(gx) for lab, gx in zip(labels, g)},
        iterations=iterations,
        final_gradient_norm=gnorm,
    )


# ---------------------------------------------------------------------------
# pointwise density bound
# ---------------------------------------------------------------------------

def density_upper_bound(
    gen: Generator, R: Sequence, a, b, l, rate_tol: float = 1e-10
) -> float:
    """Pointwise upper bound on the joint local-time density.

    With T the total mass, mu = l/T and g the rate-function minimizer,

        bound = e^{-T I_A(mu)} * prod_{x in R minus {a,b}} sqrt(T/l_x)
                * eta^{|R|-1} * exp(correction),

    where the correction exponent is [1/eta + 1/(4 eta^2 T)] times
    sum_{x,y} sqrt(l_x) g_y B[x,y] / (sqrt(l_y) g_x).  When the rates on R
    are symmetric the minimizer is g = sqrt(mu), the conjugated weights
    collapse back to B, and the exponent is bounded by the coarser
    |R| [1 + 1/(4 eta T)] (equality for unit-rate complete supports); the
    sharper form is kept in both branches.
    """
    point = _coerce_point(R, l)
    R = tuple(R)
    T = point.total
    A = gen.submatrix(R)
    B = A.copy()
    np.fill_diagonal(B, 0.0)
    eta_R = eta(gen, R)
    lvec = point.values
    mu_full = {x: v / T for x, v in zip(R, lvec)}

    excluded = {a, b}
    log_prefactor = 0.5 * sum(
        math.log(T / lvec[i]) for i, x in enumerate(R) if x not in excluded
    )
    log_prefactor += (len(R) - 1) * math.log(eta_R)

    if np.allclose(A, A.T, atol=1e-12):
        rate = rate_symmetric_on_subset(gen, R, mu_full)
        correction = (1.0 / eta_R + 1.0 / (4.0 * eta_R**2 * T)) * float(B.sum())
    else:
        sol = rate_general(gen, mu_full, tol=rate_tol)
        rate = sol.value
        g = np.array([sol.minimizer[x] for x in R])
        sq = np.sqrt(lvec)
        btilde = B * (sq[:, None] / sq[None, :]) * (g[None, :] / g[:, None])
        correction = (1.0 / eta_R + 1.0 / (4.0 * eta_R**2 * T)) * float(btilde.sum())
    return math.exp(-T * rate + log_prefactor + correction)


def rate_symmetric_on_subset(gen: Generator, R: Sequence, mu) -> float:
    """Dirichlet form of sqrt(mu) for mu supported on R (uses rates on R x R
    only, which is all the rate function sees for such mu)."""
    R = tuple(R)
    A = gen.submatrix(R)
    if not np.allclose(A, A.T, atol=1e-12):
        raise NotSymmetricError("rates on R are not symmetric")
    if isinstance(mu, dict):
        vec = np.array([float(mu.get(x, 0.0)) for x in R])
    else:
        vec = np.asarray(mu, dtype=float)
    s = np.sqrt(vec)
    return float(s @ (-A) @ s)


# ---------------------------------------------------------------------------
# finite-time large-deviation bounds
# ---------------------------------------------------------------------------

def _ldp_error_terms(gen: Generator, S: Sequence, T: float) -> float:
    eta_S = eta(gen, S)
    s = len(tuple(S))
    return s * math.log(eta_S * math.sqrt(8.0 * math.e) * T) + math.log(s) + s / (4.0 * T)


def ldp_probability_bound(gen: Generator, S: Sequence, inf_rate: float, T: float) -> float:
    """Upper bound on log P(normalized local times in Gamma, range within S)
    for a symmetric generator:

        -T * inf_rate + |S| log(eta_S sqrt(8e) T) + log|S| + |S|/(4T),

    with inf_rate the infimum of the Dirichlet form over Gamma (supplied by
    the caller).  Valid for T >= 1.
    """
    if T < 1.0:
        raise TooEarlyError("the finite-time bound requires T >= 1")
    return -T * inf_rate + _ldp_error_terms(gen, S, T)


def ldp_varadhan_bound(gen: Generator, S: Sequence, sup_value: float, T: float) -> float:
    """Upper bound on log E[e^{T F(local times / T)}; range within S]:

        T * sup_value + |S| log(eta_S sqrt(8e) T) + log|S| + |S|/(4T),

    with sup_value = sup_mu [F(mu) - Dirichlet(mu)] supplied by the caller.
    """
    if T < 1.0:
        raise TooEarlyError("the finite-time bound requires T >= 1")
    return T * sup_value + _ldp_error_terms(gen, S, T)


# ---------------------------------------------------------------------------
# discrete variational quantity for rescaled local times
# ---------------------------------------------------------------------------

def _box_edges(radius: int, dim: int):
    sites = list(product(range(-radius, radius + 1), repeat=dim))
    index = {s: i for i, s in enumerate(sites)}
    edges = []
    for s in sites:
        for axis in range(dim):
            t = tuple(s[k] + (1 if k == axis else 0) for k in range(dim))
            if t in index:
                edges.append((index[s], index[t]))
    return sites, edges


def rescaled_chi_discrete(
    box_radius: int,
    alpha: float,
    F: Callable[[np.ndarray], float],
    tol: float = 1e-8,
    dim: int = 1,
    restarts: int = 8,
    seed: int = 0,
    grad_F: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_iter: int = 1000,
) -> float:
    """Minimize the discrete rescaled functional over the probability simplex
    of the box [-box_radius, box_radius]^dim:

        alpha^2 * (1/2) sum over ordered neighbor pairs (sqrt(mu_x)-sqrt(mu_y))^2
        - F(alpha^dim * mu).

    ``F`` receives the vector of rescaled step-density heights on the box
    sites (lexicographic site order).  mu is parameterized as a softmax of
    free variables and minimized by L-BFGS from ``restarts`` random starts
    (plus the uniform start); the best value with projected gradient norm
    below ``tol`` is returned.
    """
    sites, edges = _box_edges(box_radius, dim)
    m = len(sites)
    scale = float(alpha) ** dim
    rng = np.random.default_rng(seed)

    def dirichlet_and_grad(mu: np.ndarray):
        srt = np.sqrt(mu)
        val = 0.0
        grad = np.zeros(m)
        for (i, j) in edges:
            d = srt[i] - srt[j]
            val += d * d
            # d/dmu of (sqrt(mu_i)-sqrt(mu_j))^2, guarded at the boundary
            if srt[i] > 0:
                grad[i] += d / srt[i]
            if srt[j] > 0:
                grad[j] -= d / srt[j]
        return val, grad

    def f_and_grad_mu(mu: np.ndarray):
        fval = float(F(scale * mu))
        if grad_F is not None:
            gmu = scale * np.asarray(grad_F(scale * mu), dtype=float)
        else:
            gmu = np.zeros(m)
            h = 1e-7
            base = scale * mu
            for i in range(m):
                bumped_up = base.copy()
                bumped_up[i] += scale * h
                bumped_dn = base.copy()
                bumped_dn[i] -= scale * h
                gmu[i] = (float(F(bumped_up)) - float(F(bumped_dn))) / (2 * h)
        return fval, gmu

    def objective(w: np.ndarray):
        shifted = w - w.max()
        e = np.exp(shifted)
        mu = e / e.sum()
        dval, dgrad_mu = dirichlet_and_grad(mu)
        fval, fgrad_mu = f_and_grad_mu(mu)
        value = alpha**2 * dval - fval
        grad_mu = alpha**2 * dgrad_mu - fgrad_mu
        # softmax Jacobian: diag(mu) - mu mu^T
        grad_w = mu * (grad_mu - float(grad_mu @ mu))
        return value, grad_w

    starts = [np.zeros(m)] + [rng.normal(0.0, 1.0, m) for _ in range(restarts)]
    best = None
    for w0 in starts:
        res = minimize(
            objective, w0, jac=True, method="L-BFGS-B",
            options={"maxiter": max_iter, "gtol": tol * 0.1, "ftol": 1e-15},
        )
        _, gw = objective(res.x)
        gnorm = float(np.linalg.norm(gw))
        if gnorm <= tol and (best is None or res.fun < best):
            best = float(res.fun)
    if best is None:
        raise NotConvergedError(
            f"rescaled_chi_discrete: no restart reached gradient norm {tol}"
        )
    return best
