"""The joint local-time density of a finite-range Markov chain.

For a conservative generator A, a finite subset R, sites a, b in R and a
strictly positive local-time vector l on R, the density of the local times on
the event {range = R, endpoint = b} factors as

    rho(l) = exp(sum_x A[x,x] l_x) * det_ab(-B + d/dl) G(l),

where B is the off-diagonal part of A on R, det_ab is the (b,a) cofactor
(replace row b and column a by a unit pair), and G is the torus average

    G(l) = integral over [0,2pi]^R of
           exp(sum_{x,y} B[x,y] sqrt(l_x l_y) e^{i(th_x - th_y)}) dth/(2pi)^R.

Three independent evaluations are provided:

* :func:`density` - expand G as a power series over balanced integer flows
  (only balanced monomials survive the circle averages), apply the cofactor
  operator in closed form, and certify the truncation remainder;
* :func:`density_quadrature` - the derivative-free cofactor-inside-the-
  integral form, evaluated by tensor-product periodic trapezoidal quadrature;
* :func:`density_tridiagonal` - the nearest-neighbor product formula, one
  scalar edge kernel (or its derivative) per interval edge.

The density depends only on the rates inside R x R; everything here slices
the generator accordingly.
"""

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from .bessel import edge_kernel, edge_kernel_d
from .chain import Generator
from .errors import (
    DomainError,
    NonConvergedTruncationError,
    NotIntervalError,
    NotTridiagonalError,
    ResidualImaginaryError,
)
from .flows import DEFAULT_FLOW_CAP, FlowTable, flow_table

MIN_LOCAL_TIME = 1e-12
_ORDER_SCHEDULE = (8, 12, 18, 26, 36, 48, 64, 84, 110, 140)


@dataclass
class SimplexPoint:
    """A strictly positive local-time vector on an ordered range."""

    range: Tuple
    values: np.ndarray
    total: float

    @classmethod
    def from_values(cls, range_: Sequence, values) -> "SimplexPoint":
        range_ = tuple(range_)
        if isinstance(values, dict):
            vec = np.array([float(values[x]) for x in range_])
        else:
            vec = np.asarray(values, dtype=float)
            if vec.shape != (len(range_),):
                raise ValueError("local-time vector does not match the range")
        if np.any(vec < MIN_LOCAL_TIME):
            raise DomainError(
                f"local times must exceed {MIN_LOCAL_TIME}; got min {vec.min():.3e}"
            )
        return cls(range=range_, values=vec, total=float(vec.sum()))


@dataclass
class SeriesValue:
    """A truncated series value with a certified remainder bound."""

    value: float
    tail_bound: float
    order: int


@dataclass
class DensityEvaluation:
    """Density value together with its truncation certificate."""

    value: float
    error_bound: float
    order: int


def _coerce_point(R: Sequence, l) -> SimplexPoint:
    if isinstance(l, SimplexPoint):
        if tuple(l.range) != tuple(R):
            raise ValueError("SimplexPoint range does not match R")
        return l
    return SimplexPoint.from_values(R, l)


# ---------------------------------------------------------------------------
# cofactors
# ---------------------------------------------------------------------------

def replaced_matrix(M: np.ndarray, a: int, b: int) -> np.ndarray:
    """Row b and column a replaced by the (b,a) unit pair."""
    N = np.array(M, copy=True)
    N[b, :] = 0.0
    N[:, a] = 0.0
    N[b, a] = 1.0
    return N


def cofactor(M: np.ndarray, a: int, b: int) -> float:
    """The (b,a) cofactor of M: det of the replaced matrix.

    ``a`` and ``b`` index rows/columns of M.  Evaluated by LU with partial
    pivoting; the matrices here are small.
    """
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1]:
        raise ValueError("cofactor needs a square matrix")
    return float(np.linalg.det(replaced_matrix(M, a, b)))


def cofactor_subset_weights(
    B: np.ndarray, a: int, b: int
) -> Dict[Tuple[int, ...], float]:
    """Coefficients of the cofactor differential operator det_ab(-B + d/dl).

    Expanding the cofactor of the operator matrix gives

        det_ab(-B + d/dl) = sum over Q subset of R\\{a,b} of
                            det_ab^(R\\Q)(-B) * prod_{x in Q} d/dl_x,

    so each subset Q carries the cofactor of -B restricted to its complement.
    Returns {Q (sorted positions): weight}, dropping exact zero weights.
    """
    r = B.shape[0]
    others = [x for x in range(r) if x != a and x != b]
    weights: Dict[Tuple[int, ...], float] = {}
    for size in range(len(others) + 1):
        for Q in combinations(others, size):
            keep = [x for x in range(r) if x not in Q]
            sub = -B[np.ix_(keep, keep)]
            w = cofactor(sub, keep.index(a), keep.index(b))
            if w != 0.0:
                weights[Q] = w
    return weights


@dataclass
class CofactorOperator:
    """The differential operator det_ab(-B + d/dl) in expanded form: the
    matrix part -B plus one scalar weight per derivative subset."""

    matrix: np.ndarray                      # -B over R
    a: int
    b: int
    weights: Dict[Tuple[int, ...], float]   # Q -> det over the complement of Q


def cofactor_operator(B: np.ndarray, a: int, b: int) -> CofactorOperator:
    B = np.asarray(B, dtype=float)
    return CofactorOperator(matrix=-B, a=a, b=b,
                            weights=cofactor_subset_weights(B, a, b))


# ---------------------------------------------------------------------------
# balanced-flow series
# ---------------------------------------------------------------------------

def _tail_sum(q: int, S: float, n0: int) -> float:
    """Upper bound on sum over N > n0 of N^q S^N / N!."""
    if S <= 0.0:
        return 0.0
    N = n0 + 1
    log_t = q * math.log(N) + N * math.log(S) - math.lgamma(N + 1.0)
    if log_t > 700.0:  # far from converged; report a huge bound
        return math.inf
    t = math.exp(log_t)
    total = 0.0
    while t > 0.0:
        total += t
        ratio = ((N + 1) / N) ** q * S / (N + 1)
        if ratio < 0.9:
            # ratio is decreasing in N, so a geometric majorant closes the sum
            total += t * ratio / (1.0 - ratio)
            break
        N += 1
        t *= ratio
    return total


def _series_support(Btilde: np.ndarray) -> Tuple[Tuple[int, int], ...]:
    r = Btilde.shape[0]
    return tuple(
        (x, y) for x in range(r) for y in range(r) if x != y and Btilde[x, y] != 0.0
    )


def _series_eval(
    table: FlowTable,
    edge_weights: np.ndarray,
    l: np.ndarray,
    Q: Tuple[int, ...],
) -> float:
    """Sum the flow series with the Q-derivatives applied in closed form.

    Each balanced flow contributes prod_e w_e^{n_e}/n_e! times the monomial
    prod_x l_x^{m_x} with m_x the out-degree; a derivative in x turns that
    into m_x l_x^{m_x - 1} exactly.
    """
    counts = table.counts
    if np.iscomplexobj(edge_weights):
        # complex weights: exp(n log w) reproduces w^n exactly
        log_w = np.log(edge_weights.astype(complex))
        phases = np.ones(table.n_flows, dtype=complex)
    else:
        with np.errstate(divide="ignore"):
            log_w = np.where(edge_weights != 0.0, np.log(np.abs(edge_weights)), 0.0)
        phases = np.ones(table.n_flows)
        neg = edge_weights < 0.0
        if np.any(neg):
            phases = np.where((counts[:, neg].sum(axis=1) % 2) == 1, -1.0, 1.0)
    log_coef = counts @ log_w - table.log_count_factorials
    log_mono = table.out_degree @ np.log(l)
    terms = phases * np.exp(log_coef + log_mono)
    if Q:
        deg = table.out_degree[:, list(Q)].astype(float)
        terms = terms * deg.prod(axis=1) / np.prod(l[list(Q)])
    total = terms.sum()
    if np.iscomplexobj(total):
        return complex(total)
    return float(total)


def torus_series(
    Btilde: np.ndarray,
    l,
    derivative_set: Iterable[int] = (),
    max_total: int = 40,
    flow_cap: int = DEFAULT_FLOW_CAP,
) -> SeriesValue:
    """Derivatives of the torus average, as a certified balanced-flow series.

    Evaluates prod_{x in Q} d/dl_x applied to the circle average of
    exp(sum_{x,y} Btilde[x,y] sqrt(l_x l_y) e^{i(th_x - th_y)}), truncated at
    total flow count ``max_total``.  Signed or complex entries are accepted
    when the derivative set is empty (each surviving term is still a
    monomial, and the value may then be complex); entries on the support must
    be nonzero.

    The remainder certificate majorizes the dropped terms by the full
    unbalanced series: with S = sum |Btilde[x,y]| sqrt(l_x l_y), the tail of
    the undifferentiated series is at most sum_{N > max_total} S^N/N!, and a
    derivative in x at most multiplies an order-N term by N / l_x.
    """
    Btilde = np.asarray(Btilde)
    if not np.iscomplexobj(Btilde):
        Btilde = Btilde.astype(float)
    r = Btilde.shape[0]
    l = np.asarray(l, dtype=float)
    Q = tuple(sorted(set(derivative_set)))
    if np.any(l <= 0.0) or (Q and np.any(l[list(Q)] < MIN_LOCAL_TIME)):
        raise DomainError("torus_series needs strictly positive local times")
    edges = _series_support(Btilde)
    if Q and any(all(x not in e for e in edges) for x in Q):
        # a derivative in a state untouched by the support kills every term
        return SeriesValue(value=0.0, tail_bound=0.0, order=max_total)
    table = flow_table(edges, r, max_total, flow_cap)
    w = np.array([Btilde[e] for e in edges])
    sq = np.sqrt(l)
    S = float(sum(abs(Btilde[x, y]) * sq[x] * sq[y] for (x, y) in edges))
    tail = _tail_sum(len(Q), S, max_total)
    if Q:
        tail /= float(np.prod(l[list(Q)]))
    value = _series_eval(table, w, l, Q)
    return SeriesValue(value=value, tail_bound=tail, order=max_total)


def apply_cofactor_operator(
    op: CofactorOperator,
    Btilde: np.ndarray,
    l,
    max_total: int = 40,
    flow_cap: int = DEFAULT_FLOW_CAP,
) -> SeriesValue:
    """Apply the expanded cofactor operator to the flow series of ``Btilde``.

    The operator weights come from its own matrix part; the series may carry
    conjugated weights ``Btilde``.  2^(|R|-2) subset terms at most.
    """
    value = 0.0
    tail = 0.0
    for Q, w in op.weights.items():
        part = torus_series(Btilde, l, Q, max_total, flow_cap)
        value += w * part.value
        tail += abs(w) * part.tail_bound
    return SeriesValue(value=value, tail_bound=tail, order=max_total)


# ---------------------------------------------------------------------------
# the density, three ways
# ---------------------------------------------------------------------------

def density_certified(
    gen: Generator,
    R: Sequence,
    a,
    b,
    l,
    tol: float = 1e-10,
    conjugation: Optional[Sequence] = None,
    flow_cap: int = DEFAULT_FLOW_CAP,
) -> DensityEvaluation:
    """Joint local-time density with a certified truncation bound.

    Canonical series evaluation: pull out the diagonal exp(sum A[x,x] l_x),
    apply the cofactor operator in -B to the balanced-flow series, and grow
    the truncation order until the certified remainder is below ``tol``.

    ``conjugation`` optionally replaces the series weights by
    r_x B[x,y] / r_y for a positive vector r on R (the operator weights keep
    the unconjugated -B); the result is r-independent.
    """
    point = _coerce_point(R, l)
    R = tuple(R)
    a_pos, b_pos = R.index(a), R.index(b)
    A = gen.submatrix(R)
    B = A.copy()
    np.fill_diagonal(B, 0.0)
    if conjugation is not None:
        rvec = np.asarray(conjugation, dtype=float)
        if rvec.shape != (len(R),) or np.any(rvec <= 0):
            raise ValueError("conjugation must be a positive vector on R")
        Btilde = B * rvec[:, None] / rvec[None, :]
    else:
        Btilde = B
    diag_factor = math.exp(float(np.dot(np.diag(A), point.values)))

    # the tail certificate is a closed formula, so the truncation order can be
    # chosen before any flow is enumerated
    lvec = point.values
    op = cofactor_operator(B, a_pos, b_pos)
    edges = _series_support(Btilde)
    sq = np.sqrt(lvec)
    S = float(sum(abs(Btilde[x, y]) * sq[x] * sq[y] for (x, y) in edges))

    def certified_tail(order: int) -> float:
        total = 0.0
        for Q, w in op.weights.items():
            if Q and any(all(x not in e for e in edges) for x in Q):
                continue
            part = _tail_sum(len(Q), S, order)
            if Q:
                part /= float(np.prod(lvec[list(Q)]))
            total += abs(w) * part
        return diag_factor * total

    for order in _ORDER_SCHEDULE:
        bound = certified_tail(order)
        if bound <= tol:
            part = apply_cofactor_operator(op, Btilde, lvec, order, flow_cap)
            return DensityEvaluation(
                value=diag_factor * part.value,
                error_bound=diag_factor * part.tail_bound,
                order=order,
            )
    raise NonConvergedTruncationError(
        f"certified tail {certified_tail(_ORDER_SCHEDULE[-1]):.3e} above tol "
        f"{tol:.3e} at order {_ORDER_SCHEDULE[-1]}"
    )


def density(
    gen: Generator,
    R: Sequence,
    a,
    b,
    l,
    tol: float = 1e-10,
    conjugation: Optional[Sequence] = None,
    flow_cap: int = DEFAULT_FLOW_CAP,
) -> float:
    """Joint density of the local times on {range = R, endpoint = b}.

    See :func:`density_certified` for the evaluation contract; this returns
    just the value.
    """
    return density_certified(gen, R, a, b, l, tol, conjugation, flow_cap).value


_QUAD_CHUNK = 65536


def _quadrature_value(
    A: np.ndarray, B: np.ndarray, l: np.ndarray, a: int, b: int, grid_size: int
) -> complex:
    r = A.shape[0]
    sq = np.sqrt(l)
    if r == 1:
        return complex(math.exp(A[0, 0] * l[0]))
    # the integrand depends on angle differences only, so one angle is pinned
    theta_1d = 2.0 * np.pi * np.arange(grid_size) / grid_size
    grids = np.meshgrid(*([theta_1d] * (r - 1)), indexing="ij")
    thetas = np.stack([g.ravel() for g in grids] + [np.zeros(grid_size ** (r - 1))], axis=1)
    total = 0.0 + 0.0j
    count = thetas.shape[0]
    for lo in range(0, count, _QUAD_CHUNK):
        th = thetas[lo : lo + _QUAD_CHUNK]
        phase = np.exp(1j * (th[:, :, None] - th[:, None, :]))  # (P, r, r)
        expo = np.einsum("xy,pxy->p", A * np.outer(sq, sq), phase)
        V = np.einsum("xz,pxz->px", B * (sq[None, :] / sq[:, None]), phase)
        M = np.broadcast_to(-B, (th.shape[0], r, r)).astype(complex).copy()
        M[:, np.arange(r), np.arange(r)] += V
        M[:, b, :] = 0.0
        M[:, :, a] = 0.0
        M[:, b, a] = 1.0
        total += np.sum(np.linalg.det(M) * np.exp(expo))
    return total / count


def density_quadrature(
    gen: Generator,
    R: Sequence,
    a,
    b,
    l,
    grid_size: int = 32,
    tol: Optional[float] = None,
) -> float:
    """Density via the derivative-free form: the cofactor moves inside the
    torus integral with a diagonal correction.

    The integrand is det_ab(-B + V(th, l)) exp(sum A[x,y] sqrt(l_x l_y)
    e^{i(th_x - th_y)}) with V(th, l)[x] = sum_z B[x,z] sqrt(l_z/l_x)
    e^{i(th_x - th_z)}, averaged over the torus by an equispaced (periodic
    trapezoidal) tensor grid, which is spectrally accurate for this analytic
    integrand.  If ``tol`` is given, the grid is doubled until two successive
    refinements agree to ``tol``.
    """
    point = _coerce_point(R, l)
    R = tuple(R)
    if len(R) > 4:
        raise ValueError("density_quadrature is limited to |R| <= 4")
    a_pos, b_pos = R.index(a), R.index(b)
    A = gen.submatrix(R)
    B = A.copy()
    np.fill_diagonal(B, 0.0)

    value = _quadrature_value(A, B, point.values, a_pos, b_pos, grid_size)
    if tol is not None:
        while grid_size <= 512:
            grid_size *= 2
            refined = _quadrature_value(A, B, point.values, a_pos, b_pos, grid_size)
            if abs(refined - value) <= tol:
                value = refined
                break
            value = refined
    if abs(value.imag) > 1e-8 * abs(value.real) + 1e-12:
        raise ResidualImaginaryError(
            f"imaginary residue {value.imag:.3e} against real part {value.real:.3e}"
        )
    return float(value.real)


def _integer_interval(R: Sequence) -> Tuple[int, ...]:
    try:
        R_int = tuple(int(x) for x in R)
    except (TypeError, ValueError):
        raise NotIntervalError(f"labels {R!r} are not integers")
    if any(int(x) != x for x in R):
        raise NotIntervalError(f"labels {R!r} are not integers")
    R_sorted = tuple(sorted(R_int))
    if any(R_sorted[i + 1] - R_sorted[i] != 1 for i in range(len(R_sorted) - 1)):
        raise NotIntervalError(f"{R!r} is not a contiguous integer interval")
    return R_sorted


def density_tridiagonal(gen: Generator, R: Sequence, a, b, l) -> float:
    """Density of a nearest-neighbor chain on an integer interval.

    For tridiagonal A the cofactor factorizes across the interval, so the
    density is a product of one scalar edge kernel per middle edge (between a
    and b, each weighted by the rightward rate across it) and one kernel
    derivative per outer edge, times the diagonal exponential.  O(|R|) kernel
    evaluations.  For unit-rate walks the middle rate factors are invisible;
    the two-state case pins them down: the density of one rightward crossing
    carries the rate of that jump.
    """
    point = _coerce_point(R, l)
    R_sorted = _integer_interval(R)
    if tuple(R) != R_sorted:
        point = SimplexPoint.from_values(
            R_sorted, {x: v for x, v in zip(R, point.values)}
        )
    a, b = int(a), int(b)
    if a > b:
        raise ValueError("density_tridiagonal requires a <= b")
    A = gen.submatrix(R_sorted)
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    r = len(R_sorted)
    band = np.abs(np.arange(r)[:, None] - np.arange(r)[None, :]) >= 2
    if np.any(off[band] != 0.0):
        raise NotTridiagonalError("generator has rates beyond nearest neighbors in R")

    lvec = point.values
    pos = {x: i for i, x in enumerate(R_sorted)}
    value = math.exp(float(np.dot(np.diag(A), lvec)))
    for x in R_sorted[:-1]:
        i = pos[x]
        c = A[i, i + 1] * A[i + 1, i]
        if x < a:
            value *= edge_kernel_d(c, lvec[i], lvec[i + 1])
        elif x < b:
            value *= A[i, i + 1] * edge_kernel(c, lvec[i], lvec[i + 1])
        else:  # x + 1 > b: derivative in the right coordinate
            value *= edge_kernel_d(c, lvec[i + 1], lvec[i])
    return value


def range_measure_density(gen: Generator, R: Sequence, a, b) -> "DensityOnSimplex":
    """Convenience handle: the density as a callable of free coordinates."""
    return DensityOnSimplex(gen, tuple(R), a, b)


@dataclass
class DensityOnSimplex:
    """Callable rho(l) with one coordinate eliminated against a fixed total.

    The surface measure on the simplex {l > 0, sum l = T} is Lebesgue measure
    in the coordinates R minus one designated site; which site is eliminated
    does not change integrals.
    """

    gen: Generator
    range: Tuple
    a: object
    b: object
    tol: float = 1e-10

    def __call__(self, free_values: Union[np.ndarray, Sequence], total: float,
                 eliminated=None) -> float:
        elim = self.range[-1] if eliminated is None else eliminated
        free_states = [x for x in self.range if x != elim]
        free = np.asarray(free_values, dtype=float)
        rest = total - float(free.sum())
        if rest < MIN_LOCAL_TIME or np.any(free < MIN_LOCAL_TIME):
            return 0.0
        values = {x: v for x, v in zip(free_states, free)}
        values[elim] = rest
        return density(self.gen, self.range, self.a, self.b, values, self.tol)
