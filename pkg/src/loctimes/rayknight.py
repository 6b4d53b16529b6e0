"""Spatial Markov description of local-time profiles at inverse local times.

For unit-rate nearest-neighbor walk on the integers stopped when the local
time at a pivot site b first reaches h, the profile of local times is, in the
spatial variable, a Markov chain: inward from the pivot it steps with the
transition density

    f(h1, h2) = exp(-h1 - h2) I0(2 sqrt(h1 h2)),

and outward (beyond the pivot, and below the start) with the kernel

    P*(h1, .) = exp(-h1) delta_0 + exp(-h1 - h2) sqrt(h1/h2) I1(2 sqrt(h1 h2)) dh2,

absorbed at zero.  Both kernels are Poisson mixtures of Gamma laws:
f(h1, .) is Gamma(K+1, 1) and P*(h1, .) is Gamma(K, 1) with K ~ Poisson(h1)
(Gamma(0, 1) read as the point mass at 0), which is how the samplers draw
exactly.
"""

import math
from typing import Dict, Optional, Tuple

import numpy as np

from .bessel import bessel_i0, bessel_i1
from .chain import Generator, srw_generator
from .density import _coerce_point, density
from .errors import DomainError, NotIntervalError, NotSRWError


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def rk_inner_density(h1: float, h2: float) -> float:
    """Transition density of the inner (pivot-to-start) profile chain."""
    if h1 < 0 or h2 < 0:
        raise DomainError("kernel arguments must be nonnegative")
    return math.exp(-h1 - h2) * bessel_i0(2.0 * math.sqrt(h1 * h2))


def rk_outer_atom(h1: float) -> float:
    """Mass of the absorbing atom at zero of the outer kernel."""
    if h1 < 0:
        raise DomainError("kernel arguments must be nonnegative")
    return math.exp(-h1)


def rk_outer_density(h1: float, h2: float) -> float:
    """Absolutely continuous part of the outer kernel on (0, infinity)."""
    if h1 < 0 or h2 <= 0:
        raise DomainError("need h1 >= 0 and h2 > 0")
    if h1 == 0.0:
        return 0.0
    return math.exp(-h1 - h2) * math.sqrt(h1 / h2) * bessel_i1(2.0 * math.sqrt(h1 * h2))


# ---------------------------------------------------------------------------
# exact samplers (Poisson-Gamma mixtures)
# ---------------------------------------------------------------------------

def _inner_step(cur: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    K = rng.poisson(cur)
    return rng.gamma(K + 1.0)


def _outer_step(cur: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    K = rng.poisson(cur)
    # Gamma with shape 0 is the point mass at 0: the chain is absorbed
    return rng.gamma(K.astype(float))


def sample_rk_profile_batch(
    b: int, h: float, window: int, n: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """n independent profiles on sites -window..b+window, one row each.

    The inner chain runs from the pivot down to 0; the right outer chain
    starts at the pivot value h, the left outer chain at the inner chain's
    endpoint; the three chains use independent substreams.
    """
    if b < 1 or h <= 0 or window < 0:
        raise ValueError("need b >= 1, h > 0, window >= 0")
    inner_rng, right_rng, left_rng = rng.spawn(3)
    sites = np.arange(-window, b + window + 1)
    values = np.zeros((n, len(sites)))
    col = {s: i for i, s in enumerate(sites)}

    cur = np.full(n, float(h))
    values[:, col[b]] = cur
    for x in range(b - 1, -1, -1):
        cur = _inner_step(cur, inner_rng)
        values[:, col[x]] = cur

    cur = np.full(n, float(h))
    for x in range(b + 1, b + window + 1):
        cur = _outer_step(cur, right_rng)
        values[:, col[x]] = cur

    cur = values[:, col[0]].copy()
    for x in range(-1, -window - 1, -1):
        cur = _outer_step(cur, left_rng)
        values[:, col[x]] = cur
    return sites, values


def sample_rk_profile(
    b: int, h: float, window: int, rng: np.random.Generator
) -> Dict[int, float]:
    """One local-time profile at the inverse local time, site -> value."""
    sites, values = sample_rk_profile_batch(b, h, window, 1, rng)
    return {int(s): float(v) for s, v in zip(sites, values[0])}


# ---------------------------------------------------------------------------
# fixed-time product identity
# ---------------------------------------------------------------------------

def _check_srw_on_interval(gen: Generator, R: Tuple[int, ...]) -> np.ndarray:
    """Escape rates of a unit-rate nearest-neighbor generator on interval R."""
    A = gen.submatrix(R)
    r = len(R)
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    for i in range(r):
        for j in range(r):
            expect = 1.0 if abs(i - j) == 1 else 0.0
            if i != j and abs(off[i, j] - expect) > 1e-12:
                raise NotSRWError(
                    f"rate {off[i, j]} from {R[i]} to {R[j]} is not unit nearest-neighbor"
                )
    escape = -np.diag(A) - off.sum(axis=1)
    for i in range(r):
        interior = 0 < i < r - 1
        allowed = (0.0,) if interior else (0.0, 1.0)
        if min(abs(escape[i] - v) for v in allowed) > 1e-12:
            raise NotSRWError(
                f"escape rate {escape[i]} at {R[i]} is not unit-rate nearest-neighbor"
            )
    return np.where(np.abs(escape) < 1e-12, 0.0, 1.0)


def rk_fixed_time_check(
    R, a: int, b: int, l, generator: Optional[Generator] = None
) -> Tuple[float, float]:
    """Evaluate both sides of the fixed-time product identity.

    Returns (density-engine value, kernel-product value).  The kernel product
    chains outer density factors from a down and from b up, inner density
    factors between a and b, and an absorption atom exp(-l_end) for each
    interval end from which the walk can escape (end escape rates are read
    off the generator; the default is the escape-free walk on R itself).
    """
    R_sorted = tuple(sorted(int(x) for x in R))
    if any(R_sorted[i + 1] - R_sorted[i] != 1 for i in range(len(R_sorted) - 1)):
        raise NotIntervalError(f"{R!r} is not a contiguous integer interval")
    a, b = int(a), int(b)
    if not (R_sorted[0] <= a <= b <= R_sorted[-1]):
        raise ValueError("need a <= b inside R")
    if generator is None:
        if len(R_sorted) == 1:
            raise ValueError("the default generator needs |R| >= 2")
        generator = srw_generator(R_sorted[0], R_sorted[-1])
    escape = _check_srw_on_interval(generator, R_sorted)

    point = _coerce_point(R, l)
    lvec = {x: v for x, v in zip(R, point.values)}
    rho = density(generator, R_sorted, a, b, {x: lvec[x] for x in R_sorted}, tol=1e-13)

    kernel = math.exp(-float(sum(escape[i] * lvec[x] for i, x in enumerate(R_sorted))))
    for x in range(R_sorted[0] + 1, a + 1):          # left outer chain
        kernel *= rk_outer_density(lvec[x], lvec[x - 1])
    for x in range(a, b):                            # inner block
        kernel *= rk_inner_density(lvec[x], lvec[x + 1])
    for x in range(b, R_sorted[-1]):                 # right outer chain
        kernel *= rk_outer_density(lvec[x], lvec[x + 1])
    return rho, kernel
