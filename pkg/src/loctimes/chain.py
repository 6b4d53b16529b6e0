"""Conservative generators, finite restrictions, and exact path simulation.

A generator (Q-matrix) is a square rate matrix over an ordered, finite label
set: off-diagonal entries are nonnegative jump rates and every row sums to
zero.  Simulation is exact event-driven stepping: holding times are
exponential with the state's exit rate, local times are accumulated as exact
sojourn lengths, never via time discretization.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    BudgetExceededError,
    EmptySubsetError,
    NegativeRateError,
    NonConservativeError,
    TooSmallStateSpaceError,
    UnknownLabelError,
)

_CONSERVATIVE_TOL = 1e-12


@dataclass(eq=False)
class Generator:
    """A conservative rate matrix over an ordered finite label set."""

    states: Tuple
    rates: np.ndarray
    _index: Dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        if not self._index:
            self._index = {s: i for i, s in enumerate(self.states)}

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownLabelError(f"state {label!r} is not in the state set") from None

    def indices(self, labels: Iterable) -> np.ndarray:
        return np.array([self.index(x) for x in labels], dtype=int)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def off_diagonal(self) -> np.ndarray:
        """The off-diagonal part B of the rate matrix."""
        B = self.rates.copy()
        np.fill_diagonal(B, 0.0)
        return B

    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.rates)

    def submatrix(self, labels: Sequence) -> np.ndarray:
        """Rate matrix restricted to labels x labels (no re-conservation)."""
        idx = self.indices(labels)
        return self.rates[np.ix_(idx, idx)]

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.rates - self.rates.T) <= tol))


@dataclass(eq=False)
class RestrictedGenerator:
    """A generator conservatively restricted to a subset, plus the diagonal
    killing matrix of escape rates.  The identity

        restricted_rates[x, y] = base_rates[x, y] + killing[x, y]

    holds exactly on the subset (killing is diagonal)."""

    base: Generator
    subset: Tuple
    restricted: Generator
    killing: np.ndarray  # (r,) diagonal of escape rates

    @property
    def killing_matrix(self) -> np.ndarray:
        return np.diag(self.killing)


@dataclass
class PathSummary:
    """Local times, endpoint and range of one simulated trajectory."""

    local_times: Dict
    endpoint: object
    range: frozenset
    horizon: float

    def local_time_vector(self, states: Sequence) -> np.ndarray:
        return np.array([self.local_times.get(x, 0.0) for x in states])


@dataclass
class InverseLocalTimeResult:
    """Path stopped when the local time at the pivot first reaches ``level``."""

    path: PathSummary
    level: float
    pivot: object


def validate_generator(rates, states: Optional[Sequence] = None) -> Generator:
    """Validate a square rate matrix and return a :class:`Generator`.

    Off-diagonal entries must be nonnegative and the label set must have at
    least two elements.  An all-zero diagonal (with some positive off-diagonal
    entry) is treated as absent and recomputed as the negative off-diagonal
    row sum; otherwise the provided diagonal must satisfy the zero-row-sum
    condition to within 1e-12 relative.
    """
    A = np.array(rates, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"rate matrix must be square, got shape {A.shape}")
    n = A.shape[0]
    if states is None:
        states = tuple(range(n))
    else:
        states = tuple(states)
        if len(states) != n:
            raise ValueError("label set does not match the matrix dimension")
        if len(set(states)) != n:
            raise ValueError("state labels must be distinct")
    if n < 2:
        raise TooSmallStateSpaceError("a generator needs at least two states")

    off = A.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0):
        x, y = np.argwhere(off < 0)[0]
        raise NegativeRateError(
            f"negative rate {A[x, y]} from {states[x]!r} to {states[y]!r}"
        )

    row_sums = off.sum(axis=1)
    diag = np.diag(A)
    if np.all(diag == 0.0):
        # diagonal absent: force conservativeness
        A[np.arange(n), np.arange(n)] = -row_sums
    else:
        scale = np.maximum(1.0, np.abs(diag) + row_sums)
        bad = np.abs(diag + row_sums) > _CONSERVATIVE_TOL * scale
        if np.any(bad):
            x = int(np.argmax(bad))
            raise NonConservativeError(
                f"row {states[x]!r} sums to {diag[x] + row_sums[x]:.3e}, not 0"
            )
    return Generator(states=states, rates=A)


def generator_from_triples(
    states: Sequence,
    triples: Iterable[Tuple],
    diagonal: Optional[Mapping] = None,
) -> Generator:
    """Build a generator from (from, to, rate) triples; diagonal optional."""
    states = tuple(states)
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    A = np.zeros((n, n))
    for k, triple in enumerate(triples):
        try:
            src, dst, rate = triple
        except (TypeError, ValueError):
            raise ValueError(f"triple #{k} is not a (from, to, rate) triple: {triple!r}")
        if src not in index or dst not in index:
            raise UnknownLabelError(f"triple #{k} references unknown state: {triple!r}")
        if src == dst:
            raise ValueError(f"triple #{k} sets a diagonal entry; use 'diagonal'")
        A[index[src], index[dst]] = float(rate)
    if diagonal is not None:
        for label, value in diagonal.items():
            if label not in index:
                raise UnknownLabelError(f"diagonal references unknown state {label!r}")
            A[index[label], index[label]] = float(value)
    return validate_generator(A, states)


def srw_generator(lo: int, hi: int) -> Generator:
    """Continuous-time simple random walk on the integer interval [lo, hi].

    Unit rates to each nearest neighbor inside the window; the conservative
    diagonal is -2 at interior sites and -1 at the two ends (the walk never
    leaves the window)."""
    if hi <= lo:
        raise ValueError("need hi > lo")
    states = tuple(range(lo, hi + 1))
    n = len(states)
    A = np.zeros((n, n))
    for i in range(n - 1):
        A[i, i + 1] = 1.0
        A[i + 1, i] = 1.0
    return validate_generator(A, states)


def restrict(gen: Generator, subset: Sequence) -> RestrictedGenerator:
    """Conservative restriction of a generator to a subset of its states.

    The restricted matrix keeps the off-diagonal rates inside the subset and
    recomputes the diagonal so each row sums to zero; the killing diagonal
    collects the escape rates to the complement.
    """
    subset = tuple(subset)
    if not subset:
        raise EmptySubsetError("restriction subset is empty")
    if len(set(subset)) != len(subset):
        raise ValueError("restriction subset has repeated labels")
    idx = gen.indices(subset)
    r = len(subset)
    sub = gen.rates[np.ix_(idx, idx)].copy()
    off = sub.copy()
    np.fill_diagonal(off, 0.0)
    sub[np.arange(r), np.arange(r)] = -off.sum(axis=1)
    killing = -np.diag(gen.rates)[idx] - off.sum(axis=1)
    # guard against tiny negative values from float cancellation
    killing = np.where(np.abs(killing) < 1e-15, 0.0, killing)
    restricted = Generator(states=subset, rates=sub)
    return RestrictedGenerator(base=gen, subset=subset, restricted=restricted, killing=killing)


def _jump_distributions(gen: Generator):
    """Exit rates and per-state cumulative jump probabilities."""
    exit_rates = gen.exit_rates()
    B = gen.off_diagonal()
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(exit_rates[:, None] > 0, B / exit_rates[:, None], 0.0)
    return exit_rates, np.cumsum(P, axis=1)


def simulate_fixed_time(
    gen: Generator, start, T: float, rng: np.random.Generator
) -> PathSummary:
    """Simulate one trajectory on [0, T] and return its path summary.

    Holding time in x is Exponential(-A[x,x]); the jump goes to y with
    probability A[x,y]/(-A[x,x]).  A state with zero exit rate simply sits
    until the horizon.  The local times partition [0, T] exactly.
    """
    if T <= 0:
        raise ValueError("need T > 0")
    exit_rates, cum = _jump_distributions(gen)
    s = gen.index(start)
    t = 0.0
    local = np.zeros(gen.n_states)
    while True:
        rate = exit_rates[s]
        if rate <= 0.0:
            local[s] += T - t
            break
        hold = rng.exponential(1.0 / rate)
        if t + hold >= T:
            local[s] += T - t
            break
        local[s] += hold
        t += hold
        s = int(np.searchsorted(cum[s], rng.random(), side="right"))
    visited = frozenset(gen.states[i] for i in np.nonzero(local > 0)[0]) | {start}
    times = {gen.states[i]: float(local[i]) for i in range(gen.n_states)}
    return PathSummary(local_times=times, endpoint=gen.states[s], range=visited, horizon=T)


def simulate_inverse_local_time(
    gen: Generator,
    start,
    pivot,
    level: float,
    rng: np.random.Generator,
    max_jumps: int = 50_000_000,
) -> InverseLocalTimeResult:
    """Run until the local time at ``pivot`` first reaches ``level``.

    The sojourn at the pivot that crosses the level is truncated exactly at
    the level, so the returned local time at the pivot equals ``level`` and
    the clock stops mid-sojourn there (right-continuous inverse convention).
    """
    if level <= 0:
        raise ValueError("need level > 0")
    exit_rates, cum = _jump_distributions(gen)
    s = gen.index(start)
    b = gen.index(pivot)
    t = 0.0
    local = np.zeros(gen.n_states)
    jumps = 0
    while True:
        rate = exit_rates[s]
        if s == b:
            remaining = level - local[b]
            if rate <= 0.0:
                local[b] = level
                t += remaining
                break
            hold = rng.exponential(1.0 / rate)
            if hold >= remaining:
                local[b] = level
                t += remaining
                break
            local[b] += hold
            t += hold
        else:
            if rate <= 0.0:
                raise BudgetExceededError(
                    f"absorbed in {gen.states[s]!r} before reaching level at the pivot"
                )
            hold = rng.exponential(1.0 / rate)
            local[s] += hold
            t += hold
        s = int(np.searchsorted(cum[s], rng.random(), side="right"))
        jumps += 1
        if jumps > max_jumps:
            raise BudgetExceededError(f"exceeded {max_jumps} jumps; pivot likely unreachable")
    visited = frozenset(gen.states[i] for i in np.nonzero(local > 0)[0]) | {start}
    times = {gen.states[i]: float(local[i]) for i in range(gen.n_states)}
    # the stop occurs while sitting at the pivot
    path = PathSummary(local_times=times, endpoint=pivot, range=visited, horizon=float(t))
    return InverseLocalTimeResult(path=path, level=level, pivot=pivot)
