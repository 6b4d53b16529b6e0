"""Experiment orchestration: Monte Carlo law checks, bound-dominance runs,
and bit-stable result emission.

Every experiment draws from a generator seeded by the config, records the
seed and a hash of the fully resolved config in each emitted file, and keeps
all reductions in fixed order, so replaying a config reproduces each number
exactly.
"""

import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.linalg import expm
from scipy.optimize import minimize
from scipy.stats import chi2 as chi2_dist

from .chain import Generator, generator_from_triples, srw_generator, validate_generator
from .density import MIN_LOCAL_TIME, DensityOnSimplex
from .errors import ConfigParseError, InsufficientConditionedError, NotSymmetricError
from .montecarlo import (
    BatchPaths,
    sample_paths_fixed_time,
    sample_paths_inverse_local_time,
)
from .rates import eta, ldp_probability_bound, ldp_varadhan_bound, rate_symmetric_on_subset
from .rayknight import sample_rk_profile_batch


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigParseError(
            f"config {path} is not valid JSON at line {exc.lineno}, column {exc.colno}"
        ) from None


def generator_from_config(spec, base_dir: str = ".") -> Generator:
    """Build a generator from a config object or a path to one.

    Accepted forms: {"srw": [lo, hi]}, {"states": [...], "rates":
    [[from, to, rate], ...], "diagonal": {...}} (diagonal optional), or
    {"states": [...], "matrix": [[...], ...]}.
    """
    if isinstance(spec, str):
        spec = load_config(os.path.join(base_dir, spec) if not os.path.isabs(spec) else spec)
    if not isinstance(spec, dict):
        raise ConfigParseError(f"generator spec must be an object, got {type(spec).__name__}")
    try:
        if "srw" in spec:
            lo, hi = spec["srw"]
            return srw_generator(int(lo), int(hi))
        states = spec["states"]
        if "matrix" in spec:
            return validate_generator(spec["matrix"], states)
        triples = spec["rates"]
        diagonal = spec.get("diagonal")
        if diagonal is not None:
            diagonal = {_match_label(states, k): v for k, v in diagonal.items()}
        return generator_from_triples(states, triples, diagonal)
    except ConfigParseError:
        raise
    except KeyError as exc:
        raise ConfigParseError(f"generator spec is missing field {exc}") from None
    except Exception as exc:
        raise ConfigParseError(f"generator spec: {exc}") from None


def _match_label(states, key):
    """JSON object keys are strings; map them back onto the label set."""
    if key in states:
        return key
    for s in states:
        if str(s) == key:
            return s
    raise ConfigParseError(f"diagonal key {key!r} is not a state label")


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_csv(path: str, meta: Dict, columns: Sequence[str], rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    meta_line = ", ".join(f"{k}={v}" for k, v in meta.items())
    with open(path, "w") as fh:
        fh.write(f"# {meta_line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# shared statistics helpers
# ---------------------------------------------------------------------------

def merge_cells(observed: np.ndarray, expected: np.ndarray, min_expected: float = 5.0):
    """Merge scan-order neighbors until every expected count reaches the
    chi-square validity floor."""
    obs_m: List[float] = []
    exp_m: List[float] = []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += float(o)
        acc_e += float(e)
        if acc_e >= min_expected:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0.0 or acc_o > 0.0:
        if exp_m:
            obs_m[-1] += acc_o
            exp_m[-1] += acc_e
        else:
            obs_m, exp_m = [acc_o], [acc_e]
    return np.array(obs_m), np.array(exp_m)


def chi_square_shape_test(observed: np.ndarray, expected_masses: np.ndarray,
                          min_expected: float = 5.0):
    """Chi-square of observed counts against expected masses, normalized to
    the observed total (a pure shape comparison).  Returns (stat, dof,
    p-value, worst-cell z)."""
    observed = np.asarray(observed, dtype=float)
    expected_masses = np.asarray(expected_masses, dtype=float)
    # normalize to expected counts before merging so the validity floor
    # applies to counts, not to raw masses
    expected = expected_masses * (observed.sum() / expected_masses.sum())
    obs, exp = merge_cells(observed, expected, min_expected)
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = max(len(obs) - 1, 1)
    worst = float(np.max(np.abs(obs - exp) / np.sqrt(exp)))
    return stat, dof, float(chi2_dist.sf(stat, dof)), worst


def wilson_upper(successes: int, total: int, z: float = 2.3263478740408408) -> float:
    """One-sided 99% upper confidence limit for a binomial proportion."""
    if total == 0:
        return 1.0
    p = successes / total
    denom = 1.0 + z * z / total
    center = p + z * z / (2 * total)
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total))
    return min(1.0, (center + half) / denom)


def two_state_event_probabilities(T: float) -> Tuple[float, float, float]:
    """Exact (no-jump, range-full-and-switched, range-full-and-returned)
    probabilities for the canonical two-state unit-rate chain."""
    return (
        math.exp(-T),
        math.exp(-T) * math.sinh(T),
        math.exp(-T) * (math.cosh(T) - 1.0),
    )


def is_canonical_two_state(gen: Generator) -> bool:
    return gen.n_states == 2 and np.allclose(
        gen.off_diagonal(), np.array([[0.0, 1.0], [1.0, 0.0]])
    )


def conditioning_mask(batch: BatchPaths, gen: Generator, R: Sequence, b) -> np.ndarray:
    """Paths whose visited set equals R exactly and whose endpoint is b."""
    idx_R = gen.indices(R)
    b_idx = gen.index(b)
    others = np.setdiff1d(np.arange(gen.n_states), idx_R)
    visited = batch.local_times > 0.0
    mask = visited[:, idx_R].all(axis=1)
    if others.size:
        mask &= ~visited[:, others].any(axis=1)
    return mask & (batch.endpoints == b_idx)


# ---------------------------------------------------------------------------
# simplex cell integration
# ---------------------------------------------------------------------------

@dataclass
class SimplexHistogram:
    """Binned free coordinates of conditioned samples with expected masses."""

    range: Tuple
    eliminated: object
    edges: List[np.ndarray]
    counts: np.ndarray            # flattened, C order over the cell grid
    expected: np.ndarray          # integral of the density over each cell
    excluded_cells: int
    flagged_cells: int


def _cell_mass_midpoint(rho, lo: np.ndarray, hi: np.ndarray, total: float,
                        depth: int = 1, max_depth: int = 4):
    """Midpoint rule with one refinement (and more only when flagged)."""
    mid = 0.5 * (lo + hi)
    vol = float(np.prod(hi - lo))
    coarse = rho(mid, total) * vol
    fine = 0.0
    dim = len(lo)
    for corner in range(2 ** dim):
        shift = np.array([(corner >> k) & 1 for k in range(dim)], dtype=float)
        sub_lo = lo + 0.5 * shift * (hi - lo)
        sub_hi = sub_lo + 0.5 * (hi - lo)
        fine += rho(0.5 * (sub_lo + sub_hi), total) * float(np.prod(sub_hi - sub_lo))
    flagged = abs(fine - coarse) > 0.01 * max(abs(fine), 1e-300)
    if flagged and depth < max_depth:
        fine = 0.0
        for corner in range(2 ** dim):
            shift = np.array([(corner >> k) & 1 for k in range(dim)], dtype=float)
            sub_lo = lo + 0.5 * shift * (hi - lo)
            sub_hi = sub_lo + 0.5 * (hi - lo)
            part, _ = _cell_mass_midpoint(rho, sub_lo, sub_hi, total, depth + 1, max_depth)
            fine += part
        return fine, True
    return fine, flagged


def expected_cell_masses(rho: DensityOnSimplex, edges: List[np.ndarray], total: float):
    """Integrate the density over every cell of the free-coordinate grid.

    Cells wholly outside the open simplex are excluded (mass 0); cells cut by
    the simplex boundary are integrated with exact limits; interior cells use
    the midpoint rule refined once, with further refinement only when the two
    levels disagree by more than 1% of the cell mass.
    """
    dim = len(edges)
    shape = tuple(len(e) - 1 for e in edges)
    masses = np.zeros(shape)
    excluded = 0
    flagged = 0
    for idx in np.ndindex(*shape):
        lo = np.array([edges[k][idx[k]] for k in range(dim)])
        hi = np.array([edges[k][idx[k] + 1] for k in range(dim)])
        if lo.sum() >= total - MIN_LOCAL_TIME:
            excluded += 1
            continue
        if hi.sum() < total:  # interior cell
            mass, flag = _cell_mass_midpoint(rho, lo, hi, total)
            masses[idx] = mass
            flagged += int(flag)
            continue
        # straddling cell: integrate with the simplex boundary as a limit
        if dim == 1:
            top = min(hi[0], total - MIN_LOCAL_TIME)
            val, _ = integrate.quad(lambda x: rho(np.array([x]), total), lo[0], top, limit=200)
            masses[idx] = val
        elif dim == 2:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, _ = integrate.dblquad(
                    lambda y, x: rho(np.array([x, y]), total),
                    lo[0],
                    min(hi[0], total - MIN_LOCAL_TIME),
                    lambda x: lo[1],
                    lambda x: max(lo[1], min(hi[1], total - x - MIN_LOCAL_TIME)),
                    epsabs=1e-10,
                    epsrel=1e-8,
                )
            masses[idx] = val
        else:
            raise ValueError("cell integration supports at most 2 free coordinates")
    return masses, excluded, flagged


# ---------------------------------------------------------------------------
# experiment: Monte Carlo law of the local times
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass
class DensityCheckReport:
    histogram: SimplexHistogram
    n_samples: int
    n_conditioned: int
    chi2: float
    dof: int
    p_value: float
    worst_cell_z: float
    conditioning_mc: float
    conditioning_quadrature: float
    conditioning_z: float
    analytic: Optional[Dict[str, float]]
    checks: List[CheckResult] = field(default_factory=list)
    seed: Optional[int] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def verify_density_mc(
    gen: Generator,
    start,
    endpoint,
    range_: Sequence,
    T: float,
    n_samples: int,
    cells_per_axis: int = 7,
    seed: int = 0,
    eliminated=None,
    density_tol: float = 1e-9,
    p_threshold: float = 1e-3,
) -> DensityCheckReport:
    """Bin conditioned local times and compare with cell integrals of the
    density by a chi-square shape test; also compare the conditioning
    probability with the density normalization (and with the closed-form
    values for the canonical two-state chain)."""
    R = tuple(range_)
    if len(R) - 1 > 2:
        raise ValueError("default cell grid supports |R| <= 3")
    rng = np.random.default_rng(seed)
    batch = sample_paths_fixed_time(gen, start, T, n_samples, rng)
    mask = conditioning_mask(batch, gen, R, endpoint)
    n_cond = int(mask.sum())
    if n_cond < 1000:
        raise InsufficientConditionedError(
            f"only {n_cond} of {n_samples} samples hit the conditioning event"
        )

    elim = endpoint if eliminated is None else eliminated
    free_states = [x for x in R if x != elim]
    free_idx = gen.indices(free_states)
    values = batch.local_times[mask][:, free_idx]

    edges = [np.linspace(0.0, T, cells_per_axis + 1) for _ in free_states]
    counts, _ = np.histogramdd(values, bins=edges)

    rho = DensityOnSimplex(gen, R, start, endpoint, tol=density_tol)
    rho_call = lambda free, total: rho(free, total, eliminated=elim)
    masses, excluded, flagged = expected_cell_masses(rho_call, edges, T)

    stat, dof, p_value, worst = chi_square_shape_test(counts.ravel(), masses.ravel())

    p_mc = n_cond / n_samples
    p_quad = float(masses.sum())
    se = math.sqrt(max(p_quad * (1 - p_quad), 1e-300) / n_samples)
    z_cond = (p_mc - p_quad) / se

    checks = [
        CheckResult("chi_square_p_value", p_value > p_threshold, p_value, p_threshold),
        CheckResult("conditioning_probability_z", abs(z_cond) < 4.0, z_cond, 4.0),
    ]
    analytic = None
    if is_canonical_two_state(gen):
        no_jump, switched, returned = two_state_event_probabilities(T)
        target = switched if endpoint != start else returned
        se_t = math.sqrt(target * (1 - target) / n_samples)
        z_t = (p_mc - target) / se_t
        analytic = {
            "no_jump": no_jump,
            "switched": switched,
            "returned": returned,
            "z_analytic": z_t,
        }
        checks.append(CheckResult("conditioning_vs_analytic_z", abs(z_t) < 4.0, z_t, 4.0))

    hist = SimplexHistogram(
        range=R, eliminated=elim, edges=edges, counts=counts.ravel(),
        expected=masses.ravel(), excluded_cells=excluded, flagged_cells=flagged,
    )
    return DensityCheckReport(
        histogram=hist, n_samples=n_samples, n_conditioned=n_cond,
        chi2=stat, dof=dof, p_value=p_value, worst_cell_z=worst,
        conditioning_mc=p_mc, conditioning_quadrature=p_quad,
        conditioning_z=z_cond, analytic=analytic, checks=checks, seed=seed,
    )


# ---------------------------------------------------------------------------
# experiment: Ray-Knight distributional equivalence
# ---------------------------------------------------------------------------

@dataclass
class MomentComparison:
    site: int
    mean_direct: float
    mean_profile: float
    mean_z: float
    var_direct: float
    var_profile: float
    var_z: float


@dataclass
class RayKnightReport:
    pivot: int
    level: float
    n_samples: int
    moments: List[MomentComparison]
    atom_site_right: int
    atom_right_direct: float
    atom_right_profile: float
    atom_right_z: float
    atom_right_vs_exact_z: float
    atom_site_left: int
    atom_left_direct: float
    atom_left_profile: float
    atom_left_z: float
    independence_corr_direct: float
    independence_corr_profile: float
    checks: List[CheckResult] = field(default_factory=list)
    seed: Optional[int] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _mean_var_z(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    nx, ny = len(x), len(y)
    mz = (x.mean() - y.mean()) / math.sqrt(x.var(ddof=1) / nx + y.var(ddof=1) / ny)
    # moment-based standard error of the sample variance
    def var_se(v):
        c = v - v.mean()
        m2 = (c * c).mean()
        m4 = (c ** 4).mean()
        return math.sqrt(max(m4 - m2 * m2, 1e-300) / len(v))
    vz = (x.var(ddof=1) - y.var(ddof=1)) / math.sqrt(var_se(x) ** 2 + var_se(y) ** 2)
    return float(mz), float(vz)


def verify_rayknight_mc(
    pivot: int = 2,
    level: float = 1.0,
    n_samples: int = 200_000,
    seed: int = 0,
    sim_window: Tuple[int, int] = (-8, 10),
    profile_window: int = 10,
    compare_sites: Sequence[int] = (0, 1, 3),
    moment_z_threshold: float = 3.0,
    atom_z_threshold: float = 4.0,
) -> RayKnightReport:
    """Compare direct inverse-local-time simulation against the spatial
    Markov-chain profile sampler: per-site means and variances, absorption
    atom frequencies, and the independence of inner and outer randomness.

    The simulation window is a finite interval; truncating it leaves the law
    of the local times at the compared interior sites unchanged (excursions
    beyond the window return without touching them), so the window only needs
    to contain the compared sites with a margin.
    """
    rng_direct, rng_profile = [
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
    ]
    gen = srw_generator(*sim_window)
    batch = sample_paths_inverse_local_time(gen, 0, pivot, level, n_samples, rng_direct)
    direct = {x: batch.local_times[:, gen.index(x)] for x in gen.states}

    sites, values = sample_rk_profile_batch(pivot, level, profile_window, n_samples, rng_profile)
    col = {int(s): i for i, s in enumerate(sites)}
    profile = {x: values[:, col[x]] for x in col}

    moments = []
    checks = []
    for site in compare_sites:
        mz, vz = _mean_var_z(direct[site], profile[site])
        moments.append(MomentComparison(
            site=site,
            mean_direct=float(direct[site].mean()),
            mean_profile=float(profile[site].mean()),
            mean_z=mz,
            var_direct=float(direct[site].var(ddof=1)),
            var_profile=float(profile[site].var(ddof=1)),
            var_z=vz,
        ))
        checks.append(CheckResult(
            f"mean_z_site_{site}", abs(mz) < moment_z_threshold, mz, moment_z_threshold))
        checks.append(CheckResult(
            f"var_z_site_{site}", abs(vz) < moment_z_threshold, vz, moment_z_threshold))

    def atom_freqs(site):
        d = float((direct[site] == 0.0).mean())
        p = float((profile[site] == 0.0).mean())
        se = math.sqrt(d * (1 - d) / n_samples + p * (1 - p) / n_samples)
        return d, p, (d - p) / se if se > 0 else 0.0

    right = pivot + 1
    a_d, a_p, a_z = atom_freqs(right)
    exact = math.exp(-level)
    se_exact = math.sqrt(exact * (1 - exact) / n_samples)
    a_exact_z = (a_d - exact) / se_exact
    left = -1
    l_d, l_p, l_z = atom_freqs(left)
    checks.append(CheckResult("atom_right_z", abs(a_z) < atom_z_threshold, a_z, atom_z_threshold))
    checks.append(CheckResult(
        "atom_right_vs_exact_z", abs(a_exact_z) < atom_z_threshold, a_exact_z, atom_z_threshold))
    checks.append(CheckResult("atom_left_z", abs(l_z) < atom_z_threshold, l_z, atom_z_threshold))

    def indep_corr(data):
        # residual of the inner step at site pivot-1 given the pivot value,
        # against the first right outer value; the pivot value is exactly h
        proxy = data[pivot - 1] - (level + 1.0)
        outer = data[right]
        return float(np.corrcoef(proxy, outer)[0, 1])

    corr_d = indep_corr(direct)
    corr_p = indep_corr(profile)
    corr_threshold = atom_z_threshold / math.sqrt(n_samples)
    checks.append(CheckResult(
        "independence_corr_direct", abs(corr_d) < corr_threshold, corr_d, corr_threshold))
    checks.append(CheckResult(
        "independence_corr_profile", abs(corr_p) < corr_threshold, corr_p, corr_threshold))

    return RayKnightReport(
        pivot=pivot, level=level, n_samples=n_samples, moments=moments,
        atom_site_right=right, atom_right_direct=a_d, atom_right_profile=a_p,
        atom_right_z=a_z, atom_right_vs_exact_z=a_exact_z,
        atom_site_left=left, atom_left_direct=l_d, atom_left_profile=l_p,
        atom_left_z=l_z,
        independence_corr_direct=corr_d, independence_corr_profile=corr_p,
        checks=checks, seed=seed,
    )


# ---------------------------------------------------------------------------
# experiment: finite-time LDP bounds
# ---------------------------------------------------------------------------

def halfspace_rate_infimum(
    gen: Generator, S: Sequence, state, threshold: float, n_starts: int = 16, seed: int = 0
) -> float:
    """inf of the Dirichlet form over {mu on S : mu(state) >= threshold}."""
    S = tuple(S)
    j = S.index(state)
    m = len(S)
    rng = np.random.default_rng(seed)

    def objective(mu):
        return rate_symmetric_on_subset(gen, S, mu)

    best = math.inf
    constraints = [
        {"type": "eq", "fun": lambda mu: mu.sum() - 1.0},
        {"type": "ineq", "fun": lambda mu: mu[j] - threshold},
    ]
    bounds = [(0.0, 1.0)] * m
    starts = [np.full(m, 1.0 / m)]
    for _ in range(n_starts):
        starts.append(rng.dirichlet(np.ones(m)))
    for mu0 in starts:
        mu0 = mu0.copy()
        mu0[j] = max(mu0[j], threshold)
        mu0 /= mu0.sum()
        if mu0[j] < threshold:  # renormalization can undershoot; project again
            mu0[j] = threshold
            rest = 1.0 - threshold
            others = np.delete(np.arange(m), j)
            w = mu0[others]
            mu0[others] = rest * (w / w.sum() if w.sum() > 0 else np.full(m - 1, 1.0 / (m - 1)))
        res = minimize(objective, mu0, method="SLSQP", bounds=bounds,
                       constraints=constraints, options={"maxiter": 500, "ftol": 1e-14})
        if res.success and res.fun < best:
            best = float(res.fun)
    return best


def linear_varadhan_supremum(gen: Generator, S: Sequence, V, n_starts: int = 16,
                             seed: int = 0) -> float:
    """sup over mu on S of <V, mu> - Dirichlet(mu) for a linear functional."""
    S = tuple(S)
    m = len(S)
    v = np.array([float(V[x]) if isinstance(V, dict) else float(V[i])
                  for i, x in enumerate(S)])
    rng = np.random.default_rng(seed)

    def neg_objective(mu):
        return rate_symmetric_on_subset(gen, S, mu) - float(v @ mu)

    best = -math.inf
    constraints = [{"type": "eq", "fun": lambda mu: mu.sum() - 1.0}]
    bounds = [(0.0, 1.0)] * m
    starts = [np.full(m, 1.0 / m)] + [rng.dirichlet(np.ones(m)) for _ in range(n_starts)]
    for mu0 in starts:
        res = minimize(neg_objective, mu0, method="SLSQP", bounds=bounds,
                       constraints=constraints, options={"maxiter": 500, "ftol": 1e-14})
        if res.success:
            best = max(best, -float(res.fun))
    return best


def log_mgf_exact(gen: Generator, start, S: Sequence, V, T: float) -> float:
    """log E[exp(<V, local times>); range within S], by the matrix exponential
    of the killed generator A|SxS + diag(V)."""
    S = tuple(S)
    A = gen.submatrix(S)  # killed outside S: no re-conservation
    v = np.array([float(V[x]) if isinstance(V, dict) else float(V[i])
                  for i, x in enumerate(S)])
    M = expm(T * (A + np.diag(v)))
    i = S.index(start)
    return float(np.log(M[i, :].sum()))


@dataclass
class LdpProbabilityReport:
    T: float
    S: Tuple
    inf_rate: float
    bound: float
    n_samples: int
    n_hits: int
    log_p_hat: float
    log_p_upper: float
    checks: List[CheckResult] = field(default_factory=list)
    seed: Optional[int] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def ldp_probability_experiment(
    gen: Generator, start, S: Sequence, state, threshold: float, T: float,
    n_samples: int, seed: int = 0,
) -> LdpProbabilityReport:
    """Monte Carlo estimate of P(normalized local time at ``state`` >=
    ``threshold``, range within S) against the closed-form upper bound."""
    if not gen.is_symmetric():
        raise NotSymmetricError("the probability bound requires a symmetric generator")
    S = tuple(S)
    rng = np.random.default_rng(seed)
    batch = sample_paths_fixed_time(gen, start, T, n_samples, rng)
    idx_S = gen.indices(S)
    others = np.setdiff1d(np.arange(gen.n_states), idx_S)
    inside = np.ones(n_samples, dtype=bool)
    if others.size:
        inside = ~(batch.local_times[:, others] > 0).any(axis=1)
    hits = inside & (batch.local_times[:, gen.index(state)] / T >= threshold)
    n_hits = int(hits.sum())

    inf_rate = halfspace_rate_infimum(gen, S, state, threshold)
    bound = ldp_probability_bound(gen, S, inf_rate, T)
    p_upper = wilson_upper(n_hits, n_samples)
    log_p_hat = math.log(n_hits / n_samples) if n_hits else -math.inf
    log_p_upper = math.log(p_upper)
    checks = [CheckResult("log_upper_ci_below_bound", log_p_upper <= bound,
                          log_p_upper, bound)]
    return LdpProbabilityReport(
        T=T, S=S, inf_rate=inf_rate, bound=bound, n_samples=n_samples,
        n_hits=n_hits, log_p_hat=log_p_hat, log_p_upper=log_p_upper,
        checks=checks, seed=seed,
    )


@dataclass
class LdpVaradhanReport:
    T: float
    S: Tuple
    sup_value: float
    bound: float
    log_mgf: float
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def ldp_varadhan_experiment(gen: Generator, start, S: Sequence, V, T: float) -> LdpVaradhanReport:
    """Exact exponential-functional value (matrix exponential) against the
    closed-form upper bound for a linear functional."""
    if not gen.is_symmetric():
        raise NotSymmetricError("the exponential bound requires a symmetric generator")
    S = tuple(S)
    sup_value = linear_varadhan_supremum(gen, S, V)
    bound = ldp_varadhan_bound(gen, S, sup_value, T)
    value = log_mgf_exact(gen, start, S, V, T)
    checks = [CheckResult("log_mgf_below_bound", value <= bound, value, bound)]
    return LdpVaradhanReport(T=T, S=S, sup_value=sup_value, bound=bound,
                             log_mgf=value, checks=checks)


# ---------------------------------------------------------------------------
# suite runner
# ---------------------------------------------------------------------------

def _density_rows(report: DensityCheckReport):
    rows = []
    for i, (c, e) in enumerate(zip(report.histogram.counts, report.histogram.expected)):
        rows.append((i, int(c), float(e)))
    return rows


def run_suite(config: dict, out_dir: str, base_dir: str = ".") -> int:
    """Run the experiments in a config document; write one CSV per experiment
    and a machine-readable summary.  Exit status 0 when every acceptance
    check passes, 1 otherwise (2 is reserved for config errors and raised as
    ConfigParseError by the callers)."""
    if "experiments" not in config or not isinstance(config["experiments"], list):
        raise ConfigParseError("config must contain an 'experiments' list")
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(config)
    # the summary carries the fully resolved config so a run can be replayed
    summary = {"config_hash": chash, "config": config, "experiments": []}
    all_passed = True

    for k, exp in enumerate(config["experiments"]):
        if not isinstance(exp, dict) or "kind" not in exp:
            raise ConfigParseError(f"experiment #{k} needs a 'kind' field")
        kind = exp["kind"]
        seed = int(exp.get("seed", config.get("seed", 0)))
        meta = {"config_hash": chash, "seed": seed, "kind": kind}
        name = exp.get("name", f"{kind}-{k}")
        try:
            if kind == "verify-density":
                gen = generator_from_config(exp["generator"], base_dir)
                report = verify_density_mc(
                    gen, _label(exp["start"]), _label(exp["endpoint"]),
                    [_label(x) for x in exp["range"]], float(exp["T"]),
                    int(exp.get("samples", 1_000_000)),
                    cells_per_axis=int(exp.get("cells", 7)), seed=seed,
                )
                write_csv(os.path.join(out_dir, f"{name}.csv"), meta,
                          ["cell", "observed", "expected_mass"], _density_rows(report))
                entry = {
                    "name": name, "kind": kind, "passed": report.passed,
                    "p_value": report.p_value,
                    "conditioning_z": report.conditioning_z,
                    "checks": [c.__dict__ for c in report.checks],
                }
            elif kind == "verify-rayknight":
                report = verify_rayknight_mc(
                    pivot=int(exp.get("pivot", 2)), level=float(exp.get("level", 1.0)),
                    n_samples=int(exp.get("samples", 200_000)), seed=seed,
                )
                rows = [
                    (m.site, m.mean_direct, m.mean_profile, m.mean_z,
                     m.var_direct, m.var_profile, m.var_z)
                    for m in report.moments
                ]
                write_csv(os.path.join(out_dir, f"{name}.csv"), meta,
                          ["site", "mean_direct", "mean_profile", "mean_z",
                           "var_direct", "var_profile", "var_z"], rows)
                entry = {"name": name, "kind": kind, "passed": report.passed,
                         "checks": [c.__dict__ for c in report.checks]}
            elif kind == "ldp-probability":
                gen = generator_from_config(exp["generator"], base_dir)
                report = ldp_probability_experiment(
                    gen, _label(exp["start"]), [_label(x) for x in exp["S"]],
                    _label(exp["state"]), float(exp["threshold"]), float(exp["T"]),
                    int(exp.get("samples", 1_000_000)), seed=seed,
                )
                write_csv(os.path.join(out_dir, f"{name}.csv"), meta,
                          ["T", "inf_rate", "bound", "n_hits", "log_p_hat", "log_p_upper"],
                          [(report.T, report.inf_rate, report.bound,
                            report.n_hits, report.log_p_hat, report.log_p_upper)])
                entry = {"name": name, "kind": kind, "passed": report.passed,
                         "checks": [c.__dict__ for c in report.checks]}
            elif kind == "ldp-varadhan":
                gen = generator_from_config(exp["generator"], base_dir)
                report = ldp_varadhan_experiment(
                    gen, _label(exp["start"]), [_label(x) for x in exp["S"]],
                    exp["V"], float(exp["T"]),
                )
                write_csv(os.path.join(out_dir, f"{name}.csv"), meta,
                          ["T", "sup_value", "bound", "log_mgf"],
                          [(report.T, report.sup_value, report.bound, report.log_mgf)])
                entry = {"name": name, "kind": kind, "passed": report.passed,
                         "checks": [c.__dict__ for c in report.checks]}
            else:
                raise ConfigParseError(f"experiment #{k}: unknown kind {kind!r}")
        except KeyError as exc:
            raise ConfigParseError(f"experiment {name!r} is missing field {exc}") from None
        summary["experiments"].append(entry)
        all_passed &= entry["passed"]

    summary["all_passed"] = bool(all_passed)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, default=str)
    return 0 if all_passed else 1


def _label(x):
    """Config labels: keep ints as ints, everything else as given."""
    if isinstance(x, bool):
        raise ConfigParseError(f"invalid state label {x!r}")
    return x
