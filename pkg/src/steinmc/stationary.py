"""Truncated stationary solver and moment-identity verification.

The infinite lattice is truncated to a rectangular box; outgoing rates across
the box faces are zeroed, which keeps the truncated rate matrix a proper
generator.  Two solvers are provided: uniformization + power iteration (the
workhorse) and a subtraction-free dense elimination (the oracle).  On top of
the solved distribution this module verifies the stationarity identities and
moment equalities/inequalities of the scaled chain, and searches for a drift
certificate of positive recurrence for the unscaled chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.sparse.csgraph import connected_components

from .model import LatticeState, ModelParams, ScalingScheme, equilibrium_point
from .testfn import TestFunction

DENSE_ORACLE_MAX_STATES = 10_000
MAX_GROWTH_ROUNDS = 12


class SolverConvergenceError(RuntimeError):
    """Power iteration did not reach the requested tolerance."""

    def __init__(self, message: str, last_change: float):
        super().__init__(message)
        self.last_change = last_change


class ReducibleChainError(RuntimeError):
    """The retained states do not form a single communicating class."""


class BoxGrowthError(RuntimeError):
    """Adaptive truncation could not meet the tail target."""


@dataclass(frozen=True)
class TruncationBox:
    """Rectangular truncation window [0, i_max] x [0, j_max]."""

    i_max: int
    j_max: int

    def __post_init__(self) -> None:
        if self.i_max < 0 or self.j_max < 0:
            raise ValueError("box bounds must be nonnegative")

    @property
    def n_states(self) -> int:
        return (self.i_max + 1) * (self.j_max + 1)

    def contains_equilibrium(self, params: ModelParams, margin: int = 1) -> bool:
        jobs_eq, servers_eq = equilibrium_point(params)
        return (self.i_max >= math.ceil(jobs_eq) + margin
                and self.j_max >= math.ceil(servers_eq) + margin)

    def grow(self, factor: float = 1.5) -> "TruncationBox":
        return TruncationBox(math.ceil(self.i_max * factor),
                             math.ceil(self.j_max * factor))


@dataclass(frozen=True)
class TruncatedChain:
    """Sparse rate structure of the chain restricted to a truncation box.

    Per-state rate vectors follow the lexicographic (jobs-major) state layout.
    ``up_jobs``/``up_servers`` hold the retained rates (zeroed on the faces);
    the ``cut_*`` vectors hold exactly the zeroed portions, which feed the
    boundary-correction bounds.  Down-moves never leave the box.
    """

    box: TruncationBox
    params: ModelParams
    jobs: np.ndarray
    servers: np.ndarray
    up_jobs: np.ndarray
    down_jobs: np.ndarray
    up_servers: np.ndarray
    down_servers: np.ndarray
    cut_up_jobs: np.ndarray
    cut_up_servers: np.ndarray
    uniformization: float

    @property
    def n_states(self) -> int:
        return self.jobs.size

    @property
    def outflow(self) -> np.ndarray:
        return self.up_jobs + self.down_jobs + self.up_servers + self.down_servers

    def state_index(self, state: LatticeState) -> int:
        if state.jobs > self.box.i_max or state.servers > self.box.j_max:
            raise ValueError(f"{state} outside truncation box {self.box}")
        return state.jobs * (self.box.j_max + 1) + state.servers

    def neighbor_indices(self) -> dict[str, np.ndarray]:
        width = self.box.j_max + 1
        idx = np.arange(self.n_states)
        return {"up_jobs": idx + width, "down_jobs": idx - width,
                "up_servers": idx + 1, "down_servers": idx - 1}

    def transition_matrix_transpose(self) -> sp.csr_matrix:
        """Column-to-row transpose of the uniformized matrix P = I + Q/L."""
        n = self.n_states
        lam = self.uniformization
        if lam <= 0:
            return sp.identity(n, format="csr")
        neigh = self.neighbor_indices()
        rows, cols, vals = [], [], []
        for name, rate in (("up_jobs", self.up_jobs), ("down_jobs", self.down_jobs),
                           ("up_servers", self.up_servers),
                           ("down_servers", self.down_servers)):
            mask = rate > 0
            src = np.nonzero(mask)[0]
            rows.append(neigh[name][mask])
            cols.append(src)
            vals.append(rate[mask] / lam)
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(1.0 - self.outflow / lam)
        mat = sp.coo_matrix((np.concatenate(vals),
                             (np.concatenate(rows), np.concatenate(cols))),
                            shape=(n, n))
        return mat.tocsr()

    def dense_rates(self) -> np.ndarray:
        """Dense off-diagonal rate matrix (oracle-sized chains only)."""
        n = self.n_states
        q = np.zeros((n, n))
        neigh = self.neighbor_indices()
        idx = np.arange(n)
        for name, rate in (("up_jobs", self.up_jobs), ("down_jobs", self.down_jobs),
                           ("up_servers", self.up_servers),
                           ("down_servers", self.down_servers)):
            mask = rate > 0
            q[idx[mask], neigh[name][mask]] = rate[mask]
        return q


@dataclass(frozen=True)
class StationaryDistribution:
    """Solved stationary probabilities plus solver diagnostics.

    ``residual`` is the L1 norm of pi*Q over the box; ``boundary_mass`` is the
    probability on states touching the truncation faces (i = i_max or
    j = j_max), which controls the truncation bias.
    """

    chain: TruncatedChain
    probs: np.ndarray
    residual: float
    boundary_mass: float

    def __post_init__(self) -> None:
        if np.any(self.probs < 0):
            raise ValueError("stationary probabilities must be nonnegative")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("stationary probabilities must sum to 1")

    def prob(self, state: LatticeState) -> float:
        return float(self.probs[self.chain.state_index(state)])


def build_truncated_chain(params: ModelParams, box: TruncationBox,
                          require_equilibrium: bool = True) -> TruncatedChain:
    """Assemble the per-state rate vectors for a truncation box.

    ``require_equilibrium=False`` permits boxes that do not cover the flow
    equilibrium; useful for closed-form miniature chains in tests.
    """
    if require_equilibrium and not box.contains_equilibrium(params):
        raise ValueError(
            f"box {box} does not contain the equilibrium point "
            f"{equilibrium_point(params)} with margin >= 1")
    ii, jj = np.meshgrid(np.arange(box.i_max + 1), np.arange(box.j_max + 1),
                         indexing="ij")
    jobs = ii.ravel()
    servers = jj.ravel()
    at_i_face = jobs == box.i_max
    at_j_face = servers == box.j_max
    up_jobs = np.where(at_i_face, 0.0, params.job_arrival_rate)
    cut_up_jobs = np.where(at_i_face, params.job_arrival_rate, 0.0)
    down_jobs = np.minimum(jobs, servers) * params.service_rate
    up_servers = np.where(at_j_face, 0.0, params.server_arrival_rate)
    cut_up_servers = np.where(at_j_face, params.server_arrival_rate, 0.0)
    down_servers = np.maximum(servers - jobs, 0) * params.idle_departure_rate
    outflow = up_jobs + down_jobs + up_servers + down_servers
    return TruncatedChain(box=box, params=params, jobs=jobs, servers=servers,
                          up_jobs=up_jobs, down_jobs=down_jobs,
                          up_servers=up_servers, down_servers=down_servers,
                          cut_up_jobs=cut_up_jobs, cut_up_servers=cut_up_servers,
                          uniformization=float(outflow.max()))


def _check_irreducible(chain: TruncatedChain) -> None:
    n = chain.n_states
    neigh = chain.neighbor_indices()
    rows, cols = [], []
    for name, rate in (("up_jobs", chain.up_jobs), ("down_jobs", chain.down_jobs),
                       ("up_servers", chain.up_servers),
                       ("down_servers", chain.down_servers)):
        mask = rate > 0
        rows.append(np.nonzero(mask)[0])
        cols.append(neigh[name][mask])
    adj = sp.coo_matrix((np.ones(sum(r.size for r in rows)),
                         (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n)).tocsr()
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    if n_comp != 1:
        raise ReducibleChainError(
            f"retained states split into {n_comp} communicating classes")


def _boundary_mass(chain: TruncatedChain, probs: np.ndarray) -> float:
    on_face = (chain.jobs == chain.box.i_max) | (chain.servers == chain.box.j_max)
    return float(probs[on_face].sum())


def solve_stationary(chain: TruncatedChain, tol: float = 1e-12,
                     max_iter: int = 200_000) -> StationaryDistribution:
    """Uniformization + power iteration, stopping on L1 successive change.

    Raises :class:`SolverConvergenceError` after ``max_iter`` sweeps and
    :class:`ReducibleChainError` when the retained states are not a single
    strongly connected class.
    """
    n = chain.n_states
    if n == 1:
        return StationaryDistribution(chain, np.ones(1), 0.0, 1.0)
    _check_irreducible(chain)
    pt = chain.transition_matrix_transpose()
    jobs_eq, servers_eq = equilibrium_point(chain.params)
    start = LatticeState(min(round(jobs_eq), chain.box.i_max),
                         min(round(servers_eq), chain.box.j_max))
    x = np.zeros(n)
    x[chain.state_index(start)] = 1.0
    change = math.inf
    for _ in range(max_iter):
        x_next = pt.dot(x)
        change = float(np.abs(x_next - x).sum())
        x = x_next
        if change <= tol:
            break
    else:
        raise SolverConvergenceError(
            f"no convergence after {max_iter} iterations "
            f"(last L1 change {change:.3e}, tol {tol:.3e})", change)
    x /= x.sum()
    residual = float(np.abs(pt.dot(x) - x).sum() * chain.uniformization)
    return StationaryDistribution(chain, x, residual, _boundary_mass(chain, x))


@njit(cache=True)
def _gth_kernel(q: np.ndarray) -> np.ndarray:
    """In-place subtraction-free elimination on an off-diagonal rate matrix."""
    n = q.shape[0]
    for k in range(n - 1, 0, -1):
        s = 0.0
        for j in range(k):
            s += q[k, j]
        if s <= 0.0:
            return np.full(n, -1.0)
        for i in range(k):
            q[i, k] /= s
        for i in range(k):
            qik = q[i, k]
            if qik != 0.0:
                for j in range(k):
                    q[i, j] += qik * q[k, j]
    pi = np.zeros(n)
    pi[0] = 1.0
    total = 1.0
    for k in range(1, n):
        acc = 0.0
        for j in range(k):
            acc += pi[j] * q[j, k]
        pi[k] = acc
        total += acc
    for k in range(n):
        pi[k] /= total
    return pi


def solve_stationary_dense_oracle(chain: TruncatedChain) -> StationaryDistribution:
    """Direct GTH-style elimination; no subtractions of like-signed quantities."""
    n = chain.n_states
    if n > DENSE_ORACLE_MAX_STATES:
        raise ValueError(f"dense oracle limited to {DENSE_ORACLE_MAX_STATES} "
                         f"states, got {n}")
    if n == 1:
        return StationaryDistribution(chain, np.ones(1), 0.0, 1.0)
    q = chain.dense_rates()
    pi = _gth_kernel(q.copy())
    if pi[0] < 0:
        raise ReducibleChainError("elimination hit an unreachable lower block")
    rates = chain.dense_rates()
    flow = pi @ rates - pi * rates.sum(axis=1)
    residual = float(np.abs(flow).sum())
    return StationaryDistribution(chain, pi, residual, _boundary_mass(chain, pi))


def adaptive_box(scheme: ScalingScheme, tail_target: float,
                 tol: float = 1e-12, max_iter: int = 200_000) -> TruncationBox:
    """Smallest box in the geometric growth sequence meeting the tail target."""
    return solve_adaptive(scheme, tail_target, tol, max_iter).chain.box


def solve_adaptive(scheme: ScalingScheme, tail_target: float,
                   tol: float = 1e-12,
                   max_iter: int = 200_000) -> StationaryDistribution:
    """Grow the box (x1.5 per side) until solved boundary mass < tail_target.

    Starts from (2n, 2(n + surplus)).  Intermediate boxes are solved at a
    relaxed tolerance — boundary mass does not need the full-precision
    solution — and the accepted box is re-solved at ``tol``.
    """
    if not (0 < tail_target < 1):
        raise ValueError("tail_target must lie in (0, 1)")
    params = scheme.effective_params()
    box = TruncationBox(math.ceil(2 * scheme.n), math.ceil(2 * scheme.center_servers))
    probe_tol = max(tol, min(1e-9, tail_target * 1e-3))
    last_mass = math.inf
    for _ in range(MAX_GROWTH_ROUNDS + 1):
        chain = build_truncated_chain(params, box)
        dist = solve_stationary(chain, tol=probe_tol, max_iter=max_iter)
        last_mass = dist.boundary_mass
        if last_mass < tail_target:
            if probe_tol > tol:
                dist = solve_stationary(chain, tol=tol, max_iter=max_iter)
            return dist
        box = box.grow()
    raise BoxGrowthError(
        f"boundary mass {last_mass:.3e} still above target {tail_target:.3e} "
        f"after {MAX_GROWTH_ROUNDS} growth rounds (last box {box})")


def expect(dist: StationaryDistribution, f, scheme: ScalingScheme) -> float:
    """Stationary expectation of f over the scaled image of the box."""
    x, y = scheme.scaled_coords(dist.chain.jobs, dist.chain.servers)
    return float(np.dot(dist.probs, f(x, y)))


@dataclass(frozen=True)
class StationarityReport:
    """Residuals of E[generator f] under the solved distribution."""

    truncated_residual: float
    untruncated_residual: float
    boundary_bound: float


def _generator_action(dist: StationaryDistribution, f: TestFunction,
                      scheme: ScalingScheme) -> tuple[float, float, float]:
    """(E[G_trunc f], E[G_n f], boundary bound), vectorized over the box."""
    chain = dist.chain
    mu = scheme.params.service_rate
    nu = scheme.params.idle_departure_rate
    dx, dy = scheme.scale_x, scheme.scale_y
    x, y = scheme.scaled_coords(chain.jobs, chain.servers)
    fc = f(x, y)
    d_up_i = f(x + dx, y) - fc
    d_dn_i = f(x - dx, y) - fc
    d_up_j = f(x, y + dy) - fc
    d_dn_j = f(x, y - dy) - fc
    # retained rates carry the scaled-system magnitudes already
    g_trunc = (chain.up_jobs * d_up_i + chain.down_jobs * d_dn_i
               + chain.up_servers * d_up_j + chain.down_servers * d_dn_j)
    cut = chain.cut_up_jobs * d_up_i + chain.cut_up_servers * d_up_j
    e_trunc = float(np.dot(dist.probs, g_trunc))
    e_full = float(np.dot(dist.probs, g_trunc + cut))
    bound = float(np.dot(dist.probs, chain.cut_up_jobs * np.abs(d_up_i)
                         + chain.cut_up_servers * np.abs(d_up_j)))
    assert abs(mu - chain.params.service_rate) < 1e-12
    assert abs(nu - chain.params.idle_departure_rate) < 1e-12
    return e_trunc, e_full, bound


def verify_stationarity(dist: StationaryDistribution, f: TestFunction,
                        scheme: ScalingScheme) -> StationarityReport:
    """|E[G f]| for the truncated and untruncated scaled generators."""
    e_trunc, e_full, bound = _generator_action(dist, f, scheme)
    return StationarityReport(abs(e_trunc), abs(e_full), bound)


@dataclass(frozen=True)
class MomentCheck:
    """One verified moment identity or inequality."""

    name: str
    kind: str  # "equality" | "inequality"
    lhs: float
    rhs: float
    gap: float  # residual (equality) or slack = rhs - lhs (inequality)
    boundary_bound: float
    passed: bool
    rhs_literal: float | None = None
    gap_literal: float | None = None


@dataclass(frozen=True)
class MomentReport:
    checks: tuple[MomentCheck, ...]
    tolerance: float

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> MomentCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _stationarity_slack_bound(dist: StationaryDistribution, f: TestFunction,
                              scheme: ScalingScheme) -> float:
    """|E[G_trunc f]| + boundary correction: bounds |E[G_n f]| on the box."""
    e_trunc, _, bound = _generator_action(dist, f, scheme)
    return abs(e_trunc) + bound


def verify_moment_identities(dist: StationaryDistribution, scheme: ScalingScheme,
                             tol: float = 1e-6) -> MomentReport:
    """Check the six stationary-moment facts of the scaled chain.

    The two equalities (mean busy servers, mean idle servers) and four
    inequalities are evaluated in their corrected forms — derived by applying
    stationarity to x, y, x^2, xy, y^2 and the pointwise facts
    min(i,j) <= i and idle^2 = idle*(j-i) — so nonnegative slack is forced up
    to truncation bias.  The literal printed forms (unscaled server-arrival
    rate; no square root on the Cauchy-Schwarz factor) are reported alongside
    where they differ.
    """
    chain = dist.chain
    p = dist.probs
    mu = scheme.params.service_rate
    nu = scheme.params.idle_departure_rate
    gamma_base = scheme.params.server_arrival_rate
    dx, dy = scheme.scale_x, scheme.scale_y
    n = scheme.n
    lam_n = scheme.job_arrival_rate_n
    gam_n = scheme.server_arrival_rate_n
    surplus = scheme.server_surplus

    jobs = chain.jobs
    servers = chain.servers
    x, y = scheme.scaled_coords(jobs, servers)
    busy = np.minimum(jobs, servers).astype(float)
    idle = np.maximum(servers - jobs, 0).astype(float)

    e_busy = float(p @ busy)
    e_idle = float(p @ idle)
    e_x = float(p @ x)
    e_y = float(p @ y)
    e_y2 = float(p @ (y * y))
    e_busy2 = float(p @ (busy * busy))
    e_idle2 = float(p @ (idle * idle))
    e_jobs_below = dx * float(p @ (jobs * (jobs <= servers)))

    mono = {name: TestFunction.monomial(*pw) for name, pw in
            (("x", (1, 0)), ("y", (0, 1)), ("x2", (2, 0)), ("xy", (1, 1)),
             ("y2", (0, 2)))}
    rbound = {name: _stationarity_slack_bound(dist, f, scheme)
              for name, f in mono.items()}

    checks = []

    rhs4 = lam_n / mu
    bound4 = rbound["x"] / (mu * dx)
    checks.append(MomentCheck("busy_mean", "equality", e_busy, rhs4,
                              e_busy - rhs4, bound4,
                              abs(e_busy - rhs4) <= tol))

    rhs5 = gam_n / nu
    bound5 = rbound["y"] / (nu * dy)
    checks.append(MomentCheck("idle_mean", "equality", e_idle, rhs5,
                              e_idle - rhs5, bound5,
                              abs(e_idle - rhs5) <= tol,
                              rhs_literal=gamma_base / nu,
                              gap_literal=e_idle - gamma_base / nu))

    rhs6 = (lam_n * dx / mu + gam_n * dx / nu) * dy
    rhs6_lit = (lam_n * dx / mu + gamma_base * dx / nu) * dy
    bound6 = dy * (bound4 + bound5)
    checks.append(MomentCheck("scaled_server_mean", "inequality", e_y, rhs6,
                              rhs6 - e_y, bound6, rhs6 - e_y >= -tol,
                              rhs_literal=rhs6_lit, gap_literal=rhs6_lit - e_y))

    rhs7 = dx * lam_n / mu
    checks.append(MomentCheck("jobs_below_diagonal", "inequality",
                              e_jobs_below, rhs7, rhs7 - e_jobs_below,
                              dx * bound4, rhs7 - e_jobs_below >= -tol))

    # busy^2: from stationarity of x^2, E[busy*jobs] equals the rhs below;
    # busy <= jobs turns it into an upper bound for E[busy^2].
    first8 = lam_n * (2 * dx * e_x + dx * dx)
    rhs8 = first8 / (2 * mu * dx * dx) + (2 * n + 1) / 2 * e_busy
    rhs8_lit = 0.5 * first8 + (2 * n + 1) * dx * (dx * e_busy)
    bound8 = rbound["x2"] / (2 * mu * dx * dx)
    checks.append(MomentCheck("busy_second_moment", "inequality", e_busy2,
                              rhs8, rhs8 - e_busy2, bound8,
                              rhs8 - e_busy2 >= -tol,
                              rhs_literal=rhs8_lit,
                              gap_literal=rhs8_lit - e_busy2))

    # idle^2: exact identity from stationarity of xy and y^2 plus
    # idle^2 = idle*(j - i); Cauchy-Schwarz replaces E[busy*Y].
    cs = math.sqrt(max(e_busy2 * e_y2, 0.0))
    rhs9 = ((gam_n - lam_n) * e_y / (nu * dy) + gam_n / (2 * nu)
            + (0.5 + surplus) * e_idle - gam_n * e_x / (nu * dx)
            + mu / (nu * dy) * cs)
    rhs9_lit = ((dx * gam_n + lam_n * dx) * e_y - e_busy2 * e_y2
                - lam_n * dx * e_x
                + 0.5 * (dx * dx * gam_n + (dx + dx * surplus) * e_idle))
    bound9 = rbound["xy"] / (nu * dy * dx) + rbound["y2"] / (2 * nu * dy * dy)
    checks.append(MomentCheck("idle_second_moment", "inequality", e_idle2,
                              rhs9, rhs9 - e_idle2, bound9,
                              rhs9 - e_idle2 >= -tol,
                              rhs_literal=rhs9_lit,
                              gap_literal=rhs9_lit - e_idle2))

    return MomentReport(tuple(checks), tol)


QUARTIC = TestFunction.from_coeffs({(4, 0): 1.0, (0, 4): 1.0})
DRIFT_RATE_GRID = tuple(2.0 ** k for k in range(4, -5, -1))


@dataclass(frozen=True)
class DriftCertificate:
    """Region threshold and rate constant certifying negative quartic drift."""

    threshold_jobs: int
    threshold_servers: int
    rate_constant: float
    worst_margin: float
    asymptotic_ok: bool
    scan_limit: int

    @property
    def found(self) -> bool:
        return True


@dataclass(frozen=True)
class DriftSearchFailure:
    """No certificate within the scan; carries the most stubborn point."""

    worst_point: LatticeState
    worst_value: float
    scan_limit: int

    @property
    def found(self) -> bool:
        return False


def _quartic_drift_grid(params: ModelParams, scan_limit: int) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(scan_limit + 1, dtype=float),
                         np.arange(scan_limit + 1, dtype=float), indexing="ij")
    lam, mu = params.job_arrival_rate, params.service_rate
    gam, nu = params.server_arrival_rate, params.idle_departure_rate
    up_i = (ii + 1) ** 4 - ii ** 4
    dn_i = (ii - 1) ** 4 - ii ** 4
    up_j = (jj + 1) ** 4 - jj ** 4
    dn_j = (jj - 1) ** 4 - jj ** 4
    return (lam * up_i + np.minimum(ii, jj) * mu * dn_i
            + gam * up_j + np.maximum(jj - ii, 0.0) * nu * dn_j)


def _asymptotic_dominance(params: ModelParams, threshold: int, c: float) -> bool:
    """Beyond-scan check: the service term's cubic coefficient -4*mu*min(x0,y0)
    must dominate the inflow cubic coefficients 4*(lambda+gamma) plus margin."""
    lam, mu = params.job_arrival_rate, params.service_rate
    gam = params.server_arrival_rate
    return 4 * (lam + gam) + 2 * c <= 4 * mu * threshold


def foster_lyapunov_check(params: ModelParams, scan_limit: int = 60):
    """Search for (x0, y0, C) with quartic drift <= -C(x^3+y^3) above (x0, y0).

    Scans diagonal thresholds against the rate grid 2^-4..2^4, preferring the
    largest C and then the smallest threshold, and requires the asymptotic
    dominance check for beyond-scan confidence.  Returns a
    :class:`DriftCertificate` or a :class:`DriftSearchFailure`.
    """
    jobs_eq, servers_eq = equilibrium_point(params)
    if scan_limit < max(jobs_eq, servers_eq):
        raise ValueError(f"scan_limit {scan_limit} below equilibrium "
                         f"({jobs_eq:.1f}, {servers_eq:.1f})")
    drift = _quartic_drift_grid(params, scan_limit)
    ii, jj = np.meshgrid(np.arange(scan_limit + 1, dtype=float),
                         np.arange(scan_limit + 1, dtype=float), indexing="ij")
    cubic = ii ** 3 + jj ** 3
    for c in DRIFT_RATE_GRID:
        margin = drift + c * cubic
        # suffix maximum over both axes: worst[a, b] = max over (i,j) >= (a,b)
        worst = np.maximum.accumulate(
            np.maximum.accumulate(margin[::-1, ::-1], axis=0), axis=1)[::-1, ::-1]
        for t in range(scan_limit + 1):
            if worst[t, t] <= 0 and _asymptotic_dominance(params, t, c):
                return DriftCertificate(t, t, c, float(worst[t, t]), True,
                                        scan_limit)
    margin = drift + DRIFT_RATE_GRID[-1] * cubic
    flat = int(np.argmax(margin))
    width = scan_limit + 1
    return DriftSearchFailure(LatticeState(flat // width, flat % width),
                              float(margin.flat[flat]), scan_limit)


def verify_drift_certificate(params: ModelParams, cert: DriftCertificate,
                             scan_limit: int | None = None) -> bool:
    """Re-check the certificate inequality at every scanned grid point."""
    limit = scan_limit if scan_limit is not None else cert.scan_limit
    drift = _quartic_drift_grid(params, limit)
    ii, jj = np.meshgrid(np.arange(limit + 1, dtype=float),
                         np.arange(limit + 1, dtype=float), indexing="ij")
    region = (ii >= cert.threshold_jobs) & (jj >= cert.threshold_servers)
    margin = drift + cert.rate_constant * (ii ** 3 + jj ** 3)
    return bool(np.all(margin[region] <= 0))


def write_distribution_csv(dist: StationaryDistribution, fh: IO[str]) -> None:
    """Rows ``i,j,prob`` in lexicographic (i, j) order, 17 significant digits."""
    fh.write("i,j,prob\n")
    for i, j, q in zip(dist.chain.jobs, dist.chain.servers, dist.probs):
        fh.write(f"{i},{j},{q:.17g}\n")
