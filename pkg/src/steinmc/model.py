"""Two-dimensional job/server Markov chain, its scaled version, and generators.

The unscaled chain lives on pairs (jobs, servers).  Jobs arrive at a fixed
rate, are served at rate ``min(jobs, servers) * service_rate``, servers arrive
at a fixed rate and idle servers leave at rate ``(servers - jobs)^+ *
idle_departure_rate``.  The scaled chain recenters the lattice at the
equilibrium of the n-th system and shrinks it by (scale_x, scale_y).

Three generators are provided: the raw chain generator, the centered/scaled
chain generator, and the limiting diffusion generator, together with the exact
finite-difference remainders that make the decomposition

    scaled_generator = diffusion_generator + e1 + e2 + e3 + e4

an algebraic identity for every test function with exact derivatives.
All types are immutable values; all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .testfn import TestFunction

COORDINATE_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    """Rate constants of the unscaled chain; all strictly positive."""

    job_arrival_rate: float
    service_rate: float
    server_arrival_rate: float
    idle_departure_rate: float

    def __post_init__(self) -> None:
        for name, value in (("job_arrival_rate", self.job_arrival_rate),
                            ("service_rate", self.service_rate),
                            ("server_arrival_rate", self.server_arrival_rate),
                            ("idle_departure_rate", self.idle_departure_rate)):
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value}")


@dataclass(frozen=True)
class LatticeState:
    """A point (jobs, servers) of the nonnegative integer lattice."""

    jobs: int
    servers: int

    def __post_init__(self) -> None:
        if self.jobs < 0 or self.servers < 0:
            raise ValueError(f"lattice state must be nonnegative, got {self}")


@dataclass(frozen=True)
class ScaledPoint:
    """Coordinates of the centered and scaled chain (real-valued)."""

    x: float
    y: float


@dataclass(frozen=True)
class ScalingScheme:
    """The n-th system: arrival rates grow with n, coordinates shrink.

    Derived rates are exact: job arrivals run at ``n * service_rate`` and
    server arrivals at ``kappa * n**alpha * idle_departure_rate``, so the
    equilibrium of the n-th system sits at jobs = n, servers = n + kappa*n**alpha.
    """

    params: ModelParams
    n: int
    alpha: float
    kappa: float
    scale_x: float
    scale_y: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("scheme index n must be a positive integer")
        if not (0 < self.alpha <= 1):
            raise ValueError("alpha must lie in (0, 1]")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.scale_x <= 0 or self.scale_y <= 0:
            raise ValueError("scale factors must be positive")

    @staticmethod
    def halfin_whitt(params: ModelParams, n: int, kappa: float = 1.0) -> "ScalingScheme":
        """alpha = 1/2 with square-root scale factors in both coordinates."""
        s = n ** -0.5
        return ScalingScheme(params, n, 0.5, kappa, s, s)

    @staticmethod
    def from_exponents(params: ModelParams, n: int, alpha: float, kappa: float,
                       delta_exp: float, eta_exp: float) -> "ScalingScheme":
        if delta_exp <= 0 or eta_exp <= 0:
            raise ValueError("scale exponents must be positive")
        return ScalingScheme(params, n, alpha, kappa,
                             float(n) ** -delta_exp, float(n) ** -eta_exp)

    @property
    def job_arrival_rate_n(self) -> float:
        return self.n * self.params.service_rate

    @property
    def server_arrival_rate_n(self) -> float:
        return self.kappa * self.n ** self.alpha * self.params.idle_departure_rate

    @property
    def server_surplus(self) -> float:
        """kappa * n**alpha: equilibrium excess of servers over jobs."""
        return self.kappa * self.n ** self.alpha

    @property
    def center_jobs(self) -> float:
        return float(self.n)

    @property
    def center_servers(self) -> float:
        return self.n + self.server_surplus

    @property
    def noise_variance(self) -> float:
        """scale_x**2 * job_arrival_rate_n: variance rate of the x-noise."""
        return self.scale_x ** 2 * self.job_arrival_rate_n

    def effective_params(self) -> ModelParams:
        """Rate constants of the n-th (unscaled) system."""
        return ModelParams(self.job_arrival_rate_n, self.params.service_rate,
                           self.server_arrival_rate_n, self.params.idle_departure_rate)

    # -- coordinate map (exact bijection with the lattice) --

    def to_scaled(self, state: LatticeState) -> ScaledPoint:
        return ScaledPoint(self.scale_x * (state.jobs - self.n),
                           self.scale_y * (state.servers - self.center_servers))

    def to_lattice(self, p: ScaledPoint) -> LatticeState:
        """Inverse map; rejects points without an integer, nonnegative preimage."""
        i_real = p.x / self.scale_x + self.n
        j_real = p.y / self.scale_y + self.center_servers
        i, j = round(i_real), round(j_real)
        if abs(i_real - i) > COORDINATE_TOL or abs(j_real - j) > COORDINATE_TOL:
            raise ValueError(f"point {p} has non-integer lattice preimage "
                             f"({i_real}, {j_real})")
        if i < 0 or j < 0:
            raise ValueError(f"point {p} maps outside the nonnegative lattice")
        return LatticeState(int(i), int(j))

    def scaled_coords(self, jobs, servers):
        """Vectorized lattice -> scaled map for integer arrays."""
        return (self.scale_x * (np.asarray(jobs) - self.n),
                self.scale_y * (np.asarray(servers) - self.center_servers))


@dataclass(frozen=True)
class ErrorTermBreakdown:
    """Exact remainders of the generator expansion at one point.

    ``e1``/``e2`` are the x-direction remainders after removing the first- and
    (for e1) second-order terms; ``e3``/``e4`` are the y-direction first-order
    remainders.  The drift and second-order fields are the matched diffusion
    generator pieces, so all seven fields sum to the scaled generator value.
    """

    e1: float
    e2: float
    e3: float
    e4: float
    drift_x_term: float
    drift_y_term: float
    second_order_term: float

    @property
    def error_sum(self) -> float:
        return self.e1 + self.e2 + self.e3 + self.e4

    @property
    def total(self) -> float:
        return self.error_sum + self.drift_x_term + self.drift_y_term \
            + self.second_order_term


def transition_rates(state: LatticeState, params: ModelParams) -> dict[LatticeState, float]:
    """Strictly positive transition rates out of ``state``."""
    i, j = state.jobs, state.servers
    rates: dict[LatticeState, float] = {
        LatticeState(i + 1, j): params.job_arrival_rate,
        LatticeState(i, j + 1): params.server_arrival_rate,
    }
    service = min(i, j) * params.service_rate
    if service > 0:
        rates[LatticeState(i - 1, j)] = service
    departure = max(j - i, 0) * params.idle_departure_rate
    if departure > 0:
        rates[LatticeState(i, j - 1)] = departure
    return rates


def equilibrium_point(params: ModelParams) -> tuple[float, float]:
    """Flow-balance equilibrium (jobs, servers) of the unscaled chain."""
    jobs = params.job_arrival_rate / params.service_rate
    servers = jobs + params.server_arrival_rate / params.idle_departure_rate
    return jobs, servers


def drift_fields(scheme: ScalingScheme, p: ScaledPoint) -> tuple[float, float]:
    """(busy servers, idle servers) at a scaled point.

    On lattice images these equal min(jobs, servers) and (servers - jobs)^+;
    both extend to all real points.
    """
    i_coord = p.x / scheme.scale_x + scheme.n
    j_coord = p.y / scheme.scale_y + scheme.center_servers
    busy = min(i_coord, j_coord)
    idle = max(j_coord - i_coord, 0.0)
    return busy, idle


def drift_coefficients(scheme: ScalingScheme, p: ScaledPoint) -> tuple[float, float]:
    """First-order coefficients (a_x, a_y) of the diffusion generator.

    Algebraically equal to scale_x*(arrivals - busy*mu) and
    scale_y*(server_arrivals - idle*nu); written in the cancelled form so the
    leading n-order terms never enter the floating-point sums.
    """
    mu = scheme.params.service_rate
    nu = scheme.params.idle_departure_rate
    dx, dy = scheme.scale_x, scheme.scale_y
    surplus = scheme.server_surplus
    a_x = -min(p.x, p.y * dx / dy + dx * surplus) * mu
    a_y = dy * surplus * nu - max(p.y - p.x * dy / dx + dy * surplus, 0.0) * nu
    return a_x, a_y


def apply_chain_generator(f: TestFunction, state: LatticeState,
                          params: ModelParams) -> float:
    """Generator of the unscaled chain applied to f at a lattice state."""
    i, j = state.jobs, state.servers
    fc = f(i, j)
    out = params.job_arrival_rate * (f(i + 1, j) - fc)
    out += min(i, j) * params.service_rate * (f(i - 1, j) - fc)
    out += params.server_arrival_rate * (f(i, j + 1) - fc)
    out += max(j - i, 0) * params.idle_departure_rate * (f(i, j - 1) - fc)
    return float(out)


def apply_scaled_generator(u: TestFunction, p: ScaledPoint,
                           scheme: ScalingScheme) -> float:
    """Generator of the centered/scaled chain applied to u at p."""
    mu = scheme.params.service_rate
    nu = scheme.params.idle_departure_rate
    dx, dy = scheme.scale_x, scheme.scale_y
    busy, idle = drift_fields(scheme, p)
    uc = u(p.x, p.y)
    out = scheme.job_arrival_rate_n * (u(p.x + dx, p.y) - uc)
    out += busy * mu * (u(p.x - dx, p.y) - uc)
    out += scheme.server_arrival_rate_n * (u(p.x, p.y + dy) - uc)
    out += idle * nu * (u(p.x, p.y - dy) - uc)
    return float(out)


def apply_diffusion_generator(u: TestFunction, p: ScaledPoint,
                              scheme: ScalingScheme) -> float:
    """Limiting diffusion generator: drift in x and y, noise in x only."""
    a_x, a_y = drift_coefficients(scheme, p)
    return float(a_x * u.dx(p.x, p.y) + a_y * u.dy(p.x, p.y)
                 + 0.5 * scheme.noise_variance * u.dxx(p.x, p.y))


def error_term_breakdown(u: TestFunction, p: ScaledPoint,
                         scheme: ScalingScheme) -> ErrorTermBreakdown:
    """Exact finite-difference-minus-derivative remainders at one point.

    The four remainders replace the mean-value forms of the Taylor expansion:
    by construction they sum, together with the diffusion generator terms, to
    the scaled generator value exactly (up to rounding).
    """
    mu = scheme.params.service_rate
    nu = scheme.params.idle_departure_rate
    dx, dy = scheme.scale_x, scheme.scale_y
    lam_n = scheme.job_arrival_rate_n
    gam_n = scheme.server_arrival_rate_n
    busy, idle = drift_fields(scheme, p)

    uc = u(p.x, p.y)
    ux = u.dx(p.x, p.y)
    uy = u.dy(p.x, p.y)
    uxx = u.dxx(p.x, p.y)

    e1 = lam_n * (u(p.x + dx, p.y) - uc) - lam_n * dx * ux \
        - 0.5 * lam_n * dx ** 2 * uxx
    e2 = busy * mu * (u(p.x - dx, p.y) - uc) + busy * mu * dx * ux
    e3 = gam_n * (u(p.x, p.y + dy) - uc) - gam_n * dy * uy
    e4 = idle * nu * (u(p.x, p.y - dy) - uc) + idle * nu * dy * uy

    a_x, a_y = drift_coefficients(scheme, p)
    return ErrorTermBreakdown(
        e1=float(e1), e2=float(e2), e3=float(e3), e4=float(e4),
        drift_x_term=float(a_x * ux), drift_y_term=float(a_y * uy),
        second_order_term=float(0.5 * scheme.noise_variance * uxx))
