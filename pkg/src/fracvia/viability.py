"""Constructive viability: approximate solutions confined to a constraint tube.

The builder advances from the current endpoint ``(T_c, x_c)`` with the
frozen-coefficient predictor

    P(s) = x_c + (s - T_c) b(T_c, x_c) + sigma(T_c, x_c) (g(s) - g(T_c)),

corrected by the metric projection ``Q(s) = proj_{K(s)} P(s) - P(s)``. The
error function ``xi`` of the assembled path is kept below ``eps (s - t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    BudgetError,
    ConvergenceError,
    FracviaError,
    ResolutionError,
    ViabilityViolation,
)
from .fraccalc import StieltjesOperator, holder_constant, holder_norm
from .grid import GridFunction
from .solver import (
    CoefficientPair,
    EstimateLedger,
    _as_state,
    _drift_integral,
    _driver_channels,
    check_assumptions,
    compute_ledger,
    solve_euler,
)

NOISE_FLOOR = 1e-14
MEMBERSHIP_TOL = 1e-12


# --------------------------------------------------------------------------
# Constraint tubes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintTube:
    """A time-indexed family of closed sets ``K(t)`` with a projection.

    ``signed_distance`` is optional; when absent, points inside report 0
    and points outside their distance to the projection.
    """

    membership: Callable[[float, np.ndarray], bool]
    projection: Callable[[float, np.ndarray], np.ndarray]
    is_convex: bool = True
    description: str = ""
    signed_distance: Callable[[float, np.ndarray], float] | None = None

    def contains(self, t: float, x) -> bool:
        return bool(self.membership(t, np.asarray(x, dtype=float)))

    def project(self, t: float, x) -> np.ndarray:
        out = np.asarray(self.projection(t, np.asarray(x, dtype=float)), dtype=float)
        if not np.all(np.isfinite(out)):
            raise FracviaError(f"projection failed at time {t}")
        return out

    def distance(self, t: float, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.signed_distance is not None:
            return float(self.signed_distance(t, x))
        return float(np.linalg.norm(self.project(t, x) - x))


def whole_space() -> ConstraintTube:
    """``K(t) = R^d``."""
    return ConstraintTube(
        membership=lambda t, x: True,
        projection=lambda t, x: np.array(x, dtype=float),
        description="whole-space",
        signed_distance=lambda t, x: -math.inf,
    )


def _ball_parts(radius_fn, center):
    def rel(x):
        c = np.zeros_like(x) if center is None else np.asarray(center, dtype=float)
        return x - c, c

    def member(t, x):
        v, _ = rel(x)
        rho = radius_fn(t)
        return np.linalg.norm(v) <= rho * (1 + MEMBERSHIP_TOL) + MEMBERSHIP_TOL

    def project(t, x):
        v, c = rel(x)
        r, rho = np.linalg.norm(v), radius_fn(t)
        return x.copy() if r <= rho else c + v * (rho / r)

    def dist(t, x):
        v, _ = rel(x)
        return float(np.linalg.norm(v) - radius_fn(t))

    return member, project, dist


def ball(radius: float, center=None) -> ConstraintTube:
    """Closed ball of fixed radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    member, project, dist = _ball_parts(lambda t: radius, center)
    return ConstraintTube(member, project, True, f"ball:{radius}", dist)


def moving_ball(radius0: float, slope: float = 0.0, center=None) -> ConstraintTube:
    """Closed ball with radius ``radius0 + slope * t`` (must stay positive)."""

    def rho(t):
        r = radius0 + slope * t
        if r <= 0:
            raise ValueError(f"moving ball radius is not positive at t={t}")
        return r

    member, project, dist = _ball_parts(rho, center)
    return ConstraintTube(member, project, True, f"moving-ball:{radius0},{slope}", dist)


def box(lo, hi) -> ConstraintTube:
    """Axis-aligned box ``[lo, hi]`` (bounds broadcast over coordinates)."""
    lo_a, hi_a = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if np.any(lo_a > hi_a):
        raise ValueError("box needs lo <= hi")

    def member(t, x):
        return bool(np.all(x >= lo_a - MEMBERSHIP_TOL) and np.all(x <= hi_a + MEMBERSHIP_TOL))

    def dist(t, x):
        inside = np.minimum(x - lo_a, hi_a - x)
        if np.all(inside >= 0):
            return -float(inside.min())
        return float(np.linalg.norm(np.clip(x, lo_a, hi_a) - x))

    return ConstraintTube(member, lambda t, x: np.clip(x, lo_a, hi_a), True,
                          f"box:{lo},{hi}", dist)


def halfspace(normal, offset: float) -> ConstraintTube:
    """``{y : <a, y> <= c}``."""
    a = np.asarray(normal, dtype=float).reshape(-1)
    norm2 = float(a @ a)
    if norm2 == 0:
        raise ValueError("half-space normal must be nonzero")

    def member(t, x):
        return float(a @ x) <= offset + MEMBERSHIP_TOL * (1 + abs(offset))

    def project(t, x):
        excess = float(a @ x) - offset
        return x - max(excess, 0.0) / norm2 * a

    return ConstraintTube(member, project, True, f"halfspace:{list(a)},{offset}",
                          lambda t, x: (float(a @ x) - offset) / math.sqrt(norm2))


# --------------------------------------------------------------------------
# Certificates
# --------------------------------------------------------------------------


def growth_exponent(lags: np.ndarray, values: np.ndarray) -> float:
    """Least-squares slope of ``log |values|`` against ``log lags``.

    Uses the nodes within the decade nearest the base point and discards
    values below the noise floor; ``nan`` when fewer than two remain.
    """
    lags = np.asarray(lags, dtype=float)
    mags = np.linalg.norm(np.asarray(values, dtype=float).reshape(lags.size, -1), axis=1)
    pos = lags > 0
    if not pos.any():
        return math.nan
    first = lags[pos].min()
    keep = pos & (lags <= 10 * first * (1 + 1e-9)) & (mags >= NOISE_FLOOR)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(lags[keep]), np.log(mags[keep]), 1)[0])


@dataclass(frozen=True)
class ContingencyCertificate:
    """Measured correction ``Q`` for the predictor at ``(t, x)``."""

    t: float
    x: np.ndarray
    h_bar: float
    Q: GridFunction
    gamma: float
    G_R: float
    G_tilde_R: float
    budget: float
    holds: bool
    worst_margin: float
    q_growth_exponent: float

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "x": self.x.tolist(),
            "h_bar": self.h_bar,
            "gamma": self.gamma,
            "G_R": self.G_R,
            "G_tilde_R": self.G_tilde_R,
            "budget": self.budget,
            "holds": self.holds,
            "worst_margin": self.worst_margin,
            "q_growth_exponent": self.q_growth_exponent,
        }


@dataclass(frozen=True)
class TangencyCertificate:
    """Perturbations ``U, V`` of the frozen coefficients along a viable path."""

    t: float
    x: np.ndarray
    h_bar: float
    U: GridFunction
    V: GridFunction
    D_R: float
    D_tilde_R: float
    holds: bool

    def as_dict(self) -> dict:
        return {"t": self.t, "x": self.x.tolist(), "h_bar": self.h_bar,
                "D_R": self.D_R, "D_tilde_R": self.D_tilde_R, "holds": self.holds}


def _predictor(coeffs, times, gvals, x):
    t = times[0]
    lag = (times - t)[:, None]
    return x + lag * coeffs.b(t, x) + (gvals - gvals[0]) @ coeffs.sigma(t, x).T


def _default_gamma(coeffs: CoefficientPair, alpha: float) -> float:
    return min(coeffs.beta - alpha, 1 - 2 * alpha)


def contingency_check(t: float, x, coeffs: CoefficientPair, g: GridFunction,
                      tube: ConstraintTube, h_bar: float, alpha: float,
                      gamma: float | None = None,
                      ledger: EstimateLedger | None = None) -> ContingencyCertificate:
    """Build ``Q`` by projecting the predictor on ``[t, t + h_bar]`` and measure it.

    ``G_R`` is the discrete ``(1 - alpha)``-Hölder constant of ``Q`` and
    ``G_tilde_R`` the largest ``|Q(s)| / (s - t)^(1 + gamma)``. The
    certificate holds iff both are finite and ``G_tilde_R`` does not exceed
    the ledger budget ``G_tilde0``.
    """
    _driver_channels(g, coeffs)
    x = _as_state(x, coeffs.dim)
    if not tube.contains(t, x):
        raise ValueError(f"base point {x.tolist()} is not in K({t})")
    gam = _default_gamma(coeffs, alpha) if gamma is None else float(gamma)
    if ledger is None:
        ledger = compute_ledger(coeffs, g, alpha, t, g.t1, x, gamma=gam)
    gw = g.window(t, t + h_bar)
    P = _predictor(coeffs, gw.times, gw.values, x)
    Q = np.array([tube.project(s, p) for s, p in zip(gw.times, P)]) - P
    Qf = GridFunction(gw.times, Q)
    lag = gw.times - t
    G_R = holder_constant(Qf, 1 - alpha)
    G_tilde = float(np.max(np.linalg.norm(Q[1:], axis=1) / lag[1:] ** (1 + gam)))
    budget = ledger.G_tilde0
    holds = bool(np.isfinite(G_R) and np.isfinite(G_tilde) and G_tilde <= budget)
    return ContingencyCertificate(
        t=float(t), x=x, h_bar=float(gw.t1 - t), Q=Qf, gamma=gam, G_R=G_R,
        G_tilde_R=G_tilde, budget=budget, holds=holds, worst_margin=budget - G_tilde,
        q_growth_exponent=growth_exponent(lag, Q),
    )


def tangency_check(t: float, x, coeffs: CoefficientPair, g: GridFunction,
                   tube: ConstraintTube, h_bar: float, alpha: float,
                   path: GridFunction | None = None) -> TangencyCertificate:
    """Measure ``U = b(r, Y_r) - b(t, x)`` and ``V = sigma(r, Y_r) - sigma(t, x)``.

    ``path`` is a viable local path starting at ``(t, x)``, typically the
    output of :func:`build_viable_solution` or a solved path.
    """
    if path is None:
        raise ValueError("no local viable path given; run build_viable_solution first")
    x = _as_state(x, coeffs.dim)
    Y = path.window(t, t + h_bar)
    if not np.allclose(Y.values[0], x, rtol=0, atol=1e-9 * (1 + np.linalg.norm(x))):
        raise ValueError("path does not start at the base point")
    U = coeffs.drift_values(Y.times, Y.values) - coeffs.b(t, x)
    V = coeffs.diffusion_values(Y.times, Y.values) - coeffs.sigma(t, x)
    Uf = GridFunction(Y.times, U)
    Vf = GridFunction(Y.times, V.reshape(Y.n, -1))
    D_R = holder_constant(Uf, 1 - alpha)
    D_tilde = holder_constant(Vf, min(coeffs.beta, 1 - alpha))
    inside = all(tube.contains(s, y) for s, y in zip(Y.times, Y.values))
    holds = bool(np.isfinite(D_R) and np.isfinite(D_tilde) and inside)
    return TangencyCertificate(float(t), x, float(Y.t1 - t), Uf,
                               GridFunction(Y.times, V), D_R, D_tilde, holds)


def select_step_level(epsilon: float, ledger: EstimateLedger, alpha: float, beta: float,
                      gamma: float | None = None) -> int:
    """Smallest ``j >= 0`` such that ``h = 2^-j (T - t)`` satisfies the step inequality."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    gp = min(beta - alpha, 1 - 2 * alpha)
    gam = gp if gamma is None else gamma
    terms = [(ledger.CR1, 1 - alpha), (ledger.CR2, gp), (ledger.G_tilde0, gam)]
    terms = [(c, p) for c, p in terms if c > 0]
    log_h0 = math.log(ledger.horizon)
    j = 0
    while True:
        log_h = log_h0 - j * math.log(2.0)
        if sum(c * math.exp(p * log_h) for c, p in terms) <= epsilon:
            return j
        j += 1


def select_step(epsilon: float, ledger: EstimateLedger, alpha: float, beta: float,
                gamma: float | None = None) -> float:
    """Largest dyadic ``h = 2^-j (T - t)`` with
    ``C1 h^(1-alpha) + C2 h^min(beta-alpha, 1-2alpha) + G_tilde0 h^gamma <= epsilon``.

    May underflow to ``0.0`` for extreme constants; use
    :func:`select_step_level` for the exact level.
    """
    return math.ldexp(ledger.horizon, -select_step_level(epsilon, ledger, alpha, beta, gamma))


# --------------------------------------------------------------------------
# Builder
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BuilderConfig:
    """Controls of the approximate-solution builder.

    ``safety`` shrinks the error budget while a piece is accepted, since the
    error function at the newest node still sees the provisional extension.
    ``max_cells`` caps the number of grid cells per piece; with ``1`` every
    piece is a single Euler step.
    """

    gamma: float | None = None
    B0: float | None = None
    T: float | None = None
    safety: float = 0.9
    hurst: float | None = None
    max_cells: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("safety must lie in (0, 1]")
        if self.max_cells is not None and self.max_cells < 1:
            raise ValueError("max_cells must be positive")


@dataclass(frozen=True)
class ApproximateSolution:
    """An ``eps``-approximate viable path and its error function."""

    epsilon: float
    X: GridFunction
    xi: GridFunction
    B0_measured: float
    D0_measured: float
    ledger: EstimateLedger
    breakpoints: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    h_apriori: float = 0.0

    @property
    def t(self) -> float:
        return self.X.t0

    def check_invariants(self, tube: ConstraintTube) -> dict:
        lag = self.X.times - self.t
        xi = np.linalg.norm(self.xi.values, axis=1)
        inside = [tube.contains(s, x) for s, x in zip(self.X.times, self.X.values)]
        return {
            "xi_bound": bool(np.all(xi <= self.epsilon * lag + 1e-13)),
            "xi_holder": bool(self.D0_measured <= self.ledger.D0),
            "radius_budget": bool(self.B0_measured <= self.ledger.B0),
            "membership": bool(all(inside)),
        }


def error_function(X: GridFunction, coeffs: CoefficientPair, g: GridFunction, x0,
                   alpha: float, t: float, op: StieltjesOperator | None = None) -> GridFunction:
    """``xi(s) = X_s - x0 - int_t^s b(r, X_r) dr - int_t^s sigma(r, X_r) dg(r)``."""
    x0 = _as_state(x0, coeffs.dim)
    Xw = X.window(t, X.t1)
    op = StieltjesOperator(g, alpha, t, Xw.t1) if op is None else op
    bv = coeffs.drift_values(Xw.times, Xw.values)
    sv = coeffs.diffusion_values(Xw.times, Xw.values)
    xi = Xw.values - x0 - _drift_integral(Xw.times, bv) - op.apply(sv)
    return GridFunction(Xw.times, xi)


def _diagnose(T_c, x_c, coeffs, g, tube, alpha, gam, ledger, cells_left, gw, c):
    """Certificate over the decade after a failed single-cell step."""
    m = min(10, cells_left)
    cert = contingency_check(T_c, x_c, coeffs, g, tube, gw.times[c + m] - T_c, alpha,
                             gam, ledger)
    expo = cert.q_growth_exponent
    q_active = float(np.max(np.abs(cert.Q.values))) >= NOISE_FLOOR
    return cert, expo, q_active


def build_viable_solution(t: float, x0, coeffs: CoefficientPair, g: GridFunction,
                          tube: ConstraintTube, epsilon: float, alpha: float,
                          config: BuilderConfig | None = None) -> ApproximateSolution:
    """Extend the corrected predictor piece by piece until the horizon.

    Steps are dyadic fractions ``2^-j`` of the grid window; a piece is
    accepted when its contingency certificate holds and the error function
    stays below ``safety * eps (s - t)`` on its nodes. Otherwise the step is
    halved. After acceptance the next step may double again.

    Raises:
        ViabilityViolation: the correction keeps failing at one grid cell and
            its growth exponent is below ``1 + gamma``.
        ResolutionError: a single grid cell still violates the error budget
            with no correction active.
        BudgetError: the built path leaves the radius budget ``B0``.
    """
    config = BuilderConfig() if config is None else config
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _driver_channels(g, coeffs)
    x0 = _as_state(x0, coeffs.dim)
    if not tube.contains(t, x0):
        raise ValueError(f"initial point {x0.tolist()} is not in K({t})")
    if config.hurst is not None:
        report = check_assumptions(coeffs, alpha, config.hurst)
        failed = [k for k, v in report.gates.items() if v <= 0]
        if failed:
            raise ValueError(f"assumption gates fail: {failed}")
    T = g.t1 if config.T is None else config.T
    gw = g.window(t, T)
    n = gw.n
    gam = _default_gamma(coeffs, alpha) if config.gamma is None else config.gamma

    B0 = config.B0
    if B0 is None:
        pilot = solve_euler(coeffs, g, x0, t, T)
        B0 = 2.0 * max(1.0 + float(np.linalg.norm(x0)), holder_norm(pilot, 1 - alpha, t, T))
    ledger = compute_ledger(coeffs, g, alpha, t, T, x0, B0=B0, gamma=gam)
    h_apriori = select_step(epsilon, ledger, alpha, coeffs.beta, gam)

    op = StieltjesOperator(g, alpha, t, T)
    times, gvals = gw.times, gw.values
    X = np.empty((n, coeffs.dim))
    X[0] = x0
    lag = times - t
    budget = config.safety * epsilon * lag
    breakpoints, certificates = [0], []
    cap = n - 1 if config.max_cells is None else config.max_cells
    c, j = 0, 0
    while c < n - 1:
        cells_left = n - 1 - c
        m = min(max(1, (n - 1) >> j), cells_left, cap)
        T_c, x_c = float(times[c]), X[c]
        cert = contingency_check(T_c, x_c, coeffs, g, tube, times[c + m] - T_c, alpha,
                                 gam, ledger)
        ok = cert.holds
        if ok:
            P = _predictor(coeffs, times[c : c + m + 1], gvals[c : c + m + 1], x_c)
            trial = X.copy()
            trial[c + 1 : c + m + 1] = P[1:] + cert.Q.values[1:]
            trial[c + m + 1 :] = trial[c + m]
            xi = error_function(GridFunction(times, trial), coeffs, g, x0, alpha, t, op)
            seg = np.linalg.norm(xi.values[c + 1 : c + m + 1], axis=1)
            ok = bool(np.all(seg <= budget[c + 1 : c + m + 1]))
        if ok:
            X[c + 1 : c + m + 1] = trial[c + 1 : c + m + 1]
            c += m
            breakpoints.append(c)
            certificates.append(cert)
            j = max(j - 1, 0)
            continue
        if m > 1:
            j += 1
            continue
        diag, expo, q_active = _diagnose(T_c, x_c, coeffs, g, tube, alpha, gam, ledger,
                                         cells_left, gw, c)
        if q_active and (not math.isfinite(expo) or expo < 1 + gam):
            raise ViabilityViolation(
                f"contingency fails at t={T_c:.6g}, x={x_c.tolist()}: "
                f"|Q| grows with exponent {expo:.3g} < 1 + gamma = {1 + gam:.3g}",
                time=T_c, point=x_c.tolist(), q_growth_exponent=expo, certificate=diag,
            )
        raise ResolutionError(
            f"error budget eps={epsilon} cannot be met by one grid cell at t={T_c:.6g}; "
            "refine the grid"
        )

    Xf = GridFunction(times, X)
    xi = error_function(Xf, coeffs, g, x0, alpha, t, op)
    B0_meas = holder_norm(Xf, 1 - alpha, t, T)
    if B0_meas > ledger.B0:
        raise BudgetError(f"||X||_(1-alpha) = {B0_meas:.6g} exceeds B0 = {ledger.B0:.6g}")
    sol = ApproximateSolution(
        epsilon=float(epsilon), X=Xf, xi=xi, B0_measured=B0_meas,
        D0_measured=holder_constant(xi, 1 - alpha), ledger=ledger,
        breakpoints=breakpoints, certificates=certificates, h_apriori=h_apriori,
    )
    failed = [k for k, v in sol.check_invariants(tube).items() if not v]
    if failed:
        raise FracviaError(f"approximate solution violates invariants: {failed}")
    return sol


# --------------------------------------------------------------------------
# Refinement and invariance
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    """Pairwise distances of successive builds and the fitted rate."""

    epsilons: list
    distances: list
    predicted: list
    rate_exponent: float
    builds: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"epsilons": self.epsilons, "distances": self.distances,
                "predicted": self.predicted, "rate_exponent": self.rate_exponent}


def fit_rate(epsilons, distances) -> float:
    """Slope of ``log distance`` against ``log eps`` (``nan`` if under 2 points)."""
    e = np.asarray(epsilons[: len(distances)], dtype=float)
    d = np.asarray(distances, dtype=float)
    keep = d > 0
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(e[keep]), np.log(d[keep]), 1)[0])


def refine_to_limit(t: float, x0, coeffs: CoefficientPair, g: GridFunction,
                    tube: ConstraintTube, alpha: float, eps_sequence,
                    config: BuilderConfig | None = None,
                    slack: float = 0.1) -> tuple[GridFunction, ConvergenceReport]:
    """Build for each ``eps`` and report ``||X^eps - X^eta||_inf`` for neighbours.

    Raises:
        ConvergenceError: a distance grows by more than ``slack`` relative to
            the previous nonzero one.
    """
    eps = [float(e) for e in eps_sequence]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_sequence must be strictly decreasing")
    builds = [build_viable_solution(t, x0, coeffs, g, tube, e, alpha, config) for e in eps]
    dists = [float(np.max(np.abs(a.X.values - b.X.values))) for a, b in zip(builds, builds[1:])]
    predicted = [builds[0].ledger.cauchy_bound(a, b) for a, b in zip(eps, eps[1:])]
    report = ConvergenceReport(eps, dists, predicted, fit_rate(eps, dists), builds)
    # identical successive builds (distance 0) carry no rate information
    last = None
    for d in dists:
        if last is not None and d > last * (1 + slack) + 1e-12:
            raise ConvergenceError(
                f"distance {d:.3e} exceeds previous {last:.3e}",
                history=dists, table=report.as_dict(),
            )
        if d > 0:
            last = d
    return builds[-1].X, report


@dataclass(frozen=True)
class InvarianceReport:
    passed: bool
    first_exit_index: int | None
    first_exit_time: float | None
    max_signed_distance: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def invariance_sweep(X: GridFunction, tube: ConstraintTube) -> InvarianceReport:
    """Membership at every node and the largest signed distance to ``K``."""
    inside = np.array([tube.contains(s, x) for s, x in zip(X.times, X.values)])
    dist = max(tube.distance(s, x) for s, x in zip(X.times, X.values))
    if inside.all():
        return InvarianceReport(True, None, None, float(dist))
    idx = int(np.argmin(inside))
    return InvarianceReport(False, idx, float(X.times[idx]), float(dist))
