"""Pathwise solution of ``X_s = x + int_t^s b(r, X_r) dr + int_t^s sigma(r, X_r) dg(r)``.

Two schemes are provided: Picard iteration on the integral equation, with
the Stieltjes integral evaluated by :class:`~fracvia.fraccalc.StieltjesOperator`,
and the explicit Euler scheme built from the frozen-coefficient predictor.
The module also assembles every constant of the a-priori estimates into an
:class:`EstimateLedger` and checks those estimates numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConvergenceError, NonFiniteError
from .fraccalc import (
    CheckReport,
    StieltjesOperator,
    _check,
    _coarse,
    delta_seminorm,
    holder_norm,
    lambda_alpha,
    log_norm_alpha_lambda,
    norm_alpha_infty,
    norm_alpha_lambda,
    prop1_constants,
    sup_norm,
)
from .grid import GridFunction, require_same_grid

LAMBDA_STITCH = 1e6
MIN_PIECE_CELLS = 8


# --------------------------------------------------------------------------
# Coefficients
# --------------------------------------------------------------------------


def _const(value: float) -> Callable[[float], float]:
    return lambda R: float(value)


@dataclass(frozen=True)
class CoefficientPair:
    """Drift ``b(t, x)`` in ``R^d`` and diffusion ``sigma(t, x)`` in ``R^{d x k}``.

    The constants are the ones of the standing assumptions: ``M0`` bounds the
    Lipschitz/Hölder modulus of ``sigma``, ``MR(R)`` that of its gradient on
    the ball of radius ``R``, ``L0`` the linear growth of ``b`` and ``LR(R)``
    its local Lipschitz/Hölder modulus.

    ``drift_batch`` and ``diffusion_batch`` are optional vectorized versions
    taking ``(times[n], X[n, d])``; they are used along whole paths when given.
    """

    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    dim: int
    channels: int
    M0: float
    L0: float
    MR: Callable[[float], float]
    LR: Callable[[float], float]
    beta: float = 1.0
    delta: float = 1.0
    mu: float = 1.0
    gradient: Callable[[float, np.ndarray], np.ndarray] | None = None
    drift_batch: Callable | None = None
    diffusion_batch: Callable | None = None
    name: str = "custom"

    def __post_init__(self) -> None:
        for label in ("beta", "delta", "mu"):
            value = getattr(self, label)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{label} must lie in (0, 1], got {value!r}")
        if self.M0 < 0 or self.L0 < 0:
            raise ValueError("M0 and L0 must be nonnegative")
        if self.dim < 1 or self.channels < 1:
            raise ValueError("dim and channels must be positive")

    @property
    def alpha0(self) -> float:
        """``min{1/2, beta, delta/(1+delta)}``."""
        return min(0.5, self.beta, self.delta / (1.0 + self.delta))

    def M0T(self, T: float) -> float:
        """Linear-growth constant of ``sigma`` on ``[0, T]``."""
        s00 = float(np.linalg.norm(self.sigma(0.0, np.zeros(self.dim))))
        return s00 + self.M0 * (1.0 + T**self.beta)

    def b(self, t: float, x) -> np.ndarray:
        out = np.asarray(self.drift(t, np.asarray(x, dtype=float)), dtype=float)
        return out.reshape(self.dim)

    def sigma(self, t: float, x) -> np.ndarray:
        out = np.asarray(self.diffusion(t, np.asarray(x, dtype=float)), dtype=float)
        return out.reshape(self.dim, self.channels)

    def grad_sigma(self, t: float, x) -> np.ndarray:
        """``[i, j, c] = d sigma_{i c} / d x_j``; central differences by default."""
        x = np.asarray(x, dtype=float).reshape(self.dim)
        if self.gradient is not None:
            out = np.asarray(self.gradient(t, x), dtype=float)
            return out.reshape(self.dim, self.dim, self.channels)
        step = 1e-6 * (1.0 + np.linalg.norm(x))
        out = np.empty((self.dim, self.dim, self.channels))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = step
            out[:, j, :] = (self.sigma(t, x + e) - self.sigma(t, x - e)) / (2 * step)
        return out

    def drift_values(self, times: np.ndarray, X: np.ndarray) -> np.ndarray:
        """``b`` along a path, shape ``(n, d)``."""
        X = np.asarray(X, dtype=float).reshape(len(times), self.dim)
        if self.drift_batch is not None:
            out = np.asarray(self.drift_batch(times, X), dtype=float)
            out = out.reshape(len(times), self.dim)
        else:
            out = np.array([self.b(t, x) for t, x in zip(times, X)])
        return _finite(out, "drift")

    def diffusion_values(self, times: np.ndarray, X: np.ndarray) -> np.ndarray:
        """``sigma`` along a path, shape ``(n, d, k)``."""
        X = np.asarray(X, dtype=float).reshape(len(times), self.dim)
        if self.diffusion_batch is not None:
            out = np.asarray(self.diffusion_batch(times, X), dtype=float)
            out = out.reshape(len(times), self.dim, self.channels)
        else:
            out = np.array([self.sigma(t, x) for t, x in zip(times, X)])
        return _finite(out, "diffusion")


def _finite(values: np.ndarray, label: str) -> np.ndarray:
    bad = ~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1)
    if bad.any():
        idx = int(np.argmax(bad))
        raise NonFiniteError(f"{label} is not finite at node {idx}", index=idx)
    return values


def linear_coefficients(drift_slope: float = 0.0, drift_offset: float = 0.0,
                        diffusion_slope: float = 1.0,
                        diffusion_offset: float = 0.0) -> CoefficientPair:
    """Scalar ``b = a_b x + c_b`` and ``sigma = a_s x + c_s``."""
    ab, cb, as_, cs = map(float, (drift_slope, drift_offset, diffusion_slope,
                                  diffusion_offset))
    return CoefficientPair(
        drift=lambda t, x: ab * x + cb,
        diffusion=lambda t, x: as_ * x + cs,
        dim=1,
        channels=1,
        M0=abs(as_),
        L0=max(abs(ab), abs(cb)),
        MR=_const(0.0),
        LR=_const(abs(ab)),
        gradient=lambda t, x: np.full((1, 1, 1), as_),
        drift_batch=lambda t, X: ab * X + cb,
        diffusion_batch=lambda t, X: (as_ * X + cs)[:, :, None],
        name="linear",
    )


def sin_coefficients(amplitude: float = 1.0, drift_slope: float = 0.0) -> CoefficientPair:
    """Scalar ``b = a_b x`` and ``sigma = a sin x``."""
    a, ab = float(amplitude), float(drift_slope)
    return CoefficientPair(
        drift=lambda t, x: ab * x,
        diffusion=lambda t, x: a * np.sin(x),
        dim=1,
        channels=1,
        M0=abs(a),
        L0=abs(ab),
        MR=_const(abs(a)),
        LR=_const(abs(ab)),
        gradient=lambda t, x: np.full((1, 1, 1), a * math.cos(float(x[0]))),
        drift_batch=lambda t, X: ab * X,
        diffusion_batch=lambda t, X: (a * np.sin(X))[:, :, None],
        name="sin",
    )


def _ball_sigma(x: np.ndarray, s0: float) -> np.ndarray:
    ax = np.abs(x)
    return np.where(ax <= 2.0, s0 * (1.0 - x**2 / 4.0), -s0 * (ax - 2.0))


def ball_coefficients(s0: float = 0.5) -> CoefficientPair:
    """Scalar ``b = -x`` and a diffusion vanishing on ``|x| = 2``.

    Inside the ball ``sigma = s0 (1 - x^2/4)``; outside it continues as
    ``-s0 (|x| - 2)``, which keeps ``sigma`` globally Lipschitz with a
    Lipschitz gradient.
    """
    s0 = float(s0)

    def grad(t, x):
        x0 = float(x[0])
        slope = -s0 * x0 / 2.0 if abs(x0) <= 2.0 else -s0 * math.copysign(1.0, x0)
        return np.full((1, 1, 1), slope)

    return CoefficientPair(
        drift=lambda t, x: -x,
        diffusion=lambda t, x: _ball_sigma(x, s0),
        dim=1,
        channels=1,
        M0=abs(s0),
        L0=1.0,
        MR=_const(abs(s0) / 2.0),
        LR=_const(1.0),
        gradient=grad,
        drift_batch=lambda t, X: -X,
        diffusion_batch=lambda t, X: _ball_sigma(X, s0)[:, :, None],
        name="ball",
    )


def outward_coefficients(level: float = 1.0) -> CoefficientPair:
    """Scalar ``b = -x`` and constant ``sigma = level``."""
    c = float(level)
    return CoefficientPair(
        drift=lambda t, x: -x,
        diffusion=lambda t, x: np.full_like(x, c),
        dim=1,
        channels=1,
        M0=0.0,
        L0=1.0,
        MR=_const(0.0),
        LR=_const(1.0),
        gradient=lambda t, x: np.zeros((1, 1, 1)),
        drift_batch=lambda t, X: -X,
        diffusion_batch=lambda t, X: np.full((X.shape[0], 1, 1), c),
        name="outward",
    )


def zero_coefficients(dim: int = 1, channels: int = 1) -> CoefficientPair:
    """``b = 0`` and ``sigma = 0``."""
    return CoefficientPair(
        drift=lambda t, x: np.zeros(dim),
        diffusion=lambda t, x: np.zeros((dim, channels)),
        dim=dim,
        channels=channels,
        M0=0.0,
        L0=0.0,
        MR=_const(0.0),
        LR=_const(0.0),
        gradient=lambda t, x: np.zeros((dim, dim, channels)),
        drift_batch=lambda t, X: np.zeros((X.shape[0], dim)),
        diffusion_batch=lambda t, X: np.zeros((X.shape[0], dim, channels)),
        name="none",
    )


BUILTINS: dict[str, Callable[..., CoefficientPair]] = {
    "linear": linear_coefficients,
    "sin": sin_coefficients,
    "ball": ball_coefficients,
    "outward": outward_coefficients,
    "none": zero_coefficients,
}


def builtin(name: str, **params) -> CoefficientPair:
    """Look up a builtin coefficient family by name."""
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown coefficients {name!r}; choose from {sorted(BUILTINS)}")
    return factory(**params)


# --------------------------------------------------------------------------
# Operators
# --------------------------------------------------------------------------


def _as_state(x0, dim: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(-1)
    if x.size != dim:
        raise ValueError(f"initial point has {x.size} entries, expected {dim}")
    return x


def _driver_channels(g: GridFunction, coeffs: CoefficientPair) -> None:
    if g.values.ndim != 2 or g.values.shape[1] != coeffs.channels:
        raise ValueError(
            f"driver has shape {g.value_shape}, coefficients expect {coeffs.channels} channels"
        )


def _drift_integral(times: np.ndarray, bvals: np.ndarray) -> np.ndarray:
    return cumulative_trapezoid(bvals, times, axis=0, initial=0.0)


def drift_path(f: GridFunction, coeffs: CoefficientPair, t: float, T: float) -> GridFunction:
    """``s -> int_t^s b(r, f(r)) dr`` by the trapezoid rule."""
    fw = f.window(t, T)
    bv = coeffs.drift_values(fw.times, fw.values)
    return GridFunction(fw.times, _drift_integral(fw.times, bv))


def drift_operator(f: GridFunction, coeffs: CoefficientPair, t: float, s: float) -> np.ndarray:
    """``int_t^s b(r, f(r)) dr`` as a ``d``-vector."""
    if s == t:
        return np.zeros(coeffs.dim)
    return drift_path(f, coeffs, t, s).values[-1]


def diffusion_path(f: GridFunction, g: GridFunction, coeffs: CoefficientPair,
                   alpha: float, t: float, T: float,
                   op: StieltjesOperator | None = None) -> GridFunction:
    """``s -> int_t^s sigma(r, f(r)) dg(r)`` on the nodes of ``[t, T]``."""
    require_same_grid(f, g)
    _driver_channels(g, coeffs)
    op = StieltjesOperator(g, alpha, t, T) if op is None else op
    fw = f.window(t, T)
    sv = coeffs.diffusion_values(fw.times, fw.values)
    return GridFunction(fw.times, op.apply(sv))


def diffusion_operator(f: GridFunction, g: GridFunction, coeffs: CoefficientPair,
                       alpha: float, t: float, s: float) -> np.ndarray:
    """``int_t^s sigma(r, f(r)) dg(r)`` as a ``d``-vector."""
    if s == t:
        return np.zeros(coeffs.dim)
    return diffusion_path(f, g, coeffs, alpha, t, s).values[-1]


# --------------------------------------------------------------------------
# Constant ledger
# --------------------------------------------------------------------------


def _smallest_lambda(terms: list[tuple[float, float]], target: float = 0.5) -> float:
    """Smallest ``lam >= 1`` with ``sum c * lam**(-e) <= target``.

    Bisection on ``log lam``; each term is decreasing in ``lam``.
    """
    terms = [(c, e) for c, e in terms if c > 0]
    if not terms:
        return 1.0

    def excess(log_lam):
        return sum(c * math.exp(-e * log_lam) for c, e in terms) - target

    if excess(0.0) <= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    while excess(hi) > 0:
        lo, hi = hi, 2 * hi
        if hi > 1e5:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return math.exp(hi)


def _log_C0(K: float, lam0: float, horizon: float) -> float:
    """``log(1 + K (1 + 2 exp(lam0 * horizon)))`` without overflow."""
    if K <= 0:
        return 0.0
    inner = np.logaddexp(0.0, math.log(2.0) + lam0 * horizon)
    return float(np.logaddexp(0.0, math.log(K) + inner))


@dataclass(frozen=True)
class EstimateLedger:
    """Every constant of the a-priori estimates, assembled in closed form.

    All constants refer to a window ``[t, T]`` of length ``horizon``. The
    radius-dependent constants (``CRb3``, ``CRs3``, ``CR1`` to ``CR4``) use
    ``radius``; the viability constants use the radius budget ``B0``.
    """

    alpha: float
    horizon: float
    Lambda: float
    radius: float
    A1: float
    A2: float
    C0b1: float
    C0b2: float
    CRb3: float
    C0s1: float
    C0s2: float
    CRs3: float
    CR1: float
    CR2: float
    CR3: float
    CR4: float
    B0: float
    D0: float
    lambda0: float
    lambda_bar: float
    C0: float
    log_C0: float
    gamma: float
    gamma_prime: float
    G0: float
    G_tilde0: float
    C_xi: float
    delta_bound: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    def cauchy_bound(self, eps: float, eta: float) -> float:
        """``2 C exp(lambda_bar T) (eps^(1/2-a) + eta^(1/2-a))`` (``inf`` on overflow)."""
        p = 0.5 - self.alpha
        log_val = (math.log(2 * self.C_xi) + self.lambda_bar * self.horizon
                   + math.log(eps**p + eta**p))
        return math.exp(log_val) if log_val < 700 else math.inf


def compute_ledger(coeffs: CoefficientPair, g: GridFunction, alpha: float, t: float,
                   T: float, x0=0.0, B0: float | None = None, R: float | None = None,
                   gamma: float | None = None, Lambda: float | None = None) -> EstimateLedger:
    """Assemble the ledger for ``coeffs`` driven by ``g`` on ``[t, T]``.

    Args:
        B0: radius budget of the approximate solutions; defaults to
            ``2 (1 + |x0|)``.
        R: radius for the local constants; defaults to ``B0``.
        gamma: growth exponent of the correction term; defaults to
            ``min{beta - alpha, 1 - 2 alpha}``.
        Lambda: precomputed ``Lambda_alpha(g; [t, T])``.
    """
    a, be, de = alpha, coeffs.beta, coeffs.delta
    if not 0 < a < coeffs.alpha0:
        raise ValueError(f"alpha={a} must lie in (0, alpha0={coeffs.alpha0:.6g})")
    Th = T - t
    lam_g = lambda_alpha(g, a, t, T) if Lambda is None else float(Lambda)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    R0 = float(np.linalg.norm(x0))
    B0 = 2.0 * (1.0 + R0) if B0 is None else float(B0)
    R = B0 if R is None else float(R)
    M0, L0, MR, LR = coeffs.M0, coeffs.L0, coeffs.MR(R), coeffs.LR(R)
    gp = min(be - a, 1 - 2 * a)
    gam = gp if gamma is None else float(gamma)

    A1, A2 = prop1_constants(a, Th)
    holder_gain = 1.0 + Th ** (be - a) / (be - a)
    sig = (coeffs.M0T(Th) + M0) * holder_gain
    C0s1, C0s2 = A1 * sig, A2 * sig
    CRs3 = A2 * (M0 + MR) * holder_gain
    C0b1 = L0 * (Th + Th**a)
    C0b2 = L0 * (Th**a + 1.0 / a) * Th ** (1 - 2 * a) / (1 - 2 * a)
    CRb3 = LR * (Th**a + 1.0 / a) * Th ** (1 - 2 * a) / (1 - 2 * a)

    CR1 = (R + 1.0 + Th) * LR
    CR2 = lam_g * M0 * (
        Th ** (be - a - gp) * (1 + 1 / (be - a)) / (1 + be - a)
        + R * Th ** (1 - 2 * a - gp) * (1 + 1 / (1 - 2 * a)) / (2 - 2 * a)
    )
    CR3 = 2.0 * (1.0 + R) * L0
    CR4 = lam_g * M0 * (
        (Th**be + R * Th ** (1 - a)) / (1 - a)
        + Th**be / ((be - a) * (1 + be - a))
        + R * Th ** (1 - a) / ((1 - 2 * a) * (2 - 2 * a))
    )

    lam0 = _smallest_lambda([(C0b2, min(a, 1 - 2 * a)), (lam_g * C0s2, 1 - 2 * a)])
    K = C0b1 + lam_g * C0s1
    log_C0 = _log_C0(K, lam0, Th)
    C0 = math.exp(log_C0) if log_C0 < 700 else math.inf

    # viability constants at the radius budget
    MRB, LRB = coeffs.MR(B0), coeffs.LR(B0)
    CR1B = (B0 + 1.0 + Th) * LRB
    CR2B = CR2 if R == B0 else compute_ledger(
        coeffs, g, a, t, T, x0, B0=B0, R=B0, gamma=gam, Lambda=lam_g).CR2
    CR3B = 2.0 * (1.0 + B0) * L0
    CR4B = CR4 if R == B0 else compute_ledger(
        coeffs, g, a, t, T, x0, B0=B0, R=B0, gamma=gam, Lambda=lam_g).CR4
    G_tilde0 = CR1B * Th ** (1 - a - gam) + CR2B * Th ** (gp - gam)
    G0 = CR3B * Th**a + CR4B
    D0 = (B0 + C0b1 * (1 + B0)
          + lam_g * C0s1 * (1 + B0 * (1 + Th ** (1 - 2 * a) / (1 - 2 * a))))
    kappa = de - a * (1 + de)
    delta_bound = B0**de * Th**kappa / kappa
    CRs3B = A2 * (M0 + MRB) * holder_gain
    CRb3B = LRB * (Th**a + 1.0 / a) * Th ** (1 - 2 * a) / (1 - 2 * a)
    lam_bar = _smallest_lambda(
        [(CRb3B, a), (CRs3B * lam_g * (1 + 2 * delta_bound), 1 - 2 * a)]
    )
    p = 0.5 - a
    C_xi = Th + (2 * Th) ** p * D0 ** (0.5 + a) * Th ** (p * (1 + a)) / (p * (1 + a))

    return EstimateLedger(
        alpha=a, horizon=Th, Lambda=lam_g, radius=R, A1=A1, A2=A2,
        C0b1=C0b1, C0b2=C0b2, CRb3=CRb3, C0s1=C0s1, C0s2=C0s2, CRs3=CRs3,
        CR1=CR1, CR2=CR2, CR3=CR3, CR4=CR4, B0=B0, D0=D0,
        lambda0=lam0, lambda_bar=lam_bar, C0=C0, log_C0=log_C0,
        gamma=gam, gamma_prime=gp, G0=G0, G_tilde0=G_tilde0, C_xi=C_xi,
        delta_bound=delta_bound,
    )


def apriori_holder_bound(x0, ledger: EstimateLedger) -> float:
    """``C0 (1 + |x0|)``; ``inf`` when ``C0`` overflows a float."""
    return ledger.C0 * (1.0 + float(np.linalg.norm(np.atleast_1d(x0))))


def apriori_log_bound(x0, ledger: EstimateLedger) -> float:
    """Natural log of :func:`apriori_holder_bound`, always finite."""
    return ledger.log_C0 + math.log1p(float(np.linalg.norm(np.atleast_1d(x0))))


# --------------------------------------------------------------------------
# Solvers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and iteration controls.

    ``lambda_strategy`` is ``"auto"`` (``lambda0`` from the ledger, with
    stitching when it exceeds ``1e6``) or a fixed positive weight.
    """

    alpha: float
    grid_points: int | None = None
    picard_tol: float = 1e-10
    picard_max_iter: int = 200
    lambda_strategy: str | float = "auto"
    hurst: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 1/2)")
        if self.hurst is not None and not 1.0 - self.hurst < self.alpha:
            raise ValueError(f"alpha={self.alpha} must exceed 1 - H = {1 - self.hurst}")
        if self.picard_tol <= 0 or self.picard_max_iter < 1:
            raise ValueError("picard_tol must be positive and picard_max_iter >= 1")
        if self.lambda_strategy != "auto":
            if float(self.lambda_strategy) <= 0:
                raise ValueError("a fixed lambda must be positive")


@dataclass(frozen=True)
class Piece:
    """One stitching subinterval and its contraction weight."""

    t: float
    T: float
    lambda0: float
    iterations: int


@dataclass(frozen=True)
class PicardSolution:
    """Converged Picard path together with its iteration record."""

    path: GridFunction
    iterations: int
    residual: float
    residual_history: list = field(default_factory=list)
    contraction_ratios: list = field(default_factory=list)
    pieces: list = field(default_factory=list)
    lambda0: float = 1.0
    ledger: EstimateLedger | None = None

    @property
    def max_contraction_ratio(self) -> float:
        return max(self.contraction_ratios, default=0.0)


def _check_solver_inputs(coeffs, g, alpha, t, T, x0):
    _driver_channels(g, coeffs)
    if not alpha < coeffs.alpha0:
        raise ValueError(f"alpha={alpha} must be below alpha0={coeffs.alpha0:.6g}")
    g.window(t, T)
    return _as_state(x0, coeffs.dim)


def _plan_pieces(coeffs, g, alpha, t, T, cap):
    """Split ``[t, T]`` at grid midpoints until each piece has ``lambda0 <= cap``."""
    i, j = g.index_of(t), g.index_of(T)
    out = []
    stack = [(i, j)]
    while stack:
        a, b = stack.pop()
        ta, tb = g.times[a], g.times[b]
        lam0 = compute_ledger(coeffs, g, alpha, ta, tb).lambda0
        if lam0 > cap and b - a >= 2 * MIN_PIECE_CELLS:
            mid = (a + b) // 2
            stack.extend([(mid, b), (a, mid)])
        else:
            out.append((a, b, lam0))
    return out


def _log_weighted(times, values, alpha, lam, t, T):
    return log_norm_alpha_lambda(GridFunction(times, values), alpha, lam, t, T)


def _picard_piece(coeffs, op, X, a, b, alpha, config, lam):
    """Iterate on the nodes ``a..b`` of ``X`` with the earlier nodes held fixed.

    ``op`` is the operator of the whole window and is causal, so every piece
    solves the same discrete equation as a single global solve would.
    """
    times = op.times
    x0 = X[0]
    ta, tb = float(times[a]), float(times[b])
    X[b + 1 :] = X[a]
    X[a + 1 : b + 1] = X[a]
    history, ratios = [], []
    prev_log = None
    for it in range(1, config.picard_max_iter + 1):
        bv = coeffs.drift_values(times, X)
        sv = coeffs.diffusion_values(times, X)
        new = (x0 + _drift_integral(times, bv) + op.apply(sv))[a : b + 1]
        if not np.all(np.isfinite(new)):
            raise NonFiniteError("Picard iterate is not finite", index=it)
        diff = new - X[a : b + 1]
        diff[0] = 0.0  # node a belongs to the previous piece
        change = float(np.max(np.abs(diff)))
        history.append(change)
        if change > 1e-8:
            cur = _log_weighted(times[a : b + 1], diff, alpha, lam, ta, tb)
            if prev_log is not None and np.isfinite(cur) and np.isfinite(prev_log):
                ratios.append(math.exp(cur - prev_log))
            prev_log = cur
        else:
            prev_log = None
        X[a + 1 : b + 1] = new[1:]
        X[b + 1 :] = X[b]
        if change < config.picard_tol:
            break
    else:
        raise ConvergenceError(
            f"Picard iteration did not converge in {config.picard_max_iter} steps "
            f"on [{ta}, {tb}]; last change {history[-1]:.3e}",
            history=history,
        )
    return it, history, ratios


def solve_picard(coeffs: CoefficientPair, g: GridFunction, x0, t: float, T: float,
                 config: SolverConfig) -> PicardSolution:
    """Solve the integral equation by Picard iteration from ``X ≡ x0``.

    The contraction ratio of successive iterates is measured in the weighted
    seminorm with ``lambda0`` from the ledger. When ``lambda0`` exceeds
    ``1e6`` the window is split into pieces with smaller ``lambda0``; the
    pieces are iterated in order, each against the integral from ``t``, so
    the result solves the discrete equation on the whole window.

    Raises:
        ConvergenceError: no convergence within ``picard_max_iter`` steps.
        NonFiniteError: a coefficient evaluation or iterate is not finite.
    """
    xa = _check_solver_inputs(coeffs, g, config.alpha, t, T, x0)
    gw = g.window(t, T)
    if config.grid_points is not None and config.grid_points != gw.n:
        raise ValueError(
            f"driver has {gw.n} nodes on [{t}, {T}], config expects {config.grid_points}"
        )
    ledger = compute_ledger(coeffs, g, config.alpha, t, T, xa)
    if config.lambda_strategy == "auto":
        if ledger.lambda0 > LAMBDA_STITCH:
            plan = _plan_pieces(coeffs, g, config.alpha, t, T, LAMBDA_STITCH)
        else:
            plan = [(g.index_of(t), g.index_of(T), ledger.lambda0)]
    else:
        plan = [(g.index_of(t), g.index_of(T), float(config.lambda_strategy))]

    op = StieltjesOperator(g, config.alpha, t, T)
    base = g.index_of(t)
    X = np.tile(xa, (gw.n, 1))
    history, ratios, pieces = [], [], []
    total_iter = 0
    for a, b, lam in plan:
        it, hist, rat = _picard_piece(coeffs, op, X, a - base, b - base, config.alpha,
                                      config, lam)
        history.extend(hist)
        ratios.extend(rat)
        pieces.append(Piece(float(g.times[a]), float(g.times[b]), lam, it))
        total_iter += it
    times = gw.times
    bv = coeffs.drift_values(times, X)
    sv = coeffs.diffusion_values(times, X)
    residual = float(np.max(np.abs(X - xa - _drift_integral(times, bv) - op.apply(sv))))
    return PicardSolution(
        path=GridFunction(times, X),
        iterations=total_iter,
        residual=residual,
        residual_history=history,
        contraction_ratios=ratios,
        pieces=pieces,
        lambda0=max(p.lambda0 for p in pieces),
        ledger=ledger,
    )


def solve_euler(coeffs: CoefficientPair, g: GridFunction, x0, t: float, T: float,
                n: int | None = None) -> GridFunction:
    """Explicit scheme ``x_{i+1} = x_i + b dt + sigma (g_{i+1} - g_i)``.

    Args:
        n: number of nodes of the Euler grid; must select a uniform subgrid
            of the driver's nodes on ``[t, T]``. Defaults to all of them.

    Raises:
        NonFiniteError: the state blew up; ``index`` is the first bad node.
    """
    _driver_channels(g, coeffs)
    x = _as_state(x0, coeffs.dim)
    gw = g.window(t, T)
    m = gw.n
    if n is None:
        stride = 1
    else:
        if n < 2 or (m - 1) % (n - 1):
            raise ValueError(f"n={n} does not define a subgrid of the {m} driver nodes")
        stride = (m - 1) // (n - 1)
    times = gw.times[::stride]
    gv = gw.values[::stride]
    out = np.empty((times.size, coeffs.dim))
    out[0] = x
    for i in range(times.size - 1):
        dt = times[i + 1] - times[i]
        x = x + coeffs.b(times[i], x) * dt + coeffs.sigma(times[i], x) @ (gv[i + 1] - gv[i])
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(f"Euler state is not finite at node {i + 1}", index=i + 1)
        out[i + 1] = x
    return GridFunction(times, out)


# --------------------------------------------------------------------------
# Verification of the operator estimates
# --------------------------------------------------------------------------


def _allowance(fn, *fns: GridFunction) -> float:
    """Relative change of ``(lhs, rhs)`` under grid coarsening by 2."""
    coarse = [_coarse(f) for f in fns]
    if any(c is None for c in coarse):
        return 10.0 / fns[0].n
    (l1, r1), (l2, r2) = fn(*fns), fn(*coarse)
    scale = max(abs(r1), 1e-300)
    return (abs(l1 - l2) + abs(r1 - r2)) / scale


def verify_operator_estimates(f: GridFunction, h: GridFunction, g: GridFunction,
                              coeffs: CoefficientPair, alpha: float, lam: float,
                              t: float, T: float) -> list[CheckReport]:
    """Check the continuity estimates of the drift and diffusion operators.

    Covers the two diffusion bounds (Hölder and weighted), the weighted
    Lipschitz bound of the diffusion operator, the two drift bounds and the
    weighted Lipschitz bound of the drift operator. Each check passes iff
    ``lhs <= rhs (1 + tol)`` with ``tol = 1e-6 + quadrature allowance``.
    """
    require_same_grid(f, h, g)
    fw, hw, gw = f.window(t, T), h.window(t, T), g.window(t, T)
    a = alpha
    R = max(sup_norm(fw), sup_norm(hw))

    def parts(fw, hw, gw):
        led = compute_ledger(coeffs, gw, a, t, T, fw.values[0], R=R)
        Gf = diffusion_path(fw, gw, coeffs, a, t, T)
        Gh = diffusion_path(hw, gw, coeffs, a, t, T)
        Ff = drift_path(fw, coeffs, t, T)
        Fh = drift_path(hw, coeffs, t, T)
        lam_g = led.Lambda
        nf = norm_alpha_lambda(fw, a, lam, t, T)
        dfh = norm_alpha_lambda(fw.with_values(fw.values - hw.values), a, lam, t, T)
        dd = (delta_seminorm(fw, a, coeffs.delta, t, T)
              + delta_seminorm(hw, a, coeffs.delta, t, T))
        w = lam ** (1 - 2 * a)
        return {
            "cor1-holder": (holder_norm(Gf, 1 - a, t, T),
                            led.C0s1 * lam_g * (1 + norm_alpha_infty(fw, a, t, T)),
                            led.C0s1),
            "cor1-weighted": (norm_alpha_lambda(Gf, a, lam, t, T),
                              led.C0s2 * lam_g / w * (1 + nf), led.C0s2),
            "lemma1-lipschitz": (
                norm_alpha_lambda(Gf.with_values(Gf.values - Gh.values), a, lam, t, T),
                led.CRs3 * lam_g / w * (1 + dd) * dfh, led.CRs3),
            "lemma2-holder": (holder_norm(Ff, 1 - a, t, T),
                              led.C0b1 * (1 + sup_norm(fw)), led.C0b1),
            "lemma2-weighted": (norm_alpha_lambda(Ff, a, lam, t, T),
                                led.C0b2 / lam**a * (1 + nf), led.C0b2),
            "lemma2-lipschitz": (
                norm_alpha_lambda(Ff.with_values(Ff.values - Fh.values), a, lam, t, T),
                led.CRb3 / lam**a * dfh, led.CRb3),
        }

    fine = parts(fw, hw, gw)
    cf, ch, cg = _coarse(fw), _coarse(hw), _coarse(gw)
    coarse = parts(cf, ch, cg) if cf is not None else None
    reports = []
    for name, (lhs, rhs, const) in fine.items():
        if coarse is None:
            allow = 10.0 / fw.n
        else:
            l2, r2, _ = coarse[name]
            allow = (abs(lhs - l2) + abs(rhs - r2)) / max(abs(rhs), 1e-300)
        reports.append(_check(name, lhs, rhs, const, 1e-6 + allow))
    return reports


def verify_aux_estimates(Y: GridFunction, coeffs: CoefficientPair, g: GridFunction,
                         alpha: float, t: float, T: float | None = None,
                         R: float | None = None) -> list[CheckReport]:
    """Check the four frozen-coefficient deviation bounds along ``Y``.

    ``lhs`` is the measured constant (largest ratio of the deviation to the
    stated power of the time increment over all grid pairs) and ``rhs`` the
    ledger constant with radius ``R`` (default ``||Y||_{1-alpha}``).
    """
    require_same_grid(Y, g)
    T = Y.t1 if T is None else T
    a = alpha
    Yw = Y.window(t, T)
    R = holder_norm(Yw, 1 - a, t, T) if R is None else float(R)
    if holder_norm(Yw, 1 - a, t, T) > R * (1 + 1e-12):
        raise ValueError("the path's Hölder norm exceeds the radius R")
    led = compute_ledger(coeffs, g, a, t, T, Yw.values[0], R=R)
    times = Yw.times
    bv = coeffs.drift_values(times, Yw.values)
    sv = coeffs.diffusion_values(times, Yw.values)
    Ib = _drift_integral(times, bv - bv[0])
    Is = StieltjesOperator(g, a, t, T).apply(sv - sv[0])
    lag = times - t
    gp = led.gamma_prime

    def growth(I, power):
        vals = np.linalg.norm(I[1:], axis=1) / lag[1:] ** power
        return float(vals.max())

    def hoelder(I, power):
        n = I.shape[0]
        best = 0.0
        for k in range(1, n):
            inc = np.linalg.norm(I[k:] - I[:-k], axis=1).max()
            best = max(best, inc / (k * Yw.step) ** power)
        return best

    measured = {
        "lemma3-drift-growth": (growth(Ib, 2 - a), led.CR1),
        "lemma3-diffusion-growth": (growth(Is, 1 + gp), led.CR2),
        "lemma3-drift-increment": (hoelder(Ib, 1.0), led.CR3),
        "lemma3-diffusion-increment": (hoelder(Is, 1 - a), led.CR4),
    }
    tol = 1e-6 + 10.0 / Yw.n
    return [_check(name, lhs, rhs, rhs, tol) for name, (lhs, rhs) in measured.items()]


# --------------------------------------------------------------------------
# Assumption checks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    """Exponent gates and lattice checks; margins are ``> 0`` when satisfied."""

    gates: dict
    lattice: dict
    passed: bool
    tightest: str
    tightest_margin: float

    def as_dict(self) -> dict:
        return {
            "gates": self.gates,
            "lattice": self.lattice,
            "pass": self.passed,
            "tightest": self.tightest,
            "tightest_margin": self.tightest_margin,
        }


def check_assumptions(coeffs: CoefficientPair, alpha: float, hurst: float, T: float = 1.0,
                      radius: float = 3.0, samples: int = 400, seed: int = 0) -> AssumptionReport:
    """Gate the exponents and spot-check the coefficient constants.

    The lattice checks sample ``samples`` pairs of ``(t, x)`` in
    ``[0, T] x [-radius, radius]^d`` and report ``1 - max(lhs / rhs)`` as the
    margin of each inequality.
    """
    be, de, mu = coeffs.beta, coeffs.delta, coeffs.mu
    a0 = coeffs.alpha0
    gates = {
        "1-H<beta": be - (1 - hurst),
        "delta>(1-H)/H": de - (1 - hurst) / hurst,
        "1-H<alpha": alpha - (1 - hurst),
        "alpha<alpha0": a0 - alpha,
        "mu>1-alpha0": mu - (1 - a0),
        "1-mu<alpha": alpha - (1 - mu),
    }
    rng = np.random.default_rng(seed)
    d = coeffs.dim
    ts = rng.uniform(0, T, (samples, 2))
    xs = rng.uniform(-radius, radius, (samples, 2, d))
    worst = {"H1-i": 0.0, "H1-ii": 0.0, "H2-i": 0.0, "H2-ii": 0.0, "sigma-growth": 0.0}
    M0, MR, LR, L0, M0T = (coeffs.M0, coeffs.MR(radius), coeffs.LR(radius), coeffs.L0,
                           coeffs.M0T(T))
    slack = 1e-9
    for (t1, t2), (x1, x2) in zip(ts, xs):
        dt, dx = abs(t1 - t2), float(np.linalg.norm(x1 - x2))
        checks = {
            "H1-i": (np.linalg.norm(coeffs.sigma(t1, x1) - coeffs.sigma(t2, x2)),
                     M0 * (dt**be + dx)),
            "H1-ii": (np.linalg.norm(coeffs.grad_sigma(t1, x1) - coeffs.grad_sigma(t2, x2)),
                      MR * (dt**be + dx**de)),
            "H2-i": (np.linalg.norm(coeffs.b(t1, x1) - coeffs.b(t2, x2)),
                     LR * (dt**mu + dx)),
            "H2-ii": (np.linalg.norm(coeffs.b(t1, x1)), L0 * (1 + np.linalg.norm(x1))),
            "sigma-growth": (np.linalg.norm(coeffs.sigma(t1, x1)),
                             M0T * (1 + np.linalg.norm(x1))),
        }
        for name, (lhs, rhs) in checks.items():
            # finite-difference gradients carry O(1e-6) noise
            pad = 1e-5 if name == "H1-ii" and coeffs.gradient is None else slack
            excess = (lhs - pad) / rhs if rhs > 0 else (math.inf if lhs > pad else 0.0)
            worst[name] = max(worst[name], excess)
    lattice = {name: 1.0 - w for name, w in worst.items()}
    margins = {**gates, **lattice}
    tightest = min(margins, key=margins.get)
    passed = all(m > 0 for m in gates.values()) and all(m >= 0 for m in lattice.values())
    return AssumptionReport(gates, lattice, passed, tightest, float(margins[tightest]))
