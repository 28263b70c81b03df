"""Level adjustment for the multivariate TOST (the alpha-TOST).

The adjusted level ``alpha*`` solves ``p(gamma, lambda(gamma)) = alpha`` for
``gamma`` in ``[alpha, 0.5)``. Because the least favourable point ``lambda``
moves with the level, the solver nests two loops: the outer loop recomputes
``lambda`` at the current level, the inner loop runs the fixed-point map

    gamma_k = gamma_{k-1} + alpha - p(gamma_{k-1}, lambda_fixed)

which contracts whenever the slope of ``p`` in ``gamma`` lies in (0, 2).
All evaluations inside one solve share a single frozen draw set; the size
reported at the end comes from an independent draw set.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import tost_decide
from .exceptions import DomainError, ExistenceError, NonConvergenceError
from .kernels import PowerEstimate, RngStream, std_normal_ppf
from .power import PowerSurface, find_lambda

__all__ = [
    "ExistenceReport",
    "AlphaStarResult",
    "ATostResult",
    "existence_check",
    "inner_fixed_point",
    "alpha_star",
    "atost_decide",
]

_UPPER = 0.5 - 1e-9


@dataclass(frozen=True)
class ExistenceReport:
    """Sufficient condition for an adjusted level to exist under independence."""

    holds: bool
    bound: float
    alpha_condition: bool
    sigma_max: float
    m: int

    def to_dict(self):
        return {
            "holds": self.holds,
            "bound": self.bound,
            "alpha_condition": self.alpha_condition,
            "sigma_max": self.sigma_max,
            "m": self.m,
        }


def existence_check(sigma_max, m, spec):
    """Check ``alpha < 2^-m`` and ``sigma_max < 2c / Phi^-1(alpha^(1/m) + 1/2)``.

    The condition is sufficient when the outcomes are independent. Under
    near-perfect dependence pass ``m=1``. ``bound`` is 0 when the level
    condition fails since no standard error can then satisfy it.
    """
    if m < 1:
        raise DomainError("m must be positive")
    alpha_ok = spec.alpha < 0.5**m
    bound = 2.0 * spec.c / std_normal_ppf(spec.alpha ** (1.0 / m) + 0.5) if alpha_ok else 0.0
    holds = bool(alpha_ok and sigma_max < bound)
    return ExistenceReport(holds, float(bound), bool(alpha_ok), float(sigma_max), int(m))


@dataclass(frozen=True)
class AlphaStarResult:
    alpha_star: float
    lambda_: np.ndarray
    face: int
    outer_iters: int
    inner_iters_per_outer: list
    achieved_size: PowerEstimate
    search_size: float
    converged: bool
    inner_traces: list = field(default_factory=list)

    def to_dict(self):
        return {
            "alpha_star": self.alpha_star,
            "lambda": self.lambda_.tolist(),
            "face": self.face,
            "outer_iters": self.outer_iters,
            "inner_iters_per_outer": list(self.inner_iters_per_outer),
            "achieved_size": None if self.achieved_size is None else self.achieved_size.value,
            "achieved_size_se": None if self.achieved_size is None else self.achieved_size.std_error,
            "converged": self.converged,
        }


def _surface(sigma, nu, spec, mc, rng):
    return PowerSurface(sigma, nu, spec.c, mc, rng)


def _slope(surface, gamma, lam, h=1e-5):
    lo, hi = max(gamma - h, 1e-12), min(gamma + h, _UPPER)
    return (surface.power_value(hi, lam) - surface.power_value(lo, lam)) / (hi - lo)


def inner_fixed_point(
    level_start,
    lambda_fixed,
    sigma=None,
    nu=None,
    spec=None,
    tol=1e-4,
    max_iter=50,
    rng=None,
    mc=None,
    surface=None,
):
    """Iterate ``gamma <- gamma + alpha - p(gamma, lambda_fixed)`` to its fixed point.

    Returns
    -------
    level : float
    trace : list of float
        Every iterate, starting with ``level_start``.

    Raises
    ------
    ExistenceError
        If the slope of ``p`` leaves (0, 2) or an iterate reaches 0.5.
    NonConvergenceError
        If ``max_iter`` steps do not bring successive iterates within ``tol``.
    """
    alpha = spec.alpha
    if not alpha <= level_start < 0.5:
        raise DomainError(f"level_start must lie in [{alpha}, 0.5)")
    if surface is None:
        surface = _surface(sigma, nu, spec, mc, rng)
    lam = np.asarray(lambda_fixed, dtype=float)
    gamma = float(level_start)
    trace = [gamma]
    for _ in range(max_iter):
        slope = _slope(surface, gamma, lam)
        if not 0.0 < slope < 2.0:
            raise ExistenceError(
                f"power slope {slope:.4g} at level {gamma:.6g} is outside (0, 2)",
                trace=trace,
                slope=slope,
            )
        step = alpha - surface.power_value(gamma, lam)
        nxt = gamma + step
        if nxt >= 0.5:
            raise ExistenceError(f"iterate {nxt:.6g} left [alpha, 0.5)", trace=trace, slope=slope)
        nxt = min(max(nxt, alpha), _UPPER)
        trace.append(nxt)
        if abs(nxt - gamma) <= tol:
            return nxt, trace
        gamma = nxt
    raise NonConvergenceError(f"no fixed point within {max_iter} iterations", trace=trace)


def alpha_star(
    sigma, nu, spec, tol=1e-4, r_max=10, rng=None, mc=None, max_iter=50, evaluate_size=True
):
    """Adjusted level at which the multivariate TOST has size ``spec.alpha``.

    Parameters
    ----------
    sigma : array_like (m, m)
        Covariance used for the adjustment (true or estimated).
    nu : int or "known"
    spec : EquivalenceSpec
    tol : float
        Tolerance on the level scale for both loops.
    r_max : int
        Maximum number of outer (lambda) updates.
    rng : RngStream or int, optional
    mc : MCConfig, optional
    max_iter : int
        Inner iteration budget.
    evaluate_size : bool
        Re-estimate the size at the solution on an independent draw set.
        When False ``achieved_size`` is None.

    Returns
    -------
    AlphaStarResult

    Raises
    ------
    NonConvergenceError
        After ``r_max`` outer iterations; ``err.partial`` holds the last state.
    ExistenceError
        Propagated from the inner loop.
    """
    rng = rng if isinstance(rng, RngStream) else RngStream(0 if rng is None else int(rng))
    alpha = spec.alpha
    surface = _surface(sigma, nu, spec, mc, rng.child(0))
    gamma = alpha
    lam = find_lambda(gamma, surface=surface)
    p = lam.sup_power.value
    inner_iters, traces = [], []
    r = 0
    while abs(p - alpha) > tol and r <= r_max:
        gamma, trace = inner_fixed_point(
            gamma, lam.lambda_, spec=spec, tol=tol, max_iter=max_iter, surface=surface
        )
        inner_iters.append(len(trace) - 1)
        traces.append(trace)
        r += 1
        lam = find_lambda(gamma, surface=surface, start=lam)
        p = lam.sup_power.value
    converged = abs(p - alpha) <= tol
    achieved = None
    if evaluate_size:
        achieved = _surface(sigma, nu, spec, mc, rng.child(1)).power(gamma, lam.lambda_)
    result = AlphaStarResult(
        alpha_star=float(gamma),
        lambda_=lam.lambda_,
        face=lam.face,
        outer_iters=r,
        inner_iters_per_outer=inner_iters,
        achieved_size=achieved,
        search_size=float(p),
        converged=bool(converged),
        inner_traces=traces,
    )
    if not converged:
        raise NonConvergenceError(
            f"size {p:.6g} still differs from {alpha} after {r} outer iterations",
            trace=[t[-1] for t in traces],
            partial=result,
        )
    return result


@dataclass(frozen=True)
class ATostResult:
    decision: object
    alpha_star: AlphaStarResult = None
    adjusted: bool = True
    reason: str = None
    existence: ExistenceReport = None

    def to_dict(self):
        return {
            "adjusted": self.adjusted,
            "reason": self.reason,
            "decision": self.decision.to_dict(),
            "alpha_star": None if self.alpha_star is None else self.alpha_star.to_dict(),
            "existence": None if self.existence is None else self.existence.to_dict(),
        }


def atost_decide(stats, spec, tol=1e-4, r_max=10, rng=None, mc=None):
    """Multivariate alpha-TOST: solve for the adjusted level on ``stats.sigma_hat``.

    When the solver cannot reach an adjusted level the conventional TOST at
    ``spec.alpha`` is returned with ``adjusted=False`` and the reason.
    """
    existence = existence_check(float(np.max(stats.se)), stats.m, spec)
    try:
        res = alpha_star(stats.sigma_hat, stats.nu, spec, tol=tol, r_max=r_max, rng=rng, mc=mc)
    except (ExistenceError, NonConvergenceError) as err:
        return ATostResult(tost_decide(stats, spec, spec.alpha), None, False, str(err), existence)
    return ATostResult(tost_decide(stats, spec, res.alpha_star), res, True, None, existence)
