"""Rejection probability, size and the least favourable null configuration.

The probability that the multivariate TOST declares equivalence is

    p(level, theta) = E_{Sigma_hat} [ Pr{ k_l(Sigma_hat) <= theta_hat <= k_u(Sigma_hat) } ]

with ``k_l = -c + t sigma_hat_j`` and ``k_u = c - t sigma_hat_j``. The outer
expectation runs over ``nu Sigma_hat ~ Wishart(nu, Sigma)`` and the inner
probability is a normal rectangle probability. Both layers are integrated
jointly on one randomized Sobol point set: the leading coordinates of a point
drive a Bartlett draw of ``Sigma_hat`` and the trailing ones a single
separation-of-variables path through the rectangle.

:class:`PowerSurface` freezes that point set, so the estimated power is a
smooth deterministic function of ``(level, theta)``. Searches over ``theta``
and fixed-point iterations over ``level`` then work with common random
numbers.
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from .core import KNOWN, critical_value, is_known
from .exceptions import DomainError
from .kernels import (
    MCConfig,
    PowerEstimate,
    RngStream,
    check_cov,
    sobol_uniforms,
    sov_integrand,
    wishart_sd_from_uniforms,
)

__all__ = [
    "KNOWN_MC",
    "ESTIMATED_MC",
    "PowerSurface",
    "LambdaResult",
    "power_mc",
    "power_known_sigma",
    "size_closed_form_indep",
    "find_lambda",
    "size",
]

#: Default budgets: known variance integrates only the rectangle; the
#: estimated-variance budget is 32768 joint Wishart/rectangle draws.
KNOWN_MC = MCConfig(8192, 16)
ESTIMATED_MC = MCConfig(2048, 16)


def _check_level(level):
    if not 0 < level < 0.5:
        raise DomainError(f"level must lie in (0, 0.5), got {level}")


class PowerSurface:
    """Power of the multivariate TOST with its random inputs frozen.

    Parameters
    ----------
    sigma : array_like (m, m)
        True covariance of the estimated differences.
    nu : int or "known"
        Degrees of freedom of the covariance estimate, or ``"known"`` for the
        known-variance regime (normal quantiles, no Wishart layer).
    c : float
        Symmetric equivalence margin.
    mc : MCConfig, optional
    rng : RngStream or int, optional
    """

    def __init__(self, sigma, nu, c, mc=None, rng=None):
        self.sigma = check_cov(sigma)
        self.m = m = self.sigma.shape[0]
        self.c = float(c)
        self.known = is_known(nu)
        if not self.known and (int(nu) != nu or nu < m):
            raise DomainError(f"nu={nu} must be an integer no smaller than m={m}")
        self.nu = KNOWN if self.known else int(nu)
        self.mc = mc or (KNOWN_MC if self.known else ESTIMATED_MC)
        self.rng = rng if isinstance(rng, RngStream) else RngStream(0 if rng is None else int(rng))
        # largest variance first; fixed per surface so the estimate stays smooth in theta
        self.order = np.argsort(-np.diag(self.sigma), kind="stable")
        s = self.sigma[np.ix_(self.order, self.order)]
        self.chol = np.linalg.cholesky(s)
        sd = np.sqrt(np.diag(s))
        self.exact = self.known and np.count_nonzero(s - np.diag(np.diag(s))) == 0
        R, N = self.mc.randomizations, self.mc.points
        if self.exact:
            self.sd_hat = sd
            self.w = None
        elif self.known:
            self.sd_hat = sd
            self.w = sobol_uniforms(m - 1, N, R, self.rng).reshape(R * N, m - 1)
        else:
            dw = m * (m + 1) // 2
            u = sobol_uniforms(dw + m - 1, N, R, self.rng)
            self.sd_hat = wishart_sd_from_uniforms(self.chol, self.nu, u[..., :dw]).reshape(R * N, m)
            self.w = u[..., dw:].reshape(R * N, m - 1)
        self.n_evaluations = 0

    @property
    def sd(self):
        """True marginal standard deviations in the original outcome order."""
        return np.sqrt(np.diag(self.sigma))

    def power(self, level, theta):
        """Probability of declaring equivalence at ``theta`` when testing at ``level``."""
        _check_level(level)
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.m:
            raise DomainError("theta has the wrong length")
        self.n_evaluations += 1
        q = critical_value(level, self.nu)
        th = theta[self.order]
        half = self.c - q * self.sd_hat
        if self.exact:
            if np.any(half < 0):
                return PowerEstimate(0.0, 0.0, 0, True)
            p = np.prod(ndtr((half - th) / self.sd_hat) - ndtr((-half - th) / self.sd_hat))
            return PowerEstimate(float(min(max(p, 0.0), 1.0)), 0.0, 0, True)
        if self.known and np.any(half < 0):
            return PowerEstimate(0.0, 0.0, 0, True)
        f = sov_integrand(self.chol, -half - th, half - th, self.w)
        means = f.reshape(self.mc.randomizations, self.mc.points).mean(axis=1)
        return PowerEstimate.from_replicates(means, self.mc.total)

    def power_value(self, level, theta):
        return self.power(level, theta).value


def power_mc(level, theta, sigma, nu, spec, mc=None, rng=None):
    """Probability that the multivariate TOST at ``level`` declares equivalence.

    Parameters
    ----------
    level : float
        Test level in (0, 0.5).
    theta : array_like (m,)
        True mean differences.
    sigma : array_like (m, m)
        True covariance of the estimator.
    nu : int or "known"
    spec : EquivalenceSpec
    mc : MCConfig, optional
        Default 2048 Sobol points times 16 randomizations.
    rng : RngStream or int, optional

    Returns
    -------
    PowerEstimate
    """
    return PowerSurface(sigma, nu, spec.c, mc, rng).power(level, theta)


def power_known_sigma(level, theta, sigma, spec, precision=None, rng=None):
    """Power when the covariance is known: normal quantiles, a single rectangle."""
    return PowerSurface(sigma, KNOWN, spec.c, precision, rng).power(level, theta)


def size_closed_form_indep(level, sigma_scalar, m, spec):
    """Exact size for ``Sigma = sigma^2 I_m`` known.

    ``{1 - Phi(z) - Phi(z - 2c/sigma)} {1 - 2 Phi(z - c/sigma)}^(m-1)`` with
    ``z`` the upper ``level`` normal quantile.
    """
    _check_level(level)
    if sigma_scalar <= 0 or m < 1:
        raise DomainError("need sigma > 0 and m >= 1")
    z = critical_value(level, KNOWN)
    r = spec.c / sigma_scalar
    first = 1.0 - ndtr(z) - ndtr(z - 2.0 * r)
    second = 1.0 - 2.0 * ndtr(z - r)
    return float(max(first, 0.0) * max(second, 0.0) ** (m - 1))


@dataclass(frozen=True)
class LambdaResult:
    """Boundary point of the null space with the largest rejection probability.

    ``face`` is the 0-based index of the coordinate pinned at ``face_sign * c``.
    """

    lambda_: np.ndarray
    face: int
    face_sign: int
    sup_power: PowerEstimate
    evaluations: int = 0


def _symmetric_twin(sigma, h, searched):
    for g in searched:
        perm = np.arange(sigma.shape[0])
        perm[[g, h]] = perm[[h, g]]
        if np.allclose(sigma[np.ix_(perm, perm)], sigma, rtol=1e-12, atol=0.0):
            return g
    return None


def _embed(x, h, c):
    return np.insert(np.asarray(x, dtype=float), h, c)


def _search_face(surface, level, h, x0):
    c = surface.c
    k = surface.m - 1
    x0 = np.clip(np.asarray(x0, dtype=float), -c, c)
    simplex = np.tile(x0, (k + 1, 1))
    step = 0.25 * c
    for i in range(k):
        simplex[i + 1, i] += step if x0[i] + step <= c else -step

    def objective(x):
        return -surface.power_value(level, _embed(x, h, c))

    res = optimize.minimize(
        objective,
        x0,
        method="Nelder-Mead",
        bounds=[(-c, c)] * k,
        options={
            "initial_simplex": simplex,
            "xatol": 1e-6,
            "fatol": 1e-11,
            "maxfev": 600 * k,
            "adaptive": k > 2,
        },
    )
    x = np.clip(res.x, -c, c)
    return _embed(x, h, c), -res.fun


def find_lambda(level, sigma=None, nu=None, spec=None, rng=None, mc=None, surface=None, start=None):
    """Search the boundary of the null space for the least favourable point.

    Every face ``{theta_h = c, |theta_j| <= c}`` is searched by bounded
    Nelder-Mead over the free coordinates, started at zero (or at ``start``
    when it lies on that face). Faces on ``-c`` are mirror images and are
    skipped, as are faces exchangeable with an already searched one under a
    symmetry of ``sigma``. Ties go to the lowest face index.

    Either pass ``surface`` or the ``sigma, nu, spec`` triple.

    Returns
    -------
    LambdaResult
    """
    _check_level(level)
    if surface is None:
        surface = PowerSurface(sigma, nu, spec.c, mc, rng)
    c, m = surface.c, surface.m
    n0 = surface.n_evaluations
    if m == 1:
        lam = np.array([c])
        return LambdaResult(lam, 0, 1, surface.power(level, lam), surface.n_evaluations - n0)
    best = None
    searched = []
    for h in range(m):
        if _symmetric_twin(surface.sigma, h, searched) is not None:
            continue
        searched.append(h)
        x0 = np.zeros(m - 1)
        if start is not None and start.face == h:
            x0 = np.delete(start.lambda_, h)
        lam, val = _search_face(surface, level, h, x0)
        if best is None or val > best[1]:
            best = (lam, val, h)
    lam, val, h = best
    if val <= 0.0:
        h = int(np.argmax(np.diag(surface.sigma)))
        lam = np.zeros(m)
        lam[h] = c
    est = surface.power(level, lam)
    return LambdaResult(lam, int(h), 1, est, surface.n_evaluations - n0)


def size(level, sigma, nu, spec, rng=None, mc=None, full_output=False):
    """Size of the multivariate TOST at ``level``.

    The least favourable point is located on one frozen draw set and the
    power there is re-estimated on an independent one, which removes the
    upward bias of maximizing a noisy surface.

    Returns
    -------
    PowerEstimate, or ``(PowerEstimate, LambdaResult)`` if ``full_output``.
    """
    rng = rng if isinstance(rng, RngStream) else RngStream(0 if rng is None else int(rng))
    lam = find_lambda(level, surface=PowerSurface(sigma, nu, spec.c, mc, rng.child(0)))
    est = PowerSurface(sigma, nu, spec.c, mc, rng.child(1)).power(level, lam.lambda_)
    return (est, lam) if full_output else est
