"""Probability kernels shared by the power, level-adjustment and simulation code.

Everything here is a pure function of its arguments. Randomness enters only
through :class:`RngStream`, a (seed, stream id) pair mapped onto a Philox
counter-based generator, so a given stream reproduces the same draws on every
platform and distinct streams never overlap.

The multivariate normal rectangle probability uses the Genz
separation-of-variables transform evaluated on randomized (scrambled) Sobol
points; the spread over independent scramblings gives the reported standard
error.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats
from scipy.special import ndtr, ndtri, stdtrit

from .exceptions import DomainError

__all__ = [
    "RngStream",
    "MCConfig",
    "PowerEstimate",
    "check_cov",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_ppf",
    "student_t_quantile",
    "owens_q",
    "univariate_tost_power",
    "mvn_rectangle_prob",
    "sample_wishart",
    "sobol_uniforms",
    "sov_integrand",
    "wishart_sd_from_uniforms",
]

_TINY = 2.0**-53


@dataclass(frozen=True)
class RngStream:
    """Seeded, splittable source of randomness.

    Parameters
    ----------
    seed : int
        64-bit unsigned master seed.
    stream_id : int
        Substream index. Different ids give independent sequences.
    path : tuple of int
        Ancestry of the stream when created through :meth:`child`.
    """

    seed: int = 0
    stream_id: int = 0
    path: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.stream_id) < 0:
            raise DomainError("stream_id must be nonnegative")

    def generator(self):
        """Fresh numpy Generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(*self.path, int(self.stream_id)))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id):
        """Substream nested under this one."""
        return RngStream(self.seed, int(stream_id), (*self.path, int(self.stream_id)))


def _as_rng(rng):
    if rng is None:
        return RngStream()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    return rng


@dataclass(frozen=True)
class MCConfig:
    """Randomized quasi-Monte-Carlo budget.

    ``points`` scrambled Sobol points per randomization, ``randomizations``
    independent scramblings. The standard error is computed from the spread
    of the per-scrambling means.
    """

    points: int = 2048
    randomizations: int = 16

    def __post_init__(self):
        if self.points < 1 or self.randomizations < 2:
            raise DomainError("need points >= 1 and randomizations >= 2")

    @property
    def total(self):
        return self.points * self.randomizations


@dataclass(frozen=True)
class PowerEstimate:
    """A probability estimate with its Monte-Carlo standard error."""

    value: float
    std_error: float = 0.0
    n_draws: int = 0
    exact: bool = False

    def __post_init__(self):
        if self.exact and self.std_error != 0.0:
            raise DomainError("exact estimates carry zero standard error")

    def __float__(self):
        return float(self.value)

    @classmethod
    def from_replicates(cls, means, n_draws):
        means = np.asarray(means, dtype=float)
        value = float(np.clip(means.mean(), 0.0, 1.0))
        se = float(means.std(ddof=1) / np.sqrt(means.size))
        return cls(value, se, int(n_draws), False)


def check_cov(sigma, name="sigma"):
    """Validate a covariance matrix and return it as a float array.

    Raises :class:`DomainError` unless ``sigma`` is square, finite, symmetric
    to 1e-12 relative tolerance and positive definite.
    """
    sigma = np.array(sigma, dtype=float, ndmin=2)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DomainError(f"{name} must be a square matrix")
    if not np.all(np.isfinite(sigma)):
        raise DomainError(f"{name} has non-finite entries")
    scale = max(np.max(np.abs(sigma)), np.finfo(float).tiny)
    if np.max(np.abs(sigma - sigma.T)) > 1e-12 * scale:
        raise DomainError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise DomainError(f"{name} is not positive definite") from None
    return 0.5 * (sigma + sigma.T)


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def std_normal_cdf(x):
    """Standard normal CDF."""
    return _scalar_or_array(ndtr(np.asarray(x, dtype=float)))


def std_normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi))


def std_normal_ppf(p):
    """Inverse of the standard normal CDF."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise DomainError("probability outside [0, 1]")
    return _scalar_or_array(ndtri(p))


def student_t_quantile(alpha, nu):
    """Upper ``alpha`` quantile of Student's t with ``nu`` degrees of freedom.

    ``alpha`` may be an array. The quantile is decreasing in ``alpha`` and
    zero at ``alpha = 0.5``.
    """
    a = np.asarray(alpha, dtype=float)
    if np.any(~((a > 0) & (a < 1))):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not (np.isfinite(nu) and nu >= 1):
        raise DomainError(f"nu must be >= 1, got {nu}")
    # stdtrit inverts the incomplete-beta t CDF by bracketed root finding;
    # evaluating the lower tail keeps full relative accuracy for small alpha.
    q = -stdtrit(float(nu), a)
    q = np.where(a == 0.5, 0.0, q)
    return _scalar_or_array(q)


def _chi_pdf(x, nu):
    return stats.chi.pdf(x, nu)


def owens_q(t, delta, R, nu):
    """Owen's Q function Q_nu(t, delta; 0, R).

    ``integral_0^R Phi(t x / sqrt(nu) - delta) f_chi(x; nu) dx``, evaluated with
    adaptive Gauss-Kronrod quadrature. ``R = inf`` gives the noncentral t CDF
    at ``t`` with noncentrality ``delta``.
    """
    if not (np.isfinite(t) and np.isfinite(delta)) or np.isnan(R):
        raise DomainError("owens_q needs finite t and delta")
    if R < 0:
        raise DomainError("R must be nonnegative")
    if not (np.isfinite(nu) and nu >= 1):
        raise DomainError("nu must be >= 1")
    if R == 0:
        return 0.0
    sq = math.sqrt(nu)
    mode = math.sqrt(max(nu - 1.0, 0.0))
    # the chi density is below 1e-300 past mode + 40
    hi = min(float(R), mode + 40.0)
    inner = [p for p in (mode, mode - 3.0, mode + 3.0) if 0.0 < p < hi]

    def integrand(x):
        return ndtr(t * x / sq - delta) * _chi_pdf(x, nu)

    val, _ = integrate.quad(
        integrand, 0.0, hi, points=inner or None, epsabs=1e-12, epsrel=1e-10, limit=400
    )
    return float(min(max(val, 0.0), 1.0))


def univariate_tost_power(level, theta, sigma, nu, c):
    """Exact probability that a single TOST declares equivalence.

    Parameters
    ----------
    level : float
        Test level in (0, 0.5).
    theta : float
        True difference.
    sigma : float
        Standard deviation of the estimator.
    nu : int
        Degrees of freedom of the variance estimate.
    c : float
        Symmetric margin.

    Notes
    -----
    With ``t = t_{level,nu}`` and ``R = c sqrt(nu) / (sigma t)`` the power is
    ``Q(-t, (theta - c)/sigma, R) - Q(t, (theta + c)/sigma, R)``.
    """
    t = student_t_quantile(level, nu)
    R = math.inf if t == 0 else c * math.sqrt(nu) / (sigma * t)
    p = owens_q(-t, (theta - c) / sigma, R, nu) - owens_q(t, (theta + c) / sigma, R, nu)
    return float(min(max(p, 0.0), 1.0))


def sobol_uniforms(dim, points, randomizations, rng):
    """Independent scrambled Sobol point sets, shape (randomizations, points, dim)."""
    gen = _as_rng(rng).generator()
    if dim == 0:
        return np.empty((randomizations, points, 0))
    out = np.empty((randomizations, points, dim))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for r in range(randomizations):
            out[r] = stats.qmc.Sobol(dim, scramble=True, bits=64, seed=gen).random(points)
    return np.clip(out, _TINY, 1.0 - _TINY)


def sov_integrand(chol, lower, upper, w):
    """Genz separation-of-variables integrand for N(0, chol chol^T).

    Parameters
    ----------
    chol : ndarray (m, m)
        Lower Cholesky factor.
    lower, upper : array_like broadcastable to (n, m)
        Integration limits (already centred at the mean).
    w : ndarray (n, m - 1)
        Uniform points.

    Returns
    -------
    ndarray (n,)
        Unbiased per-point estimates of the rectangle probability.
    """
    m = chol.shape[0]
    n = w.shape[0]
    lower = np.broadcast_to(lower, (n, m))
    upper = np.broadcast_to(upper, (n, m))
    d = ndtr(lower[:, 0] / chol[0, 0])
    e = ndtr(upper[:, 0] / chol[0, 0])
    f = np.maximum(e - d, 0.0)
    if m == 1:
        return f
    y = np.empty((n, m - 1))
    for i in range(1, m):
        u = d + w[:, i - 1] * (e - d)
        y[:, i - 1] = ndtri(np.clip(u, _TINY, 1.0 - _TINY))
        s = y[:, :i] @ chol[i, :i]
        d = ndtr((lower[:, i] - s) / chol[i, i])
        e = ndtr((upper[:, i] - s) / chol[i, i])
        f = f * np.maximum(e - d, 0.0)
    return f


def _genz_reorder(sigma, a, b):
    """Variable prioritization: most constrained conditional interval first.

    Returns the permutation and the Cholesky factor of the permuted matrix.
    """
    m = sigma.shape[0]
    perm = np.arange(m)
    C = sigma.copy()
    a = a.copy()
    b = b.copy()
    L = np.zeros((m, m))
    y = np.zeros(m)
    for i in range(m):
        s = L[i:, :i] @ y[:i]
        sd = np.sqrt(np.maximum(np.diag(C)[i:] - np.sum(L[i:, :i] ** 2, axis=1), 1e-300))
        prob = ndtr((b[i:] - s) / sd) - ndtr((a[i:] - s) / sd)
        k = i + int(np.argmin(prob))
        if k != i:
            for arr in (a, b, perm):
                arr[[i, k]] = arr[[k, i]]
            C[[i, k], :] = C[[k, i], :]
            C[:, [i, k]] = C[:, [k, i]]
            L[[i, k], :] = L[[k, i], :]
        L[i, i] = math.sqrt(max(C[i, i] - L[i, :i] @ L[i, :i], 1e-300))
        L[i + 1 :, i] = (C[i + 1 :, i] - L[i + 1 :, :i] @ L[i, :i]) / L[i, i]
        s_i = L[i, :i] @ y[:i]
        lo, hi = (a[i] - s_i) / L[i, i], (b[i] - s_i) / L[i, i]
        mass = ndtr(hi) - ndtr(lo)
        if mass > 1e-14:
            y[i] = (std_normal_pdf(lo) - std_normal_pdf(hi)) / mass
        else:
            y[i] = np.clip(0.0, lo, hi) if np.isfinite(lo) or np.isfinite(hi) else 0.0
    return perm, L


def mvn_rectangle_prob(mu, sigma, lower, upper, precision=None, rng=None, method="qmc"):
    """Probability that N(mu, sigma) falls in the box [lower, upper].

    Parameters
    ----------
    mu : array_like (m,)
    sigma : array_like (m, m)
        Positive definite covariance.
    lower, upper : array_like (m,)
        Box limits; infinite values are allowed. If any ``lower > upper`` the
        box is empty and the exact answer 0 is returned.
    precision : MCConfig, optional
        Defaults to 8192 points times 16 randomizations.
    rng : RngStream or int, optional
    method : {"qmc", "mc"}
        ``"mc"`` is a plain Monte-Carlo indicator estimator kept as a cross-check.

    Returns
    -------
    PowerEstimate
    """
    sigma = check_cov(sigma)
    m = sigma.shape[0]
    mu = np.asarray(mu, dtype=float).reshape(-1)
    lower = np.asarray(lower, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    if not (mu.size == lower.size == upper.size == m):
        raise DomainError("dimension mismatch between mu, sigma and limits")
    precision = precision or MCConfig(8192, 16)
    a = lower - mu
    b = upper - mu
    if np.any(a > b):
        return PowerEstimate(0.0, 0.0, 0, True)
    sd = np.sqrt(np.diag(sigma))
    if m == 1 or np.count_nonzero(sigma - np.diag(np.diag(sigma))) == 0:
        p = float(np.prod(ndtr(b / sd) - ndtr(a / sd)))
        return PowerEstimate(min(max(p, 0.0), 1.0), 0.0, 0, True)
    if method == "mc":
        gen = _as_rng(rng).generator()
        chol = np.linalg.cholesky(sigma)
        means = np.empty(precision.randomizations)
        for r in range(precision.randomizations):
            x = gen.standard_normal((precision.points, m)) @ chol.T
            means[r] = np.mean(np.all((x >= a) & (x <= b), axis=1))
        return PowerEstimate.from_replicates(means, precision.total)
    if method != "qmc":
        raise ValueError(f"unknown method {method!r}")
    perm, chol = _genz_reorder(sigma, a, b)
    w = sobol_uniforms(m - 1, precision.points, precision.randomizations, rng)
    means = np.array([sov_integrand(chol, a[perm], b[perm], wr).mean() for wr in w])
    return PowerEstimate.from_replicates(means, precision.total)


def _bartlett_factor(chi2, normals, m):
    shape = chi2.shape[:-1]
    A = np.zeros((*shape, m, m))
    idx = np.arange(m)
    A[..., idx, idx] = np.sqrt(chi2)
    rows, cols = np.tril_indices(m, -1)
    A[..., rows, cols] = normals
    return A


def sample_wishart(nu, sigma, rng=None, size=None):
    """Draw ``Sigma_hat = W / nu`` with ``W ~ Wishart_m(nu, sigma)``.

    Uses the Bartlett decomposition ``W = L A A^T L^T`` where ``A`` is lower
    triangular with ``A_ii^2 ~ chi2(nu - i)`` and standard normal entries
    below the diagonal.

    Parameters
    ----------
    nu : int
        Degrees of freedom, at least the dimension.
    sigma : array_like (m, m)
    rng : RngStream, int or numpy Generator, optional
    size : int, optional
        Number of draws; the result then has shape (size, m, m).
    """
    sigma = check_cov(sigma)
    m = sigma.shape[0]
    if nu < m:
        raise DomainError(f"nu={nu} is smaller than the dimension {m}")
    gen = rng if isinstance(rng, np.random.Generator) else _as_rng(rng).generator()
    shape = () if size is None else (int(size),)
    chi2 = gen.chisquare(nu - np.arange(m), size=(*shape, m))
    normals = gen.standard_normal((*shape, m * (m - 1) // 2))
    LA = np.linalg.cholesky(sigma) @ _bartlett_factor(chi2, normals, m)
    W = LA @ np.swapaxes(LA, -1, -2)
    W = 0.5 * (W + np.swapaxes(W, -1, -2))
    return W / nu


def wishart_sd_from_uniforms(chol, nu, u):
    """Marginal standard deviations of Bartlett Wishart draws driven by uniforms.

    ``u`` has trailing dimension ``m (m + 1) / 2``: the first ``m`` columns feed
    the chi-square diagonal through its inverse CDF, the rest the normal
    subdiagonal. Returns ``sqrt(diag(W) / nu)`` with shape ``u.shape[:-1] + (m,)``.
    """
    m = chol.shape[0]
    chi2 = stats.chi2.ppf(u[..., :m], nu - np.arange(m))
    normals = ndtri(u[..., m:])
    LA = chol @ _bartlett_factor(chi2, normals, m)
    return np.sqrt(np.sum(LA**2, axis=-1) / nu)
