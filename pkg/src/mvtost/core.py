"""Data model and the conventional multivariate TOST.

Equivalence is declared for outcome ``j`` when the marginal
``100 (1 - 2 level)%`` confidence interval ``theta_hat_j +- t sigma_hat_j``
lies inside ``[-c, c]``; overall equivalence needs every outcome to pass.
An interval touching the margin counts as a pass.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, UnsupportedConfigurationError
from .kernels import check_cov, std_normal_ppf, student_t_quantile

__all__ = [
    "KNOWN",
    "SummaryStats",
    "EquivalenceSpec",
    "TostDecision",
    "critical_value",
    "tost_statistics",
    "tost_decide",
    "max_sigma_threshold",
    "standardize_margins",
]

#: Degrees-of-freedom sentinel selecting the known-variance regime.
KNOWN = "known"

LOG_125 = math.log(1.25)


def is_known(nu):
    return isinstance(nu, str) and nu == KNOWN


def critical_value(level, nu):
    """Upper ``level`` quantile: normal if ``nu == "known"``, else Student t."""
    if is_known(nu):
        if not 0 < level < 1:
            raise DomainError(f"level must lie in (0, 1), got {level}")
        return -std_normal_ppf(level)
    return student_t_quantile(level, nu)


@dataclass(frozen=True)
class EquivalenceSpec:
    """Symmetric margin ``c`` shared by all outcomes and the nominal level."""

    c: float = LOG_125
    alpha: float = 0.05

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise DomainError(f"margin c must be positive, got {self.c}")
        if not 0 < self.alpha < 0.5:
            raise DomainError(f"alpha must lie in (0, 0.5), got {self.alpha}")


@dataclass(frozen=True)
class SummaryStats:
    """Estimated differences, their covariance and the degrees of freedom."""

    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    nu: int
    names: tuple = field(default=())

    def __post_init__(self):
        theta = np.array(self.theta_hat, dtype=float).reshape(-1)
        sigma = check_cov(self.sigma_hat, "sigma_hat")
        if theta.size < 1 or theta.size != sigma.shape[0]:
            raise DomainError("theta_hat and sigma_hat dimensions disagree")
        if int(self.nu) != self.nu or self.nu < 1:
            raise DomainError(f"nu must be a positive integer, got {self.nu}")
        names = tuple(self.names) or tuple(f"y{j + 1}" for j in range(theta.size))
        if len(names) != theta.size:
            raise DomainError("one name per outcome is required")
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "sigma_hat", sigma)
        object.__setattr__(self, "nu", int(self.nu))
        object.__setattr__(self, "names", names)

    @property
    def m(self):
        return self.theta_hat.size

    @property
    def se(self):
        return np.sqrt(np.diag(self.sigma_hat))

    def to_dict(self):
        return {
            "theta_hat": self.theta_hat.tolist(),
            "sigma_hat": self.sigma_hat.tolist(),
            "nu": self.nu,
            "names": list(self.names),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["theta_hat"], d["sigma_hat"], d["nu"], tuple(d.get("names", ())))


@dataclass(frozen=True)
class TostDecision:
    """Per-outcome statistics, intervals and verdicts of a TOST run."""

    names: tuple
    t_lower: np.ndarray
    t_upper: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    feasible: np.ndarray
    passed: np.ndarray
    level_used: float
    critical_value: float
    c: float

    @property
    def equivalence_declared(self):
        return bool(np.all(self.passed))

    def rows(self):
        for j, name in enumerate(self.names):
            yield {
                "outcome": name,
                "t_lower": float(self.t_lower[j]),
                "t_upper": float(self.t_upper[j]),
                "ci_lower": float(self.ci_lower[j]),
                "ci_upper": float(self.ci_upper[j]),
                "feasible": bool(self.feasible[j]),
                "pass": bool(self.passed[j]),
            }

    def to_dict(self):
        return {
            "level_used": self.level_used,
            "critical_value": self.critical_value,
            "c": self.c,
            "equivalence_declared": self.equivalence_declared,
            "outcomes": list(self.rows()),
        }


def tost_statistics(stats, spec):
    """Lower and upper TOST statistics ``(theta_hat +- c) / sigma_hat``."""
    se = stats.se
    if np.any(se <= 0):
        raise DomainError("zero standard error")
    return (stats.theta_hat + spec.c) / se, (stats.theta_hat - spec.c) / se


def tost_decide(stats, spec, level=None):
    """Run the multivariate TOST at ``level`` (``spec.alpha`` by default)."""
    level = spec.alpha if level is None else float(level)
    if not 0 < level < 0.5:
        raise DomainError(f"level must lie in (0, 0.5), got {level}")
    t_lo, t_up = tost_statistics(stats, spec)
    q = critical_value(level, stats.nu)
    se = stats.se
    half = q * se
    ci_lo = stats.theta_hat - half
    ci_hi = stats.theta_hat + half
    passed = (ci_lo >= -spec.c) & (ci_hi <= spec.c)
    return TostDecision(
        names=stats.names,
        t_lower=t_lo,
        t_upper=t_up,
        ci_lower=ci_lo,
        ci_upper=ci_hi,
        feasible=se <= spec.c / q,
        passed=passed,
        level_used=level,
        critical_value=float(q),
        c=spec.c,
    )


def max_sigma_threshold(spec, nu, level=None):
    """Largest standard error for which equivalence is still attainable, ``c / t``."""
    level = spec.alpha if level is None else level
    if not 0 < level < 0.5:
        raise DomainError(f"level must lie in (0, 0.5), got {level}")
    return spec.c / critical_value(level, nu)


def standardize_margins(theta_hat, a, b, atol=1e-12):
    """Reduce margins ``(a, b)`` to the symmetric form.

    Returns the shifted estimate ``theta_hat - (a + b) / 2`` and the common
    half-width ``c = (b - a) / 2``. Outcome-specific half-widths are rejected.
    """
    theta_hat = np.asarray(theta_hat, dtype=float).reshape(-1)
    a = np.broadcast_to(np.asarray(a, dtype=float), theta_hat.shape)
    b = np.broadcast_to(np.asarray(b, dtype=float), theta_hat.shape)
    if np.any(a >= b):
        raise DomainError("every lower margin must be below its upper margin")
    half = (b - a) / 2.0
    if np.ptp(half) > atol * max(1.0, float(np.max(half))):
        raise UnsupportedConfigurationError(
            "margins of different widths across outcomes are not supported"
        )
    return theta_hat - (a + b) / 2.0, float(half[0])
