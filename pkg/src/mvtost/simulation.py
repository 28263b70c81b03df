"""Operating characteristics of the TOST and alpha-TOST by simulation.

Each replicate draws from the canonical model

    theta_hat ~ N_m(kappa * lambda, Sigma),   nu * Sigma_hat ~ W_m(nu, Sigma),

where ``lambda`` is the least favourable null point of the method under
study, so ``kappa = 1`` gives the empirical size and ``kappa < 1`` the power
at interior points.

Random inputs are shared: the replicate ``b`` noise ``theta_hat - kappa lambda``
and ``Sigma_hat`` are identical for every ``kappa`` and both methods. Curves
are then smooth in ``kappa`` and the two decision rules are compared on the
same data, which makes the inclusion of TOST rejections in alpha-TOST
rejections an exact, replicate-level statement.
"""

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .adjust import alpha_star
from .core import EquivalenceSpec, critical_value
from .exceptions import DomainError, ExistenceError, NonConvergenceError
from .kernels import MCConfig, RngStream, check_cov, sample_wishart, student_t_quantile
from .power import find_lambda, size

__all__ = [
    "STRUCTURES",
    "SimScenario",
    "CurveResult",
    "make_cov",
    "sample_canonical",
    "run_curve",
    "export_curve",
    "read_curve",
    "engine_size",
]

STRUCTURES = ("compound_symmetry", "ar1")
METHODS = ("tost", "atost")
REPLICATE_MC = MCConfig(256, 4)


def make_cov(structure, sigma_diag, rho):
    """Covariance with marginal standard deviations ``sigma_diag``.

    ``compound_symmetry``: ``Sigma_ij = rho sigma_i sigma_j``;
    ``ar1``: ``Sigma_ij = rho^|i-j| sigma_i sigma_j``.

    >>> make_cov("ar1", [1.0, 1.0, 1.0], 0.5)[0, 2]
    0.25
    """
    sd = np.asarray(sigma_diag, dtype=float).reshape(-1)
    if sd.size < 1 or np.any(sd <= 0) or not np.all(np.isfinite(sd)):
        raise DomainError("standard deviations must be positive and finite")
    if not -1 < rho < 1:
        raise DomainError(f"rho must lie in (-1, 1), got {rho}")
    m = sd.size
    if structure == "compound_symmetry":
        if m > 1 and rho <= -1.0 / (m - 1):
            raise DomainError(f"{structure} with rho={rho} is not positive definite for m={m}")
        r = np.full((m, m), float(rho))
    elif structure == "ar1":
        idx = np.arange(m)
        r = float(rho) ** np.abs(idx[:, None] - idx[None, :])
    else:
        raise DomainError(f"unknown structure {structure!r}; expected one of {STRUCTURES}")
    np.fill_diagonal(r, 1.0)
    sigma = r * np.outer(sd, sd)
    try:
        return check_cov(sigma)
    except DomainError:
        raise DomainError(f"{structure} with rho={rho} is not positive definite for m={m}") from None


def sample_canonical(theta, sigma, nu, rng, size=None):
    """Draw ``(theta_hat, Sigma_hat)`` independently from the canonical model.

    Returns arrays of shape ``(m,)`` and ``(m, m)``, or with a leading
    ``size`` axis.
    """
    sigma = check_cov(sigma)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != sigma.shape[0]:
        raise DomainError("theta and sigma dimensions disagree")
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    gen = rng.child(0).generator()
    shape = () if size is None else (int(size),)
    z = gen.standard_normal((*shape, theta.size)) @ np.linalg.cholesky(sigma).T
    return theta + z, sample_wishart(nu, sigma, rng=rng.child(1), size=size)


@dataclass(frozen=True)
class SimScenario:
    """One simulation setting.

    ``sigma_diag`` may be a scalar (homoscedastic) or a length-``m`` vector.
    """

    m: int = 2
    nu: int = 20
    sigma_diag: tuple = (0.1,)
    structure: str = "compound_symmetry"
    rho: float = 0.0
    spec: EquivalenceSpec = field(default_factory=EquivalenceSpec)
    kappa_grid: tuple = tuple(np.linspace(0.0, 1.2, 30).tolist())
    B: int = 2000
    seed: int = 0
    name: str = "scenario"

    def __post_init__(self):
        sd = np.atleast_1d(np.asarray(self.sigma_diag, dtype=float))
        if sd.size == 1:
            sd = np.full(int(self.m), sd[0])
        if sd.size != self.m:
            raise DomainError(f"sigma_diag has {sd.size} entries for m={self.m}")
        if int(self.nu) != self.nu or self.nu < self.m:
            raise DomainError(f"nu must be an integer no smaller than m, got {self.nu}")
        kappa = tuple(float(k) for k in self.kappa_grid)
        if not kappa or any(k < 0 or k > 1.2 for k in kappa) or list(kappa) != sorted(kappa):
            raise DomainError("kappa_grid must be sorted within [0, 1.2]")
        if int(self.B) < 1:
            raise DomainError("B must be positive")
        if isinstance(self.spec, dict):
            object.__setattr__(self, "spec", EquivalenceSpec(**self.spec))
        object.__setattr__(self, "sigma_diag", tuple(sd.tolist()))
        object.__setattr__(self, "kappa_grid", kappa)
        make_cov(self.structure, sd, self.rho)

    @property
    def sigma(self):
        return make_cov(self.structure, self.sigma_diag, self.rho)

    def to_dict(self):
        d = asdict(self)
        d["sigma_diag"] = list(self.sigma_diag)
        d["kappa_grid"] = list(self.kappa_grid)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        spec = d.pop("spec", None)
        if spec is not None:
            d["spec"] = spec if isinstance(spec, EquivalenceSpec) else EquivalenceSpec(**spec)
        if "kappa_grid" in d and isinstance(d["kappa_grid"], dict):
            g = d["kappa_grid"]
            d["kappa_grid"] = tuple(np.linspace(g["start"], g["stop"], g["num"]).tolist())
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class CurveResult:
    """Rejection proportions per method over the kappa grid.

    ``dominance_violations`` counts (path, kappa, replicate) triples where the
    TOST rejects and the alpha-TOST does not, with both rules applied to the
    same draws along each method's path. ``atost_fallbacks`` counts
    replicates whose adjusted level could not be solved; they are tested at
    the nominal level.
    """

    scenario: SimScenario
    kappa: np.ndarray
    proportion: dict
    std_error: dict
    lambda_used: dict
    level_used: dict
    size_at_one: dict
    size_at_one_se: dict
    dominance_violations: int = 0
    atost_fallbacks: int = 0
    alpha_hat: np.ndarray = None

    @property
    def methods(self):
        return tuple(self.proportion)


def _binomial_se(p, B):
    return np.sqrt(p * (1.0 - p) / B)


def _alpha_hat(sigma_hats, nu, spec, rng, mc, tol, n_jobs):
    def solve(b):
        try:
            return alpha_star(
                sigma_hats[b], nu, spec, tol=tol, rng=rng.child(b), mc=mc, evaluate_size=False
            ).alpha_star, False
        except (ExistenceError, NonConvergenceError):
            return spec.alpha, True

    idx = range(sigma_hats.shape[0])
    if n_jobs == 1:
        out = [solve(b) for b in idx]
    else:
        from joblib import Parallel, delayed

        out = Parallel(n_jobs=n_jobs)(delayed(solve)(b) for b in idx)
    levels = np.array([o[0] for o in out])
    return levels, int(sum(o[1] for o in out))


def _reject(theta_hat, se, q, c):
    """Vectorized TOST: every marginal interval inside ``[-c, c]``."""
    half = q[..., None] * se
    return np.all((theta_hat - half >= -c) & (theta_hat + half <= c), axis=-1)


def run_curve(
    scenario,
    methods=METHODS,
    replicate_mc=REPLICATE_MC,
    population_mc=None,
    tol=1e-4,
    n_jobs=1,
):
    """Empirical rejection curves of the requested methods.

    Parameters
    ----------
    scenario : SimScenario
    methods : iterable of {"tost", "atost"}
    replicate_mc : MCConfig
        Budget of each per-replicate adjusted-level solve.
    population_mc : MCConfig, optional
        Budget for the population ``alpha*`` and the least favourable points.
    tol : float
        Tolerance of the adjusted-level solver.
    n_jobs : int
        Workers for the per-replicate solves (joblib). Results do not
        depend on it.

    Returns
    -------
    CurveResult
    """
    methods = tuple(methods)
    if not methods or any(mth not in METHODS for mth in methods):
        raise DomainError(f"methods must be a non-empty subset of {METHODS}")
    sc = scenario
    spec, nu, B = sc.spec, int(sc.nu), int(sc.B)
    sigma = sc.sigma
    rng = RngStream(sc.seed)

    lam, level = {}, {}
    lam["tost"] = find_lambda(spec.alpha, sigma, nu, spec, rng=rng.child(0), mc=population_mc).lambda_
    level["tost"] = spec.alpha
    if "atost" in methods:
        pop = alpha_star(sigma, nu, spec, tol=tol, rng=rng.child(1), mc=population_mc, evaluate_size=False)
        lam["atost"], level["atost"] = pop.lambda_, pop.alpha_star

    noise, sigma_hats = sample_canonical(np.zeros(sc.m), sigma, nu, rng.child(2), size=B)
    se = np.sqrt(np.diagonal(sigma_hats, axis1=1, axis2=2))
    q_tost = np.full(B, critical_value(spec.alpha, nu))
    fallbacks = 0
    alpha_hat = None
    if "atost" in methods:
        alpha_hat, fallbacks = _alpha_hat(sigma_hats, nu, spec, rng.child(3), replicate_mc, tol, n_jobs)
        q_atost = student_t_quantile(alpha_hat, nu)
    q = {"tost": q_tost, "atost": q_atost if "atost" in methods else None}

    kappa = np.asarray(sc.kappa_grid)
    prop, err, size1, size1_se = {}, {}, {}, {}
    violations = 0
    for mth in methods:
        # theta_hat for every kappa on this method's path: (K, B, m)
        th = kappa[:, None, None] * lam[mth] + noise[None]
        rej = _reject(th, se[None], np.broadcast_to(q[mth], (kappa.size, B)), spec.c)
        prop[mth] = rej.mean(axis=1)
        err[mth] = _binomial_se(prop[mth], B)
        at_one = _reject(lam[mth] + noise, se, q[mth], spec.c)
        size1[mth] = float(at_one.mean())
        size1_se[mth] = float(_binomial_se(size1[mth], B))
        if "atost" in methods:
            both = [_reject(th, se[None], np.broadcast_to(q[k], (kappa.size, B)), spec.c) for k in METHODS]
            violations += int(np.count_nonzero(both[0] & ~both[1]))
            one = [_reject(lam[mth] + noise, se, q[k], spec.c) for k in METHODS]
            violations += int(np.count_nonzero(one[0] & ~one[1]))

    return CurveResult(
        scenario=sc,
        kappa=kappa,
        proportion=prop,
        std_error=err,
        lambda_used={k: lam[k] for k in methods},
        level_used={k: level[k] for k in methods},
        size_at_one=size1,
        size_at_one_se=size1_se,
        dominance_violations=violations,
        atost_fallbacks=fallbacks,
        alpha_hat=alpha_hat,
    )


def engine_size(scenario, level=None, mc=None):
    """Size from the power engine, for cross-checking the simulation."""
    sc = scenario
    return size(sc.spec.alpha if level is None else level, sc.sigma, sc.nu, sc.spec, rng=RngStream(sc.seed).child(4), mc=mc)


def _paths(path):
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in (".csv", ".json") else p
    return stem.with_suffix(".csv"), stem.with_suffix(".json")


def export_curve(result, path):
    """Write ``<path>.csv`` (one row per method and kappa) and ``<path>.json``.

    Floats are written with round-trip precision, so output bytes depend
    only on the scenario and seed.
    """
    from . import __version__

    csv_path, json_path = _paths(path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario_id", "method", "kappa", "proportion", "se"])
        for mth in result.methods:
            for k, p, s in zip(result.kappa, result.proportion[mth], result.std_error[mth]):
                w.writerow([result.scenario.name, mth, repr(float(k)), repr(float(p)), repr(float(s))])
    meta = {
        "scenario": result.scenario.to_dict(),
        "seed": result.scenario.seed,
        "version": __version__,
        "lambda_used": {k: v.tolist() for k, v in result.lambda_used.items()},
        "level_used": result.level_used,
        "size_at_kappa_1": result.size_at_one,
        "size_at_kappa_1_se": result.size_at_one_se,
        "dominance_violations": result.dominance_violations,
        "atost_fallbacks": result.atost_fallbacks,
    }
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path


def read_curve(path):
    """Read back a curve written by :func:`export_curve`."""
    csv_path, json_path = _paths(path)
    meta = json.loads(json_path.read_text(encoding="utf-8"))
    prop, err, kappa = {}, {}, {}
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            mth = row["method"]
            prop.setdefault(mth, []).append(float(row["proportion"]))
            err.setdefault(mth, []).append(float(row["se"]))
            kappa.setdefault(mth, []).append(float(row["kappa"]))
    first = next(iter(kappa))
    return CurveResult(
        scenario=SimScenario.from_dict(meta["scenario"]),
        kappa=np.array(kappa[first]),
        proportion={k: np.array(v) for k, v in prop.items()},
        std_error={k: np.array(v) for k, v in err.items()},
        lambda_used={k: np.array(v) for k, v in meta["lambda_used"].items()},
        level_used=meta["level_used"],
        size_at_one=meta["size_at_kappa_1"],
        size_at_one_se=meta["size_at_kappa_1_se"],
        dominance_violations=meta["dominance_violations"],
        atost_fallbacks=meta["atost_fallbacks"],
    )
