"""Multivariate two one-sided tests (TOST) and the size-adjusted alpha-TOST."""

__version__ = "0.1.0"

from .adjust import (
    AlphaStarResult,
    ATostResult,
    ExistenceReport,
    alpha_star,
    atost_decide,
    existence_check,
    inner_fixed_point,
)
from .core import (
    KNOWN,
    EquivalenceSpec,
    SummaryStats,
    TostDecision,
    critical_value,
    max_sigma_threshold,
    standardize_margins,
    tost_decide,
    tost_statistics,
)
from .data import PairedDataset, ScreenReport, load_csv, load_ticlopidine, mad_screen, summarize
from .exceptions import (
    DegenerateScaleError,
    DomainError,
    ExistenceError,
    NonConvergenceError,
    ParseError,
    UnsupportedConfigurationError,
)
from .kernels import (
    MCConfig,
    PowerEstimate,
    RngStream,
    mvn_rectangle_prob,
    owens_q,
    sample_wishart,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_ppf,
    student_t_quantile,
    univariate_tost_power,
)
from .power import (
    LambdaResult,
    PowerSurface,
    find_lambda,
    power_known_sigma,
    power_mc,
    size,
    size_closed_form_indep,
)
from .simulation import CurveResult, SimScenario, export_curve, make_cov, read_curve, run_curve, sample_canonical
