"""
CDLab Result Module

This module provides the report records returned by every laboratory operation and the
RunConfig record that drives the command line and the service. Records are pydantic
models so they validate on construction and serialize for the FastAPI routes.

Key Components:
-------------
- CDLabAuditStatus: Status constants for audits and rows
- CDLabRecord: Base record with get_dict() serialization
- Model and spectral records: MarginReport, MomentReport, GapResult, RefinedGapResult,
  SemigroupResult, UltracontractivityRow
- Stein records: SteinTestClass, DiscrepancyResult, SteinAuditRow, SteinAuditReport,
  TailAuditReport, ExplicitConstants
- Estimate records: DeficitReport, InequalityAudit, DecayRow, DecayReport,
  LpUpgradeAudit, CounterexampleRecord
- Experiment records: RateRow, RateTable, RateFit, ResolutionRow, ResolutionReport
- RunConfig: Reproducible run configuration with `key = value` text round trip

Serialization:
------------
get_dict() drops numpy arrays unless asked for them, converts numpy scalars to Python
numbers and writes non-finite floats as the strings 'inf', '-inf' and 'nan' so the
result is always valid JSON.

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from cdlab_utils import format_float, parse_config_text, parse_float_list, render_config_text

logger = logging.getLogger(__name__)

DEFAULT_DELTAS = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1]


class CDLabAuditStatus:
    """
    Audit status constants.

    Status values:
        PASS: Every checked inequality holds
        FAIL: At least one inequality is violated
        FLAGGED: Result computed but a diagnostic asks for attention
    """
    PASS = 'pass'
    FAIL = 'fail'
    FLAGGED = 'flagged'


def _plain(value, include_arrays: bool):
    if isinstance(value, CDLabRecord):
        return value.get_dict(include_arrays)
    if isinstance(value, np.ndarray):
        return [_plain(item, include_arrays) for item in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_plain(item, include_arrays) for item in value]
    if isinstance(value, dict):
        return {key: _plain(item, include_arrays) for key, item in value.items()}
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


class CDLabRecord(BaseModel):
    """Base class of all report records."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    def get_dict(self, include_arrays: bool = False) -> dict:
        """
        Convert the record to a JSON-safe dictionary.

        Args:
            include_arrays (bool): Keep numpy array fields (as lists)

        Returns:
            dict: Field names mapped to plain Python values
        """
        result = {}
        for name in type(self).model_fields:
            value = getattr(self, name)
            if isinstance(value, np.ndarray) and not include_arrays:
                continue
            result[name] = _plain(value, include_arrays)
        return result


class MarginReport(CDLabRecord):
    """
    Pointwise curvature-dimension margin.

    Attributes:
        grid (np.ndarray): Node coordinates
        margin (np.ndarray): Per-node margin of the criterion
        min_margin (float): Minimum of margin over the grid
        arg_min (float): Node attaining the minimum
        rho (float): Curvature checked
        dim (float): Dimension checked
    """
    grid: np.ndarray
    margin: np.ndarray
    min_margin: float
    arg_min: float
    rho: float
    dim: float

    def certifies(self, tolerance: float = 0.0) -> bool:
        return self.min_margin >= -tolerance


class MomentReport(CDLabRecord):
    mean: float
    variance: float
    gamma_mass: float
    norm_const: float


class GapResult(CDLabRecord):
    """
    Spectral gap and its normalized eigenfunction.

    Attributes:
        lambda1 (float): Smallest nonzero eigenvalue of -L
        lambda2 (float | None): Next eigenvalue when available
        near_degenerate (bool): |lambda2 - lambda1| below the multiplicity window
        f (np.ndarray): Eigenfunction on the grid, ∫Γ(f)dμ equal to gamma_target
        gamma_target (float): N/(N+1) for finite N, 1 for N = ∞
        reference_gap (float): Gap of the rigid model in the target dimension
        eps (float): lambda1 - reference_gap
        residual (float): Eigen residual of the λ₁ pair
    """
    lambda1: float
    lambda2: float | None = None
    near_degenerate: bool = False
    f: np.ndarray
    gamma_target: float
    reference_gap: float
    eps: float
    residual: float = 0.0


class RefinedGapResult(CDLabRecord):
    lambda1: float
    lambda1_fine: float
    lambda1_coarse: float
    n: int


class SemigroupResult(CDLabRecord):
    t: float
    values: np.ndarray
    coefficients: np.ndarray
    remainder_norm: float
    error_bound: float


class UltracontractivityRow(CDLabRecord):
    t: float
    sup_kernel_bound: float
    envelope_bound: float
    tail_bound: float
    flagged: bool
    passed: bool


class SteinTestClass(CDLabRecord):
    sup_bound: float
    lip_bound: float
    target: str
    dim: float | None = None

    @field_validator('sup_bound', 'lip_bound')
    @classmethod
    def check_positive(cls, value: float) -> float:
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f'Test class bounds must be positive and finite, got {value}')
        return value


class DiscrepancyResult(CDLabRecord):
    value: float
    dim: float
    grid_size: int
    lp_status: str
    grid: np.ndarray
    g: np.ndarray


class ExplicitConstants(CDLabRecord):
    """
    Explicit constants of the stability estimates at a given dimension N.

    Constants outside their validity range are None.

    Attributes:
        dim (float): Dimension N
        C_prop34 (float | None): Constant of ‖g‖₁ ≤ C‖Lg‖₁ under CD(N-1, N)
        B_sobolev (float | None): 4N/((N+1)(N-1)²)
        C_ultra (float | None): (2 + 2N/(N-1)²)^((N+1)/2)
        lemma32_C (float | None): Constant of ‖Γ(f) + (1+ε)f² - 1‖₁ ≤ Cε
        thm35_class (list[float] | None): (2/N, 2+N), bounds on ‖g‖_∞ and ‖g'‖_∞
        thm_beta_const (float | None): N²/4 + 5N/4 + 2
        C_end (float | None): Constant of W₁ ≤ Cε assembled from the two above
        lem51_factor (float | None): 4(1-N)²/|N|
        L_N (float | None): Bound on ‖g‖_∞/‖h'‖_∞ for the Cauchy Stein solution
        L_N_alt (float | None): Alternative printed form of L_N
        K_N (float | None): Bound on ‖g'‖_∞/‖h'‖_∞ for the Cauchy Stein solution
        C_N (float | None): ∫(1+t²)^(N/2) dt
        Z_minus (float | None): ∫(1+t²)^(N/2-1) dt
        Z_plus (float | None): ∫(1-t²)^(N/2-1) dt over [-1, 1]
    """
    dim: float
    C_prop34: float | None = None
    B_sobolev: float | None = None
    C_ultra: float | None = None
    lemma32_C: float | None = None
    thm35_class: list[float] | None = None
    thm_beta_const: float | None = None
    C_end: float | None = None
    lem51_factor: float | None = None
    L_N: float | None = None
    L_N_alt: float | None = None
    K_N: float | None = None
    C_N: float | None = None
    Z_minus: float | None = None
    Z_plus: float | None = None

    def to_text(self) -> str:
        """Constants as `key = value` lines, absent constants omitted, whole numbers without a fraction."""
        def text(item) -> str:
            if isinstance(item, float) and item.is_integer():
                return str(int(item))
            return format_float(item) if isinstance(item, float) else str(item)

        values = {}
        for key, value in self.get_dict().items():
            if value is None:
                continue
            if isinstance(value, list):
                values[key] = ','.join(text(item) for item in value)
            else:
                values[key] = text(value)
        return render_config_text(values)


class SteinSolution(CDLabRecord):
    """
    Solution of the Cauchy Stein equation (1+x²) g' + N x g = h - ∫h dμ.

    Attributes:
        grid (np.ndarray): Evaluation nodes
        g (np.ndarray): Solution values
        dg (np.ndarray): Derivative values
        q (np.ndarray): Target CDF at the nodes
        centered (np.ndarray): h - ∫h dμ at the nodes
        h_mean (float): ∫h dμ
        residual (float): max |(1+x²) g' + N x g - (h - ∫h dμ)|
        sup_g (float): max |g| on the grid
        sup_dg (float): max |g'| on the grid
        lipschitz (float): ‖h'‖_∞
        constants (ExplicitConstants): Constants at N
    """
    grid: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    q: np.ndarray
    centered: np.ndarray
    h_mean: float
    residual: float
    sup_g: float
    sup_dg: float
    lipschitz: float
    constants: ExplicitConstants


class SteinAuditRow(CDLabRecord):
    sample: int
    lipschitz: float
    sup_g: float
    sup_dg: float
    residual: float
    g_ratio: float
    dg_ratio: float


class SteinAuditReport(CDLabRecord):
    dim: float
    sample_count: int
    seed: int
    max_g_ratio: float
    max_gprime_ratio: float
    max_residual: float
    violations: int
    constants: ExplicitConstants
    rows: list[SteinAuditRow]
    status: str


class TailAuditReport(CDLabRecord):
    """
    Minimum margins (right side minus left side) of the four CDF tail inequalities.

    Attributes:
        left_tail: q(x) against min(1/2, 1/|N Z x|)(1+x²)^(N/2), x < 0
        right_tail: 1 - q(x), mirror inequality for x > 0
        weighted_half: C_N-weighted CDF against (1+x²)^(N/2+1)/2, x ≤ 0
        weighted_tail: C_N-weighted CDF against (1+x²)^(N/2+1)/((N+1) C_N x), x < 0
    """
    dim: float
    grid_size: int
    left_tail: float
    right_tail: float
    weighted_half: float
    weighted_tail: float
    status: str


class DeficitReport(CDLabRecord):
    """
    Eigenfunction deficit quantities for one computed eigenpair.

    Attributes:
        eps (float): λ₁ minus the reference gap
        regime (str): 'finite', 'infinite' or 'negative'
        h (np.ndarray): Deficit function on the grid
        h_mean (float): Exact mean of h used to recenter it
        deficit_l1 (float): ‖h - target‖₁ (for the negative regime ‖Γ(f) - f² - 1‖₁)
        lh_l1 (float): ‖Lh‖₁
        paper_rhs (float): Bound on ‖Lh‖₁ in terms of ε‖f²‖₁
        deficit_bound (float | None): Explicit bound on deficit_l1 when one exists
        identity_l1 (float): L¹ deficit of the identity the governing distance bound uses
        f2_l1 (float): ‖f²‖₁
        eigen_identity_error (float): |∫f² - ∫Γ(f)/λ₁|
        lichnerowicz_fault (bool): λ₁ below the curvature lower bound beyond tolerance
        status (str): Audit status of the bounds
    """
    eps: float
    regime: str
    h: np.ndarray
    h_mean: float
    deficit_l1: float
    lh_l1: float
    paper_rhs: float
    deficit_bound: float | None = None
    identity_l1: float
    f2_l1: float
    eigen_identity_error: float
    lichnerowicz_fault: bool = False
    status: str


class InequalityAudit(CDLabRecord):
    regime: str
    lhs: float
    rhs: float
    ratio: float
    constant: float
    fitted: bool = False
    passed: bool


class DecayRow(CDLabRecord):
    t: float
    lp_norm: float
    envelope: float
    passed: bool


class DecayReport(CDLabRecord):
    p: float
    c_p: float
    rate: float
    rows: list[DecayRow]
    passed: bool


class LpUpgradeAudit(CDLabRecord):
    c: float
    lhs: float
    rhs: float
    poincare_const: float
    passed: bool


class CounterexampleRecord(CDLabRecord):
    """
    Gaussian counterexample to the L¹ inequality without a logarithm.

    Attributes:
        r (float): Cut-off radius
        l1_f (float): ‖f_r‖₁ under the standard Gaussian
        l1_Lf (float): ‖Lf_r‖₁ = 2(1 - Φ(r))
        ratio (float): l1_f / l1_Lf
        log_ratio (float | None): l1_f / ((1 - Φ(r)) log r) for r > 1
    """
    r: float
    l1_f: float
    l1_Lf: float
    ratio: float
    log_ratio: float | None = None


class RateRow(CDLabRecord):
    """
    One δ of a perturbation family.

    w1 is measured against the analytic target law, w1_grid against the rigid
    pushforward on the same cells, and w1_floor is the distance between those two
    targets.
    """
    family: str
    delta: float
    eps: float
    w1: float
    deficit_l1: float
    thm_rhs: float
    n: int
    cd_margin: float
    passed: bool
    w1_grid: float | None = None
    w1_floor: float | None = None
    lh_l1: float = 0.0
    paper_rhs: float = 0.0
    deficit_bound: float | None = None
    end_to_end_rhs: float | None = None
    analytic_eps: float | None = None
    analytic_w1: float | None = None
    reason: str = ''


class RateTable(CDLabRecord):
    family: str
    dim: float
    n: int
    rows: list[RateRow]

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)


class RateFit(CDLabRecord):
    """
    Log-log fit of W₁ against the rate law.

    Attributes:
        law (str): 'linear_eps' or 'eps_log'
        exponent (float): Fitted slope
        constant (float): exp(intercept) of the fit
        residual (float): Maximum relative deviation of the fitted law
        envelope_constant (float): Largest observed ratio w1 / rate(ε)
    """
    law: str
    exponent: float
    constant: float
    residual: float
    envelope_constant: float


class ResolutionRow(CDLabRecord):
    delta: float
    eps_n: float
    eps_2n: float
    w1_n: float
    w1_2n: float
    eps_change: float
    w1_change: float


class ResolutionReport(CDLabRecord):
    family: str
    n: int
    rows: list[ResolutionRow]
    max_change: float
    envelope_change: float
    passed: bool


class RunConfig(BaseModel):
    """
    Reproducible configuration of one command line run.

    Serialized as `key = value` lines; fields left as None are omitted, so
    to_text() followed by from_text() reproduces the record exactly.
    """
    command: str
    model: str = 'jacobi'
    N: float | None = None
    kappa: float | None = None
    radius: float | None = None
    delta: float | None = None
    psi: str | None = None
    n: int | None = None
    mapping: str | None = None
    family: str | None = None
    deltas: list[float] | None = None
    seed: int | None = None
    out: str | None = None
    p: float | None = None
    c: float | None = None
    r: float | None = None
    k: int | None = None
    times: list[float] | None = None
    samples: int | None = None
    law: str | None = None

    @field_validator('deltas', 'times', mode='before')
    @classmethod
    def split_number_list(cls, value):
        if isinstance(value, str):
            return parse_float_list(value)
        return value

    def to_text(self) -> str:
        """
        Render the configuration as `key = value` lines.

        Returns:
            str: Canonical configuration text, also hashed into the run ID
        """
        values = {}
        for key in type(self).model_fields:
            value = getattr(self, key)
            if value is None:
                continue
            if isinstance(value, list):
                values[key] = ','.join(format_float(item) for item in value)
            elif isinstance(value, float):
                values[key] = format_float(value)
            else:
                values[key] = str(value)
        return render_config_text(values, header='cdlab run configuration')

    @staticmethod
    def from_text(text: str) -> 'RunConfig':
        """
        Parse a configuration file.

        Raises:
            ValueError: If a key is unknown or a value fails validation
        """
        values = parse_config_text(text)
        unknown = sorted(set(values) - set(RunConfig.model_fields))
        if unknown:
            logger.error(f'Unknown configuration keys: {unknown}')
            raise ValueError(f'Unknown configuration keys: {unknown}')
        config = RunConfig.model_validate(values)
        logging.info(f'Loaded RunConfig for command {config.command}')
        return config
