"""
CDLab Stein Module

This module implements the Stein operators of the three targets (symmetric Beta,
standard Gaussian, generalized Cauchy), the Beta Stein discrepancy as a linear
program, the closed-form solution of the Cauchy Stein equation for piecewise-linear
sources, and the audits of the Cauchy CDF tail inequalities and solution bounds.

Stein operators:
--------------
    beta(N):    A g = (1 - x²) g' - N x g
    gauss:      A g = g' - x g
    cauchy(N):  A g = (1 + x²) g' + N x g

Each vanishes in expectation under its target.

Key Components:
-------------
- beta_test_class(), stein_operator_apply(), beta_discrepancy()
- PiecewiseLinear, random_lipschitz(): Lipschitz sources for the Cauchy equation
- piecewise_mean(): Exact mean of a piecewise-linear source under the target
- cauchy_stein_solve(): Closed-form g and g' through the target CDF
- stein_bound_audit(): Monte-Carlo audit of ‖g‖_∞ and ‖g'‖_∞ against their constants
- tail_bound_audit(): Four CDF tail inequalities on a grid
- stein_factor_profile(): The functions whose suprema define the solution bounds
- explicit_constants(): Every explicit constant at a given N
- gauss_stein_bound(), beta_stein_bound(), cauchy_stein_bound(): W₁ bounds from deficits

Usage:
-----
    solution = cauchy_stein_solve(PiecewiseLinear([], [1.0]), -3.0, np.linspace(-20, 20, 401))
    report = stein_bound_audit(-3.0, 100, seed=7)

Dependencies:
-----------
- numpy: Vectorized closed forms
- scipy.optimize: linprog (HiGHS) for the discrepancy
- scipy.sparse: Difference constraints of the discrepancy
- scipy.special: gammaln for normalizers
- concurrent.futures: Parallel audit samples on independent substreams

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import optimize, sparse, special, stats

from cdlab_codes import seed_substreams
from cdlab_measures import QuadratureMeasure, TargetFamily, TargetLaw, beta_norm, cauchy_norm, target_law
from cdlab_result import (CDLabAuditStatus, DiscrepancyResult, ExplicitConstants, SteinAuditReport,
                          SteinAuditRow, SteinSolution, SteinTestClass, TailAuditReport)

logger = logging.getLogger(__name__)

BOUND_TOLERANCE = 1e-9
TAIL_TOLERANCE = 1e-12
DEFAULT_KNOT_RADIUS = 8.0


def beta_test_class(N: float) -> SteinTestClass:
    """Class ‖g‖_∞ ≤ 2/N, ‖g'‖_∞ ≤ 2 + N of the Beta discrepancy."""
    if not N > 1:
        logger.error(f'beta_test_class requires N > 1, got {N}')
        raise ValueError(f'beta_test_class requires N > 1, got {N}')
    return SteinTestClass(sup_bound=2.0 / N, lip_bound=2.0 + N, target=TargetFamily.BETA, dim=N)


def stein_operator_apply(target: str, g, dg, nu: QuadratureMeasure, N: float | None = None) -> float:
    """
    ∫ A g dν for the Stein operator of the target.

    Args:
        target (str): beta, gauss or cauchy
        g, dg: Values on nu's support, or callables evaluated there
        nu (QuadratureMeasure): Integrating measure
        N (float | None): Dimension for beta and cauchy

    Returns:
        float: The integral
    """
    x = nu.points
    g_values = g(x) if callable(g) else np.asarray(g, dtype=float)
    dg_values = dg(x) if callable(dg) else np.asarray(dg, dtype=float)
    if target == TargetFamily.BETA:
        values = (1.0 - x * x) * dg_values - N * x * g_values
    elif target == TargetFamily.CAUCHY:
        values = (1.0 + x * x) * dg_values + N * x * g_values
    elif target == TargetFamily.GAUSS:
        values = dg_values - x * g_values
    else:
        logger.error(f'Unknown Stein target: {target}')
        raise ValueError(f'Unknown Stein target {target!r}, expected one of {TargetFamily.ALL}')
    return nu.integrate(values)


def beta_discrepancy(nu: QuadratureMeasure, N: float, grid_size: int = 200) -> DiscrepancyResult:
    """
    Beta Stein discrepancy (1/2) sup ∫A g dν over the test class, as a linear program.

    g is piecewise linear on a uniform grid of [-1, 1] with grid_size cells; an atom
    sitting on a node uses the cell to its right. The box bounds hold g_i, the
    difference constraints hold the slopes.

    Args:
        nu (QuadratureMeasure): Measure supported in [-1, 1]
        N (float): Dimension, N > 1
        grid_size (int): Number of cells

    Returns:
        DiscrepancyResult: Value, solver status and the maximizing g

    Raises:
        ValueError: If nu leaves [-1, 1] or the grid is too small
        RuntimeError: If the solver does not converge
    """
    test_class = beta_test_class(N)
    if grid_size < 2:
        raise ValueError(f'beta_discrepancy requires grid_size >= 2, got {grid_size}')
    if nu.points[0] < -1.0 - 1e-12 or nu.points[-1] > 1.0 + 1e-12:
        logger.error('beta_discrepancy requires a measure supported in [-1, 1]')
        raise ValueError('beta_discrepancy requires a measure supported in [-1, 1]')
    step = 2.0 / grid_size
    nodes = np.linspace(-1.0, 1.0, grid_size + 1)
    t = np.clip(nu.points, -1.0, 1.0)
    cell = np.minimum(np.floor((t + 1.0) / step).astype(int), grid_size - 1)
    theta = (t - nodes[cell]) / step
    slope_term = nu.weights * (1.0 - t * t) / step
    value_term = nu.weights * N * t
    objective = np.zeros(grid_size + 1)
    np.add.at(objective, cell, -slope_term - value_term * (1.0 - theta))
    np.add.at(objective, cell + 1, slope_term - value_term * theta)

    difference = sparse.diags([-np.ones(grid_size), np.ones(grid_size)], [0, 1], shape=(grid_size, grid_size + 1))
    constraints = sparse.vstack([difference, -difference]).tocsr()
    limit = np.full(2 * grid_size, test_class.lip_bound * step)
    result = optimize.linprog(-objective, A_ub=constraints, b_ub=limit,
                              bounds=[(-test_class.sup_bound, test_class.sup_bound)] * (grid_size + 1),
                              method='highs')
    if not result.success:
        logger.error(f'Discrepancy LP failed: {result.message}')
        raise RuntimeError(f'Discrepancy LP failed: {result.message}')
    value = 0.5 * max(-result.fun, 0.0)
    logger.info(f'Beta({N:g}) discrepancy on {grid_size} cells: {value:.6g}')
    return DiscrepancyResult(value=value, dim=N, grid_size=grid_size, lp_status=str(result.message),
                             grid=nodes, g=np.asarray(result.x))


class PiecewiseLinear:
    """
    Continuous piecewise-linear function on ℝ.

    Attributes:
        knots (np.ndarray): Sorted breakpoints κ_1 < ... < κ_m, possibly none
        slopes (np.ndarray): m + 1 slopes, the first and last on the unbounded pieces
        value_at_zero (float): h(0)
    """

    def __init__(self, knots, slopes, value_at_zero: float = 0.0):
        self.knots = np.sort(np.asarray(knots, dtype=float).ravel())
        self.slopes = np.asarray(slopes, dtype=float).ravel()
        if self.slopes.size != self.knots.size + 1:
            logger.error('PiecewiseLinear needs one more slope than knots')
            raise ValueError('PiecewiseLinear needs one more slope than knots')
        self.value_at_zero = float(value_at_zero)
        self.lower = np.concatenate(([-np.inf], self.knots))
        self.upper = np.concatenate((self.knots, [np.inf]))

    @property
    def lipschitz(self) -> float:
        return float(np.abs(self.slopes).max())

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        reach = np.clip(x[..., None], self.lower, self.upper) - np.clip(0.0, self.lower, self.upper)
        return self.value_at_zero + reach @ self.slopes

    def derivative(self, x):
        index = np.searchsorted(self.knots, np.asarray(x, dtype=float), side='right')
        return self.slopes[index]


def random_lipschitz(rng: np.random.Generator, radius: float = DEFAULT_KNOT_RADIUS,
                     min_knots: int = 8, max_knots: int = 64) -> PiecewiseLinear:
    """Random 1-Lipschitz source: uniform knots in [-R, R], slopes in [-1, 1], constant outside."""
    count = int(rng.integers(min_knots, max_knots + 1))
    knots = np.sort(rng.uniform(-radius, radius, count))
    slopes = np.zeros(count + 1)
    slopes[1:-1] = rng.uniform(-1.0, 1.0, count - 1)
    return PiecewiseLinear(knots, slopes, value_at_zero=float(rng.uniform(-1.0, 1.0)))


def _require_cauchy_dim(N: float, operation: str):
    if not N < -1:
        logger.error(f'{operation} requires N < -1, got {N}')
        raise ValueError(f'{operation} requires N < -1, got {N}')


def _cdf_integral(law: TargetLaw, t: np.ndarray) -> np.ndarray:
    """∫_{-∞}^t q, zero at -∞."""
    t = np.asarray(t, dtype=float)
    with np.errstate(invalid='ignore'):
        safe = np.where(np.isfinite(t), t, 0.0)
        value = np.where(safe <= 0.0, law.lower_integral(safe), safe + law.lower_integral(-safe))
    return np.where(np.isneginf(t), 0.0, value)


def _tail_integral(law: TargetLaw, t: np.ndarray) -> np.ndarray:
    """∫_t^∞ (1 - q), zero at +∞."""
    return _cdf_integral(law, -np.asarray(t, dtype=float))


def _expected_clip(law: TargetLaw, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """E clip(X, lower, upper) for a symmetric law, one value per piece."""
    with np.errstate(invalid='ignore'):
        from_lower = lower + _tail_integral(law, lower) - _tail_integral(law, upper)
        from_upper = upper - _cdf_integral(law, upper) + _cdf_integral(law, lower)
    value = np.where(np.isfinite(lower), from_lower, from_upper)
    return np.where(np.isinf(lower) & np.isinf(upper), 0.0, value)


def piecewise_mean(h: PiecewiseLinear, law: TargetLaw) -> float:
    """Exact ∫h dμ, piece by piece, for a symmetric law with a finite first moment."""
    offsets = _expected_clip(law, h.lower, h.upper) - np.clip(0.0, h.lower, h.upper)
    return float(h.value_at_zero + offsets @ h.slopes)


def cauchy_stein_solve(h: PiecewiseLinear, N: float, grid) -> SteinSolution:
    """
    Solve (1+x²) g' + N x g = h - ∫h dμ for the generalized Cauchy target.

    With A(x) = ∫_{-∞}^x h' q and B(x) = ∫_x^∞ h' (1 - q), the source is
    h - ∫h dμ = A - B and the bounded solution is

        g = -Z (1+x²)^(-N/2) [(1 - q) A + q B]

    Both integrals are exact for piecewise-linear h through
    ∫_{-∞}^x q = x q(x) - (1+x²)^(N/2) / (N Z). The residual compares the
    operator applied to g with h minus its exact mean from piecewise_mean().

    Args:
        h (PiecewiseLinear): Lipschitz source
        N (float): Dimension, N < -1
        grid: Evaluation nodes

    Returns:
        SteinSolution: g, g', q, residual and norms
    """
    _require_cauchy_dim(N, 'cauchy_stein_solve')
    x = np.asarray(grid, dtype=float)
    law = target_law(TargetFamily.CAUCHY, N)
    z = cauchy_norm(N)
    clipped = np.clip(x[:, None], h.lower, h.upper)
    a_part = (_cdf_integral(law, clipped) - _cdf_integral(law, h.lower)) @ h.slopes
    b_part = (_tail_integral(law, clipped) - _tail_integral(law, h.upper)) @ h.slopes
    q = law.cdf(x)
    upper_q = law.sf(x)
    rho = (1.0 + x * x) ** (-N / 2.0)
    g = -z * rho * (upper_q * a_part + q * b_part)
    # product rule: A' (1 - q) + B' q vanishes
    d_rho = -N * x * rho / (1.0 + x * x)
    dg = -z * (d_rho * (upper_q * a_part + q * b_part) + rho * law.pdf(x) * (b_part - a_part))
    h_mean = piecewise_mean(h, law)
    centered = h(x) - h_mean
    residual = float(np.max(np.abs((1.0 + x * x) * dg + N * x * g - centered)))
    solution = SteinSolution(grid=x, g=g, dg=dg, q=q, centered=centered, h_mean=h_mean, residual=residual,
                             sup_g=float(np.abs(g).max()), sup_dg=float(np.abs(dg).max()),
                             lipschitz=h.lipschitz, constants=explicit_constants(N))
    logger.debug(f'Cauchy({N:g}) Stein solve: sup|g|={solution.sup_g:.6g}, sup|g\'|={solution.sup_dg:.6g}, '
                 f'residual={residual:.2e}')
    return solution


def _audit_sample(sample: int, rng: np.random.Generator, N: float, grid: np.ndarray) -> SteinAuditRow:
    h = random_lipschitz(rng)
    solution = cauchy_stein_solve(h, N, grid)
    lipschitz = max(solution.lipschitz, 1e-300)
    return SteinAuditRow(sample=sample, lipschitz=solution.lipschitz, sup_g=solution.sup_g, sup_dg=solution.sup_dg,
                         residual=solution.residual, g_ratio=solution.sup_g / lipschitz,
                         dg_ratio=solution.sup_dg / lipschitz)


def stein_bound_audit(N: float, sample_count: int, seed: int, workers: int = 1, grid=None) -> SteinAuditReport:
    """
    Audit ‖g‖_∞ ≤ L_N ‖h'‖_∞ and ‖g'‖_∞ ≤ K_N ‖h'‖_∞ over random Lipschitz sources.

    Sample i always uses substream i of the seed, so the report does not depend on
    the worker count.

    Args:
        N (float): Dimension, N < -1
        sample_count (int): Number of random sources, at least 1
        seed (int): Root seed
        workers (int): Threads solving samples concurrently
        grid: Evaluation nodes, 4001 points on [-20, 20] when None

    Returns:
        SteinAuditReport: Maximum ratios, violations and per-sample rows
    """
    _require_cauchy_dim(N, 'stein_bound_audit')
    if sample_count < 1:
        logger.error(f'stein_bound_audit requires sample_count >= 1, got {sample_count}')
        raise ValueError(f'stein_bound_audit requires sample_count >= 1, got {sample_count}')
    grid = np.linspace(-20.0, 20.0, 4001) if grid is None else np.asarray(grid, dtype=float)
    generators = seed_substreams(seed, sample_count)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        rows = list(executor.map(lambda item: _audit_sample(item[0], item[1], N, grid), enumerate(generators)))
    constants = explicit_constants(N)
    violations = sum(1 for row in rows
                     if row.g_ratio > constants.L_N + BOUND_TOLERANCE
                     or row.dg_ratio > constants.K_N + BOUND_TOLERANCE)
    report = SteinAuditReport(dim=N, sample_count=sample_count, seed=seed,
                              max_g_ratio=max(row.g_ratio for row in rows),
                              max_gprime_ratio=max(row.dg_ratio for row in rows),
                              max_residual=max(row.residual for row in rows), violations=violations,
                              constants=constants, rows=rows,
                              status=CDLabAuditStatus.PASS if violations == 0 else CDLabAuditStatus.FAIL)
    if violations:
        logger.warning(f'Stein bound audit at N={N:g}: {violations} violations')
    logger.info(f'Stein bound audit at N={N:g}: max g ratio {report.max_g_ratio:.4f} '
                f'(≤ {constants.L_N:.4f}), max g\' ratio {report.max_gprime_ratio:.4f} '
                f'(≤ {constants.K_N:.4f})')
    return report


def tail_bound_audit(N: float, grid=None) -> TailAuditReport:
    """
    Minimum margins of the four CDF tail inequalities of the generalized Cauchy law.

    For x < 0, q(x) ≤ min(1/2, 1/|N Z x|)(1+x²)^(N/2) and its mirror for 1 - q on x > 0.
    For x ≤ 0 the CDF of the (1+t²)^(N/2) law is at most (1+x²)^(N/2+1)/2, and for
    x < 0 at most (1+x²)^(N/2+1)/((N+1) C_N x).

    Args:
        N (float): Dimension, N < -1
        grid: Nodes, 10⁴ points symmetric around 0 (excluding 0) when None
    """
    _require_cauchy_dim(N, 'tail_bound_audit')
    if grid is None:
        left = -np.geomspace(1e-4, 1e4, 5000)
        grid = np.concatenate((left, -left))
    x = np.asarray(grid, dtype=float)
    law = target_law(TargetFamily.CAUCHY, N)
    z = cauchy_norm(N)
    weight_mass = cauchy_weight_mass(N)
    weighted = stats.t(df=-N - 1.0, scale=1.0 / math.sqrt(-N - 1.0))
    negative, positive = x[x < 0], x[x > 0]
    non_positive = x[x <= 0]

    def envelope(points):
        return np.minimum(0.5, 1.0 / np.abs(N * z * points)) * (1.0 + points * points) ** (N / 2.0)

    def min_or_inf(values):
        return float(values.min()) if values.size else math.inf

    left_tail = min_or_inf(envelope(negative) - law.cdf(negative))
    right_tail = min_or_inf(envelope(positive) - law.sf(positive))
    weighted_half = min_or_inf(0.5 * (1.0 + non_positive ** 2) ** (N / 2.0 + 1.0) - weighted.cdf(non_positive))
    weighted_tail = min_or_inf((1.0 + negative ** 2) ** (N / 2.0 + 1.0) / ((N + 1.0) * weight_mass * negative)
                               - weighted.cdf(negative))
    passed = min(left_tail, right_tail, weighted_half, weighted_tail) >= -TAIL_TOLERANCE
    logger.info(f'Tail audit at N={N:g}: margins {left_tail:.3e}, {right_tail:.3e}, '
                f'{weighted_half:.3e}, {weighted_tail:.3e}')
    return TailAuditReport(dim=N, grid_size=x.size, left_tail=left_tail, right_tail=right_tail,
                           weighted_half=weighted_half, weighted_tail=weighted_tail,
                           status=CDLabAuditStatus.PASS if passed else CDLabAuditStatus.FAIL)


def stein_factor_profile(N: float, grid) -> dict[str, np.ndarray | float]:
    """
    Functions whose suprema bound the Cauchy Stein solution.

    lip_profile = a₁ + a₂ bounds |g'| / ‖h'‖_∞ pointwise and sup_profile = Z (b₁ + b₂)
    bounds |g| / ‖h'‖_∞, where with ρ = (1+x²)^(-N/2), Q₋ = ∫_{-∞}^x q, Q₊ = ∫_x^∞ (1-q):

        a₁ = |1 + N Z x ρ (1-q)| Q₋ / (1+x²),   a₂ = |1 - N Z x ρ q| Q₊ / (1+x²)
        b₁ = (1-q) ρ Q₋,                        b₂ = q ρ Q₊

    Returns:
        dict: grid, lip_profile, sup_profile and their maxima
    """
    _require_cauchy_dim(N, 'stein_factor_profile')
    x = np.asarray(grid, dtype=float)
    law = target_law(TargetFamily.CAUCHY, N)
    z = cauchy_norm(N)
    q, upper_q = law.cdf(x), law.sf(x)
    rho = (1.0 + x * x) ** (-N / 2.0)
    below, above = _cdf_integral(law, x), _tail_integral(law, x)
    lip_profile = (np.abs(1.0 + N * z * x * rho * upper_q) * below
                   + np.abs(1.0 - N * z * x * rho * q) * above) / (1.0 + x * x)
    sup_profile = z * rho * (upper_q * below + q * above)
    return {'grid': x, 'lip_profile': lip_profile, 'sup_profile': sup_profile,
            'lip_sup': float(lip_profile.max()), 'sup_sup': float(sup_profile.max())}


def cauchy_weight_mass(N: float) -> float:
    """C_N = ∫(1+t²)^(N/2) dt, finite for N < -1."""
    return math.exp(0.5 * math.log(math.pi) + special.gammaln(-N / 2.0 - 0.5) - special.gammaln(-N / 2.0))


def explicit_constants(N: float) -> ExplicitConstants:
    """
    Explicit constants at dimension N.

    Finite N > 1 fills the Beta-side constants, N < -1 the Cauchy-side constants;
    everything else is left absent.

    Example:
        >>> explicit_constants(3.0).thm_beta_const
        8.0
    """
    constants = ExplicitConstants(dim=float(N))
    if math.isfinite(N) and N > 1:
        ultra_base = 2.0 + 2.0 * N / (N - 1.0) ** 2
        l1_const = 2.0 + (N + 1.0) / N * (2.0 / (N + 1.0) * math.log(2.0) + math.log(ultra_base))
        deficit_const = 4.0 * l1_const + (N - 1.0) / (N * (N + 1.0))
        stein_const = N * N / 4.0 + 5.0 * N / 4.0 + 2.0
        constants.C_prop34 = l1_const
        constants.B_sobolev = 4.0 * N / ((N + 1.0) * (N - 1.0) ** 2)
        constants.C_ultra = ultra_base ** ((N + 1.0) / 2.0)
        constants.lemma32_C = deficit_const
        constants.thm35_class = [2.0 / N, 2.0 + N]
        constants.thm_beta_const = stein_const
        constants.C_end = stein_const * (1.0 / (N + 1.0) + deficit_const) + 1.0 / (N * math.sqrt(N + 1.0))
        constants.Z_plus = beta_norm(N)
    elif N < -1:
        ratio = N / (N + 1.0)
        second = 4.5 * ratio ** 2 + ratio
        constants.lem51_factor = 4.0 * (1.0 - N) ** 2 / abs(N)
        constants.L_N = max((4.0 * abs(N) + 3.0) / (N * (N + 1.0)), second)
        constants.L_N_alt = max((4.0 * N + 3.0) / (abs(N) * (N + 1.0)), second)
        constants.K_N = 1.0 + (1.5 + ratio) * ratio
        constants.C_N = cauchy_weight_mass(N)
        constants.Z_minus = cauchy_norm(N)
    return constants


def gauss_stein_bound(deficit_l1: float, eps: float) -> float:
    """4/(1+ε) ‖Γ(f) + εf² - 1 - ε‖₁ + 4ε, from the precomputed L¹ norm."""
    return 4.0 / (1.0 + eps) * deficit_l1 + 4.0 * eps


def beta_stein_bound(identity_l1: float, lambda1: float, N: float, f_l2: float) -> float:
    """(N²/4 + 5N/4 + 2) ‖Γ(f) + f² - 1‖₁ + |N - λ|/N ‖f‖₂."""
    return explicit_constants(N).thm_beta_const * identity_l1 + abs(N - lambda1) / N * f_l2


def cauchy_stein_bound(identity_l1: float, lambda1: float, N: float, f2_l1: float) -> float:
    """K_N ‖Γ(f) - f² - 1‖₁ + |λ₁ - |N|| L_N ‖f²‖₁, λ₁ the gap of -L."""
    constants = explicit_constants(N)
    return constants.K_N * identity_l1 + abs(lambda1 + N) * constants.L_N_alt * f2_l1
