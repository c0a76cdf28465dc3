"""
CDLab Experiments Module

This module runs the perturbation families, assembles their rate tables and fits the
observed stability rates. Each family deforms a rigid model by a parameter δ, checks
the curvature-dimension condition of every deformed model, and measures how far the
pushforward of its first eigenfunction lands from the rigid target.

Families:
--------
    beta_scaled          jacobi(N) shrunk to radius r = 1 - δ        ε = N(1/r² - 1)
    beta_dim_shift       scaled jacobi(N - δ) with curvature N - 1   ε = δ/(N - δ - 1)
    beta_phi_perturbed   φ(1 + δψ), rescaled to restore CD(N-1, N)   ε measured
    gauss_stiff          gaussian(κ = 1 + δ)                          ε = δ
    gauss_quartic        W = x²/2 + δx⁴                               ε measured
    cauchy_dim_shift     cauchy(N - δ)                                ε = δ

Key Components:
-------------
- run_family(): RateTable of one family over a δ-grid, rows computed in parallel
- fit_rate(): Log-log fit of W₁ (or the deficit) against ε or ε log(2/ε)
- resolution_check(): Relative change of every row between n and 2n
- write_rate_table(): Rate CSV and audit CSV of a table

Targets are the pushforwards of the rigid model eigenfunction computed on the same
mapping and resolution as the family, so both measures share their cell structure.

Dependencies:
-----------
- numpy: polyfit and grid arithmetic
- concurrent.futures: Thread pool over the rows of a family
- cdlab_models, cdlab_spectral, cdlab_measures, cdlab_estimates, cdlab_stein

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

import cdlab_globals
from cdlab_estimates import end_to_end_constant, eigen_deficit
from cdlab_measures import TargetFamily, grid_measure, pushforward, target_law, w1_distance
from cdlab_models import BumpName, DiffusionModel, cd_margin, make_model
from cdlab_result import (DEFAULT_DELTAS, CDLabAuditStatus, RateFit, RateRow, RateTable, ResolutionReport,
                          ResolutionRow)
from cdlab_spectral import GridMapping, default_mapping, discretize, eigen_lowest, refined_gap, spectral_gap
from cdlab_stein import beta_stein_bound, cauchy_stein_bound, gauss_stein_bound
from cdlab_utils import write_csv

logger = logging.getLogger(__name__)

MARGIN_TOLERANCE = 1e-9
EPS_TOLERANCE = 1e-8
ANALYTIC_TOLERANCE = 0.01
BOUND_SLACK = 0.01
RESOLUTION_TOLERANCE = 0.01
MIN_FIT_ROWS = 4
MIN_FIT_DECADES = 1.5

RATE_COLUMNS = ['family', 'delta', 'eps', 'w1', 'deficit_l1', 'thm_rhs', 'n', 'cd_margin', 'pass']
AUDIT_COLUMNS = ['family', 'delta', 'eps', 'deficit_l1', 'lh_l1', 'paper_rhs', 'pass']


class FamilyName:
    BETA_SCALED = 'beta_scaled'
    BETA_PHI_PERTURBED = 'beta_phi_perturbed'
    BETA_DIM_SHIFT = 'beta_dim_shift'
    GAUSS_STIFF = 'gauss_stiff'
    GAUSS_QUARTIC = 'gauss_quartic'
    CAUCHY_DIM_SHIFT = 'cauchy_dim_shift'

    ALL = (BETA_SCALED, BETA_PHI_PERTURBED, BETA_DIM_SHIFT, GAUSS_STIFF, GAUSS_QUARTIC, CAUCHY_DIM_SHIFT)
    BETA = (BETA_SCALED, BETA_PHI_PERTURBED, BETA_DIM_SHIFT)
    GAUSS = (GAUSS_STIFF, GAUSS_QUARTIC)


class RateLaw:
    LINEAR_EPS = 'linear_eps'
    EPS_LOG = 'eps_log'

    ALL = (LINEAR_EPS, EPS_LOG)


def family_dimension(family: str, N: float | None = None) -> float:
    """Target dimension of a family: N (default 3) for beta, ∞ for gauss, N (default -3) for cauchy."""
    if family in FamilyName.BETA:
        dim = 3.0 if N is None else float(N)
        if not (math.isfinite(dim) and dim > 1):
            raise ValueError(f'{family} requires finite N > 1, got {dim}')
        return dim
    if family in FamilyName.GAUSS:
        return math.inf
    if family == FamilyName.CAUCHY_DIM_SHIFT:
        dim = -3.0 if N is None else float(N)
        if not dim < -1:
            raise ValueError(f'{family} requires N < -1, got {dim}')
        return dim
    logger.error(f'Unknown family: {family}')
    raise ValueError(f'Unknown family {family!r}, expected one of {FamilyName.ALL}')


def family_law(family: str) -> str:
    """Rate law governing a family: order ε for beta, ε log(2/ε) otherwise."""
    return RateLaw.LINEAR_EPS if family in FamilyName.BETA else RateLaw.EPS_LOG


def rigid_model(family: str, dim: float) -> DiffusionModel:
    if family in FamilyName.BETA:
        return make_model('jacobi', N=dim)
    if family in FamilyName.GAUSS:
        return make_model('gaussian', kappa=1.0)
    return make_model('cauchy', N=dim)


def _margin_grid(model: DiffusionModel) -> np.ndarray:
    if model.is_finite:
        return np.linspace(-0.99, 0.99, 401) * model.radius
    return np.linspace(-20.0, 20.0, 801)


def restoring_scale(model: DiffusionModel) -> float:
    """
    Smallest constant c with CD(N-1, N) for c·φ on the margin grid.

    For the φ^(-β) family the margin is [-(N-1)φ''/2 - ρ]/φ, so c = 2 / min(-φ'').
    """
    curvature = -model.phi(_margin_grid(model), 2)
    if not np.all(curvature > 0):
        logger.error(f'φ of {model.describe()} is not concave, no rescaling restores CD(N-1, N)')
        raise ValueError(f'φ of {model.describe()} is not concave, no rescaling restores CD(N-1, N)')
    return float(2.0 / curvature.min())


def build_family_model(family: str, delta: float, dim: float, psi: str = BumpName.BUMP) -> DiffusionModel:
    """
    Deformed model of a family at parameter δ.

    Raises:
        ValueError: If δ takes the model out of its admissible range
    """
    if family == FamilyName.BETA_SCALED:
        return make_model('scaled', base=make_model('jacobi', N=dim), r=1.0 - delta)
    if family == FamilyName.BETA_DIM_SHIFT:
        shifted = dim - delta
        if not shifted > 1:
            raise ValueError(f'beta_dim_shift needs N - delta > 1, got {shifted}')
        return make_model('scaled', base=make_model('jacobi', N=shifted), r=math.sqrt((shifted - 1.0) / (dim - 1.0)))
    if family == FamilyName.BETA_PHI_PERTURBED:
        base = make_model('jacobi', N=dim)
        unscaled = make_model('phi_perturbed', base=base, delta=delta, psi=psi)
        return make_model('phi_perturbed', base=base, delta=delta, psi=psi, scale=restoring_scale(unscaled))
    if family == FamilyName.GAUSS_STIFF:
        return make_model('gaussian', kappa=1.0 + delta)
    if family == FamilyName.GAUSS_QUARTIC:
        return make_model('gauss_quartic', delta=delta)
    if family == FamilyName.CAUCHY_DIM_SHIFT:
        return make_model('cauchy', N=dim - delta)
    raise ValueError(f'Unknown family {family!r}, expected one of {FamilyName.ALL}')


def analytic_values(family: str, delta: float, dim: float) -> tuple[float | None, float | None]:
    """Closed-form (ε, W₁) of the exact families, None where no closed form exists."""
    if family == FamilyName.BETA_SCALED:
        r = 1.0 - delta
        return dim * (1.0 / (r * r) - 1.0), delta * target_law(TargetFamily.BETA, dim).mean_abs()
    if family == FamilyName.BETA_DIM_SHIFT:
        return delta / (dim - delta - 1.0), None
    if family == FamilyName.GAUSS_STIFF:
        return delta, abs(1.0 - (1.0 + delta) ** -0.5) * math.sqrt(2.0 / math.pi)
    if family == FamilyName.CAUCHY_DIM_SHIFT:
        return delta, None
    return None, None


def _target_law(family: str, dim: float):
    if family in FamilyName.BETA:
        return target_law(TargetFamily.BETA, dim)
    if family in FamilyName.GAUSS:
        return target_law(TargetFamily.GAUSS)
    return target_law(TargetFamily.CAUCHY, dim)


def _rigid_pushforward(family: str, dim: float, n: int, mapping: GridMapping):
    op = discretize(rigid_model(family, dim), n, mapping)
    result = spectral_gap(eigen_lowest(op, 3), dim=dim)
    return pushforward(grid_measure(op), result.f)


def _relative_gap(value: float, reference: float) -> float:
    if reference == 0.0:
        return abs(value)
    return abs(value - reference) / abs(reference)


def _rejected_row(family: str, delta: float, n: int, margin: float, reason: str) -> RateRow:
    logger.warning(f'{family} row δ={delta:g} rejected: {reason}')
    return RateRow(family=family, delta=delta, eps=math.nan, w1=math.nan, deficit_l1=math.nan, thm_rhs=math.nan,
                   n=n, cd_margin=margin, passed=False, w1_grid=math.nan, reason=reason)


def _family_row(family: str, delta: float, dim: float, n: int, mapping: GridMapping, target, law, floor: float,
                psi: str) -> RateRow:
    try:
        model = build_family_model(family, delta, dim, psi)
    except ValueError as e:
        return _rejected_row(family, delta, n, math.nan, str(e))

    if math.isinf(dim):
        rho = 1.0
    elif dim > 1:
        rho = dim - 1.0
    else:
        rho = 1.0 - dim
    margin = cd_margin(model, rho, dim, _margin_grid(model)).min_margin
    if margin < -MARGIN_TOLERANCE:
        return _rejected_row(family, delta, n, margin, f'CD({rho:g}, {dim:g}) margin {margin:.3e} < 0, delta too large')

    refined = refined_gap(model, n, mapping)
    dec = eigen_lowest(discretize(model, n, mapping), 3)
    gap = spectral_gap(dec, dim=dim, gap=refined.lambda1)
    deficit = eigen_deficit(model, dec, dim=dim, gap=refined.lambda1)
    measure = pushforward(grid_measure(dec.op), gap.f)
    w1 = w1_distance(measure, law)
    w1_grid = w1_distance(measure, target)
    eps = gap.eps

    end_to_end_rhs = None
    if family in FamilyName.BETA:
        thm_rhs = beta_stein_bound(deficit.identity_l1, gap.lambda1, dim, math.sqrt(deficit.f2_l1))
        end_to_end_rhs = end_to_end_constant(dim) * max(eps, 0.0)
    elif family in FamilyName.GAUSS:
        thm_rhs = gauss_stein_bound(deficit.identity_l1, eps)
    else:
        thm_rhs = cauchy_stein_bound(deficit.identity_l1, gap.lambda1, dim, deficit.f2_l1)

    reasons = []
    if eps < -EPS_TOLERANCE:
        reasons.append(f'ε={eps:.3e} below the curvature bound')
    # w1 carries the discretization floor of the rigid pushforward
    if w1 > thm_rhs * (1.0 + BOUND_SLACK) + floor:
        reasons.append(f'W₁={w1:.4e} above the Stein bound {thm_rhs:.4e}')
    if end_to_end_rhs is not None and w1 > end_to_end_rhs * (1.0 + BOUND_SLACK) + floor:
        reasons.append(f'W₁={w1:.4e} above C_end ε={end_to_end_rhs:.4e}')
    if deficit.status != CDLabAuditStatus.PASS:
        reasons.append('deficit bounds violated')
    analytic_eps, analytic_w1 = analytic_values(family, delta, dim)
    if analytic_eps is not None and _relative_gap(eps, analytic_eps) > ANALYTIC_TOLERANCE:
        reasons.append(f'ε={eps:.6e} disagrees with the closed form {analytic_eps:.6e}')
    if analytic_w1 is not None and _relative_gap(w1_grid, analytic_w1) > ANALYTIC_TOLERANCE:
        reasons.append(f'W₁={w1_grid:.6e} disagrees with the closed form {analytic_w1:.6e}')
    if reasons:
        logger.warning(f'{family} row δ={delta:g} failed: {"; ".join(reasons)}')

    return RateRow(family=family, delta=delta, eps=eps, w1=w1, deficit_l1=deficit.deficit_l1, thm_rhs=thm_rhs,
                   n=n, cd_margin=margin, passed=not reasons, w1_grid=w1_grid, w1_floor=floor,
                   lh_l1=deficit.lh_l1, paper_rhs=deficit.paper_rhs,
                   deficit_bound=deficit.deficit_bound, end_to_end_rhs=end_to_end_rhs, analytic_eps=analytic_eps,
                   analytic_w1=analytic_w1, reason='; '.join(reasons))


def run_family(family: str, deltas: list[float] | None = None, n: int | None = None, N: float | None = None,
               psi: str | None = None, workers: int | None = None) -> RateTable:
    """
    Rate table of a perturbation family.

    Args:
        family (str): One of FamilyName.ALL
        deltas (list[float] | None): Positive family parameters, DEFAULT_DELTAS when None
        n (int | None): Resolution, the configured default when None
        N (float | None): Target dimension for beta and cauchy families
        psi (str | None): Bump profile of beta_phi_perturbed
        workers (int | None): Threads over rows, the configured count when None

    Returns:
        RateTable: One row per δ in ascending order. Rows whose model violates the
            curvature-dimension condition are kept with passed False and a reason.

    Raises:
        ValueError: If the family, dimension or a δ is invalid
    """
    dim = family_dimension(family, N)
    deltas = sorted(DEFAULT_DELTAS if deltas is None else [float(delta) for delta in deltas])
    if not deltas or deltas[0] <= 0:
        logger.error(f'run_family requires positive deltas, got {deltas}')
        raise ValueError(f'run_family requires positive deltas, got {deltas}')
    n = cdlab_globals.DEFAULT_RESOLUTION if n is None else int(n)
    workers = cdlab_globals.WORKERS if workers is None else max(int(workers), 1)
    psi = BumpName.BUMP if psi is None else psi
    if psi not in BumpName.ALL:
        raise ValueError(f'Unknown bump profile {psi!r}, expected one of {BumpName.ALL}')

    mapping = default_mapping(rigid_model(family, dim))
    target = _rigid_pushforward(family, dim, n, mapping)
    law = _target_law(family, dim)
    floor = w1_distance(target, law)
    logger.info(f'Running {family} (N={dim:g}) over {len(deltas)} deltas at n={n} with {workers} workers')

    def row(delta: float) -> RateRow:
        return _family_row(family, delta, dim, n, mapping, target, law, floor, psi)

    with ThreadPoolExecutor(max_workers=workers) as executor:
        rows = list(executor.map(row, deltas))
    table = RateTable(family=family, dim=dim, n=n, rows=rows)
    logger.info(f'{family}: {sum(r.passed for r in rows)}/{len(rows)} rows passed')
    return table


def _rate(eps: np.ndarray, law: str) -> np.ndarray:
    if law == RateLaw.LINEAR_EPS:
        return eps
    if law == RateLaw.EPS_LOG:
        return eps * np.log(2.0 / eps)
    logger.error(f'Unknown rate law: {law}')
    raise ValueError(f'Unknown rate law {law!r}, expected one of {RateLaw.ALL}')


def _fit_points(table: RateTable, quantity: str) -> tuple[np.ndarray, np.ndarray]:
    eps = np.array([row.eps for row in table.rows], dtype=float)
    values = np.array([getattr(row, quantity) for row in table.rows], dtype=float)
    keep = np.isfinite(eps) & np.isfinite(values) & (eps > 0) & (eps < 2.0)
    return eps[keep], values[keep]


def envelope_constant(table: RateTable, law: str, quantity: str = 'w1_grid') -> float:
    """Largest observed ratio quantity / rate(ε) over the valid rows."""
    eps, values = _fit_points(table, quantity)
    if eps.size == 0:
        raise ValueError(f'No valid rows in the {table.family} table')
    return float(np.max(values / _rate(eps, law)))


def fit_rate(table: RateTable, law: str, quantity: str = 'w1_grid') -> RateFit:
    """
    Least-squares fit of log(quantity) against log ε or log(ε log(2/ε)).

    Args:
        table (RateTable): Family table
        law (str): 'linear_eps' or 'eps_log'
        quantity (str): Row field to fit: 'w1_grid' (W₁ with the discretization floor
            cancelled), 'w1' or 'deficit_l1'

    Returns:
        RateFit: Slope, constant, maximum relative deviation and envelope constant

    Raises:
        ValueError: With fewer than 4 usable rows, ε spanning under 1.5 decades, or a
            vanishing quantity
    """
    eps, values = _fit_points(table, quantity)
    if eps.size < MIN_FIT_ROWS:
        logger.error(f'fit_rate needs {MIN_FIT_ROWS} rows, got {eps.size}')
        raise ValueError(f'fit_rate needs at least {MIN_FIT_ROWS} usable rows, got {eps.size}')
    decades = math.log10(eps.max() / eps.min())
    if decades < MIN_FIT_DECADES:
        logger.error(f'ε spans only {decades:.2f} decades')
        raise ValueError(f'ε must span at least {MIN_FIT_DECADES} decades, got {decades:.2f}')
    if np.any(values <= 0):
        logger.error(f'Degenerate {quantity} column in the {table.family} table')
        raise ValueError(f'Degenerate {quantity} column: values must be positive to fit a rate')
    x = np.log(_rate(eps, law))
    y = np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.max(np.abs(np.exp(y - (slope * x + intercept)) - 1.0)))
    fit = RateFit(law=law, exponent=float(slope), constant=float(math.exp(intercept)), residual=residual,
                  envelope_constant=float(np.max(values / _rate(eps, law))))
    logger.info(f'{table.family} {quantity} vs {law}: slope {fit.exponent:.4f}, residual {fit.residual:.3e}')
    return fit


def resolution_check(family: str, deltas: list[float] | None = None, n: int | None = None,
                     N: float | None = None, psi: str | None = None, workers: int | None = None) -> ResolutionReport:
    """Rerun a family at 2n and report the relative changes of ε, W₁ and the envelope constant."""
    n = cdlab_globals.DEFAULT_RESOLUTION if n is None else int(n)
    coarse = run_family(family, deltas, n, N, psi, workers)
    fine = run_family(family, deltas, 2 * n, N, psi, workers)
    rows = []
    for low, high in zip(coarse.rows, fine.rows):
        rows.append(ResolutionRow(delta=low.delta, eps_n=low.eps, eps_2n=high.eps, w1_n=low.w1_grid,
                                  w1_2n=high.w1_grid, eps_change=_relative_gap(low.eps, high.eps),
                                  w1_change=_relative_gap(low.w1_grid, high.w1_grid)))
    changes = [value for row in rows for value in (row.eps_change, row.w1_change)]
    max_change = max(changes) if all(math.isfinite(value) for value in changes) else math.inf
    law = family_law(family)
    try:
        envelope_change = _relative_gap(envelope_constant(coarse, law), envelope_constant(fine, law))
    except ValueError:
        envelope_change = math.inf
    report = ResolutionReport(family=family, n=n, rows=rows, max_change=max_change, envelope_change=envelope_change,
                              passed=max_change < RESOLUTION_TOLERANCE and envelope_change < RESOLUTION_TOLERANCE)
    logger.info(f'{family} resolution check n={n} -> {2 * n}: max change {max_change:.3e}')
    return report


def write_rate_table(table: RateTable, out_dir: str | Path) -> tuple[Path, Path]:
    """
    Write `<family>.csv` and `<family>_audit.csv` into out_dir.

    Returns:
        tuple[Path, Path]: Rate table path and audit table path
    """
    out_dir = Path(out_dir)
    rate_rows = []
    audit_rows = []
    for row in table.rows:
        record = row.model_dump()
        record['pass'] = row.passed
        rate_rows.append(record)
        audit_rows.append({'family': row.family, 'delta': row.delta, 'eps': row.eps, 'deficit_l1': row.deficit_l1,
                           'lh_l1': row.lh_l1, 'paper_rhs': row.paper_rhs, 'pass': row.passed})
    rate_path = write_csv(rate_rows, out_dir / f'{table.family}.csv', RATE_COLUMNS)
    audit_path = write_csv(audit_rows, out_dir / f'{table.family}_audit.csv', AUDIT_COLUMNS)
    return rate_path, audit_path
