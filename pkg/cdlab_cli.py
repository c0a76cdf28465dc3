"""
CDLab Command Line Module

This module is the command line front end of the laboratory. Every subcommand builds a
RunConfig, runs the corresponding audit or experiment, writes its CSV artifacts and a
summary.txt into a run directory named by the deterministic run ID, and prints the
summary to standard output.

Subcommands:
----------
    model-info      Model description, normalization and identity moments
    cd-check        Curvature-dimension margin of a model at its own (ρ, N)
    gap             Spectral gap, refined gap, spectral CSV, optional ultracontractivity probe
    deficit         Eigenfunction deficit and the L¹ inequality audits
    stability       Perturbation family rate table and rate fit
    stein-audit     Cauchy Stein solution bounds over random Lipschitz sources
    tail-audit      Cauchy CDF tail inequalities
    counterexample  Gaussian counterexample ratio for one r or the default sweep
    constants       Explicit constants at dimension N
    w1              W₁ and Stein discrepancy of an eigenfunction pushforward

Exit status:
----------
    0   every audit passed
    1   an audit or a row failed, or a solver did not converge
    2   usage error or invalid parameter

Usage:
-----
    $ python cdlab_cli.py gap --model jacobi --N 3 --n 2000
    $ python cdlab_cli.py stability --family beta_scaled --N 3 --deltas 1e-3,1e-2,1e-1
    $ python cdlab_cli.py constants --N 3

Dependencies:
-----------
- argparse: Subcommand parsing
- cdlab_globals: Default output directory, resolution, seed and worker count
- cdlab_codes: Deterministic run IDs
- All laboratory modules

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

import cdlab_globals
from cdlab_codes import create_run_id, seed_substreams
from cdlab_estimates import (InequalityRegime, eigen_deficit, fit_counterexample_constant,
                             hypercontractive_decay_check, l1_spectral_inequality_audit, lp_upgrade_audit,
                             ou_counterexample)
from cdlab_experiments import family_law, fit_rate, run_family, write_rate_table
from cdlab_measures import TargetFamily, grid_measure, pushforward, quantile_w1, save_measure_csv, target_law, \
    target_measure, w1_distance
from cdlab_models import CDLabModelKind, DiffusionModel, cd_margin, identity_moments, make_model
from cdlab_result import CDLabAuditStatus, RunConfig
from cdlab_spectral import (discretize, eigen_lowest, export_spectral_csv, refined_gap, spectral_gap,
                            ultracontractivity_probe)
from cdlab_stein import PiecewiseLinear, beta_discrepancy, cauchy_stein_solve, explicit_constants, stein_bound_audit, \
    tail_bound_audit
from cdlab_utils import format_float, write_csv

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

COUNTEREXAMPLE_RADII = [1.0, 2.0, 4.0, 8.0, 16.0]
DEFAULT_SAMPLES = 100
DEFAULT_TIMES = [0.25, 0.5, 1.0]
INEQUALITY_MODES = 8

COMMANDS = ('model-info', 'cd-check', 'gap', 'deficit', 'stability', 'stein-audit', 'tail-audit',
            'counterexample', 'constants', 'w1')


class CommandOutcome:
    """Result of one subcommand: pass flag and summary lines."""

    def __init__(self):
        self.passed = True
        self.lines: list[str] = []

    def add(self, key: str, value):
        if isinstance(value, float):
            value = format_float(value)
        self.lines.append(f'{key} = {value}')

    def check(self, key: str, passed: bool):
        self.add(key, 'pass' if passed else 'fail')
        self.passed = self.passed and bool(passed)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='RunConfig file of `key = value` lines, flags override it')
    common.add_argument('--model', choices=CDLabModelKind.ALL)
    common.add_argument('--N', type=float, help='Dimension N')
    common.add_argument('--kappa', type=float, help='Stiffness of the gaussian model')
    common.add_argument('--radius', type=float, help='Radius r of the scaled model')
    common.add_argument('--delta', type=float, help='Perturbation of gauss_quartic and phi_perturbed')
    common.add_argument('--psi', help='Bump profile of phi_perturbed: sin or bump')
    common.add_argument('--n', type=int, help='Resolution')
    common.add_argument('--mapping', help="Grid mapping, e.g. 'arcsine' or 'asinh(17)'")
    common.add_argument('--family', help='Perturbation family of the stability command')
    common.add_argument('--deltas', help='Comma-separated family parameters')
    common.add_argument('--seed', type=int)
    common.add_argument('--out', help='Output directory, run directories are created inside')
    common.add_argument('--p', type=float, help='Exponent p > 1')
    common.add_argument('--c', type=float, help='Exponent c > 0 of the Lᵖ upgrade')
    common.add_argument('--r', type=float, help='Counterexample radius')
    common.add_argument('--k', type=int, help='Number of eigenpairs')
    common.add_argument('--times', help='Comma-separated semigroup times')
    common.add_argument('--samples', type=int, help='Random samples of the audits')
    common.add_argument('--law', help='Rate law of the fit: linear_eps or eps_log')

    parser = argparse.ArgumentParser(prog='cdlab', description='Curvature-dimension stability laboratory')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common])
    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    """
    Merge the optional config file with the explicit flags.

    Raises:
        ValueError: If the file is unreadable or a value is invalid
    """
    values = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding='utf-8')
        except OSError as e:
            logger.error(f'Cannot read config file {args.config}: {e}')
            raise ValueError(f'Cannot read config file {args.config}: {e}')
        values = RunConfig.from_text(text).model_dump(exclude_none=True)
    for key in RunConfig.model_fields:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    values['command'] = args.command
    return RunConfig.model_validate(values)


def build_model(config: RunConfig) -> DiffusionModel:
    kind = config.model
    if kind == CDLabModelKind.JACOBI:
        return make_model(kind, N=3.0 if config.N is None else config.N)
    if kind == CDLabModelKind.CAUCHY:
        return make_model(kind, N=-3.0 if config.N is None else config.N)
    if kind == CDLabModelKind.GAUSSIAN:
        return make_model(kind, kappa=1.0 if config.kappa is None else config.kappa)
    if kind == CDLabModelKind.GAUSS_QUARTIC:
        return make_model(kind, delta=0.0 if config.delta is None else config.delta)
    if kind == CDLabModelKind.SCALED:
        base = make_model(CDLabModelKind.JACOBI, N=3.0 if config.N is None else config.N)
        return make_model(kind, base=base, r=1.0 if config.radius is None else config.radius)
    if kind == CDLabModelKind.PHI_PERTURBED:
        N = 3.0 if config.N is None else config.N
        base = make_model(CDLabModelKind.JACOBI if N > 1 else CDLabModelKind.CAUCHY, N=N)
        return make_model(kind, base=base, delta=0.0 if config.delta is None else config.delta,
                          psi=config.psi or 'bump')
    raise ValueError(f'Unknown model kind {kind!r}, expected one of {CDLabModelKind.ALL}')


def _resolution(config: RunConfig) -> int:
    return cdlab_globals.DEFAULT_RESOLUTION if config.n is None else config.n


def _seed(config: RunConfig) -> int:
    return cdlab_globals.DEFAULT_SEED if config.seed is None else config.seed


def _target_family(dim: float) -> str:
    if math.isinf(dim):
        return TargetFamily.GAUSS
    return TargetFamily.BETA if dim > 1 else TargetFamily.CAUCHY


def run_model_info(config: RunConfig, run_dir: Path, outcome: CommandOutcome):
    model = build_model(config)
    outcome.add('model', model.describe())
    outcome.add('interval', f'({model.interval[0]:g}, {model.interval[1]:g})')
    outcome.add('N', model.dim_param)
    outcome.add('curvature', model.curvature)
    outcome.add('gap', 'unknown' if model.gap is None else model.gap)
    try:
        moments = identity_moments(model)
    except ValueError as e:
        outcome.add('moments', str(e))
        return
    for key, value in moments.get_dict().items():
        outcome.add(key, value)


def run_cd_check(config: RunConfig, run_dir: Path, outcome: CommandOutcome):
    model = build_model(config)
    if model.is_finite:
        grid = np.linspace(-0.99, 0.99, 1001) * model.radius
    else:
        grid = np.linspace(-20.0, 20.0, 2001)
    report = cd_margin(model, model.curvature, model.dim_param, grid)
    write_csv([{'x': x, 'margin': m} for x, m in zip(report.grid, report.margin)], run_dir / 'cd_margin.csv',
              ['x', 'margin'])
    outcome.add('model', model.describe())
    outcome.add('rho', report.rho)
    outcome.add('N', report.dim)
    outcome.add('min_margin', report.min_margin)
    outcome.add('arg_min', report.arg_min)
    outcome.check('cd', report.certifies(1e-9))


def run_gap(config: RunConfig, run_dir: Path, outcome: CommandOutcome):
    model = build_model(config)
    n = _resolution(config)
    op = discretize(model, n, config.mapping)
    dec = eigen_lowest(op, max(config.k or 3, 2))
    result = spectral_gap(dec)
    refined = refined_gap(model, n, op.mapping)
    export_spectral_csv(dec, run_dir / 'spectrum.csv')
    outcome.add('model', model.describe())
    outcome.add('mapping', op.mapping.describe())
    outcome.add('lambda1', f'{result.lambda1:.6f}')
    outcome.add('lambda1_refined', f'{refined.lambda1:.10f}')
    outcome.add('eps', refined.lambda1 - result.reference_gap)
    outcome.add('near_degenerate', result.near_degenerate)
    outcome.check('lichnerowicz', refined.lambda1 - result.reference_gap >= -1e-6 * result.reference_gap)
    if config.times:
        rows = ultracontractivity_probe(dec, config.times)
        write_csv([row.get_dict() for row in rows], run_dir / 'ultracontractivity.csv',
                  ['t', 'sup_kernel_bound', 'envelope_bound', 'tail_bound', 'flagged', 'passed'])
        outcome.check('ultracontractivity', all(row.passed and not row.flagged for row in rows))


def run_deficit(config: RunConfig, run_dir: Path, outcome: CommandOutcome):
    model = build_model(config)
    n = _resolution(config)
    op = discretize(model, n, config.mapping)
    dim = model.dim_param
    dec = eigen_lowest(op, max(config.k or INEQUALITY_MODES + 1, 3))
    refined = refined_gap(model, n, op.mapping)
    report = eigen_deficit(model, dec, dim=dim, gap=refined.lambda1)
    write_csv([{'x': x, 'h': h} for x, h in zip(op.x, report.h)], run_dir / 'deficit.csv', ['x', 'h'])
    outcome.add('model', model.describe())
    for key in ('eps', 'regime', 'h_mean', 'deficit_l1', 'lh_l1', 'paper_rhs', 'deficit_bound', 'identity_l1',
                'eigen_identity_error'):
        outcome.add(key, getattr(report, key))
    outcome.check('deficit', report.status == CDLabAuditStatus.PASS)

    rows = []
    if math.isfinite(dim) and dim > 1 and dec.k > INEQUALITY_MODES:
        modes = dec.vectors[:, 1:INEQUALITY_MODES + 1]
        for index, rng in enumerate(seed_substreams(_seed(config), config.samples or DEFAULT_SAMPLES)):
            g = modes @ rng.standard_normal(INEQUALITY_MODES)
            audit = l1_spectral_inequality_audit(op, g, InequalityRegime.L1_POINCARE, N=dim)
            rows.append({'sample': index, **audit.get_dict()})
        outcome.add('l1_poincare_max_ratio', max(row['ratio'] for row in rows))
        outcome.check('l1_poincare', all(row['passed'] for row in rows))
        write_csv(rows, run_dir / 'l1_inequality.csv', ['sample', 'regime', 'lhs', 'rhs', 'ratio', 'constant',
                                                        'passed'])
    lambda1 = float(dec.eigenvalues[1])
    if config.p is not None and lambda1 >= 1.0 - 1e-6:
        g = dec.vectors[:, 1]
        audit = l1_spectral_inequality_audit(op, g, InequalityRegime.LOG_L1, p=config.p, lambda1=lambda1)
        outcome.add('log_l1_observed_constant', audit.constant)
        decay = hypercontractive_decay_check(dec, g, config.p, config.times or DEFAULT_TIMES)
        write_csv([row.get_dict() for row in decay.rows], run_dir / 'decay.csv', ['t', 'lp_norm', 'envelope', 'passed'])
        outcome.add('decay_c_p', decay.c_p)
        outcome.check('decay', decay.passed)
    if config.c is not None:
        upgrade = lp_upgrade_audit(op, op.x, config.c, lambda1=lambda1)
        outcome.add('lp_upgrade_lhs', upgrade.lhs)
        outcome.add('lp_upgrade_rhs', upgrade.rhs)
        outcome.check('lp_upgrade', upgrade.passed)


def run_stability(config: RunConfig, run_dir: Path, outcome: CommandOutcome):
    if not config.family:
        raise ValueError('stability requires --family')
    table = run_family(config.family, config.deltas, _resolution(config), config.N, config.psi)
    write_rate_table(table, run_dir)
    outcome.add('family', table.family)
    outcome.add('N', table.dim)
    for row in table.rows:
        outcome.add(f'row[{row.delta:g}]', f'eps={row.eps:.6e} w1={row.w1:.6e} thm_rhs={row.thm_rhs:.6e} '
                                           f'{"pass" if row.passed else "fail: " + row.reason}')
    outcome.check('rows', table.passed)
    law = config.law or family_law(table.family)
    try:
        fit = fit_rate(table, law)
    except ValueError as e:
        outcome.add('fit', str(e))
        return
    outcome.add('fit_law', fit.law)
    outcome.add('fit_exponent', fit.exponent)
    outcome.add('fit_constant', fit.constant)
    outcome.add('fit_residual', fit.residual)
    outcome.add('envelope_constant', fit.envelope_constant)


def run_stein_audit(config: RunConfig, run_dir: Path, outcome: CommandOutcome):
    N = -3.0 if config.N is None else config.N
    report = stein_bound_audit(N, config.samples or DEFAULT_SAMPLES, _seed(config), workers=cdlab_globals.WORKERS)
    write_csv([row.get_dict() for row in report.rows], run_dir / 'stein_audit.csv',
              ['sample', 'lipschitz', 'sup_g', 'sup_dg', 'residual', 'g_ratio', 'dg_ratio'])
    exact = cauchy_stein_solve(PiecewiseLinear([], [1.0]), N, np.linspace(-20.0, 20.0, 401))
    outcome.add('N', N)
    outcome.add('L_N', report.constants.L_N)
    outcome.add('K_N', report.constants.K_N)
    outcome.add('max_g_ratio', report.max_g_ratio)
    outcome.add('max_gprime_ratio', report.max_gprime_ratio)
    outcome.add('violations', report.violations)
    outcome.add('identity_source_error', float(np.abs(exact.g - 1.0 / N).max()))
    outcome.check('stein_bounds', report.status == CDLabAuditStatus.PASS)
    outcome.check('identity_source', exact.residual <= 1e-10)


def run_tail_audit(config: RunConfig, run_dir: Path, outcome: CommandOutcome):
    N = -3.0 if config.N is None else config.N
    report = tail_bound_audit(N)
    write_csv([report.get_dict()], run_dir / 'tail_audit.csv',
              ['dim', 'grid_size', 'left_tail', 'right_tail', 'weighted_half', 'weighted_tail', 'status'])
    for key in ('left_tail', 'right_tail', 'weighted_half', 'weighted_tail'):
        outcome.add(key, getattr(report, key))
    outcome.check('tails', report.status == CDLabAuditStatus.PASS)


def run_counterexample(config: RunConfig, run_dir: Path, outcome: CommandOutcome):
    radii = [config.r] if config.r is not None else COUNTEREXAMPLE_RADII
    records = [ou_counterexample(r) for r in radii]
    write_csv([record.get_dict() for record in records], run_dir / 'counterexample.csv',
              ['r', 'l1_f', 'l1_Lf', 'ratio', 'log_ratio'])
    for record in records:
        outcome.add(f'r[{record.r:g}]', f'l1_f={record.l1_f:.12e} l1_Lf={record.l1_Lf:.12e} ratio={record.ratio:.6f}')
    if len(records) > 1:
        ratios = [record.ratio for record in records]
        outcome.check('increasing', all(b > a for a, b in zip(ratios, ratios[1:])))
        if 2.0 in radii and 16.0 in radii:
            outcome.check('divergence', ratios[radii.index(16.0)] >= 1.5 * ratios[radii.index(2.0)])
        try:
            outcome.add('log_constant', fit_counterexample_constant(records))
        except ValueError as e:
            outcome.add('log_constant', str(e))


def run_constants(config: RunConfig, run_dir: Path, outcome: CommandOutcome):
    if config.N is None:
        raise ValueError('constants requires --N')
    constants = explicit_constants(config.N)
    (run_dir / 'constants.txt').write_text(constants.to_text(), encoding='utf-8')
    for line in constants.to_text().splitlines():
        outcome.lines.append(line)


def run_w1(config: RunConfig, run_dir: Path, outcome: CommandOutcome):
    model = build_model(config)
    n = _resolution(config)
    op = discretize(model, n, config.mapping)
    dim = model.dim_param
    result = spectral_gap(op, dim=dim)
    measure = pushforward(grid_measure(op), result.f)
    family = _target_family(dim)
    law = target_law(family, None if math.isinf(dim) else dim)
    rigid = target_measure(family, n, None if math.isinf(dim) else dim)
    save_measure_csv(measure, run_dir / 'pushforward.csv')
    outcome.add('model', model.describe())
    outcome.add('target', law.describe())
    outcome.add('w1_law', w1_distance(measure, law))
    outcome.add('w1_grid', w1_distance(measure, rigid))
    outcome.add('w1_quantile', quantile_w1(measure, rigid))
    if family == TargetFamily.BETA and measure.points[0] >= -1.0 and measure.points[-1] <= 1.0:
        outcome.add('beta_discrepancy', beta_discrepancy(measure, dim).value)


HANDLERS = {
    'model-info': run_model_info,
    'cd-check': run_cd_check,
    'gap': run_gap,
    'deficit': run_deficit,
    'stability': run_stability,
    'stein-audit': run_stein_audit,
    'tail-audit': run_tail_audit,
    'counterexample': run_counterexample,
    'constants': run_constants,
    'w1': run_w1,
}


def main(argv: list[str] | None = None) -> int:
    """
    Run one subcommand.

    Args:
        argv (list[str] | None): Arguments without the program name, sys.argv[1:] when None

    Returns:
        int: 0 on pass, 1 on audit failure, 2 on usage error
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_PASS if e.code == 0 else EXIT_USAGE

    try:
        config = build_config(args)
        seed = _seed(config)
        run_id = create_run_id(config.to_text(), seed)
        run_dir = Path(config.out or cdlab_globals.OUTPUT_DIR) / run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / 'config.txt').write_text(config.to_text(), encoding='utf-8')
        outcome = CommandOutcome()
        outcome.add('run_id', run_id)
        HANDLERS[config.command](config, run_dir, outcome)
    except ValueError as e:
        print(f'cdlab {args.command}: {e}', file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as e:
        logger.error(f'{args.command} failed: {e}')
        print(f'cdlab {args.command}: {e}', file=sys.stderr)
        return EXIT_FAIL

    outcome.add('status', 'pass' if outcome.passed else 'fail')
    summary = '\n'.join(outcome.lines) + '\n'
    (run_dir / 'summary.txt').write_text(summary, encoding='utf-8')
    sys.stdout.write(summary)
    logger.info(f'{config.command} finished with status {"pass" if outcome.passed else "fail"}, run {run_id}')
    return EXIT_PASS if outcome.passed else EXIT_FAIL


if __name__ == '__main__':
    sys.exit(main())
