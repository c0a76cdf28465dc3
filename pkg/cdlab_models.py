"""
CDLab Models Module

This module builds the one-dimensional weighted diffusions used throughout the laboratory
and evaluates them pointwise: the metric coefficient φ, the potential W, the reversible
density, the generator, the carré du champ and the curvature-dimension margin.

A model on an interval I carries the generator

    L f = φ f'' + (φ'/2 - φ W') f'

whose reversible measure has density m = exp(-W) φ^(-1/2). For the φ^(-β) family
(W = (β - 1/2) log φ) the density reduces to φ^(-β) and the dimension is N = 2(1 - β).

Key Components:
-------------
- DiffusionModel: Immutable model record (interval, φ, W, N, ρ, normalization)
- make_model(): Catalogue constructor (jacobi, cauchy, gaussian, scaled, phi_perturbed, gauss_quartic)
- cd_margin(): Pointwise curvature-dimension margin on a grid
- generator_apply(), carre_du_champ(): Nodewise L f and Γ(f)
- identity_moments(): Variance and Γ-mass of the identity function
- reference_gap(): Gap of the rigid model in dimension N

Coefficient catalogue:
-------------------
- QuadraticPhi: φ = c0 + c2 x² (Jacobi, scaled Jacobi, Cauchy, flat)
- BumpProfile: ψ = sin(πx) or (1 - x²)²
- PerturbedPhi: scale · φ · (1 + δψ)
- LogPhiPotential, QuadraticPotential, QuarticPotential

All coefficients carry hand-coded first and second derivatives.

Usage:
-----
    model = make_model('jacobi', N=3)
    report = cd_margin(model, rho=2, N=3, grid=np.linspace(-0.99, 0.99, 401))
    moments = identity_moments(model)

Dependencies:
-----------
- numpy: Vectorized coefficient evaluation
- scipy.integrate: Moments and normalization constants
- cdlab_result: MarginReport and MomentReport records

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""

import logging
import math

import numpy as np
from scipy import integrate

from cdlab_result import MarginReport, MomentReport

logger = logging.getLogger(__name__)


class CDLabModelKind:
    """
    Model catalogue identifiers.

    Model kinds:
        JACOBI: Beta model on (-1, 1), φ = 1 - x²
        CAUCHY: Generalized Cauchy model on ℝ, φ = 1 + x²
        GAUSSIAN: Ornstein-Uhlenbeck type model, φ = 1, W = κx²/2
        SCALED: Jacobi model on (-r, r) with the metric of the radius-r sphere
        PHI_PERTURBED: φ^(-β) model with φ multiplied by (1 + δψ)
        GAUSS_QUARTIC: φ = 1, W = x²/2 + δx⁴
    """
    JACOBI = 'jacobi'
    CAUCHY = 'cauchy'
    GAUSSIAN = 'gaussian'
    SCALED = 'scaled'
    PHI_PERTURBED = 'phi_perturbed'
    GAUSS_QUARTIC = 'gauss_quartic'

    ALL = (JACOBI, CAUCHY, GAUSSIAN, SCALED, PHI_PERTURBED, GAUSS_QUARTIC)


class BumpName:
    SIN = 'sin'
    BUMP = 'bump'

    ALL = (SIN, BUMP)


class QuadraticPhi:
    """φ(x) = c0 + c2 x²."""

    def __init__(self, c0: float, c2: float):
        self.c0 = float(c0)
        self.c2 = float(c2)

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        if order == 0:
            return self.c0 + self.c2 * x * x
        if order == 1:
            return 2.0 * self.c2 * x
        if order == 2:
            return np.full_like(x, 2.0 * self.c2)
        raise ValueError(f'Unsupported derivative order: {order}')


class BumpProfile:
    """Bump ψ used by phi_perturbed models: sin(πx) or (1 - x²)²."""

    def __init__(self, name: str):
        if name not in BumpName.ALL:
            logger.error(f'Unknown bump profile: {name}')
            raise ValueError(f'Unknown bump profile {name!r}, expected one of {BumpName.ALL}')
        self.name = name

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        if self.name == BumpName.SIN:
            if order == 0:
                return np.sin(math.pi * x)
            if order == 1:
                return math.pi * np.cos(math.pi * x)
            if order == 2:
                return -math.pi ** 2 * np.sin(math.pi * x)
        else:
            one_minus = 1.0 - x * x
            if order == 0:
                return one_minus * one_minus
            if order == 1:
                return -4.0 * x * one_minus
            if order == 2:
                return 12.0 * x * x - 4.0
        raise ValueError(f'Unsupported derivative order: {order}')


class PerturbedPhi:
    """scale · φ(x) · (1 + δψ(x)), derivatives by the product rule."""

    def __init__(self, base, delta: float, bump: BumpProfile, scale: float = 1.0):
        self.base = base
        self.delta = float(delta)
        self.bump = bump
        self.scale = float(scale)

    def factor(self, x, order: int = 0):
        if order == 0:
            return 1.0 + self.delta * self.bump(x, 0)
        return self.delta * self.bump(x, order)

    def __call__(self, x, order: int = 0):
        p0, p1, p2 = self.base(x, 0), self.base(x, 1), self.base(x, 2)
        u0, u1, u2 = self.factor(x, 0), self.factor(x, 1), self.factor(x, 2)
        if order == 0:
            value = p0 * u0
        elif order == 1:
            value = p1 * u0 + p0 * u1
        elif order == 2:
            value = p2 * u0 + 2.0 * p1 * u1 + p0 * u2
        else:
            raise ValueError(f'Unsupported derivative order: {order}')
        return self.scale * value


class LogPhiPotential:
    """W = coef · log φ."""

    def __init__(self, coef: float, phi):
        self.coef = float(coef)
        self.phi = phi

    def __call__(self, x, order: int = 0):
        p0 = self.phi(x, 0)
        if order == 0:
            return self.coef * np.log(p0)
        ratio = self.phi(x, 1) / p0
        if order == 1:
            return self.coef * ratio
        if order == 2:
            return self.coef * (self.phi(x, 2) / p0 - ratio * ratio)
        raise ValueError(f'Unsupported derivative order: {order}')


class QuadraticPotential:
    """W = κ x² / 2."""

    def __init__(self, kappa: float):
        self.kappa = float(kappa)

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        if order == 0:
            return 0.5 * self.kappa * x * x
        if order == 1:
            return self.kappa * x
        if order == 2:
            return np.full_like(x, self.kappa)
        raise ValueError(f'Unsupported derivative order: {order}')


class QuarticPotential:
    """W = x²/2 + δ x⁴."""

    def __init__(self, delta: float):
        self.delta = float(delta)

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        if order == 0:
            return 0.5 * x * x + self.delta * x ** 4
        if order == 1:
            return x + 4.0 * self.delta * x ** 3
        if order == 2:
            return 1.0 + 12.0 * self.delta * x * x
        raise ValueError(f'Unsupported derivative order: {order}')


class DiffusionModel:
    """
    A one-dimensional weighted diffusion.

    Instances are built by make_model() and never mutated afterwards; the
    normalization constant is computed once on first access.

    Attributes:
        kind (str): Catalogue identifier, see CDLabModelKind
        params (dict): Parameters the model was built from
        interval (tuple[float, float]): Open interval (a, b), endpoints may be infinite
        phi: Metric coefficient, callable as phi(x, order)
        potential: Potential W, callable as potential(x, order)
        dim_param (float): Dimension N, math.inf for the infinite-dimensional marker
        curvature (float): Curvature candidate ρ
        beta (float | None): Exponent of the φ^(-β) family, None outside it
        gap (float | None): Exact spectral gap of -L when known
    """

    def __init__(self, kind: str, params: dict, interval: tuple[float, float], phi, potential,
                 dim_param: float, curvature: float, beta: float | None = None,
                 gap: float | None = None, smooth_factor=None):
        self.kind = kind
        self.params = dict(params)
        self.interval = (float(interval[0]), float(interval[1]))
        self.phi = phi
        self.potential = potential
        self.dim_param = float(dim_param)
        self.curvature = float(curvature)
        self.beta = beta
        self.gap = gap
        # φ / ((x - a)(b - x)) on finite intervals of the φ^(-β) family
        self._smooth_factor = smooth_factor
        self._norm_const = None

    def __repr__(self) -> str:
        return f'DiffusionModel(kind={self.kind!r}, params={self.describe_params()})'

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.interval[0]) and math.isfinite(self.interval[1])

    @property
    def radius(self) -> float:
        return 0.5 * (self.interval[1] - self.interval[0])

    def describe_params(self) -> dict:
        """Parameters with nested base models replaced by their description."""
        described = {}
        for key, value in self.params.items():
            described[key] = value.describe() if isinstance(value, DiffusionModel) else value
        return described

    def describe(self) -> str:
        parts = ', '.join(f'{key}={value}' for key, value in self.describe_params().items())
        return f'{self.kind}({parts})'

    def density(self, x):
        """Unnormalized reversible density m = exp(-W) φ^(-1/2)."""
        x = np.asarray(x, dtype=float)
        return np.exp(-self.potential(x, 0)) / np.sqrt(self.phi(x, 0))

    def drift(self, x):
        """First-order coefficient φ'/2 - φW' of the generator."""
        return 0.5 * self.phi(x, 1) - self.phi(x, 0) * self.potential(x, 1)

    def integrate(self, fn) -> float:
        """
        Integrate fn against the unnormalized density.

        Finite intervals use the algebraic endpoint weight of the φ^(-β) family,
        ℝ-supported models are integrated in the variable s = asinh(x).
        """
        if self.is_finite:
            a, b = self.interval
            exponent = -self.beta

            def integrand(x):
                return float(fn(x)) * float(self._smooth_factor(x)) ** (-self.beta)

            value, _ = integrate.quad(integrand, a, b, weight='alg', wvar=(exponent, exponent),
                                      epsabs=1e-14, epsrel=1e-13, limit=400)
            return value

        def integrand_s(s):
            if abs(s) > 300.0:
                return 0.0
            x = math.sinh(s)
            return float(fn(x)) * float(self.density(x)) * math.cosh(s)

        left, _ = integrate.quad(integrand_s, -np.inf, 0.0, epsabs=1e-15, epsrel=1e-13, limit=400)
        right, _ = integrate.quad(integrand_s, 0.0, np.inf, epsabs=1e-15, epsrel=1e-13, limit=400)
        return left + right

    @property
    def norm_const(self) -> float:
        """Normalization Z with ∫ m / Z = 1."""
        if self._norm_const is None:
            self._norm_const = self.integrate(lambda x: 1.0)
            logger.debug(f'Normalization of {self.describe()}: {self._norm_const}')
        return self._norm_const

    def expectation(self, fn) -> float:
        """∫ fn dμ against the normalized reversible measure."""
        return self.integrate(fn) / self.norm_const


def reference_gap(dim: float) -> float:
    """
    Gap of the rigid model in dimension N.

    N > 1 under CD(N-1, N) gives N, N = ∞ under CD(1, ∞) gives 1, N < -1 under
    CD(1-N, N) gives -N.
    """
    if math.isinf(dim):
        return 1.0
    if dim > 1:
        return float(dim)
    if dim < -1:
        return float(-dim)
    raise ValueError(f'No rigid model for dimension {dim}')


def _require(condition: bool, message: str):
    if not condition:
        logger.error(message)
        raise ValueError(message)


def _beta_family(kind: str, params: dict, radius: float | None, N: float, phi, gap,
                 curvature: float, smooth_factor=None) -> DiffusionModel:
    beta = 1.0 - N / 2.0
    interval = (-radius, radius) if radius is not None else (-math.inf, math.inf)
    return DiffusionModel(kind=kind, params=params, interval=interval, phi=phi,
                          potential=LogPhiPotential(beta - 0.5, phi), dim_param=N,
                          curvature=curvature, beta=beta, gap=gap, smooth_factor=smooth_factor)


def make_model(kind: str, params: dict | None = None, **kwargs) -> DiffusionModel:
    """
    Build a model from the catalogue.

    Args:
        kind (str): One of CDLabModelKind.ALL
        params (dict | None): Parameter record, merged with keyword arguments.
            jacobi: N > 1. cauchy: N < -1. gaussian: kappa >= 1 (default 1).
            scaled: base (jacobi or scaled model), r in (0, 1].
            phi_perturbed: base (φ^(-β) model), delta, psi in {'sin', 'bump'}, scale > 0 (default 1).
            gauss_quartic: delta >= 0.

    Returns:
        DiffusionModel: The constructed model

    Raises:
        ValueError: If a parameter is out of its admissible range or φ loses positivity

    Example:
        >>> make_model('jacobi', N=3).beta
        -0.5
    """
    record = dict(params or {})
    record.update(kwargs)

    if kind == CDLabModelKind.JACOBI:
        N = float(record.get('N', math.nan))
        _require(math.isfinite(N) and N > 1, f'jacobi requires finite N > 1, got {N}')
        model = _beta_family(kind, {'N': N}, 1.0, N, QuadraticPhi(1.0, -1.0), gap=N,
                             curvature=N - 1.0, smooth_factor=lambda x: 1.0)

    elif kind == CDLabModelKind.SCALED:
        base = record.get('base')
        r = float(record.get('r', math.nan))
        _require(isinstance(base, DiffusionModel) and base.kind in (CDLabModelKind.JACOBI, CDLabModelKind.SCALED),
                 'scaled requires a jacobi or scaled base model')
        _require(0.0 < r <= 1.0, f'scaled requires r in (0, 1], got {r}')
        N = base.dim_param
        radius = base.radius * r
        model = _beta_family(kind, {'base': base, 'r': r}, radius, N,
                             QuadraticPhi(1.0, -1.0 / radius ** 2), gap=N / radius ** 2,
                             curvature=(N - 1.0) / radius ** 2,
                             smooth_factor=lambda x, rr=radius: 1.0 / rr ** 2)

    elif kind == CDLabModelKind.CAUCHY:
        N = float(record.get('N', math.nan))
        _require(math.isfinite(N) and N < -1, f'cauchy requires N < -1, got {N}')
        model = _beta_family(kind, {'N': N}, None, N, QuadraticPhi(1.0, 1.0), gap=-N,
                             curvature=1.0 - N)

    elif kind == CDLabModelKind.GAUSSIAN:
        kappa = float(record.get('kappa', 1.0))
        _require(kappa >= 1.0, f'gaussian requires kappa >= 1, got {kappa}')
        model = DiffusionModel(kind=kind, params={'kappa': kappa}, interval=(-math.inf, math.inf),
                               phi=QuadraticPhi(1.0, 0.0), potential=QuadraticPotential(kappa),
                               dim_param=math.inf, curvature=kappa, gap=kappa)

    elif kind == CDLabModelKind.GAUSS_QUARTIC:
        delta = float(record.get('delta', math.nan))
        _require(delta >= 0.0, f'gauss_quartic requires delta >= 0, got {delta}')
        model = DiffusionModel(kind=kind, params={'delta': delta}, interval=(-math.inf, math.inf),
                               phi=QuadraticPhi(1.0, 0.0), potential=QuarticPotential(delta),
                               dim_param=math.inf, curvature=1.0,
                               gap=1.0 if delta == 0.0 else None)

    elif kind == CDLabModelKind.PHI_PERTURBED:
        base = record.get('base')
        _require(isinstance(base, DiffusionModel) and base.beta is not None,
                 'phi_perturbed requires a model of the φ^(-β) family as base')
        delta = float(record.get('delta', math.nan))
        psi = str(record.get('psi', BumpName.BUMP))
        scale = float(record.get('scale', 1.0))
        _require(math.isfinite(delta), f'phi_perturbed requires a finite delta, got {delta}')
        _require(scale > 0.0, f'phi_perturbed requires scale > 0, got {scale}')
        bump = BumpProfile(psi)
        if psi == BumpName.SIN:
            _require(abs(delta) < 1.0, f'|delta| must be < 1 for the sin bump, got {delta}')
        elif base.is_finite and base.radius <= 1.0:
            _require(delta > -1.0, f'delta must be > -1 for the bump profile, got {delta}')
        else:
            _require(delta >= 0.0, f'delta must be >= 0 for the bump profile on this interval, got {delta}')
        phi = PerturbedPhi(base.phi, delta, bump, scale)
        smooth_factor = None
        if base.is_finite:
            base_radius = base.radius

            def smooth_factor(x, rr=base_radius, perturbed=phi):
                return perturbed.scale * perturbed.factor(x, 0) / rr ** 2

        model = _beta_family(kind, {'base': base, 'delta': delta, 'psi': psi, 'scale': scale},
                             base.radius if base.is_finite else None, base.dim_param, phi,
                             gap=base.gap * scale if delta == 0.0 else None,
                             curvature=base.curvature * scale, smooth_factor=smooth_factor)

    else:
        logger.error(f'Unknown model kind: {kind}')
        raise ValueError(f'Unknown model kind {kind!r}, expected one of {CDLabModelKind.ALL}')

    logger.info(f'Built model {model.describe()}')
    return model


def _interior_grid(model: DiffusionModel, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    a, b = model.interval
    if grid.size == 0 or np.any(grid <= a) or np.any(grid >= b):
        logger.error(f'Grid must lie strictly inside {model.interval}')
        raise ValueError(f'Grid must lie strictly inside {model.interval}')
    return grid


def cd_margin(model: DiffusionModel, rho: float, N: float, grid) -> MarginReport:
    """
    Pointwise margin of the one-dimensional curvature-dimension criterion.

    margin(x) = W'' + W'φ'/(2φ) - ρ/φ - W'²/(N - 1), the last term dropped for N = ∞.
    A nonnegative minimum certifies CD(ρ, N) on the grid.

    Args:
        model (DiffusionModel): Model to check
        rho (float): Curvature ρ
        N (float): Dimension, math.inf allowed, N != 1
        grid: Nodes strictly inside the model interval

    Returns:
        MarginReport: Per-node margins and their minimum
    """
    if N == 1:
        logger.error('cd_margin requires N != 1')
        raise ValueError('cd_margin requires N != 1')
    x = _interior_grid(model, grid)
    phi0, phi1 = model.phi(x, 0), model.phi(x, 1)
    w1, w2 = model.potential(x, 1), model.potential(x, 2)
    margin = w2 + w1 * phi1 / (2.0 * phi0) - rho / phi0
    if not math.isinf(N):
        margin = margin - w1 * w1 / (N - 1.0)
    index = int(np.argmin(margin))
    report = MarginReport(grid=x, margin=margin, min_margin=float(margin[index]), arg_min=float(x[index]),
                          rho=float(rho), dim=float(N))
    logger.info(f'CD({rho}, {N}) margin of {model.describe()}: min {report.min_margin:.3e} at x={report.arg_min:.4f}')
    return report


def _grid_derivatives(x: np.ndarray, f: np.ndarray, df, d2f):
    if df is None:
        df = np.gradient(f, x, edge_order=2)
    if d2f is None:
        d2f = np.gradient(np.asarray(df, dtype=float), x, edge_order=2)
    return np.asarray(df, dtype=float), np.asarray(d2f, dtype=float)


def generator_apply(model: DiffusionModel, x, f, df=None, d2f=None) -> np.ndarray:
    """
    Evaluate L f = φ f'' + (φ'/2 - φW') f' nodewise.

    Derivatives default to second-order finite differences on the grid.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    df, d2f = _grid_derivatives(x, f, df, d2f)
    return model.phi(x, 0) * d2f + model.drift(x) * df


def carre_du_champ(model: DiffusionModel, x, f, df=None) -> np.ndarray:
    """Γ(f) = φ (f')², derivative by finite differences when not supplied."""
    x = np.asarray(x, dtype=float)
    if df is None:
        df = np.gradient(np.asarray(f, dtype=float), x, edge_order=2)
    df = np.asarray(df, dtype=float)
    return model.phi(x, 0) * df * df


def identity_moments(model: DiffusionModel) -> MomentReport:
    """
    Variance of the identity and ∫Γ(id) dμ by quadrature against the normalized density.

    Raises:
        ValueError: If the second moment diverges
    """
    if model.beta is not None and not model.is_finite and model.dim_param >= -1:
        logger.error(f'Second moment diverges for {model.describe()}')
        raise ValueError(f'Second moment diverges for {model.describe()}')
    mean = model.expectation(lambda x: x)
    second = model.expectation(lambda x: x * x)
    gamma_mass = model.expectation(lambda x: float(model.phi(x, 0)))
    report = MomentReport(mean=mean, variance=second - mean * mean, gamma_mass=gamma_mass,
                          norm_const=model.norm_const)
    logger.info(f'Moments of {model.describe()}: variance={report.variance:.12g}, gamma_mass={report.gamma_mass:.12g}')
    return report
