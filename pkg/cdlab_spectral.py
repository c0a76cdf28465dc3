"""
CDLab Spectral Module

This module discretizes a DiffusionModel as a self-adjoint operator and computes its
lowest eigenpairs, the spectral gap with the normalized eigenfunction, the heat
semigroup by spectral calculus and the heat kernel sup norm.

Discretization:
-------------
Cell-centered finite volumes in a mapped coordinate s with x = X(s). With the cell
weight w(s) = m(X(s)) X'(s) and the interface conductance c(s) = φ m / X' the
operator reads

    (L f)_i = [c_{i+1/2} (f_{i+1} - f_i) - c_{i-1/2} (f_i - f_{i-1})] / (Δ² w_i)

with zero flux through both ends. The similarity transform by √w makes -L a symmetric
tridiagonal matrix. Weights and conductances are evaluated in log space so extreme
tails never underflow into a division by zero.

Key Components:
-------------
- GridMapping: direct, arcsine, tan_compactify, asinh(S), truncate(R)
- DiscreteOperator: Grid, cell probabilities, couplings and the symmetric tridiagonal form
- SpectralDecomposition: Lowest eigenpairs, L²(μ)-orthonormal, with residuals
- discretize(), eigen_lowest(), spectral_gap(), refined_gap()
- semigroup_apply(), ultracontractivity_probe(), export_spectral_csv()

Usage:
-----
    op = discretize(make_model('jacobi', N=3), 2000)
    dec = eigen_lowest(op, 3)
    gap = spectral_gap(dec)

Dependencies:
-----------
- numpy: Grids and vector algebra
- scipy.linalg: eigh_tridiagonal for the symmetric tridiagonal eigenproblem
- scipy.optimize: brentq for truncation radii
- scipy.special: logsumexp for weight normalization
- cdlab_models, cdlab_result, cdlab_utils

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""

import logging
import math
import re
from pathlib import Path

import numpy as np
from scipy import linalg, optimize, special

from cdlab_models import DiffusionModel, reference_gap
from cdlab_result import GapResult, RefinedGapResult, SemigroupResult, UltracontractivityRow
from cdlab_utils import derivative_uniform, write_csv

logger = logging.getLogger(__name__)

MIN_NODES = 16
DEGENERACY_WINDOW = 1e-8
RESIDUAL_TOLERANCE = 1e-10
TRUNCATION_POTENTIAL = 50.0
TAIL_LOG_MASS = 32.3


class MappingKind:
    DIRECT = 'direct'
    ARCSINE = 'arcsine'
    TAN_COMPACTIFY = 'tan_compactify'
    ASINH = 'asinh'
    TRUNCATE = 'truncate'

    ALL = (DIRECT, ARCSINE, TAN_COMPACTIFY, ASINH, TRUNCATE)
    FINITE = (DIRECT, ARCSINE)


_MAPPING_PATTERN = re.compile(r'^\s*([a-z_]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$')


class GridMapping:
    """
    Change of variable x = X(s) from a bounded computational interval.

    Attributes:
        kind (str): One of MappingKind.ALL
        param (float | None): R for truncate, S for asinh
    """

    def __init__(self, kind: str, param: float | None = None):
        if kind not in MappingKind.ALL:
            logger.error(f'Unknown mapping: {kind}')
            raise ValueError(f'Unknown mapping {kind!r}, expected one of {MappingKind.ALL}')
        if param is not None and not param > 0:
            logger.error(f'Mapping parameter must be positive, got {param}')
            raise ValueError(f'Mapping parameter must be positive, got {param}')
        self.kind = kind
        self.param = None if param is None else float(param)

    @staticmethod
    def parse(text: str) -> 'GridMapping':
        """
        Parse 'direct', 'arcsine', 'tan_compactify', 'asinh(17)' or 'truncate(10)'.

        Raises:
            ValueError: If the text is not a known mapping
        """
        match = _MAPPING_PATTERN.match(text or '')
        if not match:
            logger.error(f'Invalid mapping: {text!r}')
            raise ValueError(f'Invalid mapping: {text!r}')
        kind, raw = match.group(1), match.group(2)
        try:
            param = float(raw) if raw else None
        except ValueError:
            logger.error(f'Invalid mapping parameter: {text!r}')
            raise ValueError(f'Invalid mapping parameter: {text!r}')
        return GridMapping(kind, param)

    def describe(self) -> str:
        return self.kind if self.param is None else f'{self.kind}({self.param:g})'

    def __repr__(self) -> str:
        return f'GridMapping({self.describe()!r})'

    def check(self, model: DiffusionModel):
        if model.is_finite:
            if self.kind not in MappingKind.FINITE:
                raise ValueError(f'Mapping {self.kind} needs an unbounded interval, model is on {model.interval}')
            if self.kind == MappingKind.ARCSINE and abs(model.interval[0] + model.interval[1]) > 1e-15:
                raise ValueError('arcsine mapping needs a symmetric interval')
        elif self.kind in MappingKind.FINITE:
            raise ValueError(f'Mapping {self.kind} needs a bounded interval, model is on {model.interval}')

    def span(self, model: DiffusionModel) -> tuple[float, float]:
        if self.kind == MappingKind.DIRECT:
            return model.interval
        if self.kind == MappingKind.ARCSINE or self.kind == MappingKind.TAN_COMPACTIFY:
            return -0.5 * math.pi, 0.5 * math.pi
        extent = self.param if self.param is not None else _default_extent(self.kind, model)
        return -extent, extent

    def to_x(self, s: np.ndarray, model: DiffusionModel) -> np.ndarray:
        if self.kind == MappingKind.ARCSINE:
            return model.radius * np.sin(s)
        if self.kind == MappingKind.TAN_COMPACTIFY:
            return np.tan(s)
        if self.kind == MappingKind.ASINH:
            return np.sinh(s)
        return np.array(s, dtype=float)

    def log_jacobian(self, s: np.ndarray, model: DiffusionModel) -> np.ndarray:
        """log X'(s)."""
        if self.kind == MappingKind.ARCSINE:
            return math.log(model.radius) + np.log(np.cos(s))
        if self.kind == MappingKind.TAN_COMPACTIFY:
            return -2.0 * np.log(np.cos(s))
        if self.kind == MappingKind.ASINH:
            magnitude = np.abs(s)
            return magnitude + np.log1p(np.exp(-2.0 * magnitude)) - math.log(2.0)
        return np.zeros_like(s)


def _default_extent(kind: str, model: DiffusionModel) -> float:
    if kind == MappingKind.ASINH:
        # tail mass e^{-(|N|-1) S} below 1e-14
        if model.beta is None or model.dim_param >= -1:
            return 8.0
        return max(8.0, TAIL_LOG_MASS / (abs(model.dim_param) - 1.0) + 1.0)
    # truncate: potential rise of TRUNCATION_POTENTIAL from the origin, capped at 10
    base = float(model.potential(0.0, 0))

    def excess(x):
        return float(model.potential(x, 0)) - base - TRUNCATION_POTENTIAL

    if excess(10.0) <= 0.0:
        return 10.0
    return optimize.brentq(excess, 1e-6, 10.0, xtol=1e-12)


def default_mapping(model: DiffusionModel) -> GridMapping:
    """arcsine on bounded intervals, asinh for heavy tails, truncate otherwise."""
    if model.is_finite:
        return GridMapping(MappingKind.ARCSINE)
    if model.beta is not None:
        return GridMapping(MappingKind.ASINH, _default_extent(MappingKind.ASINH, model))
    return GridMapping(MappingKind.TRUNCATE, _default_extent(MappingKind.TRUNCATE, model))


def _log_density(model: DiffusionModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    log_phi = np.log(model.phi(x, 0))
    return -model.potential(x, 0) - 0.5 * log_phi, log_phi


class DiscreteOperator:
    """
    Finite-volume discretization of a model generator.

    Attributes:
        model (DiffusionModel): Discretized model
        mapping (GridMapping): Change of variable
        n (int): Cell count
        step (float): Cell width Δ in s
        s (np.ndarray): Cell centers in s
        x (np.ndarray): Cell centers in x
        log_jacobian (np.ndarray): log X'(s_i)
        weights (np.ndarray): Cell probabilities p_i, summing to 1
        up (np.ndarray): c_{i+1/2} / (Δ² w_i), i = 0..n-2
        down (np.ndarray): c_{i-1/2} / (Δ² w_i), i = 1..n-1
        diag (np.ndarray): Diagonal of the symmetric form of -L
        offdiag (np.ndarray): Off-diagonal of the symmetric form of -L
    """

    def __init__(self, model: DiffusionModel, mapping: GridMapping, n: int):
        self.model = model
        self.mapping = mapping
        self.n = n
        s0, s1 = mapping.span(model)
        self.step = (s1 - s0) / n
        self.s = s0 + (np.arange(n) + 0.5) * self.step
        faces = s0 + np.arange(1, n) * self.step
        self.x = mapping.to_x(self.s, model)
        x_faces = mapping.to_x(faces, model)
        self.log_jacobian = mapping.log_jacobian(self.s, model)

        log_m, _ = _log_density(model, self.x)
        log_w = log_m + self.log_jacobian
        log_m_faces, log_phi_faces = _log_density(model, x_faces)
        log_c = log_m_faces + log_phi_faces - mapping.log_jacobian(faces, model)
        if not (np.all(np.isfinite(log_w)) and np.all(np.isfinite(log_c))):
            logger.error(f'Density of {model.describe()} is not finite on the {mapping.describe()} grid')
            raise ValueError(f'Density of {model.describe()} is not finite on the {mapping.describe()} grid')

        log_total = special.logsumexp(log_w) + math.log(self.step)
        if not math.isfinite(log_total):
            raise ValueError(f'Density of {model.describe()} is not integrable on the chosen domain')
        self.weights = np.exp(log_w + math.log(self.step) - log_total)
        self._log_w = log_w
        self._log_c = log_c
        self._log_total = log_total
        scale = -2.0 * math.log(self.step)
        self.up = np.exp(log_c - log_w[:-1] + scale)
        self.down = np.exp(log_c - log_w[1:] + scale)
        self.diag = np.zeros(n)
        self.diag[:-1] += self.up
        self.diag[1:] += self.down
        self.offdiag = -np.sqrt(self.up * self.down)

    def __repr__(self) -> str:
        return f'DiscreteOperator({self.model.describe()}, n={self.n}, mapping={self.mapping.describe()})'

    @property
    def matrix_norm(self) -> float:
        bound = np.abs(self.diag).copy()
        bound[:-1] += np.abs(self.offdiag)
        bound[1:] += np.abs(self.offdiag)
        return float(bound.max())

    def apply_generator(self, f: np.ndarray) -> np.ndarray:
        """L_h f on the cell values f (the generator itself, not -L)."""
        f = np.asarray(f, dtype=float)
        flux = np.diff(f)
        result = np.zeros_like(f)
        result[:-1] += self.up * flux
        result[1:] -= self.down * flux
        return result

    def symmetric_apply(self, u: np.ndarray) -> np.ndarray:
        """Product of the symmetric tridiagonal form of -L with u (columns allowed)."""
        u = np.asarray(u, dtype=float)
        off = self.offdiag.reshape((-1,) + (1,) * (u.ndim - 1))
        diag = self.diag.reshape((-1,) + (1,) * (u.ndim - 1))
        result = diag * u
        result[:-1] += off * u[1:]
        result[1:] += off * u[:-1]
        return result

    def dirichlet_form(self, f: np.ndarray) -> float:
        """Σ c_{i+1/2} (f_{i+1} - f_i)² / Δ normalized by the total mass, the discrete ∫Γ(f)dμ."""
        flux = np.diff(np.asarray(f, dtype=float))
        conductance = np.exp(self._log_c - self._log_total - math.log(self.step))
        return float(np.sum(conductance * flux * flux))

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def derivative(self, f: np.ndarray) -> np.ndarray:
        """df/dx at the cell centers, fourth order in s."""
        return derivative_uniform(f, self.step) / np.exp(self.log_jacobian)

    def gamma(self, f: np.ndarray) -> np.ndarray:
        """Γ(f) = φ (f')² at the cell centers."""
        derivative = self.derivative(f)
        return self.model.phi(self.x, 0) * derivative * derivative


def discretize(model: DiffusionModel, n: int, mapping: GridMapping | str | None = None) -> DiscreteOperator:
    """
    Discretize a model as a symmetric finite-volume operator.

    Args:
        model (DiffusionModel): Model to discretize
        n (int): Cell count, at least 16
        mapping (GridMapping | str | None): Change of variable, model default when None

    Returns:
        DiscreteOperator: The discretization

    Raises:
        ValueError: If n is too small, the mapping does not fit the interval or
            the density is not integrable on the mapped domain
    """
    if n < MIN_NODES:
        logger.error(f'discretize requires n >= {MIN_NODES}, got {n}')
        raise ValueError(f'discretize requires n >= {MIN_NODES}, got {n}')
    if mapping is None:
        mapping = default_mapping(model)
    elif isinstance(mapping, str):
        mapping = GridMapping.parse(mapping)
    try:
        mapping.check(model)
    except ValueError as e:
        logger.error(str(e))
        raise
    if model.is_finite and model.beta is not None and model.beta >= 1.0:
        logger.error(f'Density of {model.describe()} is not integrable')
        raise ValueError(f'Density of {model.describe()} is not integrable')
    op = DiscreteOperator(model, mapping, int(n))
    logger.info(f'Discretized {model.describe()} with n={n}, mapping={mapping.describe()}')
    return op


class SpectralDecomposition:
    """
    Lowest eigenpairs of -L.

    Attributes:
        op (DiscreteOperator): Source operator
        eigenvalues (np.ndarray): Ascending eigenvalues λ_0 ≤ ... ≤ λ_{k-1}
        vectors (np.ndarray): n × k eigenvectors, orthonormal in L²(μ_h)
        residuals (np.ndarray): ‖A u - λ u‖ of the symmetric form per pair
    """

    def __init__(self, op: DiscreteOperator, eigenvalues: np.ndarray, vectors: np.ndarray, residuals: np.ndarray):
        self.op = op
        self.eigenvalues = eigenvalues
        self.vectors = vectors
        self.residuals = residuals

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        return self.vectors.T @ (self.op.weights * np.asarray(f, dtype=float))

    def gram(self) -> np.ndarray:
        return self.vectors.T @ (self.op.weights[:, None] * self.vectors)


def _fix_signs(op: DiscreteOperator, vectors: np.ndarray):
    moments = vectors.T @ (op.weights * op.x)
    for j in range(vectors.shape[1]):
        if abs(moments[j]) > 1e-10:
            sign = np.sign(moments[j])
        else:
            sign = np.sign(vectors[-1, j]) or 1.0
        vectors[:, j] *= sign


def eigen_lowest(op: DiscreteOperator, k: int) -> SpectralDecomposition:
    """
    Compute the k lowest eigenpairs of -L.

    Eigenvectors are returned as grid functions orthonormal in L²(μ_h), with
    signs fixed so ∫x v dμ ≥ 0 (right end value for symmetric vectors).

    Raises:
        ValueError: If k is outside [1, n]
        RuntimeError: If the solver fails or a residual exceeds the tolerance
    """
    if not 1 <= k <= op.n:
        logger.error(f'eigen_lowest requires 1 <= k <= {op.n}, got {k}')
        raise ValueError(f'eigen_lowest requires 1 <= k <= {op.n}, got {k}')
    try:
        eigenvalues, u = linalg.eigh_tridiagonal(op.diag, op.offdiag, select='i', select_range=(0, k - 1))
    except (linalg.LinAlgError, ValueError) as e:
        logger.error(f'Tridiagonal eigensolver failed for {op}: {e}')
        raise RuntimeError(f'Tridiagonal eigensolver failed for {op}: {e}')
    residuals = np.linalg.norm(op.symmetric_apply(u) - u * eigenvalues, axis=0)
    worst = float(residuals.max()) / max(op.matrix_norm, 1.0)
    if worst > RESIDUAL_TOLERANCE:
        logger.error(f'Eigen residual {worst:.3e} above tolerance for {op}')
        raise RuntimeError(f'Eigen residual {worst:.3e} above tolerance {RESIDUAL_TOLERANCE:g} for {op}')
    vectors = u / np.sqrt(op.weights)[:, None]
    _fix_signs(op, vectors)
    logger.info(f'Lowest eigenvalues of {op}: {np.array2string(eigenvalues[:4], precision=8)}')
    return SpectralDecomposition(op, eigenvalues, vectors, residuals)


def gamma_target(dim: float) -> float:
    """Normalization of ∫Γ(f)dμ: N/(N+1) for finite N, 1 for N = ∞."""
    return 1.0 if math.isinf(dim) else dim / (dim + 1.0)


def spectral_gap(source: SpectralDecomposition | DiscreteOperator, dim: float | None = None,
                 gap: float | None = None) -> GapResult:
    """
    Spectral gap and normalized eigenfunction.

    Args:
        source: Decomposition with at least 2 pairs, or an operator (3 pairs are computed)
        dim (float | None): Target dimension for the normalization, model dimension when None
        gap (float | None): Eigenvalue to report instead of the computed λ₁, used by refined_gap

    Returns:
        GapResult: λ₁, the eigenfunction with ∫Γ(f)dμ = N/(N+1) (or 1), and ε
    """
    dec = eigen_lowest(source, 3) if isinstance(source, DiscreteOperator) else source
    if dec.k < 2:
        logger.error('spectral_gap needs at least two eigenpairs')
        raise ValueError('spectral_gap needs at least two eigenpairs')
    op = dec.op
    dim = op.model.dim_param if dim is None else float(dim)
    lambda1 = float(dec.eigenvalues[1])
    lambda2 = float(dec.eigenvalues[2]) if dec.k > 2 else None
    near_degenerate = lambda2 is not None and abs(lambda2 - lambda1) < DEGENERACY_WINDOW
    if near_degenerate:
        logger.warning(f'Near-degenerate gap for {op}: λ₁={lambda1}, λ₂={lambda2}')
    target = gamma_target(dim)
    vector = dec.vectors[:, 1]
    f = vector * math.sqrt(target / op.dirichlet_form(vector))
    reported = lambda1 if gap is None else float(gap)
    reference = reference_gap(dim)
    result = GapResult(lambda1=reported, lambda2=lambda2, near_degenerate=near_degenerate, f=f,
                       gamma_target=target, reference_gap=reference, eps=reported - reference,
                       residual=float(dec.residuals[1]))
    logger.info(f'Spectral gap of {op}: λ₁={reported:.10g}, ε={result.eps:.4e}')
    return result


def refined_gap(model: DiffusionModel, n: int, mapping: GridMapping | str | None = None) -> RefinedGapResult:
    """
    Richardson extrapolation of λ₁ over resolutions n and n/2.

    The discretization is second order, so λ ≈ λ_n + (λ_n - λ_{n/2})/3.
    """
    fine = eigen_lowest(discretize(model, n, mapping), 2).eigenvalues[1]
    coarse = eigen_lowest(discretize(model, n // 2, mapping), 2).eigenvalues[1]
    extrapolated = fine + (fine - coarse) / 3.0
    logger.debug(f'Refined gap of {model.describe()}: {coarse} -> {fine} -> {extrapolated}')
    return RefinedGapResult(lambda1=float(extrapolated), lambda1_fine=float(fine),
                            lambda1_coarse=float(coarse), n=n)


def semigroup_apply(dec: SpectralDecomposition, t: float, f: np.ndarray) -> SemigroupResult:
    """
    P_t f by spectral calculus over the available modes.

    The part of f outside the computed modes is dropped from the values and
    reported as the error bound e^{-λ_{k-1} t}‖remainder‖₂.
    """
    if t < 0:
        logger.error(f'semigroup_apply requires t >= 0, got {t}')
        raise ValueError(f'semigroup_apply requires t >= 0, got {t}')
    f = np.asarray(f, dtype=float)
    coefficients = dec.coefficients(f)
    remainder = f - dec.vectors @ coefficients
    remainder_norm = math.sqrt(dec.op.integrate(remainder * remainder))
    damped = coefficients * np.exp(-dec.eigenvalues * t)
    values = dec.vectors @ damped
    error_bound = math.exp(-dec.eigenvalues[-1] * t) * remainder_norm
    return SemigroupResult(t=float(t), values=values, coefficients=coefficients,
                           remainder_norm=remainder_norm, error_bound=error_bound)


def ultracontractivity_probe(dec: SpectralDecomposition, times: list[float],
                             constant: float | None = None) -> list[UltracontractivityRow]:
    """
    Sup norm of the heat kernel against C t^{-(N+1)/2}.

    The kernel Σ e^{-λt} v(x) v(y) is positive semidefinite, so its sup over pairs is
    attained on the diagonal. A row is flagged when the truncation tail
    k e^{-λ_{k-1} t} max v_{k-1}² exceeds 1% of the computed sup.

    Args:
        dec (SpectralDecomposition): Decomposition of a jacobi-type model with N > 1
        times (list[float]): Times in (0, 1]
        constant (float | None): Envelope constant, (2 + 2N/(N-1)²)^((N+1)/2) when None
    """
    dim = dec.op.model.dim_param
    if not (math.isfinite(dim) and dim > 1):
        logger.error(f'ultracontractivity_probe requires a model with finite N > 1, got {dim}')
        raise ValueError(f'ultracontractivity_probe requires a model with finite N > 1, got {dim}')
    if constant is None:
        constant = (2.0 + 2.0 * dim / (dim - 1.0) ** 2) ** ((dim + 1.0) / 2.0)
    squares = dec.vectors * dec.vectors
    last_peak = float(squares[:, -1].max())
    rows = []
    for t in times:
        if not 0.0 < t:
            raise ValueError(f'Times must be positive, got {t}')
        diagonal = squares @ np.exp(-dec.eigenvalues * t)
        sup_kernel = float(diagonal.max())
        tail = dec.k * math.exp(-dec.eigenvalues[-1] * t) * last_peak
        envelope = constant * t ** (-(dim + 1.0) / 2.0)
        flagged = tail > 0.01 * sup_kernel
        if flagged:
            logger.warning(f'Kernel truncation tail {tail:.3e} above 1% at t={t}')
        rows.append(UltracontractivityRow(t=float(t), sup_kernel_bound=sup_kernel, envelope_bound=envelope,
                                          tail_bound=tail, flagged=flagged, passed=sup_kernel <= envelope))
    return rows


def export_spectral_csv(dec: SpectralDecomposition, path: str | Path) -> Path:
    """Write grid, cell probabilities and eigenvector columns v0..v{k-1}."""
    columns = ['x', 'weight'] + [f'v{j}' for j in range(dec.k)]
    rows = []
    for i in range(dec.op.n):
        row = {'x': float(dec.op.x[i]), 'weight': float(dec.op.weights[i])}
        row.update({f'v{j}': float(dec.vectors[i, j]) for j in range(dec.k)})
        rows.append(row)
    return write_csv(rows, path, columns)
