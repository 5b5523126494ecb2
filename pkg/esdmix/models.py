from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from esdmix.config import (
    GAMMA_GUARD,
    HERMITIAN_TOL,
    MIN_DIMENSION,
    NEGATIVE_EIGENVALUE_TOL,
    WEIGHT_SUM_TOL,
)
from esdmix.exceptions import InvalidProblemError, NumericError
from esdmix.linalg import hermitian_eigenvalues

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PopulationMixture:
    """K population covariances sampled in proportions alpha at aspect ratio gamma"""
    populations: np.ndarray  # K x M x M
    weights: np.ndarray  # alpha_k
    gamma: float
    diagonal_flag: bool = field(init=False)
    population_eigenvalues: np.ndarray = field(init=False, repr=False)
    atom_values: Optional[np.ndarray] = field(init=False, repr=False)
    atom_weights: Optional[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        populations = self.populations
        if isinstance(populations, np.ndarray) and populations.ndim == 2:
            populations = populations[np.newaxis]
        matrices = [np.asarray(p) for p in populations]
        if not matrices:
            raise InvalidProblemError("At least one population covariance is required")
        shapes = {m.shape for m in matrices}
        if len(shapes) != 1:
            raise InvalidProblemError(f"All populations must share one dimension, got shapes {sorted(shapes)}")
        shape = shapes.pop()
        if len(shape) != 2 or shape[0] != shape[1] or shape[0] == 0:
            raise InvalidProblemError(f"Population covariances must be square, got shape {shape}")

        dtype = complex if any(np.iscomplexobj(m) for m in matrices) else float
        populations = np.stack(matrices).astype(dtype)
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        gamma = float(self.gamma)

        if weights.shape != (len(matrices),):
            raise InvalidProblemError(f"Expected {len(matrices)} weights, got {weights.shape[0]}")
        if np.any(weights <= 0):
            raise InvalidProblemError("All mixture weights must be positive")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidProblemError(f"Mixture weights must sum to 1, got {weights.sum():.15g}")
        if not gamma > 0:
            raise InvalidProblemError(f"Aspect ratio must be positive, got {gamma}")
        if abs(gamma - 1.0) < GAMMA_GUARD:
            raise InvalidProblemError(f"Aspect ratio {gamma} is within {GAMMA_GUARD} of 1; use constrain_gamma")

        eigenvalues = []
        for k, matrix in enumerate(populations):
            if not np.allclose(matrix, matrix.conj().T, rtol=0.0, atol=HERMITIAN_TOL):
                raise InvalidProblemError(f"Population {k} is not Hermitian")
            try:
                values = hermitian_eigenvalues(matrix)
            except NumericError as e:
                raise NumericError(f"Eigendecomposition of population {k} failed: {str(e)}", population=k) from e
            if values[0] < -NEGATIVE_EIGENVALUE_TOL:
                raise InvalidProblemError(f"Population {k} has negative eigenvalue {values[0]:.3g}")
            eigenvalues.append(_clamp_round_off(values))
        eigenvalues = np.stack(eigenvalues)

        off_diagonal = populations - np.einsum("kii->ki", populations)[:, :, np.newaxis] * np.eye(shape[0])
        diagonal_flag = not np.any(off_diagonal)

        atom_values, atom_weights = None, None
        if diagonal_flag:
            # Distinct diagonal patterns across populations with their multiplicities
            diagonals = np.einsum("kii->ki", populations).real
            patterns, counts = np.unique(diagonals.T, axis=0, return_counts=True)
            atom_values = patterns.T.copy()
            atom_weights = counts / shape[0]
            atom_values.setflags(write=False)
            atom_weights.setflags(write=False)

        for array in (populations, weights, eigenvalues):
            array.setflags(write=False)
        object.__setattr__(self, "populations", populations)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "diagonal_flag", diagonal_flag)
        object.__setattr__(self, "population_eigenvalues", eigenvalues)
        object.__setattr__(self, "atom_values", atom_values)
        object.__setattr__(self, "atom_weights", atom_weights)

    @property
    def dimension(self) -> int:
        return self.populations.shape[1]

    @property
    def num_populations(self) -> int:
        return self.populations.shape[0]


class TestProblem(BaseModel):
    """Built-in test problem generator settings"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["mp", "two_delta", "comb", "diag", "corr"]
    gamma: float = Field(gt=0)
    lambdas: Optional[List[float]] = None
    weights: Optional[List[float]] = None
    populations: int = Field(default=1, ge=1)
    rho: float = Field(default=0.2, ge=0, lt=1)
    exponent: float = Field(default=0.25, gt=0)
    dimension: Optional[int] = Field(default=None, ge=1)
    min_dimension: Optional[int] = Field(default=None, ge=1)
    comb_count: int = Field(default=100, ge=1)
    comb_range: Tuple[float, float] = (0.1, 10.0)

    @model_validator(mode="after")
    def _check_spectrum(self) -> "TestProblem":
        if self.kind == "two_delta":
            if self.lambdas is None or len(self.lambdas) != 2:
                raise ValueError("two_delta needs exactly two 'lambdas'")
            if self.weights is None or len(self.weights) != 2:
                raise ValueError("two_delta needs exactly two 'weights'")
        if self.lambdas is not None and any(v <= 0 for v in self.lambdas):
            raise ValueError("'lambdas' must be positive")
        if self.weights is not None:
            if any(w <= 0 for w in self.weights):
                raise ValueError("'weights' must be positive")
            if abs(sum(self.weights) - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError("'weights' must sum to 1")
            if self.lambdas is not None and len(self.lambdas) != len(self.weights):
                raise ValueError("'lambdas' and 'weights' must have the same length")
        lo, hi = self.comb_range
        if not 0 < lo < hi:
            raise ValueError("'comb_range' must satisfy 0 < lo < hi")
        if self.kind in ("mp", "two_delta", "comb") and self.populations != 1:
            raise ValueError(f"'{self.kind}' problems have a single population")
        return self


class CovarianceFile(BaseModel):
    """Dense covariance stored as a real CSV plus an optional imaginary CSV"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    real: str
    imag: Optional[str] = None


class CovarianceSource(BaseModel):
    """Explicit population covariances loaded from side files"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    files: List[CovarianceFile] = Field(min_length=1)
    weights: List[float]
    gamma: float = Field(gt=0)


def _clamp_round_off(values: np.ndarray) -> np.ndarray:
    return np.where((values < 0) & (values >= -NEGATIVE_EIGENVALUE_TOL), 0.0, values)


def constrain_gamma(gamma: float) -> float:
    """Keep the aspect ratio at least GAMMA_GUARD away from 1"""
    if abs(gamma - 1.0) >= GAMMA_GUARD:
        return gamma
    guarded = 1.0 + GAMMA_GUARD if gamma > 1.0 else 1.0 - GAMMA_GUARD
    logger.warning(f"Aspect ratio {gamma} moved to {guarded} to avoid the singularity at x=0")
    return guarded


def average_covariance(mixture: PopulationMixture) -> np.ndarray:
    """Weighted average covariance sum_k alpha_k Lambda_k"""
    return np.tensordot(mixture.weights, mixture.populations, axes=1)


def eigenvalue_pool(mixture: PopulationMixture) -> np.ndarray:
    """
    Pool the eigenvalues of every population and of the average covariance

    Args:
        mixture (PopulationMixture): Problem definition

    Returns:
        np.ndarray: Ascending list of M(K+1) eigenvalues, round-off negatives set to 0
    """
    try:
        average = hermitian_eigenvalues(average_covariance(mixture))
    except NumericError as e:
        logger.error(f"Eigendecomposition of the average covariance failed: {str(e)}")
        raise NumericError(f"Eigendecomposition of the average covariance failed: {str(e)}",
                           population=mixture.num_populations) from e
    if average[0] < -NEGATIVE_EIGENVALUE_TOL:
        raise NumericError(f"Average covariance has negative eigenvalue {average[0]:.3g}",
                           population=mixture.num_populations)
    pooled = np.concatenate([mixture.population_eigenvalues.ravel(), _clamp_round_off(average)])
    return np.sort(pooled)


def _expanded_dimension(unit: int, dimension: Optional[int], min_dimension: int) -> int:
    """Least multiple of unit that is at least the requested and the minimum dimension"""
    floor = max(dimension or 0, min_dimension)
    return unit * math.ceil(floor / unit)


def _multiplicities(weights: Sequence[float], dimension: Optional[int], min_dimension: int) -> Tuple[int, List[int]]:
    fractions = [Fraction(w).limit_denominator(10**6) for w in weights]
    if any(abs(float(f) - w) > 1e-9 for f, w in zip(fractions, weights)):
        raise InvalidProblemError("Weights are not representable as rational multiplicities; "
                                  "give weights with a denominator below 10^6")
    unit = math.lcm(*(f.denominator for f in fractions))

    expanded = _expanded_dimension(unit, dimension, min_dimension)
    if dimension is not None and expanded != dimension:
        logger.debug(f"Dimension {dimension} expanded to {expanded}, a multiple of {unit}")
    counts = [w * expanded for w in weights]
    if any(abs(c - round(c)) > 1e-9 for c in counts) or sum(round(c) for c in counts) != expanded:
        raise InvalidProblemError(f"Weights {list(weights)} are not integer multiplicities at M={expanded}; "
                                  f"choose M as a multiple of {unit}")
    return expanded, [int(round(c)) for c in counts]


def _discrete_covariance(lambdas: Sequence[float], weights: Sequence[float], dimension: Optional[int],
                         min_dimension: int) -> np.ndarray:
    dimension, counts = _multiplicities(weights, dimension, min_dimension)
    diagonal = np.repeat(np.asarray(lambdas, dtype=float), counts)
    return np.diag(diagonal)


def _cyclic_diagonals(populations: int, dimension: int) -> np.ndarray:
    m = np.arange(dimension)
    k = np.arange(1, populations + 1)[:, np.newaxis]
    return ((m + k) % populations + 1).astype(float)


def build_test_problem(spec: TestProblem, min_dimension: int = MIN_DIMENSION) -> PopulationMixture:
    """
    Build the population mixture of a built-in test problem

    An explicit dimension is a lower bound: the matrix size is raised to
    the minimum dimension and, for discrete spectra, to the next multiple
    of the total multiplicity.

    Args:
        spec (TestProblem): Generator settings
        min_dimension (int): Minimum matrix size when the spec does not set its own

    Returns:
        PopulationMixture: Concrete problem definition
    """
    gamma = constrain_gamma(spec.gamma)
    floor = spec.min_dimension if spec.min_dimension is not None else min_dimension

    if spec.kind == "mp":
        dimension = _expanded_dimension(1, spec.dimension, floor)
        mixture = PopulationMixture(np.eye(dimension)[np.newaxis], [1.0], gamma)
    elif spec.kind in ("two_delta", "comb"):
        lambdas, weights = spec.lambdas, spec.weights
        if spec.kind == "comb" and lambdas is None:
            lambdas = np.linspace(spec.comb_range[0], spec.comb_range[1], spec.comb_count).tolist()
        if weights is None:
            weights = [1.0 / len(lambdas)] * len(lambdas)
        covariance = _discrete_covariance(lambdas, weights, spec.dimension, floor)
        mixture = PopulationMixture(covariance[np.newaxis], [1.0], gamma)
    else:
        dimension = _expanded_dimension(1, spec.dimension, floor)
        diagonals = _cyclic_diagonals(spec.populations, dimension)
        if spec.kind == "diag":
            covariances = np.stack([np.diag(d) for d in diagonals])
        else:
            m = np.arange(dimension)
            decay = spec.rho ** (np.abs(m[:, np.newaxis] - m[np.newaxis, :]) ** spec.exponent)
            covariances = np.stack([decay * np.sqrt(np.outer(d, d)) for d in diagonals])
        weights = np.full(spec.populations, 1.0 / spec.populations)
        mixture = PopulationMixture(covariances, weights, gamma)

    logger.info(f"Built {spec.kind} problem: K={mixture.num_populations}, M={mixture.dimension}, "
                f"gamma={mixture.gamma}, diagonal={mixture.diagonal_flag}")
    return mixture


def load_covariances(source: CovarianceSource, base_dir: Optional[Union[str, Path]] = None) -> PopulationMixture:
    """
    Load population covariances from CSV side files

    Args:
        source (CovarianceSource): File references, weights and aspect ratio
        base_dir (Optional[Union[str, Path]]): Directory relative paths are resolved against

    Returns:
        PopulationMixture: Problem definition
    """
    root = Path(base_dir) if base_dir is not None else Path.cwd()
    matrices = []
    for entry in source.files:
        try:
            real = np.loadtxt(root / entry.real, delimiter=",", ndmin=2)
            matrix = real if entry.imag is None else real + 1j * np.loadtxt(root / entry.imag, delimiter=",", ndmin=2)
        except (OSError, ValueError) as e:
            logger.error(f"Error loading covariance {entry.real}: {str(e)}")
            raise InvalidProblemError(f"Cannot load covariance '{entry.real}': {str(e)}") from e
        matrices.append(matrix)
    logger.info(f"Loaded {len(matrices)} covariance files from {root}")
    return PopulationMixture(matrices, source.weights, constrain_gamma(source.gamma))
