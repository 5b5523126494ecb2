from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Optional, Sequence, Union
import logging

import numpy as np
import scipy.linalg

from esdmix.config import MC_CLAMP_TOL
from esdmix.exceptions import InvalidProblemError
from esdmix.models import PopulationMixture
from esdmix.parallel import worker_map
from esdmix.pipeline import DensityEstimate, density_cdf

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EmpiricalSpectrum:
    """Sample-covariance eigenvalues pooled over independent trials"""
    eigenvalues: np.ndarray  # ascending
    dimension: int
    samples: int
    trials: int
    seed: int

    @classmethod
    def from_values(cls, values: Sequence[float], dimension: Optional[int] = None, samples: int = 0,
                    trials: int = 1, seed: int = 0) -> "EmpiricalSpectrum":
        """Wrap an arbitrary sample, e.g. one drawn from a computed CDF"""
        values = np.sort(np.asarray(values, dtype=float))
        return cls(values, dimension if dimension is not None else len(values), samples, trials, seed)

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def continuous_eigenvalues(self) -> np.ndarray:
        """Drop the trials * max(M - N, 0) structural zeros of a rank-deficient sample covariance"""
        zeros = self.trials * max(self.dimension - self.samples, 0) if self.samples else 0
        return self.eigenvalues[zeros:]


def _row_counts(weights: np.ndarray, samples: int) -> np.ndarray:
    quotas = weights * samples
    counts = np.floor(quotas).astype(int)
    remainder = samples - counts.sum()
    order = np.argsort(-(quotas - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts


def _covariance_root(matrix: np.ndarray) -> np.ndarray:
    values, vectors = scipy.linalg.eigh(matrix)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.conj().T


def _trial_eigenvalues(seed: np.random.SeedSequence, roots: Sequence[np.ndarray], counts: Sequence[int]) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dimension = roots[0].shape[0]
    blocks = []
    for root, count in zip(roots, counts):
        g = (rng.standard_normal((count, dimension)) + 1j * rng.standard_normal((count, dimension))) / np.sqrt(2)
        # row n = (Lambda^1/2 g)^T; the root is Hermitian
        blocks.append(g @ root.T)
    x = np.vstack(blocks)
    y = x.conj().T @ x / x.shape[0]
    return scipy.linalg.eigvalsh(y)


def sample_spectrum(mixture: PopulationMixture, samples: Optional[int] = None, trials: int = 20, seed: int = 0,
                    workers: int = 1) -> EmpiricalSpectrum:
    """
    Simulate Gaussian data matrices and pool their sample-covariance eigenvalues

    The first n_1 rows follow population 1, the next n_2 population 2 and
    so on, with n_k = alpha_k N rounded by largest remainder.

    Args:
        mixture (PopulationMixture): Problem definition
        samples (Optional[int]): Row count N, defaults to round(M / gamma)
        trials (int): Independent draws
        seed (int): Root seed; trial t uses the t-th spawned child
        workers (int): Worker processes for the trials

    Returns:
        EmpiricalSpectrum: Sorted pooled eigenvalues
    """
    dimension = mixture.dimension
    target = dimension / mixture.gamma
    samples = int(round(target)) if samples is None else int(samples)
    if abs(samples - target) > 1:
        raise InvalidProblemError(f"N={samples} does not match M/gamma={target:.3f}")
    if trials < 0:
        raise InvalidProblemError(f"Trial count must be non-negative, got {trials}")
    if trials == 0:
        return EmpiricalSpectrum(np.array([]), dimension, samples, 0, seed)

    counts = _row_counts(mixture.weights, samples)
    if np.any(counts == 0):
        k = int(np.flatnonzero(counts == 0)[0])
        raise InvalidProblemError(f"Population {k} unsampled at this N={samples}")

    roots = [_covariance_root(p) for p in mixture.populations]
    children = np.random.SeedSequence(seed).spawn(trials)
    with worker_map(workers, chunksize=1) as mapper:
        results = mapper(partial(_trial_eigenvalues, roots=roots, counts=counts.tolist()), children)

    pooled = np.sort(np.concatenate(results))
    if pooled[0] < -MC_CLAMP_TOL:
        logger.warning(f"Sample eigenvalue {pooled[0]:.3g} below clamp tolerance")
    pooled = np.clip(pooled, 0.0, None)
    logger.info(f"Sampled {trials} trials at M={dimension}, N={samples}: {len(pooled)} eigenvalues")
    return EmpiricalSpectrum(pooled, dimension, samples, trials, seed)


def ks_distance(empirical: EmpiricalSpectrum, estimate: DensityEstimate) -> float:
    """
    Kolmogorov distance between the empirical CDF and the estimate's CDF

    Both sides are restricted to the continuous part and normalised to unit mass.

    Args:
        empirical (EmpiricalSpectrum): Simulated eigenvalues
        estimate (DensityEstimate): Computed density

    Returns:
        float: sup |F_emp - F_hat|
    """
    values = empirical.continuous_eigenvalues()
    if len(values) == 0:
        raise ValueError("Empirical spectrum is empty")
    model = density_cdf(estimate, values, normalize=True)
    n = len(values)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(np.abs(upper - model)), np.max(np.abs(lower - model))))


def write_eigenvalues(spectrum: EmpiricalSpectrum, path: Union[str, Path]) -> None:
    """Write one eigenvalue per line at full precision"""
    try:
        np.savetxt(path, spectrum.eigenvalues, fmt="%.17g")
        logger.info(f"Wrote {len(spectrum)} eigenvalues to {path}")
    except OSError as e:
        logger.error(f"Error writing eigenvalues: {str(e)}")
        raise


def read_eigenvalues(path: Union[str, Path]) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(path, dtype=float))
