from dataclasses import dataclass
from typing import TYPE_CHECKING, Tuple
import logging

import numpy as np
import scipy.linalg

from esdmix.config import HERMITIAN_TOL
from esdmix.exceptions import InvalidProblemError, NearRealAxisBreakdown, NumericError

if TYPE_CHECKING:
    from esdmix.models import PopulationMixture

logger = logging.getLogger(__name__)

# Relative pivot size below which the resolvent matrix is treated as singular
PIVOT_RTOL = 1e-15


@dataclass(frozen=True)
class ResolventTraces:
    """Right-hand sides of the mixture fixed-point system at one abscissa"""
    e_out: np.ndarray  # complex, one entry per population
    m_out: complex


def hermitian_eigenvalues(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """
    Compute all eigenvalues of a Hermitian matrix

    Args:
        matrix (np.ndarray): Square Hermitian matrix
        tol (float): Elementwise tolerance for the Hermitian check

    Returns:
        np.ndarray: Real eigenvalues in ascending order
    """
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidProblemError(f"Expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.conj().T, rtol=0.0, atol=tol):
        raise InvalidProblemError("Matrix is not Hermitian within tolerance")
    try:
        return scipy.linalg.eigvalsh(a)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
        logger.error(f"Eigenvalue iteration failed: {str(e)}")
        raise NumericError(f"Eigenvalue iteration failed: {str(e)}") from e


def resolvent_traces(e: np.ndarray, z: complex, mixture: "PopulationMixture",
                     force_dense: bool = False) -> ResolventTraces:
    """
    Evaluate the mixture system at the auxiliary vector e

    B(z, e) = sum_k alpha_k Lambda_k / (1 + gamma e_k) - z I, then
    e_out_j = tr(Lambda_j B^-1) / M and m_out = tr(B^-1) / M.

    Args:
        e (np.ndarray): Current auxiliary vector, one entry per population
        z (complex): Evaluation point in the upper half plane
        mixture (PopulationMixture): Problem definition
        force_dense (bool): Skip the diagonal fast path even when it applies

    Returns:
        ResolventTraces: Updated auxiliary vector and Stieltjes value
    """
    e = np.asarray(e, dtype=complex)
    denominators = 1.0 + mixture.gamma * e
    if np.any(np.abs(denominators) == 0.0) or not np.all(np.isfinite(denominators)):
        raise NearRealAxisBreakdown(f"Pole in population scaling at z={z}")
    coefficients = mixture.weights / denominators

    if mixture.diagonal_flag and not force_dense:
        return _diagonal_traces(coefficients, z, mixture)
    return _dense_traces(coefficients, z, mixture)


def _diagonal_batch(coefficients: np.ndarray, z: np.ndarray,
                    mixture: "PopulationMixture") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    values = mixture.atom_values  # K x U distinct diagonal patterns
    b = (coefficients[:, :, np.newaxis] * values).sum(axis=1) - z[:, np.newaxis]
    magnitude = np.abs(b)
    ok = np.isfinite(b).all(axis=1) & (magnitude.min(axis=1) > PIVOT_RTOL * magnitude.max(axis=1))
    inverse = mixture.atom_weights / np.where(ok[:, np.newaxis], b, 1.0)
    e_out = (inverse[:, np.newaxis, :] * values).sum(axis=2)
    return e_out, inverse.sum(axis=1), ok


def _diagonal_traces(coefficients: np.ndarray, z: complex, mixture: "PopulationMixture") -> ResolventTraces:
    e_out, m_out, ok = _diagonal_batch(coefficients[np.newaxis], np.array([z]), mixture)
    if not ok[0]:
        raise NearRealAxisBreakdown(f"Singular diagonal resolvent at z={z}")
    return ResolventTraces(e_out=e_out[0], m_out=complex(m_out[0]))


def _dense_traces(coefficients: np.ndarray, z: complex, mixture: "PopulationMixture") -> ResolventTraces:
    populations = mixture.populations
    dimension = populations.shape[1]
    b = np.tensordot(coefficients, populations, axes=1)
    b[np.diag_indices(dimension)] -= z

    try:
        lu, piv = scipy.linalg.lu_factor(b, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NearRealAxisBreakdown(f"Resolvent factorization failed at z={z}: {str(e)}") from e
    pivots = np.abs(np.diag(lu))
    if not np.all(np.isfinite(pivots)) or pivots.min() <= PIVOT_RTOL * pivots.max():
        raise NearRealAxisBreakdown(f"Singular resolvent at z={z}")

    # One factorization, one inverse; all K traces reuse it
    inverse = scipy.linalg.lu_solve((lu, piv), np.eye(dimension, dtype=complex), check_finite=False)
    e_out = np.einsum("kab,ba->k", populations, inverse) / dimension
    m_out = complex(np.trace(inverse)) / dimension
    return ResolventTraces(e_out=e_out, m_out=m_out)


def resolvent_traces_batch(e: np.ndarray, z: np.ndarray,
                           mixture: "PopulationMixture") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Evaluate the mixture system at many points at once

    Rows are independent; a row whose resolvent is singular is flagged
    instead of raising.

    Args:
        e (np.ndarray): P x K auxiliary vectors
        z (np.ndarray): P evaluation points in the upper half plane
        mixture (PopulationMixture): Problem definition

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray]: P x K updated vectors, P Stieltjes values, P success flags
    """
    e = np.asarray(e, dtype=complex)
    z = np.asarray(z, dtype=complex)
    denominators = 1.0 + mixture.gamma * e
    ok = np.isfinite(denominators).all(axis=1) & (denominators != 0).all(axis=1)
    coefficients = mixture.weights / np.where(ok[:, np.newaxis], denominators, 1.0)

    if mixture.diagonal_flag:
        e_out, m_out, solved = _diagonal_batch(coefficients, z, mixture)
        return e_out, m_out, ok & solved

    e_out = np.zeros_like(e)
    m_out = np.zeros(len(z), dtype=complex)
    for p in np.flatnonzero(ok):
        try:
            traces = _dense_traces(coefficients[p], z[p], mixture)
        except NearRealAxisBreakdown:
            ok[p] = False
            continue
        e_out[p], m_out[p] = traces.e_out, traces.m_out
    return e_out, m_out, ok
