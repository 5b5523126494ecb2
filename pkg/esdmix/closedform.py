from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Sequence, Tuple, Union
import cmath
import logging
import math

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import brentq

from esdmix.config import DISPERSION_MARGIN

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

# Cube roots of unity used to walk the three Cardano branches
_UNITY = (1.0 + 0j, complex(-0.5, math.sqrt(3) / 2), complex(-0.5, -math.sqrt(3) / 2))
_CDF_NODES = 20001


@dataclass(frozen=True)
class MpLaw:
    """Marcenko-Pastur law of the identity population at aspect ratio gamma"""
    gamma: float
    support_lo: float = field(init=False)
    support_hi: float = field(init=False)
    atom_at_zero: float = field(init=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"Aspect ratio must be positive, got {self.gamma}")
        root = math.sqrt(self.gamma)
        object.__setattr__(self, "support_lo", (1 - root) ** 2)
        object.__setattr__(self, "support_hi", (1 + root) ** 2)
        object.__setattr__(self, "atom_at_zero", 1 - 1 / self.gamma if self.gamma > 1 else 0.0)

    @property
    def continuous_mass(self) -> float:
        return 1.0 - self.atom_at_zero

    def density(self, x: ArrayLike) -> Union[float, np.ndarray]:
        return mp_density(x, self.gamma)

    @cached_property
    def _cdf_table(self) -> Tuple[np.ndarray, np.ndarray]:
        # x = c - h cos(theta) removes the square-root edges from the integrand
        theta = np.linspace(0.0, np.pi, _CDF_NODES)
        center = (self.support_hi + self.support_lo) / 2
        half = (self.support_hi - self.support_lo) / 2
        xs = center - half * np.cos(theta)
        integrand = mp_density(xs, self.gamma) * half * np.sin(theta)
        cumulative = cumulative_trapezoid(integrand, theta, initial=0.0)
        return xs, cumulative / cumulative[-1]

    def cdf(self, x: ArrayLike) -> Union[float, np.ndarray]:
        """CDF of the continuous part, normalised to reach 1 at the upper edge"""
        xs, table = self._cdf_table
        values = np.interp(np.asarray(x, dtype=float), xs, table, left=0.0, right=1.0)
        return float(values) if np.ndim(values) == 0 else values


def mp_density(x: ArrayLike, gamma: float) -> Union[float, np.ndarray]:
    """
    Marcenko-Pastur density of the identity population

    The point mass at zero for gamma > 1 is not part of the pointwise density.

    Args:
        x (ArrayLike): Abscissa(e)
        gamma (float): Aspect ratio M/N

    Returns:
        Union[float, np.ndarray]: Density value(s)
    """
    xs = np.asarray(x, dtype=float)
    root = math.sqrt(gamma)
    lo, hi = (1 - root) ** 2, (1 + root) ** 2
    inside = (xs > lo) & (xs < hi) & (xs > 0)
    values = np.zeros_like(xs)
    xi = xs[inside]
    values[inside] = np.sqrt((hi - xi) * (xi - lo)) / (2 * np.pi * gamma * xi)
    return float(values) if values.ndim == 0 else values


def _cubic_coefficients(x: float, gamma: float, lambdas: Sequence[float],
                        weights: Sequence[float]) -> Tuple[float, float, float, float]:
    # Single-population equation with u = 1 + gamma e, denominators cleared
    l1, l2 = lambdas
    w1, w2 = weights
    s, p, mean = l1 + l2, l1 * l2, w1 * l1 + w2 * l2
    return x * x, -(x * s + x * x - gamma * x * mean), p * (1 - gamma) + x * s, -p


def _discriminant(a: float, b: float, c: float, d: float) -> float:
    return 18 * a * b * c * d - 4 * b ** 3 * d + b * b * c * c - 4 * a * c ** 3 - 27 * a * a * d * d


def _cardano(a: float, b: float, c: float, d: float) -> List[complex]:
    delta0 = b * b - 3 * a * c
    delta1 = 2 * b ** 3 - 9 * a * b * c + 27 * a * a * d
    root = cmath.sqrt(delta1 * delta1 - 4 * delta0 ** 3)
    candidates = ((delta1 + root) / 2, (delta1 - root) / 2)
    c3 = max(candidates, key=abs)
    if c3 == 0:
        return [complex(-b / (3 * a))] * 3
    cube = c3 ** (1 / 3)
    roots = []
    for unity in _UNITY:
        branch = unity * cube
        roots.append(-(b + branch + delta0 / branch) / (3 * a))
    return roots


def _check_two_delta(gamma: float, lambdas: Sequence[float], weights: Sequence[float]) -> None:
    if len(lambdas) != 2 or len(weights) != 2:
        raise ValueError("Two-delta law needs two eigenvalues and two weights")
    if min(lambdas) <= 0 or min(weights) <= 0:
        raise ValueError("Two-delta eigenvalues and weights must be positive")
    if abs(sum(weights) - 1.0) > 1e-12:
        raise ValueError("Two-delta weights must sum to 1")
    if not gamma > 0:
        raise ValueError(f"Aspect ratio must be positive, got {gamma}")


def two_delta_roots(x: float, gamma: float, lambdas: Sequence[float], weights: Sequence[float]) -> np.ndarray:
    """Roots of the two-delta cubic in u = 1 + gamma e at real abscissa x > 0"""
    _check_two_delta(gamma, lambdas, weights)
    return np.array(_cardano(*_cubic_coefficients(float(x), gamma, lambdas, weights)))


def _two_delta_point(x: float, gamma: float, lambdas: Sequence[float], weights: Sequence[float]) -> float:
    if x <= 0:
        return 0.0
    coefficients = _cubic_coefficients(x, gamma, lambdas, weights)
    if _discriminant(*coefficients) >= 0:
        return 0.0
    best = 0.0
    for u in _cardano(*coefficients):
        m = sum(w * u / (lam - x * u) for lam, w in zip(lambdas, weights))
        best = max(best, m.imag)
    return best / math.pi


def two_delta_density(x: ArrayLike, gamma: float, lambdas: Sequence[float],
                      weights: Sequence[float]) -> Union[float, np.ndarray]:
    """
    Limiting density of the two-point population spectrum

    Args:
        x (ArrayLike): Abscissa(e)
        gamma (float): Aspect ratio M/N
        lambdas (Sequence[float]): The two population eigenvalues
        weights (Sequence[float]): Their probabilities

    Returns:
        Union[float, np.ndarray]: Density value(s)
    """
    _check_two_delta(gamma, lambdas, weights)
    l1, l2 = sorted(lambdas)
    if l1 == l2:
        scaled = np.asarray(x, dtype=float) / l1
        return mp_density(scaled, gamma) / l1

    xs = np.asarray(x, dtype=float)
    values = np.array([_two_delta_point(float(v), gamma, lambdas, weights) for v in xs.ravel()])
    values = values.reshape(xs.shape)
    return float(values) if values.ndim == 0 else values


def two_delta_support(gamma: float, lambdas: Sequence[float], weights: Sequence[float],
                      samples: int = 20001) -> List[Tuple[float, float]]:
    """
    Locate the support intervals of the two-delta law

    The cubic discriminant is negative exactly where the density is positive;
    its sign is scanned on a log grid over the dispersion bounds and every sign
    change is refined by bracketing.

    Args:
        gamma (float): Aspect ratio M/N
        lambdas (Sequence[float]): The two population eigenvalues
        weights (Sequence[float]): Their probabilities
        samples (int): Number of scan points

    Returns:
        List[Tuple[float, float]]: Ascending disjoint support intervals
    """
    _check_two_delta(gamma, lambdas, weights)
    root = math.sqrt(gamma)
    lo = (1 - root) ** 2 * min(lambdas) / DISPERSION_MARGIN
    hi = (1 + root) ** 2 * max(lambdas) * DISPERSION_MARGIN
    lo = max(lo, 1e-12 * hi)
    xs = np.geomspace(lo, hi, samples)

    def discriminant(v: float) -> float:
        return _discriminant(*_cubic_coefficients(v, gamma, lambdas, weights))

    inside = np.array([discriminant(v) < 0 for v in xs])
    edges = np.flatnonzero(np.diff(inside.astype(int)))
    crossings = [brentq(discriminant, xs[i], xs[i + 1]) for i in edges]
    if inside[0]:
        crossings.insert(0, xs[0])
    if inside[-1]:
        crossings.append(xs[-1])
    intervals = list(zip(crossings[0::2], crossings[1::2]))
    logger.debug(f"Two-delta support at gamma={gamma}: {intervals}")
    return intervals
