from dataclasses import dataclass
from typing import List, Sequence
import logging
import math

import numpy as np

from esdmix.config import CURVATURE_FLOOR, DISPERSION_MARGIN
from esdmix.exceptions import DegenerateSpectrumError
from esdmix.solver import SolverConfig

logger = logging.getLogger(__name__)

# Lower edge used when a segment starts at zero, relative to its upper edge
ZERO_EDGE_FLOOR = 1e-12


@dataclass(frozen=True)
class SupportSegment:
    """Merged dispersion interval and the number of pooled eigenvalues inducing it"""
    lo: float
    hi: float
    eig_count: int


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Ascending evaluation abscissae, each tagged with the segment that contains it"""
    points: np.ndarray
    segment_index: np.ndarray
    segments: List[SupportSegment]
    initial_size: int

    def __len__(self) -> int:
        return len(self.points)

    def segment_of(self, i: int) -> int:
        return int(self.segment_index[i])

    def segment_points(self, j: int) -> np.ndarray:
        return self.points[self.segment_index == j]


def dispersion_intervals(lambdas: Sequence[float], gamma: float, t: float = DISPERSION_MARGIN) -> np.ndarray:
    """
    Maximum spectral dispersion of every pooled eigenvalue

    Args:
        lambdas (Sequence[float]): Ascending pooled eigenvalues
        gamma (float): Aspect ratio M/N
        t (float): Safety margin, strictly above 1

    Returns:
        np.ndarray: n x 2 array of [a_p, b_p] rows in input order, zero eigenvalues dropped
    """
    if not t > 1:
        raise ValueError(f"Dispersion margin must exceed 1, got {t}")
    values = np.asarray(lambdas, dtype=float)
    values = values[values > 0]
    root = math.sqrt(gamma)
    return np.column_stack([(1 - root) ** 2 * values / t, t * (1 + root) ** 2 * values])


def partition_segments(intervals: np.ndarray) -> List[SupportSegment]:
    """Merge overlapping intervals; a gap is only declared where b_p < a_(p+1)"""
    intervals = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if len(intervals) == 0:
        raise DegenerateSpectrumError("Degenerate spectrum: every pooled eigenvalue is zero")

    segments = []
    lo, hi = intervals[0]
    count = 1
    for a, b in intervals[1:]:
        if hi < a:
            segments.append(SupportSegment(float(lo), float(hi), count))
            lo, hi, count = a, b, 1
        else:
            hi = max(hi, b)
            count += 1
    segments.append(SupportSegment(float(lo), float(hi), count))
    return segments


def _assemble(chunks: List[np.ndarray], segments: List[SupportSegment], initial_size: int) -> SpectralGrid:
    points = np.concatenate(chunks)
    index = np.concatenate([np.full(len(c), j) for j, c in enumerate(chunks)])
    for array in (points, index):
        array.setflags(write=False)
    return SpectralGrid(points=points, segment_index=index, segments=list(segments), initial_size=initial_size)


def initial_grid(segments: List[SupportSegment], config: SolverConfig) -> SpectralGrid:
    """
    Log-uniform grid over every segment

    Args:
        segments (List[SupportSegment]): Ascending disjoint support segments
        config (SolverConfig): Supplies M_o (points per eigenvalue) and M_i (minimum per segment)

    Returns:
        SpectralGrid: Concatenated per-segment grids
    """
    chunks = []
    for segment in segments:
        size = max(config.points_per_eigenvalue * segment.eig_count, config.min_points_per_segment)
        lo = segment.lo if segment.lo > 0 else ZERO_EDGE_FLOOR * segment.hi
        chunks.append(np.geomspace(lo, segment.hi, size))
    grid = _assemble(chunks, segments, sum(len(c) for c in chunks))
    logger.info(f"Initial grid: {len(grid)} points over {len(segments)} segments")
    return grid


def _second_derivative(x: np.ndarray, f: np.ndarray) -> np.ndarray:
    # Three-point divided differences on non-uniform spacing; ends copy their neighbour
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    inner = 2 * (h1 * f[2:] - (h1 + h2) * f[1:-1] + h2 * f[:-2]) / (h1 * h2 * (h1 + h2))
    return np.concatenate([inner[:1], inner, inner[-1:]])


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    quotas = total * weights / weights.sum()
    counts = np.floor(quotas).astype(int)
    remainder = total - counts.sum()
    if remainder > 0:
        order = np.argsort(-(quotas - counts), kind="stable")
        counts[order[:remainder]] += 1
    return counts


def cell_weights(grid: SpectralGrid, density: np.ndarray, criterion: str = "curvature",
                 floor: float = CURVATURE_FLOOR) -> np.ndarray:
    """
    Refinement weight of every cell between consecutive points of one segment

    The curvature term is width * sqrt(x * |f''|); a floor proportional to the
    cell log-width keeps flat regions covered.

    Args:
        grid (SpectralGrid): Current grid
        density (np.ndarray): Density at every grid point
        criterion (str): "curvature" or "log_length"
        floor (float): Floor term as a fraction of the largest curvature weight

    Returns:
        np.ndarray: One weight per cell (len(grid) - 1), zero across segment gaps
    """
    if criterion not in ("curvature", "log_length"):
        raise ValueError(f"Unknown regrid criterion '{criterion}'")
    x = grid.points
    f = np.asarray(density, dtype=float)
    if f.shape != x.shape:
        raise ValueError(f"Expected {len(x)} density values, got {f.shape}")

    inside = grid.segment_index[1:] == grid.segment_index[:-1]
    log_width = np.where(inside, np.log(x[1:] / x[:-1]), 0.0)
    curvature = np.zeros_like(log_width)

    if criterion == "curvature":
        for j in range(len(grid.segments)):
            idx = np.flatnonzero(grid.segment_index == j)
            if len(idx) < 3:
                continue
            xs = x[idx]
            second = np.abs(_second_derivative(xs, f[idx]))
            mean_second = (second[1:] + second[:-1]) / 2
            geometric = np.sqrt(xs[1:] * xs[:-1])
            curvature[idx[:-1]] = np.diff(xs) * np.sqrt(geometric * mean_second)

    peak = curvature.max(initial=0.0)
    if peak == 0:
        return log_width
    return curvature + floor * peak * log_width / log_width[inside].mean()


def regrid(grid: SpectralGrid, density: np.ndarray, ratio: float, criterion: str = "curvature",
           floor: float = CURVATURE_FLOOR) -> SpectralGrid:
    """
    Add ceil(ratio * initial_size) points where the density bends most

    Args:
        grid (SpectralGrid): Current grid
        density (np.ndarray): Density at every grid point
        ratio (float): Refinement ratio R_l
        criterion (str): Cell weighting rule, see cell_weights
        floor (float): Relative floor of the curvature weights

    Returns:
        SpectralGrid: Refined grid containing every previous point
    """
    if not ratio > 0:
        raise ValueError(f"Regrid ratio must be positive, got {ratio}")
    weights = cell_weights(grid, density, criterion, floor)
    if weights.sum() <= 0:
        logger.warning("No refinable cells; grid left unchanged")
        return grid

    total = math.ceil(ratio * grid.initial_size)
    counts = _largest_remainder(weights, total)
    x = grid.points
    chunks = [[] for _ in grid.segments]
    for i, point in enumerate(x):
        chunks[grid.segment_of(i)].append(point)
        if i < len(counts) and counts[i] > 0:
            a, b = x[i], x[i + 1]
            steps = np.arange(1, counts[i] + 1) / (counts[i] + 1)
            chunks[grid.segment_of(i)].extend(a * (b / a) ** steps)

    refined = _assemble([np.asarray(c) for c in chunks], grid.segments, grid.initial_size)
    logger.info(f"Regrid ({criterion}): {len(grid)} -> {len(refined)} points")
    return refined
