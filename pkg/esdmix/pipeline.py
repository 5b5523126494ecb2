from dataclasses import dataclass, field
from datetime import datetime
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from esdmix.config import MASS_DEFICIT_WARNING
from esdmix.grid import SpectralGrid, SupportSegment, dispersion_intervals, initial_grid, partition_segments, regrid
from esdmix.metrics import MetricsTracker, RunMetrics
from esdmix.models import PopulationMixture, eigenvalue_pool
from esdmix.parallel import available_workers, worker_map
from esdmix.solver import PointSolution, SolverConfig, solve_batch

logger = logging.getLogger(__name__)


@dataclass
class EstimateDiagnostics:
    """Per-point solver statistics and global sanity signals"""
    iterations: np.ndarray
    nonconverged: List[int]
    level_sizes: List[int]
    mass_warning: bool = False
    runtime: float = 0.0


@dataclass(eq=False)
class DensityEstimate:
    """Grid, point solutions aligned with it, and the integrated mass"""
    grid: SpectralGrid
    solutions: List[PointSolution]
    mass: float
    segments: List[SupportSegment]
    diagnostics: EstimateDiagnostics = field(repr=False)

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    @property
    def stieltjes(self) -> np.ndarray:
        return np.array([s.m for s in self.solutions])

    @property
    def converged(self) -> np.ndarray:
        return np.array([s.converged for s in self.solutions])

    @property
    def density(self) -> np.ndarray:
        """Density at the grid points; non-converged points are interpolated from converged neighbours"""
        f = np.array([s.f for s in self.solutions])
        ok = self.converged
        if ok.all():
            return f
        for j in range(len(self.segments)):
            inside = self.grid.segment_index == j
            good = inside & ok
            bad = inside & ~ok
            if bad.any() and good.sum() >= 2:
                f[bad] = np.interp(self.grid.points[bad], self.grid.points[good], f[good])
        return f


def _solve_task(chunk: Tuple[np.ndarray, Optional[List[Optional[np.ndarray]]]], mixture: PopulationMixture,
                config: SolverConfig) -> List[PointSolution]:
    xs, warm = chunk
    return solve_batch(xs, mixture, config, warm_starts=warm)


def solve_points(xs: Sequence[float], mixture: PopulationMixture, config: SolverConfig, workers: int = 1,
                 warm_starts: Optional[Sequence[Optional[np.ndarray]]] = None) -> List[PointSolution]:
    """
    Solve independent abscissae, gathering results in input order

    The abscissae are split into one contiguous block per worker and every
    block is iterated as a batch.

    Args:
        xs (Sequence[float]): Abscissae
        mixture (PopulationMixture): Problem definition
        config (SolverConfig): Solver constants
        workers (int): Worker processes, 1 runs serially, 0 or less uses every available CPU
        warm_starts (Optional[Sequence]): Initial auxiliary vector per abscissa, None entries for cold starts

    Returns:
        List[PointSolution]: One solution per abscissa
    """
    xs = np.asarray(xs, dtype=float)
    if len(xs) == 0:
        return []
    blocks = min(workers if workers > 0 else available_workers(), len(xs))
    chunks = []
    for positions in np.array_split(np.arange(len(xs)), blocks):
        warm = None if warm_starts is None else [warm_starts[i] for i in positions]
        chunks.append((xs[positions], warm))
    with worker_map(workers, chunksize=1) as mapper:
        batches = mapper(partial(_solve_task, mixture=mixture, config=config), chunks)
    return [solution for batch in batches for solution in batch]


def _nearest_solved(new_points: np.ndarray, old_points: np.ndarray) -> np.ndarray:
    # Nearest old point in log distance; new points always fall between two old ones
    right = np.clip(np.searchsorted(old_points, new_points), 1, len(old_points) - 1)
    left = right - 1
    closer_left = np.log(new_points / old_points[left]) <= np.log(old_points[right] / new_points)
    return np.where(closer_left, left, right)


def integrate_density(estimate: DensityEstimate) -> float:
    """Trapezoidal mass summed over segments; gaps contribute nothing"""
    grid, density = estimate.grid, estimate.density
    mass = 0.0
    for j in range(len(grid.segments)):
        inside = grid.segment_index == j
        if inside.sum() >= 2:
            mass += float(trapezoid(density[inside], grid.points[inside]))
    return mass


def compute_esd(mixture: PopulationMixture, config: Optional[SolverConfig] = None, workers: int = 1,
                tracker: Optional[MetricsTracker] = None) -> DensityEstimate:
    """
    Limiting spectral density of a population mixture

    Detects the support from the pooled eigenvalues, solves an initial
    log-uniform grid and then refines it config.levels times, solving only
    the new points.

    Args:
        mixture (PopulationMixture): Problem definition
        config (Optional[SolverConfig]): Solver constants, defaults if None
        workers (int): Worker processes for the point solves
        tracker (Optional[MetricsTracker]): Receives one RunMetrics record

    Returns:
        DensityEstimate: Density on the final grid with diagnostics
    """
    config = config or SolverConfig()
    timers = MetricsTracker()
    timers.start_timer("total")

    try:
        timers.start_timer("support")
        pool = eigenvalue_pool(mixture)
        segments = partition_segments(dispersion_intervals(pool, mixture.gamma, config.dispersion_margin))
        grid = initial_grid(segments, config)
        support_time = timers.stop_timer("support")
        logger.info(f"Support detection: {len(segments)} segments from {len(pool)} pooled eigenvalues")

        timers.start_timer("initial")
        solutions = solve_points(grid.points, mixture, config, workers)
        initial_time = timers.stop_timer("initial")
        level_sizes = [len(grid)]

        timers.start_timer("regrid")
        for level in range(1, config.levels + 1):
            current = DensityEstimate(grid, solutions, 0.0, segments, EstimateDiagnostics(np.array([]), [], []))
            refined = regrid(grid, current.density, config.ratio_for(level),
                             config.regrid_criterion, config.curvature_floor)
            is_new = ~np.isin(refined.points, grid.points)
            new_points = refined.points[is_new]
            warm = None
            if config.warm_start:
                nearest = _nearest_solved(new_points, grid.points)
                warm = [solutions[i].e for i in nearest]
            new_solutions = iter(solve_points(new_points, mixture, config, workers, warm))
            old_solutions = iter(solutions)
            solutions = [next(new_solutions) if flag else next(old_solutions) for flag in is_new]
            grid = refined
            level_sizes.append(len(grid))
        regrid_time = timers.stop_timer("regrid")
    except Exception as e:
        logger.error(f"Error computing density: {str(e)}")
        raise

    iterations = np.array([s.iterations for s in solutions])
    nonconverged = [i for i, s in enumerate(solutions) if not s.converged]
    estimate = DensityEstimate(grid, solutions, 0.0, segments, EstimateDiagnostics(iterations, nonconverged, level_sizes))
    estimate.mass = integrate_density(estimate)

    expected = min(1.0, 1.0 / mixture.gamma)
    if expected - estimate.mass > MASS_DEFICIT_WARNING:
        estimate.diagnostics.mass_warning = True
        logger.warning(f"Integrated mass {estimate.mass:.6f} is below {expected:.6f}; "
                       f"support detection may have missed part of the spectrum")
    if nonconverged:
        logger.warning(f"{len(nonconverged)} of {len(grid)} points did not converge")

    total_time = timers.stop_timer("total")
    estimate.diagnostics.runtime = total_time
    logger.info(f"Density computed on {len(grid)} points in {total_time:.2f}s, mass {estimate.mass:.6f}")

    if tracker is not None:
        tracker.record_metrics(RunMetrics(
            timestamp=datetime.now(),
            support_detection_time=support_time,
            initial_solve_time=initial_time,
            regrid_time=regrid_time,
            total_time=total_time,
            grid_size=len(grid),
            points_solved=len(solutions),
            total_iterations=int(iterations.sum()),
            nonconverged_points=len(nonconverged),
            segments=len(segments),
            mass=estimate.mass,
            metadata={"populations": mixture.num_populations, "dimension": mixture.dimension,
                      "gamma": mixture.gamma},
        ))
    return estimate


def compute_esd_batch(mixtures: Sequence[PopulationMixture], config: Optional[SolverConfig] = None,
                      workers: int = 1) -> List[DensityEstimate]:
    """Compute several densities, one mixture per worker"""
    with worker_map(workers, chunksize=1) as mapper:
        return mapper(partial(compute_esd, config=config), list(mixtures))


def interpolate_density(estimate: DensityEstimate, queries: Sequence[float]) -> np.ndarray:
    """
    Piecewise-linear density at arbitrary abscissae

    Args:
        estimate (DensityEstimate): Computed density
        queries (Sequence[float]): Abscissae

    Returns:
        np.ndarray: Interpolated values, 0 outside gridded segments and in gaps
    """
    q = np.asarray(queries, dtype=float)
    values = np.zeros_like(q)
    f = estimate.density
    for j in range(len(estimate.segments)):
        inside = estimate.grid.segment_index == j
        xs = estimate.grid.points[inside]
        mask = (q >= xs[0]) & (q <= xs[-1])
        values[mask] = np.interp(q[mask], xs, f[inside])
    return values


def density_cdf(estimate: DensityEstimate, x: Sequence[float], normalize: bool = False) -> np.ndarray:
    """
    Cumulative mass of the interpolated density up to every x

    Args:
        estimate (DensityEstimate): Computed density
        x (Sequence[float]): Abscissae
        normalize (bool): Divide by the total mass

    Returns:
        np.ndarray: Exact integral of the piecewise-linear density from 0 to x
    """
    q = np.asarray(x, dtype=float)
    cdf = np.zeros_like(q)
    f = estimate.density
    offset = 0.0
    for j in range(len(estimate.segments)):
        inside = estimate.grid.segment_index == j
        xs, fs = estimate.grid.points[inside], f[inside]
        cumulative = cumulative_trapezoid(fs, xs, initial=0.0)

        within = (q >= xs[0]) & (q < xs[-1])
        cell = np.clip(np.searchsorted(xs, q[within], side="right") - 1, 0, max(len(xs) - 2, 0))
        fq = np.interp(q[within], xs, fs)
        cdf[within] = offset + cumulative[cell] + (q[within] - xs[cell]) * (fs[cell] + fq) / 2
        offset += cumulative[-1]
        cdf[q >= xs[-1]] = offset

    if normalize:
        if offset <= 0:
            raise ValueError("Cannot normalise a density with zero mass")
        cdf /= offset
    return cdf


def mean_absolute_error(estimate: DensityEstimate, oracle: Callable[[np.ndarray], np.ndarray],
                        num: int = 10000, lo: Optional[float] = None, hi: Optional[float] = None) -> float:
    """
    Mean |f_hat - f| over evenly spaced abscissae

    Args:
        estimate (DensityEstimate): Computed density
        oracle (Callable): Reference density, vectorised
        num (int): Number of comparison points
        lo (Optional[float]): Left end, defaults to the first grid point
        hi (Optional[float]): Right end, defaults to the last grid point

    Returns:
        float: Mean absolute deviation
    """
    lo = estimate.points[0] if lo is None else lo
    hi = estimate.points[-1] if hi is None else hi
    xs = np.linspace(lo, hi, num)
    return float(np.mean(np.abs(interpolate_density(estimate, xs) - np.asarray(oracle(xs)))))


def support_intervals(estimate: DensityEstimate, threshold: float = 0.0) -> List[Tuple[float, float]]:
    """Maximal runs of same-segment grid points whose density exceeds threshold"""
    f = estimate.density
    x = estimate.points
    index = estimate.grid.segment_index
    intervals = []
    start = None
    for i in range(len(x)):
        above = f[i] > threshold
        if above and start is not None and index[i] != index[i - 1]:
            intervals.append((float(x[start]), float(x[i - 1])))
            start = i
        elif above and start is None:
            start = i
        elif not above and start is not None:
            intervals.append((float(x[start]), float(x[i - 1])))
            start = None
    if start is not None:
        intervals.append((float(x[start]), float(x[-1])))
    return intervals
