from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from esdmix.config import (
    BETA,
    CURVATURE_FLOOR,
    DAMPING_SCALE,
    DISPERSION_MARGIN,
    EPSILON,
    MAX_BACKOFFS,
    MAX_ITERS_CEILING,
    MIN_DIMENSION,
    MIN_POINTS_PER_SEGMENT,
    POINTS_PER_EIGENVALUE,
    Q_CAP,
    REGRID_LEVELS,
    REGRID_RATIO,
    XI0,
)
from esdmix.linalg import resolvent_traces_batch
from esdmix.models import PopulationMixture

logger = logging.getLogger(__name__)


class SolverConfig(BaseModel):
    """Tunable constants of the point solver and the grid construction"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    epsilon: float = Field(default=EPSILON, gt=0)
    xi0: float = XI0
    beta: float = Field(default=BETA, gt=1)
    q_cap: int = Field(default=Q_CAP, ge=0)
    damping_scale: float = Field(default=DAMPING_SCALE, ge=0)
    dispersion_margin: float = Field(default=DISPERSION_MARGIN, gt=1)
    points_per_eigenvalue: int = Field(default=POINTS_PER_EIGENVALUE, ge=1)
    min_points_per_segment: int = Field(default=MIN_POINTS_PER_SEGMENT, ge=2)
    min_dimension: int = Field(default=MIN_DIMENSION, ge=1)
    levels: int = Field(default=REGRID_LEVELS, ge=0)
    regrid_ratios: List[float] = Field(default_factory=lambda: [REGRID_RATIO], min_length=1)
    regrid_criterion: Literal["curvature", "log_length"] = "curvature"
    curvature_floor: float = Field(default=CURVATURE_FLOOR, gt=0)
    max_iters: Optional[int] = Field(default=None, ge=1)
    max_iters_per_level: Optional[int] = Field(default=None, ge=1)
    max_backoffs: int = Field(default=MAX_BACKOFFS, ge=0)
    warm_start: bool = True

    @model_validator(mode="after")
    def _check_consistency(self) -> "SolverConfig":
        if self.xi0 < self.epsilon:
            raise ValueError("'xi0' must be at least 'epsilon'")
        if self.points_per_eigenvalue > self.min_points_per_segment:
            raise ValueError("'points_per_eigenvalue' must not exceed 'min_points_per_segment'")
        if any(r <= 0 for r in self.regrid_ratios):
            raise ValueError("'regrid_ratios' must be positive")
        if len(self.regrid_ratios) not in (1, max(self.levels, 1)):
            raise ValueError("'regrid_ratios' needs one entry or one per level")
        return self

    @property
    def iteration_cap(self) -> int:
        if self.max_iters is not None:
            return self.max_iters
        return min(10 * math.ceil(1 / self.epsilon), MAX_ITERS_CEILING)

    def ratio_for(self, level: int) -> float:
        """Regrid ratio R_l for level l (1-based); a single entry applies to all levels"""
        return self.regrid_ratios[min(level, len(self.regrid_ratios)) - 1]


@dataclass
class AndersonHistory:
    """Recent fixed-point residuals h = g(e) - e and map values g(e), newest last"""
    q_cap: int
    residuals: List[np.ndarray] = field(default_factory=list)
    values: List[np.ndarray] = field(default_factory=list)

    def push(self, residual: np.ndarray, value: np.ndarray) -> None:
        self.residuals.append(residual)
        self.values.append(value)
        # q_cap differences need q_cap + 1 entries
        del self.residuals[:-(self.q_cap + 1)]
        del self.values[:-(self.q_cap + 1)]

    def reset(self) -> None:
        self.residuals.clear()
        self.values.clear()

    def __len__(self) -> int:
        return max(len(self.residuals) - 1, 0)


@dataclass(frozen=True)
class PointSolution:
    """Converged state of the fixed-point system at one abscissa"""
    x: float
    e: np.ndarray
    m: complex
    f: float
    iterations: int
    converged: bool
    residual: float
    backoffs: int = 0
    xi_path: Tuple[float, ...] = ()


def _small_solve(normal: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Solve P stacked n x n systems; returns the solutions and a per-row success flag"""
    n = normal.shape[-1]
    if n == 1:
        det = normal[:, 0, 0]
        solved = det != 0
        return rhs / np.where(solved, det, 1.0)[:, np.newaxis], solved
    if n == 2:
        a, b, c, d = normal[:, 0, 0], normal[:, 0, 1], normal[:, 1, 0], normal[:, 1, 1]
        det = a * d - b * c
        solved = det != 0
        det = np.where(solved, det, 1.0)
        nu = np.stack([(d * rhs[:, 0] - b * rhs[:, 1]) / det, (a * rhs[:, 1] - c * rhs[:, 0]) / det], axis=1)
        return nu, solved

    nu = np.zeros_like(rhs)
    solved = np.ones(len(rhs), dtype=bool)
    for p in range(len(rhs)):
        try:
            nu[p] = np.linalg.solve(normal[p], rhs[p])
        except np.linalg.LinAlgError:
            solved[p] = False
    return nu, solved


def _mix(residuals: np.ndarray, values: np.ndarray, damping_scale: float) -> np.ndarray:
    """Damped Anderson extrapolation for P windows of n + 1 entries (P x K x (n + 1), newest last)"""
    h, g = residuals[..., -1], values[..., -1]
    dh = np.diff(residuals, axis=-1)
    dg = np.diff(values, axis=-1)
    scale = np.abs(dh).max(axis=(1, 2))

    adjoint = dh.conj()
    normal = (adjoint[:, :, :, np.newaxis] * dh[:, :, np.newaxis, :]).sum(axis=1)
    normal = normal + (damping_scale * scale)[:, np.newaxis, np.newaxis] * np.eye(dh.shape[-1])
    rhs = (adjoint * h[:, :, np.newaxis]).sum(axis=1)
    nu, solved = _small_solve(normal, rhs)

    mixed = g - (dg * nu[:, np.newaxis, :]).sum(axis=2)
    # All-zero differences or a singular system fall back to the plain step
    return np.where((solved & (scale > 0))[:, np.newaxis], mixed, g)


def anderson_update(history: AndersonHistory, g_val: np.ndarray, e_prev: np.ndarray,
                    damping_scale: float = DAMPING_SCALE) -> np.ndarray:
    """
    Damped Anderson mixing step

    Solves nu = argmin ||h - dH nu||^2 + lambda ||nu||^2 with
    lambda = damping_scale * max |dH| and returns g(e) - dG nu.

    Args:
        history (AndersonHistory): Mixing window, updated in place with this step
        g_val (np.ndarray): Fixed-point map evaluated at e_prev
        e_prev (np.ndarray): Current iterate
        damping_scale (float): Multiplier of the damping parameter

    Returns:
        np.ndarray: Next iterate
    """
    g_val = np.asarray(g_val, dtype=complex)
    history.push(g_val - e_prev, g_val)
    if len(history) == 0:
        return g_val.copy()
    residuals = np.stack(history.residuals, axis=-1)[np.newaxis]
    values = np.stack(history.values, axis=-1)[np.newaxis]
    return _mix(residuals, values, damping_scale)[0]


def stieltjes_companion(m: complex, z: complex, gamma: float) -> complex:
    """Stieltjes transform of the companion N x N matrix, gamma m + (gamma - 1) / z"""
    if z == 0:
        raise ValueError("Companion transform is undefined at z=0")
    return gamma * m + (gamma - 1) / z


def _restart_level(state: Dict[str, np.ndarray], rows) -> None:
    # The map changed with xi: forget the mixing window and the previous residual
    state["stored"][rows] = 0
    state["previous"][rows] = -np.inf
    state["level_iterations"][rows] = 0


def _anderson_sweep(state: Dict[str, np.ndarray], rows, g: np.ndarray, e_prev: np.ndarray,
                    damping_scale: float) -> np.ndarray:
    """Push g into every selected window and return the mixed iterates"""
    residuals, values = state["residuals"], state["values"]
    width = residuals.shape[-1]
    if width > 1:
        residuals[rows, :, :-1] = residuals[rows, :, 1:]
        values[rows, :, :-1] = values[rows, :, 1:]
    residuals[rows, :, -1] = g - e_prev
    values[rows, :, -1] = g
    stored = np.minimum(state["stored"][rows] + 1, width)
    state["stored"][rows] = stored

    window_r, window_v = residuals[rows], values[rows]
    if width > 1 and stored.min() == width:
        return _mix(window_r, window_v, damping_scale)
    e_next = g.copy()
    for n in range(1, width):
        group = stored == n + 1
        if group.any():
            e_next[group] = _mix(window_r[group][..., -(n + 1):], window_v[group][..., -(n + 1):], damping_scale)
    return e_next


def solve_batch(xs: Sequence[float], mixture: PopulationMixture, config: SolverConfig,
                warm_starts: Optional[Sequence[Optional[np.ndarray]]] = None,
                continuation: bool = True) -> List[PointSolution]:
    """
    Solve the mixture system at many abscissae by homotopy continuation

    Every abscissa keeps its own xi schedule, Anderson window and
    iteration counters; one sweep advances every unfinished abscissa by
    one iteration and finished ones drop out of the working set. The
    offset starts at xi0^2 and xi is divided by beta whenever the update
    size stops growing, never going below epsilon. Iterations end once
    xi == epsilon and the update size is below epsilon.

    Args:
        xs (Sequence[float]): Real abscissae
        mixture (PopulationMixture): Problem definition
        config (SolverConfig): Solver constants
        warm_starts (Optional[Sequence]): Initial auxiliary vector per abscissa, None entries start at i
        continuation (bool): Start at xi0; when False start directly at epsilon

    Returns:
        List[PointSolution]: One solution per abscissa, in input order
    """
    x_all = np.asarray(xs, dtype=float).ravel()
    total = len(x_all)
    if total == 0:
        return []

    eps, beta, xi0 = config.epsilon, config.beta, config.xi0
    level_cap = config.max_iters_per_level
    width = config.q_cap + 1
    start_xi = xi0 if continuation else eps

    e0 = np.full((total, mixture.num_populations), 1j)
    if warm_starts is not None:
        for p, start in enumerate(warm_starts):
            if start is not None:
                e0[p] = np.asarray(start, dtype=complex)

    live: Dict[str, np.ndarray] = {
        "index": np.arange(total),
        "x": x_all.copy(),
        "xi": np.full(total, start_xi),
        "e": e0,
        "best_e": e0.copy(),
        "best_residual": np.full(total, np.inf),
        "residual": np.full(total, np.inf),
        "previous": np.full(total, -np.inf),
        "residuals": np.zeros((total, e0.shape[1], width), dtype=complex),
        "values": np.zeros((total, e0.shape[1], width), dtype=complex),
        "stored": np.zeros(total, dtype=int),
        "level_iterations": np.zeros(total, dtype=int),
        "iterations": np.zeros(total, dtype=int),
        "backoffs": np.zeros(total, dtype=int),
    }
    out_e = np.empty_like(e0)
    out_xi = np.empty(total)
    out_residual = np.empty(total)
    out_iterations = np.empty(total, dtype=int)
    out_backoffs = np.empty(total, dtype=int)
    out_converged = np.zeros(total, dtype=bool)
    paths = [[start_xi] for _ in range(total)]

    while len(live["index"]):
        s = live
        g, _, ok = resolvent_traces_batch(s["e"], s["x"] + 1j * s["xi"] ** 2, mixture)
        done = np.zeros(len(ok), dtype=bool)

        broken = ~ok
        if broken.any():
            exhausted = broken & (s["backoffs"] >= config.max_backoffs)
            done |= exhausted
            retry = broken & ~exhausted
            s["backoffs"][retry] += 1
            s["xi"][retry] = np.minimum(s["xi"][retry] * beta, xi0)
            restore = retry & np.isfinite(s["best_residual"])
            s["e"][restore] = s["best_e"][restore]
            _restart_level(s, retry)
            for p in np.flatnonzero(retry):
                paths[s["index"][p]].append(float(s["xi"][p]))
            if exhausted.any():
                logger.warning(f"Giving up at {int(exhausted.sum())} abscissae after {config.max_backoffs} backoffs")

        rows = slice(None) if ok.all() else ok
        e_prev = s["e"][rows]
        e_next = _anderson_sweep(s, rows, g[rows], e_prev, config.damping_scale)
        residual = np.abs(e_next - e_prev).max(axis=1)
        s["e"][rows] = e_next
        s["residual"][rows] = residual
        s["iterations"][rows] += 1
        s["level_iterations"][rows] += 1
        better = np.zeros(len(ok), dtype=bool)
        better[rows] = residual < s["best_residual"][rows]
        s["best_e"][better] = s["e"][better]
        s["best_residual"][better] = s["residual"][better]

        xi, res, previous = s["xi"], s["residual"], s["previous"]
        converged = ok & (xi <= eps) & (res < eps)
        open_rows = ok & ~converged
        level_exhausted = np.zeros(len(ok), dtype=bool)
        if level_cap is not None:
            level_exhausted = open_rows & (s["level_iterations"] >= level_cap)
        descend = open_rows & (xi > eps) & ((res <= previous) | level_exhausted)
        if descend.any():
            lowered = xi[descend] / beta
            xi[descend] = np.where(lowered <= eps * (1 + 1e-9), eps, lowered)
            _restart_level(s, descend)
            s["best_residual"][descend] = np.inf
            for p in np.flatnonzero(descend):
                paths[s["index"][p]].append(float(xi[p]))
        stalled = open_rows & ~descend & level_exhausted
        waiting = open_rows & ~descend & ~stalled
        previous[waiting] = res[waiting]

        done |= converged | stalled | (s["iterations"] >= config.iteration_cap)
        if done.any():
            target = s["index"][done]
            finished = converged[done]
            out_e[target] = np.where(finished[:, np.newaxis], s["e"][done], s["best_e"][done])
            out_xi[target] = xi[done]
            out_residual[target] = np.where(finished, res[done], s["best_residual"][done])
            out_iterations[target] = s["iterations"][done]
            out_backoffs[target] = s["backoffs"][done]
            out_converged[target] = finished
            keep = ~done
            live = {name: array[keep] for name, array in s.items()}

    _, m, ok = resolvent_traces_batch(out_e, x_all + 1j * out_xi ** 2, mixture)
    m = np.where(ok, m, complex(np.nan, np.nan))
    out_converged &= ok
    f = np.where(np.isfinite(m.imag), m.imag / np.pi, 0.0)

    negative = f < -10 * eps
    if negative.any():
        logger.warning(f"Clamping negative densities at {int(negative.sum())} abscissae, lowest {f.min():.3g}")
    if not out_converged.all():
        logger.debug(f"{int((~out_converged).sum())} of {total} abscissae did not converge")

    return [
        PointSolution(
            x=float(x_all[p]),
            e=out_e[p],
            m=complex(m[p]),
            f=float(max(f[p], 0.0)),
            iterations=int(out_iterations[p]),
            converged=bool(out_converged[p]),
            residual=float(out_residual[p]),
            backoffs=int(out_backoffs[p]),
            xi_path=tuple(paths[p]),
        )
        for p in range(total)
    ]


def solve_point(x: float, mixture: PopulationMixture, config: SolverConfig,
                warm_start: Optional[np.ndarray] = None, continuation: bool = True) -> PointSolution:
    """Solve the mixture system at z = x + i epsilon^2; see solve_batch"""
    starts = None if warm_start is None else [warm_start]
    return solve_batch([x], mixture, config, starts, continuation)[0]
