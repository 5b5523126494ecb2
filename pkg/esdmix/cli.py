from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union
import argparse
import json
import logging
import sys

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from esdmix.config import LOG_LEVEL, OUTPUT_DIR
from esdmix.exceptions import EsdError, SpecError
from esdmix.metrics import MetricsTracker
from esdmix.models import CovarianceSource, PopulationMixture, TestProblem, build_test_problem, load_covariances
from esdmix.montecarlo import ks_distance, sample_spectrum, write_eigenvalues
from esdmix.parallel import available_workers
from esdmix.pipeline import DensityEstimate, compute_esd
from esdmix.solver import SolverConfig

logger = logging.getLogger(__name__)

DENSITY_HEADER = "x,f,re_m,im_m,converged"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_SPEC_ERROR = 2
EXIT_NONCONVERGED = 3


class MonteCarloSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    samples: Optional[int] = Field(default=None, ge=1)
    trials: int = Field(default=20, ge=0)
    seed: int = Field(default=0, ge=0)


class OutputSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    path: str = str(OUTPUT_DIR / "esd.csv")
    eigenvalues_path: Optional[str] = None
    metrics_path: Optional[str] = None


class RunSpec(BaseModel):
    """One run: a problem source, solver overrides, simulation settings and outputs"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: Literal["esd", "montecarlo", "compare"] = "esd"
    problem: Optional[TestProblem] = None
    covariances: Optional[CovarianceSource] = None
    solver: SolverConfig = Field(default_factory=SolverConfig)
    montecarlo: MonteCarloSettings = Field(default_factory=MonteCarloSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    @model_validator(mode="after")
    def _check_source(self) -> "RunSpec":
        if (self.problem is None) == (self.covariances is None):
            raise ValueError("exactly one of 'problem' or 'covariances' is required")
        return self


def parse_run_spec(data: Dict[str, Any]) -> RunSpec:
    """
    Validate a decoded run description

    Args:
        data (Dict[str, Any]): Decoded JSON object

    Returns:
        RunSpec: Validated run description
    """
    if not isinstance(data, dict):
        raise SpecError(f"Run spec must be a JSON object, got {type(data).__name__}")
    if "problem" not in data and "covariances" not in data:
        raise SpecError("Missing key 'problem' (or 'covariances')", key="problem")
    try:
        return RunSpec.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or None
        raise SpecError(f"Invalid run spec: {first['msg']}", key=key) from e


def load_run_spec(path: Union[str, Path]) -> RunSpec:
    """Read and validate a JSON run spec; an empty file counts as {}"""
    try:
        text = Path(path).read_text()
    except OSError as e:
        logger.error(f"Error reading run spec: {str(e)}")
        raise SpecError(f"Cannot read run spec '{path}': {str(e)}") from e
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise SpecError(f"Malformed JSON: {e.msg}", line=e.lineno) from e
    return parse_run_spec(data)


def build_mixture(spec: RunSpec, base_dir: Optional[Union[str, Path]] = None) -> PopulationMixture:
    """Mixture of the spec's test problem, built at least solver.min_dimension wide, or of its covariance files"""
    if spec.problem is not None:
        return build_test_problem(spec.problem, min_dimension=spec.solver.min_dimension)
    return load_covariances(spec.covariances, base_dir)


def write_density_table(estimate: DensityEstimate, path: Union[str, Path]) -> None:
    """Write x, f, Re m, Im m and the convergence flag, one grid point per row"""
    m = estimate.stieltjes
    table = np.column_stack([estimate.points, estimate.density, m.real, m.imag, estimate.converged.astype(int)])
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, table, fmt=["%.17g"] * 4 + ["%d"], delimiter=",", header=DENSITY_HEADER, comments="")
        logger.info(f"Wrote {len(table)} rows to {path}")
    except OSError as e:
        logger.error(f"Error writing density table: {str(e)}")
        raise


def read_density_table(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Parse a density table back into named columns"""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    columns = dict(zip(DENSITY_HEADER.split(","), table.T))
    columns["converged"] = columns["converged"].astype(bool)
    return columns


def run(spec: RunSpec, base_dir: Optional[Union[str, Path]] = None, workers: int = 1, strict: bool = False,
        tracker: Optional[MetricsTracker] = None) -> int:
    """
    Execute a run spec and write its outputs

    Args:
        spec (RunSpec): Validated run description
        base_dir (Optional[Union[str, Path]]): Directory covariance files are resolved against
        workers (int): Worker processes
        strict (bool): Fail when any grid point did not converge
        tracker (Optional[MetricsTracker]): Receives the density run metrics

    Returns:
        int: Exit status
    """
    tracker = tracker or MetricsTracker()
    mixture = build_mixture(spec, base_dir)
    estimate = None

    if spec.mode in ("esd", "compare"):
        estimate = compute_esd(mixture, spec.solver, workers=workers, tracker=tracker)
        write_density_table(estimate, spec.output.path)

    if spec.mode in ("montecarlo", "compare"):
        settings = spec.montecarlo
        spectrum = sample_spectrum(mixture, settings.samples, settings.trials, settings.seed, workers=workers)
        eigenvalues_path = spec.output.eigenvalues_path or str(Path(spec.output.path).with_suffix(".eig.txt"))
        Path(eigenvalues_path).parent.mkdir(parents=True, exist_ok=True)
        write_eigenvalues(spectrum, eigenvalues_path)
        if estimate is not None:
            print(f"ks_distance={ks_distance(spectrum, estimate):.6g} mass={estimate.mass:.6g}")

    if spec.output.metrics_path and tracker.metrics_history:
        tracker.export_metrics(spec.output.metrics_path)

    if strict and estimate is not None and estimate.diagnostics.nonconverged:
        print(f"error: {len(estimate.diagnostics.nonconverged)} grid points did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esdmix", description="Limiting spectral densities of population mixtures")
    parser.add_argument("--spec", required=True, help="JSON run spec")
    parser.add_argument("--mode", choices=["esd", "montecarlo", "compare"], help="override the spec mode")
    parser.add_argument("--out", help="density table path")
    parser.add_argument("--epsilon", type=float, help="target accuracy")
    parser.add_argument("--levels", type=int, help="regrid rounds")
    parser.add_argument("--seed", type=int, help="Monte Carlo seed")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials")
    parser.add_argument("--workers", type=int, default=available_workers(), help="worker processes, 0 for all CPUs")
    parser.add_argument("--strict", action="store_true", help="exit 3 if any grid point did not converge")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="logging level")
    return parser


def _apply_overrides(spec: RunSpec, args: argparse.Namespace) -> RunSpec:
    data = spec.model_dump(exclude_unset=True)
    if args.mode:
        data["mode"] = args.mode
    if args.out:
        data.setdefault("output", {})["path"] = args.out
    for name in ("epsilon", "levels"):
        if getattr(args, name) is not None:
            data.setdefault("solver", {})[name] = getattr(args, name)
    for name in ("seed", "trials"):
        if getattr(args, name) is not None:
            data.setdefault("montecarlo", {})[name] = getattr(args, name)
    return parse_run_spec(data)


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper())

    try:
        spec = _apply_overrides(load_run_spec(args.spec), args)
        return run(spec, base_dir=Path(args.spec).resolve().parent, workers=args.workers, strict=args.strict)
    except SpecError as e:
        print(f"error: {str(e)}", file=sys.stderr)
        return EXIT_SPEC_ERROR
    except (EsdError, OSError, ValueError) as e:
        logger.error(f"Run failed: {str(e)}")
        print(f"error: {str(e)}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
