from typing import Any, Dict
import logging

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from esdmix.cli import build_mixture, parse_run_spec
from esdmix.config import LOG_LEVEL
from esdmix.exceptions import InvalidProblemError, SpecError
from esdmix.metrics import MetricsTracker
from esdmix.montecarlo import ks_distance, sample_spectrum
from esdmix.pipeline import compute_esd

# Configure logging
logging.basicConfig(level=LOG_LEVEL)
logger = logging.getLogger(__name__)

app = FastAPI(title="esdmix", description="Limiting spectral densities of population mixtures")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

metrics_tracker = MetricsTracker()


def _estimate_payload(estimate) -> Dict[str, Any]:
    m = estimate.stieltjes
    diagnostics = estimate.diagnostics
    return {
        "x": estimate.points.tolist(),
        "f": estimate.density.tolist(),
        "re_m": m.real.tolist(),
        "im_m": m.imag.tolist(),
        "converged": estimate.converged.tolist(),
        "mass": estimate.mass,
        "segments": [[s.lo, s.hi, s.eig_count] for s in estimate.segments],
        "diagnostics": {
            "total_iterations": int(diagnostics.iterations.sum()),
            "nonconverged": diagnostics.nonconverged,
            "level_sizes": diagnostics.level_sizes,
            "mass_warning": diagnostics.mass_warning,
            "runtime": diagnostics.runtime,
        },
    }


def _spectrum(spec, mixture):
    settings = spec.montecarlo
    return sample_spectrum(mixture, settings.samples, settings.trials, settings.seed)


def _handle(endpoint: str, body: Dict[str, Any], work) -> Dict[str, Any]:
    try:
        spec = parse_run_spec(body)
        return work(spec, build_mixture(spec))
    except (SpecError, InvalidProblemError) as e:
        logger.info(f"Rejected {endpoint} request: {str(e)}")
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.error(f"Error in {endpoint}: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Error in {endpoint}: {str(e)}")


@app.get("/")
def root():
    return {"message": "esdmix service: POST a run spec to /esd/, /montecarlo/ or /compare/"}


@app.post("/esd/")
def esd(body: Dict[str, Any]):
    """Compute the limiting density of the posted problem"""
    def work(spec, mixture):
        return _estimate_payload(compute_esd(mixture, spec.solver, tracker=metrics_tracker))
    return _handle("esd", body, work)


@app.post("/montecarlo/")
def montecarlo(body: Dict[str, Any]):
    """Simulate the posted problem and return the pooled eigenvalues"""
    def work(spec, mixture):
        spectrum = _spectrum(spec, mixture)
        values = spectrum.eigenvalues
        return {
            "count": len(values),
            "dimension": spectrum.dimension,
            "samples": spectrum.samples,
            "trials": spectrum.trials,
            "mean": float(values.mean()) if len(values) else None,
            "eigenvalues": values.tolist(),
        }
    return _handle("montecarlo", body, work)


@app.post("/compare/")
def compare(body: Dict[str, Any]):
    """Compute the density and compare it against a simulated spectrum"""
    def work(spec, mixture):
        estimate = compute_esd(mixture, spec.solver, tracker=metrics_tracker)
        spectrum = _spectrum(spec, mixture)
        return {"ks_distance": ks_distance(spectrum, estimate), "mass": estimate.mass}
    return _handle("compare", body, work)


@app.get("/metrics/")
def metrics():
    return metrics_tracker.get_metrics_summary()
