import logging
from datetime import datetime
from pathlib import Path

from fastapi import APIRouter, HTTPException
from fastapi.concurrency import run_in_threadpool

from .schemas import (
    ClassifyRequest,
    ClassifyResponse,
    HealthResponse,
    RatePredictRequest,
    RunListResponse,
    RunResponse,
)
from ..classify import classify
from ..coeffs import profile_from_spec
from ..config import settings
from ..database import Database
from ..errors import ConfigError, KGSpecError, PreconditionError
from ..lab import load_summary, run_experiment
from ..models import ExperimentConfig, RatePrediction, ScaleInvariantModel
from ..scaleinv import predict_rates

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

router = APIRouter()


def _client_error(e: KGSpecError) -> HTTPException:
    return HTTPException(status_code=422, detail=e.to_dict())


@router.get("/health", response_model=HealthResponse)
async def health_check():
    return HealthResponse(
        status="ok",
        service="kgspec",
        timestamp=datetime.now()
    )


@router.post("/classify", response_model=ClassifyResponse)
async def classify_profile(request: ClassifyRequest):
    try:
        profile = profile_from_spec(request.profile)
        result = await run_in_threadpool(classify, profile, request.T_max, request.tol)
        return ClassifyResponse(
            label=result.label,
            kind=result.kind.value if result.kind else None,
            determined=result.determined,
            scattering_integral=result.scattering_integral.model_dump(mode="json"),
            mu_limit=result.mu_limit.model_dump(mode="json"),
            confidence=result.confidence,
            notes=result.notes,
        )
    except (PreconditionError, ConfigError) as e:
        raise _client_error(e)
    except Exception as e:
        logger.error(f"Error classifying profile: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Classification error: {str(e)}")


@router.post("/rates/predict", response_model=RatePrediction)
async def predict(request: RatePredictRequest):
    try:
        if request.alpha is not None:
            model = ScaleInvariantModel(alpha=request.alpha, mu=request.mu or 0.0, A0=request.A0)
        elif request.ell is not None:
            model = ScaleInvariantModel.from_polynomial(request.ell, request.mu_tilde or 0.0)
        else:
            raise HTTPException(status_code=422, detail="alpha or ell is required")
        return predict_rates(model, q=request.q, kappa=request.kappa, n=request.n)
    except HTTPException:
        raise
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except KGSpecError as e:
        raise _client_error(e)
    except Exception as e:
        logger.error(f"Error predicting rates: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Prediction error: {str(e)}")


@router.post("/experiments", response_model=RunResponse)
async def run(config: ExperimentConfig):
    try:
        db = Database(settings.database_path)
        run_dir = await run_in_threadpool(run_experiment, config, None, db)
        summary = load_summary(run_dir)
        return RunResponse(run_id=summary.run_id, run_dir=str(run_dir), passed=summary.passed,
                           summary=summary.model_dump(mode="json"))
    except ConfigError as e:
        raise _client_error(e)
    except Exception as e:
        logger.error(f"Error running experiment: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Experiment error: {str(e)}")


@router.get("/runs", response_model=RunListResponse)
async def get_all_runs(pipeline: str = None):
    try:
        db = Database(settings.database_path)
        runs = db.get_all_runs(pipeline)
        return RunListResponse(total=len(runs), runs=runs)
    except Exception as e:
        logger.error(f"Error retrieving runs: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Database error: {str(e)}")


@router.get("/runs/{run_id}")
async def get_run(run_id: str):
    try:
        db = Database(settings.database_path)
        record = db.get_run(run_id)

        if not record:
            raise HTTPException(status_code=404, detail="Run not found")

        record['checks'] = db.get_checks(record['id'])
        if record.get('run_dir') and Path(record['run_dir']).exists():
            record['summary'] = load_summary(record['run_dir']).model_dump(mode="json")
        return record
    except HTTPException:
        raise
    except Exception as e:
        logger.error(f"Error retrieving run {run_id}: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Database error: {str(e)}")
