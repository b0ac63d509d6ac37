"""Experiment routes for training runs, ablations and evaluation."""

from typing import Any

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from ..config import parse_experiment_config
from ..errors import HsimError
from ..tools.experiments import evaluate_checkpoint, run_ablation_study, run_experiment, run_noise_sweep

router = APIRouter(prefix="/experiments", tags=["experiments"])


# Request models
class ExperimentRequest(BaseModel):
    config: dict[str, Any] = Field(default_factory=dict, description="Experiment configuration")
    name: str | None = Field(None, description="Run name and output directory")


class AblationRequest(ExperimentRequest):
    seeds: list[int] | None = Field(None, description="Seeds shared by every row")


class NoiseSweepRequest(ExperimentRequest):
    ratios: list[float] | None = Field(None, description="Training-label noise ratios")
    seeds: list[int] | None = Field(None, description="Seeds shared by every row")


class EvaluateRequest(BaseModel):
    checkpoint: str = Field(..., description="Checkpoint path relative to the output root")
    config: dict[str, Any] = Field(default_factory=dict, description="Dataset and evaluation settings")


def _validate(config: dict[str, Any]) -> None:
    try:
        parse_experiment_config(config)
    except HsimError as e:
        raise HTTPException(status_code=422, detail=str(e)) from e


# Route handlers
@router.post("/run", summary="Run experiment", description="Train and evaluate one configuration")
async def run_experiment_endpoint(request: ExperimentRequest):
    """Train and evaluate one configuration."""
    _validate(request.config)
    try:
        result = await run_experiment(**request.model_dump())
        return {"status": "success", "data": result}
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e)) from e


@router.post("/ablation", summary="Run ablation", description="Run the component ablation grid")
async def run_ablation_endpoint(request: AblationRequest):
    """Run the component ablation grid."""
    _validate(request.config)
    try:
        result = await run_ablation_study(**request.model_dump())
        return {"status": "success", "data": result}
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e)) from e


@router.post("/noise-sweep", summary="Run noise sweep", description="Baseline against the full method across noise ratios")
async def run_noise_sweep_endpoint(request: NoiseSweepRequest):
    """Compare baseline and full method across noise ratios."""
    _validate(request.config)
    try:
        result = await run_noise_sweep(**request.model_dump())
        return {"status": "success", "data": result}
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e)) from e


@router.post("/evaluate", summary="Evaluate checkpoint", description="Recall@K of a saved checkpoint")
async def evaluate_checkpoint_endpoint(request: EvaluateRequest):
    """Evaluate a saved checkpoint on the clean test split."""
    _validate(request.config)
    try:
        result = await evaluate_checkpoint(**request.model_dump())
        return {"status": "success", "data": result}
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e)) from e
