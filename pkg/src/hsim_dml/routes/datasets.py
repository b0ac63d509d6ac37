"""Dataset routes for synthetic data generation."""

from typing import Literal

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from ..tools.datasets import generate_dataset

router = APIRouter(prefix="/datasets", tags=["datasets"])


# Request models
class GenerateDatasetRequest(BaseModel):
    name: str = Field("dataset", description="File stem under the output root")
    superclasses: int = Field(5, ge=1, description="Number of superclasses")
    subclasses_per_super: int = Field(4, ge=1, description="Classes per superclass")
    samples_per_class: int = Field(60, ge=2, description="Samples per class")
    dim: int = Field(32, ge=1, description="Feature dimension")
    seed: int = Field(0, description="Generator seed")
    format: Literal["binary", "csv"] = Field("binary", description="File format")


# Route handlers
@router.post("/generate", summary="Generate dataset", description="Generate a synthetic hierarchical dataset")
async def generate_dataset_endpoint(request: GenerateDatasetRequest):
    """Generate a synthetic hierarchical dataset."""
    try:
        result = await generate_dataset(**request.model_dump())
        return {"status": "success", "data": result}
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e)) from e
