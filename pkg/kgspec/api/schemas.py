from typing import Any, Dict, List, Optional
from pydantic import BaseModel, Field
from datetime import datetime

from ..models import ProfileSpec


class HealthResponse(BaseModel):
    status: str
    service: str
    timestamp: datetime = Field(default_factory=datetime.now)


class ClassifyRequest(BaseModel):
    profile: ProfileSpec
    T_max: float = Field(default=1e4, gt=10.0)
    tol: float = Field(default=0.1, gt=0.0)


class ClassifyResponse(BaseModel):
    label: str
    kind: Optional[str] = None
    determined: bool
    scattering_integral: Dict[str, Any]
    mu_limit: Dict[str, Any]
    confidence: Dict[str, bool]
    notes: List[str] = []


class RatePredictRequest(BaseModel):
    alpha: Optional[float] = None
    mu: Optional[float] = None
    A0: float = Field(default=1.0, gt=0.0)
    ell: Optional[float] = None
    mu_tilde: Optional[float] = None
    q: float = Field(default=2.0, ge=1.0, le=2.0)
    kappa: float = Field(default=0.0, ge=0.0, le=1.0)
    n: int = Field(default=1, ge=1)


class RunResponse(BaseModel):
    run_id: str
    run_dir: str
    passed: bool
    summary: Dict[str, Any]


class RunListResponse(BaseModel):
    total: int
    runs: List[Dict[str, Any]]
