from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from src.schemas.grid_schemas import GridSpec
from src.schemas.model_schemas import SFNOConfig
from src.schemas.solver_schemas import SWEParams


class ParameterEntry(BaseModel):
    name: str
    shape: List[int]
    offset: int = Field(..., ge=0, description="Offset into the payload in float64 values")


class ChannelStats(BaseModel):
    mean: float
    std: float = Field(..., gt=0)


class CheckpointManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: str
    code_version: str
    model: SFNOConfig
    parameters: List[ParameterEntry]
    payload_file: str
    payload_bytes: int
    payload_sha256: str
    normalization: Dict[str, ChannelStats] = Field(default_factory=dict)
    metadata: Dict[str, Any] = Field(default_factory=dict)
    config: Dict[str, Any] = Field(default_factory=dict)


class DatasetManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: str
    code_version: str
    grid: GridSpec
    channels: List[str]
    n_samples: int
    n_leads: int
    lead_time_hours: float
    steps_per_lead: int
    seed: int
    params: SWEParams
    normalization: Dict[str, ChannelStats]
    train_indices: List[int]
    validation_indices: List[int]
    samples_file: str
    samples_sha256: str
    climatology_file: str
    climatology_sha256: str
    config: Dict[str, Any] = Field(default_factory=dict)


class TrajectoryManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: str
    code_version: str
    grid: GridSpec
    channels: List[str]
    n_steps: int
    lead_time_hours: float
    payload_file: str
    payload_sha256: str
    checkpoint: Optional[str] = None
    config: Dict[str, Any] = Field(default_factory=dict)


class MetricsRecord(BaseModel):
    epoch: int
    stage: str
    n_steps: int
    lr: float
    train_loss: float
    val_loss: Optional[float] = None
    wall_time: float


class EvaluationRecord(BaseModel):
    channel: str
    lead_hours: float
    acc_mean: float
    acc_q1: float
    acc_q3: float
    rel_l1: float
    rel_l2: float


class EvaluationReport(BaseModel):
    format_version: str
    code_version: str
    checkpoint: str
    dataset: str
    grid_changed: bool = False
    records: List[EvaluationRecord]
    config: Dict[str, Any] = Field(default_factory=dict)
