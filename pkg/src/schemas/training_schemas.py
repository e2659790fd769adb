from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TrainingStage(str, Enum):
    SINGLE_STEP = "single-step"
    FINETUNE = "finetune"


class ChannelReduction(str, Enum):
    SUM = "sum"
    MEAN = "mean"


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    stage: TrainingStage = TrainingStage.SINGLE_STEP
    p: float = Field(default=2.0, ge=1.0, description="Exponent of the geometric loss")
    channel_reduction: ChannelReduction = ChannelReduction.SUM
    n_steps: Optional[int] = Field(default=None, ge=1, description="Autoregressive depth; fine-tuning climbs 2..n_steps")
    epochs: int = Field(default=20, ge=1, description="Single-step epochs (one cosine cycle)")
    finetune_epochs_per_level: int = Field(default=5, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    finetune_lr: float = Field(default=1e-5, gt=0)
    batch_size: int = Field(default=4, ge=1)
    seed: int = 0
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    gradient_checkpointing: bool = False

    @model_validator(mode="after")
    def validate_steps(self):
        if self.stage == TrainingStage.SINGLE_STEP and self.n_steps not in (None, 1):
            raise ValueError("single-step training uses n_steps = 1")
        if self.stage == TrainingStage.FINETUNE and self.n_steps is not None and self.n_steps < 2:
            raise ValueError("fine-tuning needs n_steps >= 2")
        return self

    @property
    def resolved_n_steps(self) -> int:
        if self.n_steps is not None:
            return self.n_steps
        return 1 if self.stage == TrainingStage.SINGLE_STEP else 2
