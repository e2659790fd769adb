from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from src.exceptions import ConfigError
from src.schemas.grid_schemas import GridSpec
from src.schemas.model_schemas import SFNOConfig
from src.schemas.solver_schemas import SWEParams
from src.schemas.training_schemas import TrainConfig


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_samples: int = Field(default=32, ge=1)
    n_leads: int = Field(default=2, ge=1, description="Stored lead steps per trajectory")
    lead_time_hours: float = Field(default=1.0, gt=0)
    seed: int = 0
    validation_fraction: float = Field(default=0.25, ge=0, lt=1)


class EvaluationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    leads: Optional[List[int]] = Field(default=None, description="Lead steps to score; all stored leads when unset")
    rollout_steps: int = Field(default=10, ge=0)
    write_csv: bool = True


class RunConfig(BaseModel):
    """Declarative run description; unknown keys are rejected at every level."""

    model_config = ConfigDict(extra="forbid")

    grid: GridSpec = Field(default_factory=GridSpec)
    model: SFNOConfig = Field(default_factory=SFNOConfig)
    solver: SWEParams = Field(default_factory=SWEParams)
    data: DataConfig = Field(default_factory=DataConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)

    @classmethod
    def load(cls, path: Optional[str]) -> "RunConfig":
        if path is None:
            return cls()
        from src.utils.serialization import read_json

        try:
            payload = read_json(path)
        except (OSError, ValueError) as e:
            raise ConfigError(f"Cannot read config '{path}': {e}")
        return cls.model_validate(payload)

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Applies `section.key` overrides (None values are skipped) and re-validates."""
        payload = self.model_dump(mode="json")
        for dotted, value in overrides.items():
            if value is None:
                continue
            node = payload
            *parents, leaf = dotted.split(".")
            for key in parents:
                node = node.setdefault(key, {})
            node[leaf] = value
        return RunConfig.model_validate(payload)

    def resolved_model(self) -> SFNOConfig:
        """Model config bound to the run grid."""
        return SFNOConfig.model_validate({**self.model.model_dump(mode="json"), "grid": self.grid.model_dump(mode="json")})
