"""
Persisted records: per-sample task results, sampler trajectories and metric
reports. Field order is the CSV column order.
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

TaskMode = Literal["gas", "gat", "gap", "fgsm", "pgd-l2", "pgd-linf"]

TASK_RESULT_COLUMNS = [
    "index",
    "mode",
    "y_true",
    "y_target",
    "y_pred_before",
    "y_pred_after",
    "success",
    "l2",
    "linf",
    "restarts",
    "seed",
]


# Per-sample outcome of an attack or purification
class TaskResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    index: int
    mode: TaskMode
    y_true: Optional[int] = None
    y_target: Optional[int] = None
    y_pred_before: Optional[int] = None
    y_pred_after: Optional[int] = None
    success: Optional[bool] = None
    l2: Optional[float] = Field(default=None, ge=0)
    linf: Optional[float] = Field(default=None, ge=0)
    restarts: int = Field(default=0, ge=0)
    seed: int
    rejected: bool = Field(default=False, description="Input misclassified before the attack")
    output: Optional[Any] = Field(default=None, exclude=True)
    trajectory: Optional[List[Any]] = Field(default=None, exclude=True)

    def row(self) -> Dict[str, Any]:
        return self.model_dump(include=set(TASK_RESULT_COLUMNS))


class TrajectoryRow(BaseModel):
    step: int
    t: float
    score_norm: float
    guidance_norm_y: float = 0.0
    guidance_norm_x: float = 0.0


TRAJECTORY_COLUMNS = list(TrajectoryRow.model_fields.keys())


class MetricReport(BaseModel):
    """Benchmark summary; key names are stable."""

    attack: str
    defense: str
    scale_param: Optional[str] = None
    scale: Optional[float] = None
    clean_acc: float = Field(ge=0, le=1)
    purified_clean_acc: Optional[float] = Field(default=None, ge=0, le=1)
    adv_acc: float = Field(ge=0, le=1)
    robust_acc: float = Field(ge=0, le=1)
    median_l2: Optional[float] = None
    median_linf: Optional[float] = None
    frechet: Optional[float] = Field(default=None, ge=0)
    n_samples: int = Field(ge=0)
    n_rejected: int = Field(default=0, ge=0)
    config: Dict[str, Any] = Field(default_factory=dict)

    def summary_row(self) -> Dict[str, Any]:
        return self.model_dump(exclude={"config"})


METRIC_COLUMNS = [name for name in MetricReport.model_fields.keys() if name != "config"]


class RunManifest(BaseModel):
    command: str
    code_version: str
    config_hash: str
    seed: int
    artifacts: List[str] = Field(default_factory=list)
    config: Dict[str, Any] = Field(default_factory=dict)
