"""
Run configuration document.

Every command reads one JSON ``RunConfig``; unknown keys are rejected at every
level so that typos fail loudly instead of silently falling back to defaults.
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from scoreag.diffusion.vpsde import NoiseSchedule


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# Dataset source
class DataConfig(_Section):
    source: Literal["shapes", "blobs", "idx"] = "shapes"
    num_classes: int = Field(default=10, ge=2)
    n_per_class: int = Field(default=100, ge=1)
    size: int = Field(default=16, ge=8, description="Image side length for the shapes dataset")
    separation: float = Field(default=6.0, ge=0, description="Blob centre distance in units of blob std")
    eval_fraction: float = Field(default=0.2, gt=0, lt=1)
    path: Optional[str] = Field(default=None, description="Pre-generated .npz dataset; overrides generation")
    idx_images: Optional[str] = None
    idx_labels: Optional[str] = None

    @model_validator(mode="after")
    def check_source(self) -> "DataConfig":
        if self.source == "blobs" and self.num_classes > 2:
            raise ValueError("the blobs dataset supports at most 2 classes")
        if self.source == "idx" and self.path is None and not (self.idx_images and self.idx_labels):
            raise ValueError("source 'idx' needs idx_images and idx_labels")
        return self


# Optimisation settings shared by both trainable models
class TrainConfig(_Section):
    epochs: int = Field(default=50, ge=1)
    batch_size: int = Field(default=64, ge=1)
    lr: float = Field(default=0.01, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=5e-4, ge=0)
    ema_decay: float = Field(default=0.995, ge=0, lt=1)
    lr_schedule: Literal["cyclic_cosine", "constant"] = "cyclic_cosine"
    cycle_epochs: Optional[int] = Field(default=None, ge=1, description="Cosine cycle length; defaults to epochs")
    seed: int = 0
    lambda_weighting: Literal["sigma2", "one"] = "sigma2"
    uncond_prob: float = Field(default=0.1, ge=0, le=1, description="Fraction of score batches trained unconditionally")


class ScoreModelConfig(_Section):
    hidden: int = Field(default=256, ge=1)
    depth: int = Field(default=3, ge=1)
    time_embed_dim: int = Field(default=32, ge=2)
    time_embed_scale: float = Field(default=30.0, gt=0, description="Top angular frequency of the time features")
    class_embed_dim: int = Field(default=16, ge=1)
    sigma_data: Optional[float] = Field(
        default=None, gt=0, description="Data scale of the skip term; root mean square of the training set when unset"
    )
    checkpoint: Optional[str] = None
    train: TrainConfig = Field(default_factory=lambda: TrainConfig(lr=0.01))

    @model_validator(mode="after")
    def check_embed(self) -> "ScoreModelConfig":
        if self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be even")
        return self


class ClassifierConfig(_Section):
    arch: Literal["conv", "mlp"] = "conv"
    channels: Tuple[int, int] = (8, 16)
    hidden: int = Field(default=64, ge=1)
    feature_dim: int = Field(default=64, ge=1)
    activation: Literal["relu", "silu", "tanh"] = "relu"
    checkpoint: Optional[str] = None
    train: TrainConfig = Field(default_factory=lambda: TrainConfig(lr=0.2))


class SamplerConfig(_Section):
    n_steps: int = Field(default=200, ge=1)
    kind: Literal["reverse-sde", "prob-flow-ode"] = "reverse-sde"
    t_start: float = Field(default=1.0, gt=0, le=1)
    t_end: Optional[float] = Field(default=None, description="Defaults to the schedule's t_eps")
    seed: int = 0
    stop_gradient_through_score: bool = False
    output_range: Optional[Tuple[float, float]] = (0.0, 1.0)
    divergence_threshold: float = Field(default=100.0, gt=0)
    record_every: int = Field(default=1, ge=1, description="Trajectory summary stride")

    def resolve_t_end(self, schedule: NoiseSchedule) -> float:
        return schedule.t_eps if self.t_end is None else self.t_end


# Task settings for synth / transform / purify
class TaskConfig(_Section):
    mode: Literal["gas", "gat", "gap"] = "gas"
    true_class: Optional[int] = Field(default=None, ge=1, description="GAS class; cycles through classes when unset")
    target_class: Optional[int] = Field(default=None, ge=1, description="Targeted mode when set")
    s_y: float = Field(default=1.0, ge=0)
    s_x: float = Field(default=10.0, ge=0)
    max_restarts: int = Field(default=4, ge=0)
    n_samples: int = Field(default=20, ge=1)
    weights: Literal["ema", "live"] = "ema"


class BaselineConfig(_Section):
    attack: Literal["fgsm", "pgd-l2", "pgd-linf"] = "pgd-linf"
    epsilon: float = Field(default=8 / 255, gt=0)
    step_size: Optional[float] = Field(default=None, gt=0, description="Defaults to 2.5 * epsilon / n_iter")
    n_iter: int = Field(default=40, ge=1)
    random_start: bool = True
    restarts: int = Field(default=2, ge=1)
    target_class: Optional[int] = Field(default=None, ge=1)
    n_samples: int = Field(default=100, ge=1)


class SweepConfig(_Section):
    param: Literal["s_x", "s_y", "epsilon"]
    values: List[float] = Field(min_length=1)


class EvalConfig(_Section):
    attack: Literal["none", "fgsm", "pgd-l2", "pgd-linf", "gat", "gas"] = "pgd-linf"
    defense: Literal["none", "gap"] = "none"
    defense_s_x: float = Field(default=10.0, ge=0)
    n_samples: int = Field(default=100, ge=1)
    sweep: Optional[SweepConfig] = None


class RunConfig(_Section):
    """The full JSON run document."""

    data: DataConfig = Field(default_factory=DataConfig)
    schedule: NoiseSchedule = Field(default_factory=NoiseSchedule)
    score_model: ScoreModelConfig = Field(default_factory=ScoreModelConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    task: TaskConfig = Field(default_factory=TaskConfig)
    baseline: BaselineConfig = Field(default_factory=BaselineConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    seed: int = 0
    out_dir: str = "runs/default"

    @model_validator(mode="after")
    def check_classes(self) -> "RunConfig":
        k = self.data.num_classes
        for name, value in (
            ("task.true_class", self.task.true_class),
            ("task.target_class", self.task.target_class),
            ("baseline.target_class", self.baseline.target_class),
        ):
            if value is not None and value > k:
                raise ValueError(f"{name}={value} exceeds num_classes={k}")
        t_end = self.sampler.resolve_t_end(self.schedule)
        if not self.sampler.t_start > t_end >= self.schedule.t_eps:
            raise ValueError(f"sampler needs t_start > t_end >= t_eps, got {self.sampler.t_start}, {t_end}")
        return self
