from pydantic import BaseModel, Field
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

U64_MAX = (1 << 64) - 1


class StageSpec(BaseModel):
    """One pipeline stage: a catalog plugin and its config"""
    plugin: str = Field(..., min_length=1, description="Plugin name in the transform catalog")
    config: Dict[str, Any] = Field(default_factory=dict)


class PipelineSpec(BaseModel):
    """Ordered transform pipeline; also the registry's per-image template"""
    master_seed: int = Field(default=0, ge=0, le=U64_MAX)
    stages: List[StageSpec] = Field(default_factory=list)

    def with_seed(self, master_seed: int) -> "PipelineSpec":
        return self.model_copy(update={"master_seed": master_seed})


class PoolPolicy(BaseModel):
    """Replenishment and expiration policy of one image's variant pool"""
    target_pool_size: int = Field(default=4, ge=1)
    max_deploys_per_variant: Optional[int] = Field(default=1, ge=1, description="None means unlimited")
    variant_ttl: Optional[float] = Field(default=None, gt=0, description="Seconds; None disables TTL")
    generator_parallelism: int = Field(default=2, ge=1)
    on_empty: Literal["reuse_least_deployed", "reject"] = "reuse_least_deployed"


# ---------------------------------------------------------------- simulator

class PoissonArrival(BaseModel):
    kind: Literal["poisson"] = "poisson"
    rate: float = Field(..., gt=0, description="Requests per second")


class TraceArrival(BaseModel):
    kind: Literal["trace"] = "trace"
    file: str = Field(..., description="CSV file with a request timestamp column")
    column: str = "time"


class FixedGeneration(BaseModel):
    kind: Literal["fixed"] = "fixed"
    seconds: float = Field(..., ge=0)


class LognormalGeneration(BaseModel):
    kind: Literal["lognormal"] = "lognormal"
    mu: float
    sigma: float = Field(..., ge=0)


ArrivalModel = Annotated[Union[PoissonArrival, TraceArrival], Field(discriminator="kind")]
GenerationModel = Annotated[Union[FixedGeneration, LognormalGeneration], Field(discriminator="kind")]


class SimConfig(BaseModel):
    """Discrete-event simulation of one image's pool under a request load"""
    arrival: ArrivalModel
    generation_time: GenerationModel
    policy: PoolPolicy = Field(default_factory=PoolPolicy)
    horizon: float = Field(..., gt=0, description="Simulated seconds")
    rng_seed: int = Field(default=0, ge=0, le=U64_MAX)
    variant_size_bytes: int = Field(default=4096, ge=0)
    warmup: bool = Field(default=True, description="Pre-fill the pool before t = 0")
    event_log: Optional[str] = Field(default=None, description="CSV path for the per-event log")
    time_scale: float = Field(default=1.0, gt=0, description="Wall seconds per simulated second in replay")


class SimResultModel(BaseModel):
    requests: int
    served: int
    rejected: int
    fresh_serves: int
    uniqueness_ratio: float = Field(ge=0.0, le=1.0)
    repeat_serve_probability: float = Field(ge=0.0, le=1.0)
    pool_empty_fraction: float = Field(ge=0.0, le=1.0)
    mean_storage_bytes: float
    max_storage_bytes: int
    generations_completed: int
    replacement_rate: float


# ---------------------------------------------------------------- registry API

class PutImageRequest(BaseModel):
    """Request model for storing a base image"""
    image: str = Field(..., min_length=1, description="Base64 .disa image")
    pipeline: Optional[PipelineSpec] = Field(None, description="Defaults to the configured pipeline")
    policy: Optional[PoolPolicy] = Field(None, description="Defaults to the configured policy")


class PutImageResponse(BaseModel):
    name: str
    status: str
    replaced: bool
    expired: int
    digest: str
    target_pool_size: int


class UpdatePipelineRequest(BaseModel):
    pipeline: PipelineSpec


class AcquireResponse(BaseModel):
    """One served variant"""
    variant_id: str
    image_name: str
    master_seed: int
    digest: str
    image: str = Field(description="Base64 .disa image")
    deploy_count: int
    fresh: bool = Field(description="True when this serve was the variant's first deployment")


class SweepResponse(BaseModel):
    expired: int


class GenerationStats(BaseModel):
    count: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float


class ImageMetrics(BaseModel):
    name: Optional[str] = None
    storage_bytes: int
    storage_by_state: Dict[str, int]
    variants_by_state: Dict[str, int]
    generation_ms: GenerationStats
    replacement_rate: float = Field(description="Completed generations per second since the image was put")
    uniqueness_ratio: float = Field(ge=0.0, le=1.0)
    pool_empty_fraction: float = Field(ge=0.0, le=1.0)
    acquire_count: int
    empty_pool_events: int


class RegistryMetricsResponse(BaseModel):
    aggregate: ImageMetrics
    images: Dict[str, ImageMetrics]


class ImageSummary(BaseModel):
    name: str
    digest: str
    pipeline: PipelineSpec
    policy: PoolPolicy
    variants_by_state: Dict[str, int]


class HealthResponse(BaseModel):
    """Health check response"""
    status: str
    images: int
    message: str


class ErrorResponse(BaseModel):
    error: str
    code: str
