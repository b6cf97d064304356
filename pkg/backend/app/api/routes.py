from fastapi import APIRouter, HTTPException, status
from typing import List, Optional
import base64
import binascii
import logging

from ..models.schemas import (
    AcquireResponse,
    HealthResponse,
    ImageMetrics,
    ImageSummary,
    PutImageRequest,
    PutImageResponse,
    RegistryMetricsResponse,
    SweepResponse,
    UpdatePipelineRequest,
)
from ..services.config import ServiceConfig
from ..services.registry import InvalidImageError, RegistryService

logger = logging.getLogger(__name__)

# Initialize router
router = APIRouter()

# Initialized at startup (or injected by tests)
registry_service: Optional[RegistryService] = None
service_config: Optional[ServiceConfig] = None


def initialize_services(config: Optional[ServiceConfig] = None,
                        registry: Optional[RegistryService] = None) -> RegistryService:
    """Initialize services at startup"""
    global registry_service, service_config

    service_config = config or ServiceConfig()
    if registry is None:
        logger.info(f"Opening registry at {service_config.data_dir}")
        registry = RegistryService(
            data_dir=service_config.data_dir,
            selection_seed=service_config.get("registry.selection_seed"),
        )
    registry_service = registry
    logger.info("✓ Registry service initialized")
    return registry


def shutdown_services() -> None:
    global registry_service
    if registry_service is not None:
        registry_service.shutdown(wait=False)
        registry_service = None


def _registry() -> RegistryService:
    if registry_service is None:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="Registry service not initialized"
        )
    return registry_service


@router.get("/healthz", response_model=HealthResponse)
def health_check():
    """Health check endpoint"""
    if registry_service is None:
        return HealthResponse(status="unhealthy", images=0, message="Registry not initialized")
    health = registry_service.health()
    return HealthResponse(
        status="healthy",
        images=health["images"],
        message=f"{health['in_flight']} generation(s) in flight",
    )


@router.get("/images", response_model=List[ImageSummary])
def list_images():
    return _registry().list_images()


@router.put("/images/{name}", response_model=PutImageResponse)
def put_image(name: str, request: PutImageRequest):
    """
    Store a base image

    Pipeline and policy default to the configured ones. Re-putting a name
    replaces the image and expires all of its variants.
    """
    try:
        blob = base64.b64decode(request.image, validate=True)
    except (binascii.Error, ValueError) as e:
        raise InvalidImageError(f"image is not valid base64: {e}") from e
    pipeline = request.pipeline or (service_config.default_pipeline if service_config else None)
    policy = request.policy or (service_config.default_policy if service_config else None)
    return _registry().put_image(name, blob, pipeline, policy)


@router.delete("/images/{name}")
def remove_image(name: str):
    return _registry().remove_image(name)


@router.put("/images/{name}/pipeline")
def update_pipeline(name: str, request: UpdatePipelineRequest):
    """Replace the transform pipeline; every existing variant expires"""
    return _registry().update_pipeline(name, request.pipeline)


@router.get("/images/{name}/acquire", response_model=AcquireResponse)
def acquire(name: str):
    """Serve a uniformly random fresh variant of an image"""
    result = _registry().acquire(name)
    variant = result.variant
    return AcquireResponse(
        variant_id=variant["variant_id"],
        image_name=variant["image_name"],
        master_seed=variant["master_seed"],
        digest=variant["digest"],
        image=base64.b64encode(result.image_bytes).decode("ascii"),
        deploy_count=variant["deploy_count"],
        fresh=result.fresh,
    )


@router.post("/images/{name}/expire-sweep", response_model=SweepResponse)
def expire_image(name: str):
    return SweepResponse(expired=_registry().expire_sweep(name=name))


@router.post("/expire-sweep", response_model=SweepResponse)
def expire_all():
    return SweepResponse(expired=_registry().expire_sweep())


@router.get("/images/{name}/metrics", response_model=ImageMetrics)
def image_metrics(name: str):
    return _registry().metrics(name)


@router.get("/metrics", response_model=RegistryMetricsResponse)
def registry_metrics():
    return _registry().metrics()
