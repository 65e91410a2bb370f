from . import (
    geometry_service,
    trial_service,
    oracle_service,
    walk_service,
    dla_service,
    estimates_service,
    config_service,
    run_store_service
)

__all__ = [
    "geometry_service",
    "trial_service",
    "oracle_service",
    "walk_service",
    "dla_service",
    "estimates_service",
    "config_service",
    "run_store_service"
]
