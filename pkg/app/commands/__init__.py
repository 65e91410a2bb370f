from . import (
    dla,
    estimates,
    runs
)

__all__ = [
    "dla",
    "estimates",
    "runs",
]
