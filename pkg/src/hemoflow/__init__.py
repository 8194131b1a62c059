"""1-D arterial blood flow with a stenosed outlet and Lyapunov stability tools."""

from .model import (
    ArteryParams,
    DomainError,
    RiemannPoint,
    StatePoint,
    standard_artery,
)

__all__ = [
    "ArteryParams",
    "DomainError",
    "RiemannPoint",
    "StatePoint",
    "standard_artery",
]

__version__ = "0.1.0"
