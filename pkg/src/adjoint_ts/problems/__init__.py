"""Example problems, registered by name for the command line."""

from __future__ import annotations

from typing import Callable

from .aircraft import Aircraft, AircraftConfig, aircraft_setup
from .base import ProblemSetup
from .grayscott import GrayScott, GrayScottConfig, grayscott_setup
from .linear import LinearSystem, linear_setup
from .polynomial import polynomial_setup

REGISTRY: dict[str, Callable[..., ProblemSetup]] = {
    "aircraft": aircraft_setup,
    "grayscott": grayscott_setup,
    "linear-test": linear_setup,
    "polynomial": polynomial_setup,
}


def get_setup(name: str, **options) -> ProblemSetup:
    """Build a registered problem; unknown options are ignored by the factory."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}") from None
    return factory(**options)


__all__ = ["Aircraft", "AircraftConfig", "GrayScott", "GrayScottConfig", "LinearSystem", "ProblemSetup",
           "REGISTRY", "get_setup"]
