"""Bounded symbolic model checker for the Thread MeshCoP commissioning protocols."""

from .harness import ExplorationConfig, explore, run_schedule
from .queries import REGISTRY, render_report, run_suite

__all__ = ["ExplorationConfig", "REGISTRY", "explore", "render_report", "run_schedule",
           "run_suite"]
__version__ = "0.1.0"
