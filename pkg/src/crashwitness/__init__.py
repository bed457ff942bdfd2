"""Invariant-guided crash consistency testing for persistent memory programs."""
from .equivalence import TestCase, oracle_count
from .estimator import CrashConsistencyDetector, InvariantMiner
from .generate import GenConfig, generate
from .pipeline import PipelineConfig, run_pipeline
from .runtime import PersistentPool, Trace, TrackedBytes, pool_create
from .subjects import Operation, get_subject

__version__ = "0.1.0"

__all__ = [
    "CrashConsistencyDetector", "GenConfig", "InvariantMiner", "Operation", "PersistentPool",
    "PipelineConfig", "TestCase", "Trace", "TrackedBytes", "generate", "get_subject",
    "oracle_count", "pool_create", "run_pipeline",
]
