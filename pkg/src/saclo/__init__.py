"""Switched compliant/safe quadruped locomotion: surrogate environment,
teacher-student training pipeline, recoverability switching, evaluation."""

from ._kernel import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
