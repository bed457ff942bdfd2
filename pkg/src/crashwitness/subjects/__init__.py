from .base import Operation, Subject, get_subject, register, subject_names
from . import kv_log, level_hash  # noqa: F401  (registers the shipped subjects)

__all__ = ["Operation", "Subject", "get_subject", "register", "subject_names"]
