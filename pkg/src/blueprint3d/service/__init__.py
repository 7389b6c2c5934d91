"""HTTP service: blueprint upload, human view review, reconstruction jobs."""

from .app import create_app
from .store import Store

__all__ = ["Store", "create_app"]
