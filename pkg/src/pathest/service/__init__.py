"""HTTP service and the operation handlers it shares with the CLI."""

from .app import create_app
from . import models, ops

__all__ = ["create_app", "models", "ops"]
