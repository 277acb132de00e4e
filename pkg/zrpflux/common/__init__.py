from .defaults import Defaults
from .logging import configure_logging, logger

__all__ = ["Defaults", "configure_logging", "logger"]
