"""Utils package - Logging, errors and seeding helpers."""

from src.utils.errors import StfError
from src.utils.logger import get_logger

__all__ = [
    "StfError",
    "get_logger",
]
