from .log_service import setup_logging, get_logger

__all__ = ["setup_logging", "get_logger"]
