"""
DeVigNet Errors
Exception hierarchy shared by the network, services and CLI
"""

from typing import Any, Dict, Optional


class DevignetError(Exception):
    """Base error; exit_code is what the CLI returns for it"""

    exit_code: int = 1


class UsageError(DevignetError):
    exit_code = 1


class StructuralError(DevignetError, ValueError):
    """Shape or divisibility contract violated"""

    exit_code = 1


class SizingError(StructuralError):
    """Input image is below the minimum size the model geometry needs"""

    def __init__(self, height: int, width: int, min_height: int, min_width: int, reason: str = ""):
        self.height = height
        self.width = width
        self.min_height = min_height
        self.min_width = min_width
        message = (
            f"image {height}x{width} is smaller than the minimum "
            f"{min_height}x{min_width}"
        )
        if reason:
            message = f"{message} ({reason})"
        super().__init__(message)


class DataError(DevignetError):
    exit_code = 2


class CheckpointError(DataError):
    pass


class NumericError(DevignetError):
    """Non-finite value during training"""

    exit_code = 3

    def __init__(self, message: str, step: Optional[int] = None, diagnostics: Optional[Dict[str, Any]] = None):
        self.step = step
        self.diagnostics = diagnostics or {}
        if step is not None:
            message = f"step {step}: {message}"
        if self.diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            message = f"{message} [{details}]"
        super().__init__(message)
