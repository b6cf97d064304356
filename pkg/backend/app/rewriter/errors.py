"""Exception hierarchy for the rewriting toolchain."""

from typing import Optional


class RewriterError(Exception):
    """Base class for every toolchain failure"""

    code = "rewriter_error"


class AssemblyError(RewriterError):
    """Raised when assembly text cannot be turned into an image"""

    code = "assembly_error"

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DecodeError(RewriterError):
    """Raised when a .disa byte stream is malformed"""

    code = "decode_error"


class ImageError(RewriterError):
    """Raised when a decoded image violates a structural invariant"""

    code = "invalid_image"


class LiftError(RewriterError):
    code = "lift_error"


class IRError(RewriterError):
    """Raised by IR mutations that would break referential integrity"""

    code = "ir_error"


class AnalysisError(RewriterError):
    code = "analysis_error"


class TransformError(RewriterError):
    """A plugin refused to transform the IR"""

    code = "transform_refused"

    def __init__(self, plugin: str, message: str, stage: Optional[int] = None):
        self.plugin = plugin
        self.diagnostic = message
        self.stage = stage
        prefix = f"stage {stage} ({plugin})" if stage is not None else plugin
        super().__init__(f"{prefix}: {message}")


class UnknownPluginError(RewriterError):
    code = "unknown_plugin"


class EmitError(RewriterError):
    code = "emit_error"
