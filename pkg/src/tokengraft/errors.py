"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: configuration/usage problems
exit 1, malformed input files exit 2, violated internal invariants exit 3.
"""


class TokengraftError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TokengraftError):
    """Invalid configuration or parameter value (CLI exit code 1)."""


class InputFormatError(TokengraftError):
    """Malformed input file: tokenizer JSON, AUXV1, tensor file (exit code 2)."""


class TokenizerFormatError(InputFormatError):
    """Tokenizer JSON file does not match the documented schema."""


class AuxStoreFormatError(InputFormatError):
    """AUXV1 embedding file is malformed or truncated."""


class TensorFormatError(InputFormatError):
    """Tensor file is structurally invalid."""


class TensorDtypeError(TensorFormatError):
    """Tensor file declares a dtype other than F32."""


class TensorOffsetError(TensorFormatError):
    """Tensor byte ranges overlap, are out of order, or do not tile the payload."""


class TensorTruncationError(TensorFormatError):
    """Tensor file payload is shorter than the header declares."""


class TrainingError(TokengraftError):
    """Tokenizer training cannot proceed (e.g. empty corpus)."""


class InvariantError(TokengraftError):
    """An internal invariant was violated (CLI exit code 3)."""
