"""Error types shared across the package.

Every error carries a stable string ``code`` so that callers (and the CLI)
can react to failure categories without parsing messages.
"""


class BlindmatchError(Exception):
    """Base class for all package errors."""

    code = "error"


class MissingFileError(BlindmatchError):
    code = "missing-file"


class ManifestError(BlindmatchError):
    """Malformed or inconsistent manifest contents."""

    code = "bad-manifest"


class ShapeMismatchError(BlindmatchError):
    code = "shape-mismatch"


class ChecksumMismatchError(BlindmatchError):
    code = "checksum-mismatch"


class NonFiniteError(BlindmatchError):
    code = "non-finite"


class ZeroRowError(BlindmatchError):
    code = "zero-row"

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has (near-)zero norm and cannot be normalized")


class LabelError(BlindmatchError):
    code = "bad-labels"


class SingularKernelError(BlindmatchError):
    code = "singular-kernel"


class AsymmetryError(BlindmatchError):
    code = "asymmetric-input"


class KindMismatchError(BlindmatchError):
    code = "kind-mismatch"


class SizeMismatchError(BlindmatchError):
    code = "size-mismatch"


class ProblemTooLargeError(BlindmatchError):
    code = "problem-too-large"


class ConfigError(BlindmatchError):
    code = "bad-config"
