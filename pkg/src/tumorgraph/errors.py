"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors
(manifests, images, weight files) exit 2, numeric failures exit 3.
"""


class TumorGraphError(Exception):
    """Base class for all package errors."""


class UsageError(TumorGraphError):
    """Bad command-line invocation or config file contents."""


class ShapeError(TumorGraphError, ValueError):
    """Tensor-operation precondition violated (names the offending shapes)."""


class GraphError(TumorGraphError):
    """Graph construction or traversal misuse (double head, missing weight, ...)."""


class DataError(TumorGraphError):
    """External data could not be ingested."""


class ManifestError(DataError):
    """Manifest parse/validation failure; message names the line and value."""


class ImageDecodeError(DataError):
    """An image file could not be decoded as 8/16-bit grayscale."""


class WeightFileError(DataError):
    """Base class for portable weight-file failures."""


class WeightFileCorruptError(WeightFileError):
    """Bad magic bytes or undecodable header."""


class WeightFileTruncatedError(WeightFileError):
    """Data region shorter than the header promises."""


class MissingWeightError(WeightFileError):
    """Graph binds a weight name the file does not provide."""


class UnexpectedWeightError(WeightFileError):
    """File provides a tensor the graph does not bind."""


class WeightShapeError(WeightFileError):
    """Stored tensor shape disagrees with the graph's binding."""


class NumericError(TumorGraphError):
    """Non-finite value or failed numeric check during training/evaluation."""


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
