"""
Standardized error handling for the Deep-ESN toolkit
Provides one exception hierarchy, stable error codes and command exit codes
"""

import functools
import logging

import numpy as np

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


class ErrorCodes:
    """Standardized error codes for the toolkit"""

    # Configuration errors
    CONFIG_INVALID = 'CONFIG_INVALID'

    # Numerical errors
    DIMENSION_MISMATCH = 'DIMENSION_MISMATCH'
    NON_FINITE_STATE = 'NON_FINITE_STATE'
    DEGENERATE_SPECTRUM = 'DEGENERATE_SPECTRUM'
    WASHOUT_TOO_LONG = 'WASHOUT_TOO_LONG'
    SINGULAR_SYSTEM = 'SINGULAR_SYSTEM'
    CONSTANT_TARGET = 'CONSTANT_TARGET'
    ZERO_DENOMINATOR = 'ZERO_DENOMINATOR'

    # Data errors
    SERIES_PARSE_ERROR = 'SERIES_PARSE_ERROR'
    SPLIT_OVERFLOW = 'SPLIT_OVERFLOW'

    # Model file errors
    MODEL_FILE_CORRUPT = 'MODEL_FILE_CORRUPT'
    MODEL_VERSION_UNSUPPORTED = 'MODEL_VERSION_UNSUPPORTED'

    # Everything else
    RUNTIME_ERROR = 'RUNTIME_ERROR'


class ErrorMessages:
    """Default messages per error code"""

    ERROR_MESSAGES = {
        ErrorCodes.CONFIG_INVALID: 'The configuration is invalid.',
        ErrorCodes.DIMENSION_MISMATCH: 'Array dimensions do not match.',
        ErrorCodes.NON_FINITE_STATE: 'A state or input contains NaN or Inf.',
        ErrorCodes.DEGENERATE_SPECTRUM: 'The recurrent matrix has (numerically) zero spectral radius.',
        ErrorCodes.WASHOUT_TOO_LONG: 'The washout leaves no retained time steps.',
        ErrorCodes.SINGULAR_SYSTEM: 'The normal equations are singular.',
        ErrorCodes.CONSTANT_TARGET: 'NRMSE is undefined for a constant target.',
        ErrorCodes.ZERO_DENOMINATOR: 'MAPE is undefined when a target value is zero.',
        ErrorCodes.SERIES_PARSE_ERROR: 'The series file could not be parsed.',
        ErrorCodes.SPLIT_OVERFLOW: 'The requested split is longer than the usable series.',
        ErrorCodes.MODEL_FILE_CORRUPT: 'The model file is truncated or corrupt.',
        ErrorCodes.MODEL_VERSION_UNSUPPORTED: 'The model file schema version is not supported.',
        ErrorCodes.RUNTIME_ERROR: 'An unexpected error occurred.',
    }

    @classmethod
    def get_message(cls, error_code, default_message=None):
        """Get default message for error code"""
        return cls.ERROR_MESSAGES.get(error_code, default_message or 'An error occurred.')


class DeepEsnError(Exception):
    """Base class of every toolkit error"""

    code = ErrorCodes.RUNTIME_ERROR
    exit_code = EXIT_RUNTIME_ERROR

    def __init__(self, message=None, details=None):
        self.message = message or ErrorMessages.get_message(self.code)
        self.details = details
        super().__init__(self.message)

    def as_dict(self):
        data = {'code': self.code, 'message': self.message}
        if self.details:
            data['details'] = self.details
        return data


class ConfigurationError(DeepEsnError):
    code = ErrorCodes.CONFIG_INVALID
    exit_code = EXIT_CONFIG_ERROR


class DimensionMismatchError(DeepEsnError):
    code = ErrorCodes.DIMENSION_MISMATCH


class NonFiniteStateError(DeepEsnError):
    code = ErrorCodes.NON_FINITE_STATE


class DegenerateSpectrumError(DeepEsnError):
    code = ErrorCodes.DEGENERATE_SPECTRUM


class WashoutError(DeepEsnError):
    code = ErrorCodes.WASHOUT_TOO_LONG


class SingularSystemError(DeepEsnError):
    code = ErrorCodes.SINGULAR_SYSTEM


class ConstantTargetError(DeepEsnError):
    code = ErrorCodes.CONSTANT_TARGET


class ZeroDenominatorError(DeepEsnError):
    code = ErrorCodes.ZERO_DENOMINATOR


class SeriesParseError(DeepEsnError):
    code = ErrorCodes.SERIES_PARSE_ERROR

    def __init__(self, message=None, line_number=None):
        self.line_number = line_number
        details = {'line': line_number} if line_number is not None else None
        super().__init__(message, details)


class SplitOverflowError(DeepEsnError):
    code = ErrorCodes.SPLIT_OVERFLOW


class ModelFileError(DeepEsnError):
    code = ErrorCodes.MODEL_FILE_CORRUPT


class CorruptModelFileError(ModelFileError):
    code = ErrorCodes.MODEL_FILE_CORRUPT


class ModelVersionError(ModelFileError):
    code = ErrorCodes.MODEL_VERSION_UNSUPPORTED


class RankDeficiencyWarning(UserWarning):
    """Fewer nonzero singular values than requested PCA components"""


# Failures of a single fit that batch runners record and skip
RECOVERABLE_ERRORS = (DeepEsnError, ArithmeticError, ValueError, np.linalg.LinAlgError)


def describe_error(exception):
    """One-line 'CODE: message' summary for result tables and logs"""
    if isinstance(exception, DeepEsnError):
        detail = f" {exception.details}" if exception.details else ''
        return f"{exception.code}: {exception.message}{detail}"
    return f"{type(exception).__name__}: {str(exception)}"


def exit_code_for(exception):
    """Map an exception to the command exit code"""
    if isinstance(exception, DeepEsnError):
        return exception.exit_code
    return EXIT_RUNTIME_ERROR


def handle_command_errors(func):
    """
    Decorator for management command handlers: translate toolkit, numerical and
    I/O exceptions into CommandError carrying the categorized exit code
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        from django.core.management.base import CommandError

        try:
            return func(*args, **kwargs)
        except CommandError:
            raise
        except DeepEsnError as e:
            logger.error(f"{e.code}: {e.message}")
            detail = f" {e.details}" if e.details else ''
            raise CommandError(f"[{e.code}] {e.message}{detail}", returncode=e.exit_code) from e
        except (ArithmeticError, ValueError) as e:
            logger.error(f"Numerical failure: {describe_error(e)}")
            raise CommandError(f"[{ErrorCodes.RUNTIME_ERROR}] {describe_error(e)}", returncode=EXIT_RUNTIME_ERROR) from e
        except OSError as e:
            logger.error(f"I/O failure: {str(e)}")
            raise CommandError(f"[{ErrorCodes.RUNTIME_ERROR}] {str(e)}", returncode=EXIT_RUNTIME_ERROR) from e

    return wrapper
