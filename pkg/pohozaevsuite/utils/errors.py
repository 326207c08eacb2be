from typing import Optional, Any, Dict


class ProcessingError(Exception):
    """Base exception for all processing errors"""
    def __init__(self, message: str, details: Optional[dict] = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)


class ValidationError(ProcessingError):
    """Invalid arguments or input data"""
    pass


class RegimeError(ValidationError):
    """Exponents, mass or coupling outside the admissible regime.

    The message always names the violated inequality, e.g. "q1 must exceed p".
    """
    pass


class DegenerateInputError(ValidationError):
    """Profile is identically zero or has vanishing Lebesgue norms"""
    pass


class UnsupportedRegimeError(ValidationError):
    """Operation is not defined for the requested exponents (e.g. Morse index for p < 2)"""
    pass


class InsufficientDataError(ValidationError):
    """Too few samples for a regression or fit"""
    pass


class FileError(ProcessingError):
    """File operation errors"""
    pass


class NumericalError(ProcessingError):
    """Diagnosed mathematical or numerical failure"""
    pass


class ResolutionLossError(NumericalError):
    """A dilation pushed the profile support below the grid resolution"""
    pass


class ProjectionUnavailableError(NumericalError):
    """The fibering map has no critical point on the requested branch"""
    pass


class NonConvergenceError(NumericalError):
    """Iteration limit reached; carries the best iterate found so far"""
    def __init__(self, message: str, best: Any = None, details: Optional[dict] = None):
        super().__init__(message, details)
        self.best = best


class ConcentrationError(NumericalError):
    """Minimizing sequence concentrates at the origin (bubbling)"""
    pass


class EmptyManifoldError(NumericalError):
    """The degenerate manifold is empty for the requested coupling"""
    pass


class CertificateUnavailableError(NumericalError):
    """No positive energy margin found on the (eps, alpha) lattice"""
    pass


class SpectralError(NumericalError):
    """Factorization or eigenvalue computation failure"""
    pass


class InsufficientTailError(NumericalError):
    """Profile tail too short or below machine precision for a decay fit"""
    pass


class DivisionHazardError(NumericalError):
    """Density vanishes inside the region where the value function is reconstructed"""
    pass


class ShootingBracketError(NumericalError):
    """No undershoot/overshoot bracket for the shooting parameter"""
    pass


def handle_processing_errors(processor_method):
    """Decorator for handling processing errors"""
    def wrapper(self, *args, **kwargs):
        try:
            return processor_method(self, *args, **kwargs)
        except ProcessingError as e:
            self.logger.error(f"{type(e).__name__}: {e.message}")
            if e.details:
                self.logger.debug(f"Error details: {e.details}")
            raise
        except Exception as e:
            self.logger.error(f"Unexpected error: {str(e)}")
            raise ProcessingError(f"Unexpected error during processing: {str(e)}")
    wrapper.__name__ = processor_method.__name__
    wrapper.__doc__ = processor_method.__doc__
    return wrapper


def validate_input_data(data: Any, name: str, required_fields: Optional[list] = None) -> None:
    """
    Validate input data

    Args:
        data: Data to validate
        name: Name of the data (for error messages)
        required_fields: Optional list of required field names

    Raises:
        ValidationError: If validation fails
    """
    if data is None:
        raise ValidationError(f"{name} is required")

    if required_fields:
        if not isinstance(data, dict):
            raise ValidationError(f"{name} must be a dictionary")

        missing_fields = [field for field in required_fields if field not in data]
        if missing_fields:
            raise ValidationError(f"Missing required fields in {name}: {', '.join(missing_fields)}")


def exit_code_for(error: BaseException) -> int:
    """Map an exception onto the command-line exit-code contract.

    Returns:
        1 for usage, regime and file errors; 2 for diagnosed numerical failures
    """
    if isinstance(error, (ValidationError, FileError)):
        return 1
    return 2


def error_details(error: ProcessingError) -> Dict[str, Any]:
    """Flatten an error into a JSON-friendly mapping"""
    return {
        'error': type(error).__name__,
        'message': error.message,
        'details': {k: v for k, v in error.details.items() if isinstance(v, (int, float, str, bool, type(None)))},
    }
