from pydantic import ValidationError as PydanticValidationError
from src.exceptions import ToolkitBaseException
from src.utils.logging import get_logger
from src.constants import *

logger = get_logger(__name__)


def exit_code_for(ex: BaseException) -> int:
    if isinstance(ex, ToolkitBaseException):
        return ex.exit_code
    if isinstance(ex, PydanticValidationError):
        return EXIT_CONFIG_ERROR
    if isinstance(ex, FloatingPointError):
        return EXIT_NUMERIC_FAILURE
    if isinstance(ex, OSError):
        return EXIT_NUMERIC_FAILURE
    logger.error(f"Unhandled exception type: {type(ex)}")
    return EXIT_NUMERIC_FAILURE


def describe_exception(ex: BaseException) -> dict:
    if isinstance(ex, ToolkitBaseException):
        return {
            "error_type": ex.error_type,
            "error_code": ex.error_code,
            "message": ex.error_msg,
        }
    return {"error_type": SERVER_ERROR, "error_code": None, "message": str(ex) or type(ex).__name__}
