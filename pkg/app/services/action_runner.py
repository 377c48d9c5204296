import logging
from typing import Any, Dict, Optional

import aiofiles
import pydantic

from app.actions import action_handlers
from .errors import ConfigurationNotFound, NumericError, ParameterError
from .reports import ReportEnvelope, ReportFormat, canonical_payload, make_envelope, write_report
from .utils import resolve_action_config


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARAMETER_ERROR = 1
EXIT_NUMERIC_ERROR = 2

# Timing payloads cannot be reproduced bit for bit
REPLAY_EXEMPT_ACTIONS = {"bench"}


class ActionResponse(pydantic.BaseModel):
    exit_code: int = EXIT_OK
    content: Dict[str, Any] = {}
    report: Optional[str] = None  # Encoded report when no output path was given


def _failure(exit_code: int, message: str) -> ActionResponse:
    return ActionResponse(exit_code=exit_code, content={"detail": message})


async def execute_action(
        action_id: str,
        config_overrides: dict = None,
        config_file: str = None,
        output_format: ReportFormat = ReportFormat.JSON,
        output_path: str = None,
        replay: ReportEnvelope = None,
) -> ActionResponse:
    """
    Interface for executing actions.
    :param action_id: "plan", "sketch", "verify", "moments", "regress", "bench"
    :param config_overrides: Optional dictionary with configuration overrides (CLI flags)
    :param config_file: Optional path to a JSON configuration file
    :param output_format: json or csv
    :param output_path: Write the report here instead of returning it
    :param replay: A previous report whose configuration is re-run and whose payload must be reproduced
    :return: ActionResponse with the exit code and the payload or the error detail
    """
    logger.info(f"Executing action '{action_id}'...")
    try:
        handler, config_model = action_handlers[action_id]
    except KeyError:
        message = f"Action '{action_id}' is not supported"
        logger.error(message)
        return _failure(EXIT_PARAMETER_ERROR, message)

    try:
        if replay:
            parsed_config = config_model.parse_obj(replay.config)
        else:
            parsed_config = resolve_action_config(config_model, action_id, config_overrides, config_file)
        payload = await handler(action_config=parsed_config)
        envelope = make_envelope(action_id, parsed_config, payload)
    except pydantic.ValidationError as e:
        message = f"Invalid configuration for action '{action_id}': {e.errors()}"
        logger.error(message)
        return _failure(EXIT_PARAMETER_ERROR, message)
    except (ConfigurationNotFound, ParameterError) as e:
        message = f"Error executing action '{action_id}': {e}"
        logger.error(message)
        return _failure(EXIT_PARAMETER_ERROR, message)
    except NumericError as e:
        message = f"Numerical failure in action '{action_id}': {e}"
        logger.error(message)
        return _failure(EXIT_NUMERIC_ERROR, message)
    except Exception as e:
        message = f"Internal error executing action '{action_id}': {e}"
        logger.exception(message)
        return _failure(EXIT_NUMERIC_ERROR, message)

    if replay and action_id not in REPLAY_EXEMPT_ACTIONS:
        if canonical_payload(envelope.payload) != canonical_payload(replay.payload):
            message = f"Replay of action '{action_id}' did not reproduce the recorded payload"
            logger.error(message)
            return _failure(EXIT_NUMERIC_ERROR, message)
        logger.info(f"Replay of action '{action_id}' reproduced the recorded payload.")

    report = write_report(envelope, output_format)
    if output_path:
        try:
            async with aiofiles.open(output_path, "wb") as f:
                await f.write(report)
        except OSError as e:
            message = f"Cannot write the report to '{output_path}': {e}"
            logger.error(message)
            return _failure(EXIT_PARAMETER_ERROR, message)
        logger.info(f"Report written to '{output_path}'.")
        return ActionResponse(content=envelope.payload)
    return ActionResponse(content=envelope.payload, report=report.decode("utf-8"))
