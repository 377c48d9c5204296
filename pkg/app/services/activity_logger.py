import logging
import time
from functools import wraps


logger = logging.getLogger(__name__)


async def log_action_activity(action_id: str, title: str, level="INFO", config_data: dict = None, data: dict = None):
    """
        Helper to record a notable event of a running action in the activity log.
        :param action_id: str id of the action being executed
        :param title: A human-readable string that will appear in the activity log
        :param level: The level of the log, e.g. DEBUG, INFO, WARNING, ERROR
        :param config_data: The configuration of the action, as a dict
        :param data: Any extra data to be logged as a dict
        :return: None
        """
    logger.log(
        logging.getLevelName(level.upper()),
        f"[{action_id}] {title}",
        extra={"action_id": action_id, "config_data": config_data or {}, "data": data or {}},
    )


def activity_logger(on_start=True, on_completion=True, on_error=True):
    def decorator(func):
        @wraps(func)
        async def wrapper(*args, **kwargs):
            action_id = func.__name__.replace("action_", "")
            action_config = kwargs.get("action_config") or (args[0] if args else None)
            config_data = action_config.dict() if action_config is not None else {}
            extra = {"action_id": action_id, "config_data": config_data}
            if on_start:
                logger.info(f"Action '{action_id}' started.", extra=extra)
            start = time.perf_counter()
            try:
                result = await func(*args, **kwargs)
            except Exception as e:
                if on_error:
                    logger.error(f"Action '{action_id}' failed: {e}", extra={**extra, "error": str(e)})
                raise e
            else:
                if on_completion:
                    elapsed = time.perf_counter() - start
                    logger.info(f"Action '{action_id}' completed in {elapsed:.3f}s.", extra={**extra, "elapsed": elapsed})
                return result
        return wrapper
    return decorator
