import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, Type

import numpy as np
import pydantic
from environs import Env
from pydantic.fields import SHAPE_SINGLETON
from scipy.stats import beta

from app.services.errors import ConfigurationNotFound


logger = logging.getLogger(__name__)

SEED_MASK = (1 << 64) - 1


def mix_seed(master_seed: int, *indices: int) -> int:
    """
    Derive an independent 64-bit seed from a master seed and a path of indices
    (e.g. trial index, copy index). Pure function of its arguments.
    """
    sequence = np.random.SeedSequence(entropy=int(master_seed) & SEED_MASK, spawn_key=tuple(int(i) for i in indices))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def parallel_map(func: Callable, items: Iterable, threads: int = 1) -> List[Any]:
    """
    Map func over items preserving input order, so results never depend on the thread count.
    """
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))


def chunked_ranges(total: int, chunk: int) -> List[Tuple[int, int]]:
    return [(start, min(start + chunk, total)) for start in range(0, total, chunk)]


def clopper_pearson(failures: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    # Exact binomial interval from beta quantiles
    alpha = 1.0 - confidence
    low = 0.0 if failures == 0 else float(beta.ppf(alpha / 2, failures, trials - failures + 1))
    high = 1.0 if failures == trials else float(beta.ppf(1 - alpha / 2, failures + 1, trials - failures))
    return low, high


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigurationNotFound(f"Configuration file '{path}' was not found.")
    try:
        data = json.loads(config_path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigurationNotFound(f"Configuration file '{path}' is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigurationNotFound(f"Configuration file '{path}' must contain a JSON object.")
    return data


def find_config_for_action(configurations: Dict[str, Any], action_id: str, fields: Iterable[str] = None) -> Dict[str, Any]:
    """
    A config file is either keyed by action id or flat. A flat file is shared by every action,
    so only the keys the action knows (fields) are taken from it.
    """
    section = configurations.get(action_id)
    if isinstance(section, dict):
        return dict(section)
    if fields is None:
        return dict(configurations)
    return {k: v for k, v in configurations.items() if k in set(fields)}


def env_overrides(config_model: Type[pydantic.BaseModel], prefix: str = "OSE_") -> Dict[str, Any]:
    env = Env()
    overrides = {}
    with env.prefixed(prefix):
        for name, field in config_model.__fields__.items():
            key = name.upper()
            if field.shape != SHAPE_SINGLETON:
                value = env.list(key, None)
            else:
                value = env.str(key, None)
            if value is not None:
                overrides[name] = value
    return overrides


def resolve_action_config(
        config_model: Type[pydantic.BaseModel],
        action_id: str,
        cli_overrides: Dict[str, Any] = None,
        config_file: Optional[str] = None,
) -> pydantic.BaseModel:
    """
    Layer configuration sources: defaults < config file < environment (OSE_ prefix) < CLI flags.
    """
    config_data = find_config_for_action(load_config_file(config_file), action_id, config_model.__fields__)
    config_data.update(env_overrides(config_model))
    config_data.update({k: v for k, v in (cli_overrides or {}).items() if v is not None})
    logger.debug(f"Resolved configuration sources for '{action_id}': {sorted(config_data)}")
    return config_model.parse_obj(config_data)
