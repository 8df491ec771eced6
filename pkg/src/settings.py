"""
Configuration settings for the Ponzi scheme forensics toolkit.
"""

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _get_int(env_var_name: str, default: int) -> int:
    raw_value = os.getenv(env_var_name)
    if raw_value is None:
        return default
    try:
        return int(raw_value)
    except ValueError:
        return default


def _get_float(env_var_name: str, default: float) -> float:
    raw_value = os.getenv(env_var_name)
    if raw_value is None:
        return default
    try:
        return float(raw_value)
    except ValueError:
        return default


def _is_enabled(env_var_name: str, default: bool = False) -> bool:
    raw_value = os.getenv(env_var_name)
    if raw_value is None:
        return default
    return raw_value.strip().lower() in {"1", "true", "yes", "on"}


TOOL_VERSION = "0.1.0"

# Ledger units and reserved addresses.
WEI_PER_ETH = 10**18
NULL_ADDRESS = "0x" + "0" * 40
USD_PLACES = 6

# Similarity search defaults (overridable per run from the CLI).
SIMILARITY_THRESHOLD = _get_float("FORENSICS_THRESHOLD", 0.35)
SAMPLE_PAIRS = _get_int("FORENSICS_SAMPLE_PAIRS", 1000)
DEFAULT_SEED = _get_int("FORENSICS_SEED", 20170301)
FP_NEIGHBOR_LIMIT = _get_int("FORENSICS_FP_NEIGHBOR_LIMIT", 100)
WORKERS = max(1, _get_int("FORENSICS_WORKERS", 1))
NORMALIZATION = os.getenv("FORENSICS_NORMALIZATION", "metric").strip().lower()

# Abstract gas units charged per array entry when a scheme clears its queue.
CLEAR_COST_PER_ENTRY = _get_int("FORENSICS_CLEAR_COST_PER_ENTRY", 1)

# Every attack scenario re-checks conservation on its trace unless disabled.
CHECK_CONSERVATION = _is_enabled("FORENSICS_CHECK_CONSERVATION", default=True)

LOG_LEVEL = os.getenv("FORENSICS_LOG_LEVEL", "WARNING").strip().upper()
