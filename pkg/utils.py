"""
Shared helpers for the superspin freezing scripts: configuration, hashing, file writes and sign handling
"""
import hashlib
import json
import os
import tempfile
from typing import Any, Optional

import numpy as np

TOOL_NAME = "kzfreeze"
TOOL_VERSION = "0.3.0"

USER_CONFIG_PATH = "user_config.json"
CONFIG_ENV_VAR = "KZFREEZE_CONFIG"
CACHE_ENV_VAR = "KZFREEZE_CACHE"
DEFAULT_CACHE_DIR = ".kzcache"

# Classification window and grid of the published census
DEFAULT_WINDOW = 5.0
DEFAULT_GRID_POINTS = 101

# |m| below this is treated as lying on a spin-sign transition
ZERO_TOLERANCE = 1e-8


def get_config_path(config_path: Optional[str | os.PathLike] = None) -> str:
    """
    Determines which configuration file to use.

    :param config_path: Explicit path, if one was given on the command line
    :return: Path to the configuration file (which may not exist)
    """
    if config_path is not None:
        return str(config_path)
    return os.environ.get(CONFIG_ENV_VAR, USER_CONFIG_PATH)


def load_user_config(config_path: Optional[str | os.PathLike] = None) -> dict:
    """
    Reads the whole configuration file. A missing file is an empty configuration.

    :param config_path: Path to the configuration file
    :return: Nested dict of configuration sections
    """
    config_path = get_config_path(config_path)
    if not os.path.isfile(config_path):
        return {}
    with open(config_path, "r", encoding="utf-8") as user_config_file:
        return json.load(user_config_file)


def lookup_dotted_key(config: dict, key: str, default=None):
    """
    Retrieves a value from a nested dict using a dotted key such as "bath.eta".

    :param config: Nested configuration dict
    :param key: Dotted key
    :param default: Value to return if any part of the key is missing
    :return: Configuration value
    """
    node = config
    for part in key.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def read_user_config(key: str, default=None, config_path: Optional[str | os.PathLike] = None):
    return lookup_dotted_key(load_user_config(config_path), key, default)


def parse_override(raw_override: str) -> tuple[str, Any]:
    """
    Parses a "key=value" command line override. Values are read as JSON where possible
    (so numbers, booleans and lists keep their types), otherwise kept as strings.

    :param raw_override: Override text
    :return: Dotted key and parsed value
    """
    if "=" not in raw_override:
        raise ValueError(f"Override '{raw_override}' is not of the form key=value")
    key, raw_value = raw_override.split("=", 1)
    key = key.strip()
    if key == "":
        raise ValueError(f"Override '{raw_override}' has an empty key")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value.strip()
    return key, value


def content_hash(payload: Any) -> str:
    """
    Hashes a JSON-serializable payload. Keys are sorted so that the hash only depends on content.

    :param payload: JSON-serializable object
    :return: Hex SHA-256 digest
    """
    serialized = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(serialized.encode("utf-8")).hexdigest()


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def atomic_write_bytes(filepath: str | os.PathLike, data: bytes):
    """
    Writes a file by writing a temporary file in the same folder and renaming it into place,
    so readers never see a partially written file.

    :param filepath: Destination path
    :param data: File contents
    """
    folder = os.path.dirname(os.path.abspath(filepath))
    os.makedirs(folder, exist_ok=True)
    file_descriptor, temp_path = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(filepath))
    try:
        with os.fdopen(file_descriptor, "wb") as temp_file:
            temp_file.write(data)
        os.replace(temp_path, filepath)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise


def atomic_write_text(filepath: str | os.PathLike, text: str):
    atomic_write_bytes(filepath, text.encode("utf-8"))


def provenance_line(config_hash: Optional[str]) -> str:
    """
    Comment line embedded at the top of every CSV output.

    :param config_hash: Hash of the configuration that produced the file
    :return: Comment line (without trailing newline)
    """
    return f"# {TOOL_NAME} {TOOL_VERSION} config={config_hash or 'none'}"


def signs_with_tolerance(values, tolerance: float = ZERO_TOLERANCE) -> np.ndarray:
    """
    Converts magnetizations to signs, marking values within the tolerance of zero as 0 (indeterminate).

    :param values: Array of magnetizations
    :param tolerance: Zero tolerance
    :return: int8 array of -1, 0 or +1
    """
    values = np.asarray(values, dtype=float)
    signs = np.array(np.sign(values), dtype=np.int8)
    signs[np.abs(values) < tolerance] = 0
    return signs
