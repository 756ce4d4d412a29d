"""MUCHLAC toolkit - shared configuration and file helpers.

This module loads the toolkit settings from the environment (and an
optional .env file), parses list-valued options, and reads/writes the JSON
artifacts every pipeline stage produces.
"""

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from joblib import cpu_count

VERSION = "1.0.0"

# Format magics understood by this release
FORMAT_MAGICS = {
    "raster": "MBR1",
    "feature_matrix": "FMX1",
    "model": "RAB1",
}

DEFAULT_SETTINGS = {
    "MUCHLAC_SEED": "7",
    "MUCHLAC_THREADS": str(cpu_count()),
    "MUCHLAC_ROUNDS": "500",
    "MUCHLAC_BINS": "16",
    "MUCHLAC_TREES": "100",
    "MUCHLAC_FOLDS": "5",
    "MUCHLAC_PATCH_SIZE": "16",
    "MUCHLAC_DISTANCES": "1,2,3,4",
    "MUCHLAC_GLCM_LEVELS": "32",
    "OUTPUT_DIR": ".",
}


def load_environment_config() -> Dict[str, str]:
    """Load toolkit settings from environment variables.

    Returns:
        Dict[str, str]: Every key of DEFAULT_SETTINGS, taken from the
            environment (or .env file) when set, otherwise the default.

    Note:
        Command-line flags override these values; see PipelineConfig.
    """
    load_dotenv()

    config = {}
    for key, default in DEFAULT_SETTINGS.items():
        config[key] = os.getenv(key, default)

    return config


def parse_int_list(text: str, name: str = "value") -> List[int]:
    """Parse a comma-separated list of integers such as "1,2,3,4".

    Args:
        text: The comma-separated string.
        name: Option name used in error messages.

    Returns:
        List[int]: Parsed integers in the given order.

    Raises:
        ValueError: If the list is empty or an item is not an integer.
    """
    items = [item.strip() for item in str(text).split(",") if item.strip()]
    if not items:
        raise ValueError(f"{name} must list at least one integer")

    values = []
    for item in items:
        try:
            values.append(int(item))
        except ValueError:
            raise ValueError(f"{name}: '{item}' is not an integer") from None

    return values


def parse_float_list(text: str, name: str = "value") -> List[float]:
    """Parse a comma-separated list of floats such as "0.02,0.1,0.8"."""
    items = [item.strip() for item in str(text).split(",") if item.strip()]
    if not items:
        raise ValueError(f"{name} must list at least one number")
    try:
        return [float(item) for item in items]
    except ValueError:
        raise ValueError(f"{name}: '{text}' is not a list of numbers") from None


def setup_output_directory(path: str) -> Path:
    """Create the parent directory of an output path if it doesn't exist.

    Args:
        path: File path that is about to be written.

    Returns:
        Path: The output path as a Path object.
    """
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    return out_path


def read_json_file(file_path: str) -> Any:
    """Read a JSON artifact.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If the file is not valid JSON.
    """
    path = Path(file_path)

    if not path.exists():
        raise FileNotFoundError(f"File not found: {file_path}")

    with open(path, "r", encoding="utf-8") as file:
        try:
            return json.load(file)
        except json.JSONDecodeError as error:
            raise ValueError(f"Invalid JSON in {file_path}: {error}") from None


def dump_json(payload: Any) -> str:
    """Serialize a payload the same way on every run."""
    return json.dumps(payload, indent=2, allow_nan=False) + "\n"


def write_json_file(file_path: str, payload: Any) -> str:
    """Write a JSON artifact, creating parent directories as needed.

    Returns:
        str: The path written.
    """
    path = setup_output_directory(file_path)
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        file.write(dump_json(payload))
    return str(path)


@dataclass
class PipelineConfig:
    """Everything that determines one pipeline run.

    Built by the CLI from its flags with environment defaults filled in;
    as_dict() is embedded in every artifact the run writes.
    """

    subcommand: str
    seed: int = 7
    threads: int = 1
    inputs: Dict[str, str] = field(default_factory=dict)
    output: Optional[str] = None
    params: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        # Thread count never changes results, keep it out of the echo
        payload.pop("threads")
        payload["version"] = VERSION
        return payload
