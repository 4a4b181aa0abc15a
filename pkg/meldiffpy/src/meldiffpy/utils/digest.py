import json
from typing import Any
from xxhash import xxh128


def hash_bytes(data: bytes | bytearray | memoryview) -> str:
    return xxh128(data).hexdigest()


def hash_config(config: Any) -> str:
    """Order-independent digest of a JSON-serializable configuration."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return xxh128(canonical.encode("utf-8")).hexdigest()
