"""
Atomic file output and provenance helpers
"""
import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd
from django.conf import settings

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


class AtomicFileWriter:
    """Write-temp-then-rename file output so readers never see partial files"""

    @staticmethod
    def write_bytes(path: PathLike, payload: bytes) -> Path:
        """Write raw bytes atomically and return the final path"""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)

        fd, tmp_name = tempfile.mkstemp(prefix=f'.{target.name}.', suffix='.tmp', dir=target.parent)
        try:
            with os.fdopen(fd, 'wb') as handle:
                handle.write(payload)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp_name, target)
        except BaseException:
            if os.path.exists(tmp_name):
                os.remove(tmp_name)
            raise

        logger.debug(f"Wrote {len(payload)} bytes to {target}")
        return target

    @staticmethod
    def write_text(path: PathLike, text: str) -> Path:
        return AtomicFileWriter.write_bytes(path, text.encode('utf-8'))

    @staticmethod
    def write_json(path: PathLike, data: Any) -> Path:
        """Serialize to indented JSON; non-finite floats are written as null"""
        text = json.dumps(_json_safe(data), indent=2, sort_keys=False)
        return AtomicFileWriter.write_text(path, text + '\n')

    @staticmethod
    def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
        return AtomicFileWriter.write_text(path, frame.to_csv(index=False))


class OutputDirectory:
    """Resolve and prepare command output directories"""

    @staticmethod
    def resolve(directory: Optional[PathLike] = None) -> Path:
        """Explicit directory wins, otherwise the configured default (DEEP_ESN_OUTPUT_DIR)"""
        if directory:
            path = Path(directory)
        else:
            path = Path(settings.DEEP_ESN['OUTPUT_DIR'])
        path.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def write_provenance(directory: PathLike, resolved_config: Dict[str, Any], command: str) -> Path:
        """Copy the resolved config next to the outputs it produced"""
        # No timestamp: reruns with the same config must produce identical bytes
        record = {'command': command, 'config': resolved_config}
        return AtomicFileWriter.write_json(Path(directory) / 'resolved_config.json', record)


def sha256_digest(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and (value != value or value in (float('inf'), float('-inf'))):
        return None
    if hasattr(value, 'tolist'):
        return _json_safe(value.tolist())
    if hasattr(value, 'item'):
        return _json_safe(value.item())
    return value
