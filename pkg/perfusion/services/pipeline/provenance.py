import json
import logging
import os
from pathlib import Path

from perfusion import __version__
from perfusion.conf import perfusion_settings
from perfusion.exceptions import ArtifactIOError

logger = logging.getLogger(__name__)


def resolve_threads(threads) -> int:
    """0 or None means every available core."""
    if threads is None or int(threads) <= 0:
        return os.cpu_count() or 1
    return int(threads)


def run_record(command: str, options: dict) -> dict:
    return {
        "command": command,
        "version": __version__,
        "options": options,
        "perfusion": perfusion_settings(),
    }


def write_json(payload: dict, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path.name}: {exc}", path) from exc
    return path


def write_run_json(out_dir, command: str, options: dict) -> Path:
    """Echo the fully resolved configuration of a run into `<out_dir>/run.json`."""
    path = write_json(run_record(command, options), Path(out_dir) / "run.json")
    logger.debug(f"📝 Wrote {path}")
    return path
