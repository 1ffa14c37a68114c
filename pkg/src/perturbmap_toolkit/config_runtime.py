from dataclasses import dataclass
import json
import os
from pathlib import Path

from perturbmap_toolkit.config import ToolkitConfig

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parents[2] / "data" / "input" / "toolkit_config.json"


@dataclass(frozen=True)
class RuntimeSettings:
    workers: int = 1
    enumeration_cap: int = ToolkitConfig.enumeration_cap
    log_level: str = "WARNING"


def load_runtime_settings(config_path: Path | None = None) -> RuntimeSettings:
    path = config_path or Path(os.getenv("PERTURBMAP_CONFIG", str(DEFAULT_CONFIG_PATH)))
    payload: dict = {}
    if path.exists():
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            payload = {}
    if not isinstance(payload, dict):
        payload = {}

    defaults = RuntimeSettings()
    workers = _as_int(os.getenv("PERTURBMAP_WORKERS", payload.get("workers")), defaults.workers)
    cap = _as_int(
        os.getenv("PERTURBMAP_ENUMERATION_CAP", payload.get("enumeration_cap")),
        defaults.enumeration_cap,
    )
    log_level = str(os.getenv("PERTURBMAP_LOG_LEVEL", payload.get("log_level", defaults.log_level))).strip()
    return RuntimeSettings(
        workers=max(1, workers),
        enumeration_cap=max(1, cap),
        log_level=log_level.upper() or defaults.log_level,
    )


def _as_int(raw, fallback: int) -> int:
    if raw is None:
        return fallback
    try:
        return int(raw)
    except (TypeError, ValueError):
        return fallback
