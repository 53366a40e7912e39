import copy
import json
from pathlib import Path

from .log import log, warn

CONFIG_FILE = Path("cechkit.json")

# Model and budget defaults. K and M are the smallest constants the model permits.
default_config = {
    "K": 9.0,
    "M": 162.0,
    "K_fill": 9.0,
    "bisect_round_cap": 60,
    "packing_retries": 20000,
    "complex_budget": 20000,
    "snf_dense_limit": 400,
    "schedule_halvings": 12,
    "check_cap": 4000,
    "net_pool_cap": 60000,
}

_INT_KEYS = {
    "bisect_round_cap", "packing_retries", "complex_budget", "snf_dense_limit",
    "schedule_halvings", "check_cap", "net_pool_cap",
}


def load_config(path=None):
    """Defaults overlaid with a JSON file; unknown or bad keys fall back to defaults."""
    cfg = copy.deepcopy(default_config)
    p = Path(path) if path is not None else CONFIG_FILE
    if not p.exists():
        return cfg
    try:
        user = json.loads(p.read_text())
    except Exception as e:
        warn(f"[ERROR] Could not load {p}: {e}, using defaults.")
        return cfg
    if not isinstance(user, dict):
        warn(f"[ERROR] {p} must hold a JSON object, using defaults.")
        return cfg
    for key, value in user.items():
        if key not in default_config:
            warn(f"[CONFIG] Unknown key in config: {key}")
            continue
        try:
            cfg[key] = int(value) if key in _INT_KEYS else float(value)
        except (TypeError, ValueError):
            warn(f"[CONFIG] Bad value for {key}: {value!r}, keeping {cfg[key]}")
    if cfg["K"] < 9 or cfg["K_fill"] < 9:
        warn("[CONFIG] K and K_fill must be >= 9, keeping defaults")
        cfg["K"], cfg["K_fill"] = default_config["K"], default_config["K_fill"]
    if cfg["M"] < 2 * cfg["K"] ** 2:
        warn("[CONFIG] M must be >= 2K^2, raising it")
        cfg["M"] = 2 * cfg["K"] ** 2
    log(f"[CONFIG] loaded {p}")
    return cfg


config = load_config()
