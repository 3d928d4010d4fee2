"""Access to ``calibration.json`` (statistical slack and tuning constants)."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load() -> dict:
    text = resources.files(__package__).joinpath("calibration.json").read_text()
    return json.loads(text)


def get(section: str, key: str):
    return load()[section][key]
