"""Domain presets reproducing the five reference examples."""
from __future__ import annotations

import copy
import json
from importlib import resources

from ..domain import FracturedDomain
from ..errors import DomainError

NAMES = ("example1", "example2", "example3", "example4", "example5")


def available() -> list[str]:
    files = resources.files(__name__)
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def preset_json(name: str, variant: str | None = None) -> dict:
    fname = f"{name}.json"
    res = resources.files(__name__) / fname
    if not res.is_file():
        raise DomainError(f"unknown preset {name!r}; available: {', '.join(available())}")
    data = json.loads(res.read_text())
    variants = data.pop("variants", {})
    if variant is not None:
        if variant not in variants:
            raise DomainError(f"preset {name!r} has no variant {variant!r}; known: {sorted(variants)}")
        data = apply_overrides(data, variants[variant])
        data["name"] = f"{name}/{variant}"
    return data


def apply_overrides(data: dict, overrides: dict) -> dict:
    """Override per-component entries: ``{"cracks": {"2": {"speed": 0.25}}}`` (1-based)."""
    data = copy.deepcopy(data)
    for kind, per_comp in overrides.items():
        comps = data["components"].get(kind)
        if comps is None:
            raise DomainError(f"override for missing component kind {kind!r}")
        for idx, fields in per_comp.items():
            k = int(idx) - 1
            if not 0 <= k < len(comps):
                raise DomainError(f"override index {idx} out of range for {kind}")
            comps[k].update(fields)
            if "speed" in fields:
                comps[k].pop("beta", None)
            if "beta" in fields:
                comps[k].pop("speed", None)
    return data


def load_preset(name: str, variant: str | None = None) -> FracturedDomain:
    return FracturedDomain.from_json(preset_json(name, variant))
