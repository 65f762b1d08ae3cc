"""Built-in model-variant profiles.

The shipped defaults live in ``data/default_catalog.yaml`` so that every
number used by the random instance generator is configuration data rather
than a constant buried in code.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import yaml

from .errors import ValidationError


@dataclass(frozen=True)
class VariantProfile:
    """Reference figures for one variant, before per-node heterogeneity."""

    latency_ms: float
    max_load: float
    memory: float
    interference_coeff: float


@dataclass(frozen=True)
class ModelProfile:
    name: str
    variants: tuple[VariantProfile, ...]


def _profile_from_dict(entry: dict) -> ModelProfile:
    lat = entry["latency_ms"]
    load = entry["max_load"]
    mem = entry["memory"]
    coeff = entry.get("interference_coeff", 0.1)
    if not (len(lat) == len(load) == len(mem)):
        raise ValidationError("catalog_profile", f"{entry.get('name')}: per-variant lists differ in length")
    variants = tuple(
        VariantProfile(latency_ms=float(lat[k]), max_load=float(load[k]),
                       memory=float(mem[k]), interference_coeff=float(coeff))
        for k in range(len(lat))
    )
    return ModelProfile(name=str(entry["name"]), variants=variants)


def load_default_profiles() -> tuple[ModelProfile, ...]:
    """Load the packaged model-variant profiles."""
    text = resources.files("mvsp").joinpath("data/default_catalog.yaml").read_text(encoding="utf-8")
    doc = yaml.safe_load(text)
    return tuple(_profile_from_dict(entry) for entry in doc["models"])
