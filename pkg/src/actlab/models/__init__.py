"""Reference models and the id -> (model, config) registry."""
from __future__ import annotations

from ..engine import ConfigurationError
from ..rng import RngStream
from .base import Model, config_from_mapping
from .dpd import DemographicPD, DpdConfig
from .schelling import SchellingConfig, SchellingModel
from .spatialpd import SpatialPD, SpatialPdConfig

MODELS = {
    "schelling": (SchellingModel, SchellingConfig),
    "dpd": (DemographicPD, DpdConfig),
    "spatialpd": (SpatialPD, SpatialPdConfig),
}


def make_config(model_id: str, values: dict | None = None):
    """Config for ``model_id`` from a flat mapping of field overrides.

    For ``dpd`` the extra key ``setting`` (1-5) selects a preset that the
    remaining keys then override.
    """
    if model_id not in MODELS:
        raise ConfigurationError(f"unknown model {model_id!r}; valid models: {', '.join(MODELS)}")
    values = dict(values or {})
    _, cfg_cls = MODELS[model_id]
    if model_id == "dpd" and "setting" in values:
        setting = values.pop("setting")
        config_from_mapping(cfg_cls, values)  # reject unknown keys first
        return cfg_cls.setting(int(setting), **values)
    return config_from_mapping(cfg_cls, values)


def build_model(model_id: str, values: dict | None, rng: RngStream) -> Model:
    cls, _ = MODELS[model_id] if model_id in MODELS else (None, None)
    config = make_config(model_id, values)
    return cls(config, rng)


__all__ = [
    "MODELS", "Model", "make_config", "build_model",
    "SchellingModel", "SchellingConfig", "DemographicPD", "DpdConfig", "SpatialPD",
    "SpatialPdConfig",
]
