"""Scenario configuration and profile loading.

Profiles are YAML mappings. Power-like quantities are written in dBm and
Rician factors in dB inside a profile; they are converted to linear units
exactly once, in :func:`config_from_mapping`. Everything stored on
:class:`ScenarioConfig` is linear-scale.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .errors import ConfigError


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * np.log10(watt) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and algorithmic parameters of one scenario.

    Defaults form the reference profile: a BS with 4 transmit and 4 receive
    antennas at the origin, a 32-element RIS at (5, 1) m, 2 users in a 5 m
    disc around (70, 0) m and 2 scatterers in a 5 m disc around (90, 10) m,
    30 dBm budget, -110 dBm noise, rate weights 2, rate floor 4 bits/s/Hz.
    """

    n_tx: int = 4
    n_rx: int = 4
    n_ris: int = 32
    n_users: int = 2
    n_scatterers: int = 2
    wavelength_m: float = 0.1
    rcs_m2: float = 1.0
    bs_pos: tuple[float, float] = (0.0, 0.0)
    ris_pos: tuple[float, float] = (5.0, 1.0)
    user_center: tuple[float, float] = (70.0, 0.0)
    user_radius: float = 5.0
    scatterer_center: tuple[float, float] = (90.0, 10.0)
    scatterer_radius: float = 5.0
    rician_factor_bu: float = db_to_linear(3.0)
    rician_factor_ru: float = db_to_linear(3.0)
    rician_factor_br: float = db_to_linear(3.0)
    tx_power_budget_w: float = 1.0
    noise_power_w: float = dbm_to_watt(-110.0)
    rate_threshold: float = 4.0
    rate_weights: tuple[float, ...] = (2.0, 2.0)
    phase_bits: int = 4
    weight_epsilon: float = 0.1
    mi_norm: float | None = None
    rate_norm: float | None = None
    n_samples: int = 1000
    rng_seed: int = 0

    # solver settings
    ao_tol: float = 1e-3
    ao_max_iter_sdr: int = 50
    ao_max_iter_rg: int = 10
    odi_tol: float = 0.0
    odi_max_sweeps: int = 100
    rsa_tol: float = 1e-6
    rsa_max_iter: int = 30
    n_draws: int = 1000
    sdp_tol: float = 1e-9
    init_retries: int = 100

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_ris", "n_users", "n_scatterers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_users > self.n_tx:
            raise ConfigError("n_users must not exceed n_tx")
        if self.tx_power_budget_w <= 0 or self.noise_power_w <= 0:
            raise ConfigError("power budget and noise power must be positive")
        if not 0.0 <= self.weight_epsilon <= 1.0:
            raise ConfigError("weight_epsilon must lie in [0, 1]")
        if self.phase_bits < 1:
            raise ConfigError("phase_bits must be >= 1")
        if self.wavelength_m <= 0 or self.rcs_m2 <= 0:
            raise ConfigError("wavelength and rcs must be positive")
        if self.user_radius < 0 or self.scatterer_radius < 0:
            raise ConfigError("radii must be non-negative")
        if len(self.rate_weights) != self.n_users:
            raise ConfigError("rate_weights needs one entry per user")
        if any(w <= 0 for w in self.rate_weights):
            raise ConfigError("rate_weights must be positive")
        for name in ("mi_norm", "rate_norm"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive when set")

    @property
    def n_levels(self) -> int:
        return 2 ** self.phase_bits

    @property
    def sinr_floor(self) -> np.ndarray:
        """Per-user SINR targets equivalent to the weighted rate floor."""
        w = np.asarray(self.rate_weights, dtype=float)
        return 2.0 ** (self.rate_threshold / w) - 1.0

    def replace(self, **changes) -> "ScenarioConfig":
        if "n_users" in changes and "rate_weights" not in changes:
            w = self.rate_weights[0] if self.rate_weights else 2.0
            changes["rate_weights"] = (w,) * changes["n_users"]
        return dataclasses.replace(self, **changes)


# profile keys that carry logarithmic units
_DBM_KEYS = {"tx_power_dbm": "tx_power_budget_w", "noise_power_dbm": "noise_power_w"}
_DB_KEYS = {
    "rician_factor_bu_db": "rician_factor_bu",
    "rician_factor_ru_db": "rician_factor_ru",
    "rician_factor_br_db": "rician_factor_br",
}
_TUPLE_KEYS = {"bs_pos", "ris_pos", "user_center", "scatterer_center", "rate_weights"}


def config_from_mapping(data: Mapping[str, Any], base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Build a config from a profile mapping, converting dBm/dB keys."""
    base = base or ScenarioConfig()
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    changes: dict[str, Any] = {}
    for key, value in data.items():
        if key in _DBM_KEYS:
            changes[_DBM_KEYS[key]] = dbm_to_watt(float(value))
        elif key in _DB_KEYS:
            changes[_DB_KEYS[key]] = db_to_linear(float(value))
        elif key in known:
            changes[key] = tuple(float(v) for v in value) if key in _TUPLE_KEYS else value
        else:
            raise ConfigError(f"unknown profile key {key!r}")
    try:
        return base.replace(**changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_profile(path: str | Path | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError("profile must be a key/value mapping")
    return config_from_mapping(data)


REFERENCE_PROFILE_YAML = """\
# Reference scenario. Powers in dBm, Rician factors in dB.
n_tx: 4
n_rx: 4
n_ris: 32
n_users: 2
n_scatterers: 2
wavelength_m: 0.1
rcs_m2: 1.0
bs_pos: [0.0, 0.0]
ris_pos: [5.0, 1.0]
user_center: [70.0, 0.0]
user_radius: 5.0
scatterer_center: [90.0, 10.0]
scatterer_radius: 5.0
rician_factor_bu_db: 3.0
rician_factor_ru_db: 3.0
rician_factor_br_db: 3.0
tx_power_dbm: 30.0
noise_power_dbm: -110.0
rate_threshold: 4.0
rate_weights: [2.0, 2.0]
phase_bits: 4
weight_epsilon: 0.1
n_samples: 1000
rng_seed: 0
"""
