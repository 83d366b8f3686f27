"""Log-domain link budget: path loss, received power, margin and range.

Everything here stays in dB/dBm; there is no conversion to linear power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import ConfigError, DomainError, LinkNeverCloses
from .phy import PhyConfig

FSPL_CONSTANT_DB = 32.44  # d in km, f in MHz
TX_POWER_ENVELOPE_DBM = (0.0, 30.0)
# Below this the far-field path loss relation is meaningless.
MIN_RANGE_KM = 0.001

# Sensitivity at 125 kHz, shaped like common SX127x datasheets.
SENSITIVITY_125KHZ_DBM = {
    7: -123.0,
    8: -126.0,
    9: -129.0,
    10: -132.0,
    11: -134.5,
    12: -137.0,
}
# Each doubling of bandwidth raises the noise floor by ~3 dB.
BANDWIDTH_PENALTY_DB = {125_000: 0.0, 250_000: 3.0, 500_000: 6.0}
SENSITIVITY_FLOOR_DBM = -148.0

# Conservative figure used in the worked 868 MHz / 1.5 km example.
CONSERVATIVE_SENSITIVITY_DBM = -120.0


@dataclass(frozen=True)
class LinkParams:
    tx_power_dbm: float = 17.0
    tx_gain_dbi: float = 2.0
    rx_gain_dbi: float = 2.0
    system_loss_db: float = 5.0
    carrier_freq_mhz: float = 868.0
    distance_km: float = 1.5
    # None: look the value up from the spreading-factor table.
    rx_sensitivity_dbm: float | None = None
    allow_any_tx_power: bool = False

    def __post_init__(self):
        if not self.distance_km > 0:
            raise ConfigError("distance_km", f"must be > 0, got {self.distance_km}")
        if not self.carrier_freq_mhz > 0:
            raise ConfigError("carrier_freq_mhz", f"must be > 0, got {self.carrier_freq_mhz}")
        if not self.system_loss_db >= 0:
            raise ConfigError("system_loss_db", f"must be >= 0, got {self.system_loss_db}")
        lo, hi = TX_POWER_ENVELOPE_DBM
        if not self.allow_any_tx_power and not lo <= self.tx_power_dbm <= hi:
            raise ConfigError(
                "tx_power_dbm", f"{self.tx_power_dbm} outside regulatory envelope [{lo}, {hi}]"
            )


@dataclass(frozen=True)
class BudgetResult:
    path_loss_db: float
    rx_power_dbm: float
    link_margin_db: float
    feasible: bool


def table_iii() -> LinkParams:
    """Worked-example parameters: 17 dBm, 2/2 dBi, 5 dB loss, 868 MHz, 1.5 km, -120 dBm."""
    return LinkParams(rx_sensitivity_dbm=CONSERVATIVE_SENSITIVITY_DBM)


def fspl(distance_km: float, carrier_freq_mhz: float) -> float:
    if not distance_km > 0:
        raise DomainError(f"distance must be positive, got {distance_km}")
    if not carrier_freq_mhz > 0:
        raise DomainError(f"frequency must be positive, got {carrier_freq_mhz}")
    return 20 * math.log10(distance_km) + 20 * math.log10(carrier_freq_mhz) + FSPL_CONSTANT_DB


def received_power(params: LinkParams) -> float:
    return (
        params.tx_power_dbm
        + params.tx_gain_dbi
        + params.rx_gain_dbi
        - fspl(params.distance_km, params.carrier_freq_mhz)
        - params.system_loss_db
    )


def link_margin(rx_power_dbm: float, sensitivity_dbm: float) -> float:
    return rx_power_dbm - sensitivity_dbm


def sensitivity_for(phy: PhyConfig, table: dict[int, float] | None = None) -> float:
    """Receiver sensitivity for a PHY configuration.

    ``table`` replaces the built-in 125 kHz column; the bandwidth penalty
    still applies on top of it.
    """
    table = SENSITIVITY_125KHZ_DBM if table is None else table
    try:
        base = table[phy.spreading_factor]
        penalty = BANDWIDTH_PENALTY_DB[phy.bandwidth_hz]
    except KeyError:
        raise ConfigError(
            "phy", f"no sensitivity for SF{phy.spreading_factor}/{phy.bandwidth_hz} Hz"
        ) from None
    return max(base + penalty, SENSITIVITY_FLOOR_DBM)


def effective_sensitivity(params: LinkParams, phy: PhyConfig | None) -> float:
    if params.rx_sensitivity_dbm is not None:
        return params.rx_sensitivity_dbm
    if phy is None:
        raise ConfigError("rx_sensitivity_dbm", "required when no PHY configuration is given")
    return sensitivity_for(phy)


def evaluate(
    params: LinkParams, phy: PhyConfig | None = None, margin_threshold_db: float = 0.0
) -> BudgetResult:
    loss = fspl(params.distance_km, params.carrier_freq_mhz)
    rx = received_power(params)
    margin = link_margin(rx, effective_sensitivity(params, phy))
    return BudgetResult(loss, rx, margin, margin >= margin_threshold_db)


def max_range(
    params: LinkParams, phy: PhyConfig | None = None, margin_threshold_db: float = 0.0
) -> float:
    """Largest distance (km) at which the margin still meets the threshold.

    ``params.distance_km`` is ignored. Closed-form inversion of the
    path-loss logarithm.
    """
    if not math.isfinite(margin_threshold_db):
        raise DomainError("margin threshold must be finite")
    sens = effective_sensitivity(params, phy)
    # allowed path loss, then solve 20 log10(d) = allowed - 20 log10(f) - C
    allowed = (
        params.tx_power_dbm
        + params.tx_gain_dbi
        + params.rx_gain_dbi
        - params.system_loss_db
        - sens
        - margin_threshold_db
    )
    exponent = (allowed - 20 * math.log10(params.carrier_freq_mhz) - FSPL_CONSTANT_DB) / 20
    d = 10**exponent
    if d < MIN_RANGE_KM:
        raise LinkNeverCloses(
            f"link does not reach {margin_threshold_db} dB margin beyond {MIN_RANGE_KM * 1000:.0f} m"
        )
    return d


def at_distance(params: LinkParams, distance_km: float) -> LinkParams:
    return replace(params, distance_km=distance_km)
