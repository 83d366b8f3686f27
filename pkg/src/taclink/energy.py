"""Duty-cycle power model and battery endurance."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class PowerProfile:
    """Per-state radio power draw and battery.

    The numbers are modelling assumptions, not measurements.
    """

    p_tx_mw: float = 400.0
    p_listen_mw: float = 40.0
    p_sleep_mw: float = 5.0
    battery_capacity_mah: float = 500.0
    battery_voltage_v: float = 3.7

    def __post_init__(self):
        if not self.p_tx_mw >= self.p_listen_mw >= self.p_sleep_mw >= 0:
            raise ConfigError("power", "need p_tx_mw >= p_listen_mw >= p_sleep_mw >= 0")
        if self.battery_capacity_mah <= 0:
            raise ConfigError("power.battery_capacity_mah", "must be > 0")
        if self.battery_voltage_v <= 0:
            raise ConfigError("power.battery_voltage_v", "must be > 0")

    @property
    def battery_energy_mwh(self) -> float:
        return self.battery_capacity_mah * self.battery_voltage_v


def _check_fraction(name: str, x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {x}")


def average_power(duty_cycle_tx: float, profile: PowerProfile) -> float:
    """Two-state average draw D * P_tx + (1 - D) * P_sleep, in mW."""
    _check_fraction("duty cycle", duty_cycle_tx)
    d = duty_cycle_tx
    return d * profile.p_tx_mw + (1 - d) * profile.p_sleep_mw


def average_power_three_state(
    tx_fraction: float, listen_fraction: float, sleep_fraction: float, profile: PowerProfile
) -> float:
    """Average draw when the radio also spends time listening.

    Fractions must be non-negative and sum to one. With
    ``listen_fraction == 0`` this reduces to :func:`average_power`.
    """
    for name, x in (("tx", tx_fraction), ("listen", listen_fraction), ("sleep", sleep_fraction)):
        _check_fraction(name + " fraction", x)
    if abs(tx_fraction + listen_fraction + sleep_fraction - 1.0) > 1e-9:
        raise DomainError("state fractions must sum to 1")
    return (
        tx_fraction * profile.p_tx_mw
        + listen_fraction * profile.p_listen_mw
        + sleep_fraction * profile.p_sleep_mw
    )


def average_power_from_times(tx_us: int, listen_us: int, sleep_us: int, profile: PowerProfile) -> float:
    total = tx_us + listen_us + sleep_us
    if total <= 0:
        raise DomainError("elapsed time must be positive")
    return (
        tx_us * profile.p_tx_mw + listen_us * profile.p_listen_mw + sleep_us * profile.p_sleep_mw
    ) / total


def battery_life_hours(avg_power_mw: float, profile: PowerProfile) -> float:
    if avg_power_mw <= 0:
        raise DomainError("average power must be positive")
    return profile.battery_energy_mwh / avg_power_mw
