"""Link engineering and simulation for encrypted voice over LoRa."""

from .energy import PowerProfile, average_power, average_power_three_state, battery_life_hours
from .linkbudget import (
    BudgetResult,
    LinkParams,
    fspl,
    link_margin,
    max_range,
    received_power,
    sensitivity_for,
)
from .phy import AirtimeBreakdown, PhyConfig, effective_bitrate, symbol_duration, time_on_air
from .sim import Scenario, SimReport, latency_breakdown, run, simulate, sweep

__version__ = "0.1.0"
