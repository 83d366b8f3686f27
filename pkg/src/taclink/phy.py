"""LoRa physical-layer timing: symbol time, time-on-air and raw bitrate."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, PayloadTooLarge

BANDWIDTHS_HZ = (125_000, 250_000, 500_000)
MAX_PAYLOAD_BYTES = 255

# Packet-duration constants from the standard LoRa airtime expression:
#   n_payload = 8 + max(ceil((8PL - 4SF + 28 + 16CRC - 20IH) / (4(SF - 2DE))) * (CR + 4), 0)
# 28 covers the 20-bit header-plus-sync overhead spread over the first block,
# 16 is the payload CRC, 20 is removed when the explicit header is absent.
PAYLOAD_SYMBOL_FLOOR = 8
PREAMBLE_SYNC_SYMBOLS = 4.25
HEADER_OVERHEAD_BITS = 28
CRC_BITS = 16
IMPLICIT_HEADER_SAVING_BITS = 20
LDRO_SYMBOL_THRESHOLD_MS = 16.0


@dataclass(frozen=True)
class PhyConfig:
    spreading_factor: int = 7
    bandwidth_hz: int = 125_000
    coding_rate_denominator: int = 5
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    # None means derive from symbol duration.
    low_data_rate_optimize: bool | None = field(default=None)

    def __post_init__(self):
        if not 7 <= self.spreading_factor <= 12:
            raise ConfigError("spreading_factor", f"must be 7..12, got {self.spreading_factor}")
        if self.bandwidth_hz not in BANDWIDTHS_HZ:
            raise ConfigError("bandwidth_hz", f"must be one of {BANDWIDTHS_HZ}, got {self.bandwidth_hz}")
        if not 5 <= self.coding_rate_denominator <= 8:
            raise ConfigError(
                "coding_rate_denominator", f"must be 5..8, got {self.coding_rate_denominator}"
            )
        if self.preamble_symbols < 0:
            raise ConfigError("preamble_symbols", "must be >= 0")

    @property
    def ldro(self) -> bool:
        if self.low_data_rate_optimize is not None:
            return self.low_data_rate_optimize
        return symbol_duration(self) > LDRO_SYMBOL_THRESHOLD_MS


@dataclass(frozen=True)
class AirtimeBreakdown:
    symbol_time_ms: float
    preamble_ms: float
    payload_symbols: int
    payload_ms: float
    total_ms: float


def symbol_duration(phy: PhyConfig) -> float:
    """Chirp duration 2**SF / BW in milliseconds."""
    return (2**phy.spreading_factor * 1000) / phy.bandwidth_hz


def payload_symbol_count(phy: PhyConfig, payload_bytes: int) -> int:
    if not 0 <= payload_bytes <= MAX_PAYLOAD_BYTES:
        raise PayloadTooLarge(f"payload of {payload_bytes} bytes does not fit one LoRa frame")
    sf = phy.spreading_factor
    bits = (
        8 * payload_bytes
        - 4 * sf
        + HEADER_OVERHEAD_BITS
        + CRC_BITS * int(phy.crc_on)
        - IMPLICIT_HEADER_SAVING_BITS * int(not phy.explicit_header)
    )
    per_block = 4 * (sf - 2 * int(phy.ldro))
    blocks = -(-bits // per_block)  # integer ceil, exact for negatives too
    return PAYLOAD_SYMBOL_FLOOR + max(blocks * phy.coding_rate_denominator, 0)


def _quarter_symbols(phy: PhyConfig, payload_bytes: int) -> tuple[int, int]:
    n_payload = payload_symbol_count(phy, payload_bytes)
    return 4 * phy.preamble_symbols + int(4 * PREAMBLE_SYNC_SYMBOLS), 4 * n_payload


def time_on_air(phy: PhyConfig, payload_bytes: int) -> AirtimeBreakdown:
    """Airtime of one frame carrying ``payload_bytes`` of PHY payload."""
    pre_q, pay_q = _quarter_symbols(phy, payload_bytes)
    # one division of exact integers per term keeps each value correctly rounded
    scale = 4 * phy.bandwidth_hz
    chips = 2**phy.spreading_factor * 1000
    preamble_ms = pre_q * chips / scale
    payload_ms = pay_q * chips / scale
    return AirtimeBreakdown(
        symbol_time_ms=symbol_duration(phy),
        preamble_ms=preamble_ms,
        payload_symbols=pay_q // 4,
        payload_ms=payload_ms,
        total_ms=preamble_ms + payload_ms,
    )


def airtime_us(phy: PhyConfig, payload_bytes: int) -> int:
    """Airtime in whole microseconds.

    Exact for every supported SF/BW pair, since a quarter symbol is an
    integer number of microseconds whenever SF >= 7 and BW <= 500 kHz.
    """
    pre_q, pay_q = _quarter_symbols(phy, payload_bytes)
    q_us, rem = divmod(2**phy.spreading_factor * 1_000_000, 4 * phy.bandwidth_hz)
    assert rem == 0
    return (pre_q + pay_q) * q_us


def effective_bitrate(phy: PhyConfig) -> float:
    """Raw LoRa bitrate SF * BW / 2**SF * 4/CR in bits per second."""
    sf = phy.spreading_factor
    return sf * (phy.bandwidth_hz / 2**sf) * (4 / phy.coding_rate_denominator)


def sf_sweep(payload_bytes: int, base: PhyConfig | None = None) -> list[tuple[int, AirtimeBreakdown]]:
    base = base or PhyConfig()
    rows = []
    for sf in range(7, 13):
        phy = PhyConfig(
            spreading_factor=sf,
            bandwidth_hz=base.bandwidth_hz,
            coding_rate_denominator=base.coding_rate_denominator,
            preamble_symbols=base.preamble_symbols,
            explicit_header=base.explicit_header,
            crc_on=base.crc_on,
        )
        rows.append((sf, time_on_air(phy, payload_bytes)))
    return rows
