import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from taclink import phy
from taclink.errors import ConfigError, PayloadTooLarge
from taclink.phy import PhyConfig

import oracles


@pytest.mark.parametrize("sf,bw,expected", [(7, 125_000, 1.024), (12, 125_000, 32.768), (9, 250_000, 2.048)])
def test_symbol_duration(sf, bw, expected):
    assert phy.symbol_duration(PhyConfig(spreading_factor=sf, bandwidth_hz=bw)) == expected


def test_symbol_duration_doubles_with_sf():
    for bw in phy.BANDWIDTHS_HZ:
        for sf in range(7, 12):
            a = phy.symbol_duration(PhyConfig(spreading_factor=sf, bandwidth_hz=bw))
            b = phy.symbol_duration(PhyConfig(spreading_factor=sf + 1, bandwidth_hz=bw))
            assert 2 * a == b


def test_time_on_air_sf7_32_bytes():
    cfg = PhyConfig()
    got = phy.time_on_air(cfg, 32)
    expected = oracles.airtime_ms_exact(7, 125_000, 5, 32)
    assert expected == Fraction(71936, 1000)
    assert got.total_ms == pytest.approx(float(expected), abs=math.ulp(float(expected)))
    assert got.payload_symbols == 58
    assert got.total_ms == got.preamble_ms + got.payload_ms


def test_zero_payload_clamps_at_floor():
    # SF12 with implicit header and no CRC drives the ceil term negative
    cfg = PhyConfig(spreading_factor=12, explicit_header=False, crc_on=False)
    assert phy.payload_symbol_count(cfg, 0) == 8
    assert phy.time_on_air(PhyConfig(), 0).payload_symbols >= 8


def test_sf12_slower_than_sf7():
    assert phy.time_on_air(PhyConfig(spreading_factor=12), 30).total_ms > phy.time_on_air(PhyConfig(), 30).total_ms


def test_payload_cap():
    with pytest.raises(PayloadTooLarge):
        phy.time_on_air(PhyConfig(), 256)
    with pytest.raises(PayloadTooLarge):
        phy.time_on_air(PhyConfig(), -1)


def test_invalid_config():
    with pytest.raises(ConfigError):
        PhyConfig(spreading_factor=6)
    with pytest.raises(ConfigError):
        PhyConfig(bandwidth_hz=200_000)
    with pytest.raises(ConfigError):
        PhyConfig(coding_rate_denominator=9)


def test_ldro_auto():
    assert not PhyConfig(spreading_factor=10).ldro
    assert PhyConfig(spreading_factor=11).ldro
    assert PhyConfig(spreading_factor=12, bandwidth_hz=250_000).ldro
    assert not PhyConfig(spreading_factor=11, bandwidth_hz=250_000).ldro


def test_effective_bitrate():
    assert phy.effective_bitrate(PhyConfig()) == 5468.75
    assert phy.effective_bitrate(PhyConfig(spreading_factor=12)) == pytest.approx(292.97, abs=0.01)
    rates = [phy.effective_bitrate(PhyConfig(spreading_factor=sf)) for sf in range(7, 13)]
    assert all(a > b for a, b in zip(rates, rates[1:]))


def test_exhaustive_against_oracle():
    """Every SF x BW x CR x payload combination within one ulp."""
    for sf in range(7, 13):
        for bw in phy.BANDWIDTHS_HZ:
            for cr in range(5, 9):
                cfg = PhyConfig(spreading_factor=sf, bandwidth_hz=bw, coding_rate_denominator=cr)
                for pl in range(256):
                    got = phy.time_on_air(cfg, pl)
                    exact = float(oracles.airtime_ms_exact(sf, bw, cr, pl))
                    assert abs(got.total_ms - exact) <= math.ulp(exact), (sf, bw, cr, pl)
                    assert phy.airtime_us(cfg, pl) == oracles.airtime_ms_exact(sf, bw, cr, pl) * 1000


@settings(max_examples=200)
@given(
    sf=st.integers(7, 12), bw=st.sampled_from(phy.BANDWIDTHS_HZ), cr=st.integers(5, 8),
    pl=st.integers(0, 254), explicit=st.booleans(), crc=st.booleans(),
)
def test_monotone(sf, bw, cr, pl, explicit, crc):
    def toa(sf=sf, cr=cr, pl=pl):
        return phy.time_on_air(
            PhyConfig(spreading_factor=sf, bandwidth_hz=bw, coding_rate_denominator=cr,
                      explicit_header=explicit, crc_on=crc), pl).total_ms
    base = toa()
    assert toa(pl=pl + 1) >= base
    if cr < 8:
        assert toa(cr=cr + 1) >= base
    if sf < 12:
        assert toa(sf=sf + 1) >= base


def test_sf_sweep_rows():
    rows = phy.sf_sweep(30)
    assert [sf for sf, _ in rows] == list(range(7, 13))
    totals = [b.total_ms for _, b in rows]
    assert totals == sorted(totals)
