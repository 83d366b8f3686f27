import json
from dataclasses import replace

import numpy as np
import pytest

from taclink import linkbudget as lb, phy, sim
from taclink.energy import PowerProfile
from taclink.errors import ConfigError, EmptyDeliverySet
from taclink.mac import EventKind
from taclink.phy import PhyConfig

import oracles

SHORT = sim.Scenario(duration_s=60.0)


@pytest.fixture(scope="module")
def default_run():
    return sim.simulate(sim.Scenario())


def with_sf(sc, sf):
    return replace(sc, phy=replace(sc.phy, spreading_factor=sf))


# --- channel -----------------------------------------------------------------

def test_channel_table_iii_always_delivers():
    ch = sim.ChannelModel(link=lb.table_iii())
    out = sim.apply_channel(ch, PhyConfig())
    assert out.delivery is sim.Delivery.DELIVERED
    assert out.margin_db == pytest.approx(41.27, abs=0.01)


def test_channel_below_sensitivity_always_lost():
    ch = sim.ChannelModel(link=replace(lb.table_iii(), rx_sensitivity_dbm=-70))
    assert all(sim.apply_channel(ch, PhyConfig()).delivery is sim.Delivery.LOST for _ in range(10))


def _channel_with_margin(m, sigma):
    base = lb.LinkParams()
    return sim.ChannelModel(
        link=replace(base, rx_sensitivity_dbm=lb.received_power(base) - m), shadowing_sigma_db=sigma
    )


def test_channel_monte_carlo_zero_margin():
    rng = np.random.Generator(np.random.PCG64(7))
    ch = _channel_with_margin(0.0, 6.0)
    n = 100_000
    hits = sum(sim.apply_channel(ch, PhyConfig(), rng).delivery is sim.Delivery.DELIVERED for _ in range(n))
    assert hits / n == pytest.approx(oracles.normal_cdf(0.0), abs=0.01)


def test_channel_sigma_requires_rng():
    with pytest.raises(ValueError):
        sim.apply_channel(_channel_with_margin(0, 3), PhyConfig())


# --- speech source -----------------------------------------------------------

def test_talk_schedule_alternates_without_overlap():
    pat = sim.SpeechPattern()
    sched = sim.talk_schedule(pat, 300_000, guard_ms=240)
    spans = sorted((s, e, nid) for nid, ivs in enumerate(sched) for s, e in ivs)
    for (s1, e1, n1), (s2, e2, n2) in zip(spans, spans[1:]):
        assert e1 + 240 <= s2 + 1e-9
        assert n1 != n2
    talk = sum(e - s for s, e in sched[0]) / 300_000
    assert 0.15 < talk < 0.25


def test_zero_talk_schedule():
    assert sim.talk_schedule(sim.SpeechPattern(talk_ms=0), 10_000) == [[], []]


# --- run ---------------------------------------------------------------------

def test_quiescent_run():
    sc = replace(SHORT, speech=sim.SpeechPattern(talk_ms=0))
    rep = sim.run(sc)
    assert rep.packets_sent == 0
    assert rep.duty_cycle_per_node == [0.0, 0.0]
    assert rep.avg_power_mw == sc.power.p_sleep_mw
    assert rep.latency_p50_ms is None
    with pytest.raises(EmptyDeliverySet):
        sim.latency_breakdown(rep)


def test_determinism(default_run):
    rep, ev = default_run
    rep2, ev2 = sim.simulate(sim.Scenario())
    assert rep.to_json() == rep2.to_json()
    assert sim.events_to_jsonl(ev) == sim.events_to_jsonl(ev2)


def test_seed_changes_outcome():
    a = sim.run(SHORT)
    b = sim.run(SHORT.with_seed(7))
    assert a.to_json() != b.to_json()


def test_sf9_latency_under_300(default_run):
    rep = sim.run(with_sf(SHORT, 9))
    assert rep.latency_p95_ms <= 300


def test_breakdown_single_packet():
    # one short talk spurt -> a handful of packets; keep the first only
    rep = sim.run(replace(SHORT, speech=sim.SpeechPattern(talk_ms=40, silence_ms=100_000, jitter=0)))
    rep.packets = rep.packets[:1]
    bd = sim.latency_breakdown(rep)
    p = rep.packets[0]
    for name in sim.LATENCY_COMPONENTS + ("t_total",):
        assert bd[name]["mean"] == getattr(p, name)


def test_airtime_component_matches_phy(default_run):
    rep, _ = default_run
    expected = phy.time_on_air(PhyConfig(), 30).total_ms
    assert all(p.t_airtime == expected for p in rep.packets)


def test_sf12_telemetry_latency():
    rep = sim.run(with_sf(SHORT, 12))
    floor = float(oracles.airtime_ms_exact(12, 125_000, 5, 30))
    assert floor > 300
    assert sim.latency_breakdown(rep)["t_total"]["p50"] > 300


def test_strict_throughput_rejects_sf9():
    with pytest.raises(ConfigError) as exc:
        sim.run(replace(with_sf(SHORT, 9), strict_throughput=True))
    assert exc.value.field == "codec.bitrate_bps"
    sim.run(replace(with_sf(SHORT, 8), strict_throughput=True, duration_s=5))


def test_oversized_packet_rejected():
    sc = replace(SHORT, codec=replace(SHORT.codec, frame_ms=1000))
    with pytest.raises(ConfigError):
        sim.run(sc)


def test_corruption_counts_as_crc_loss():
    rep = sim.run(replace(SHORT, corruption_prob=0.2))
    assert rep.packets_lost_crc > 0
    assert rep.packets_sent == (rep.packets_delivered + rep.packets_lost_channel
                                + rep.packets_lost_collision + rep.packets_lost_crc)


def test_doubletalk_collides():
    sc = replace(SHORT, speech=sim.SpeechPattern(doubletalk=True, jitter=0))
    rep, ev = sim.simulate(sc)
    assert rep.packets_lost_collision > 0
    coll = [e for e in ev if e.kind is EventKind.COLLISION]
    assert len(coll) == rep.packets_lost_collision + rep.packets_in_flight_at_end


def test_shadowing_gives_channel_losses():
    link = replace(lb.LinkParams(), rx_sensitivity_dbm=lb.received_power(lb.LinkParams()))
    sc = replace(SHORT, channel=sim.ChannelModel(link=link, shadowing_sigma_db=6.0))
    rep = sim.run(sc)
    ratio = rep.packets_delivered / rep.packets_sent
    assert 0.4 < ratio < 0.6


# --- invariants over several runs ----------------------------------------------

INVARIANT_SCENARIOS = [
    sim.Scenario(duration_s=120.0),
    with_sf(sim.Scenario(duration_s=120.0), 9),
    with_sf(sim.Scenario(duration_s=120.0), 12),
    replace(sim.Scenario(duration_s=60.0), speech=sim.SpeechPattern(doubletalk=True)),
    replace(sim.Scenario(duration_s=60.0), corruption_prob=0.1,
            channel=sim.ChannelModel(shadowing_sigma_db=8.0,
                                     link=replace(lb.LinkParams(), rx_sensitivity_dbm=-80.0))),
    replace(sim.Scenario(duration_s=45.5), speech=sim.SpeechPattern(talk_ms=500, silence_ms=500, seed=3)),
]


def _intervals(events, node, start_kind, end_kind, end_us):
    out, open_ = [], {}
    for e in events:
        if e.node_id != node:
            continue
        if e.kind is start_kind:
            open_[e.packet_ref] = e.time_us
        elif e.kind is end_kind and e.packet_ref in open_:
            out.append((open_.pop(e.packet_ref), e.time_us))
    out += [(s, end_us) for s in open_.values()]
    return out


def _energy_integral(events, node, end_us, power: PowerProfile):
    draw = {"SLEEP": power.p_sleep_mw, "LISTEN": power.p_listen_mw, "TRANSMIT": power.p_tx_mw}
    mode, t_prev, acc = "SLEEP", 0, 0.0
    for e in events:
        if e.node_id != node:
            continue
        new = {EventKind.WAKE: "LISTEN", EventKind.SLEEP: "SLEEP",
               EventKind.TX_START: "TRANSMIT", EventKind.TX_END: "LISTEN"}.get(e.kind)
        if new is None:
            continue
        acc += draw[mode] * (e.time_us - t_prev)
        mode, t_prev = new, e.time_us
    acc += draw[mode] * (end_us - t_prev)
    return acc / end_us


@pytest.mark.parametrize("sc", INVARIANT_SCENARIOS, ids=range(len(INVARIANT_SCENARIOS)))
def test_invariants(sc):
    rep, events = sim.simulate(sc)
    end = sc.duration_us
    # conservation
    assert rep.packets_sent == (rep.packets_delivered + rep.packets_lost_channel
                                + rep.packets_lost_collision + rep.packets_lost_crc)
    # latency components sum to the total, exactly
    for p in rep.delivered:
        assert p.t_total == p.t_encoding + p.t_encryption + p.t_packetization + p.t_airtime + p.t_decoding
        assert p.t_queue_ms >= 0
    for node in rep.nodes:
        assert node.tx_us + node.listen_us + node.sleep_us == end
        # event-log summation oracle for the duty cycle
        tx = _intervals(events, node.node_id, EventKind.TX_START, EventKind.TX_END, end)
        assert sum(e - s for s, e in tx) == node.tx_us
        assert node.duty_cycle == node.tx_us / end
        # half duplex: no RX interval overlaps this node's TX intervals
        rx = _intervals(events, node.node_id, EventKind.RX_START, EventKind.RX_END, end)
        for rs, re_ in rx:
            for ts, te in tx:
                assert not (rs < te and ts < re_)
        # energy integral from the event log vs accumulators
        integral = _energy_integral(events, node.node_id, end, sc.power)
        assert integral == pytest.approx(node.avg_power_mw, rel=1e-3)
    # per-node event times are non-decreasing
    for nid in range(2):
        times = [e.time_us for e in events if e.node_id == nid]
        assert times == sorted(times)
    # channel consistency with sigma 0: one outcome for every packet
    if sc.channel.shadowing_sigma_db == 0 and sc.corruption_prob == 0:
        outcomes = {p.outcome for p in rep.packets if p.outcome != "lost_collision"}
        assert len(outcomes) <= 1


def test_no_collisions_when_vox_never_overlaps(default_run):
    rep, events = default_run
    opens = {0: [], 1: []}
    state = {}
    for e in events:
        if e.kind is EventKind.VOX_OPEN:
            state[e.node_id] = e.time_us
        elif e.kind is EventKind.VOX_CLOSE:
            opens[e.node_id].append((state.pop(e.node_id), e.time_us))
    for a0, a1 in opens[0]:
        for b0, b1 in opens[1]:
            assert not (a0 < b1 and b0 < a1)
    assert rep.packets_lost_collision == 0
    assert not any(e.kind is EventKind.COLLISION for e in events)


def test_duty_cycle_short_spurts_event_log_oracle():
    """40 ms frames at SF7, 500 ms talk spurts: D from the accumulators
    equals airtime summed over TX_START events divided by elapsed time."""
    sc = replace(sim.Scenario(duration_s=60.0), speech=sim.SpeechPattern(talk_ms=500, silence_ms=4500, jitter=0))
    rep, events = sim.simulate(sc)
    air = phy.time_on_air(sc.phy, sc.codec.packet_bytes).total_ms
    n_tx = sum(1 for e in events if e.kind is EventKind.TX_START and e.node_id == 0)
    assert rep.packets_in_flight_at_end == 0
    assert rep.duty_cycle_per_node[0] == pytest.approx(n_tx * air / 60_000, rel=1e-12)
    assert rep.frames_dropped_queue == 0


# --- sweeps ------------------------------------------------------------------

def test_distance_sweep_flips_at_max_range():
    link = lb.LinkParams(tx_power_dbm=0, tx_gain_dbi=0, rx_gain_dbi=0, system_loss_db=30,
                         rx_sensitivity_dbm=-120)
    boundary = lb.max_range(link, None, 0.0)
    assert 0.5 < boundary < 2.0
    sc = replace(sim.Scenario(duration_s=20.0), channel=sim.ChannelModel(link=link))
    values = [round(0.5 + 0.1 * i, 2) for i in range(16)]
    rows = sim.sweep_rows("distance", sim.sweep(sc, "distance", values))
    for v, row in zip(values, rows):
        assert row["delivery_ratio"] == (1.0 if v <= boundary else 0.0), v
    assert rows[0]["delivery_ratio"] == 1.0 and rows[-1]["delivery_ratio"] == 0.0


def test_sf_sweep_monotone_airtime():
    res = sim.sweep(sim.Scenario(duration_s=30.0), "sf", list(range(7, 13)))
    rows = sim.sweep_rows("sf", res)
    air = [r["airtime_p50_ms"] for r in rows]
    assert all(a < b for a, b in zip(air, air[1:]))


def test_tx_power_sweep_monotone_margin():
    rows = sim.sweep_rows("tx_power", sim.sweep(sim.Scenario(duration_s=20.0), "tx_power", [2, 8, 14, 20]))
    margins = [r["margin_mean_db"] for r in rows]
    assert margins == sorted(margins)


def test_payload_sweep_and_csv():
    res = sim.sweep(sim.Scenario(duration_s=10.0), "payload", [6, 12])
    text = sim.sweep_csv("payload", res)
    lines = text.strip().splitlines()
    assert lines[0].split(",") == list(sim.SWEEP_COLUMNS)
    assert len(lines) == 3
    assert res[0][1].packets[0].packet_bytes == 24


def test_sweep_parallel_matches_serial():
    sc = sim.Scenario(duration_s=10.0)
    a = sim.sweep(sc, "sf", [7, 8], workers=2)
    b = sim.sweep(sc, "sf", [7, 8])
    assert [r.to_json() for _, r in a] == [r.to_json() for _, r in b]


def test_sweep_errors_are_annotated():
    with pytest.raises(sim.SweepError, match="sf=6"):
        sim.sweep(sim.Scenario(duration_s=1.0), "sf", [6])
    with pytest.raises(ConfigError):
        sim.sweep(sim.Scenario(), "bogus", [1])


# --- scenario documents ------------------------------------------------------

def test_scenario_round_trip():
    sc = sim.Scenario()
    assert sim.Scenario.from_dict(json.loads(json.dumps(sc.to_dict()))) == sc


def test_scenario_errors_name_the_field():
    with pytest.raises(ConfigError) as exc:
        sim.Scenario.from_dict({"schema_version": 1, "phy": {"spreading_factor": 13}})
    assert exc.value.field == "phy.spreading_factor"
    with pytest.raises(ConfigError) as exc:
        sim.Scenario.from_dict({"channel": {"link": {"distance_km": -1}}})
    assert exc.value.field == "channel.link.distance_km"
    with pytest.raises(ConfigError) as exc:
        sim.Scenario.from_dict({"vox": {"threshold": 2}})
    assert exc.value.field == "vox.threshold"
    with pytest.raises(ConfigError) as exc:
        sim.Scenario.from_dict({"nope": 1})
    assert exc.value.field == "nope"
    with pytest.raises(ConfigError) as exc:
        sim.Scenario.from_dict({"schema_version": 2})
    assert exc.value.field == "schema_version"
