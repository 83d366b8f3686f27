"""``taclink`` command-line entry point.

Exit status: 0 success, 1 runtime failure, 2 configuration/usage error.
JSON and CSV output are stable; text output is for people and may change.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace

from . import energy, linkbudget, phy as phymod, pipeline, sim
from .errors import ConfigError, TaclinkError
from .linkbudget import LinkParams
from .phy import PhyConfig

log = logging.getLogger("taclink")

# (quantity, unit, published value, tolerance)
WORKED_EXAMPLE_VALUES = (
    ("path_loss_db", "dB", 94.73, 0.05),
    ("rx_power_dbm", "dBm", -78.73, 0.05),
    ("link_margin_db", "dB", 41.0, 0.5),
)


def worked_example_check() -> dict:
    """Run the 868 MHz / 1.5 km worked example through the budget chain."""
    res = linkbudget.evaluate(linkbudget.table_iii())
    checks = []
    for name, unit, published, tol in WORKED_EXAMPLE_VALUES:
        computed = getattr(res, name)
        checks.append({
            "quantity": name,
            "unit": unit,
            "computed": round(computed, 4),
            "published": published,
            "tolerance": tol,
            "pass": abs(computed - published) <= tol,
        })
    return {"checks": checks, "passed": all(c["pass"] for c in checks)}


def _emit(obj, fmt: str = "json") -> None:
    if fmt == "json":
        print(json.dumps(obj, indent=2, sort_keys=True))
    else:
        for k, v in obj.items():
            print(f"{k:>24}: {v}")


def _phy_from_args(args) -> PhyConfig:
    ldro = {"auto": None, "on": True, "off": False}[getattr(args, "ldro", "auto")]
    return PhyConfig(
        spreading_factor=args.sf,
        bandwidth_hz=args.bw,
        coding_rate_denominator=args.cr,
        preamble_symbols=getattr(args, "preamble", 8),
        explicit_header=not getattr(args, "implicit_header", False),
        crc_on=not getattr(args, "no_crc", False),
        low_data_rate_optimize=ldro,
    )


def cmd_link_budget(args) -> int:
    if args.scenario:
        sc = sim.load_scenario(args.scenario)
        base, phy = sc.channel.link, sc.phy
    else:
        base, phy = None, PhyConfig(spreading_factor=args.sf, bandwidth_hz=args.bw)
    flags = {
        "distance_km": ("--distance-km", args.distance_km),
        "carrier_freq_mhz": ("--freq-mhz", args.freq_mhz),
        "tx_power_dbm": ("--tx-dbm", args.tx_dbm),
        "tx_gain_dbi": ("--tx-gain", args.tx_gain),
        "rx_gain_dbi": ("--rx-gain", args.rx_gain),
        "system_loss_db": ("--loss-db", args.loss_db),
    }
    values = {}
    for field, (flag, value) in flags.items():
        if value is None:
            if base is None:
                raise ConfigError(field, f"missing required flag {flag}")
            value = getattr(base, field)
        values[field] = value
    sens = args.sensitivity if args.sensitivity is not None else (base.rx_sensitivity_dbm if base else None)
    params = LinkParams(**values, rx_sensitivity_dbm=sens, allow_any_tx_power=args.allow_any_tx_power)
    res = linkbudget.evaluate(params, phy, args.margin_threshold)
    out = asdict(res)
    out["sensitivity_dbm"] = linkbudget.effective_sensitivity(params, phy)
    _emit(out, args.format)
    return 0


def cmd_airtime(args) -> int:
    phy = _phy_from_args(args)
    if args.sweep:
        print("spreading_factor,symbol_time_ms,preamble_ms,payload_symbols,payload_ms,total_ms,effective_bitrate_bps")
        for sf, b in phymod.sf_sweep(args.payload, phy):
            bitrate = phymod.effective_bitrate(replace(phy, spreading_factor=sf))
            print(f"{sf},{b.symbol_time_ms},{b.preamble_ms},{b.payload_symbols},{b.payload_ms},{b.total_ms},{bitrate}")
        return 0
    out = asdict(phymod.time_on_air(phy, args.payload))
    out["effective_bitrate_bps"] = phymod.effective_bitrate(phy)
    out["low_data_rate_optimize"] = phy.ldro
    _emit(out, args.format)
    return 0


def _profile_from_args(args) -> energy.PowerProfile:
    return energy.PowerProfile(
        p_tx_mw=args.p_tx_mw,
        p_listen_mw=args.p_listen_mw,
        p_sleep_mw=args.p_sleep_mw,
        battery_capacity_mah=args.capacity_mah,
        battery_voltage_v=args.voltage,
    )


def tx_time_from_events(events: list[dict], end_ms: float) -> dict[int, float]:
    """Per-node transmit time (ms) from a JSON Lines event log."""
    open_tx: dict[int, float] = {}
    tx: dict[int, float] = {}
    for ev in events:
        nid = ev["node_id"]
        tx.setdefault(nid, 0.0)
        if ev["kind"] == "TX_START":
            open_tx[nid] = ev["time_ms"]
        elif ev["kind"] == "TX_END" and nid in open_tx:
            tx[nid] += ev["time_ms"] - open_tx.pop(nid)
    for nid, start in open_tx.items():
        tx[nid] += end_ms - start
    return tx


def cmd_energy(args) -> int:
    profile = _profile_from_args(args)
    if args.events:
        with open(args.events) as fh:
            events = [json.loads(line) for line in fh if line.strip()]
        if not events:
            raise ConfigError("events", "event log is empty")
        end_ms = args.duration_s * 1000 if args.duration_s else max(e["time_ms"] for e in events)
        if end_ms <= 0:
            raise ConfigError("duration_s", "elapsed time must be positive")
        per_node = []
        for nid, t in sorted(tx_time_from_events(events, end_ms).items()):
            d = min(t / end_ms, 1.0)
            p = energy.average_power(d, profile)
            per_node.append({"node_id": nid, "duty_cycle": d, "avg_power_mw": p,
                             "battery_life_hours": energy.battery_life_hours(p, profile)})
        worst = max(per_node, key=lambda r: r["avg_power_mw"])
        out = {"avg_power_mw": worst["avg_power_mw"],
               "battery_life_hours": worst["battery_life_hours"], "per_node": per_node}
    elif args.duty_cycle is not None:
        p = energy.average_power(args.duty_cycle, profile)
        out = {"duty_cycle": args.duty_cycle, "avg_power_mw": p,
               "battery_life_hours": energy.battery_life_hours(p, profile)}
    else:
        raise ConfigError("duty_cycle", "give --duty-cycle or --events")
    _emit(out, args.format)
    return 0


def _load_key(args) -> pipeline.SessionKey:
    salt = args.salt_hex
    if args.key_file:
        with open(args.key_file) as fh:
            return pipeline.SessionKey.from_hex(fh.read(), salt)
    return pipeline.SessionKey.from_env(salt)


def _packet_json(pkt: pipeline.VoicePacket) -> dict:
    return {
        "version": pkt.version,
        "flags": pkt.flags,
        "seq": pkt.seq,
        "nonce": pkt.nonce.hex(),
        "ciphertext": pkt.ciphertext.hex(),
        "crc16": pkt.crc16,
    }


def cmd_packet(args) -> int:
    key = _load_key(args)
    if args.action == "encode":
        try:
            payload = bytes.fromhex(args.payload_hex)
        except ValueError:
            raise ConfigError("payload_hex", "not valid hex") from None
        frame = pipeline.AudioFrame(args.seq, 0.0, None, len(payload) * 8, payload)
        pkt = pipeline.encrypt_packet(frame, key)
        wire = pipeline.serialize(pkt)
        out = _packet_json(pkt) | {"hex": wire.hex(), "length": len(wire)}
    else:
        try:
            wire = bytes.fromhex(args.hex)
        except ValueError:
            raise ConfigError("hex", "not valid hex") from None
        pkt = pipeline.parse(wire)
        frame = pipeline.decrypt_packet(pkt, key)
        out = _packet_json(pkt) | {"plaintext": frame.payload.hex(), "length": len(wire)}
    _emit(out, args.format)
    return 0


def _scenario_from_args(args) -> sim.Scenario:
    sc = sim.load_scenario(args.scenario)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    if getattr(args, "sf", None) is not None:
        sc = replace(sc, phy=replace(sc.phy, spreading_factor=args.sf))
    return sc


def cmd_simulate(args) -> int:
    sc = _scenario_from_args(args)
    report, events = sim.simulate(sc)
    if args.events:
        with open(args.events, "w") as fh:
            fh.write(sim.events_to_jsonl(events))
    if args.format == "text":
        for k in ("packets_sent", "packets_delivered", "packets_lost_channel",
                  "packets_lost_collision", "packets_lost_crc", "frames_dropped_queue",
                  "latency_p50_ms", "latency_p95_ms", "duty_cycle_per_node",
                  "avg_power_mw", "battery_life_h"):
            print(f"{k:>24}: {getattr(report, k)}")
    else:
        print(report.to_json(indent=2))
    return 0


def cmd_sweep(args) -> int:
    sc = _scenario_from_args(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("values", "expected a comma-separated list of numbers") from None
    if args.axis == "sf":
        values = [int(v) for v in values]
    text = sim.sweep_csv(args.axis, sim.sweep(sc, args.axis, values, args.workers))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_worked_example(args) -> int:
    rep = worked_example_check()
    if args.format == "json":
        _emit(rep)
    else:
        for c in rep["checks"]:
            status = "PASS" if c["pass"] else "FAIL"
            print(f"{c['quantity']:<16} {c['computed']:>10.2f} {c['unit']:<4}"
                  f" published {c['published']:>8.2f} (±{c['tolerance']})  {status}")
    return 0 if rep["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="taclink", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    fmt = dict(choices=("json", "text"), default="json")

    lb = sub.add_parser("link-budget", help="path loss, received power and margin")
    lb.add_argument("--scenario")
    lb.add_argument("--distance-km", type=float)
    lb.add_argument("--freq-mhz", type=float)
    lb.add_argument("--tx-dbm", type=float)
    lb.add_argument("--tx-gain", type=float)
    lb.add_argument("--rx-gain", type=float)
    lb.add_argument("--loss-db", type=float)
    lb.add_argument("--sensitivity", type=float, help="dBm; default: SF table")
    lb.add_argument("--sf", type=int, default=7)
    lb.add_argument("--bw", type=int, default=125_000)
    lb.add_argument("--margin-threshold", type=float, default=0.0)
    lb.add_argument("--allow-any-tx-power", action="store_true")
    lb.add_argument("--format", **fmt)
    lb.set_defaults(func=cmd_link_budget)

    at = sub.add_parser("airtime", help="LoRa time-on-air")
    at.add_argument("--sf", type=int, required=True)
    at.add_argument("--bw", type=int, default=125_000)
    at.add_argument("--cr", type=int, default=5, help="coding-rate denominator (5..8)")
    at.add_argument("--payload", type=int, required=True)
    at.add_argument("--preamble", type=int, default=8)
    at.add_argument("--implicit-header", action="store_true")
    at.add_argument("--no-crc", action="store_true")
    at.add_argument("--ldro", choices=("auto", "on", "off"), default="auto")
    at.add_argument("--sweep", action="store_true", help="CSV over SF7..SF12")
    at.add_argument("--format", **fmt)
    at.set_defaults(func=cmd_airtime)

    en = sub.add_parser("energy", help="average power and battery life")
    en.add_argument("--duty-cycle", type=float)
    en.add_argument("--events", help="JSON Lines event log from simulate --events")
    en.add_argument("--duration-s", type=float)
    defaults = energy.PowerProfile()
    en.add_argument("--p-tx-mw", type=float, default=defaults.p_tx_mw)
    en.add_argument("--p-listen-mw", type=float, default=defaults.p_listen_mw)
    en.add_argument("--p-sleep-mw", type=float, default=defaults.p_sleep_mw)
    en.add_argument("--capacity-mah", type=float, default=defaults.battery_capacity_mah)
    en.add_argument("--voltage", type=float, default=defaults.battery_voltage_v)
    en.add_argument("--format", **fmt)
    en.set_defaults(func=cmd_energy)

    pk = sub.add_parser("packet", help="encode/decode voice packets as hex")
    pk.add_argument("--key-file")
    pk.add_argument("--salt-hex")
    pk.add_argument("--format", **fmt)
    pk_sub = pk.add_subparsers(dest="action", required=True)
    enc = pk_sub.add_parser("encode")
    enc.add_argument("--seq", type=int, required=True)
    enc.add_argument("--payload-hex", required=True)
    dec = pk_sub.add_parser("decode")
    dec.add_argument("hex")
    pk.set_defaults(func=cmd_packet)

    for name, func, helptext in (("simulate", cmd_simulate, "run one scenario"),
                                 ("sweep", cmd_sweep, "run a parameter sweep")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--scenario", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--sf", type=int)
        sp.set_defaults(func=func)
    sim_p = sub.choices["simulate"]
    sim_p.add_argument("--events", help="write MAC events as JSON Lines")
    sim_p.add_argument("--format", **fmt)
    sw_p = sub.choices["sweep"]
    sw_p.add_argument("--axis", choices=sim.SWEEP_AXES, required=True)
    sw_p.add_argument("--values", required=True, help="comma-separated")
    sw_p.add_argument("--workers", type=int, default=1)
    sw_p.add_argument("--out")

    pr = sub.add_parser("paper-repro", help="reproduce the 1.5 km / 868 MHz link budget")
    pr.add_argument("--format", choices=("json", "text"), default="text")
    pr.set_defaults(func=cmd_worked_example)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"taclink {args.command}: config error in field '{exc.field}': {exc.message}", file=sys.stderr)
        return 2
    except (TaclinkError, OSError, ValueError) as exc:
        print(f"taclink {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
