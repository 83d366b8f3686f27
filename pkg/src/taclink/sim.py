"""Deterministic two-node discrete-event simulation of VOX-gated secure voice.

Time runs in integer microsecond ticks. Events at the same tick are applied
in (node_id, kind) order, then each node's MAC is stepped. A transmission
starting at tick t is audible to the other node's carrier sense only after
t, so two nodes that decide to send on the same tick collide.

Randomness comes from numpy's PCG64 generator. Every node gets its own
child stream via ``SeedSequence.spawn``, so a run is reproducible from its
seeds alone.
"""

from __future__ import annotations

import csv
import dataclasses
import heapq
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Sequence

import numpy as np

from . import energy, linkbudget, mac, phy as phymod, pipeline
from .energy import PowerProfile
from .errors import ConfigError, CrcMismatch, EmptyDeliverySet, MalformedPacket
from .linkbudget import LinkParams
from .mac import EventKind, MacConfig, MacEvent, Mode, QueuedFrame, Transmission
from .phy import PhyConfig
from .pipeline import CodecProfile, SessionKey, VoxConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
N_NODES = 2
DEMO_KEY_HEX = "000102030405060708090a0b0c0d0e0f"
LATENCY_COMPONENTS = ("t_encoding", "t_encryption", "t_packetization", "t_airtime", "t_decoding")


@dataclass(frozen=True)
class ChannelModel:
    link: LinkParams = field(default_factory=LinkParams)
    shadowing_sigma_db: float = 0.0
    rng_seed: int = 42

    def __post_init__(self):
        if self.shadowing_sigma_db < 0:
            raise ConfigError("channel.shadowing_sigma_db", "must be >= 0")


@dataclass(frozen=True)
class SpeechPattern:
    """Alternating conversation: the nodes take turns, each talking for
    about ``talk_ms`` out of every ``talk_ms + silence_ms``.

    ``doubletalk`` makes both nodes speak in the same slots instead, which
    is how collisions get exercised.
    """

    talk_ms: float = 3000.0
    silence_ms: float = 12000.0
    jitter: float = 0.25
    seed: int = 42
    doubletalk: bool = False

    def __post_init__(self):
        if self.talk_ms < 0 or self.silence_ms < 0:
            raise ConfigError("speech", "talk_ms and silence_ms must be >= 0")
        if self.talk_ms + self.silence_ms <= 0:
            raise ConfigError("speech", "talk_ms + silence_ms must be > 0")
        if not 0 <= self.jitter < 1:
            raise ConfigError("speech.jitter", "must lie in [0, 1)")


@dataclass(frozen=True)
class Scenario:
    duration_s: float = 300.0
    phy: PhyConfig = field(default_factory=PhyConfig)
    vox: VoxConfig = field(default_factory=VoxConfig)
    codec: CodecProfile = field(default_factory=CodecProfile)
    power: PowerProfile = field(default_factory=PowerProfile)
    channel: ChannelModel = field(default_factory=ChannelModel)
    speech: SpeechPattern = field(default_factory=SpeechPattern)
    mac: MacConfig = field(default_factory=MacConfig)
    envelope_period_ms: float = 10.0
    corruption_prob: float = 0.0
    key_hex: str = DEMO_KEY_HEX
    strict_throughput: bool = False
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ConfigError("duration_s", "must be > 0")
        if self.envelope_period_ms <= 0:
            raise ConfigError("envelope_period_ms", "must be > 0")
        if not 0 <= self.corruption_prob <= 1:
            raise ConfigError("corruption_prob", "must lie in [0, 1]")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"unsupported version {self.schema_version}")

    @property
    def duration_us(self) -> int:
        return round(self.duration_s * 1_000_000)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(
            self,
            channel=replace(self.channel, rng_seed=seed),
            speech=replace(self.speech, seed=seed),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        return _build(cls, data, "")


_NESTED = {
    (Scenario, "phy"): PhyConfig,
    (Scenario, "vox"): VoxConfig,
    (Scenario, "codec"): CodecProfile,
    (Scenario, "power"): PowerProfile,
    (Scenario, "channel"): ChannelModel,
    (Scenario, "speech"): SpeechPattern,
    (Scenario, "mac"): MacConfig,
    (ChannelModel, "link"): LinkParams,
}


def _build(cls, data: Any, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip(".") or "scenario", "expected a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = prefix + key
        if key not in names:
            raise ConfigError(path, "unknown field")
        sub = _NESTED.get((cls, key))
        kwargs[key] = _build(sub, value, path + ".") if sub else value
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        name = prefix.rstrip(".")
        if prefix and not (exc.field == name or exc.field.startswith(prefix)):
            raise ConfigError(prefix + exc.field, str(exc).split(": ", 1)[-1]) from None
        raise
    except TypeError as exc:
        raise ConfigError(prefix.rstrip(".") or "scenario", str(exc)) from None


def load_scenario(path: str) -> Scenario:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("scenario", f"invalid JSON: {exc}") from None
    return Scenario.from_dict(data)


class Delivery(Enum):
    DELIVERED = "delivered"
    LOST = "lost"


@dataclass(frozen=True)
class ChannelOutcome:
    delivery: Delivery
    rx_power_dbm: float
    margin_db: float


def apply_channel(
    channel: ChannelModel, phy: PhyConfig, rng: np.random.Generator | None = None
) -> ChannelOutcome:
    """Per-packet delivery decision.

    Received power is the link budget minus a Gaussian shadowing draw in dB.
    With zero sigma no random number is consumed and the rule is a hard
    threshold on sensitivity.
    """
    rx = linkbudget.received_power(channel.link)
    if channel.shadowing_sigma_db > 0:
        if rng is None:
            raise ValueError("shadowing needs an rng")
        rx -= channel.shadowing_sigma_db * rng.standard_normal()
    sens = linkbudget.effective_sensitivity(channel.link, phy)
    margin = linkbudget.link_margin(rx, sens)
    delivery = Delivery.DELIVERED if rx >= sens else Delivery.LOST
    return ChannelOutcome(delivery, rx, margin)


@dataclass
class PacketRecord:
    ref: int
    src: int
    dst: int
    seq: int
    packet_bytes: int
    t_ready_ms: float
    t_tx_start_ms: float
    t_queue_ms: float
    t_encoding: float
    t_encryption: float
    t_packetization: float
    t_airtime: float
    t_decoding: float
    t_total: float
    outcome: str
    rx_power_dbm: float | None = None
    margin_db: float | None = None


@dataclass
class NodeSummary:
    node_id: int
    tx_us: int
    listen_us: int
    sleep_us: int
    elapsed_us: int
    duty_cycle: float
    avg_power_mw: float
    battery_life_h: float
    frames_generated: int
    frames_dropped: int


@dataclass
class SimReport:
    duration_s: float
    spreading_factor: int
    packets_sent: int
    packets_delivered: int
    packets_lost_channel: int
    packets_lost_collision: int
    packets_lost_crc: int
    frames_dropped_queue: int
    packets_in_flight_at_end: int
    frames_queued_at_end: int
    packet_error_rate: float | None
    latency_p50_ms: float | None
    latency_p95_ms: float | None
    latency_max_ms: float | None
    codec_bitrate_bps: int
    effective_bitrate_bps: float
    airtime_per_frame_ms: float
    offered_load: float
    throughput_sustainable: bool
    duty_cycle_per_node: list[float]
    avg_power_mw_per_node: list[float]
    battery_life_h_per_node: list[float]
    avg_power_mw: float
    battery_life_h: float
    nodes: list[NodeSummary]
    packets: list[PacketRecord]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)

    @property
    def delivered(self) -> list[PacketRecord]:
        return [p for p in self.packets if p.outcome == "delivered"]


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(lo + (hi - lo) * rng.random())


def talk_schedule(pattern: SpeechPattern, duration_ms: float, guard_ms: float = 0.0) -> list[list[tuple[float, float]]]:
    """Alternating talk spurts per node, non-overlapping by construction.

    Time is cut into turn slots of ``(talk + silence) / 2``; slot k belongs
    to node k % 2. ``guard_ms`` of each slot is kept free at the end so the
    VOX hangover never spills into the other node's turn.
    """
    out: list[list[tuple[float, float]]] = [[] for _ in range(N_NODES)]
    if pattern.talk_ms == 0:
        return out
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([pattern.seed, 0])))
    slot = (pattern.talk_ms + pattern.silence_ms) / N_NODES
    k = 0
    while k * slot < duration_ms:
        j = pattern.jitter
        talk = pattern.talk_ms * _uniform(rng, 1 - j, 1 + j) if j else pattern.talk_ms
        talk = min(talk, max(slot - guard_ms, 0.0))
        slack = max(slot - guard_ms - talk, 0.0)
        start = k * slot + (_uniform(rng, 0, slack) if j else 0.0)
        end = min(start + talk, duration_ms)
        if start < duration_ms and end > start:
            owners = range(N_NODES) if pattern.doubletalk else (k % N_NODES,)
            for nid in owners:
                out[nid].append((start, end))
        k += 1
    return out


def speech_envelope(
    intervals: Sequence[tuple[float, float]], n_samples: int, period_ms: float, rng: np.random.Generator
) -> np.ndarray:
    """Synthetic amplitude envelope: loud while talking, low noise otherwise."""
    env = rng.uniform(0.0, 0.05, n_samples)
    for start, end in intervals:
        i0 = int(np.ceil(start / period_ms - 1e-9))
        i1 = min(int(np.ceil(end / period_ms - 1e-9)), n_samples)
        if i1 > i0:
            env[i0:i1] = rng.uniform(0.2, 0.9, i1 - i0)
    return env


def _gate_runs(gate: Sequence[bool]) -> list[tuple[int, int]]:
    runs, start = [], None
    for i, g in enumerate(gate):
        if g and start is None:
            start = i
        elif not g and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(gate)))
    return runs


@dataclass
class _Frame:
    ref: int
    src: int
    seq: int
    wire: bytes
    payload: bytes
    ready_us: int
    airtime_us: int


def check_scenario(sc: Scenario) -> None:
    """Up-front consistency checks; raises ConfigError."""
    if sc.codec.packet_bytes > phymod.MAX_PAYLOAD_BYTES:
        raise ConfigError("codec", f"packet of {sc.codec.packet_bytes} bytes exceeds one LoRa frame")
    if sc.strict_throughput and sc.codec.bitrate_bps > phymod.effective_bitrate(sc.phy):
        raise ConfigError(
            "codec.bitrate_bps",
            f"{sc.codec.bitrate_bps} bps exceeds SF{sc.phy.spreading_factor} "
            f"effective bitrate {phymod.effective_bitrate(sc.phy):.1f} bps",
        )
    linkbudget.effective_sensitivity(sc.channel.link, sc.phy)


class _Sim:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.cfg = sc.mac
        self.end_us = sc.duration_us
        self.events: list[MacEvent] = []
        self.nodes = [mac.NodeState(node_id=i) for i in range(N_NODES)]
        self.active: dict[int, Transmission] = {}
        self.collided: set[int] = set()
        self.rx_started: set[int] = set()
        self.frames: dict[int, _Frame] = {}
        self.records: list[PacketRecord] = []
        self.dropped = [0] * N_NODES
        self.generated = [0] * N_NODES
        self._heap: list[tuple] = []
        self._counter = 0
        self._timers: set[tuple[int, int]] = set()

        seeds = np.random.SeedSequence(sc.channel.rng_seed).spawn(N_NODES)
        self.node_rngs = []
        for s in seeds:
            chan, corrupt, salt = s.spawn(3)
            self.node_rngs.append({
                "channel": np.random.Generator(np.random.PCG64(chan)),
                "corrupt": np.random.Generator(np.random.PCG64(corrupt)),
                "salt": np.random.Generator(np.random.PCG64(salt)),
            })
        key = bytes.fromhex(sc.key_hex)
        self.keys = [SessionKey(key, r["salt"].bytes(8)) for r in self.node_rngs]
        self.sessions = [pipeline.Session(k) for k in self.keys]

    # input generation -------------------------------------------------

    def _push(self, t_us: int, node_id: int, kind: int, payload: Any = None):
        self._counter += 1
        heapq.heappush(self._heap, (t_us, node_id, kind, self._counter, payload))

    def _schedule_inputs(self):
        sc, codec = self.sc, self.sc.codec
        period = sc.envelope_period_ms
        n_samples = int(np.ceil(sc.duration_s * 1000 / period - 1e-9))
        schedule = talk_schedule(sc.speech, sc.duration_s * 1000, guard_ms=sc.vox.hangover_ms + codec.frame_ms)
        env_seeds = np.random.SeedSequence([sc.speech.seed, 1]).spawn(N_NODES)
        airtime = phymod.airtime_us(sc.phy, codec.packet_bytes)
        samples_per_frame = max(int(round(codec.frame_ms / period)), 1)
        pre_tx_ms = codec.encode_delay_ms + codec.encrypt_delay_ms + codec.packetization_ms(codec.packet_bytes)
        ref = 0
        for nid in range(N_NODES):
            rng = np.random.Generator(np.random.PCG64(env_seeds[nid]))
            env = speech_envelope(schedule[nid], n_samples, period, rng)
            gate = pipeline.vox_gate(env, sc.vox, period)
            node = self.nodes[nid]
            for i0, i1 in _gate_runs(gate):
                t_open = _us(i0 * period)
                self._push(t_open, nid, 0, True)
                if i1 < n_samples:
                    self._push(_us(i1 * period), nid, 0, False)
                t0 = i0 * period
                k = 0
                while t0 + k * codec.frame_ms < i1 * period:
                    w0 = t0 + k * codec.frame_ms
                    w1 = w0 + codec.frame_ms
                    ready = _us(w1 + pre_tx_ms)
                    if ready > self.end_us:
                        break
                    a = i0 + k * samples_per_frame
                    window = env[a:a + samples_per_frame]
                    node, seq = mac.next_seq(node)
                    frame = pipeline.encode_frame(window, codec.bitrate_bps, codec.frame_ms, seq,
                                                  codec.encode_delay_ms)
                    pkt = self.sessions[nid].seal(frame, codec.encrypt_delay_ms)
                    self.frames[ref] = _Frame(ref, nid, seq, pipeline.serialize(pkt), frame.payload,
                                              ready, airtime)
                    self.generated[nid] += 1
                    self._push(ready, nid, 1, ref)
                    ref += 1
                    k += 1
            self.nodes[nid] = node

    # event loop ---------------------------------------------------------

    def _emit(self, evs: Iterable[MacEvent]):
        self.events.extend(evs)

    def _busy(self, nid: int, t: int, include_now: bool) -> bool:
        for tx in self.active.values():
            if tx.node_id == nid or tx.end_us <= t:
                continue
            if tx.start_us < t or (include_now and tx.start_us == t):
                return True
        return False

    def _round(self, t: int, include_now: bool) -> tuple[list[int], list[int]]:
        """Step every node once; returns refs whose TX started / ended."""
        busy = [self._busy(n.node_id, t, include_now) for n in self.nodes]
        started, ended = [], []
        for i, node in enumerate(self.nodes):
            node, evs = mac.step(node, t, busy[i], self.cfg)
            self.nodes[i] = node
            for ev in evs:
                if ev.kind is EventKind.TX_START:
                    started.append(ev.packet_ref)
                    self.active[ev.packet_ref] = Transmission(ev.packet_ref, i, node.tx_start_us, node.tx_end_us)
                elif ev.kind is EventKind.TX_END:
                    ended.append(ev.packet_ref)
            self._emit(evs)
        return started, ended

    def run(self) -> tuple[SimReport, list[MacEvent]]:
        self._schedule_inputs()
        while self._heap and self._heap[0][0] <= self.end_us:
            t = self._heap[0][0]
            while self._heap and self._heap[0][0] == t:
                _, nid, kind, _, payload = heapq.heappop(self._heap)
                if kind == 0:
                    self.nodes[nid], evs = mac.set_vox(self.nodes[nid], payload, t)
                    self._emit(evs)
                elif kind == 1:
                    f = self.frames[payload]
                    item = QueuedFrame(f.ref, f.airtime_us, f.ready_us)
                    self.nodes[nid], evs = mac.enqueue(self.nodes[nid], item, t, self.cfg)
                    self.dropped[nid] += len(evs)
                    self._emit(evs)
                else:
                    self._timers.discard((t, nid))
            ended = [tx for tx in self.active.values() if tx.end_us == t]
            started, _ = self._round(t, include_now=False)
            if started:
                self._round(t, include_now=True)
            for tx in ended:
                self._finish(tx, t)
            for ref in started:
                self._begin(ref, t)
            for node in self.nodes:
                d = mac.next_deadline(node, self.cfg)
                if d is not None and t < d <= self.end_us and (d, node.node_id) not in self._timers:
                    self._timers.add((d, node.node_id))
                    self._push(d, node.node_id, 2)
        self.nodes = [mac.advance(n, self.end_us) for n in self.nodes]
        return self._report(), self.events

    def _begin(self, ref: int, t: int):
        tx = self.active[ref]
        others = [x for x in self.active.values() if x.node_id != tx.node_id]
        lost, evs = mac.collision_rule([tx, *others])
        for ev in evs:
            if ev.packet_ref not in self.collided:
                self.collided.add(ev.packet_ref)
                self.events.append(replace(ev, time_us=t))
        for node in self.nodes:
            if node.node_id != tx.node_id and node.mode is not Mode.TRANSMIT:
                self.rx_started.add(ref)
                self._emit([MacEvent(t, node.node_id, EventKind.RX_START, ref)])

    def _finish(self, tx: Transmission, t: int):
        sc, codec = self.sc, self.sc.codec
        del self.active[tx.ref]
        f = self.frames[tx.ref]
        dst = (f.src + 1) % N_NODES
        if tx.ref in self.rx_started:
            self._emit([MacEvent(t, dst, EventKind.RX_END, tx.ref)])
        rngs = self.node_rngs[f.src]
        rx_power = margin = None
        if tx.ref in self.collided:
            outcome = "lost_collision"
        else:
            ch = apply_channel(sc.channel, sc.phy, rngs["channel"])
            rx_power, margin = ch.rx_power_dbm, ch.margin_db
            if ch.delivery is Delivery.LOST:
                outcome = "lost_channel"
            else:
                wire = f.wire
                if sc.corruption_prob > 0 and rngs["corrupt"].random() < sc.corruption_prob:
                    bit = int(rngs["corrupt"].integers(len(wire) * 8))
                    buf = bytearray(wire)
                    buf[bit // 8] ^= 0x80 >> (bit % 8)
                    wire = bytes(buf)
                outcome = self._receive(wire, f)
        at = phymod.time_on_air(sc.phy, len(f.wire))
        comps = (
            codec.encode_delay_ms,
            codec.encrypt_delay_ms,
            codec.packetization_ms(len(f.wire)),
            at.total_ms,
            codec.decrypt_delay_ms + codec.decode_delay_ms,
        )
        self.records.append(PacketRecord(
            ref=f.ref, src=f.src, dst=dst, seq=f.seq, packet_bytes=len(f.wire),
            t_ready_ms=f.ready_us / 1000, t_tx_start_ms=tx.start_us / 1000,
            t_queue_ms=(tx.start_us - f.ready_us) / 1000,
            t_encoding=comps[0], t_encryption=comps[1], t_packetization=comps[2],
            t_airtime=comps[3], t_decoding=comps[4], t_total=sum(comps),
            outcome=outcome, rx_power_dbm=rx_power, margin_db=margin,
        ))

    def _receive(self, wire: bytes, f: _Frame) -> str:
        codec = self.sc.codec
        try:
            pkt = pipeline.parse(wire)
            frame = pipeline.decrypt_packet(pkt, self.keys[f.src], codec.frame_ms,
                                            codec.decrypt_delay_ms + codec.decode_delay_ms)
        except (CrcMismatch, MalformedPacket):
            return "lost_crc"
        if frame.payload != f.payload:
            raise RuntimeError(f"payload mismatch on packet {f.ref}")
        return "delivered"

    def _report(self) -> SimReport:
        sc = self.sc
        counts = {k: 0 for k in ("delivered", "lost_channel", "lost_collision", "lost_crc")}
        for r in self.records:
            counts[r.outcome] += 1
        sent = len(self.records)
        totals = [r.t_total for r in self.records if r.outcome == "delivered"]
        p50 = p95 = pmax = None
        if totals:
            p50 = float(np.percentile(totals, 50))
            p95 = float(np.percentile(totals, 95))
            pmax = float(max(totals))
        summaries = []
        for n in self.nodes:
            avg = energy.average_power_from_times(n.tx_us, n.listen_us, n.sleep_us, sc.power)
            summaries.append(NodeSummary(
                node_id=n.node_id, tx_us=n.tx_us, listen_us=n.listen_us, sleep_us=n.sleep_us,
                elapsed_us=n.elapsed_us, duty_cycle=mac.duty_cycle(n), avg_power_mw=avg,
                battery_life_h=energy.battery_life_hours(avg, sc.power),
                frames_generated=self.generated[n.node_id], frames_dropped=self.dropped[n.node_id],
            ))
        frame_air = phymod.time_on_air(sc.phy, sc.codec.packet_bytes).total_ms
        eff = phymod.effective_bitrate(sc.phy)
        queued = sum(len(n.tx_queue) for n in self.nodes)
        return SimReport(
            duration_s=sc.duration_s,
            spreading_factor=sc.phy.spreading_factor,
            packets_sent=sent,
            packets_delivered=counts["delivered"],
            packets_lost_channel=counts["lost_channel"],
            packets_lost_collision=counts["lost_collision"],
            packets_lost_crc=counts["lost_crc"],
            frames_dropped_queue=sum(self.dropped),
            packets_in_flight_at_end=len(self.active),
            frames_queued_at_end=queued,
            packet_error_rate=(sent - counts["delivered"]) / sent if sent else None,
            latency_p50_ms=p50,
            latency_p95_ms=p95,
            latency_max_ms=pmax,
            codec_bitrate_bps=sc.codec.bitrate_bps,
            effective_bitrate_bps=eff,
            airtime_per_frame_ms=frame_air,
            offered_load=frame_air / sc.codec.frame_ms,
            throughput_sustainable=sc.codec.bitrate_bps <= eff,
            duty_cycle_per_node=[s.duty_cycle for s in summaries],
            avg_power_mw_per_node=[s.avg_power_mw for s in summaries],
            battery_life_h_per_node=[s.battery_life_h for s in summaries],
            avg_power_mw=max(s.avg_power_mw for s in summaries),
            battery_life_h=min(s.battery_life_h for s in summaries),
            nodes=summaries,
            packets=sorted(self.records, key=lambda r: (r.t_tx_start_ms, r.src)),
        )


def _us(ms: float) -> int:
    return round(ms * 1000)


def simulate(scenario: Scenario) -> tuple[SimReport, list[MacEvent]]:
    """Run one scenario and return the report plus the full MAC event log."""
    check_scenario(scenario)
    if scenario.codec.bitrate_bps > phymod.effective_bitrate(scenario.phy):
        log.warning(
            "codec bitrate %d bps exceeds SF%d effective bitrate %.1f bps; expect queue drops",
            scenario.codec.bitrate_bps, scenario.phy.spreading_factor,
            phymod.effective_bitrate(scenario.phy),
        )
    return _Sim(scenario).run()


def run(scenario: Scenario) -> SimReport:
    return simulate(scenario)[0]


def events_to_jsonl(events: Iterable[MacEvent]) -> str:
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in events)


def latency_breakdown(report: SimReport) -> dict[str, dict[str, float]]:
    """Mean, p50, p95 and max of each end-to-end latency component over
    delivered packets. Also checks that the components sum to the total."""
    delivered = report.delivered
    if not delivered:
        raise EmptyDeliverySet("no delivered packets")
    out = {}
    for r in delivered:
        if r.t_total != sum(getattr(r, c) for c in LATENCY_COMPONENTS):
            raise AssertionError(f"latency components do not sum to total for packet {r.ref}")
    for name in (*LATENCY_COMPONENTS, "t_total"):
        vals = np.array([getattr(r, name) for r in delivered])
        out[name] = {
            "mean": float(vals.mean()),
            "p50": float(np.percentile(vals, 50)),
            "p95": float(np.percentile(vals, 95)),
            "max": float(vals.max()),
        }
    return out


SWEEP_AXES = ("sf", "distance", "tx_power", "payload")


def scenario_for(scenario: Scenario, axis: str, value: float) -> Scenario:
    if axis == "sf":
        return replace(scenario, phy=replace(scenario.phy, spreading_factor=int(value)))
    if axis == "distance":
        ch = scenario.channel
        return replace(scenario, channel=replace(ch, link=replace(ch.link, distance_km=float(value))))
    if axis == "tx_power":
        ch = scenario.channel
        return replace(scenario, channel=replace(ch, link=replace(ch.link, tx_power_dbm=float(value))))
    if axis == "payload":
        # frame payload in bytes at the configured codec bitrate
        codec = scenario.codec
        frame_ms = float(value) * 8000 / codec.bitrate_bps
        return replace(scenario, codec=replace(codec, frame_ms=frame_ms))
    raise ConfigError("axis", f"must be one of {SWEEP_AXES}, got {axis!r}")


class SweepError(RuntimeError):
    def __init__(self, axis: str, value: float, cause: Exception):
        super().__init__(f"{axis}={value}: {cause}")
        self.axis, self.value, self.cause = axis, value, cause


def _sweep_one(args: tuple[Scenario, str, float]) -> SimReport:
    scenario, axis, value = args
    try:
        return run(scenario_for(scenario, axis, value))
    except Exception as exc:
        raise SweepError(axis, value, exc) from exc


def sweep(
    scenario: Scenario, axis: str, values: Sequence[float], workers: int = 1
) -> list[tuple[float, SimReport]]:
    """Independent runs, one per value, each with the scenario's own seeds."""
    if axis not in SWEEP_AXES:
        raise ConfigError("axis", f"must be one of {SWEEP_AXES}, got {axis!r}")
    jobs = [(scenario, axis, v) for v in values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            reports = list(ex.map(_sweep_one, jobs))
    else:
        reports = [_sweep_one(j) for j in jobs]
    return list(zip(values, reports))


SWEEP_COLUMNS = (
    "axis", "value", "packets_sent", "packets_delivered", "packets_lost_channel",
    "packets_lost_collision", "packets_lost_crc", "frames_dropped_queue", "delivery_ratio",
    "latency_p50_ms", "latency_p95_ms", "airtime_p50_ms", "margin_mean_db",
    "duty_cycle_max", "avg_power_mw", "battery_life_h",
)


def sweep_rows(axis: str, results: Sequence[tuple[float, SimReport]]) -> list[dict]:
    rows = []
    for value, rep in results:
        margins = [p.margin_db for p in rep.packets if p.margin_db is not None]
        airtimes = [p.t_airtime for p in rep.packets]
        rows.append({
            "axis": axis,
            "value": value,
            "packets_sent": rep.packets_sent,
            "packets_delivered": rep.packets_delivered,
            "packets_lost_channel": rep.packets_lost_channel,
            "packets_lost_collision": rep.packets_lost_collision,
            "packets_lost_crc": rep.packets_lost_crc,
            "frames_dropped_queue": rep.frames_dropped_queue,
            "delivery_ratio": rep.packets_delivered / rep.packets_sent if rep.packets_sent else None,
            "latency_p50_ms": rep.latency_p50_ms,
            "latency_p95_ms": rep.latency_p95_ms,
            "airtime_p50_ms": float(np.percentile(airtimes, 50)) if airtimes else None,
            "margin_mean_db": float(np.mean(margins)) if margins else None,
            "duty_cycle_max": max(rep.duty_cycle_per_node),
            "avg_power_mw": rep.avg_power_mw,
            "battery_life_h": rep.battery_life_h,
        })
    return rows


def sweep_csv(axis: str, results: Sequence[tuple[float, SimReport]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in sweep_rows(axis, results):
        writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return buf.getvalue()
