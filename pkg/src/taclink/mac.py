"""Half-duplex peer-to-peer MAC: a pure state machine per node.

Every transition takes a :class:`NodeState` and returns a new one plus the
events it produced. Time is in integer microseconds so the duty-cycle
accumulators add up to elapsed time exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Sequence

from .errors import DomainError


class Mode(IntEnum):
    SLEEP = 0
    LISTEN = 1
    TRANSMIT = 2


class EventKind(IntEnum):
    VOX_OPEN = 0
    VOX_CLOSE = 1
    TX_START = 2
    TX_END = 3
    RX_START = 4
    RX_END = 5
    COLLISION = 6
    DROP = 7
    WAKE = 8
    SLEEP = 9


@dataclass(frozen=True)
class MacEvent:
    time_us: int
    node_id: int
    kind: EventKind
    packet_ref: int | None = None

    @property
    def time_ms(self) -> float:
        return self.time_us / 1000

    def to_dict(self) -> dict:
        return {
            "time_ms": self.time_ms,
            "node_id": self.node_id,
            "kind": self.kind.name,
            "packet_ref": self.packet_ref,
        }


@dataclass(frozen=True)
class MacConfig:
    sense_window_ms: float = 5.0
    idle_timeout_ms: float = 2000.0
    queue_cap: int = 16

    @property
    def sense_window_us(self) -> int:
        return round(self.sense_window_ms * 1000)

    @property
    def idle_timeout_us(self) -> int:
        return round(self.idle_timeout_ms * 1000)


@dataclass(frozen=True)
class QueuedFrame:
    ref: int
    airtime_us: int
    ready_us: int


@dataclass(frozen=True)
class NodeState:
    node_id: int
    mode: Mode = Mode.SLEEP
    vox_open: bool = False
    tx_queue: tuple[QueuedFrame, ...] = ()
    seq_counter: int = 0
    clock_us: int = 0
    tx_us: int = 0
    listen_us: int = 0
    sleep_us: int = 0
    current: QueuedFrame | None = None
    tx_start_us: int = 0
    tx_end_us: int = 0
    # start of the current carrier-free stretch; None while the channel is busy
    quiet_since_us: int | None = None
    last_activity_us: int = 0

    @property
    def elapsed_us(self) -> int:
        return self.tx_us + self.listen_us + self.sleep_us

    @property
    def clock_ms(self) -> float:
        return self.clock_us / 1000


def advance(node: NodeState, now_us: int) -> NodeState:
    """Charge the time since the last transition to the current mode."""
    dt = now_us - node.clock_us
    if dt < 0:
        raise ValueError(f"time went backwards: {now_us} < {node.clock_us}")
    if dt == 0:
        return node
    if node.mode is Mode.TRANSMIT:
        return replace(node, clock_us=now_us, tx_us=node.tx_us + dt)
    if node.mode is Mode.LISTEN:
        return replace(node, clock_us=now_us, listen_us=node.listen_us + dt)
    return replace(node, clock_us=now_us, sleep_us=node.sleep_us + dt)


def next_seq(node: NodeState) -> tuple[NodeState, int]:
    seq = node.seq_counter
    return replace(node, seq_counter=(seq + 1) & 0xFFFF), seq


def set_vox(node: NodeState, is_open: bool, now_us: int) -> tuple[NodeState, list[MacEvent]]:
    node = advance(node, now_us)
    if node.vox_open == is_open:
        return node, []
    kind = EventKind.VOX_OPEN if is_open else EventKind.VOX_CLOSE
    node = replace(node, vox_open=is_open, last_activity_us=now_us)
    return node, [MacEvent(now_us, node.node_id, kind)]


def enqueue(
    node: NodeState, item: QueuedFrame, now_us: int, cfg: MacConfig
) -> tuple[NodeState, list[MacEvent]]:
    """FIFO append; a full queue drops the newcomer."""
    node = advance(node, now_us)
    if len(node.tx_queue) >= cfg.queue_cap:
        return node, [MacEvent(now_us, node.node_id, EventKind.DROP, item.ref)]
    return replace(node, tx_queue=node.tx_queue + (item,)), []


def _start_tx(node: NodeState, now_us: int) -> tuple[NodeState, MacEvent]:
    head, rest = node.tx_queue[0], node.tx_queue[1:]
    node = replace(
        node,
        mode=Mode.TRANSMIT,
        tx_queue=rest,
        current=head,
        tx_start_us=now_us,
        tx_end_us=now_us + head.airtime_us,
        quiet_since_us=None,
    )
    return node, MacEvent(now_us, node.node_id, EventKind.TX_START, head.ref)


def step(
    node: NodeState, now_us: int, channel_busy: bool, cfg: MacConfig = MacConfig()
) -> tuple[NodeState, list[MacEvent]]:
    """Advance one node to ``now_us``.

    ``channel_busy`` is the carrier-sense result: another node's
    transmission is on the air. A node that finishes a packet with more
    queued keeps the floor and sends the next one without re-sensing.
    """
    node = advance(node, now_us)
    events: list[MacEvent] = []
    nid = node.node_id

    if node.mode is Mode.TRANSMIT:
        if now_us < node.tx_end_us:
            return node, events
        events.append(MacEvent(now_us, nid, EventKind.TX_END, node.current.ref))
        node = replace(node, mode=Mode.LISTEN, current=None, last_activity_us=now_us,
                       quiet_since_us=None if channel_busy else now_us)
        if node.tx_queue:
            node, ev = _start_tx(node, now_us)
            events.append(ev)
            return node, events

    if node.mode is Mode.SLEEP:
        if not (node.vox_open or channel_busy or node.tx_queue):
            return node, events
        node = replace(node, mode=Mode.LISTEN, last_activity_us=now_us,
                       quiet_since_us=None if channel_busy else now_us)
        events.append(MacEvent(now_us, nid, EventKind.WAKE))

    # LISTEN
    if channel_busy:
        return replace(node, quiet_since_us=None, last_activity_us=now_us), events
    if node.quiet_since_us is None:
        node = replace(node, quiet_since_us=now_us)
    quiet_for = now_us - node.quiet_since_us
    if node.tx_queue:
        if quiet_for >= cfg.sense_window_us:
            node, ev = _start_tx(node, now_us)
            events.append(ev)
        return node, events
    idle_since = max(node.last_activity_us, node.quiet_since_us)
    if not node.vox_open and now_us - idle_since >= cfg.idle_timeout_us:
        node = replace(node, mode=Mode.SLEEP, quiet_since_us=None)
        events.append(MacEvent(now_us, nid, EventKind.SLEEP))
    return node, events


def next_deadline(node: NodeState, cfg: MacConfig = MacConfig()) -> int | None:
    """Earliest future time at which :func:`step` could change this node
    without any new input."""
    if node.mode is Mode.TRANSMIT:
        return node.tx_end_us
    if node.mode is Mode.LISTEN and node.quiet_since_us is not None:
        if node.tx_queue:
            return node.quiet_since_us + cfg.sense_window_us
        if not node.vox_open:
            return max(node.last_activity_us, node.quiet_since_us) + cfg.idle_timeout_us
    return None


@dataclass(frozen=True)
class Transmission:
    ref: int
    node_id: int
    start_us: int
    end_us: int


def overlaps(a: Transmission, b: Transmission) -> bool:
    return a.start_us < b.end_us and b.start_us < a.end_us


def collision_rule(transmissions: Sequence[Transmission]) -> tuple[set[int], list[MacEvent]]:
    """Destructive collisions, no capture: every packet that overlaps any
    other on the shared channel is lost. Returns lost refs and events."""
    lost: set[int] = set()
    for i, a in enumerate(transmissions):
        for b in transmissions[i + 1:]:
            if overlaps(a, b):
                lost.add(a.ref)
                lost.add(b.ref)
    events = [
        MacEvent(max(t.start_us, *(o.start_us for o in transmissions if o is not t and overlaps(t, o))),
                 t.node_id, EventKind.COLLISION, t.ref)
        for t in transmissions
        if t.ref in lost
    ]
    return lost, events


def duty_cycle(node: NodeState) -> float:
    """Fraction of elapsed time spent transmitting."""
    elapsed = node.elapsed_us
    if elapsed <= 0:
        raise DomainError("no elapsed time")
    return node.tx_us / elapsed


def state_fractions(node: NodeState) -> tuple[float, float, float]:
    elapsed = node.elapsed_us
    if elapsed <= 0:
        raise DomainError("no elapsed time")
    return node.tx_us / elapsed, node.listen_us / elapsed, node.sleep_us / elapsed
