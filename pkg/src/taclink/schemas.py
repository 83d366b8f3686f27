"""JSON Schemas for the CLI's machine-readable outputs and the scenario file."""

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
_int = {"type": "integer", "minimum": 0}

LINK_BUDGET = {
    "type": "object",
    "required": ["path_loss_db", "rx_power_dbm", "link_margin_db", "feasible"],
    "properties": {
        "path_loss_db": _num,
        "rx_power_dbm": _num,
        "link_margin_db": _num,
        "feasible": {"type": "boolean"},
        "sensitivity_dbm": _num,
    },
    "additionalProperties": False,
}

AIRTIME = {
    "type": "object",
    "required": ["symbol_time_ms", "preamble_ms", "payload_symbols", "payload_ms", "total_ms"],
    "properties": {
        "symbol_time_ms": _num,
        "preamble_ms": _num,
        "payload_symbols": {"type": "integer", "minimum": 8},
        "payload_ms": _num,
        "total_ms": _num,
        "effective_bitrate_bps": _num,
        "low_data_rate_optimize": {"type": "boolean"},
    },
    "additionalProperties": False,
}

ENERGY = {
    "type": "object",
    "required": ["avg_power_mw", "battery_life_hours"],
    "properties": {
        "avg_power_mw": _num,
        "battery_life_hours": _num,
        "duty_cycle": _num,
        "per_node": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["node_id", "duty_cycle", "avg_power_mw", "battery_life_hours"],
            },
        },
    },
    "additionalProperties": False,
}

PACKET = {
    "type": "object",
    "required": ["version", "flags", "seq", "nonce", "ciphertext", "crc16"],
    "properties": {
        "version": {"type": "integer", "minimum": 0, "maximum": 15},
        "flags": {"type": "integer", "minimum": 0, "maximum": 15},
        "seq": {"type": "integer", "minimum": 0, "maximum": 65535},
        "nonce": {"type": "string", "pattern": "^[0-9a-f]{24}$"},
        "ciphertext": {"type": "string", "pattern": "^([0-9a-f]{2})*$"},
        "crc16": {"type": "integer", "minimum": 0, "maximum": 65535},
        "plaintext": {"type": "string"},
        "hex": {"type": "string"},
        "length": {"type": "integer"},
    },
    "additionalProperties": False,
}

_packet_record = {
    "type": "object",
    "required": [
        "ref", "src", "dst", "seq", "t_encoding", "t_encryption", "t_packetization",
        "t_airtime", "t_decoding", "t_total", "t_queue_ms", "outcome",
    ],
    "properties": {
        "outcome": {"enum": ["delivered", "lost_channel", "lost_collision", "lost_crc"]},
        "rx_power_dbm": _opt_num,
        "margin_db": _opt_num,
    },
}

SIM_REPORT = {
    "type": "object",
    "required": [
        "packets_sent", "packets_delivered", "packets_lost_channel", "packets_lost_collision",
        "packets_lost_crc", "latency_p50_ms", "latency_p95_ms", "latency_max_ms",
        "duty_cycle_per_node", "avg_power_mw", "battery_life_h", "packets", "nodes",
    ],
    "properties": {
        "packets_sent": _int,
        "packets_delivered": _int,
        "packets_lost_channel": _int,
        "packets_lost_collision": _int,
        "packets_lost_crc": _int,
        "frames_dropped_queue": _int,
        "latency_p50_ms": _opt_num,
        "latency_p95_ms": _opt_num,
        "latency_max_ms": _opt_num,
        "packet_error_rate": _opt_num,
        "duty_cycle_per_node": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "avg_power_mw": _num,
        "battery_life_h": _num,
        "packets": {"type": "array", "items": _packet_record},
        "nodes": {"type": "array"},
    },
}

MAC_EVENT = {
    "type": "object",
    "required": ["time_ms", "node_id", "kind", "packet_ref"],
    "properties": {
        "time_ms": _num,
        "node_id": {"type": "integer"},
        "kind": {"enum": [
            "VOX_OPEN", "VOX_CLOSE", "TX_START", "TX_END", "RX_START", "RX_END",
            "COLLISION", "DROP", "WAKE", "SLEEP",
        ]},
        "packet_ref": {"type": ["integer", "null"]},
    },
    "additionalProperties": False,
}

WORKED_EXAMPLE = {
    "type": "object",
    "required": ["checks", "passed"],
    "properties": {
        "passed": {"type": "boolean"},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["quantity", "computed", "published", "tolerance", "pass"],
            },
        },
    },
}

SCENARIO = {
    "type": "object",
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": 1},
        "duration_s": {"type": "number", "exclusiveMinimum": 0},
        "phy": {"type": "object"},
        "vox": {"type": "object"},
        "codec": {"type": "object"},
        "power": {"type": "object"},
        "channel": {"type": "object"},
        "speech": {"type": "object"},
        "mac": {"type": "object"},
        "envelope_period_ms": _num,
        "corruption_prob": _num,
        "key_hex": {"type": "string", "pattern": "^[0-9a-fA-F]{32}$"},
        "strict_throughput": {"type": "boolean"},
    },
    "additionalProperties": False,
}
