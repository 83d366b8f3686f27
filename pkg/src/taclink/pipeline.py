"""Voice signal chain: VOX gate, codec model, CRC-16, AES-128-CTR framing.

Wire layout of a voice packet (big-endian)::

    byte 0      version (high nibble) | flags (low nibble)
    byte 1      ciphertext length
    bytes 2-3   sequence number
    bytes 4-15  nonce: 64-bit session salt || 32-bit zero-extended seq
    ...         ciphertext (same length as plaintext)
    last 2      CRC-16/CCITT-FALSE over everything before it

CRC-16 detects corruption only. It is not a message authentication code.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Sequence

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import ConfigError, CrcMismatch, MalformedPacket, NonceReuseError

PROTOCOL_VERSION = 1
FLAG_ENCRYPTED = 0x1
FLAG_CONTROL = 0x2
HEADER_BYTES = 16
CRC_BYTES = 2
PACKET_OVERHEAD = HEADER_BYTES + CRC_BYTES
MAX_CIPHERTEXT = 255 - PACKET_OVERHEAD
SEQ_MODULUS = 1 << 16
KEY_ENV_VAR = "TACLINK_KEY"


@dataclass(frozen=True)
class VoxConfig:
    threshold: float = 0.1
    hangover_ms: float = 200.0

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ConfigError("vox.threshold", f"must lie in (0, 1), got {self.threshold}")
        if self.hangover_ms < 0:
            raise ConfigError("vox.hangover_ms", "must be >= 0")


@dataclass(frozen=True)
class CodecProfile:
    """Bitrate/latency model of the voice codec and the MCU processing steps."""

    bitrate_bps: int = 2400
    frame_ms: float = 40.0
    encode_delay_ms: float = 25.0
    decode_delay_ms: float = 15.0
    encrypt_delay_ms: float = 2.0
    decrypt_delay_ms: float = 2.0
    mcu_throughput_bps: float = 1_000_000.0
    scheduling_overhead_ms: float = 1.0

    def __post_init__(self):
        if self.bitrate_bps <= 0:
            raise ConfigError("codec.bitrate_bps", "must be > 0")
        if self.frame_ms <= 0:
            raise ConfigError("codec.frame_ms", "must be > 0")
        if self.mcu_throughput_bps <= 0:
            raise ConfigError("codec.mcu_throughput_bps", "must be > 0")
        for name in ("encode_delay_ms", "decode_delay_ms", "encrypt_delay_ms",
                     "decrypt_delay_ms", "scheduling_overhead_ms"):
            if getattr(self, name) < 0:
                raise ConfigError(f"codec.{name}", "must be >= 0")

    @property
    def frame_bytes(self) -> int:
        return frame_payload_bytes(self.bitrate_bps, self.frame_ms)

    @property
    def packet_bytes(self) -> int:
        return self.frame_bytes + PACKET_OVERHEAD

    def packetization_ms(self, packet_bytes: int) -> float:
        return packet_bytes * 8 / self.mcu_throughput_bps * 1000 + self.scheduling_overhead_ms


@dataclass(frozen=True)
class AudioFrame:
    seq: int
    duration_ms: float
    pcm_energy: float | None
    payload_bits: int
    payload: bytes = field(repr=False)
    t_encoding_ms: float = 0.0
    t_decoding_ms: float = 0.0


@dataclass(frozen=True)
class SessionKey:
    key: bytes
    session_salt: bytes = bytes(8)

    def __post_init__(self):
        if len(self.key) != 16:
            raise ConfigError("key", f"AES-128 key must be 16 bytes, got {len(self.key)}")
        if len(self.session_salt) != 8:
            raise ConfigError("session_salt", "must be 8 bytes")

    @classmethod
    def from_hex(cls, key_hex: str, salt_hex: str | None = None) -> "SessionKey":
        try:
            key = bytes.fromhex(key_hex.strip())
            salt = bytes.fromhex(salt_hex.strip()) if salt_hex else bytes(8)
        except ValueError as exc:
            raise ConfigError("key", f"not valid hex: {exc}") from None
        if len(key) != 16:
            raise ConfigError("key", "expected 32 hex characters")
        return cls(key, salt)

    @classmethod
    def from_env(cls, salt_hex: str | None = None) -> "SessionKey":
        value = os.environ.get(KEY_ENV_VAR)
        if value is None:
            raise ConfigError(KEY_ENV_VAR, "environment variable not set")
        return cls.from_hex(value, salt_hex)


@dataclass(frozen=True)
class VoicePacket:
    version: int
    flags: int
    seq: int
    nonce: bytes
    ciphertext: bytes
    crc16: int
    t_encryption_ms: float = field(default=0.0, compare=False)

    def __len__(self) -> int:
        return PACKET_OVERHEAD + len(self.ciphertext)


def vox_gate(energy: Sequence[float], cfg: VoxConfig, sample_period_ms: float = 10.0) -> list[bool]:
    """Voice-activity gate over a uniformly sampled amplitude envelope.

    Open from the first sample at or above threshold until ``hangover_ms``
    after the last such sample (inclusive).
    """
    hold = math.floor(cfg.hangover_ms / sample_period_ms + 1e-9)
    out = []
    last_hit = None
    for i, e in enumerate(energy):
        if e >= cfg.threshold:
            last_hit = i
        out.append(last_hit is not None and i - last_hit <= hold)
    return out


def frame_payload_bytes(bitrate_bps: float, duration_ms: float) -> int:
    # exact rational ceil: bits = bitrate * duration / 1000, bytes = ceil(bits / 8)
    num = round(bitrate_bps * duration_ms * 1000)
    return -(-num // 8_000_000)


def encode_frame(
    window: Sequence[float],
    codec_bitrate_bps: float,
    duration_ms: float,
    seq: int = 0,
    encode_delay_ms: float = 0.0,
) -> AudioFrame:
    """Compress one envelope window into a fixed-size pseudo-payload.

    The bytes are a hash stream keyed on (seq, window), so identical input
    always yields identical payload and any corruption is detectable.
    """
    if duration_ms <= 0 or codec_bitrate_bps <= 0:
        raise ValueError("duration and bitrate must be positive")
    n = frame_payload_bytes(codec_bitrate_bps, duration_ms)
    samples = [float(x) for x in window]
    h = hashlib.shake_128()
    h.update(struct.pack(">I", seq & 0xFFFFFFFF))
    h.update(struct.pack(f">{len(samples)}d", *samples))
    energy = sum(samples) / len(samples) if samples else 0.0
    return AudioFrame(
        seq=seq % SEQ_MODULUS,
        duration_ms=duration_ms,
        pcm_energy=energy,
        payload_bits=n * 8,
        payload=h.digest(n),
        t_encoding_ms=encode_delay_ms,
    )


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out."""
    return _crc16(data)


def _make_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
        table.append(crc & 0xFFFF)
    return table


_CRC_TABLE = _make_table()


def _crc16(data: bytes, crc: int = 0xFFFF) -> int:
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


def make_nonce(salt: bytes, seq: int) -> bytes:
    return salt + struct.pack(">I", seq)


def _ctr(key: bytes, nonce: bytes, data: bytes) -> bytes:
    # 96-bit nonce followed by a 32-bit block counter starting at zero
    cipher = Cipher(algorithms.AES(key), modes.CTR(nonce + bytes(4)))
    enc = cipher.encryptor()
    return enc.update(data) + enc.finalize()


def _header(version: int, flags: int, length: int, seq: int, nonce: bytes) -> bytes:
    return struct.pack(">BBH", (version << 4) | flags, length, seq) + nonce


def encrypt_packet(frame: AudioFrame, key: SessionKey, encrypt_delay_ms: float = 0.0) -> VoicePacket:
    """Encrypt a frame under AES-128-CTR and wrap it in a voice packet.

    Stateless: nonce uniqueness is the caller's job, see :class:`Session`.
    """
    if len(frame.payload) > MAX_CIPHERTEXT:
        raise ValueError(f"frame payload exceeds {MAX_CIPHERTEXT} bytes")
    seq = frame.seq % SEQ_MODULUS
    nonce = make_nonce(key.session_salt, seq)
    ct = _ctr(key.key, nonce, frame.payload)
    flags = FLAG_ENCRYPTED
    crc = crc16(_header(PROTOCOL_VERSION, flags, len(ct), seq, nonce) + ct)
    return VoicePacket(PROTOCOL_VERSION, flags, seq, nonce, ct, crc, encrypt_delay_ms)


def serialize(pkt: VoicePacket) -> bytes:
    body = _header(pkt.version, pkt.flags, len(pkt.ciphertext), pkt.seq, pkt.nonce) + pkt.ciphertext
    return body + struct.pack(">H", pkt.crc16)


def parse(buf: bytes) -> VoicePacket:
    if len(buf) < PACKET_OVERHEAD:
        raise MalformedPacket(f"{len(buf)} bytes is shorter than the {PACKET_OVERHEAD}-byte minimum")
    vf, length, seq = struct.unpack_from(">BBH", buf)
    version, flags = vf >> 4, vf & 0xF
    if version != PROTOCOL_VERSION:
        raise MalformedPacket(f"unsupported version {version}")
    if len(buf) != PACKET_OVERHEAD + length:
        raise MalformedPacket(
            f"length field says {length} ciphertext bytes, buffer holds {len(buf) - PACKET_OVERHEAD}"
        )
    nonce = bytes(buf[4:16])
    ct = bytes(buf[16:16 + length])
    (crc,) = struct.unpack_from(">H", buf, 16 + length)
    return VoicePacket(version, flags, seq, nonce, ct, crc)


def check_crc(pkt: VoicePacket) -> None:
    body = _header(pkt.version, pkt.flags, len(pkt.ciphertext), pkt.seq, pkt.nonce) + pkt.ciphertext
    actual = crc16(body)
    if actual != pkt.crc16:
        raise CrcMismatch(f"crc mismatch: carried {pkt.crc16:#06x}, computed {actual:#06x}")


def decrypt_packet(
    pkt: VoicePacket,
    key: SessionKey,
    duration_ms: float = 40.0,
    decode_delay_ms: float = 0.0,
) -> AudioFrame:
    """Verify the CRC, then decrypt. Raises CrcMismatch on corruption."""
    check_crc(pkt)
    if not pkt.flags & FLAG_ENCRYPTED:
        payload = pkt.ciphertext
    else:
        payload = _ctr(key.key, pkt.nonce, pkt.ciphertext)
    return AudioFrame(
        seq=pkt.seq,
        duration_ms=duration_ms,
        pcm_energy=None,
        payload_bits=len(payload) * 8,
        payload=payload,
        t_decoding_ms=decode_delay_ms,
    )


class Session:
    """Sender-side session: refuses to encrypt the same seq twice.

    Single owner; create one per node and key.
    """

    def __init__(self, key: SessionKey):
        self.key = key
        self._used: set[int] = set()

    def seal(self, frame: AudioFrame, encrypt_delay_ms: float = 0.0) -> VoicePacket:
        seq = frame.seq % SEQ_MODULUS
        if seq in self._used:
            raise NonceReuseError(f"seq {seq} already used in this session; rekey required")
        self._used.add(seq)
        return encrypt_packet(frame, self.key, encrypt_delay_ms)

    @property
    def packets_sealed(self) -> int:
        return len(self._used)
