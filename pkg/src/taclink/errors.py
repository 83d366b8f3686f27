"""Exception types shared across taclink."""


class TaclinkError(Exception):
    pass


class DomainError(TaclinkError, ValueError):
    """Argument outside the mathematical domain of a formula."""


class ConfigError(TaclinkError, ValueError):
    """Invalid configuration. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class LinkNeverCloses(TaclinkError):
    pass


class PayloadTooLarge(TaclinkError, ValueError):
    pass


class NonceReuseError(TaclinkError):
    pass


class PacketError(TaclinkError):
    pass


class CrcMismatch(PacketError):
    pass


class MalformedPacket(PacketError):
    """Framing error: bad version, short buffer or length field disagreement."""


class EmptyDeliverySet(TaclinkError):
    pass
