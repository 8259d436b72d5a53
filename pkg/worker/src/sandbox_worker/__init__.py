"""Guest-runtime sandbox worker speaking the line-delimited JSON protocol."""

PROTOCOL_VERSION = 1

__all__ = ["PROTOCOL_VERSION"]
