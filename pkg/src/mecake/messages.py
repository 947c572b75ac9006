"""The four public-channel messages and their JSON wire format.

Byte fields are lowercase hex, timestamps are integers, and each record is
tagged with ``"type": "M1" .. "M4"``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Any, ClassVar, Dict, Type, Union

from .crypto import SIZE


@dataclass(frozen=True)
class _Message:
    tag: ClassVar[str] = ""

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {"type": self.tag}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = v.hex() if isinstance(v, bytes) else v
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def raw_bytes(self) -> bytes:
        """Concatenated byte fields, for substring scans of what went on the wire."""
        return b"".join(getattr(self, f.name) for f in fields(self)
                        if isinstance(getattr(self, f.name), bytes))

    def replace_field(self, name: str, value: Any) -> "_Message":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        if name not in d:
            raise KeyError(name)
        d[name] = value
        return type(self)(**d)


@dataclass(frozen=True)
class MessageM1(_Message):
    """User -> RC login request."""
    tag: ClassVar[str] = "M1"
    rn1_masked: bytes
    b_i: bytes
    d1: bytes
    d2: bytes
    ts_u: int


@dataclass(frozen=True)
class MessageM2(_Message):
    """RC -> edge server."""
    tag: ClassVar[str] = "M2"
    rn1_masked: bytes
    ts_rc: int
    tmid_masked: bytes
    d3: bytes
    d4: bytes


@dataclass(frozen=True)
class MessageM3(_Message):
    """Edge server -> RC."""
    tag: ClassVar[str] = "M3"
    ts_ms: int
    rn3_masked: bytes
    d5: bytes
    d6: bytes


@dataclass(frozen=True)
class MessageM4(_Message):
    """RC -> user."""
    tag: ClassVar[str] = "M4"
    t4: int
    rn3_masked: bytes
    d6: bytes
    d7: bytes
    d8: bytes


ProtocolMessage = Union[MessageM1, MessageM2, MessageM3, MessageM4]

MESSAGE_TYPES: Dict[str, Type[_Message]] = {
    cls.tag: cls for cls in (MessageM1, MessageM2, MessageM3, MessageM4)
}


def message_from_dict(d: Dict[str, Any]) -> ProtocolMessage:
    try:
        cls = MESSAGE_TYPES[d["type"]]
    except KeyError:
        raise ValueError(f"unknown message type {d.get('type')!r}") from None
    kwargs = {}
    for f in fields(cls):
        v = d[f.name]
        if isinstance(v, str):
            v = bytes.fromhex(v)
            if len(v) != SIZE:
                raise ValueError(f"{cls.tag}.{f.name}: expected {SIZE} bytes, got {len(v)}")
        kwargs[f.name] = v
    return cls(**kwargs)


def message_from_json(text: str) -> ProtocolMessage:
    return message_from_dict(json.loads(text))
