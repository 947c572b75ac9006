"""Public-channel transcript: what an eavesdropper tapping the channel sees."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Optional, Type

from .messages import ProtocolMessage, message_from_dict


@dataclass(frozen=True)
class TranscriptEntry:
    seq: int
    # flow id of the underlying connection, e.g. "s0003"; not part of any message
    flow: str
    src: str
    dst: str
    message: ProtocolMessage

    @property
    def direction(self) -> str:
        return f"{self.src}->{self.dst}"

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": "message", "seq": self.seq, "flow": self.flow,
                "src": self.src, "dst": self.dst, "msg": self.message.to_dict()}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TranscriptEntry":
        return cls(seq=d["seq"], flow=d["flow"], src=d["src"], dst=d["dst"],
                   message=message_from_dict(d["msg"]))


@dataclass
class EavesdropView:
    """Ordered log of every message that crossed the public channel."""

    entries: List[TranscriptEntry] = field(default_factory=list)

    def record(self, flow: str, src: str, dst: str, message: ProtocolMessage) -> TranscriptEntry:
        e = TranscriptEntry(len(self.entries), flow, src, dst, message)
        self.entries.append(e)
        return e

    def __iter__(self) -> Iterator[TranscriptEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def of_type(self, cls: Type) -> List[TranscriptEntry]:
        return [e for e in self.entries if isinstance(e.message, cls)]

    def flow(self, flow: str) -> List[TranscriptEntry]:
        return [e for e in self.entries if e.flow == flow]

    def find(self, flow: str, cls: Type) -> Optional[ProtocolMessage]:
        for e in self.entries:
            if e.flow == flow and isinstance(e.message, cls):
                return e.message
        return None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), separators=(",", ":")) + "\n" for e in self.entries)

    @classmethod
    def from_jsonl(cls, lines: Iterable[str]) -> "EavesdropView":
        view = cls()
        for line in lines:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            if d.get("kind") == "message":
                view.entries.append(TranscriptEntry.from_dict(d))
        return view
