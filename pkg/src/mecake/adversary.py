"""Attacks on the scheme, run from an adversary's restricted view.

Inputs are limited to public-channel messages, a malicious edge server's own
registration secrets, and the user's ``TMID_i`` that such a server unmasks
during a legitimate session. The curious-RC attack additionally uses the
RC's own session bookkeeping. Nothing here reads another party's state.
"""

from __future__ import annotations

import hmac
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from .crypto import Rng, fresh_nonce, h, xor_mask
from .messages import MessageM1, MessageM4
from .protocol import EdgeServer, RcSessionRecord
from .transcript import EavesdropView, TranscriptEntry

KEY_COMPUTATION = "key-computation"
IMPERSONATION = "impersonation"
TRACEABILITY = "traceability"
CURIOUS_RC = "curious-rc"


@dataclass
class AttackReport:
    attack: str
    success: bool
    recovered: Dict[str, str]
    comparison: Dict[str, bool]
    notes: List[str] = field(default_factory=list)

    @classmethod
    def judge(cls, attack: str, recovered: Mapping[str, bytes],
              truth: Optional[Mapping[str, bytes]], notes: Optional[List[str]] = None
              ) -> "AttackReport":
        """Compare every recovered value bit-exactly against ground truth.

        Without ground truth for every recovered value the attack is not
        counted as a success.
        """
        comparison = {}
        if truth is not None:
            comparison = {k: k in truth and hmac.compare_digest(v, truth[k])
                          for k, v in recovered.items()}
        success = bool(recovered) and len(comparison) == len(recovered) and all(comparison.values())
        return cls(attack=attack, success=success,
                   recovered={k: v.hex() for k, v in recovered.items()},
                   comparison=comparison, notes=list(notes or []))

    def to_dict(self) -> dict:
        return {"kind": "attack_report", "attack": self.attack, "success": self.success,
                "recovered": dict(self.recovered), "comparison": dict(self.comparison),
                "notes": list(self.notes)}


@dataclass
class Kc2Partial:
    sid_star: bytes
    rn1_star: bytes


@dataclass
class MaliciousServerMemory:
    """A registered edge server that kept the ``TMID_i`` of a past client."""

    base: EdgeServer
    retained_tmid: bytes
    # KC2 results per observed M1, keyed by (B_i, TS_U)
    partials: Dict[Tuple[bytes, int], Kc2Partial] = field(default_factory=dict)

    @classmethod
    def after_session(cls, server: EdgeServer) -> "MaliciousServerMemory":
        # the server unmasked TMID_i from TMID_i' while serving the user
        if server.session is None:
            raise ValueError("server has not completed a session")
        return cls(base=server, retained_tmid=server.session.tmid_i)

    def capture_m1(self, m1: MessageM1) -> Kc2Partial:
        """Unmask the target server and rn1 from a captured request."""
        tmid = self.retained_tmid
        sid_star = xor_mask(m1.d1, h([tmid, m1.ts_u]))
        rn1_star = xor_mask(m1.rn1_masked, h([sid_star, tmid]))
        p = Kc2Partial(sid_star=sid_star, rn1_star=rn1_star)
        self.partials[(m1.b_i, m1.ts_u)] = p
        return p


def kc_attack(mem: MaliciousServerMemory, m1_star: MessageM1, m4_star: MessageM4,
              truth: Optional[Mapping[str, bytes]] = None) -> AttackReport:
    """Compute the session key of a session the attacker did not take part in.

    ``truth`` maps ``sid``, ``rn1``, ``h_psid_rn2``, ``rn3`` and ``sk`` to
    the honest session's values.
    """
    tmid = mem.retained_tmid
    p = mem.partials.get((m1_star.b_i, m1_star.ts_u)) or mem.capture_m1(m1_star)
    h_psid_rn2 = xor_mask(m4_star.d7, h([p.rn1_star, tmid]))
    rn3_star = xor_mask(m4_star.rn3_masked, h([p.rn1_star, p.sid_star]))
    sk_star = h([h_psid_rn2, p.rn1_star, rn3_star, tmid])
    recovered = OrderedDict(
        sid=p.sid_star, rn1=p.rn1_star, h_psid_rn2=h_psid_rn2, rn3=rn3_star, sk=sk_star)
    return AttackReport.judge(KEY_COMPUTATION, recovered, truth)


def impersonate_user(mem: MaliciousServerMemory, b_i: bytes, target_sid: bytes,
                     now: int, rng: Rng) -> MessageM1:
    """Forge a login request for the victim, addressed to ``target_sid``.

    ``b_i`` is the victim's constant pseudonym, copied from any earlier M1.
    """
    tmid = mem.retained_tmid
    rn1 = fresh_nonce(rng)
    m1 = MessageM1(
        rn1_masked=xor_mask(rn1, h([target_sid, tmid])),
        b_i=b_i,
        d1=xor_mask(target_sid, h([tmid, now])),
        d2=h([target_sid, tmid, rn1, now]),
        ts_u=now,
    )
    mem.partials[(b_i, now)] = Kc2Partial(sid_star=target_sid, rn1_star=rn1)
    return m1


def link_sessions(view: EavesdropView) -> List[List[TranscriptEntry]]:
    """Group observed M1 messages by their B_i field, in first-seen order."""
    groups: "OrderedDict[bytes, List[TranscriptEntry]]" = OrderedDict()
    for e in view.of_type(MessageM1):
        groups.setdefault(e.message.b_i, []).append(e)
    return list(groups.values())


def curious_rc_compute_sk(record: RcSessionRecord, rn3_recovered: bytes) -> bytes:
    """Session key as the RC can compute it from what it saw during L2 and L4."""
    return h([h([record.psid_j, record.rn2]), record.rn1, rn3_recovered, record.tmid_i])
