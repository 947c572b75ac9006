"""Registration and login/key-establishment steps for RC, edge servers and users.

Party states are plain mutable dataclasses; each step function mutates only
the state of the party executing it. Failed checks raise :class:`Reject`
with a typed ``reason`` instead of silently closing the session.

Two formulas are realized in their invertible form: the user unmasks
``TMID_i`` with ``h(n_i || PW || sigma)`` (the same mask applied at card
personalization), and the RC unmasks ``rn1`` with ``h(SID_j || TMID_i)`` (the
mask applied in the user's request). The L5 confirmation value ``D_6`` is
checked with ``rn1`` included, matching how the server computes it.
"""

from __future__ import annotations

import hmac
import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .crypto import (
    DEFAULT_DELTA_T_MS,
    SIZE,
    Rng,
    UsageError,
    check_freshness,
    fresh_nonce,
    gen,
    h,
    pad_identity,
    rep,
    xor_mask,
)
from .messages import MessageM1, MessageM2, MessageM3, MessageM4

FRESHNESS = "freshness"
AUTH = "auth"
UNKNOWN_USER = "unknown-user"
UNKNOWN_SERVER = "unknown-server"
LOGIN = "login"


class Reject(Exception):
    """A verifier refused a message. ``reason`` is one of the module constants."""

    def __init__(self, reason: str, step: str, detail: str = ""):
        self.reason = reason
        self.step = step
        super().__init__(f"{step}: {reason}" + (f" ({detail})" if detail else ""))


class LoginFailure(Reject):
    def __init__(self, detail: str = "smart card verification failed"):
        super().__init__(LOGIN, "L1", detail)


def _eq(a: bytes, b: bytes) -> bool:
    return hmac.compare_digest(a, b)


def _note(log: Optional[List[str]], name: str) -> None:
    if log is not None:
        log.append(name)


# --- party state -----------------------------------------------------------

@dataclass
class UserRecord:
    b_i: bytes
    x_i: bytes


@dataclass
class ServerRecord:
    f_j: bytes
    psid_j: bytes
    x_j: bytes


@dataclass
class RcSessionRecord:
    tmid_i: bytes
    sid_j: bytes
    rn1: bytes
    rn2: bytes
    psid_j: bytes
    ts_u: int
    rn3: Optional[bytes] = None


@dataclass
class RegistrationCenter:
    master_secret: bytes
    delta_t: int = DEFAULT_DELTA_T_MS
    user_table: Dict[bytes, UserRecord] = field(default_factory=dict)
    server_table: Dict[bytes, ServerRecord] = field(default_factory=dict)
    pending_sessions: Dict[int, RcSessionRecord] = field(default_factory=dict)
    # kept after L4; nothing in the scheme says the RC forgets them
    completed_sessions: Dict[int, RcSessionRecord] = field(default_factory=dict)
    _handles: "itertools.count[int]" = field(default_factory=itertools.count, repr=False)

    @classmethod
    def create(cls, rng: Rng, delta_t: int = DEFAULT_DELTA_T_MS) -> "RegistrationCenter":
        return cls(master_secret=fresh_nonce(rng), delta_t=delta_t)

    def retire(self, handle: int) -> None:
        self.completed_sessions.pop(handle, None)


@dataclass(frozen=True)
class CardStub:
    """What the RC hands the user over the secure channel at registration."""
    tmid_i: bytes
    b_i: bytes


@dataclass
class SmartCard:
    tmid_star: bytes
    b_i: bytes
    c_i: bytes
    auth_i: bytes
    tau_i: bytes


@dataclass
class ServerSession:
    tmid_i: bytes
    rn1: bytes
    rn3: bytes
    h_psid_rn2: bytes
    sk: bytes


@dataclass
class EdgeServer:
    sid: bytes
    k_s: bytes
    r_j: bytes
    delta_t: int = DEFAULT_DELTA_T_MS
    session: Optional[ServerSession] = None


@dataclass
class UserSession:
    rn1: bytes
    tmid_i: bytes
    target_sid: bytes


@dataclass
class MobileUser:
    mid: bytes
    pw: bytes
    bio: bytes
    card: SmartCard
    delta_t: int = DEFAULT_DELTA_T_MS
    session: Optional[UserSession] = None
    session_key: Optional[bytes] = None


# --- registration (secure channel) ----------------------------------------

def register_user(rc: RegistrationCenter, mid: bytes, rng: Rng) -> CardStub:
    if len(mid) != SIZE:
        raise UsageError("mid must be a padded 32-byte identity")
    r_i = fresh_nonce(rng)
    x_i = fresh_nonce(rng)
    tmid_i = h([mid, r_i])
    b_i = xor_mask(tmid_i, h([rc.master_secret, x_i]))
    if b_i in rc.user_table:
        raise RuntimeError("B_i collision in user table")
    rc.user_table[b_i] = UserRecord(b_i=b_i, x_i=x_i)
    return CardStub(tmid_i=tmid_i, b_i=b_i)


def personalize_card(stub: CardStub, mid: bytes, pw: bytes, bio: bytes, rng: Rng) -> SmartCard:
    if not pw:
        raise UsageError("password must be non-empty")
    n_i = fresh_nonce(rng)
    fp = gen(bio, rng)
    return SmartCard(
        tmid_star=xor_mask(stub.tmid_i, h([n_i, pw, fp.sigma])),
        b_i=stub.b_i,
        c_i=xor_mask(n_i, h([mid, pw, fp.sigma])),
        auth_i=h([mid, pw, fp.sigma, n_i]),
        tau_i=fp.tau,
    )


def enroll_user(rc: RegistrationCenter, ident, pw: bytes, bio: bytes, rng: Rng) -> MobileUser:
    """Registration plus card personalization in one call."""
    mid = pad_identity(ident)
    stub = register_user(rc, mid, rng)
    card = personalize_card(stub, mid, pw, bio, rng)
    return MobileUser(mid=mid, pw=pw, bio=bio, card=card, delta_t=rc.delta_t)


def register_server(rc: RegistrationCenter, sid: bytes, rng: Rng) -> EdgeServer:
    if len(sid) != SIZE:
        raise UsageError("sid must be a padded 32-byte identity")
    if sid in rc.server_table:
        raise UsageError(f"server {sid.rstrip(bytes(1))!r} already registered")
    r_j = fresh_nonce(rng)
    x_j = fresh_nonce(rng)
    psid_j = h([sid, r_j])
    q_j = h([sid, x_j])
    rc.server_table[sid] = ServerRecord(f_j=xor_mask(r_j, q_j), psid_j=psid_j, x_j=x_j)
    return EdgeServer(sid=sid, k_s=h([sid, rc.master_secret]), r_j=r_j, delta_t=rc.delta_t)


# --- login and key establishment (public channel) -------------------------

def user_begin_session(user: MobileUser, pw_input: bytes, bio_input: bytes,
                       target_sid: bytes, now: int, rng: Rng,
                       log: Optional[List[str]] = None) -> MessageM1:
    """L1: verify the card locally, then build M1 for ``target_sid``."""
    card = user.card
    sigma = rep(bio_input, card.tau_i)
    n_i = xor_mask(card.c_i, h([user.mid, pw_input, sigma]))
    if not _eq(card.auth_i, h([user.mid, pw_input, sigma, n_i])):
        raise LoginFailure()
    _note(log, "L1:auth_i")

    tmid_i = xor_mask(card.tmid_star, h([n_i, pw_input, sigma]))
    rn1 = fresh_nonce(rng)
    ts_u = now
    m1 = MessageM1(
        rn1_masked=xor_mask(rn1, h([target_sid, tmid_i])),
        b_i=card.b_i,
        d1=xor_mask(target_sid, h([tmid_i, ts_u])),
        d2=h([target_sid, tmid_i, rn1, ts_u]),
        ts_u=ts_u,
    )
    user.session = UserSession(rn1=rn1, tmid_i=tmid_i, target_sid=target_sid)
    return m1


def rc_handle_m1(rc: RegistrationCenter, m1: MessageM1, now: int, rng: Rng,
                 log: Optional[List[str]] = None) -> Tuple[MessageM2, int]:
    """L2: authenticate the user request and forward M2 to the named server."""
    if not check_freshness(m1.ts_u, now, rc.delta_t):
        raise Reject(FRESHNESS, "L2", f"ts_u={m1.ts_u} now={now}")
    _note(log, "L2:freshness")
    rec = rc.user_table.get(m1.b_i)
    if rec is None:
        raise Reject(UNKNOWN_USER, "L2")

    tmid_i = xor_mask(m1.b_i, h([rc.master_secret, rec.x_i]))
    sid_j = xor_mask(m1.d1, h([tmid_i, m1.ts_u]))
    rn1 = xor_mask(m1.rn1_masked, h([sid_j, tmid_i]))
    if not _eq(m1.d2, h([sid_j, tmid_i, rn1, m1.ts_u])):
        raise Reject(AUTH, "L2", "D2 mismatch")
    _note(log, "L2:d2")

    srv = rc.server_table.get(sid_j)
    if srv is None:
        raise Reject(UNKNOWN_SERVER, "L2")

    rn2 = fresh_nonce(rng)
    ts_rc = now
    h_psid_rn2 = h([srv.psid_j, rn2])
    r_j = xor_mask(srv.f_j, h([sid_j, srv.x_j]))
    m2 = MessageM2(
        rn1_masked=m1.rn1_masked,
        ts_rc=ts_rc,
        tmid_masked=xor_mask(h([srv.psid_j, r_j]), tmid_i),
        d3=xor_mask(h_psid_rn2, h([h([sid_j, rc.master_secret])])),
        d4=h([h_psid_rn2, sid_j, ts_rc]),
    )
    handle = next(rc._handles)
    rc.pending_sessions[handle] = RcSessionRecord(
        tmid_i=tmid_i, sid_j=sid_j, rn1=rn1, rn2=rn2, psid_j=srv.psid_j, ts_u=m1.ts_u)
    return m2, handle


def server_handle_m2(server: EdgeServer, m2: MessageM2, now: int, rng: Rng,
                     log: Optional[List[str]] = None) -> Tuple[MessageM3, bytes]:
    """L3: check the RC's M2, derive SK, answer with M3."""
    if not check_freshness(m2.ts_rc, now, server.delta_t):
        raise Reject(FRESHNESS, "L3", f"ts_rc={m2.ts_rc} now={now}")
    _note(log, "L3:freshness")
    h_psid_rn2 = xor_mask(m2.d3, h([server.k_s]))
    if not _eq(m2.d4, h([h_psid_rn2, server.sid, m2.ts_rc])):
        raise Reject(AUTH, "L3", "D4 mismatch")
    _note(log, "L3:d4")

    psid_j = h([server.sid, server.r_j])
    tmid_i = xor_mask(m2.tmid_masked, h([psid_j, server.r_j]))
    rn1 = xor_mask(m2.rn1_masked, h([server.sid, tmid_i]))
    rn3 = fresh_nonce(rng)
    ts_ms = now
    sk = h([h_psid_rn2, rn1, rn3, tmid_i])
    m3 = MessageM3(
        ts_ms=ts_ms,
        rn3_masked=xor_mask(rn3, h([rn1, server.sid])),
        d5=h([rn1, rn3, ts_ms]),
        d6=h([sk, h_psid_rn2, rn1]),
    )
    server.session = ServerSession(tmid_i=tmid_i, rn1=rn1, rn3=rn3,
                                   h_psid_rn2=h_psid_rn2, sk=sk)
    return m3, sk


def rc_handle_m3(rc: RegistrationCenter, handle: Optional[int], m3: MessageM3, now: int,
                 log: Optional[List[str]] = None) -> MessageM4:
    """L4: check the server's M3 and relay the key material to the user as M4.

    ``handle`` may be None when the RC has exactly one session in flight.
    """
    if handle is None:
        if len(rc.pending_sessions) != 1:
            raise UsageError("handle required when RC has "
                             f"{len(rc.pending_sessions)} pending sessions")
        handle = next(iter(rc.pending_sessions))
    rec = rc.pending_sessions.get(handle)
    if rec is None:
        raise UsageError(f"no pending RC session for handle {handle}")

    if not check_freshness(m3.ts_ms, now, rc.delta_t):
        raise Reject(FRESHNESS, "L4", f"ts_ms={m3.ts_ms} now={now}")
    _note(log, "L4:freshness")
    rn3 = xor_mask(m3.rn3_masked, h([rec.rn1, rec.sid_j]))
    if not _eq(m3.d5, h([rec.rn1, rn3, m3.ts_ms])):
        raise Reject(AUTH, "L4", "D5 mismatch")
    _note(log, "L4:d5")

    t4 = now
    h_psid_rn2 = h([rec.psid_j, rec.rn2])
    m4 = MessageM4(
        t4=t4,
        rn3_masked=m3.rn3_masked,
        d6=m3.d6,
        d7=xor_mask(h_psid_rn2, h([rec.rn1, rec.tmid_i])),
        d8=h([h_psid_rn2, rn3, t4]),
    )
    del rc.pending_sessions[handle]
    rec.rn3 = rn3
    rc.completed_sessions[handle] = rec
    return m4


def user_handle_m4(user: MobileUser, m4: MessageM4, now: int,
                   log: Optional[List[str]] = None) -> bytes:
    """L5: verify M4, derive and confirm SK."""
    sess = user.session
    if sess is None:
        raise UsageError("user has no session in progress")
    if not check_freshness(m4.t4, now, user.delta_t):
        raise Reject(FRESHNESS, "L5", f"t4={m4.t4} now={now}")
    _note(log, "L5:freshness")

    rn3 = xor_mask(m4.rn3_masked, h([sess.rn1, sess.target_sid]))
    h_psid_rn2 = xor_mask(m4.d7, h([sess.rn1, sess.tmid_i]))
    if not _eq(m4.d8, h([h_psid_rn2, rn3, m4.t4])):
        raise Reject(AUTH, "L5", "D8 mismatch")
    _note(log, "L5:d8")
    sk = h([h_psid_rn2, sess.rn1, rn3, sess.tmid_i])
    if not _eq(m4.d6, h([sk, h_psid_rn2, sess.rn1])):
        raise Reject(AUTH, "L5", "D6 mismatch")
    _note(log, "L5:d6")

    user.session = None
    user.session_key = sk
    return sk


ALL_CHECKS = (
    "L1:auth_i",
    "L2:freshness", "L2:d2",
    "L3:freshness", "L3:d4",
    "L4:freshness", "L4:d5",
    "L5:freshness", "L5:d8", "L5:d6",
)
