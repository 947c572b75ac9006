"""Seeded simulation worlds and the canned scenarios.

A :class:`World` holds one RC, its registered users and edge servers, a
simulated millisecond clock and a tap on the public channel. Registration
runs over the secure channel and is never recorded in the transcript.

Ground truth is read from honest party state after honest steps return; the
adversary module is only imported by the attack scenarios.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional

from .crypto import DEFAULT_DELTA_T_MS, Rng, UsageError, pad_identity
from .messages import MessageM1, MessageM2, MessageM3, MessageM4, ProtocolMessage
from .protocol import (
    ALL_CHECKS,
    AUTH,
    FRESHNESS,
    EdgeServer,
    MobileUser,
    RegistrationCenter,
    Reject,
    enroll_user,
    rc_handle_m1,
    rc_handle_m3,
    register_server,
    server_handle_m2,
    user_begin_session,
    user_handle_m4,
)
from .transcript import EavesdropView, TranscriptEntry

HOP_MS = 10
START_CLOCK_MS = 1_000_000

SCENARIOS = (
    "honest",
    "key-computation",
    "impersonation",
    "traceability",
    "curious-rc",
    "replay-control",
    "tamper-control",
)
_NEGATIVE_CONTROL_OK = {"key-computation", "impersonation", "curious-rc",
                        "replay-control", "tamper-control"}

Tamper = Callable[[ProtocolMessage], ProtocolMessage]


class SessionAborted(Exception):
    def __init__(self, label: str, reject: Reject):
        self.label = label
        self.reject = reject
        super().__init__(f"session {label} aborted: {reject}")


@dataclass
class SessionOutcome:
    label: str
    sk_user: bytes
    sk_server: bytes
    entries: List[TranscriptEntry]
    checks: List[str]


@dataclass
class World:
    rc: RegistrationCenter
    users: List[MobileUser]
    servers: List[EdgeServer]
    rng: Rng
    clock: int = START_CLOCK_MS
    hop_ms: int = HOP_MS
    clock_skew: int = 0
    transcript: EavesdropView = field(default_factory=EavesdropView)
    ground_truth: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    _flows: int = 0

    @classmethod
    def build(cls, seed: int, n_users: int = 2, n_servers: int = 2,
              delta_t: int = DEFAULT_DELTA_T_MS, clock_skew: int = 0) -> "World":
        rng = Rng(seed)
        rc = RegistrationCenter.create(rng, delta_t=delta_t)
        users = []
        for i in range(n_users):
            pw = rng.bytes(16).hex().encode()
            bio = rng.bytes(64)
            users.append(enroll_user(rc, f"user-{i:03d}", pw, bio, rng))
        servers = [register_server(rc, pad_identity(f"edge-{j:03d}"), rng)
                   for j in range(n_servers)]
        return cls(rc=rc, users=users, servers=servers, rng=rng, clock_skew=clock_skew)

    @property
    def delta_t(self) -> int:
        return self.rc.delta_t

    def new_flow(self) -> str:
        label = f"s{self._flows:04d}"
        self._flows += 1
        return label

    def advance(self, ms: int) -> None:
        self.clock += ms

    def deliver(self, flow: str, src: str, dst: str, msg: ProtocolMessage,
                tamper: Optional[Tamper] = None) -> tuple:
        """Put ``msg`` on the public channel; return (message as received, receiver's clock)."""
        if tamper is not None:
            msg = tamper(msg)
        self.transcript.record(flow, src, dst, msg)
        self.clock += self.hop_ms
        return msg, self.clock + self.clock_skew


def run_honest_session(world: World, user_index: int, server_index: int,
                       tamper: Optional[Tamper] = None) -> SessionOutcome:
    """Drive L1..L5 between one user and one server through the RC.

    Raises :class:`SessionAborted` if any verifier rejects.
    """
    user = world.users[user_index]
    server = world.servers[server_index]
    rc = world.rc
    flow = world.new_flow()
    start = len(world.transcript)
    checks: List[str] = []
    handle = None
    try:
        m1 = user_begin_session(user, user.pw, user.bio, server.sid, world.clock, world.rng, checks)
        tmid_i, rn1 = user.session.tmid_i, user.session.rn1
        m1, now = world.deliver(flow, "user", "rc", m1, tamper)
        m2, handle = rc_handle_m1(rc, m1, now, world.rng, checks)
        m2, now = world.deliver(flow, "rc", "server", m2, tamper)
        m3, sk_server = server_handle_m2(server, m2, now, world.rng, checks)
        m3, now = world.deliver(flow, "server", "rc", m3, tamper)
        m4 = rc_handle_m3(rc, handle, m3, now, checks)
        m4, now = world.deliver(flow, "rc", "user", m4, tamper)
        sk_user = user_handle_m4(user, m4, now, checks)
    except Reject as r:
        if handle is not None:
            rc.pending_sessions.pop(handle, None)
        user.session = None
        raise SessionAborted(flow, r) from r

    srv = server.session
    world.ground_truth[flow] = {
        "user": user_index, "server": server_index, "sid": server.sid,
        "tmid": tmid_i, "rn1": rn1, "rn2": rc.completed_sessions[handle].rn2,
        "rn3": srv.rn3, "h_psid_rn2": srv.h_psid_rn2, "sk": sk_user,
        "rc_handle": handle,
    }
    world.advance(world.hop_ms)
    return SessionOutcome(flow, sk_user, sk_server, world.transcript.entries[start:], checks)


# --- scenarios -------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    seed: int = 0
    n_sessions: int = 10
    k_gap: int = 1
    delta_t: int = DEFAULT_DELTA_T_MS
    clock_skew: int = 0
    n_users: int = 2
    negative_control: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise UsageError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.n_sessions < 1:
            raise UsageError("n_sessions must be >= 1")
        if self.k_gap < 1:
            raise UsageError("k_gap must be >= 1")
        if self.delta_t <= 0:
            raise UsageError("delta_t must be positive")
        if self.n_users < 1 or (self.scenario == "traceability" and self.n_users < 2):
            raise UsageError("traceability needs at least 2 users")
        if self.negative_control and self.scenario not in _NEGATIVE_CONTROL_OK:
            raise UsageError(f"scenario {self.scenario!r} has no negative-control mode")


@dataclass
class ControlOutcome:
    control: str
    target: str
    rejected: bool
    reason: Optional[str] = None
    step: Optional[str] = None

    def to_dict(self) -> dict:
        return {"kind": "control", **asdict(self)}


@dataclass
class RunReport:
    config: ScenarioConfig
    verdict: bool
    metrics: Dict[str, Any]
    attack_reports: list
    controls: List[ControlOutcome]
    ground_truth: Dict[str, Dict[str, Any]]
    transcript: EavesdropView
    aborted: List[str] = field(default_factory=list)

    @property
    def expected(self) -> bool:
        # attacks are expected to succeed and controls to reject, unless the
        # run is a negative control
        return not self.config.negative_control

    @property
    def ok(self) -> bool:
        return self.verdict == self.expected

    def records(self, include_transcript: bool = False) -> List[dict]:
        out: List[dict] = [{
            "kind": "run", "scenario": self.config.scenario, "config": asdict(self.config),
            "verdict": self.verdict, "expected": self.expected, "ok": self.ok,
            "metrics": self.metrics, "aborted": self.aborted,
        }]
        for label, gt in self.ground_truth.items():
            out.append({"kind": "session", "flow": label,
                        **{k: (v.hex() if isinstance(v, bytes) else v) for k, v in gt.items()}})
        out.extend(r.to_dict() for r in self.attack_reports)
        out.extend(c.to_dict() for c in self.controls)
        if include_transcript:
            out.extend(e.to_dict() for e in self.transcript)
        return out

    def to_jsonl(self, include_transcript: bool = False) -> str:
        return "".join(json.dumps(r, separators=(",", ":")) + "\n"
                       for r in self.records(include_transcript))


def _report(cfg: ScenarioConfig, world: World, verdict: bool, metrics: dict,
            attacks=(), controls=(), aborted=()) -> RunReport:
    return RunReport(config=cfg, verdict=verdict, metrics=metrics,
                     attack_reports=list(attacks), controls=list(controls),
                     ground_truth=world.ground_truth, transcript=world.transcript,
                     aborted=list(aborted))


def _world(cfg: ScenarioConfig, n_users: int, n_servers: int) -> World:
    return World.build(cfg.seed, n_users=n_users, n_servers=n_servers,
                       delta_t=cfg.delta_t, clock_skew=cfg.clock_skew)


def _honest(cfg: ScenarioConfig) -> RunReport:
    world = _world(cfg, cfg.n_users, 2)
    agreed, aborted = 0, []
    for i in range(cfg.n_sessions):
        try:
            out = run_honest_session(world, i % cfg.n_users,
                                     world.rng.randrange(len(world.servers)))
        except SessionAborted as e:
            aborted.append(f"{e.label}:{e.reject.step}:{e.reject.reason}")
            continue
        if out.sk_user == out.sk_server and set(out.checks) == set(ALL_CHECKS):
            agreed += 1
    return _report(cfg, world, agreed == cfg.n_sessions,
                   {"sessions": cfg.n_sessions, "agreed": agreed}, aborted=aborted)


def _victim_memory(cfg: ScenarioConfig, world: World, adv) -> tuple:
    """Session n: the victim (user 0) talks to the malicious server (index 0)."""
    first = run_honest_session(world, 0, 0)
    mem = adv.MaliciousServerMemory.after_session(world.servers[0])
    if cfg.negative_control:
        mem = adv.MaliciousServerMemory(base=world.servers[0], retained_tmid=world.rng.bytes(32))
    return first, mem


def _key_computation(cfg: ScenarioConfig) -> RunReport:
    from . import adversary as adv

    # user 0 victim, user 1 unrelated; server 0 malicious, 1 target, 2 other
    world = _world(cfg, 2, 3)
    _, mem = _victim_memory(cfg, world, adv)
    reports = []
    for _ in range(cfg.n_sessions):
        for _ in range(cfg.k_gap):
            run_honest_session(world, 1, world.rng.randrange(3))
        target = run_honest_session(world, 0, 1)
        m1 = world.transcript.find(target.label, MessageM1)
        m4 = world.transcript.find(target.label, MessageM4)
        gt = world.ground_truth[target.label]
        reports.append(adv.kc_attack(mem, m1, m4, truth=gt))
    ok = sum(r.success for r in reports)
    return _report(cfg, world, ok == len(reports),
                   {"trials": len(reports), "keys_recovered": ok}, attacks=reports)


def _impersonation(cfg: ScenarioConfig) -> RunReport:
    from . import adversary as adv

    world = _world(cfg, 1, 2)
    first, mem = _victim_memory(cfg, world, adv)
    # B_i is read off the victim's earlier request on the public channel
    b_i = world.transcript.find(first.label, MessageM1).b_i
    target = world.servers[1]
    reports, accepted = [], 0
    for _ in range(cfg.n_sessions):
        flow = world.new_flow()
        forged = adv.impersonate_user(mem, b_i, target.sid, world.clock, world.rng)
        forged, now = world.deliver(flow, "user", "rc", forged)
        try:
            m2, handle = rc_handle_m1(world.rc, forged, now, world.rng)
        except Reject as r:
            reports.append(adv.AttackReport.judge(
                adv.IMPERSONATION, {}, None, notes=[f"rc rejected forged M1: {r.reason}"]))
            world.advance(world.hop_ms)
            continue
        accepted += 1
        m2, now = world.deliver(flow, "rc", "server", m2)
        m3, sk_server = server_handle_m2(target, m2, now, world.rng)
        m3, now = world.deliver(flow, "server", "rc", m3)
        m4 = rc_handle_m3(world.rc, handle, m3, now)
        m4, now = world.deliver(flow, "rc", "user", m4)
        srv = target.session
        truth = {"sid": target.sid, "rn1": srv.rn1, "h_psid_rn2": srv.h_psid_rn2,
                 "rn3": srv.rn3, "sk": sk_server}
        kc = adv.kc_attack(mem, forged, m4, truth=truth)
        kc.attack = adv.IMPERSONATION
        kc.notes = ["rc accepted forged M1 and emitted M2",
                    "extension: forged session driven to completion, attacker derives SK"]
        reports.append(kc)
        world.advance(world.hop_ms)
    return _report(cfg, world, accepted == cfg.n_sessions,
                   {"trials": cfg.n_sessions, "rc_accepted": accepted,
                    "keys_matched": sum(r.success for r in reports)},
                   attacks=reports)


def pairwise_precision_recall(groups: List[List[str]], labels: Dict[str, Any]) -> tuple:
    """Pairwise clustering precision and recall of ``groups`` (flow ids) against ``labels``."""
    flows = [f for g in groups for f in g]
    group_of = {f: gi for gi, g in enumerate(groups) for f in g}
    tp = fp = fn = 0
    for i, a in enumerate(flows):
        for b in flows[i + 1:]:
            same_pred = group_of[a] == group_of[b]
            same_true = labels[a] == labels[b]
            tp += same_pred and same_true
            fp += same_pred and not same_true
            fn += same_true and not same_pred
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return precision, recall


def _non_bi_fields_distinct(m1s: List[MessageM1]) -> bool:
    for name in ("rn1_masked", "d1", "d2", "ts_u"):
        values = [getattr(m, name) for m in m1s]
        if len(set(values)) != len(values):
            return False
    return True


def _traceability(cfg: ScenarioConfig) -> RunReport:
    from . import adversary as adv

    world = _world(cfg, cfg.n_users, 2)
    order = [u for u in range(cfg.n_users) for _ in range(cfg.n_sessions)]
    world.rng.shuffle(order)
    for u in order:
        run_honest_session(world, u, world.rng.randrange(2))

    groups = adv.link_sessions(world.transcript)
    flow_groups = [[e.flow for e in g] for g in groups]
    labels = {f: gt["user"] for f, gt in world.ground_truth.items()}
    precision, recall = pairwise_precision_recall(flow_groups, labels)

    recovered, comparison = {}, {}
    for gi, g in enumerate(groups):
        key = f"group-{gi}"
        recovered[key] = g[0].message.b_i.hex()
        users = {labels[e.flow] for e in g}
        truth_flows = {f for f, u in labels.items() if users == {u}}
        comparison[key] = len(users) == 1 and truth_flows == set(flow_groups[gi])

    distinct = all(_non_bi_fields_distinct([e.message for e in g]) for g in groups)
    success = (precision == 1.0 and recall == 1.0 and len(groups) == cfg.n_users
               and all(comparison.values()))
    report = adv.AttackReport(
        attack=adv.TRACEABILITY, success=success, recovered=recovered, comparison=comparison,
        notes=[f"{len(groups)} groups from {sum(map(len, groups))} requests",
               f"non-B_i fields pairwise distinct within groups: {distinct}"])
    return _report(cfg, world, success,
                   {"precision": precision, "recall": recall, "groups": len(groups),
                    "users": cfg.n_users, "non_bi_fields_distinct": distinct},
                   attacks=[report])


def _curious_rc(cfg: ScenarioConfig) -> RunReport:
    from . import adversary as adv

    world = _world(cfg, cfg.n_users, 2)
    reports = []
    for i in range(cfg.n_sessions):
        out = run_honest_session(world, i % cfg.n_users, world.rng.randrange(2))
        handle = world.ground_truth[out.label]["rc_handle"]
        record = world.rc.completed_sessions[handle]
        if cfg.negative_control:
            record.rn2 = world.rng.bytes(32)
        sk_rc = adv.curious_rc_compute_sk(record, record.rn3)
        world.rc.retire(handle)
        truth = {"sk": out.sk_user} if out.sk_user == out.sk_server else None
        reports.append(adv.AttackReport.judge(adv.CURIOUS_RC, {"sk": sk_rc}, truth))
    ok = sum(r.success for r in reports)
    return _report(cfg, world, ok == len(reports),
                   {"trials": len(reports), "keys_derived": ok}, attacks=reports)


def _replay_control(cfg: ScenarioConfig) -> RunReport:
    world = _world(cfg, cfg.n_users, 2)
    controls = []
    for i in range(cfg.n_sessions):
        out = run_honest_session(world, i % cfg.n_users, world.rng.randrange(2))
        m1 = world.transcript.find(out.label, MessageM1)
        if not cfg.negative_control:
            world.clock = m1.ts_u + world.delta_t + 1
        flow = world.new_flow()
        replayed, now = world.deliver(flow, "user", "rc", m1)
        try:
            _, handle = rc_handle_m1(world.rc, replayed, now, world.rng)
        except Reject as r:
            controls.append(ControlOutcome("replay", "M1.ts_u", True, r.reason, r.step))
        else:
            world.rc.pending_sessions.pop(handle, None)
            controls.append(ControlOutcome("replay", "M1.ts_u", False))
        world.advance(world.hop_ms)
    rejected = sum(c.rejected and c.reason == FRESHNESS for c in controls)
    return _report(cfg, world, rejected == len(controls),
                   {"trials": len(controls), "rejected_freshness": rejected}, controls=controls)


# protected field -> (message type, step whose verifier must reject)
TAMPER_TARGETS = {
    "d2": (MessageM1, "L2"),
    "d4": (MessageM2, "L3"),
    "d5": (MessageM3, "L4"),
    "d8": (MessageM4, "L5"),
    "d6": (MessageM4, "L5"),
}


def flip_bit(value: bytes, bit: int) -> bytes:
    b = bytearray(value)
    b[bit // 8] ^= 1 << (bit % 8)
    return bytes(b)


def _tamper_control(cfg: ScenarioConfig) -> RunReport:
    world = _world(cfg, cfg.n_users, 2)
    controls = []
    for fname, (mtype, step) in TAMPER_TARGETS.items():
        for i in range(cfg.n_sessions):
            bit = world.rng.randrange(256)

            def tamper(msg, fname=fname, mtype=mtype, bit=bit):
                if cfg.negative_control or not isinstance(msg, mtype):
                    return msg
                return msg.replace_field(fname, flip_bit(getattr(msg, fname), bit))

            try:
                run_honest_session(world, i % cfg.n_users, world.rng.randrange(2), tamper)
            except SessionAborted as e:
                controls.append(ControlOutcome(
                    "tamper", f"{mtype.tag}.{fname}", True, e.reject.reason, e.reject.step))
            else:
                controls.append(ControlOutcome("tamper", f"{mtype.tag}.{fname}", False))
            world.advance(world.hop_ms)
    expected_step = {f"{m.tag}.{f}": s for f, (m, s) in TAMPER_TARGETS.items()}
    good = sum(c.rejected and c.reason == AUTH and c.step == expected_step[c.target]
               for c in controls)
    per_field = {t: sum(c.rejected for c in controls if c.target == t) for t in expected_step}
    return _report(cfg, world, good == len(controls),
                   {"trials": len(controls), "rejected_at_expected_verifier": good,
                    "rejected_per_field": per_field}, controls=controls)


_RUNNERS = {
    "honest": _honest,
    "key-computation": _key_computation,
    "impersonation": _impersonation,
    "traceability": _traceability,
    "curious-rc": _curious_rc,
    "replay-control": _replay_control,
    "tamper-control": _tamper_control,
}


def run_scenario(config: ScenarioConfig) -> RunReport:
    """Run one scenario in a fresh world seeded by ``config.seed``.

    An honest-step rejection inside an attack scenario (e.g. from injected
    clock skew) ends the run with a failed verdict rather than an exception.
    """
    try:
        return _RUNNERS[config.scenario](config)
    except SessionAborted as e:
        return RunReport(config=config, verdict=False, metrics={}, attack_reports=[],
                         controls=[], ground_truth={}, transcript=EavesdropView(),
                         aborted=[f"{e.label}:{e.reject.step}:{e.reject.reason}"])
