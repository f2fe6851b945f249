"""Deterministic discrete-event engine tying radio, decision and execution together.

One run owns a single logical clock with integer microsecond resolution; all
trace output and metrics are reported in seconds.  Events are dispatched in
(time, sequence) order, where the sequence number records scheduling order,
so two events at the same instant fire in the order they were scheduled and
every run over the same (scenario, mode, seed) replays identically, byte for
byte.  Scheduling into the past is an error.

Per tick the engine first moves every user, then scans every (user, network)
link through its monitor.  A LinkGoingDown on the serving link raises an
imperative handover session; scripted stimuli raise the alternative classes.
Sessions wait in a priority queue and are serviced one at a time; while an
imperative session is being worked on, from dequeue until its execution
finishes, nothing else is dequeued.  Alternative sessions do not block the
queue.

Two modes share every other rule.  In `iam4vho` the home agent buffers for
the executing user: packets ride the old path while that link is up, are
retained while it is down, and the retained tail is flushed at the binding
ack ahead of any newer traffic.  In `baseline` the user simply detaches at
execution start and every packet until the binding ack is lost.

Traffic is constant bit rate (the arrival generator is the plug-in point for
other processes).  Loss, per-handover latency (longest reception gap in the
delivered-packet timeline overlapping the handover interval), rejection
counts and queue waits are computed from the trace alone.
"""

from __future__ import annotations

import copy
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any

from . import execution as ex
from .decision import (
    IMPERATIVE_CLASSES,
    Decision,
    HandoverSession,
    ManualSelection,
    PreferenceChange,
    SessionClass,
    SessionQueue,
    SessionState,
    classify_trigger,
    decide,
    transition,
)
from .errors import EmptyCandidateSet, InvalidSchedule, NoAddressAvailable
from .mih import (
    CommandKind,
    LinkEventKind,
    LinkMonitor,
    MihCommand,
    MihEvent,
    mics_dispatch,
    miis_query,
)
from .radio_env import Attachment, PreferenceWeights, RssReading, rss_at, step_mobility
from .scenario import Scenario, StimulusSpec

MODES = ("iam4vho", "baseline")

US = 1_000_000


@dataclass
class Packet:
    """One correspondent-node packet addressed to a mobile user."""

    seq_no: int
    mu_id: str
    created_at: float
    delivered_at: float | None = None
    path: str | None = None  # old | buffered | new
    status: str = "in_flight"  # in_flight | delivered | dropped


@dataclass(frozen=True)
class SimEvent:
    time_us: int
    seq: int
    kind: str
    payload: Any = None


class EventScheduler:
    """Min-heap of events ordered by (time, scheduling sequence)."""

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, SimEvent]] = []
        self._seq = 0
        self.clock_us = 0

    def schedule(self, time_us: int, kind: str, payload: Any = None) -> SimEvent:
        if time_us < self.clock_us:
            raise InvalidSchedule(f"cannot schedule {kind} at {time_us} before {self.clock_us}")
        event = SimEvent(time_us=time_us, seq=self._seq, kind=kind, payload=payload)
        self._seq += 1
        heapq.heappush(self._heap, (time_us, event.seq, event))
        return event

    def run_until(self, t_end_us: int, dispatch) -> None:
        while self._heap and self._heap[0][0] <= t_end_us:
            _, _, event = heapq.heappop(self._heap)
            self.clock_us = event.time_us
            dispatch(event)
        self.clock_us = max(self.clock_us, t_end_us)


def generate_traffic(
    mu_id: str, rate_pps: float, t0_us: int, t1_us: int, start_seq: int = 0
) -> list[tuple[int, int]]:
    """Constant-bit-rate arrivals: (time_us, seq_no) at t0 + k/rate, strictly below t1."""
    arrivals: list[tuple[int, int]] = []
    k = 0
    while True:
        t = t0_us + round(k * US / rate_pps)
        if t >= t1_us:
            break
        arrivals.append((t, start_seq + k))
        k += 1
    return arrivals


@dataclass
class _ExecState:
    session: HandoverSession
    target_rat_id: str
    source_rat_id: str | None
    old_coa_value: str | None
    t0_us: int
    new_coa: ex.CareOfAddress | None = None
    bound: bool = False


class Simulator:
    """One simulation run over a scenario; see the module docstring for the rules."""

    def __init__(
        self,
        scenario: Scenario,
        mode: str,
        seed: int,
        list_limit: int | None = None,
    ) -> None:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.scenario = scenario
        self.mode = mode
        self.seed = seed
        self.list_limit = list_limit

        self.rat_order = [r.id for r in scenario.rats]
        self.rats = {r.id: copy.deepcopy(r) for r in scenario.rats}
        self.mu_order = [m.id for m in scenario.mus]
        self.mus = {m.id: copy.deepcopy(m) for m in scenario.mus}

        self.pools = {
            rid: ex.CoaPool(rat_id=rid, size=scenario.coa_pool_sizes[rid])
            for rid in self.rat_order
        }
        self.ha = ex.HomeAgentState()
        self.queue = SessionQueue()
        self.sessions: dict[str, HandoverSession] = {}
        self.monitors = {
            (m, r): LinkMonitor(mu_id=m, rat_id=r, thresholds=scenario.thresholds[self.rats[r].kind])
            for m in self.mu_order
            for r in self.rat_order
        }

        self.trace: list[dict] = []
        self._sched = EventScheduler()
        self._rng_mobility = random.Random(f"{seed}:mobility")
        self._rng_setup = random.Random(f"{seed}:setup")

        self._imperative_busy: str | None = None
        self._active_session: dict[str, str] = {}
        self._execs: dict[str, _ExecState] = {}
        self._mu_exec: dict[str, str] = {}
        self._mu_coa: dict[str, ex.CareOfAddress] = {}
        self._rebound: set[str] = set()
        self._not_before_us: dict[str, int] = {}
        self._drain_backlog: dict[str, int] = {}
        self._session_counter = 0
        self._generated = 0
        self._delivered = 0
        self._dropped = 0
        self._last_mob_us = 0

        t = scenario.timings
        self._auth_us = round(t.auth_delay * US)
        self._dhcp_us = round(t.dhcp_delay * US)
        self._bind_us = round(t.binding_rtt * US)
        self._flush_per_us = round(US / t.flush_rate)
        self._release_us = round(t.release_delay * US)
        self._duration_us = round(scenario.duration_s * US)

    # -- trace helpers ---------------------------------------------------

    def _rec(self, t_us: int, kind: str, **fields) -> None:
        self.trace.append({"t": t_us / US, "kind": kind, **fields})

    def _trace_mih_event(self, event: MihEvent, rss: float | None = None) -> None:
        rec = {
            "t": event.time,
            "kind": "link_event",
            "event": event.kind.value,
            "mu": event.mu_id,
            "rat": event.rat_id,
        }
        if rss is not None:
            rec["rss_dbm"] = rss
        self.trace.append(rec)

    def _command(self, t_us: int, kind: CommandKind, session_id: str, target: str | None) -> None:
        cmd = MihCommand(kind=kind, session_id=session_id, target_rat_id=target)
        mics_dispatch(cmd, self.sessions)
        self._rec(t_us, "mih_command", command=kind.value, session=session_id, target=target)

    # -- setup -----------------------------------------------------------

    def _setup(self) -> None:
        sc = self.scenario
        # seed-dependent, mode-independent jitters so paired runs stay aligned
        for mu_id in self.mu_order:
            j = sc.mu_position_jitter.get(mu_id, 0.0)
            dx = self._rng_setup.uniform(-j, j)
            dy = self._rng_setup.uniform(-j, j)
            mu = self.mus[mu_id]
            mu.position = (mu.position[0] + dx, mu.position[1] + dy)
        phase: list[int] = []
        for spec in sc.traffic:
            pj = spec.phase_jitter_s
            phase.append(round(self._rng_setup.uniform(-pj, pj) * US))

        traffic_windows: dict[str, list[float]] = {}
        self._rec(
            0,
            "run_info",
            mode=self.mode,
            seed=self.seed,
            duration_s=sc.duration_s,
            scan_period_s=sc.scan_period_s,
            traffic=traffic_windows,
        )

        for mu_id in self.mu_order:
            mu = self.mus[mu_id]
            if mu.attachment is None:
                continue
            rat = self.rats[mu.attachment.rat_id]
            rat.load += sc.mu_demand[mu_id]
            coa = ex.allocate_coa(self.pools[rat.id], f"attach:{mu_id}", 0.0)
            mu.attachment = Attachment(rat_id=rat.id, care_of_address=coa.value)
            self._mu_coa[mu_id] = coa
            self._rec(0, "attach", mu=mu_id, rat=rat.id, coa=coa.value)

        scan_us = round(sc.scan_period_s * US)
        t = 0
        while t <= self._duration_us:
            self._sched.schedule(t, "mobility_step")
            self._sched.schedule(t, "link_event_scan")
            t += scan_us

        seq_start: dict[str, int] = {}
        for spec, jitter in zip(sc.traffic, phase):
            t0 = round(spec.start_s * US) + jitter
            t1 = round(spec.end_s * US)
            start = seq_start.get(spec.mu_id, 0)
            arrivals = generate_traffic(spec.mu_id, spec.rate_pps, max(t0, 0), t1, start)
            for t_us, seq_no in arrivals:
                self._sched.schedule(t_us, "packet_arrival", (spec.mu_id, seq_no))
            seq_start[spec.mu_id] = start + len(arrivals)
            w = traffic_windows.setdefault(spec.mu_id, [max(t0, 0) / US, t1 / US])
            w[0] = min(w[0], max(t0, 0) / US)
            w[1] = max(w[1], t1 / US)

        for spec in sc.stimuli:
            self._sched.schedule(round(spec.time_s * US), "session_arrival", spec)

        self._sched.schedule(self._duration_us, "metric_snapshot")

    # -- event handlers --------------------------------------------------

    def _dispatch(self, event: SimEvent) -> None:
        handler = getattr(self, f"_on_{event.kind}")
        handler(event.time_us, event.payload)

    def _on_mobility_step(self, t_us: int, _payload: Any) -> None:
        dt = (t_us - self._last_mob_us) / US
        self._last_mob_us = t_us
        if dt > 0:
            for mu_id in self.mu_order:
                self.mus[mu_id] = step_mobility(self.mus[mu_id], dt, self._rng_mobility)
        self._rec(
            t_us,
            "mobility_step",
            positions={m: [self.mus[m].position[0], self.mus[m].position[1]] for m in self.mu_order},
        )

    def _on_link_event_scan(self, t_us: int, _payload: Any) -> None:
        t_s = t_us / US
        self._rec(t_us, "link_event_scan")
        for mu_id in self.mu_order:
            mu = self.mus[mu_id]
            for rat_id in self.rat_order:
                value = rss_at(self.rats[rat_id], mu.position)
                reading = None if value is None else RssReading(rat_id=rat_id, value=value, time=t_s)
                for event in self.monitors[(mu_id, rat_id)].observe(reading, t_s):
                    self._trace_mih_event(event, rss=value)
                    self._react(event, t_us)

    def _react(self, event: MihEvent, t_us: int) -> None:
        if event.kind is not LinkEventKind.LINK_GOING_DOWN:
            return
        mu = self.mus[event.mu_id]
        if mu.attachment is None or mu.attachment.rat_id != event.rat_id:
            return  # only the serving link raises an imperative handover
        if self._active_session.get(event.mu_id) is not None:
            return
        self._create_session(event.mu_id, classify_trigger(event), t_us)

    def _on_session_arrival(self, t_us: int, spec: StimulusSpec) -> None:
        t_s = t_us / US
        mu = self.mus[spec.mu_id]
        busy = self._active_session.get(spec.mu_id) is not None
        self._rec(
            t_us, "session_arrival", stimulus=spec.kind, mu=spec.mu_id, suppressed=busy
        )
        if spec.kind == "preference_change":
            weights = PreferenceWeights(spec.weight_rate, spec.weight_cost)
            mu.preferences = weights
            trigger = PreferenceChange(mu_id=spec.mu_id, weights=weights, time=t_s)
            if not busy:
                self._create_session(spec.mu_id, classify_trigger(trigger), t_us)
        elif spec.kind == "manual_selection":
            trigger = ManualSelection(mu_id=spec.mu_id, rat_id=spec.rat_id, time=t_s)
            if not busy:
                self._create_session(
                    spec.mu_id, classify_trigger(trigger), t_us, manual_choice=spec.rat_id
                )

    def _create_session(
        self, mu_id: str, session_class: SessionClass, t_us: int, manual_choice: str | None = None
    ) -> None:
        sid = f"s{self._session_counter:03d}"
        self._session_counter += 1
        session = HandoverSession(
            id=sid,
            mu_id=mu_id,
            session_class=session_class,
            arrival_time=t_us / US,
            demand=self.scenario.mu_demand[mu_id],
            manual_choice=manual_choice,
        )
        self.sessions[sid] = session
        self._active_session[mu_id] = sid
        self._rec(
            t_us,
            "session_created",
            session=sid,
            mu=mu_id,
            session_class=session_class.value,
            demand=session.demand,
            state=SessionState.QUEUED.value,
        )
        self.queue.enqueue(session)
        self._try_service(t_us)

    # -- queue service ---------------------------------------------------

    def _try_service(self, t_us: int) -> None:
        # nothing is dequeued while an imperative session is under process
        while self._imperative_busy is None:
            session = self.queue.next_session()
            if session is None:
                return
            t_s = t_us / US
            self._rec(
                t_us,
                "session_dequeued",
                session=session.id,
                session_class=session.session_class.value,
                wait_s=t_s - session.arrival_time,
            )
            transition(session, SessionState.ADMISSION_CHECK)
            self._rec(t_us, "session_state", session=session.id, state=session.state.value)
            if session.session_class in IMPERATIVE_CLASSES:
                self._imperative_busy = session.id
            accepted = self._decide_session(session, t_us)
            if not accepted and self._imperative_busy == session.id:
                self._imperative_busy = None

    def _decide_session(self, session: HandoverSession, t_us: int) -> bool:
        from .decision import build_priority_list

        t_s = t_us / US
        mu = self.mus[session.mu_id]
        serving = mu.attachment.rat_id if mu.attachment else None
        try:
            if session.session_class is SessionClass.MAVHO:
                session.priority_list = build_priority_list(
                    SessionClass.MAVHO, [], manual_choice=session.manual_choice
                )
            else:
                records = miis_query(mu, [self.rats[r] for r in self.rat_order])
                candidates = [r for r in records if r.rat_id != serving]
                if session.session_class is SessionClass.AIVHO:
                    rss_map = {
                        c.rat_id: rss_at(self.rats[c.rat_id], mu.position) for c in candidates
                    }
                    session.priority_list = build_priority_list(
                        SessionClass.AIVHO, candidates, rss_map=rss_map
                    )
                else:
                    session.priority_list = build_priority_list(
                        SessionClass.AAVHO, candidates, preferences=mu.preferences
                    )
        except EmptyCandidateSet:
            transition(session, SessionState.REJECTED)
            session.decision_time = t_s
            self._rec(
                t_us,
                "session_state",
                session=session.id,
                state=session.state.value,
                reason="no_candidates",
            )
            self._active_session.pop(session.mu_id, None)
            return False
        if self.list_limit is not None:
            session.priority_list = session.priority_list[: self.list_limit]
        self._rec(t_us, "priority_list", session=session.id, rats=list(session.priority_list))
        self._command(t_us, CommandKind.HANDOVER_INITIATE, session.id, None)

        decision = decide(session, self.rats, mu)
        session.decision_time = t_s
        for rat_id, outcome in decision.attempts:
            self._rec(t_us, "decision_attempt", session=session.id, rat=rat_id, outcome=outcome)
        if decision.accepted:
            self._rec(
                t_us,
                "session_state",
                session=session.id,
                state=session.state.value,
                target=decision.target,
            )
            self._command(t_us, CommandKind.HANDOVER_PREPARE, session.id, decision.target)
            self._sched.schedule(t_us, "exec_step", (session.id, "begin", None))
            return True
        self._rec(
            t_us,
            "session_state",
            session=session.id,
            state=session.state.value,
            reason=decision.reason,
        )
        self._active_session.pop(session.mu_id, None)
        return False

    def _finish_session(self, session: HandoverSession, t_us: int) -> None:
        self._active_session.pop(session.mu_id, None)
        self._mu_exec.pop(session.mu_id, None)
        self._execs.pop(session.id, None)
        if self._imperative_busy == session.id:
            self._imperative_busy = None
        self._try_service(t_us)

    # -- execution -------------------------------------------------------

    def _on_exec_step(self, t_us: int, payload: tuple) -> None:
        sid, step, extra = payload
        if step == "flush_delivery":
            self._deliver(extra, t_us, "buffered")
            return
        if step == "queued_delivery":
            self._drain_backlog[extra.mu_id] -= 1
            self._deliver(extra, t_us, "new")
            return
        session = self.sessions[sid]
        getattr(self, f"_exec_{step}")(session, t_us)

    def _exec_begin(self, session: HandoverSession, t_us: int) -> None:
        mu = self.mus[session.mu_id]
        target = session.priority_list[session.cursor]
        state = _ExecState(
            session=session,
            target_rat_id=target,
            source_rat_id=mu.attachment.rat_id if mu.attachment else None,
            old_coa_value=mu.attachment.care_of_address if mu.attachment else None,
            t0_us=t_us,
        )
        self._execs[session.id] = state
        self._mu_exec[session.mu_id] = session.id
        transition(session, SessionState.EXECUTING)
        self._rec(t_us, "session_state", session=session.id, state=session.state.value)
        buffering = self.mode == "iam4vho"
        if buffering:
            ex.begin_buffering(self.ha, session)
        # home agent is told first, the serving point of service right after
        self._rec(t_us, "exec_step", session=session.id, step="begin", buffering=buffering)
        self._rec(t_us, "exec_step", session=session.id, step="source_notified",
                  rat=state.source_rat_id)
        self._trace_mih_event(
            MihEvent(LinkEventKind.LINK_HANDOVER_IMMINENT, target, session.mu_id, t_us / US)
        )
        self._sched.schedule(t_us + self._auth_us, "exec_step", (session.id, "auth_done", None))

    def _exec_auth_done(self, session: HandoverSession, t_us: int) -> None:
        self._rec(t_us, "exec_step", session=session.id, step="auth_done")
        self._sched.schedule(t_us + self._dhcp_us, "exec_step", (session.id, "allocate_coa", None))

    def _exec_allocate_coa(self, session: HandoverSession, t_us: int) -> None:
        state = self._execs[session.id]
        try:
            coa = ex.allocate_coa(self.pools[state.target_rat_id], session.id, t_us / US)
        except NoAddressAvailable:
            self._abort_exec(session, state, t_us)
            return
        state.new_coa = coa
        self._rec(t_us, "exec_step", session=session.id, step="allocate_coa", coa=coa.value)
        self._sched.schedule(t_us + self._bind_us, "exec_step", (session.id, "binding_ack", None))

    def _abort_exec(self, session: HandoverSession, state: _ExecState, t_us: int) -> None:
        """Address pool exhausted: roll back the reservation, reject the session."""
        self.rats[state.target_rat_id].load -= session.demand
        if self.mode == "iam4vho":
            self.ha.buffering_active[session.id] = False
            stranded = ex.drain_buffer(self.ha, session.id)
            old_up = (
                state.source_rat_id is not None
                and self.monitors[(session.mu_id, state.source_rat_id)].link_up
            )
            for pkt in stranded:
                if old_up:
                    self._deliver(pkt, t_us, "old")
                else:
                    self._drop(pkt, t_us, "handover_abort")
        transition(session, SessionState.REJECTED)
        self._rec(
            t_us,
            "session_state",
            session=session.id,
            state=session.state.value,
            reason="no_address",
        )
        self._finish_session(session, t_us)

    def _exec_binding_ack(self, session: HandoverSession, t_us: int) -> None:
        state = self._execs[session.id]
        mu = self.mus[session.mu_id]
        pool = self.pools[state.target_rat_id]
        buffered = 0
        drain_end_us = t_us
        if self.mode == "iam4vho":
            buffered = ex.binding_update(self.ha, session.mu_id, state.new_coa, pool)
            packets = ex.drain_buffer(self.ha, session.id)
            for i, pkt in enumerate(packets):
                self._sched.schedule(
                    t_us + i * self._flush_per_us,
                    "exec_step",
                    (session.id, "flush_delivery", pkt),
                )
            drain_end_us = t_us + len(packets) * self._flush_per_us
        mu.attachment = Attachment(rat_id=state.target_rat_id, care_of_address=state.new_coa.value)
        self._mu_coa[session.mu_id] = state.new_coa
        self._rebound.add(session.mu_id)
        self._not_before_us[session.mu_id] = drain_end_us
        state.bound = True
        self._rec(
            t_us,
            "exec_step",
            session=session.id,
            step="binding_ack",
            coa=state.new_coa.value,
            buffered=buffered,
        )
        self._command(t_us, CommandKind.HANDOVER_COMMIT, session.id, state.target_rat_id)
        self._sched.schedule(
            drain_end_us + self._release_us, "exec_step", (session.id, "release", None)
        )

    def _exec_release(self, session: HandoverSession, t_us: int) -> None:
        state = self._execs[session.id]
        source_rat = self.rats[state.source_rat_id] if state.source_rat_id else None
        source_pool = self.pools[state.source_rat_id] if state.source_rat_id else None
        ex.release_source(session, source_rat, source_pool, state.old_coa_value, t_us / US)
        self._rec(t_us, "exec_step", session=session.id, step="release_done",
                  source=state.source_rat_id)
        self._rec(t_us, "session_state", session=session.id, state=session.state.value)
        self._trace_mih_event(
            MihEvent(
                LinkEventKind.LINK_HANDOVER_COMPLETE, state.target_rat_id, session.mu_id, t_us / US
            )
        )
        self._command(t_us, CommandKind.HANDOVER_COMPLETE, session.id, state.target_rat_id)
        self._finish_session(session, t_us)

    # -- traffic ----------------------------------------------------------

    def _on_packet_arrival(self, t_us: int, payload: tuple[str, int]) -> None:
        mu_id, seq_no = payload
        pkt = Packet(seq_no=seq_no, mu_id=mu_id, created_at=t_us / US)
        self._generated += 1
        self._rec(t_us, "packet_generated", mu=mu_id, seq_no=seq_no)
        self._route(pkt, t_us)

    def _route(self, pkt: Packet, t_us: int) -> None:
        mu = self.mus[pkt.mu_id]
        sid = self._mu_exec.get(pkt.mu_id)
        state = self._execs.get(sid) if sid else None
        if state is not None and not state.bound:
            if self.mode == "baseline":
                self._drop(pkt, t_us, "handover_blackout")
            elif (
                state.source_rat_id is not None
                and self.monitors[(pkt.mu_id, state.source_rat_id)].link_up
            ):
                self._deliver(pkt, t_us, "old")
            else:
                ex.buffer_packet(self.ha, sid, pkt)
                self._rec(t_us, "packet_buffered", mu=pkt.mu_id, seq_no=pkt.seq_no, session=sid)
            return
        if mu.attachment is None:
            self._drop(pkt, t_us, "not_attached")
            return
        if not self.monitors[(pkt.mu_id, mu.attachment.rat_id)].link_up:
            self._drop(pkt, t_us, "link_down")
            return
        not_before = self._not_before_us.get(pkt.mu_id, 0)
        backlog = self._drain_backlog.get(pkt.mu_id, 0)
        if t_us < not_before or (t_us == not_before and backlog > 0):
            # post-binding traffic queues behind the buffer drain, FIFO
            sid = self._mu_exec.get(pkt.mu_id, "")
            self._drain_backlog[pkt.mu_id] = backlog + 1
            self._sched.schedule(not_before, "exec_step", (sid, "queued_delivery", pkt))
            return
        path = "new" if pkt.mu_id in self._rebound else "old"
        self._deliver(pkt, t_us, path)

    def _deliver(self, pkt: Packet, t_us: int, path: str) -> None:
        pkt.delivered_at = t_us / US
        pkt.path = path
        pkt.status = "delivered"
        self._delivered += 1
        self._rec(t_us, "packet_delivered", mu=pkt.mu_id, seq_no=pkt.seq_no, path=path)

    def _drop(self, pkt: Packet, t_us: int, reason: str) -> None:
        pkt.status = "dropped"
        self._dropped += 1
        self._rec(t_us, "packet_dropped", mu=pkt.mu_id, seq_no=pkt.seq_no, reason=reason)

    # -- snapshot and run --------------------------------------------------

    def _on_metric_snapshot(self, t_us: int, _payload: Any) -> None:
        self._rec(
            t_us,
            "metric_snapshot",
            generated=self._generated,
            delivered=self._delivered,
            dropped=self._dropped,
            final_loads={r: self.rats[r].load for r in self.rat_order},
            sessions={sid: s.state.value for sid, s in self.sessions.items()},
        )

    def run(self) -> list[dict]:
        self._setup()
        self._sched.run_until(self._duration_us, self._dispatch)
        return self.trace


# -- metrics ---------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    """Per-run statistics, all derived from the event trace."""

    mode: str
    seed: int
    duration_s: float
    packets_generated: int
    packets_delivered: int
    packets_dropped: int
    packets_in_flight: int
    loss_ratio: float
    handover_latencies_s: tuple[float, ...]
    mean_latency_s: float | None
    max_latency_s: float | None
    sessions_total: int
    sessions_rejected: int
    rejection_probability: float
    mean_wait_imperative_s: float | None
    mean_wait_alternative_s: float | None


def collect_metrics(trace: list[dict]) -> MetricsReport:
    """Compute the report for one finished run.

    Latency is measured per completed handover as the longest gap between
    consecutive deliveries to that user whose span overlaps the handover
    interval (execution begin to source release).  The delivered timeline is
    padded with the user's first traffic instant and the run end so silence
    at either boundary still counts.
    """
    run_info: dict = {}
    generated = delivered = dropped = 0
    deliveries: dict[str, list[float]] = {}
    session_mu: dict[str, str] = {}
    session_class: dict[str, str] = {}
    rejected: set[str] = set()
    waits: dict[str, list[float]] = {"imperative": [], "alternative": []}
    begin_t: dict[str, float] = {}
    release_t: dict[str, float] = {}

    for rec in trace:
        kind = rec["kind"]
        if kind == "run_info":
            run_info = rec
        elif kind == "packet_generated":
            generated += 1
        elif kind == "packet_delivered":
            delivered += 1
            deliveries.setdefault(rec["mu"], []).append(rec["t"])
        elif kind == "packet_dropped":
            dropped += 1
        elif kind == "session_created":
            session_mu[rec["session"]] = rec["mu"]
            session_class[rec["session"]] = rec["session_class"]
        elif kind == "session_dequeued":
            cls = "imperative" if rec["session_class"] == "AIVHO" else "alternative"
            waits[cls].append(rec["wait_s"])
        elif kind == "session_state" and rec["state"] == "Rejected":
            rejected.add(rec["session"])
        elif kind == "exec_step":
            if rec["step"] == "begin":
                begin_t[rec["session"]] = rec["t"]
            elif rec["step"] == "release_done":
                release_t[rec["session"]] = rec["t"]

    duration = float(run_info.get("duration_s", 0.0))
    traffic = run_info.get("traffic", {})

    latencies: list[float] = []
    for sid in sorted(release_t):
        mu = session_mu[sid]
        a, b = begin_t[sid], release_t[sid]
        start = traffic.get(mu, [0.0, duration])[0]
        points = [start] + deliveries.get(mu, []) + [duration]
        worst = 0.0
        for p, q in zip(points, points[1:]):
            if p < b and q > a:
                worst = max(worst, q - p)
        latencies.append(worst)

    total = len(session_mu)
    mean = lambda xs: sum(xs) / len(xs) if xs else None  # noqa: E731

    return MetricsReport(
        mode=str(run_info.get("mode", "")),
        seed=int(run_info.get("seed", 0)),
        duration_s=duration,
        packets_generated=generated,
        packets_delivered=delivered,
        packets_dropped=dropped,
        packets_in_flight=generated - delivered - dropped,
        loss_ratio=(dropped / generated) if generated else 0.0,
        handover_latencies_s=tuple(latencies),
        mean_latency_s=mean(latencies),
        max_latency_s=max(latencies) if latencies else None,
        sessions_total=total,
        sessions_rejected=len(rejected),
        rejection_probability=(len(rejected) / total) if total else 0.0,
        mean_wait_imperative_s=mean(waits["imperative"]),
        mean_wait_alternative_s=mean(waits["alternative"]),
    )


def dump_trace(trace: list[dict]) -> str:
    """Line-delimited serialization, one event per line, stable field order."""
    return "".join(json.dumps(rec, separators=(",", ":")) + "\n" for rec in trace)


def run_scenario(
    scenario: Scenario, mode: str, seed: int, list_limit: int | None = None
) -> tuple[list[dict], MetricsReport]:
    """Simulate one (scenario, mode, seed) and return (trace, metrics)."""
    sim = Simulator(scenario, mode, seed, list_limit=list_limit)
    trace = sim.run()
    return trace, collect_metrics(trace)
