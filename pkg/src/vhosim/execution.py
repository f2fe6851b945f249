"""Handover execution: home-agent buffering, address allocation, binding, flush.

The execution sequence for an accepted session is

    begin buffering (home agent first, then source notification)
    -> authentication with the target point of attachment
    -> care-of address from the target's DHCP pool
    -> binding update, acknowledged; the user attaches to the target here
    -> buffered packets flushed in FIFO order, then source resources released

While buffering is active the home agent forwards packets down the old path
for as long as that link is usable and retains them in the session buffer
once it is not, so a user whose old link survives until the binding ack
keeps receiving without interruption and a user whose link dies mid-sequence
gets the outage window replayed from the buffer.  Flushed packets leave at
the binding ack, spaced 1/flush_rate apart, and post-binding traffic queues
behind the drain so sequence order is preserved.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .decision import HandoverSession, SessionState, transition
from .errors import IllegalState, NoAddressAvailable
from .radio_env import Attachment, MobileUser, RatDescriptor

if TYPE_CHECKING:
    from .engine import Packet


@dataclass(frozen=True)
class CareOfAddress:
    value: str
    allocated_at: float


@dataclass(frozen=True)
class ExecutionTimings:
    """Step delays in seconds; flush_rate in packets per second."""

    auth_delay: float = 0.05
    dhcp_delay: float = 0.02
    binding_rtt: float = 0.03
    flush_rate: float = 1000.0
    release_delay: float = 0.0


@dataclass
class CoaPool:
    """Address pool of one target network; the lowest free index is handed out."""

    rat_id: str
    size: int
    _free: list[int] = field(init=False, repr=False)
    _live: dict[str, int] = field(init=False, repr=False, default_factory=dict)
    _owner: dict[str, str] = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        self._free = list(range(self.size))

    @property
    def live_addresses(self) -> set[str]:
        return set(self._live)


def allocate_coa(pool: CoaPool, session_id: str, now: float) -> CareOfAddress:
    """Take the lowest-indexed free address, or raise NoAddressAvailable."""
    if not pool._free:
        raise NoAddressAvailable(pool.rat_id)
    idx = heapq.heappop(pool._free)
    value = f"coa:{pool.rat_id}:{idx}"
    pool._live[value] = idx
    pool._owner[value] = session_id
    return CareOfAddress(value=value, allocated_at=now)


def release_coa(pool: CoaPool, value: str) -> None:
    if value not in pool._live:
        raise IllegalState(f"{value} is not a live address of {pool.rat_id}")
    idx = pool._live.pop(value)
    pool._owner.pop(value, None)
    heapq.heappush(pool._free, idx)


def coa_live(pool: CoaPool, value: str) -> bool:
    return value in pool._live


@dataclass
class HomeAgentState:
    """Per-session buffers and per-user bindings held at the home agent."""

    buffers: dict[str, list["Packet"]] = field(default_factory=dict)
    buffering_active: dict[str, bool] = field(default_factory=dict)
    bindings: dict[str, CareOfAddress] = field(default_factory=dict)
    _mu_session: dict[str, str] = field(default_factory=dict)

    def session_for(self, mu_id: str) -> str | None:
        return self._mu_session.get(mu_id)

    def is_buffering(self, mu_id: str) -> bool:
        sid = self._mu_session.get(mu_id)
        return bool(sid) and self.buffering_active.get(sid, False)


def begin_buffering(ha: HomeAgentState, session: HandoverSession) -> None:
    """Arm the session buffer; starting twice is an error."""
    if ha.buffering_active.get(session.id):
        raise IllegalState(f"buffering already active for session {session.id}")
    ha.buffering_active[session.id] = True
    ha.buffers.setdefault(session.id, [])
    ha._mu_session[session.mu_id] = session.id


def buffer_packet(ha: HomeAgentState, session_id: str, packet: "Packet") -> None:
    if not ha.buffering_active.get(session_id):
        raise IllegalState(f"session {session_id} is not buffering")
    ha.buffers[session_id].append(packet)


def binding_update(ha: HomeAgentState, mu_id: str, coa: CareOfAddress, pool: CoaPool) -> int:
    """Install the new binding and stop buffering; returns the buffer length.

    Requires an actively buffering session for the user and a live care-of
    address, otherwise IllegalState.
    """
    session_id = ha._mu_session.get(mu_id)
    if session_id is None or not ha.buffering_active.get(session_id):
        raise IllegalState(f"no active buffering for {mu_id}")
    if not coa_live(pool, coa.value):
        raise IllegalState(f"stale care-of address {coa.value}")
    ha.bindings[mu_id] = coa
    ha.buffering_active[session_id] = False
    return len(ha.buffers[session_id])


def drain_buffer(ha: HomeAgentState, session_id: str) -> list["Packet"]:
    """Remove and return the buffered packets in arrival order."""
    packets = ha.buffers.get(session_id, [])
    ha.buffers[session_id] = []
    return packets


def plan_flush(n_packets: int, flush_rate: float, bind_time: float) -> tuple[list[float], float]:
    """Delivery instants for a drain starting at the binding ack.

    Packet i leaves at bind_time + i/flush_rate; the drain occupies the
    channel for n/flush_rate seconds, so an n-packet buffer finishes
    n/flush_rate after the ack and an empty buffer finishes immediately.
    """
    per = 1.0 / flush_rate
    return [bind_time + i * per for i in range(n_packets)], bind_time + n_packets * per


def release_source(
    session: HandoverSession,
    source_rat: RatDescriptor | None,
    source_pool: CoaPool | None,
    old_coa_value: str | None,
    release_time: float,
) -> None:
    """Final step: give back source capacity and address, complete the session."""
    if source_rat is not None:
        source_rat.load -= session.demand
    if source_pool is not None and old_coa_value is not None:
        release_coa(source_pool, old_coa_value)
    transition(session, SessionState.COMPLETE)
    session.completion_time = release_time


@dataclass(frozen=True)
class ReleaseRecord:
    flush_times: tuple[float, ...]
    drain_end: float
    release_time: float


def flush_and_release(
    ha: HomeAgentState,
    session: HandoverSession,
    timings: ExecutionTimings,
    bind_time: float,
    source_rat: RatDescriptor | None = None,
    source_pool: CoaPool | None = None,
    old_coa_value: str | None = None,
) -> ReleaseRecord:
    """Drain the session buffer and release the source network."""
    packets = drain_buffer(ha, session.id)
    flush_times, drain_end = plan_flush(len(packets), timings.flush_rate, bind_time)
    release_time = drain_end + timings.release_delay
    release_source(session, source_rat, source_pool, old_coa_value, release_time)
    return ReleaseRecord(tuple(flush_times), drain_end, release_time)


@dataclass(frozen=True)
class HandoverRecord:
    """Timestamps of one executed handover, all in seconds."""

    session_id: str
    begin: float
    source_notified_at: float
    auth_done: float
    coa_allocated: float
    binding_ack: float
    drain_end: float
    release_time: float
    coa_value: str
    flush_times: tuple[float, ...]


def execute_handover(
    session: HandoverSession,
    timings: ExecutionTimings,
    ha: HomeAgentState,
    target_pool: CoaPool,
    clock: float,
    target_rat: RatDescriptor,
    mu: MobileUser | None = None,
    source_rat: RatDescriptor | None = None,
    source_pool: CoaPool | None = None,
    old_coa_value: str | None = None,
) -> HandoverRecord:
    """Run the full execution sequence for an accepted session.

    Advances a local clock through the step delays.  An exhausted address
    pool aborts the session: the target reservation is rolled back, the
    session moves to Rejected, and NoAddressAvailable propagates.
    """
    transition(session, SessionState.EXECUTING)
    t0 = clock
    begin_buffering(ha, session)
    t_auth = t0 + timings.auth_delay
    t_coa = t_auth + timings.dhcp_delay
    try:
        coa = allocate_coa(target_pool, session.id, t_coa)
    except NoAddressAvailable:
        target_rat.load -= session.demand
        ha.buffering_active[session.id] = False
        transition(session, SessionState.REJECTED)
        raise
    t_bind = t_coa + timings.binding_rtt
    binding_update(ha, session.mu_id, coa, target_pool)
    if mu is not None:
        mu.attachment = Attachment(rat_id=target_rat.id, care_of_address=coa.value)
    record = flush_and_release(
        ha, session, timings, t_bind,
        source_rat=source_rat, source_pool=source_pool, old_coa_value=old_coa_value,
    )
    return HandoverRecord(
        session_id=session.id,
        begin=t0,
        source_notified_at=t0,
        auth_done=t_auth,
        coa_allocated=t_coa,
        binding_ack=t_bind,
        drain_end=record.drain_end,
        release_time=record.release_time,
        coa_value=coa.value,
        flush_times=record.flush_times,
    )
