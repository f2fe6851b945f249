"""Media-independent handover services: link events, network info, commands.

Link events are derived from consecutive RSS samples of one (user, network)
pair against three thresholds with t_down < t_going_down <= t_up.  The raw
crossing detector is stateless; `LinkMonitor` layers a per-link up/down state
on top of it so that LinkDown and LinkUp strictly alternate over a trajectory
no matter how the signal oscillates around the thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .errors import UnknownSession
from .radio_env import MobileUser, RatDescriptor, RssReading, visible_rats


class LinkEventKind(Enum):
    LINK_UP = "LinkUp"
    LINK_DOWN = "LinkDown"
    LINK_GOING_DOWN = "LinkGoingDown"
    LINK_HANDOVER_IMMINENT = "LinkHandoverImminent"
    LINK_HANDOVER_COMPLETE = "LinkHandoverComplete"


class CommandKind(Enum):
    HANDOVER_INITIATE = "HandoverInitiate"
    HANDOVER_PREPARE = "HandoverPrepare"
    HANDOVER_COMMIT = "HandoverCommit"
    HANDOVER_COMPLETE = "HandoverComplete"


@dataclass(frozen=True)
class MihEvent:
    kind: LinkEventKind
    rat_id: str
    mu_id: str
    time: float


@dataclass(frozen=True)
class MihCommand:
    kind: CommandKind
    session_id: str
    target_rat_id: str | None = None


@dataclass(frozen=True)
class MicsAck:
    session_id: str
    kind: CommandKind


@dataclass(frozen=True)
class RatInfoRecord:
    """Snapshot of one reachable network, as served by the information service."""

    rat_id: str
    kind: str
    location: tuple[float, float]
    cost: float
    data_rate: float
    operator_id: str
    capabilities: frozenset[str]


@dataclass(frozen=True)
class LinkThresholds:
    """Trigger levels in dBm.  Requires t_down < t_going_down <= t_up, hysteresis >= 0."""

    t_down: float
    t_going_down: float
    t_up: float
    hysteresis: float = 0.0


def detect_link_events(
    prev: RssReading | None,
    curr: RssReading | None,
    thresholds: LinkThresholds,
    mu_id: str,
    now: float,
) -> list[MihEvent]:
    """Raw threshold crossings between two consecutive samples of one link.

    A downward crossing of level L means prev above L and curr at or below
    it; upward is the mirror image.  LinkUp additionally fires when coverage
    is first acquired (prev absent, curr present), LinkDown when coverage is
    lost.  At most one event of each kind is returned, down-class events
    (LinkGoingDown, LinkDown) ahead of LinkUp.
    """
    events: list[MihEvent] = []
    rat_id = curr.rat_id if curr is not None else (prev.rat_id if prev is not None else "")

    def emit(kind: LinkEventKind) -> None:
        events.append(MihEvent(kind=kind, rat_id=rat_id, mu_id=mu_id, time=now))

    if prev is not None and curr is not None:
        tgd = thresholds.t_going_down
        if prev.value > tgd >= curr.value:
            emit(LinkEventKind.LINK_GOING_DOWN)
        td = thresholds.t_down
        if prev.value > td >= curr.value:
            emit(LinkEventKind.LINK_DOWN)
        up_level = thresholds.t_up + thresholds.hysteresis
        if prev.value <= up_level < curr.value:
            emit(LinkEventKind.LINK_UP)
    elif prev is not None and curr is None:
        emit(LinkEventKind.LINK_DOWN)
    elif prev is None and curr is not None:
        emit(LinkEventKind.LINK_UP)
    return events


@dataclass
class LinkMonitor:
    """Per-(user, network) event source with alternation enforcement.

    Feeds samples through `detect_link_events` and filters the result against
    the remembered link state: down-class events pass only while the link is
    up, LinkUp only while it is down.  A second LinkDown therefore always has
    an intervening LinkUp.
    """

    mu_id: str
    rat_id: str
    thresholds: LinkThresholds
    prev: RssReading | None = None
    link_up: bool = False
    _last_time: float = field(default=float("-inf"), repr=False)

    def observe(self, reading: RssReading | None, now: float) -> list[MihEvent]:
        if now < self._last_time:
            raise ValueError(f"samples out of order for ({self.mu_id}, {self.rat_id})")
        self._last_time = now
        raw = detect_link_events(self.prev, reading, self.thresholds, self.mu_id, now)
        self.prev = reading
        out: list[MihEvent] = []
        for ev in raw:
            if ev.kind is LinkEventKind.LINK_UP:
                if not self.link_up:
                    self.link_up = True
                    out.append(ev)
            elif ev.kind is LinkEventKind.LINK_DOWN:
                if self.link_up:
                    self.link_up = False
                    out.append(ev)
            elif ev.kind is LinkEventKind.LINK_GOING_DOWN:
                if self.link_up:
                    out.append(ev)
            else:
                out.append(ev)
        return out


def miis_query(mu: MobileUser, rats: list[RatDescriptor]) -> list[RatInfoRecord]:
    """Information-service answer: one record per network covering `mu`'s position.

    Records mirror the descriptor fields at query time; ordering follows
    `visible_rats` (ascending id).
    """
    return [
        RatInfoRecord(
            rat_id=r.id,
            kind=r.kind,
            location=r.poa_position,
            cost=r.cost,
            data_rate=r.data_rate,
            operator_id=r.operator_id,
            capabilities=r.capabilities,
        )
        for r in visible_rats(mu.position, rats)
    ]


def mics_dispatch(command: MihCommand, session_table: Mapping[str, object]) -> MicsAck:
    """Deliver a command to its session, appending it to the session command log."""
    session = session_table.get(command.session_id)
    if session is None:
        raise UnknownSession(command.session_id)
    session.command_log.append(command)
    return MicsAck(session_id=command.session_id, kind=command.kind)
