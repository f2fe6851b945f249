"""Handover decision: session classes, priority queueing, admission and policy.

A handover session is created from one of three triggers and classified by
urgency.  Imperative sessions (signal-driven) outrank the two alternative
classes (preference-driven, user-driven) in the service queue.  The decision
walks the session's priority list: each candidate must pass the admission
check of its point of service, which reserves capacity immediately, and then
the operator policy check, which releases the reservation again on failure.
The first candidate passing both wins; a session whose list is exhausted is
rejected with no residual reservation anywhere.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .errors import EmptyCandidateSet, IllegalState
from .mih import LinkEventKind, MihCommand, MihEvent, RatInfoRecord
from .radio_env import MobileUser, PreferenceWeights, RatDescriptor


class SessionClass(Enum):
    AIVHO = "AIVHO"  # imperative: the serving link is about to break
    AAVHO = "AAVHO"  # alternative: preferences changed
    MAVHO = "MAVHO"  # alternative: explicit user selection


class SessionState(Enum):
    QUEUED = "Queued"
    ADMISSION_CHECK = "AdmissionCheck"
    POLICY_CHECK = "PolicyCheck"
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"
    EXECUTING = "Executing"
    COMPLETE = "Complete"


# legal state-machine edges; EXECUTING -> REJECTED covers the address-pool
# failure late in execution, which aborts the session and rolls back its
# reservation
_TRANSITIONS: dict[SessionState, frozenset[SessionState]] = {
    SessionState.QUEUED: frozenset({SessionState.ADMISSION_CHECK}),
    SessionState.ADMISSION_CHECK: frozenset({SessionState.POLICY_CHECK, SessionState.REJECTED}),
    SessionState.POLICY_CHECK: frozenset({SessionState.ADMISSION_CHECK, SessionState.ACCEPTED}),
    SessionState.ACCEPTED: frozenset({SessionState.EXECUTING}),
    SessionState.EXECUTING: frozenset({SessionState.COMPLETE, SessionState.REJECTED}),
    SessionState.REJECTED: frozenset(),
    SessionState.COMPLETE: frozenset(),
}

IMPERATIVE_CLASSES = frozenset({SessionClass.AIVHO})


@dataclass(frozen=True)
class PolicyRule:
    """One operator admission rule.

    A rule permits a user when the home operator is explicitly allowed, or
    roaming is granted for it, and the requested demand meets the minimum.
    """

    allowed_operator_ids: frozenset[str] = frozenset()
    min_demand: float = 0.0
    roaming_allowed: Mapping[str, bool] = field(default_factory=dict)

    def permits(self, home_operator_id: str, demand: float) -> bool:
        if demand < self.min_demand:
            return False
        if home_operator_id in self.allowed_operator_ids:
            return True
        return bool(self.roaming_allowed.get(home_operator_id, False))


@dataclass(frozen=True)
class PreferenceChange:
    """Trigger: the user re-weighted rate against cost."""

    mu_id: str
    weights: PreferenceWeights
    time: float


@dataclass(frozen=True)
class ManualSelection:
    """Trigger: the user picked a specific target network."""

    mu_id: str
    rat_id: str
    time: float


@dataclass
class HandoverSession:
    id: str
    mu_id: str
    session_class: SessionClass
    arrival_time: float
    demand: float
    priority_list: list[str] = field(default_factory=list)
    cursor: int = 0
    state: SessionState = SessionState.QUEUED
    manual_choice: str | None = None
    decision_time: float | None = None
    completion_time: float | None = None
    command_log: list[MihCommand] = field(default_factory=list)


def transition(session: HandoverSession, new_state: SessionState) -> None:
    """Move the session state along a legal edge, or raise IllegalState."""
    if new_state not in _TRANSITIONS[session.state]:
        raise IllegalState(
            f"session {session.id}: {session.state.value} -> {new_state.value} not allowed"
        )
    session.state = new_state


def classify_trigger(trigger: MihEvent | PreferenceChange | ManualSelection) -> SessionClass:
    """Map a trigger to its session class."""
    if isinstance(trigger, MihEvent):
        if trigger.kind is not LinkEventKind.LINK_GOING_DOWN:
            raise ValueError(f"{trigger.kind.value} does not start a handover session")
        return SessionClass.AIVHO
    if isinstance(trigger, PreferenceChange):
        return SessionClass.AAVHO
    if isinstance(trigger, ManualSelection):
        return SessionClass.MAVHO
    raise TypeError(f"not a handover trigger: {trigger!r}")


def build_priority_list(
    session_class: SessionClass,
    candidates: Sequence[RatInfoRecord],
    rss_map: Mapping[str, float] | None = None,
    preferences: PreferenceWeights | None = None,
    manual_choice: str | None = None,
) -> list[str]:
    """Order the candidate networks for one session.

    AIVHO  by descending signal strength, ties by ascending id; every
           candidate needs an entry in rss_map
    AAVHO  by descending preference score
               s = w_rate * rate / max(rate) - w_cost * cost / max(cost)
           with a normalisation term dropped when its maximum is zero
    MAVHO  exactly the user's choice, no fallback

    Candidates are expected to exclude the currently serving network.
    """
    if session_class is SessionClass.MAVHO:
        if manual_choice is None:
            raise ValueError("MAVHO needs a manual choice")
        return [manual_choice]
    if not candidates:
        raise EmptyCandidateSet(session_class.value)
    if session_class is SessionClass.AIVHO:
        if rss_map is None:
            raise ValueError("AIVHO ordering needs an rss map")
        missing = [c.rat_id for c in candidates if c.rat_id not in rss_map]
        if missing:
            raise ValueError(f"no rss sample for candidates: {missing}")
        ranked = sorted(candidates, key=lambda c: (-rss_map[c.rat_id], c.rat_id))
        return [c.rat_id for c in ranked]
    if session_class is SessionClass.AAVHO:
        prefs = preferences if preferences is not None else PreferenceWeights()
        max_rate = max(c.data_rate for c in candidates)
        max_cost = max(c.cost for c in candidates)

        def score(c: RatInfoRecord) -> float:
            rate_term = (c.data_rate / max_rate) if max_rate > 0 else 0.0
            cost_term = (c.cost / max_cost) if max_cost > 0 else 0.0
            return prefs.weight_rate * rate_term - prefs.weight_cost * cost_term

        ranked = sorted(candidates, key=lambda c: (-score(c), c.rat_id))
        return [c.rat_id for c in ranked]
    raise ValueError(f"unknown session class: {session_class!r}")


_CLASS_RANK = {SessionClass.AIVHO: 0, SessionClass.AAVHO: 1, SessionClass.MAVHO: 1}


class SessionQueue:
    """Pending sessions, imperative class first, FIFO inside each class.

    Ordering key is (class rank, arrival time, session id); the id breaks
    arrival-time ties deterministically.
    """

    def __init__(self) -> None:
        self._entries: list[tuple[tuple[int, float, str], HandoverSession]] = []

    def enqueue(self, session: HandoverSession) -> None:
        if session.state is not SessionState.QUEUED:
            raise IllegalState(f"session {session.id} is {session.state.value}, not queued")
        key = (_CLASS_RANK[session.session_class], session.arrival_time, session.id)
        bisect.insort(self._entries, (key, session))

    def next_session(self) -> HandoverSession | None:
        if not self._entries:
            return None
        return self._entries.pop(0)[1]

    def has_imperative(self) -> bool:
        return bool(self._entries) and self._entries[0][0][0] == 0

    @property
    def pending(self) -> list[str]:
        return [s.id for _, s in self._entries]

    def __len__(self) -> int:
        return len(self._entries)


def admission_check(rat: RatDescriptor, demand: float) -> bool:
    """Capacity test at the point of service; acceptance reserves immediately."""
    if rat.load + demand <= rat.capacity:
        rat.load += demand
        return True
    return False


def policy_check(rat: RatDescriptor, mu: MobileUser, demand: float) -> bool:
    """Operator rules for a reservation just made; failure releases it.

    An empty rule set is permissive.  With rules present, any one passing
    rule admits the user.
    """
    if not rat.policy or any(rule.permits(mu.home_operator_id, demand) for rule in rat.policy):
        return True
    rat.load -= demand
    return False


@dataclass(frozen=True)
class Decision:
    accepted: bool
    target: str | None
    reason: str | None
    # (rat_id, "no_resources" | "policy_fail" | "accepted") per attempt, in order
    attempts: tuple[tuple[str, str], ...] = ()


def decide(
    session: HandoverSession,
    rats: Mapping[str, RatDescriptor],
    mu: MobileUser,
) -> Decision:
    """Run the admission/policy loop over the session's priority list.

    The cursor walks the list once.  A candidate failing admission leaves no
    trace; a candidate failing policy has its reservation taken and released
    again.  MAVHO sessions have a single-entry list, so a failed manual
    selection is rejected outright.  On acceptance exactly one reservation,
    on the accepted target, remains.
    """
    if session.state is not SessionState.ADMISSION_CHECK:
        raise IllegalState(f"decide() needs AdmissionCheck, session is {session.state.value}")
    attempts: list[tuple[str, str]] = []
    while session.cursor < len(session.priority_list):
        rat_id = session.priority_list[session.cursor]
        rat = rats[rat_id]
        if not admission_check(rat, session.demand):
            attempts.append((rat_id, "no_resources"))
            session.cursor += 1
            continue
        transition(session, SessionState.POLICY_CHECK)
        if policy_check(rat, mu, session.demand):
            attempts.append((rat_id, "accepted"))
            transition(session, SessionState.ACCEPTED)
            return Decision(True, rat_id, None, tuple(attempts))
        attempts.append((rat_id, "policy_fail"))
        transition(session, SessionState.ADMISSION_CHECK)
        session.cursor += 1
    transition(session, SessionState.REJECTED)
    return Decision(False, None, "no_resources", tuple(attempts))
