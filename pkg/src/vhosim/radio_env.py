"""Planar radio environment: access network geometry, RSS, coverage and user motion.

Every point of attachment sits at a fixed 2-D position and radiates with a
log-distance path loss profile inside a circular coverage area.  Received
signal strength for a mobile user at distance d from the transmitter is

    rss = tx_power - ref_loss - 10 * n * log10(d / ref_distance)

with n the path loss exponent and d clamped to ref_distance from below, so
the near field never produces values above the reference level.  Outside the
coverage radius the signal is treated as absent rather than merely weak.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .decision import PolicyRule

Point = tuple[float, float]

RAT_KINDS = ("GSM", "UMTS", "WiFi", "WiMAX", "LTE")

MOBILITY_MODELS = ("stationary", "linear", "random-waypoint")


@dataclass(frozen=True)
class PreferenceWeights:
    """User preference weights for rate and cost, each in [0, 1]."""

    weight_rate: float = 0.5
    weight_cost: float = 0.5


@dataclass(frozen=True)
class Attachment:
    """Current point of attachment of a mobile user."""

    rat_id: str
    care_of_address: str


@dataclass
class RatDescriptor:
    """A radio access network: one point of attachment plus its service terms.

    `capacity` and `load` are in abstract bandwidth units; `load` includes
    every admitted reservation.  `policy` holds the operator's admission
    rules, evaluated when a session asks to be served here.
    """

    id: str
    kind: str
    poa_position: Point
    coverage_radius: float
    tx_power: float
    pathloss_exponent: float
    ref_distance: float
    ref_loss: float
    capacity: float
    load: float
    cost: float
    data_rate: float
    operator_id: str
    policy: list["PolicyRule"] = field(default_factory=list)
    capabilities: frozenset[str] = frozenset()


@dataclass
class MobileUser:
    """A terminal moving through the plane, attached to at most one network."""

    id: str
    position: Point
    velocity: Point = (0.0, 0.0)
    mobility_model: str = "stationary"
    preferences: PreferenceWeights = PreferenceWeights()
    home_operator_id: str = ""
    attachment: Attachment | None = None
    # random-waypoint state; unused for the other models
    waypoint: Point | None = None
    rwp_bounds: tuple[float, float, float, float] | None = None
    rwp_speed: float = 0.0


@dataclass(frozen=True)
class RssReading:
    """One signal strength sample for one network, in dBm."""

    rat_id: str
    value: float
    time: float


def rss_at(rat: RatDescriptor, position: Point, noise_db: float = 0.0) -> float | None:
    """Signal strength of `rat` at `position`, or None outside coverage.

    The coverage disk is closed: a point exactly on the boundary is covered.
    `noise_db` is an optional additive offset for fading experiments; it
    defaults to zero and nothing in the simulator sets it.
    """
    d = math.dist(position, rat.poa_position)
    if d > rat.coverage_radius:
        return None
    d = max(d, rat.ref_distance)
    loss = 10.0 * rat.pathloss_exponent * math.log10(d / rat.ref_distance)
    return rat.tx_power - rat.ref_loss - loss + noise_db


def visible_rats(position: Point, rats: list[RatDescriptor]) -> list[RatDescriptor]:
    """Networks whose coverage disk contains `position`, in ascending id order."""
    return sorted((r for r in rats if rss_at(r, position) is not None), key=lambda r: r.id)


def step_mobility(mu: MobileUser, dt: float, rng: random.Random) -> MobileUser:
    """Advance `mu` by `dt` seconds and return the moved copy.

    stationary       position unchanged
    linear           position += velocity * dt
    random-waypoint  walk toward the current waypoint at rwp_speed, drawing a
                     fresh uniform waypoint from `rng` on arrival

    The input is not mutated.  Trajectories are reproducible: the same
    start state, dt sequence and generator seed replay exactly.
    """
    if mu.mobility_model == "stationary":
        return replace(mu)
    if mu.mobility_model == "linear":
        x, y = mu.position
        vx, vy = mu.velocity
        return replace(mu, position=(x + vx * dt, y + vy * dt))
    if mu.mobility_model != "random-waypoint":
        raise ValueError(f"unknown mobility model: {mu.mobility_model!r}")
    if mu.rwp_bounds is None or mu.rwp_speed <= 0:
        return replace(mu)

    x0, y0, x1, y1 = mu.rwp_bounds
    pos = mu.position
    waypoint = mu.waypoint
    remaining = dt
    for _ in range(64):  # hop bound; desk-scale speeds never get near it
        if remaining <= 0:
            break
        if waypoint is None:
            waypoint = (rng.uniform(x0, x1), rng.uniform(y0, y1))
        dist = math.dist(pos, waypoint)
        reach = mu.rwp_speed * remaining
        if reach < dist:
            f = reach / dist
            pos = (pos[0] + (waypoint[0] - pos[0]) * f, pos[1] + (waypoint[1] - pos[1]) * f)
            break
        # land on the waypoint, spend the travel time, draw the next target
        remaining -= dist / mu.rwp_speed
        pos = waypoint
        waypoint = None
    return replace(mu, position=pos, waypoint=waypoint)
