"""Scenario files: the JSON schema, its loader, and validation.

A scenario is a plain JSON object.  Field names carry their unit as a suffix
(`coverage_radius_m`, `rate_pps`, `t_down_dbm`) so a file never needs a
comment to be unambiguous.  `load_scenario` validates everything up front and
reports the first offence with its full path, e.g. `rats[1].coverage_radius_m:
must be > 0`, instead of failing mid-run.

Top-level keys::

    duration_s        run length, seconds
    scan_period_s     link-scan tick, seconds (default 0.1)
    timings           execution delays, see ExecutionTimings
    thresholds        per network kind: t_down_dbm, t_going_down_dbm,
                      t_up_dbm, hysteresis_db
    rats              list of points of attachment
    mus               list of mobile users
    traffic           constant-bit-rate flows toward users
    stimuli           scripted preference changes / manual selections
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .decision import PolicyRule
from .errors import ValidationError
from .execution import ExecutionTimings
from .mih import LinkThresholds
from .radio_env import (
    MOBILITY_MODELS,
    RAT_KINDS,
    Attachment,
    MobileUser,
    PreferenceWeights,
    RatDescriptor,
)


@dataclass(frozen=True)
class TrafficSpec:
    mu_id: str
    rate_pps: float
    start_s: float
    end_s: float
    phase_jitter_s: float = 0.0


@dataclass(frozen=True)
class StimulusSpec:
    time_s: float
    mu_id: str
    kind: str  # preference_change | manual_selection
    weight_rate: float = 0.5
    weight_cost: float = 0.5
    rat_id: str | None = None


@dataclass
class Scenario:
    duration_s: float
    scan_period_s: float
    timings: ExecutionTimings
    thresholds: dict[str, LinkThresholds]
    rats: list[RatDescriptor]
    mus: list[MobileUser]
    mu_demand: dict[str, float]
    mu_position_jitter: dict[str, float]
    coa_pool_sizes: dict[str, int]
    traffic: list[TrafficSpec] = field(default_factory=list)
    stimuli: list[StimulusSpec] = field(default_factory=list)


# -- low-level checks --------------------------------------------------------


def _fail(path: str, message: str):
    raise ValidationError(path, message)


def _get(data: dict, key: str, path: str, default=_fail):
    if key not in data:
        if default is _fail:
            _fail(f"{path}.{key}" if path else key, "required field is missing")
        return default
    return data[key]


def _num(value, path: str, minimum=None, exclusive_minimum=None, maximum=None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {type(value).__name__}")
    if not math.isfinite(value):
        _fail(path, "must be finite")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}")
    if exclusive_minimum is not None and value <= exclusive_minimum:
        _fail(path, f"must be > {exclusive_minimum}")
    if maximum is not None and value > maximum:
        _fail(path, f"must be <= {maximum}")
    return float(value)


def _int(value, path: str, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {type(value).__name__}")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}")
    return value


def _str(value, path: str, nonempty: bool = True) -> str:
    if not isinstance(value, str):
        _fail(path, f"expected a string, got {type(value).__name__}")
    if nonempty and not value:
        _fail(path, "must not be empty")
    return value


def _obj(value, path: str) -> dict:
    if not isinstance(value, dict):
        _fail(path, f"expected an object, got {type(value).__name__}")
    return value


def _arr(value, path: str) -> list:
    if not isinstance(value, list):
        _fail(path, f"expected an array, got {type(value).__name__}")
    return value


def _point(value, path: str) -> tuple[float, float]:
    arr = _arr(value, path)
    if len(arr) != 2:
        _fail(path, f"expected [x, y], got {len(arr)} elements")
    return (_num(arr[0], f"{path}[0]"), _num(arr[1], f"{path}[1]"))


# -- section parsers ----------------------------------------------------------


def _parse_timings(data: dict) -> ExecutionTimings:
    raw = _obj(_get(data, "timings", "", default={}), "timings")
    defaults = ExecutionTimings()
    return ExecutionTimings(
        auth_delay=_num(raw.get("auth_delay_s", defaults.auth_delay), "timings.auth_delay_s", minimum=0),
        dhcp_delay=_num(raw.get("dhcp_delay_s", defaults.dhcp_delay), "timings.dhcp_delay_s", minimum=0),
        binding_rtt=_num(raw.get("binding_rtt_s", defaults.binding_rtt), "timings.binding_rtt_s", minimum=0),
        flush_rate=_num(raw.get("flush_rate_pps", defaults.flush_rate), "timings.flush_rate_pps", exclusive_minimum=0),
        release_delay=_num(raw.get("release_delay_s", defaults.release_delay), "timings.release_delay_s", minimum=0),
    )


def _parse_thresholds(data: dict) -> dict[str, LinkThresholds]:
    raw = _obj(_get(data, "thresholds", ""), "thresholds")
    out: dict[str, LinkThresholds] = {}
    for kind, entry in raw.items():
        path = f"thresholds.{kind}"
        if kind not in RAT_KINDS:
            _fail(path, f"unknown network kind, expected one of {', '.join(RAT_KINDS)}")
        e = _obj(entry, path)
        t_down = _num(_get(e, "t_down_dbm", path), f"{path}.t_down_dbm")
        t_gd = _num(_get(e, "t_going_down_dbm", path), f"{path}.t_going_down_dbm")
        t_up = _num(_get(e, "t_up_dbm", path), f"{path}.t_up_dbm")
        hyst = _num(e.get("hysteresis_db", 0.0), f"{path}.hysteresis_db", minimum=0)
        if not (t_down < t_gd <= t_up):
            _fail(path, f"need t_down_dbm < t_going_down_dbm <= t_up_dbm, got {t_down}, {t_gd}, {t_up}")
        out[kind] = LinkThresholds(t_down=t_down, t_going_down=t_gd, t_up=t_up, hysteresis=hyst)
    return out


def _parse_policy(raw, path: str) -> list[PolicyRule]:
    rules: list[PolicyRule] = []
    for i, entry in enumerate(_arr(raw, path)):
        p = f"{path}[{i}]"
        e = _obj(entry, p)
        ops = frozenset(
            _str(op, f"{p}.allowed_operator_ids[{j}]")
            for j, op in enumerate(_arr(e.get("allowed_operator_ids", []), f"{p}.allowed_operator_ids"))
        )
        roaming_raw = _obj(e.get("roaming_allowed", {}), f"{p}.roaming_allowed")
        roaming = {}
        for op, flag in roaming_raw.items():
            if not isinstance(flag, bool):
                _fail(f"{p}.roaming_allowed.{op}", f"expected a boolean, got {type(flag).__name__}")
            roaming[op] = flag
        rules.append(
            PolicyRule(
                allowed_operator_ids=ops,
                min_demand=_num(e.get("min_demand_bw", 0.0), f"{p}.min_demand_bw", minimum=0),
                roaming_allowed=roaming,
            )
        )
    return rules


def _parse_rat(entry, path: str, thresholds: dict[str, LinkThresholds]) -> tuple[RatDescriptor, int]:
    e = _obj(entry, path)
    kind = _str(_get(e, "kind", path), f"{path}.kind")
    if kind not in RAT_KINDS:
        _fail(f"{path}.kind", f"unknown network kind, expected one of {', '.join(RAT_KINDS)}")
    if kind not in thresholds:
        _fail(f"{path}.kind", f"no thresholds entry for kind {kind}")
    capacity = _num(_get(e, "capacity_bw", path), f"{path}.capacity_bw", minimum=0)
    load = _num(e.get("load_bw", 0.0), f"{path}.load_bw", minimum=0)
    if load > capacity:
        _fail(f"{path}.load_bw", f"initial load {load} exceeds capacity {capacity}")
    rat = RatDescriptor(
        id=_str(_get(e, "id", path), f"{path}.id"),
        kind=kind,
        poa_position=_point(_get(e, "poa_position_m", path), f"{path}.poa_position_m"),
        coverage_radius=_num(_get(e, "coverage_radius_m", path), f"{path}.coverage_radius_m", exclusive_minimum=0),
        tx_power=_num(_get(e, "tx_power_dbm", path), f"{path}.tx_power_dbm"),
        pathloss_exponent=_num(_get(e, "pathloss_exponent", path), f"{path}.pathloss_exponent", exclusive_minimum=0),
        ref_distance=_num(_get(e, "ref_distance_m", path), f"{path}.ref_distance_m", exclusive_minimum=0),
        ref_loss=_num(_get(e, "ref_loss_db", path), f"{path}.ref_loss_db"),
        capacity=capacity,
        load=load,
        cost=_num(e.get("cost_per_session", 1.0), f"{path}.cost_per_session", minimum=0),
        data_rate=_num(e.get("data_rate_mbps", 10.0), f"{path}.data_rate_mbps", exclusive_minimum=0),
        operator_id=_str(e.get("operator_id", ""), f"{path}.operator_id", nonempty=False),
        policy=_parse_policy(e.get("policy", []), f"{path}.policy"),
        capabilities=frozenset(
            _str(c, f"{path}.capabilities[{j}]")
            for j, c in enumerate(_arr(e.get("capabilities", []), f"{path}.capabilities"))
        ),
    )
    pool = _int(e.get("coa_pool_size", 16), f"{path}.coa_pool_size", minimum=1)
    return rat, pool


def _parse_mu(entry, path: str, rat_ids: set[str]) -> tuple[MobileUser, float, float]:
    e = _obj(entry, path)
    model = _str(e.get("mobility_model", "stationary"), f"{path}.mobility_model")
    if model not in MOBILITY_MODELS:
        _fail(f"{path}.mobility_model", f"expected one of {', '.join(MOBILITY_MODELS)}")
    prefs_raw = _obj(e.get("preferences", {}), f"{path}.preferences")
    prefs = PreferenceWeights(
        weight_rate=_num(prefs_raw.get("weight_rate", 0.5), f"{path}.preferences.weight_rate", minimum=0),
        weight_cost=_num(prefs_raw.get("weight_cost", 0.5), f"{path}.preferences.weight_cost", minimum=0),
    )
    attachment = None
    att_raw = e.get("attachment_rat_id")
    if att_raw is not None:
        att = _str(att_raw, f"{path}.attachment_rat_id")
        if att not in rat_ids:
            _fail(f"{path}.attachment_rat_id", f"references unknown rat {att!r}")
        attachment = Attachment(rat_id=att, care_of_address="")

    rwp_bounds = None
    rwp_speed = 0.0
    if model == "random-waypoint":
        bounds_raw = _arr(_get(e, "rwp_bounds_m", path), f"{path}.rwp_bounds_m")
        if len(bounds_raw) != 2:
            _fail(f"{path}.rwp_bounds_m", "expected [[xmin, ymin], [xmax, ymax]]")
        lo = _point(bounds_raw[0], f"{path}.rwp_bounds_m[0]")
        hi = _point(bounds_raw[1], f"{path}.rwp_bounds_m[1]")
        if not (hi[0] > lo[0] and hi[1] > lo[1]):
            _fail(f"{path}.rwp_bounds_m", "upper corner must exceed lower corner")
        rwp_bounds = (lo[0], lo[1], hi[0], hi[1])
        rwp_speed = _num(_get(e, "rwp_speed_mps", path), f"{path}.rwp_speed_mps", exclusive_minimum=0)

    mu = MobileUser(
        id=_str(_get(e, "id", path), f"{path}.id"),
        position=_point(_get(e, "position_m", path), f"{path}.position_m"),
        velocity=_point(e.get("velocity_mps", [0.0, 0.0]), f"{path}.velocity_mps"),
        mobility_model=model,
        preferences=prefs,
        home_operator_id=_str(e.get("home_operator_id", ""), f"{path}.home_operator_id", nonempty=False),
        attachment=attachment,
        rwp_bounds=rwp_bounds,
        rwp_speed=rwp_speed,
    )
    demand = _num(_get(e, "demand_bw", path), f"{path}.demand_bw", exclusive_minimum=0)
    jitter = _num(e.get("position_jitter_m", 0.0), f"{path}.position_jitter_m", minimum=0)
    return mu, demand, jitter


def scenario_from_dict(data: dict) -> Scenario:
    """Build a validated Scenario; raises ValidationError naming the bad field."""
    top = _obj(data, "scenario")
    duration = _num(_get(top, "duration_s", ""), "duration_s", exclusive_minimum=0)
    scan = _num(top.get("scan_period_s", 0.1), "scan_period_s", exclusive_minimum=0)
    timings = _parse_timings(top)
    thresholds = _parse_thresholds(top)

    rats: list[RatDescriptor] = []
    pools: dict[str, int] = {}
    for i, entry in enumerate(_arr(_get(top, "rats", ""), "rats")):
        rat, pool = _parse_rat(entry, f"rats[{i}]", thresholds)
        if rat.id in pools:
            _fail(f"rats[{i}].id", f"duplicate rat id {rat.id!r}")
        rats.append(rat)
        pools[rat.id] = pool
    if not rats:
        _fail("rats", "at least one rat is required")

    rat_by_id = {r.id: r for r in rats}
    mus: list[MobileUser] = []
    demand: dict[str, float] = {}
    jitter: dict[str, float] = {}
    for i, entry in enumerate(_arr(_get(top, "mus", ""), "mus")):
        mu, d, j = _parse_mu(entry, f"mus[{i}]", set(rat_by_id))
        if mu.id in demand:
            _fail(f"mus[{i}].id", f"duplicate mu id {mu.id!r}")
        if mu.attachment is not None:
            rat = rat_by_id[mu.attachment.rat_id]
            dist = math.dist(mu.position, rat.poa_position)
            if dist > rat.coverage_radius:
                _fail(
                    f"mus[{i}].attachment_rat_id",
                    f"user starts {dist:.1f} m from {rat.id}, outside its {rat.coverage_radius:.1f} m coverage",
                )
        mus.append(mu)
        demand[mu.id] = d
        jitter[mu.id] = j

    traffic: list[TrafficSpec] = []
    for i, entry in enumerate(_arr(top.get("traffic", []), "traffic")):
        p = f"traffic[{i}]"
        e = _obj(entry, p)
        mu_id = _str(_get(e, "mu_id", p), f"{p}.mu_id")
        if mu_id not in demand:
            _fail(f"{p}.mu_id", f"references unknown mu {mu_id!r}")
        start = _num(_get(e, "start_s", p), f"{p}.start_s", minimum=0)
        end = _num(_get(e, "end_s", p), f"{p}.end_s", maximum=duration)
        if end <= start:
            _fail(f"{p}.end_s", f"must be > start_s ({start})")
        traffic.append(
            TrafficSpec(
                mu_id=mu_id,
                rate_pps=_num(_get(e, "rate_pps", p), f"{p}.rate_pps", exclusive_minimum=0),
                start_s=start,
                end_s=end,
                phase_jitter_s=_num(e.get("phase_jitter_s", 0.0), f"{p}.phase_jitter_s", minimum=0),
            )
        )

    stimuli: list[StimulusSpec] = []
    for i, entry in enumerate(_arr(top.get("stimuli", []), "stimuli")):
        p = f"stimuli[{i}]"
        e = _obj(entry, p)
        kind = _str(_get(e, "kind", p), f"{p}.kind")
        if kind not in ("preference_change", "manual_selection"):
            _fail(f"{p}.kind", "expected preference_change or manual_selection")
        mu_id = _str(_get(e, "mu_id", p), f"{p}.mu_id")
        if mu_id not in demand:
            _fail(f"{p}.mu_id", f"references unknown mu {mu_id!r}")
        rat_id = None
        w_rate, w_cost = 0.5, 0.5
        if kind == "manual_selection":
            rat_id = _str(_get(e, "rat_id", p), f"{p}.rat_id")
            if rat_id not in rat_by_id:
                _fail(f"{p}.rat_id", f"references unknown rat {rat_id!r}")
        else:
            w_rate = _num(e.get("weight_rate", 0.5), f"{p}.weight_rate", minimum=0)
            w_cost = _num(e.get("weight_cost", 0.5), f"{p}.weight_cost", minimum=0)
            if w_rate == 0 and w_cost == 0:
                _fail(f"{p}.weight_rate", "weight_rate and weight_cost cannot both be zero")
        stimuli.append(
            StimulusSpec(
                time_s=_num(_get(e, "time_s", p), f"{p}.time_s", minimum=0, maximum=duration),
                mu_id=mu_id,
                kind=kind,
                weight_rate=w_rate,
                weight_cost=w_cost,
                rat_id=rat_id,
            )
        )

    return Scenario(
        duration_s=duration,
        scan_period_s=scan,
        timings=timings,
        thresholds=thresholds,
        rats=rats,
        mus=mus,
        mu_demand=demand,
        mu_position_jitter=jitter,
        coa_pool_sizes=pools,
        traffic=traffic,
        stimuli=stimuli,
    )


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(str(path), "file not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(str(path), f"not valid JSON: {exc}") from None
    return scenario_from_dict(data)
