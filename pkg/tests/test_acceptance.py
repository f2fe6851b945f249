"""End-to-end guarantees of the simulator, one test per claim.

Every test prints a single PASS/FAIL line naming the claim and the evidence
(run with `pytest -s tests/test_acceptance.py` to see the lines) and asserts
the same condition, so the suite both reports and enforces.
"""

import itertools
import random
import time

from vhosim.cli import load_scenario_arg
from vhosim.decision import (
    HandoverSession,
    PolicyRule,
    SessionClass,
    SessionQueue,
    SessionState,
    build_priority_list,
    decide,
    transition,
)
from vhosim.engine import MODES, dump_trace, run_scenario
from vhosim.radio_env import MobileUser, RatDescriptor
from vhosim.scenario import scenario_from_dict

CANONICAL = ("umts_to_wifi", "wifi_to_wimax", "wimax_to_umts")


def _verdict(ok: bool, label: str) -> None:
    print(("PASS: " if ok else "FAIL: ") + label)
    assert ok, label


def _mean(xs):
    return sum(xs) / len(xs)


# -- 1: buffering dominates the no-buffer baseline ---------------------------


def test_buffered_mode_dominates_baseline_pairwise():
    t0 = time.monotonic()
    pairs = strict = 0
    weak_failures = []
    for name in CANONICAL:
        sc = load_scenario_arg(f"builtin:{name}")
        for seed in range(30):
            _, mi = run_scenario(sc, "iam4vho", seed)
            _, mb = run_scenario(sc, "baseline", seed)
            assert mi.packets_generated == mb.packets_generated  # paired runs align
            assert mi.mean_latency_s is not None and mb.mean_latency_s is not None
            pairs += 1
            weak = (
                mi.packets_dropped <= mb.packets_dropped
                and mi.mean_latency_s <= mb.mean_latency_s
                and mi.max_latency_s <= mb.max_latency_s
            )
            if not weak:
                weak_failures.append((name, seed))
            if mi.packets_dropped < mb.packets_dropped and mi.mean_latency_s < mb.mean_latency_s:
                strict += 1
    elapsed = time.monotonic() - t0
    ok = not weak_failures and strict >= 0.9 * pairs and elapsed < 60.0
    _verdict(
        ok,
        f"buffered mode never loses to the baseline on loss or latency across "
        f"{pairs} paired runs, strictly better in {strict} ({elapsed:.1f}s)"
        + (f"; weak failures: {weak_failures}" if weak_failures else ""),
    )


# -- 2: no loss while the old link survives until binding --------------------


def _overlap_scenario(rng: random.Random) -> dict:
    """Two overlapping cells, one user that never leaves either footprint."""
    duration = rng.uniform(4.0, 6.0)
    mu: dict = {
        "id": "m0",
        "position_m": [rng.uniform(5.0, 35.0), rng.uniform(-15.0, 15.0)],
        "attachment_rat_id": "a0",
        "demand_bw": 1.0,
        "preferences": {"weight_rate": 1.0, "weight_cost": 0.0},
    }
    if rng.random() < 0.3:
        mu["mobility_model"] = "random-waypoint"
        mu["rwp_bounds_m"] = [[0.0, -20.0], [40.0, 20.0]]
        mu["rwp_speed_mps"] = rng.uniform(0.5, 3.0)
    if rng.random() < 0.7:
        stim = {
            "time_s": rng.uniform(0.5, duration - 2.0),
            "mu_id": "m0",
            "kind": "manual_selection",
            "rat_id": "b0",
        }
    else:
        stim = {
            "time_s": rng.uniform(0.5, duration - 2.0),
            "mu_id": "m0",
            "kind": "preference_change",
            "weight_rate": 1.0,
            "weight_cost": 0.0,
        }
    return {
        "duration_s": duration,
        "thresholds": {
            "WiFi": {"t_down_dbm": -88.0, "t_going_down_dbm": -80.0, "t_up_dbm": -75.0,
                     "hysteresis_db": 1.0},
            "WiMAX": {"t_down_dbm": -95.0, "t_going_down_dbm": -85.0, "t_up_dbm": -80.0,
                      "hysteresis_db": 1.0},
        },
        "rats": [
            {"id": "a0", "kind": "WiFi", "poa_position_m": [0.0, 0.0],
             "coverage_radius_m": rng.uniform(100.0, 140.0), "tx_power_dbm": 23.0,
             "pathloss_exponent": 3.0, "ref_distance_m": 1.0, "ref_loss_db": 40.0,
             "capacity_bw": 10.0, "data_rate_mbps": 10.0, "coa_pool_size": 8},
            {"id": "b0", "kind": "WiMAX", "poa_position_m": [rng.uniform(40.0, 80.0), 0.0],
             "coverage_radius_m": rng.uniform(200.0, 400.0), "tx_power_dbm": 35.0,
             "pathloss_exponent": 3.2, "ref_distance_m": 10.0, "ref_loss_db": 55.0,
             "capacity_bw": 10.0, "data_rate_mbps": 100.0, "coa_pool_size": 8},
        ],
        "mus": [mu],
        "traffic": [{"mu_id": "m0", "rate_pps": float(rng.choice([20, 40, 60, 80, 120])),
                     "start_s": 0.2, "end_s": duration - 1.5, "phase_jitter_s": 0.01}],
        "stimuli": [stim],
    }


def test_no_loss_when_old_link_survives_to_binding():
    runs = 100
    dirty = []
    for i in range(runs):
        sc = scenario_from_dict(_overlap_scenario(random.Random(f"overlap:{i}")))
        _, m = run_scenario(sc, "iam4vho", i)
        clean = (
            m.packets_generated > 0
            and m.packets_dropped == 0
            and m.packets_in_flight == 0
            and m.sessions_rejected == 0
            and len(m.handover_latencies_s) >= 1
        )
        if not clean:
            dirty.append(i)
    _verdict(
        not dirty,
        f"zero packet loss in {runs - len(dirty)}/{runs} randomized handovers with "
        f"the old link alive until binding" + (f"; dirty runs: {dirty}" if dirty else ""),
    )


# -- 3: shorter priority lists cannot reduce rejections ----------------------


def test_truncating_priority_lists_never_reduces_rejections():
    sc = load_scenario_arg("builtin:loaded_capacity")
    bad = []
    total_full = total_short = 0
    for seed in range(30):
        _, full = run_scenario(sc, "iam4vho", seed)
        _, short = run_scenario(sc, "iam4vho", seed, list_limit=1)
        total_full += full.sessions_rejected
        total_short += short.sessions_rejected
        if short.sessions_rejected < full.sessions_rejected:
            bad.append((seed, full.sessions_rejected, short.sessions_rejected))
    ok = not bad and total_full > 0 and total_short > total_full
    _verdict(
        ok,
        f"single-entry priority lists rejected {total_short} sessions vs {total_full} "
        f"with full lists over 30 seeds, never fewer per seed"
        + (f"; regressions: {bad}" if bad else ""),
    )


# -- 4: the decision loop matches a brute-force oracle -----------------------

# each candidate is in one of four configurations: admission and policy both
# pass, admission full, policy refuses, or both
_CONFIGS = ("open", "full", "banned", "full_banned")


def _config_rat(config: str, rid: str) -> RatDescriptor:
    full = config.startswith("full")
    policy = (
        [PolicyRule(allowed_operator_ids=frozenset({"someone-else"}))]
        if config.endswith("banned")
        else []
    )
    return RatDescriptor(
        id=rid, kind="WiFi", poa_position=(0.0, 0.0), coverage_radius=100.0,
        tx_power=20.0, pathloss_exponent=3.0, ref_distance=1.0, ref_loss=40.0,
        capacity=1.0 if full else 10.0, load=1.0 if full else 0.0,
        cost=1.0, data_rate=10.0, operator_id="op", policy=policy,
    )


def _oracle(configs: tuple[str, ...], demand: float):
    """Reference walk: first candidate passing both checks wins."""
    attempts = []
    loads = {f"r{i}": (1.0 if c.startswith("full") else 0.0) for i, c in enumerate(configs)}
    for i, config in enumerate(configs):
        rid = f"r{i}"
        if config.startswith("full"):
            attempts.append((rid, "no_resources"))
        elif config.endswith("banned"):
            attempts.append((rid, "policy_fail"))
        else:
            attempts.append((rid, "accepted"))
            loads[rid] += demand
            return (True, rid, None, tuple(attempts)), loads, i
    return (False, None, "no_resources", tuple(attempts)), loads, len(configs)


def test_decision_loop_matches_brute_force_oracle():
    mu = MobileUser(id="m0", position=(0.0, 0.0), home_operator_id="home")
    instances = 0
    mismatches = []
    for n in range(5):
        for configs in itertools.product(_CONFIGS, repeat=n):
            instances += 1
            rats = {f"r{i}": _config_rat(c, f"r{i}") for i, c in enumerate(configs)}
            session = HandoverSession(
                id="s0", mu_id="m0", session_class=SessionClass.AIVHO,
                arrival_time=0.0, demand=1.0,
                priority_list=[f"r{i}" for i in range(n)],
            )
            transition(session, SessionState.ADMISSION_CHECK)
            decision = decide(session, rats, mu)
            expected, exp_loads, exp_cursor = _oracle(configs, 1.0)
            got = (decision.accepted, decision.target, decision.reason, decision.attempts)
            got_loads = {rid: rats[rid].load for rid in rats}
            exp_state = SessionState.ACCEPTED if expected[0] else SessionState.REJECTED
            if (
                got != expected
                or got_loads != exp_loads
                or session.state is not exp_state
                or session.cursor != exp_cursor
            ):
                mismatches.append(configs)
    ok = instances == 341 and not mismatches
    _verdict(
        ok,
        f"decision outcome and residual loads match the oracle on all {instances} "
        f"candidate-list instances up to length 4"
        + (f"; mismatches: {mismatches[:5]}" if mismatches else ""),
    )


# -- 5: imperative sessions outrank alternatives -----------------------------


def _queue_key(session: HandoverSession):
    rank = 0 if session.session_class is SessionClass.AIVHO else 1
    return (rank, session.arrival_time, session.id)


def _random_interleavings(reps: int) -> int:
    rng = random.Random("queue-discipline")
    violations = 0
    for _ in range(reps):
        queue = SessionQueue()
        shadow: list[HandoverSession] = []
        counter = 0
        for _step in range(rng.randint(5, 40)):
            if shadow and rng.random() < 0.45:
                popped = queue.next_session()
                expected = min(shadow, key=_queue_key)
                imperative_pending = any(
                    s.session_class is SessionClass.AIVHO for s in shadow
                )
                if popped.session_class is not SessionClass.AIVHO and imperative_pending:
                    violations += 1
                if popped is not expected:
                    violations += 1
                shadow.remove(popped)
            else:
                cls = rng.choice(
                    [SessionClass.AIVHO, SessionClass.AAVHO, SessionClass.MAVHO]
                )
                session = HandoverSession(
                    id=f"q{counter:03d}", mu_id="m0", session_class=cls,
                    arrival_time=round(rng.uniform(0.0, 5.0), 3), demand=1.0,
                )
                counter += 1
                queue.enqueue(session)
                shadow.append(session)
        while shadow:
            popped = queue.next_session()
            if popped is not min(shadow, key=_queue_key):
                violations += 1
            shadow.remove(popped)
    return violations


def _poisson_times(rng: random.Random, rate: float, t0: float, t1: float) -> list[float]:
    times, t = [], t0
    while True:
        t += rng.expovariate(rate)
        if t >= t1:
            return times
        times.append(round(t, 3))


def _contention_scenario(rng: random.Random) -> dict:
    """Edge-of-cell users raise imperative sessions at Poisson instants while
    stationary users raise preference sessions at independent Poisson instants;
    both classes then compete for the single service loop."""
    imp_times = _poisson_times(rng, 3.0, 1.0, 4.5)[:14]
    alt_times = _poisson_times(rng, 3.0, 1.0, 4.5)[:14]
    rats = [
        {"id": "u1", "kind": "WiMAX", "poa_position_m": [30000.0, 0.0],
         "coverage_radius_m": 50000.0, "tx_power_dbm": 35.0, "pathloss_exponent": 2.0,
         "ref_distance_m": 10.0, "ref_loss_db": 55.0, "capacity_bw": 100.0,
         "data_rate_mbps": 20.0, "coa_pool_size": 64},
        {"id": "u2", "kind": "WiMAX", "poa_position_m": [30000.0, 5000.0],
         "coverage_radius_m": 50000.0, "tx_power_dbm": 35.0, "pathloss_exponent": 2.0,
         "ref_distance_m": 10.0, "ref_loss_db": 55.0, "capacity_bw": 100.0,
         "data_rate_mbps": 80.0, "coa_pool_size": 64},
    ]
    mus = []
    stimuli = []
    for i, t_cross in enumerate(imp_times):
        rats.append(
            {"id": f"w{i}", "kind": "WiFi", "poa_position_m": [4000.0 * i, 0.0],
             "coverage_radius_m": 60.0, "tx_power_dbm": 23.0, "pathloss_exponent": 3.0,
             "ref_distance_m": 1.0, "ref_loss_db": 40.0, "capacity_bw": 10.0,
             "coa_pool_size": 4}
        )
        # the t_going_down level sits 58.4 m out; start so it is crossed at t_cross
        mus.append(
            {"id": f"p{i}", "position_m": [4000.0 * i, 58.4 - 10.0 * t_cross],
             "velocity_mps": [0.0, 10.0], "mobility_model": "linear",
             "attachment_rat_id": f"w{i}", "demand_bw": 1.0}
        )
    for j, t_stim in enumerate(alt_times):
        mus.append(
            {"id": f"a{j}", "position_m": [30000.0 + 20.0 * (j + 1), 0.0],
             "attachment_rat_id": "u1", "demand_bw": 1.0}
        )
        stimuli.append(
            {"time_s": t_stim, "mu_id": f"a{j}", "kind": "preference_change",
             "weight_rate": 1.0, "weight_cost": 0.0}
        )
    return {
        "duration_s": 6.0,
        "thresholds": {
            "WiFi": {"t_down_dbm": -75.0, "t_going_down_dbm": -70.0, "t_up_dbm": -66.0,
                     "hysteresis_db": 1.0},
            "WiMAX": {"t_down_dbm": -150.0, "t_going_down_dbm": -148.0,
                      "t_up_dbm": -145.0, "hysteresis_db": 0.0},
        },
        "rats": rats,
        "mus": mus,
        "stimuli": stimuli,
    }


def test_imperative_sessions_outrank_alternatives():
    violations = _random_interleavings(1000)

    imp_waits: list[float] = []
    alt_waits: list[float] = []
    for rep in range(10):
        sc = scenario_from_dict(_contention_scenario(random.Random(f"contend:{rep}")))
        trace, _ = run_scenario(sc, "iam4vho", rep)
        for rec in trace:
            if rec["kind"] == "session_dequeued":
                bucket = imp_waits if rec["session_class"] == "AIVHO" else alt_waits
                bucket.append(rec["wait_s"])
    ok = (
        violations == 0
        and len(imp_waits) > 20
        and len(alt_waits) > 20
        and max(alt_waits) > 0.0
        and _mean(imp_waits) <= _mean(alt_waits) + 1e-12
    )
    _verdict(
        ok,
        f"no queue-order violation in 1000 interleavings; mean wait "
        f"{_mean(imp_waits):.4f}s over {len(imp_waits)} imperative vs "
        f"{_mean(alt_waits):.4f}s over {len(alt_waits)} alternative dequeues"
        if imp_waits and alt_waits
        else f"queue violations={violations}, waits missing",
    )


# -- 6: conservation and replay determinism ----------------------------------


def test_packet_conservation_and_exact_replay():
    configs = 0
    problems = []
    for name in CANONICAL + ("loaded_capacity",):
        sc = load_scenario_arg(f"builtin:{name}")
        for mode in MODES:
            for seed in (0, 1):
                configs += 1
                trace_a, metrics_a = run_scenario(sc, mode, seed)
                trace_b, metrics_b = run_scenario(sc, mode, seed)
                if dump_trace(trace_a) != dump_trace(trace_b) or metrics_a != metrics_b:
                    problems.append((name, mode, seed, "replay diverged"))
                    continue
                generated, delivered, dropped = set(), set(), set()
                snapshot = {}
                for rec in trace_a:
                    key = (rec.get("mu"), rec.get("seq_no"))
                    if rec["kind"] == "packet_generated":
                        generated.add(key)
                    elif rec["kind"] == "packet_delivered":
                        delivered.add(key)
                    elif rec["kind"] == "packet_dropped":
                        dropped.add(key)
                    elif rec["kind"] == "metric_snapshot":
                        snapshot = rec
                conserved = (
                    delivered.isdisjoint(dropped)
                    and delivered <= generated
                    and dropped <= generated
                    and len(generated) == metrics_a.packets_generated == snapshot["generated"]
                    and len(delivered) == metrics_a.packets_delivered == snapshot["delivered"]
                    and len(dropped) == metrics_a.packets_dropped == snapshot["dropped"]
                    and metrics_a.packets_in_flight
                    == len(generated) - len(delivered) - len(dropped)
                    >= 0
                )
                if not conserved:
                    problems.append((name, mode, seed, "conservation broken"))
    _verdict(
        not problems,
        f"every packet accounted for exactly once and traces replay byte-identically "
        f"across {configs} run configurations"
        + (f"; problems: {problems}" if problems else ""),
    )


# -- 7: a refused manual selection falls back to nothing ---------------------


def test_manual_selection_rejected_without_fallback():
    # decision level: the manual list is exactly the chosen network
    rats = {"a": _config_rat("full", "a"), "b": _config_rat("open", "b")}
    mu = MobileUser(id="m0", position=(0.0, 0.0), home_operator_id="home")
    session = HandoverSession(
        id="s0", mu_id="m0", session_class=SessionClass.MAVHO,
        arrival_time=0.0, demand=1.0, manual_choice="a",
        priority_list=build_priority_list(SessionClass.MAVHO, [], manual_choice="a"),
    )
    transition(session, SessionState.ADMISSION_CHECK)
    decision = decide(session, rats, mu)
    direct_ok = (
        not decision.accepted
        and decision.attempts == (("a", "no_resources"),)
        and session.state is SessionState.REJECTED
        and rats["a"].load == 1.0
        and rats["b"].load == 0.0
    )

    # engine level: a better network is in range, yet the session dies alone
    sc = scenario_from_dict({
        "duration_s": 3.0,
        "thresholds": {
            "WiFi": {"t_down_dbm": -88.0, "t_going_down_dbm": -80.0, "t_up_dbm": -75.0,
                     "hysteresis_db": 1.0},
            "WiMAX": {"t_down_dbm": -95.0, "t_going_down_dbm": -85.0, "t_up_dbm": -80.0,
                      "hysteresis_db": 1.0},
        },
        "rats": [
            {"id": "w0", "kind": "WiFi", "poa_position_m": [0.0, 0.0],
             "coverage_radius_m": 100.0, "tx_power_dbm": 23.0, "pathloss_exponent": 3.0,
             "ref_distance_m": 1.0, "ref_loss_db": 40.0, "capacity_bw": 10.0},
            {"id": "full0", "kind": "WiMAX", "poa_position_m": [30.0, 0.0],
             "coverage_radius_m": 300.0, "tx_power_dbm": 35.0, "pathloss_exponent": 3.2,
             "ref_distance_m": 10.0, "ref_loss_db": 55.0, "capacity_bw": 1.0,
             "load_bw": 1.0},
            {"id": "good0", "kind": "WiMAX", "poa_position_m": [60.0, 0.0],
             "coverage_radius_m": 300.0, "tx_power_dbm": 35.0, "pathloss_exponent": 3.2,
             "ref_distance_m": 10.0, "ref_loss_db": 55.0, "capacity_bw": 10.0},
        ],
        "mus": [{"id": "m0", "position_m": [10.0, 0.0], "attachment_rat_id": "w0",
                 "demand_bw": 1.0}],
        "traffic": [{"mu_id": "m0", "rate_pps": 60.0, "start_s": 0.2, "end_s": 2.5}],
        "stimuli": [{"time_s": 1.0, "mu_id": "m0", "kind": "manual_selection",
                     "rat_id": "full0"}],
    })
    trace, metrics = run_scenario(sc, "iam4vho", 0)
    lists = [rec["rats"] for rec in trace if rec["kind"] == "priority_list"]
    attempts = [
        (rec["rat"], rec["outcome"]) for rec in trace if rec["kind"] == "decision_attempt"
    ]
    exec_steps = [rec for rec in trace if rec["kind"] == "exec_step"]
    snapshot = next(rec for rec in trace if rec["kind"] == "metric_snapshot")
    engine_ok = (
        metrics.sessions_total == 1
        and metrics.sessions_rejected == 1
        and metrics.packets_dropped == 0
        and lists == [["full0"]]
        and attempts == [("full0", "no_resources")]
        and not exec_steps
        and snapshot["final_loads"] == {"w0": 1.0, "full0": 1.0, "good0": 0.0}
    )
    _verdict(
        direct_ok and engine_ok,
        "a refused manual selection is rejected outright: one attempt, no fallback "
        "to the healthy network, no residual reservation"
        + ("" if direct_ok and engine_ok else f" (direct={direct_ok}, engine={engine_ok})"),
    )
