import itertools
import math
import random

import pytest

from repuchain.metrics_oracle import (
    InstanceTooLargeError,
    MetricsLog,
    compute_regret,
    emit_csv,
    exact_expected_loss,
    mc_expected_loss,
    scaling_fit,
    theorem_bound,
)
from repuchain.sim_engine import ScenarioConfig, run
from repuchain import scenarios


# -- exact oracle: pinned examples ------------------------------------------------


def test_invalid_tx_both_plus_labels():
    r = exact_expected_loss([[1, 1]], [False], eta=0.5)
    assert r.prose_loss == pytest.approx(1.0)     # verified surely, one wasted check
    assert r.proof_loss == pytest.approx(1.0)     # whole mass sat on penalized slots
    assert r.slot_penalties == pytest.approx((1.0, 1.0))
    assert r.regret == pytest.approx(0.0)


def test_invalid_tx_split_labels_uniform_selection():
    # verification only when slot 0 is drawn: P = 1/2
    r = exact_expected_loss([[1, -1]], [False], eta=0.5)
    assert r.prose_loss == pytest.approx(0.5)
    assert r.verified == pytest.approx(0.5)
    # governor loss charges the +1 mass on the verification event
    assert r.proof_loss == pytest.approx(0.25)
    assert r.slot_penalties == pytest.approx((0.5, 0.0))


def test_all_honest_instance_has_zero_loss():
    labels = [[1, 1], [-1, -1], [1, 1]]
    validity = [True, False, True]
    r = exact_expected_loss(labels, validity, eta=0.7)
    assert r.proof_loss == 0.0
    assert r.prose_loss == 0.0
    assert r.slot_penalties == (0.0, 0.0)


def test_absent_encoding_zero_and_none_equivalent():
    a = exact_expected_loss([[1, 0]], [True], eta=0.5)
    b = exact_expected_loss([[1, None]], [True], eta=0.5)
    assert a == b
    # absent slot penalized iff the tx gets verified, which happens w.p. 1/2
    assert a.verified == pytest.approx(0.5)
    assert a.slot_penalties[1] == pytest.approx(0.5)


def test_oracle_rejects_oversize_instances():
    with pytest.raises(InstanceTooLargeError, match="u <= 3"):
        exact_expected_loss([[1, 1, 1, 1]], [True], eta=0.5)
    with pytest.raises(InstanceTooLargeError, match="T <= 12"):
        exact_expected_loss([[1]] * 13, [True] * 13, eta=0.5)


def test_oracle_rejects_malformed_input():
    with pytest.raises(ValueError):
        exact_expected_loss([[2, 1]], [True], eta=0.5)
    with pytest.raises(ValueError):
        exact_expected_loss([[1, 1]], [True, False], eta=0.5)
    with pytest.raises(ValueError):
        exact_expected_loss([[1, 1], [1]], [True, False], eta=0.5)


def test_theorem_bound_closed_form():
    # at eta = sqrt(ln u / T) the bound collapses to (3/2) sqrt(T ln u)
    eta = math.sqrt(math.log(2) / 100)
    assert theorem_bound(2, eta, 100) == pytest.approx(1.5 * math.sqrt(100 * math.log(2)))
    assert theorem_bound(2, eta, 100) == pytest.approx(12.4883, abs=1e-3)


def test_theorem_inequality_exhaustive_tiny():
    # zero-tolerance sweep over every u=2 pattern for T <= 2
    alphabet = list(itertools.product((1, -1, None), repeat=2))
    steps = [(row, valid) for row in alphabet for valid in (True, False)]
    count = 0
    for T in (1, 2):
        eta = math.sqrt(math.log(2) / T)
        for combo in itertools.product(steps, repeat=T):
            labels = [list(row) for row, _ in combo]
            validity = [v for _, v in combo]
            r = exact_expected_loss(labels, validity, eta=eta)
            bound = theorem_bound(2, eta, T)
            assert r.regret <= bound + 1e-9
            count += 1
    assert count == 18 + 18 * 18


def test_monte_carlo_matches_exact():
    instances = [
        ([[1, -1]], [False], 0.5),
        ([[1, 0], [1, 1], [-1, 1]], [True, False, True], 0.35),
        ([[1, -1, 0], [1, 1, -1], [0, 1, 1]], [False, True, False], 0.4),
    ]
    for idx, (labels, validity, eta) in enumerate(instances):
        exact = exact_expected_loss(labels, validity, eta)
        mc = mc_expected_loss(labels, validity, eta, n_runs=6000, seed=idx)
        assert abs(mc.mean_proof - exact.proof_loss) <= 3 * mc.se_proof + 1e-9
        assert abs(mc.mean_prose - exact.prose_loss) <= 3 * mc.se_prose + 1e-9


def test_full_engine_mean_loss_matches_enumerated_oracle():
    # u=2 (honest + always-plus): the label matrix is a function of validity,
    # so the engine's expected loss is the validity-weighted oracle average
    raw = scenarios.smoke()
    raw.update({
        "n": 2,
        "topology": [[0, 1]],
        "strategies": [{"kind": "Honest"}, {"kind": "AlwaysPlus"}],
        "gen_rate": 1,
        "invalid_fraction": 0.5,
        "total_rounds": 9,
        "T": 1000,
        "eta_policy": {"kind": "Fixed", "value": 0.5},
    })
    base = ScenarioConfig.from_dict(raw)
    T_steps = 6  # txs from rounds 1..6 get screened within 9 rounds

    expected_proof = 0.0
    expected_prose = 0.0
    for pattern in itertools.product((True, False), repeat=T_steps):
        labels = [[1, 1] if v else [-1, 1] for v in pattern]
        r = exact_expected_loss(labels, list(pattern), eta=0.5)
        expected_proof += r.proof_loss / 2 ** T_steps
        expected_prose += r.prose_loss / 2 ** T_steps

    n_seeds = 600
    proof_samples = []
    prose_samples = []
    for seed in range(n_seeds):
        _, metrics = run(base.with_seed(seed))
        events = metrics.events[0]
        assert len(events) == T_steps
        proof_samples.append(sum(e[2] for e in events))
        prose_samples.append(metrics.wasted_verifications(0))

    def mean_se(xs):
        mu = sum(xs) / len(xs)
        var = sum((x - mu) ** 2 for x in xs) / (len(xs) - 1)
        return mu, math.sqrt(var / len(xs))

    mp, sp = mean_se(proof_samples)
    mw, sw = mean_se([float(x) for x in prose_samples])
    assert abs(mp - expected_proof) <= 3 * sp + 1e-9
    assert abs(mw - expected_prose) <= 3 * sw + 1e-9


# -- scaling fit -------------------------------------------------------------------


def test_scaling_fit_sqrt_slope():
    points = [(t, math.sqrt(t)) for t in (100, 200, 400, 800, 1600)]
    assert scaling_fit(points) == pytest.approx(0.5, abs=1e-12)


def test_scaling_fit_linear_slope():
    points = [(t, 2.0 * t) for t in (100, 300, 900, 2700)]
    assert scaling_fit(points) == pytest.approx(1.0, abs=1e-12)


def test_scaling_fit_zero_regret_undefined():
    assert scaling_fit([(100, 0.0), (200, 0.0), (400, 0.0), (800, 0.0)]) is None
    assert scaling_fit([]) is None


# -- regret over engine runs --------------------------------------------------------


def test_all_honest_run_has_zero_regret():
    cfg = ScenarioConfig.from_dict(scenarios.smoke())
    _, metrics = run(cfg)
    report = compute_regret(metrics, 0)
    assert report.cumulative_regret == 0.0
    assert all(ep.s_min == 0 for ep in report.epochs)


def test_honest_plus_alwaysplus_on_valid_only_traffic():
    raw = scenarios.smoke()
    raw.update({
        "n": 2,
        "topology": [[0, 1]],
        "strategies": [{"kind": "Honest"}, {"kind": "AlwaysPlus"}],
        "invalid_fraction": 0.0,
        "gen_rate": 3,
        "total_rounds": 30,
        "T": 1000,
    })
    _, metrics = run(ScenarioConfig.from_dict(raw))
    report = compute_regret(metrics, 0)
    # strategies coincide on all-valid input: nothing is ever penalized
    assert report.cumulative_regret == 0.0
    assert report.cumulative_prose_loss == 0


def test_slot_penalty_counters_match_reputation_deltas():
    cfg = ScenarioConfig.from_dict(scenarios.doubling()).with_seed(3)
    cfg = ScenarioConfig.from_dict({**scenarios.doubling(), "total_rounds": 120, "seed": 3})
    world_run = run(cfg)
    ledger, metrics = world_run
    final = metrics.final_states[0]
    open_epoch = final.epoch_index
    counts = metrics.slot_penalties(0, epoch_index=open_epoch)
    assert tuple(-c for c in counts) == final.reps
    # and across all epochs, totals equal the total decrement count
    report = compute_regret(metrics, 0)
    for ep in report.epochs:
        assert sum(ep.slot_penalties) == sum(
            len(e[3]) for e in metrics.events[0] if e[0] == ep.epoch_index
        )


def test_window_regret_slices_first_events():
    log = MetricsLog(1)
    from repuchain.reputation import ReputationState

    log.events[0] = [
        (0, 2, 0.5, (1,)),
        (0, 0, 0.0, ()),
        (0, 1, 0.25, (0,)),
    ]
    log.finalize([ReputationState((0, 0), 0, 10, 0.5, 0)])
    loss, counts, regret = log.window_regret(0, first_n=1)
    assert (loss, counts) == (0.5, [0, 1])
    assert regret == 0.5
    loss, counts, regret = log.window_regret(0)
    assert loss == pytest.approx(0.75)
    assert counts == [1, 1]


# -- csv emission --------------------------------------------------------------------


def test_emit_csv_empty_log_headers_only(tmp_path):
    log = MetricsLog(1)
    from repuchain.reputation import ReputationState

    log.finalize([ReputationState((0,), 0, 10, 0.5, 0)])
    emit_csv(log, [], tmp_path)
    rounds = (tmp_path / "rounds.csv").read_text().splitlines()
    epochs = (tmp_path / "epochs.csv").read_text().splitlines()
    assert len(rounds) == 1 and rounds[0].startswith("round,")
    assert len(epochs) == 1 and epochs[0].startswith("provider_id,")


def test_emit_csv_contains_epoch_rows(tmp_path):
    cfg = ScenarioConfig.from_dict({**scenarios.doubling(), "total_rounds": 60})
    _, metrics = run(cfg)
    reports = [compute_regret(metrics, 0)]
    emit_csv(metrics, reports, tmp_path)
    lines = (tmp_path / "epochs.csv").read_text().splitlines()
    assert lines[0].split(",")[:8] == [
        "provider_id", "epoch_index", "T_i", "eta", "L_T", "S_T_min", "regret", "bound"
    ]
    assert len(lines) == 1 + len(reports[0].epochs)
