import json
import math

import numpy as np
import pytest
from conftest import spread_model
from hypothesis import given, strategies as st

from qnmcmc import mcmc
from qnmcmc.errors import InvalidArgumentError
from qnmcmc.made import MadeArchitecture, MadeModel
from qnmcmc.spinglass import (
    BoltzmannTarget,
    SpinGlassInstance,
    energy,
    generate_instance,
    log_partition,
    spins_from_index,
)


def test_identity_move_ratio_is_zero():
    t = BoltzmannTarget(generate_instance(4, 0), 3.0)
    x = np.array([1, -1, 1, 1])
    for prop in (mcmc.SingleSpinFlip(4), mcmc.UniformProposal(4), mcmc.GNSProposal(spread_model(4, 0))):
        assert mcmc.acceptance_log_ratio(t, x, x, prop) == 0.0


def test_metropolis_rule_for_ssf():
    t = BoltzmannTarget(SpinGlassInstance.from_pairs(2, [(0, 1, 0.5)]), 2.0)
    r = mcmc.acceptance_log_ratio(t, np.array([1, 1]), np.array([-1, 1]), mcmc.SingleSpinFlip(2))
    assert r == pytest.approx(-2.0, abs=1e-15)
    assert math.exp(min(0.0, r)) == pytest.approx(math.exp(-2))


def test_gns_ratio_against_enumeration():
    inst = generate_instance(4, 3)
    t = BoltzmannTarget(inst, 1.5)
    model = spread_model(4, 5)
    prop = mcmc.GNSProposal(model, 4)
    _, log_pi = log_partition(t)
    lp = model.enumerate_log_probs()
    xs = spins_from_index(np.arange(16), 4)
    for i in range(16):
        for j in range(16):
            ref = (log_pi[j] - log_pi[i]) + (lp[i] - lp[j])
            assert abs(mcmc.acceptance_log_ratio(t, xs[i], xs[j], prop) - (0.0 if i == j else ref)) < 1e-12


def test_ssf_single_site():
    rng = np.random.default_rng(0)
    x, lq = mcmc.propose_ssf(np.array([1]), rng)
    assert x.tolist() == [-1] and lq == 0.0


@given(st.integers(1, 12), st.integers(0, 2**31))
def test_ssf_hamming_distance_one(n, seed):
    rng = np.random.default_rng(seed)
    x = spins_from_index(seed % 2**n, n)
    y, lq = mcmc.propose_ssf(x, rng)
    assert np.count_nonzero(x != y) == 1
    assert lq == pytest.approx(-math.log(n))


def test_ssf_site_frequencies():
    rng = np.random.default_rng(1)
    N, n = 10**5, 8
    x = np.ones(n, dtype=np.int8)
    counts = np.zeros(n)
    for _ in range(N):
        y, _ = mcmc.propose_ssf(x, rng)
        counts[np.flatnonzero(y != x)[0]] += 1
    assert np.max(np.abs(counts - N / n)) < 5 * math.sqrt(N / n * (1 - 1 / n))


def test_uniform_single_spin():
    rng = np.random.default_rng(2)
    draws = [mcmc.propose_uniform(1, rng)[0][0] for _ in range(4000)]
    assert abs(np.mean(np.array(draws) == 1) - 0.5) < 5 * 0.5 / math.sqrt(4000)


def test_uniform_distribution():
    N = 10**6
    idx, lq = mcmc.UniformProposal(4).draw(N, np.random.default_rng(3))
    counts = np.bincount(idx, minlength=16)
    assert np.max(np.abs(counts - N / 16)) < 5 * math.sqrt(N / 16 * 15 / 16)
    assert np.all(lq == -4 * math.log(2))
    rng = np.random.default_rng(4)
    single = np.array([mcmc.propose_uniform(4, rng)[1] for _ in range(10)])
    assert np.all(single == -4 * math.log(2))


def test_uniform_guardrail():
    with pytest.raises(InvalidArgumentError):
        mcmc.propose_uniform(64, np.random.default_rng(0))


def test_zero_gns_behaves_like_uniform():
    prop = mcmc.GNSProposal(MadeModel.zeros(MadeArchitecture(5)), 5)
    assert np.allclose(prop.log_q_matrix(), mcmc.UniformProposal(5).log_q_matrix(), atol=1e-15)


def test_gns_log_q_self_consistent():
    model = spread_model(6, 2)
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, lq = mcmc.propose_gns(model, rng)
        assert abs(lq - mcmc.GNSProposal(model).log_q(x)) < 1e-12


def test_gns_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        mcmc.GNSProposal(spread_model(4, 0), 5)
    with pytest.raises(InvalidArgumentError):
        mcmc.make_proposal("gns", 4)


def test_gns_proposals_are_independent():
    idx, _ = mcmc.GNSProposal(spread_model(6, 3)).draw(20_000, np.random.default_rng(5))
    x = idx.astype(float)

    def lag1(v):
        v = v - v.mean()
        return np.dot(v[1:], v[:-1]) / np.dot(v, v)

    obs = abs(lag1(x))
    rng = np.random.default_rng(6)
    null = np.array([abs(lag1(rng.permutation(x))) for _ in range(200)])
    assert np.mean(null >= obs) > 0.005


def test_flat_target_uniform_proposal_always_accepts():
    c = mcmc.run_chain(BoltzmannTarget(generate_instance(6, 0), 0.0), mcmc.UniformProposal(6), 2000, seed=0)
    assert c.acceptance_rate == 1.0


def test_exact_gns_proposal_always_accepts():
    t = BoltzmannTarget(generate_instance(6, 0), 0.0)
    c = mcmc.run_chain(t, mcmc.GNSProposal(MadeModel.zeros(MadeArchitecture(6))), 2000, seed=0)
    assert c.acceptance_rate == 1.0


@pytest.mark.parametrize("kind", ["ssf", "uniform", "gns"])
def test_chain_invariants(kind):
    inst = generate_instance(7, 2)
    t = BoltzmannTarget(inst, 1.0)
    prop = mcmc.make_proposal(kind, 7, spread_model(7, 1))
    c = mcmc.run_chain(t, prop, 5000, seed=11)
    assert len(c.states) == 5001 and c.steps == 5000
    rejected = ~c.accept_flags
    assert np.all(c.states[1:][rejected] == c.states[:-1][rejected])
    if kind == "ssf":
        moved = c.states[1:] != c.states[:-1]
        assert np.array_equal(moved, c.accept_flags)
    check = np.arange(0, 5001, 97)
    assert np.allclose(c.energies[check], energy(inst, spins_from_index(c.states[check], 7)), atol=1e-9)


def test_chain_is_deterministic():
    t = BoltzmannTarget(generate_instance(5, 1), 2.0)
    a = mcmc.run_chain(t, mcmc.SingleSpinFlip(5), 1000, seed=3)
    b = mcmc.run_chain(t, mcmc.SingleSpinFlip(5), 1000, seed=3)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.accept_flags, b.accept_flags)


def test_initial_state_honoured():
    t = BoltzmannTarget(generate_instance(4, 1), 2.0)
    c = mcmc.run_chain(t, mcmc.SingleSpinFlip(4), 10, x0=[-1, 1, 1, 1], seed=0)
    assert c.states[0] == 1


@pytest.mark.parametrize("kind", ["ssf", "uniform"])
def test_acceptance_rate_matches_exact_expectation(kind):
    # stationary acceptance rate = sum_x pi(x) sum_x' Q(x'|x) min(1, pi(x')/pi(x))
    inst = generate_instance(5, 6)
    t = BoltzmannTarget(inst, 1.0)
    prop = mcmc.make_proposal(kind, 5)
    _, log_pi = log_partition(t)
    Q = np.exp(prop.log_q_matrix())
    A = np.exp(np.minimum(0.0, log_pi[None, :] - log_pi[:, None]))
    expected = float(np.exp(log_pi) @ (Q * A).sum(axis=1))
    c = mcmc.run_chain(t, prop, 200_000, seed=1)
    assert abs(c.acceptance_rate - expected) < 0.01


def test_steps_must_be_positive():
    with pytest.raises(InvalidArgumentError):
        mcmc.run_chain(BoltzmannTarget(generate_instance(3, 0), 1.0), mcmc.SingleSpinFlip(3), 0)


def test_run_chains_uses_distinct_streams():
    t = BoltzmannTarget(generate_instance(5, 1), 1.0)
    cs = mcmc.run_chains(t, mcmc.UniformProposal(5), 200, 3, master_seed=4)
    assert len({c.seed for c in cs}) == 3
    again = mcmc.run_chains(t, mcmc.UniformProposal(5), 200, 3, master_seed=4)
    assert all(np.array_equal(a.states, b.states) for a, b in zip(cs, again))


def test_trace_outputs(tmp_path):
    t = BoltzmannTarget(generate_instance(4, 1), 1.0)
    c = mcmc.run_chain(t, mcmc.SingleSpinFlip(4), 50, seed=2)
    c.write_trace_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "step,state_index,energy,accepted" and len(lines) == 52
    c.write_trace_npy(tmp_path / "t.npy")
    rec = np.load(tmp_path / "t.npy")
    assert np.array_equal(rec["state_index"], c.states)
    assert np.array_equal(rec["accepted"][1:], c.accept_flags)
    c.write_summary(tmp_path / "s.json")
    s = json.loads((tmp_path / "s.json").read_text())
    assert s["proposal"] == "ssf" and s["seed"] == 2 and s["acceptance_rate"] == c.acceptance_rate
