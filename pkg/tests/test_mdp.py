import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covkit.envs import gen_bandit, gen_chain
from covkit.flow_lp import phi_star
from covkit.mdp import (DimensionError, EpisodeDataset, Occupancy, Policy, TabularMdp,
                        VisitCounts, extract_policy, max_reach, max_reach_table,
                        optimal_value, policy_gap, policy_value, sample_episode,
                        sample_episodes, visitation_distribution)
from oracles import all_deterministic, max_reach_enum, occupancy, stochastic_occupancy


def random_policy(rng, H, S, A):
    return Policy(rng.dirichlet(np.ones(A), size=(H, S)))


# ---- TabularMdp validation and persistence

def test_rejects_non_stochastic_rows():
    p = np.full((1, 2, 1, 2), 0.6)
    with pytest.raises(ValueError):
        TabularMdp(p, np.zeros((2, 2, 1)))


def test_rejects_rewards_outside_unit_interval():
    with pytest.raises(ValueError):
        TabularMdp(np.zeros((0, 1, 2, 1)), np.array([[[0.2, 1.5]]]))


def test_json_round_trip(tmp_path, mdp42):
    path = tmp_path / "m.json"
    mdp42.save(path)
    d = json.loads(path.read_text())
    assert set(d) == {"S", "A", "H", "s1", "p", "r"}
    assert TabularMdp.load(path) == mdp42


# ---- visitation_distribution

def test_deterministic_chain_occupancy():
    m = gen_chain(2, 2, 2)
    pi = Policy.from_actions(np.array([[0, 0], [1, 1]]), 2)
    rho = visitation_distribution(m, pi).rho
    assert rho[0, 0, 0] == 1.0 and rho[1, 1, 1] == 1.0
    assert rho.sum() == 2.0


def test_uniform_policy_single_state():
    m = gen_bandit([0.3, 0.6])
    rho = visitation_distribution(m, Policy.uniform(1, 1, 2)).rho
    assert rho[0, 0] == pytest.approx([0.5, 0.5])


def test_occupancy_matches_monte_carlo(mdp42):
    rng = np.random.default_rng(0)
    pi = random_policy(np.random.default_rng(1), *mdp42.shape)
    rho = visitation_distribution(mdp42, pi).rho
    data = sample_episodes(mdp42, pi, rng, 10 ** 6)
    freq = data.counts(mdp42.S, mdp42.A).n / 10 ** 6
    assert np.abs(freq - rho).max() < 3e-3


def test_occupancy_invariants(mdp42):
    pi = random_policy(np.random.default_rng(2), *mdp42.shape)
    occ = visitation_distribution(mdp42, pi)
    occ.check(mdp42, tol=1e-12)
    assert np.allclose(occ.rho, stochastic_occupancy(mdp42.p, 0, pi.probs), atol=1e-14)


def test_dimension_mismatch(mdp42):
    with pytest.raises(DimensionError):
        visitation_distribution(mdp42, Policy.uniform(2, 3, 2))


# ---- max_reach

def test_max_reach_chain_and_unreachable():
    m = gen_chain(3, 2, 3)
    assert max_reach(m, (2, 2)) == 1.0
    assert max_reach(m, (0, 1)) == 0.0
    assert max_reach(m, (1, 2)) == 0.0


def test_max_reach_matches_enumeration(mdp42):
    W = max_reach_enum(mdp42.p, 0, *mdp42.shape)
    table = max_reach_table(mdp42)
    for h in range(mdp42.H):
        for s in range(mdp42.S):
            assert max_reach(mdp42, (h, s)) == pytest.approx(W[h, s], abs=1e-9)
    assert np.allclose(table, W, atol=1e-9)


def test_max_reach_triplet(mdp42):
    best = 0.0
    for acts in all_deterministic(*mdp42.shape):
        best = max(best, occupancy(mdp42.p, 0, acts, 2)[2, 1, 1])
    assert max_reach(mdp42, (2, 1, 1)) == pytest.approx(best, abs=1e-12)


# ---- values

def test_policy_value_examples():
    m = gen_chain(2, 2, 2)
    r = np.zeros(m.shape)
    assert policy_value(m, Policy.uniform(2, 2, 2), r) == 0.0
    r[1, 1, 0] = 1.0
    on_path = Policy.from_actions(np.zeros((2, 2), int), 2)
    assert policy_value(m, on_path, r) == 1.0


def test_policy_value_monte_carlo(mdp42):
    rng = np.random.default_rng(5)
    pi = random_policy(rng, *mdp42.shape)
    v = policy_value(mdp42, pi, mdp42.r)
    data = sample_episodes(mdp42, pi, rng, 10 ** 6)
    ret = data.rewards.sum(axis=1)
    assert abs(ret.mean() - v) < 3 * ret.std() / 1e3


def test_bandit_optimal_value():
    v, pi = optimal_value(gen_bandit([0.2, 0.7]), np.array([[[0.2, 0.7]]]))
    assert v == pytest.approx(0.7)
    assert pi.actions[0, 0] == 1


def test_zero_reward_tie_break(mdp42):
    v, pi = optimal_value(mdp42, np.zeros(mdp42.shape))
    assert v == 0.0
    assert np.all(pi.actions == 0)


def test_optimal_dominates_all_deterministic(mdp42):
    v, pi = optimal_value(mdp42, mdp42.r)
    assert policy_value(mdp42, pi, mdp42.r) == pytest.approx(v, abs=1e-12)
    for acts in all_deterministic(*mdp42.shape):
        assert np.sum(occupancy(mdp42.p, 0, acts, 2) * mdp42.r) <= v + 1e-12


def test_optimal_dominates_random_policies(mdp42):
    rng = np.random.default_rng(7)
    v, _ = optimal_value(mdp42, mdp42.r)
    for _ in range(1000):
        assert policy_value(mdp42, random_policy(rng, *mdp42.shape), mdp42.r) <= v + 1e-12


def test_policy_gap(mdp42):
    rng = np.random.default_rng(8)
    v, pi_star = optimal_value(mdp42, mdp42.r)
    assert policy_gap(mdp42, pi_star, mdp42.r) == pytest.approx(0, abs=1e-12)
    assert policy_gap(mdp42, Policy.uniform(3, 3, 2), np.zeros(mdp42.shape)) == 0
    pi = random_policy(rng, *mdp42.shape)
    ref = v - np.sum(stochastic_occupancy(mdp42.p, 0, pi.probs) * mdp42.r)
    gap = policy_gap(mdp42, pi, mdp42.r)
    assert gap >= -1e-9 and gap == pytest.approx(ref, abs=1e-12)


# ---- sampling

def test_deterministic_trajectory_independent_of_seed():
    m = gen_chain(3, 2, 3)
    pi = Policy.from_actions(np.zeros((3, 3), int), 2)
    for seed in range(5):
        ep = sample_episode(m, pi, np.random.default_rng(seed))
        assert list(ep.states) == [0, 1, 2]


def test_same_seed_same_bytes(mdp42):
    pi = Policy.uniform(*mdp42.shape)
    a = sample_episodes(mdp42, pi, np.random.default_rng(9), 500)
    b = sample_episodes(mdp42, pi, np.random.default_rng(9), 500)
    assert a.states.tobytes() == b.states.tobytes()
    assert a.rewards.tobytes() == b.rewards.tobytes()


def test_single_and_batch_sampling_share_stream(mdp42):
    pi = Policy.uniform(*mdp42.shape)
    r1, r2 = np.random.default_rng(4), np.random.default_rng(4)
    batch = sample_episodes(mdp42, pi, r1, 20)
    for i in range(20):
        ep = sample_episode(mdp42, pi, r2)
        assert np.array_equal(ep.states, batch[i].states)


def test_state_frequencies_within_3_sigma(mdp42):
    pi = random_policy(np.random.default_rng(10), *mdp42.shape)
    rho = visitation_distribution(mdp42, pi).rho
    data = sample_episodes(mdp42, pi, np.random.default_rng(11), 10 ** 5)
    freq = data.counts(3, 2).n / 1e5
    sigma = np.sqrt(rho * (1 - rho) / 1e5)
    assert np.all(np.abs(freq - rho) <= 3 * sigma + 1e-12)


def test_visit_counts_consistent(mdp42):
    data = sample_episodes(mdp42, Policy.uniform(3, 3, 2), np.random.default_rng(0), 50)
    vc = VisitCounts.zeros(3, 3, 2)
    for ep in data:
        vc.add(ep)
    assert np.array_equal(vc.n, data.counts(3, 2).n)
    assert np.all(vc.n.sum(axis=(1, 2)) == 50)
    assert len(EpisodeDataset.concat([data, data])) == 100


# ---- extract_policy

def test_extract_round_trip(mdp42):
    pi = random_policy(np.random.default_rng(12), *mdp42.shape)
    rho = visitation_distribution(mdp42, pi).rho
    back = extract_policy(rho)
    visited = rho.sum(-1) > 0
    assert np.allclose(back.probs[visited], pi.probs[visited], atol=1e-12)


def test_extract_zero_mass_uniform():
    rho = np.zeros((1, 2, 3))
    rho[0, 0] = [0.2, 0.8, 0.0]
    pi = extract_policy(Occupancy(rho))
    assert np.allclose(pi.probs[0, 1], 1 / 3)


def test_extract_rejects_negative():
    with pytest.raises(ValueError):
        extract_policy(np.array([[[-0.1, 1.1]]]))


def test_min_flow_realised(mdp42):
    W = max_reach_table(mdp42)
    c = np.broadcast_to(W[:, :, None] > 0, mdp42.shape) * 2.0
    sol = phi_star(mdp42, c)
    realised = visitation_distribution(mdp42, extract_policy(sol.primal)).rho
    assert np.abs(realised - sol.primal.rho / sol.value).max() < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 4), st.integers(1, 3), st.integers(1, 4))
def test_round_trip_property(seed, S, A, H):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(S), size=(H - 1, S, A))
    m = TabularMdp(p, rng.uniform(size=(H, S, A)))
    rho = visitation_distribution(m, random_policy(rng, H, S, A)).rho
    again = visitation_distribution(m, extract_policy(rho)).rho
    assert np.abs(again - rho).max() < 1e-8
