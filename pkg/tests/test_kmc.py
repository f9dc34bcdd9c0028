from collections import Counter

import numpy as np
import pytest
from scipy import stats

from crsos.exact_master import StateDistribution, build_generator, evolve_forward, one_site_marginal
from crsos.kmc import (AbsorbingState, Simulation, TrajectoryState, ensemble, kmc_step, make_rng,
                       replica_seed, simulate)
from crsos.lattice import HeightConfig, RateTable, enumerate_configs, hop_rate, is_restricted, list_moves
from crsos.report import multinomial_envelope

ROUGH = (2, 1, 0, 1, 1, 2, 2, 1)


def draw_steps(config, rates, count, seed):
    """Repeated single events from one fixed configuration."""
    rng = make_rng(seed)
    state = TrajectoryState(HeightConfig(config), rng=rng)
    moves, waits = [], []
    for _ in range(count):
        nxt = kmc_step(state, rates)
        moves.append((nxt.last_move.source, nxt.last_move.step))
        waits.append(nxt.clock)
        state = TrajectoryState(state.config, rng=nxt.rng)
    return Counter(moves), np.array(waits)


def test_absorbing_state():
    with pytest.raises(AbsorbingState):
        kmc_step(TrajectoryState(HeightConfig((1, 1))), RateTable.uniform())
    sim = Simulation((1, 1), RateTable.uniform())
    with pytest.raises(AbsorbingState):
        sim.step()
    series = simulate((1, 1), RateTable.uniform(), 5.0, [0.0, 5.0])
    assert series.absorbed and series.events == 0


def test_uniform_selection_and_exponential_waits():
    rates = RateTable.uniform()
    catalog = list_moves(ROUGH, rates)
    moves, waits = draw_steps(ROUGH, rates, 100_000, seed=11)
    keys = [(m.source, m.step) for m in catalog]
    counts = np.array([moves[k] for k in keys])
    assert counts.sum() == sum(moves.values())
    assert stats.chisquare(counts).pvalue > 1e-3
    total = sum(m.rate for m in catalog)
    assert stats.kstest(waits, "expon", args=(0, 1 / total)).pvalue > 1e-3


def test_jump_chain_frequencies_follow_rates():
    rates = RateTable.random(np.random.default_rng(9), symmetric=False)
    catalog = list_moves(ROUGH, rates)
    total = sum(m.rate for m in catalog)
    draws = 100_000
    moves, _ = draw_steps(ROUGH, rates, draws, seed=12)
    for m in catalog:
        p = m.rate / total
        freq = moves[(m.source, m.step)] / draws
        assert abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / draws)


def test_fixed_seed_replays():
    rates = RateTable.random(np.random.default_rng(1))
    a = simulate((1,) * 12, rates, 5.0, np.linspace(0, 5, 11), seed=42)
    b = simulate((1,) * 12, rates, 5.0, np.linspace(0, 5, 11), seed=42)
    np.testing.assert_array_equal(a.width_sq, b.width_sq)
    np.testing.assert_array_equal(a.one_site_hist, b.one_site_hist)
    assert a.events == b.events
    c = simulate((1,) * 12, rates, 5.0, np.linspace(0, 5, 11), seed=43)
    assert not np.array_equal(a.width_sq, c.width_sq)


@pytest.mark.parametrize("n, K", [(8, 8), (20, 27)])
def test_compiled_engine_follows_reference_stepper(n, K):
    """Same seed, same uniforms in the same order: identical event sequence."""
    rates = RateTable.random(np.random.default_rng(n), symmetric=False)
    h = [K // n + (i < K % n) for i in range(n)]
    # spread the surplus so the start is restricted
    h = sorted(h)[::2] + sorted(h)[1::2][::-1]
    assert is_restricted(h)
    sim = Simulation(h, rates, seed=5, check=True)
    state = TrajectoryState(HeightConfig(h), rng=make_rng(5))
    for _ in range(1500):
        sim.step()
        state = kmc_step(state, rates)
        assert sim.config() == state.config
        assert sim.clock == pytest.approx(state.clock, rel=1e-12)


@pytest.mark.parametrize("symmetric", [True, False])
def test_rate_cache_stays_exact(symmetric):
    rates = RateTable.random(np.random.default_rng(3), symmetric=symmetric)
    sim = Simulation((2,) * 40, rates, seed=1, check=True)
    sim.advance_to(200.0)
    assert sim.events > 1000
    for i in range(40):
        for j, step in enumerate((-2, -1, 1, 2)):
            assert sim.rate_cache[i, j] == hop_rate(sim.h, i, step, rates)


def test_batch_size_does_not_change_trajectories():
    rates = RateTable.uniform()
    a = simulate((1,) * 16, rates, 3.0, [1.0, 3.0], seed=7, batch=3)
    b = simulate((1,) * 16, rates, 3.0, [1.0, 3.0], seed=7, batch=4096)
    np.testing.assert_array_equal(a.one_site_hist, b.one_site_hist)
    assert a.events == b.events


def test_flat_start_observables():
    series = simulate((2,) * 10, RateTable.uniform(), 1.0, [0.0], seed=0)
    assert series.width_sq[0] == 0.0 and series.mean_height[0] == 2.0


def test_zero_rates_freeze():
    init = (1, 2, 2, 1, 0, 1)
    series = simulate(init, RateTable.zero(), 10.0, np.linspace(0, 10, 5))
    assert series.events == 0
    assert np.all(series.width_sq == series.width_sq[0])
    assert np.all(series.site_height == 1)


def test_single_replica_matches_simulate():
    rates = RateTable.uniform()
    samples = [0.5, 1.0]
    ens = ensemble((1,) * 6, rates, 1.0, samples, replicas=1, base_seed=3)
    one = simulate((1,) * 6, rates, 1.0, samples, seed=replica_seed(3, 0), batch=256)
    w, _ = ens.width_sq()
    np.testing.assert_allclose(w, one.width_sq, rtol=0, atol=1e-14)
    np.testing.assert_array_equal(ens.site_hist()[0].argmax(axis=1), one.site_height)


def test_merge_equals_combined_run():
    rates = RateTable.uniform()
    args = ((1,) * 6, rates, 1.0, [0.5, 1.0])
    a = ensemble(*args, replicas=40, base_seed=2)
    b = ensemble(*args, replicas=60, base_seed=2, first_replica=40)
    both = ensemble(*args, replicas=100, base_seed=2)
    merged = a.merge(b)
    for name in ("hist_sum", "hist_sumsq", "site_counts", "h2_sum", "h2_sumsq"):
        np.testing.assert_array_equal(getattr(merged, name), getattr(both, name))
    assert merged.replicas == 100 and merged.events == both.events


def test_standard_error_shrinks_with_replicas():
    rates = RateTable.uniform()
    args = ((1,) * 8, rates, 1.0, [1.0])
    _, se1 = ensemble(*args, replicas=2000, base_seed=0).width_sq()
    _, se2 = ensemble(*args, replicas=4000, base_seed=100).width_sq()
    assert 0.6 < se2[0] / se1[0] < 0.82


@pytest.mark.parametrize("n, K, seed", [(5, 7, 0), (6, 8, 1), (4, 4, 2)])
def test_histogram_converges_to_exact_marginal(n, K, seed):
    rates = RateTable.random(np.random.default_rng(seed))
    space = enumerate_configs(n, K)
    init = space.configs[len(space) // 2]
    exact = one_site_marginal(space, evolve_forward(build_generator(space, rates),
                                                    StateDistribution.delta(space, init), 1.0), 0)
    replicas = 20_000
    kmc = ensemble(init, rates, 1.0, [1.0], replicas=replicas, base_seed=seed).site_distribution()
    assert exact.tv(kmc) <= 3 * multinomial_envelope(exact.probabilities, replicas)


def test_observable_exports():
    series = simulate((1,) * 6, RateTable.uniform(), 1.0, [0.0, 1.0], seed=0)
    assert series.to_csv().splitlines()[0] == "time,mean_height,width_sq,site_1_height"
    assert len(series.to_csv().splitlines()) == 3
    assert series.to_dict()["n"] == 6
    ens = ensemble((1,) * 6, RateTable.uniform(), 1.0, [1.0], replicas=5)
    assert ens.to_csv().splitlines()[0].startswith("time,")
    assert ens.hist_csv().splitlines()[0].startswith("time,k,")
