import numpy as np
import pytest

from softgossip.errors import ArgumentError, ConfigurationError
from softgossip.mixing import (MixingMatrix, effective_mean,
                               effective_second_moment, uniform_weights)
from softgossip.objectives import (QuadraticObjective, global_loss,
                                   make_quadratic_objectives,
                                   quadratic_optimum)
from softgossip.rng import RandomStream
from softgossip.topology import (AdjacencyGraph, ReliabilityMatrix,
                                 generate_layout, reliability_from_layout,
                                 threshold_graph)
from softgossip.training import (consensus_step, consensus_trajectories,
                                 initial_parameters, local_gradients,
                                 lossy_sgd_step, masked_mix_batch,
                                 reliable_sgd_step, run_experiment)
from softgossip.transport import sample_masks


def uniform_rel(n, p):
    probs = np.full((n, n), p)
    np.fill_diagonal(probs, 0.0)
    return ReliabilityMatrix(probs)


def full_graph(n):
    adj = ~np.eye(n, dtype=bool)
    return AdjacencyGraph(adj)


def test_consensus_matches_sampled_masks():
    # The step must consume exactly the mask streams sample_masks defines.
    n, d = 4, 5
    stream = RandomStream(seed=11)
    rel = uniform_rel(n, 0.6)
    w = uniform_weights(n)
    x = RandomStream(seed=3).normals("probe", 0, 0, 0, 0, n * d).reshape(n, d)

    masks = sample_masks(rel, d, t=7, stream=stream)
    expected = x.copy()
    for dst in range(n):
        for src in range(n):
            if src == dst:
                continue
            hit = masks.arrived[dst, src]
            expected[dst] += w.weights[dst, src] * hit * (x[src] - x[dst])

    got = consensus_step(x, w, rel, t=7, stream=stream)
    assert np.array_equal(got, expected)


def test_consensus_dead_links_is_identity():
    n, d = 3, 4
    rel = uniform_rel(n, 0.0)
    w = uniform_weights(n)
    x = np.arange(n * d, dtype=float).reshape(n, d)
    got = consensus_step(x, w, rel, t=0, stream=RandomStream(seed=0))
    assert np.array_equal(got, x)


def test_consensus_perfect_links_uniform_weights_averages():
    n, d = 5, 3
    rel = uniform_rel(n, 1.0)
    w = uniform_weights(n)
    x = RandomStream(seed=9).normals("probe", 0, 0, 0, 0, n * d).reshape(n, d)
    got = consensus_step(x, w, rel, t=0, stream=RandomStream(seed=1))
    mean = x.mean(axis=0)
    assert np.allclose(got, np.tile(mean, (n, 1)), atol=1e-12)


def test_consensus_perfect_links_preserves_mean():
    # Symmetric weights with deterministic delivery keep the average fixed.
    n, d = 6, 2
    rel = uniform_rel(n, 1.0)
    layout = generate_layout(n, seed=4)
    graph = threshold_graph(reliability_from_layout(layout), 0.2)
    from softgossip.mixing import metropolis_hastings_weights
    w = metropolis_hastings_weights(graph)
    x = RandomStream(seed=2).normals("probe", 0, 0, 0, 0, n * d).reshape(n, d)
    got = consensus_step(x, w, rel, t=0, stream=RandomStream(seed=5))
    assert np.allclose(got.mean(axis=0), x.mean(axis=0), atol=1e-12)


def test_lossy_step_is_half_step_then_consensus():
    n, d = 4, 3
    rel = uniform_rel(n, 0.5)
    w = uniform_weights(n)
    objectives = make_quadratic_objectives(n, d, seed=21)
    x = initial_parameters(n, d, RandomStream(seed=8), mode="spread")
    gamma = 0.1

    stepped = lossy_sgd_step(x, objectives, w, rel, gamma, t=3,
                             stream=RandomStream(seed=13))
    grads = local_gradients(objectives, x, 3, RandomStream(seed=13))
    manual = consensus_step(x - gamma * grads, w, rel, t=3,
                            stream=RandomStream(seed=13))
    assert np.array_equal(stepped, manual)


def test_lossy_step_dead_links_is_independent_sgd():
    n, d = 3, 2
    rel = uniform_rel(n, 0.0)
    w = uniform_weights(n)
    objectives = make_quadratic_objectives(n, d, seed=5)
    x = initial_parameters(n, d, RandomStream(seed=1), mode="spread")
    got = lossy_sgd_step(x, objectives, w, rel, 0.05, t=0,
                         stream=RandomStream(seed=2))
    grads = local_gradients(objectives, x, 0, RandomStream(seed=2))
    assert np.array_equal(got, x - 0.05 * grads)


def test_batched_single_trial_matches_sequential():
    n, d = 5, 7
    rel = uniform_rel(n, 0.45)
    w = uniform_weights(n)
    x = RandomStream(seed=6).normals("probe", 0, 0, 0, 0, n * d).reshape(n, d)
    seq = consensus_step(x, w, rel, t=12, stream=RandomStream(seed=31))
    batched = masked_mix_batch(x, w, rel, t=12, stream=RandomStream(seed=31),
                               trials=1)
    assert np.array_equal(batched[0], seq)


def test_batched_mean_matches_effective_mean():
    n, d, trials = 3, 1, 40000
    rel = uniform_rel(n, 0.5)
    w = uniform_weights(n)
    x = np.array([[1.0], [0.0], [-1.0]])
    samples = masked_mix_batch(x, w, rel, t=0, stream=RandomStream(seed=17),
                               trials=trials)
    mean_hat = samples.mean(axis=0)[:, 0]
    se = samples[:, :, 0].std(axis=0, ddof=1) / np.sqrt(trials)
    expected = effective_mean(w, rel) @ x[:, 0]
    assert np.all(np.abs(mean_hat - expected) <= 3 * se + 1e-12)


def test_batched_quadratic_form_matches_second_moment():
    # E||W x||^2 equals x' M x with M the exact second moment.
    n, d, trials = 3, 1, 60000
    rel = uniform_rel(n, 0.5)
    w = uniform_weights(n)
    x = np.array([[1.0], [0.0], [-1.0]])
    samples = masked_mix_batch(x, w, rel, t=0, stream=RandomStream(seed=23),
                               trials=trials)
    sq = np.sum(samples[:, :, 0] ** 2, axis=1)
    m = effective_second_moment(w, rel)
    expected = float(x[:, 0] @ m @ x[:, 0])
    se = sq.std(ddof=1) / np.sqrt(trials)
    assert abs(sq.mean() - expected) <= 3 * se


def test_consensus_trajectories_shape_and_decay():
    n, d = 6, 2
    rel = uniform_rel(n, 0.7)
    w = uniform_weights(n)
    x0 = initial_parameters(n, d, RandomStream(seed=3), mode="spread")
    out = consensus_trajectories(x0, w, rel, steps=30, trials=64,
                                 stream=RandomStream(seed=41))
    assert out.shape == (64, 31)
    disp0 = np.sum((x0 - x0.mean(axis=0)) ** 2)
    assert np.allclose(out[:, 0], disp0)
    assert out[:, -1].mean() < 0.05 * disp0


def test_reliable_step_averages_exactly():
    n, d = 4, 3
    layout = generate_layout(n, seed=2)
    rel = reliability_from_layout(layout, k=0.7, r=0.8)
    graph = full_graph(n)
    w = uniform_weights(n)
    objectives = make_quadratic_objectives(n, d, seed=7)
    x = initial_parameters(n, d, RandomStream(seed=4), mode="spread")
    new_x, rounds = reliable_sgd_step(x, objectives, w, graph, rel, 0.1, 0,
                                      RandomStream(seed=19))
    grads = local_gradients(objectives, x, 0, RandomStream(seed=19))
    half = x - 0.1 * grads
    assert np.allclose(new_x, np.tile(half.mean(axis=0), (n, 1)), atol=1e-12)
    assert rounds >= 1


def test_reliable_step_rejects_off_graph_weights():
    n = 4
    adj = np.zeros((n, n), dtype=bool)
    adj[0, 1] = adj[1, 0] = True
    adj[1, 2] = adj[2, 1] = True
    adj[2, 3] = adj[3, 2] = True
    graph = AdjacencyGraph(adj)
    rel = uniform_rel(n, 0.9)
    w = uniform_weights(n)  # positive weight on (0, 3), not an edge
    objectives = make_quadratic_objectives(n, 2, seed=1)
    x = np.zeros((n, 2))
    with pytest.raises(ArgumentError):
        reliable_sgd_step(x, objectives, w, graph, rel, 0.1, 0,
                          RandomStream(seed=0))


def test_run_experiment_records_initial_row():
    n, d = 4, 2
    rel = uniform_rel(n, 0.8)
    w = uniform_weights(n)
    objectives = make_quadratic_objectives(n, d, seed=3)
    x0 = initial_parameters(n, d, RandomStream(seed=5), mode="same")
    result = run_experiment("soft-udp", x0, objectives, w, rel, 10,
                            RandomStream(seed=5), gamma=0.05)
    m = result.metrics
    assert m.iter[0] == 0 and m.comm_rounds_cum[0] == 0
    assert m.iter[-1] == 10 and m.comm_rounds_cum[-1] == 10
    assert m.dispersion[0] == 0.0  # same init
    assert len(m.iter) == 11
    assert m.loss_mean_model[0] == pytest.approx(
        global_loss(objectives, x0.mean(axis=0)))
    assert result.final_iteration == 10


def test_run_experiment_soft_udp_converges_on_quadratic():
    n, d = 6, 3
    rel = uniform_rel(n, 0.7)
    w = uniform_weights(n)
    objectives = make_quadratic_objectives(n, d, seed=9, noise_std=0.0,
                                           optimum_spread=0.2)
    x0 = initial_parameters(n, d, RandomStream(seed=6), mode="spread")
    result = run_experiment("soft-udp", x0, objectives, w, rel, 1500,
                            RandomStream(seed=7), gamma=0.02)
    x_star = quadratic_optimum(objectives)
    f_star = global_loss(objectives, x_star)
    # heterogeneity plus random mixing leaves a small gamma-dependent floor
    assert result.metrics.loss_mean_model[-1] <= f_star + 1e-3
    assert result.metrics.dispersion[-1] < 1e-2


def test_run_experiment_consensus_only_nan_loss():
    n, d = 4, 2
    rel = uniform_rel(n, 0.9)
    w = uniform_weights(n)
    x0 = initial_parameters(n, d, RandomStream(seed=2), mode="spread")
    result = run_experiment("consensus-only", x0, None, w, rel, 5,
                            RandomStream(seed=3))
    m = result.metrics
    assert all(np.isnan(v) for v in m.loss_mean_model)
    assert all(np.isnan(v) for v in m.grad_norm_sq)
    assert m.dispersion[-1] < m.dispersion[0]


def test_run_experiment_tcp_baseline_rounds_exceed_iterations():
    n, d = 5, 2
    layout = generate_layout(n, seed=8)
    rel = reliability_from_layout(layout, k=0.5, r=0.5)
    graph = full_graph(n)
    w = uniform_weights(n)
    objectives = make_quadratic_objectives(n, d, seed=11)
    x0 = initial_parameters(n, d, RandomStream(seed=1), mode="same")
    result = run_experiment("tcp-baseline", x0, objectives, w, rel, 20,
                            RandomStream(seed=29), gamma=0.05, graph=graph)
    assert result.metrics.comm_rounds_cum[-1] >= 20
    # imperfect links make at least one retransmission overwhelmingly likely
    assert result.metrics.comm_rounds_cum[-1] > 20


def test_run_experiment_tcp_requires_connected_graph():
    n = 4
    adj = np.zeros((n, n), dtype=bool)
    adj[0, 1] = adj[1, 0] = True  # nodes 2, 3 isolated
    graph = AdjacencyGraph(adj)
    rel = uniform_rel(n, 0.9)
    w = uniform_weights(n)
    objectives = make_quadratic_objectives(n, 2, seed=1)
    x0 = np.zeros((n, 2))
    with pytest.raises(ConfigurationError):
        run_experiment("tcp-baseline", x0, objectives, w, rel, 3,
                       RandomStream(seed=0), gamma=0.1, graph=graph)


def test_run_experiment_stop_loss():
    n, d = 4, 2
    rel = uniform_rel(n, 1.0)
    w = uniform_weights(n)
    objectives = make_quadratic_objectives(n, d, seed=13, noise_std=0.0)
    x0 = initial_parameters(n, d, RandomStream(seed=3), mode="spread")
    x_star = quadratic_optimum(objectives)
    threshold = 1.01 * global_loss(objectives, x_star)
    result = run_experiment("soft-udp", x0, objectives, w, rel, 5000,
                            RandomStream(seed=4), gamma=0.05,
                            stop_loss=threshold)
    assert result.final_iteration < 5000
    assert result.metrics.loss_mean_model[-1] <= threshold


def test_run_experiment_deterministic():
    n, d = 5, 3
    rel = uniform_rel(n, 0.6)
    w = uniform_weights(n)
    objectives = make_quadratic_objectives(n, d, seed=17, noise_std=0.3)
    x0 = initial_parameters(n, d, RandomStream(seed=23), mode="spread")
    runs = [run_experiment("soft-udp", x0, objectives, w, rel, 50,
                           RandomStream(seed=99), gamma=0.04)
            for _ in range(2)]
    assert np.array_equal(runs[0].final_params, runs[1].final_params)
    assert runs[0].metrics.loss_mean_model == runs[1].metrics.loss_mean_model
    assert runs[0].metrics.dispersion == runs[1].metrics.dispersion


def test_run_experiment_rejects_unknown_protocol():
    n = 3
    rel = uniform_rel(n, 0.5)
    w = uniform_weights(n)
    with pytest.raises(ConfigurationError):
        run_experiment("udp", np.zeros((n, 2)), None, w, rel, 1,
                       RandomStream(seed=0))


def test_packet_granularity_shares_fate():
    n, d = 3, 10
    rel = uniform_rel(n, 0.5)
    w = uniform_weights(n)
    x = RandomStream(seed=12).normals("probe", 0, 0, 0, 0, n * d).reshape(n, d)
    got = consensus_step(x, w, rel, t=2, stream=RandomStream(seed=44),
                         granularity="packet", packet_size=5)
    masks = sample_masks(rel, d, t=2, stream=RandomStream(seed=44),
                         granularity="packet", packet_size=5)
    expected = x.copy()
    for dst in range(n):
        for src in range(n):
            if src == dst:
                continue
            expected[dst] += (w.weights[dst, src] * masks.arrived[dst, src]
                              * (x[src] - x[dst]))
    assert np.array_equal(got, expected)


def test_initial_parameters_modes():
    stream = RandomStream(seed=77)
    same = initial_parameters(4, 3, stream, mode="same")
    assert np.array_equal(same[0], same[1])
    spread = initial_parameters(4, 3, stream, mode="spread")
    assert not np.array_equal(spread[0], spread[1])
    with pytest.raises(ConfigurationError):
        initial_parameters(4, 3, stream, mode="zeros")
    # same stream, same addresses: reproducible
    again = initial_parameters(4, 3, RandomStream(seed=77), mode="same")
    assert np.array_equal(same, again)


def test_local_gradients_noise_free_matches_exact():
    n, d = 3, 4
    objectives = make_quadratic_objectives(n, d, seed=31, noise_std=0.0)
    x = initial_parameters(n, d, RandomStream(seed=15), mode="spread")
    grads = local_gradients(objectives, x, 0, RandomStream(seed=16))
    for i, obj in enumerate(objectives):
        assert np.allclose(grads[i], obj.gradient(x[i]), atol=1e-12)
