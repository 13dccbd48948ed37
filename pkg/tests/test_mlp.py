import math

import numpy as np
import pytest

from wheelquad.mlp import (
    ActorCritic,
    Mlp,
    elu,
    elu_grad,
    gaussian_entropy,
    gaussian_log_prob,
    orthogonal,
)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-30)
    return np.linalg.norm(a - b) / denom


def loss_of(net, x, target):
    out, _ = net.forward(x)
    return 0.5 * float(np.sum((out - target) ** 2))


def fd_block_grads(net, x, target, h=1e-5):
    """Central finite differences over every parameter block."""
    grads = []
    for block in net.param_blocks():
        g = np.zeros_like(block)
        flat = block.ravel()
        gf = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_of(net, x, target)
            flat[i] = orig - h
            fm = loss_of(net, x, target)
            flat[i] = orig
            gf[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


# -- activations -----------------------------------------------------------


def test_elu_values():
    assert elu(np.array([2.0]))[0] == 2.0
    assert elu(np.array([-1.0]))[0] == pytest.approx(math.expm1(-1.0))
    assert elu(np.array([0.0]))[0] == 0.0


def test_elu_derivative_continuous_at_zero():
    assert elu_grad(np.array([0.0]))[0] == 1.0
    assert elu_grad(np.array([1e-12]))[0] == pytest.approx(1.0, abs=1e-9)
    assert elu_grad(np.array([-1e-12]))[0] == pytest.approx(1.0, abs=1e-9)


def test_orthogonal_init_is_orthogonal():
    rng = np.random.default_rng(0)
    w = orthogonal(rng, (8, 8), gain=1.0)
    assert np.allclose(w @ w.T, np.eye(8), atol=1e-10)
    tall = orthogonal(rng, (12, 4), gain=1.0)
    assert np.allclose(tall.T @ tall, np.eye(4), atol=1e-10)


# -- forward ---------------------------------------------------------------


def test_forward_zero_params_gives_zero_output():
    net = Mlp([5, 4, 3], np.random.default_rng(1))
    net.set_param_blocks([np.zeros_like(b) for b in net.param_blocks()])
    out, _ = net.forward(np.ones(5))
    assert np.all(out == 0.0)


def test_forward_identity_linear_layer():
    net = Mlp([3, 3], np.random.default_rng(2))
    net.set_param_blocks([np.eye(3), np.zeros(3)])
    x = np.array([0.3, -1.2, 4.0])
    out, _ = net.forward(x)
    assert np.allclose(out, x, atol=1e-15)


def test_forward_matches_naive_oracle():
    rng = np.random.default_rng(3)
    net = Mlp([6, 5, 4, 2], rng)
    x = rng.normal(size=(7, 6))
    out, _ = net.forward(x)

    def naive(v):
        h = v
        for k, (w, b) in enumerate(zip(net.weights, net.biases)):
            z = h @ w + b
            h = z if k == len(net.weights) - 1 else np.where(z > 0, z, np.expm1(z))
        return h

    for i in range(7):
        assert np.allclose(out[i], naive(x[i]), atol=1e-12)


def test_forward_rejects_wrong_width():
    net = Mlp([6, 4], np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.forward(np.zeros(5))


def test_forward_deterministic_and_pure():
    net = Mlp([4, 8, 2], np.random.default_rng(9))
    x = np.linspace(-1, 1, 4)
    a, _ = net.forward(x)
    b, _ = net.forward(x)
    assert np.array_equal(a, b)


# -- backward --------------------------------------------------------------


def test_backward_linear_net_closed_form():
    net = Mlp([3, 2], np.random.default_rng(4))
    x = np.array([[1.0, 2.0, -1.0]])
    target = np.array([[0.5, -0.5]])
    out, cache = net.forward(x)
    grads, dx = net.backward(cache, out - target)
    # quadratic loss through one linear layer: dW = x^T (out - t), db = out - t
    assert np.allclose(grads[0][0], x.T @ (out - target), atol=1e-12)
    assert np.allclose(grads[0][1], (out - target)[0], atol=1e-12)
    assert np.allclose(dx, (out - target) @ net.weights[0].T, atol=1e-12)


def test_backward_matches_finite_differences():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        net = Mlp([7, 16, 8, 3], rng)
        x = rng.normal(size=(4, 7))
        target = rng.normal(size=(4, 3))
        out, cache = net.forward(x)
        analytic, _ = net.backward(cache, out - target)
        numeric = fd_block_grads(net, x, target)
        for (dw, db), g_num, w_idx in zip(analytic, zip(numeric[::2], numeric[1::2]),
                                          range(len(analytic))):
            assert rel_err(dw, g_num[0]) < 1e-4, f"W{w_idx} seed {seed}"
            assert rel_err(db, g_num[1]) < 1e-4, f"b{w_idx} seed {seed}"


def test_backward_input_gradient_matches_fd():
    rng = np.random.default_rng(12)
    net = Mlp([5, 6, 2], rng)
    x = rng.normal(size=5)
    target = rng.normal(size=2)
    out, cache = net.forward(x)
    _, dx = net.backward(cache, out - target)
    h = 1e-6
    for i in range(5):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fp = 0.5 * np.sum((net.forward(xp)[0] - target) ** 2)
        fm = 0.5 * np.sum((net.forward(xm)[0] - target) ** 2)
        assert dx[i] == pytest.approx((fp - fm) / (2 * h), rel=1e-5, abs=1e-8)


# -- Gaussian head ---------------------------------------------------------


def test_log_prob_of_mean_with_unit_std():
    mean = np.zeros(16)
    lp = gaussian_log_prob(mean, mean, np.zeros(16))
    assert lp == pytest.approx(-(16 / 2) * math.log(2 * math.pi), abs=1e-12)


def test_entropy_closed_form():
    log_std = np.full(4, 0.3)
    expected = 4 * (0.3 + 0.5 * (1.0 + math.log(2 * math.pi)))
    assert gaussian_entropy(log_std) == pytest.approx(expected, abs=1e-12)


def test_act_collapses_to_mean_at_tiny_std():
    ac = ActorCritic(actor_in=6, critic_in=8, action_dim=3, hidden=(8,), seed=0)
    ac.log_std = np.full(3, -700.0)
    obs = np.ones(6)
    action, _, mean = ac.act(obs, np.random.default_rng(0))
    assert np.array_equal(action, mean)


def test_act_empirical_std_matches_log_std():
    ac = ActorCritic(actor_in=4, critic_in=5, action_dim=2, hidden=(8,), seed=1)
    ac.log_std = np.array([math.log(0.5), math.log(2.0)])
    rng = np.random.default_rng(7)
    obs = np.tile(np.ones(4), (100_000, 1))
    actions, _, mean = ac.act(obs, rng)
    emp = (actions - mean).std(axis=0)
    assert emp[0] == pytest.approx(0.5, rel=0.02)
    assert emp[1] == pytest.approx(2.0, rel=0.02)


def test_actor_critic_widths():
    ac = ActorCritic()
    assert ac.actor.in_dim == 57
    assert ac.actor.out_dim == 16
    assert ac.critic.in_dim == 244
    assert ac.critic.out_dim == 1
    out = ac.evaluate(np.zeros((3, 57)), np.zeros((3, 244)), np.zeros((3, 16)))
    assert out["values"].shape == (3,)
    assert out["log_prob"].shape == (3,)


def test_policy_gradient_path_matches_fd():
    # composite PPO-style scalar: surrogate + value error - entropy, checked
    # against finite differences through every parameter block
    ac = ActorCritic(actor_in=5, critic_in=7, action_dim=3, hidden=(8, 4), seed=3)
    rng = np.random.default_rng(0)
    obs_a = rng.normal(size=(6, 5))
    obs_c = rng.normal(size=(6, 7))
    actions = rng.normal(size=(6, 3))
    adv = rng.normal(size=6)
    ret = rng.normal(size=6)

    def scalar_loss():
        ev = ac.evaluate(obs_a, obs_c, actions)
        return (-np.mean(ev["log_prob"] * adv)
                + np.mean((ev["values"] - ret) ** 2)
                - 0.01 * ev["entropy"])

    ev = ac.evaluate(obs_a, obs_c, actions)
    std = np.exp(ac.log_std)
    z = (actions - ev["mean"]) / std
    n = 6.0
    # d(-mean(logp*adv))/dmean and /dlog_std plus the -0.01 entropy slope,
    # d(value mse)/dvalue
    dmean = -(adv[:, None] * z / std) / n
    dlogstd = -np.sum(adv[:, None] * (z * z - 1.0), axis=0) / n - 0.01
    dvalues = 2.0 * (ev["values"] - ret) / n
    a_grads, _ = ac.actor.backward(ev["actor_cache"], dmean)
    c_grads, _ = ac.critic.backward(ev["critic_cache"], dvalues[:, None])

    analytic = [g for pair in a_grads for g in pair] \
        + [g for pair in c_grads for g in pair] + [dlogstd]
    h = 1e-5
    blocks = ac.param_blocks()
    for bi, block in enumerate(blocks):
        flat = block.ravel()
        g_num = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = scalar_loss()
            flat[i] = orig - h
            fm = scalar_loss()
            flat[i] = orig
            g_num[i] = (fp - fm) / (2 * h)
        assert rel_err(analytic[bi].ravel(), g_num) < 1e-4, f"block {bi}"


# -- persistence -----------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    ac = ActorCritic(actor_in=9, critic_in=11, action_dim=4, hidden=(8, 4), seed=5)
    ac.log_std = np.array([0.1, -0.2, 0.3, 0.0])
    path = tmp_path / "net.wqck"
    ac.save(path, meta={"note": "test"})
    loaded = ActorCritic.load(path)
    assert np.array_equal(loaded.params_flat(), ac.params_flat())
    assert loaded.actor.sizes == ac.actor.sizes
    assert loaded.critic.sizes == ac.critic.sizes


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.wqck"
    p.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ValueError):
        ActorCritic.load(p)


def test_init_deterministic_by_seed():
    a = ActorCritic(actor_in=6, critic_in=8, action_dim=2, hidden=(8,), seed=7)
    b = ActorCritic(actor_in=6, critic_in=8, action_dim=2, hidden=(8,), seed=7)
    assert np.array_equal(a.params_flat(), b.params_flat())
    c = ActorCritic(actor_in=6, critic_in=8, action_dim=2, hidden=(8,), seed=8)
    assert not np.array_equal(a.params_flat(), c.params_flat())


def test_params_flat_round_trip():
    ac = ActorCritic(actor_in=5, critic_in=6, action_dim=2, hidden=(4,), seed=2)
    flat = ac.params_flat()
    ac2 = ActorCritic(actor_in=5, critic_in=6, action_dim=2, hidden=(4,), seed=9)
    ac2.set_params_flat(flat)
    assert np.array_equal(ac2.params_flat(), flat)
    with pytest.raises(ValueError):
        ac2.set_params_flat(flat[:-1])
