import numpy as np
import pytest

from uavslice.nn import MLP, Adam, clip_by_global_norm, finite_difference_check, load_checkpoint, save_checkpoint, \
    soft_update


def test_zero_net_outputs_activation_of_zero():
    net = MLP((3, 4, 2), head="tanh", head_scale=2.0)
    for p in net.params:
        p[...] = 0.0
    assert np.array_equal(net(np.ones(3)), np.zeros(2))


def test_identity_layer():
    net = MLP((3, 3))
    net.params[0][...] = np.eye(3)
    net.params[1][...] = 0.0
    x = np.array([0.5, -1.0, 2.0])
    assert np.array_equal(net(x), x)


def test_forward_deterministic_and_batched(rng):
    net = MLP((5, 8, 8, 2), rng)
    x = rng.standard_normal((7, 5))
    assert np.array_equal(net(x), net(x))
    assert np.allclose(net(x)[3], net(x[3]))
    with pytest.raises(ValueError):
        net.forward(np.zeros(4))


def test_backward_linear_chain_rule():
    net = MLP((1, 1))
    net.params[0][...] = 3.0
    net.params[1][...] = 0.0
    _, cache = net.forward(np.array([2.0]))
    grads, dx = net.backward(cache, np.array([5.0]))
    assert grads[0].item() == 10.0 and grads[1].item() == 5.0 and dx.item() == 15.0


def test_backward_zero_gradient(rng):
    net = MLP((4, 6, 3), rng)
    _, cache = net.forward(rng.standard_normal((2, 4)))
    grads, _ = net.backward(cache, np.zeros((2, 3)))
    assert all(np.all(g == 0) for g in grads)
    with pytest.raises(ValueError):
        net.backward(cache, np.zeros((2, 2)))


def test_gradcheck_linear_exact(rng):
    rep = finite_difference_check(MLP((4, 3), rng), tolerance=1e-6)
    assert rep.passed and rep.n_skipped == 0


@pytest.mark.parametrize("head", ["linear", "tanh"])
def test_gradcheck_default_mlp(rng, head):
    net = MLP((36, 128, 128, 3), rng, head=head)
    rep = finite_difference_check(net, tolerance=1e-4, max_coords=1500)
    assert rep.passed, rep


def test_gradcheck_catches_corrupted_backward(rng):
    net = MLP((4, 6, 2), rng)

    def broken(cache, dout):
        grads, dx = net.backward(cache, dout)
        grads[0] = grads[0] * 1.01
        return grads, dx

    assert not finite_difference_check(net, backward=broken).passed


def test_gradcheck_input_gradient(rng):
    net = MLP((3, 5, 1), rng)
    x = rng.standard_normal(3)
    _, cache = net.forward(x)
    _, dx = net.backward(cache, np.ones(1))
    eps = 1e-6
    numeric = [(net(x + eps * e)[0] - net(x - eps * e)[0]) / (2 * eps) for e in np.eye(3)]
    assert np.allclose(dx, numeric, atol=1e-7)


def test_adam_zero_gradient():
    p = [np.array([1.0, -2.0])]
    opt = Adam(p, lr=0.1)
    opt.step(p, [np.zeros(2)])
    assert np.array_equal(p[0], [1.0, -2.0]) and opt.t == 1


def test_adam_first_step():
    p = [np.array([0.0])]
    Adam(p, lr=1e-3).step(p, [np.array([4.0])])
    assert p[0][0] == pytest.approx(-1e-3, rel=1e-6)


def test_adam_descends_quadratic():
    p = [np.array([3.0, -4.0])]
    opt = Adam(p, lr=0.05)
    losses = []
    for _ in range(100):
        losses.append(float(p[0] @ p[0]))
        opt.step(p, [2.0 * p[0]])
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_adam_rejects_non_finite():
    p = [np.zeros(2)]
    with pytest.raises(FloatingPointError):
        Adam(p).step(p, [np.array([np.inf, 0.0])])


def test_soft_update_limits(rng):
    online = MLP((2, 3, 1), rng)
    target = MLP((2, 3, 1), np.random.default_rng(99))
    before = [p.copy() for p in target.params]
    soft_update(target, online, 0.0)
    assert all(np.array_equal(a, b) for a, b in zip(before, target.params))
    soft_update(target, online, 1.0)
    assert all(np.array_equal(a, b) for a, b in zip(online.params, target.params))


def test_soft_update_formula_and_contraction(rng):
    online = MLP((2, 3, 1), rng)
    target = online.copy()
    for p in online.params:
        p[...] = 1.0
    for p in target.params:
        p[...] = 0.0
    soft_update(target, online, 0.01)
    assert all(np.allclose(p, 0.01) for p in target.params)
    gaps = []
    for _ in range(20):
        gaps.append(sum(np.abs(t - o).sum() for t, o in zip(target.params, online.params)))
        soft_update(target, online, 0.2)
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    with pytest.raises(ValueError):
        soft_update(MLP((2, 2)), MLP((2, 3)), 0.5)


def test_clip_by_global_norm():
    g = [np.array([3.0]), np.array([4.0])]
    assert clip_by_global_norm(g, 1.0) == 5.0
    assert np.sqrt(g[0] ** 2 + g[1] ** 2).item() == pytest.approx(1.0)


def test_checkpoint_roundtrip(tmp_path, rng):
    net = MLP((3, 4, 2), rng)
    save_checkpoint(tmp_path / "c.npz", net.state_dict("n."), {"note": "x"})
    arrays, header = load_checkpoint(tmp_path / "c.npz")
    other = MLP((3, 4, 2), np.random.default_rng(1))
    other.load_state_dict(arrays, "n.")
    assert all(np.array_equal(a, b) for a, b in zip(net.params, other.params))
    assert header["note"] == "x" and header["format_version"] == 1
    with pytest.raises(ValueError):
        MLP((3, 5, 2)).load_state_dict(arrays, "n.")
