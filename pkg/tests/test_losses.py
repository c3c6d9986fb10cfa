import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

import oracles
from monotrans.decoder import IterationState, Predictions
from monotrans.losses import (
    LossConfig, combine_iterations, depth_gradients, geometric_loss, iteration_weights,
    normals_from_depth, semantic_loss, total_loss,
)


def rand(*shape, seed=0):
    return torch.rand(*shape, dtype=torch.float64, generator=torch.Generator().manual_seed(seed))


def test_defaults():
    cfg = LossConfig()
    assert (cfg.w_d, cfg.w_g, cfg.w_n, cfg.alpha, cfg.beta, cfg.iteration_ramp) == (1, 1, 1, 1, 0.1, True)
    with pytest.raises(ValueError):
        LossConfig(beta=-0.1)


def test_gradients_constant_and_ramp():
    gx, gy = depth_gradients(torch.full((5, 5), 0.4))
    assert torch.count_nonzero(gx) == 0 and torch.count_nonzero(gy) == 0
    ramp = torch.arange(5.0).repeat(5, 1)
    gx, gy = depth_gradients(ramp)
    assert torch.all(gx[:, :-1] == 1) and torch.all(gx[:, -1] == 0)
    assert torch.count_nonzero(gy) == 0


def test_gradients_match_oracle():
    d = rand(4, 4)
    gx, gy = depth_gradients(d)
    ox, oy = oracles.forward_diff(d.numpy())
    np.testing.assert_allclose(gx.numpy(), ox, atol=1e-12)
    np.testing.assert_allclose(gy.numpy(), oy, atol=1e-12)


def test_gradients_reject_tiny_maps():
    with pytest.raises(ValueError):
        depth_gradients(torch.zeros(1, 4))


def test_normals():
    n = normals_from_depth(torch.full((4, 4), 0.7))
    assert torch.equal(n, torch.tensor([0.0, 0.0, 1.0])[:, None, None].expand(3, 4, 4))
    ramp = torch.arange(4.0, dtype=torch.float64).repeat(4, 1)
    n = normals_from_depth(ramp)
    expected = torch.tensor([-1.0, 0.0, 1.0], dtype=torch.float64) / math.sqrt(2)
    torch.testing.assert_close(n[:, :, :-1], expected[:, None, None].expand(3, 4, 3))
    n = normals_from_depth(5 * rand(6, 6, seed=3))
    torch.testing.assert_close(n.norm(dim=0), torch.ones(6, 6, dtype=torch.float64), atol=1e-6, rtol=0)
    np.testing.assert_allclose(n.numpy(), oracles.normals(5 * rand(6, 6, seed=3).numpy()), atol=1e-12)


def test_geometric_loss_basics():
    t = rand(6, 6)
    assert float(geometric_loss(t, t.clone())) == 0.0
    got = geometric_loss(t + 0.3, t, LossConfig(w_d=2.0))
    assert abs(float(got) - 0.6) < 1e-12
    with pytest.raises(ValueError):
        geometric_loss(torch.zeros(4, 4), torch.zeros(4, 5))


@pytest.mark.parametrize("seed", range(5))
def test_geometric_loss_matches_oracle(seed):
    d, t = rand(4, 4, seed=seed), rand(4, 4, seed=seed + 100)
    cfg = LossConfig(w_d=0.7, w_g=1.3, w_n=0.5)
    ref = oracles.geometric_loss(d.numpy(), t.numpy(), 0.7, 1.3, 0.5)
    assert abs(float(geometric_loss(d, t, cfg)) - ref) < 1e-12


def test_geometric_loss_batch_is_per_image_mean():
    d, t = rand(3, 5, 5, seed=1), rand(3, 5, 5, seed=2)
    per = [float(geometric_loss(d[i], t[i])) for i in range(3)]
    assert abs(float(geometric_loss(d, t)) - sum(per) / 3) < 1e-12


def test_valid_mask_all_true_is_identity():
    d, t = rand(2, 5, 5, seed=1), rand(2, 5, 5, seed=2)
    full = geometric_loss(d, t, valid=torch.ones(2, 5, 5, dtype=torch.bool))
    assert abs(float(full) - float(geometric_loss(d, t))) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_geometric_loss_symmetric_and_nonnegative(seed):
    d, t = rand(5, 5, seed=seed), rand(5, 5, seed=seed + 1)
    a, b = float(geometric_loss(d, t)), float(geometric_loss(t, d))
    assert a >= 0 and abs(a - b) < 1e-12


def test_semantic_loss():
    k, h, w = 2, 3, 3
    target = torch.randint(0, 2, (h, w), generator=torch.Generator().manual_seed(0))
    assert abs(float(semantic_loss(torch.zeros(k, h, w), target)) - math.log(2)) < 1e-6
    confident = torch.where(torch.nn.functional.one_hot(target, 2).permute(2, 0, 1).bool(),
                            torch.tensor(1e4), torch.tensor(-1e4))
    assert float(semantic_loss(confident, target)) == 0.0
    with pytest.raises(ValueError):
        semantic_loss(torch.zeros(2, 2, 2), torch.full((2, 2), 2))


@pytest.mark.parametrize("seed", range(5))
def test_semantic_loss_matches_oracle(seed):
    logits = 4 * rand(2, 2, 2, seed=seed) - 2
    target = torch.randint(0, 2, (2, 2), generator=torch.Generator().manual_seed(seed))
    ref = oracles.cross_entropy(logits.numpy(), target.numpy())
    assert abs(float(semantic_loss(logits, target)) - ref) < 1e-12


def central_fd(fn, x, eps=1e-6):
    grad = torch.zeros_like(x)
    flat, gflat = x.view(-1), grad.view(-1)
    for i in range(flat.numel()):
        old = float(flat[i])
        flat[i] = old + eps
        hi = float(fn(x))
        flat[i] = old - eps
        lo = float(fn(x))
        flat[i] = old
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def rel_err(a, b):
    return float((a - b).norm() / max(float(b.norm()), 1e-12))


@pytest.mark.parametrize("weights", [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)])
def test_geometric_loss_gradient_vs_finite_difference(weights):
    cfg = LossConfig(*weights)
    # well-separated values keep every |.| term away from its kink
    d = rand(4, 4, seed=7) * 3
    t = rand(4, 4, seed=8) * 3 + 0.05
    x = d.clone().requires_grad_(True)
    geometric_loss(x, t, cfg).backward()
    fd = central_fd(lambda v: geometric_loss(v, t, cfg), d.clone())
    assert rel_err(x.grad, fd) < 1e-4


def test_semantic_loss_gradient_vs_finite_difference():
    logits = rand(2, 4, 4, seed=3) * 2
    target = torch.randint(0, 2, (4, 4), generator=torch.Generator().manual_seed(3))
    x = logits.clone().requires_grad_(True)
    semantic_loss(x, target).backward()
    fd = central_fd(lambda v: semantic_loss(v, target), logits.clone())
    assert rel_err(x.grad, fd) < 1e-4


def test_rms_term_has_zero_gradient_at_match():
    t = rand(4, 4)
    x = t.clone().requires_grad_(True)
    geometric_loss(x, t).backward()
    assert torch.isfinite(x.grad).all()
    assert torch.count_nonzero(x.grad) == 0


def test_iteration_weights_and_ramp():
    assert iteration_weights(3) == [1 / 3, 2 / 3, 1.0]
    assert iteration_weights(3, ramp=False) == [1.0, 1.0, 1.0]
    L = torch.tensor(0.42, dtype=torch.float64)
    assert abs(float(combine_iterations([L, L, L])) - 2 * 0.42) < 1e-12
    assert float(combine_iterations([L])) == 0.42


@settings(max_examples=40, deadline=None)
@given(vals=st.lists(st.floats(0, 10), min_size=1, max_size=5), idx=st.integers(0, 4),
       bump=st.floats(0, 5))
def test_total_is_monotone_in_each_iteration(vals, idx, bump):
    idx %= len(vals)
    base = combine_iterations([torch.tensor(v, dtype=torch.float64) for v in vals])
    vals2 = list(vals)
    vals2[idx] += bump
    more = combine_iterations([torch.tensor(v, dtype=torch.float64) for v in vals2])
    assert float(more) >= float(base)


class StubHeads:
    """Returns a fixed prediction per (iteration, level) looked up from the state."""

    def __call__(self, state, size, level=0):
        return Predictions(state.depth[level], state.seg[level])


def stub_states(n, depth_fn, seg_fn):
    return [IterationState([depth_fn(i, l) for l in range(4)], [seg_fn(i, l) for l in range(4)], i + 1)
            for i in range(n)]


def test_total_loss_perfect_predictions_is_zero():
    depth = rand(1, 6, 6)
    seg = torch.randint(0, 2, (1, 6, 6), generator=torch.Generator().manual_seed(0))
    logits = torch.where(torch.nn.functional.one_hot(seg, 2).permute(0, 3, 1, 2).bool(),
                         torch.tensor(1e4, dtype=torch.float64), torch.tensor(-1e4, dtype=torch.float64))
    states = stub_states(3, lambda i, l: depth.clone(), lambda i, l: logits)
    out = total_loss(states, StubHeads(), depth, seg)
    assert float(out.total) == 0.0


def test_total_loss_structure():
    target = rand(1, 6, 6, seed=1)
    seg = torch.randint(0, 2, (1, 6, 6), generator=torch.Generator().manual_seed(1))
    logits = lambda i, l: torch.zeros(1, 2, 6, 6, dtype=torch.float64)  # noqa: E731
    # identical per-iteration losses -> total = 2L for N=3
    same = stub_states(3, lambda i, l: rand(1, 6, 6, seed=50 + l), logits)
    out = total_loss(same, StubHeads(), target, seg)
    L = out.per_iteration[0]
    assert all(abs(p - L) < 1e-12 for p in out.per_iteration)
    assert abs(float(out.total) - 2 * L) < 1e-12
    # N=1: mean over levels of alpha*geo + beta*sem
    one = stub_states(1, lambda i, l: rand(1, 6, 6, seed=50 + l), logits)
    cfg = LossConfig(alpha=0.5, beta=2.0)
    expected = sum(0.5 * float(geometric_loss(rand(1, 6, 6, seed=50 + l), target)) + 2.0 * math.log(2)
                   for l in range(4)) / 4
    assert abs(float(total_loss(one, StubHeads(), target, seg, cfg).total) - expected) < 1e-12


def test_total_loss_with_real_heads_backprops(tiny_model, tiny_samples):
    from monotrans.data import collate
    rgb, depth, seg = collate(tiny_samples)
    out = tiny_model.run(rgb)
    loss = total_loss(out.states, tiny_model.heads, depth, seg)
    loss.total.backward()
    assert len(loss.per_iteration) == 3
    assert math.isfinite(float(loss.total.detach()))
    assert all(p.grad is not None for p in tiny_model.decoder.parameters() if p.requires_grad)
