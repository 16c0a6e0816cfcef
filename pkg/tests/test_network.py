import numpy as np
import pytest

from compstyle.network import SegNet, SegNetConfig, load_checkpoint, save_checkpoint
from compstyle.style import StyleNoiseScale, identity_params, sample_hook_state, styled_hook
from compstyle.tensor import Tensor, mse_loss

from gradcheck import numeric_grad, rel_error

CFG = SegNetConfig(base_width=8, depth=3, num_classes=2)


def rand_input(seed=0, n=2, size=16):
    rng = np.random.default_rng(seed)
    return rng.random((n, 1, size, size)).astype(np.float32)


def test_forward_shapes_and_softmax():
    net = SegNet(CFG, seed=1)
    x = Tensor(rand_input())
    logits = net.forward_seg(x)
    assert logits.shape == (2, 2, 16, 16)
    probs = logits.softmax(axis=1)
    np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-6)


def test_forward_deterministic():
    net = SegNet(CFG, seed=2)
    x = Tensor(rand_input(1))
    a = net.forward_seg(x)
    b = net.forward_seg(x)
    np.testing.assert_array_equal(a.data, b.data)


def test_rejects_indivisible_input():
    net = SegNet(CFG, seed=0)
    with pytest.raises(ValueError):
        net.forward_seg(Tensor(np.zeros((1, 1, 12, 12), dtype=np.float32)))


def test_capacity_ordering():
    small = SegNet(SegNetConfig(base_width=16), seed=0)
    big = SegNet(SegNetConfig(base_width=64), seed=0)
    assert big.param_count() > small.param_count()
    # counts are architecture constants, stable across construction seeds
    assert small.param_count() == SegNet(SegNetConfig(base_width=16), seed=9).param_count()


def test_seg_path_identical_without_aux_decoder():
    with_aux = SegNet(SegNetConfig(base_width=8, with_aux=True), seed=7)
    without = SegNet(SegNetConfig(base_width=8, with_aux=False), seed=7)
    x = Tensor(rand_input(3))
    a = with_aux.forward_seg(x)
    b = without.forward_seg(x)
    np.testing.assert_array_equal(a.data, b.data)


def test_aux_decoder_output_shape_and_range():
    net = SegNet(CFG, seed=4)
    x = Tensor(rand_input(4))
    recon = net.decode_aux(net.encode(x))
    assert recon.shape == x.shape
    assert recon.data.min() >= 0.0 and recon.data.max() <= 1.0


def test_aux_decoder_absent_when_disabled():
    net = SegNet(SegNetConfig(base_width=8, with_aux=False), seed=0)
    with pytest.raises(ValueError):
        net.decode_aux(net.encode(Tensor(rand_input())))


def test_identity_style_hooks_reproduce_plain_decode():
    net = SegNet(CFG, seed=5)
    x = Tensor(rand_input(5))
    latent = net.encode(x)
    plain = net.decode_aux(latent)

    captured = []

    def capture(f):
        captured.append(f)
        return f

    net.decode_aux(latent, hooks=[capture, capture])
    params = [identity_params(f) for f in captured]
    scales = [StyleNoiseScale.zero(f.shape[1]) for f in captured]
    styled = net.forward_style_decode(latent, params, scales)
    assert np.max(np.abs(styled.data - plain.data)) < 1e-3


def test_style_decode_deterministic():
    net = SegNet(CFG, seed=6)
    x = Tensor(rand_input(6))
    latent = net.encode(x)
    rng = np.random.default_rng(11)
    states = [sample_hook_state(2, ch, rng) for ch in net.hook_channels()]
    hooks = [lambda f, s=s: styled_hook(f, s) for s in states]
    a = net.decode_aux(latent, hooks=hooks)
    b = net.decode_aux(latent, hooks=hooks)
    np.testing.assert_array_equal(a.data, b.data)


def test_hook_channel_mismatch_rejected():
    from compstyle.style import StyleParams, apply_style

    net = SegNet(CFG, seed=0)
    latent = net.encode(Tensor(rand_input()))
    wrong = StyleParams(gamma_mix=Tensor(np.ones((2, 5))), beta_mix=Tensor(np.zeros((2, 5))))
    with pytest.raises(ValueError):
        net.forward_style_decode(latent, [wrong, wrong],
                                 [StyleNoiseScale.zero(5), StyleNoiseScale.zero(5)])


def test_style_decode_gradient_wrt_style_noise():
    # d mse(recon, x) / d eps_gamma against central differences (64-bit)
    net = SegNet(SegNetConfig(base_width=4, depth=3), seed=8)
    for p in net.params.values():
        p.data = p.data.astype(np.float64)
    x64 = rand_input(8, n=2, size=8).astype(np.float64)
    x = Tensor(x64)
    latent = net.encode(x).detach()
    rng = np.random.default_rng(3)
    states = [sample_hook_state(2, ch, rng) for ch in net.hook_channels()]
    for s in states:
        s.eps_gamma = Tensor(s.eps_gamma.data.astype(np.float64), requires_grad=True)
        s.eps_beta = Tensor(s.eps_beta.data.astype(np.float64))
        s.lam_logit = Tensor(s.lam_logit.data.astype(np.float64))

    def forward():
        hooks = [lambda f, s=s: styled_hook(f, s) for s in states]
        recon = net.decode_aux(latent, hooks=hooks)
        return mse_loss(recon, x)

    loss = forward()
    loss.backward()
    analytic = [s.eps_gamma.grad.copy() for s in states]
    for s, grad in zip(states, analytic):
        base = s.eps_gamma.data.copy()
        keep = s.eps_gamma

        def fn(arr):
            s.eps_gamma = Tensor(arr)
            val = float(forward().data)
            return val

        num = numeric_grad(fn, [base], 0)
        s.eps_gamma = keep
        assert rel_error(grad, num) < 1e-2


def test_checkpoint_roundtrip(tmp_path):
    net = SegNet(CFG, seed=9)
    ck = tmp_path / "ckpt"
    save_checkpoint(net, ck)
    loaded = load_checkpoint(ck)
    assert loaded.config == net.config
    x = Tensor(rand_input(9))
    np.testing.assert_array_equal(net.forward_seg(x).data, loaded.forward_seg(x).data)
    # save -> load -> save byte-identical
    ck2 = tmp_path / "ckpt2"
    save_checkpoint(loaded, ck2)
    assert (ck / "manifest.txt").read_bytes() == (ck2 / "manifest.txt").read_bytes()
    for f in sorted(ck.glob("*.cstn")):
        assert f.read_bytes() == (ck2 / f.name).read_bytes()


def test_frozen_weights_blocks_weight_grads():
    net = SegNet(CFG, seed=10)
    x = Tensor(rand_input(10))
    with net.frozen_weights():
        out = net.forward_seg(x)
        assert not out.requires_grad
    out2 = net.forward_seg(x)
    assert out2.requires_grad
