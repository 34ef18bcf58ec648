import numpy as np
import pytest

from dsaseg import autodiff as ad
from dsaseg.autodiff import Tensor, ops
from dsaseg.errors import ConfigError, DimensionError
from dsaseg.model import DSANet, Encoder, ModelConfig, SpatioTemporalFusion, fuse_skips
from dsaseg.model.dsanet import TemporalFormerLayer


def T(x):
    return Tensor(np.asarray(x, dtype=np.float64))


def small(frames=4, size=32, base=4, levels=4, **kw):
    cfg = ModelConfig(base_channels=base, levels=levels, frames=frames, tf_layers=2, tf_heads=2,
                      mlp_ratio=2.0, patch_size=size, **kw)
    return DSANet(cfg, seed=0, dtype=np.float64)


def inputs(rng, b=1, t=4, size=32):
    return rng.standard_normal((b, t, 1, size, size)), rng.standard_normal((b, 1, size, size))


def test_encoder_shapes(rng):
    enc = Encoder(1, 8, 5).to(np.float64)
    st = enc(T(rng.standard_normal((1, 1, 64, 64))))
    assert [s.shape[1] for s in st.skips] == [8, 16, 32, 64]
    assert [s.shape[2] for s in st.skips] == [64, 32, 16, 8]
    assert st.bottleneck.shape == (1, 128, 4, 4)
    with pytest.raises(DimensionError):
        enc(T(np.zeros((1, 1, 40, 40))))


def test_encoder_zero_input_finite_and_deterministic(rng):
    enc = Encoder(1, 4, 4).to(np.float64)
    z = enc(T(np.zeros((1, 1, 16, 16)))).bottleneck.data
    assert np.isfinite(z).all()
    x = T(rng.standard_normal((2, 1, 16, 16)))
    assert enc(x).bottleneck.data.tobytes() == enc(x).bottleneck.data.tobytes()


def test_encoder_batch_permutation(rng):
    enc = Encoder(1, 4, 4).to(np.float64)
    x = rng.standard_normal((3, 1, 16, 16))
    a = enc(T(x)).bottleneck.data
    b = enc(T(x[[2, 0, 1]])).bottleneck.data
    np.testing.assert_allclose(b, a[[2, 0, 1]], atol=1e-12)


def test_teb_and_seb_do_not_share_weights():
    model = small()
    a = dict(model.seb.named_parameters())
    b = dict(model.teb.named_parameters())
    assert a.keys() == b.keys()
    assert all(a[k] is not b[k] for k in a)
    assert any(not np.array_equal(a[k].data, b[k].data) for k in a if "conv" in k)


def test_fuse_skips(rng):
    one = rng.standard_normal((1, 3, 4, 4))
    teb = np.repeat(one, 5, axis=0)
    seb = rng.standard_normal((1, 3, 4, 4))
    out = fuse_skips(T(teb), T(seb)).data
    assert out.shape == (1, 6, 4, 4)
    np.testing.assert_array_equal(out[:, :3], one)
    np.testing.assert_array_equal(out[:, 3:], seb)
    teb = rng.standard_normal((4, 3, 4, 4))
    base = fuse_skips(T(teb), T(seb)).data
    arg = teb.argmax(0)
    teb2 = teb.copy()
    other = (arg + 1) % 4
    np.put_along_axis(teb2, other[None], np.take_along_axis(teb, other[None], 0) - 1.0, 0)
    np.testing.assert_array_equal(fuse_skips(T(teb2), T(seb)).data, base)
    with pytest.raises(DimensionError):
        fuse_skips(T(np.zeros((4, 2, 4, 4))), T(seb))


def test_temporalformer_shape_and_uniform_attention(rng):
    model = small()
    for layer in model.tf.layers:
        layer.pos.data[:] = 0
        layer.attn_t.record = []
    fs = np.repeat(rng.standard_normal((1, 32, 2, 2)), 4, axis=0)
    out = model.tf(T(fs), 1)
    assert out.shape == (1, 32, 2, 2)
    for layer in model.tf.layers:
        np.testing.assert_allclose(layer.attn_t.record[0], 0.25, atol=1e-15)


def _temporal_sublayer(layer, x):
    y = x + layer.pos
    return y + layer.attn_t(layer.norm_t(y))


def test_temporal_attention_permutation_equivariance(rng):
    layer = TemporalFormerLayer(8, 5, 2, 2.0).initialize(3).to(np.float64)
    x = rng.standard_normal((6, 5, 8))
    perm = np.array([3, 0, 4, 1, 2])
    layer.pos.data[:] = 0
    a = _temporal_sublayer(layer, T(x)).data
    b = _temporal_sublayer(layer, T(x[:, perm])).data
    np.testing.assert_allclose(b, a[:, perm], atol=1e-12)
    layer.initialize(3)
    layer.to(np.float64)
    a = _temporal_sublayer(layer, T(x)).data
    b = _temporal_sublayer(layer, T(x[:, perm])).data
    assert np.abs(b - a[:, perm]).max() > 1e-6


def test_tf_sublayers_pass_through_when_zeroed(rng):
    layer = TemporalFormerLayer(8, 3, 2, 2.0).initialize(0).to(np.float64)
    for m in (layer.attn_t.proj, layer.attn_s.proj, layer.mlp.fc2):
        m.weight.data[:] = 0
        m.bias.data[:] = 0
    layer.pos.data[:] = 0
    x = rng.standard_normal((4, 3, 8))  # (b h w) t c with b=1, h=w=2
    np.testing.assert_array_equal(layer(T(x), 1, 2, 2).data, x)


def test_stf(rng):
    stf = SpatioTemporalFusion(8).initialize(0).to(np.float64)
    stf.record = []
    f = rng.standard_normal((2, 8, 4, 4))
    out = stf(T(f), T(f))
    assert out.shape == (2, 16, 4, 4)
    ai, as_ = stf.record[0]
    np.testing.assert_array_equal(ai, as_)
    np.testing.assert_allclose(ai.sum(-1), 1.0, atol=1e-12)
    fm, fs = rng.standard_normal((2, 1, 8, 4, 4))
    stf.qkv.weight.data[:] = 0
    stf.qkv.bias.data[:] = 0
    out = stf(T(fm), T(fs)).data
    np.testing.assert_array_equal(out, np.concatenate([fs, fm], axis=1))
    with pytest.raises(DimensionError):
        stf(T(np.zeros((1, 8, 3, 3))), T(np.zeros((1, 8, 3, 3))))


@pytest.mark.parametrize("base,t,size", [(4, 4, 32), (8, 8, 64), (4, 8, 64), (8, 4, 32)])
def test_dsanet_head_shapes(rng, base, t, size):
    cfg = ModelConfig(base_channels=base, frames=t, patch_size=size, tf_layers=1)
    model = DSANet(cfg, dtype=np.float64)
    seq, mip = inputs(rng, 1, t, size)
    out = model(seq, mip)
    assert [h.shape for h in out.heads] == [(1, 3, size, size), (1, 3, size // 2, size // 2),
                                           (1, 3, size // 4, size // 4)]
    assert all(np.isfinite(h.data).all() for h in out.heads)


def test_dsanet_batch_independence_and_determinism(rng):
    model = small()
    seq, mip = inputs(rng)
    out = model(np.repeat(seq, 2, 0), np.repeat(mip, 2, 0)).logits_full.data
    np.testing.assert_allclose(out[0], out[1], atol=1e-12)
    again = model(np.repeat(seq, 2, 0), np.repeat(mip, 2, 0)).logits_full.data
    assert out.tobytes() == again.tobytes()


@pytest.mark.parametrize("ablation", ["minip-only", "sequence-only"])
def test_ablations(rng, ablation):
    model = small(ablation=ablation)
    seq, mip = inputs(rng)
    out = model(seq, mip)
    assert out.logits_full.shape == (1, 3, 32, 32)
    if ablation == "minip-only":
        assert not hasattr(model, "teb")
        # the sequence is ignored entirely
        other = model(rng.standard_normal(seq.shape), mip).logits_full.data
        np.testing.assert_array_equal(other, out.logits_full.data)
    else:
        other = model(seq, rng.standard_normal(mip.shape)).logits_full.data
        np.testing.assert_array_equal(other, out.logits_full.data)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(tf_heads=3).validate()
    with pytest.raises(ConfigError):
        ModelConfig(levels=3).validate()
    with pytest.raises(ConfigError):
        ModelConfig(ablation="bogus").validate()
    with pytest.raises(ConfigError):
        ModelConfig().validate(48, 48)
    cfg = ModelConfig(base_channels=4)
    assert cfg.bottleneck_channels == 64
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_parameters_named_uniquely_and_reinit_bitwise():
    model = small()
    names = [n for n, _ in model.named_parameters()]
    assert len(names) == len(set(names))
    before = {k: v.copy() for k, v in model.state_dict().items()}
    model.initialize(0)
    model.to(np.float64)
    assert all(before[k].tobytes() == v.tobytes() for k, v in model.state_dict().items())
    model.initialize(1)
    assert any(before[k].tobytes() != v.tobytes() for k, v in model.state_dict().items())


def test_load_state_dict_mismatch():
    a = small(base=4)
    b = small(base=8)
    with pytest.raises(ConfigError, match="checkpoint"):
        a.load_state_dict(b.state_dict())


def test_attention_rows_sum_to_one(rng):
    model = small()
    for m in model.attention_modules():
        m.record = []
    model.stf.record = []
    model(*inputs(rng))
    for m in model.attention_modules():
        for a in m.record:
            assert np.abs(a.sum(-1) - 1).max() < 1e-6
    for ai, as_ in model.stf.record:
        assert np.abs(ai.sum(-1) - 1).max() < 1e-6 and np.abs(as_.sum(-1) - 1).max() < 1e-6


def test_backward_is_deterministic(rng):
    from dsaseg.metrics import total_loss
    model = small()
    seq, mip = inputs(rng)
    target = rng.integers(0, 3, (1, 32, 32))
    grads = []
    for _ in range(2):
        model.zero_grad()
        with ad.Tape() as tape:
            loss = total_loss(model(seq, mip), target)
        ad.backward(loss, tape)
        tape.clear()
        grads.append(b"".join(p.grad.tobytes() for p in model.parameters()))
    assert grads[0] == grads[1]
