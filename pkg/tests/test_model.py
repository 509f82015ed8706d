import numpy as np
import pytest

from medc import autograd as ag
from medc.autograd import Tensor
from medc.model import (EXPERT_KINDS, Model, ModelConfig, classify,
                        estimate_mean, estimate_variance, forward_expert,
                        forward_inference, load_checkpoint, reparameterize,
                        save_checkpoint, trunk_forward)
from medc.seeding import derive_rng
from medc.verify import composed_objective_gradcheck


def tiny_cfg(**over):
    base = dict(D=3, C=4, d_trunk=3, hidden=5, d=6, phi_depth=2)
    base.update(over)
    return ModelConfig(**base)


def zero_linear(lin):
    lin.W.data[:] = 0.0
    lin.b.data[:] = 0.0


class IdentityMap:
    def __call__(self, x):
        return x

    def parameters(self):
        return []


def test_trunk_identity_weights_give_relu():
    model = Model(tiny_cfg(), seed=0)
    model.trunk.lin.W.data = np.eye(3)
    model.trunk.lin.b.data[:] = 0.0
    X = np.array([[[1.0, -2.0, 0.5], [-0.1, 3.0, -4.0]]])
    out = trunk_forward(X, model.trunk)
    assert np.array_equal(out.data, np.maximum(X, 0.0))


def test_estimate_mean_hand_case():
    head = Model(tiny_cfg(d=2, d_trunk=2), seed=0).heads["long_tailed"]
    head.phi_mu = IdentityMap()
    H0 = Tensor([[1.0, 3.0], [3.0, 5.0]])  # pools to (2, 4)
    mu = estimate_mean(H0, head)
    assert mu.data == pytest.approx(np.array([2.0, 4.0]) / np.sqrt(20.0))


def test_estimate_mean_rows_are_unit_norm():
    model = Model(tiny_cfg(), seed=3)
    X = derive_rng(3, "x").uniform(-1, 1, size=(5, 4, 3))
    H0 = trunk_forward(X, model.trunk)
    mu = estimate_mean(H0, model.heads["uniform"])
    assert mu.shape == (5, 6)
    np.testing.assert_allclose(np.linalg.norm(mu.data, axis=-1), 1.0, atol=1e-12)


def test_sigma_is_softplus_zero_when_values_vanish():
    model = Model(tiny_cfg(), seed=1)
    head = model.heads["long_tailed"]
    zero_linear(head.f_v)
    X = derive_rng(1, "x").uniform(-1, 1, size=(2, 4, 3))
    H0 = trunk_forward(X, model.trunk)
    mu = estimate_mean(H0, head)
    sigma = estimate_variance(H0, mu, head)
    assert sigma.data == pytest.approx(np.full((2, 6), np.log(2.0)))


def test_zero_query_attention_equals_mean_pooling():
    model = Model(tiny_cfg(), seed=2)
    head = model.heads["inverse"]
    zero_linear(head.f_q)
    X = derive_rng(2, "x").uniform(-1, 1, size=(3, 5, 3))
    H0 = trunk_forward(X, model.trunk)
    mu = estimate_mean(H0, head)
    with_attn = estimate_variance(H0, mu, head, temporal_attention=True)
    pooled = estimate_variance(H0, mu, head, temporal_attention=False)
    np.testing.assert_allclose(with_attn.data, pooled.data, atol=1e-12)


def test_single_frame_attention_is_identity_weighting():
    model = Model(tiny_cfg(), seed=4)
    head = model.heads["uniform"]
    X = derive_rng(4, "x").uniform(-1, 1, size=(2, 1, 3))
    H0 = trunk_forward(X, model.trunk)
    mu = estimate_mean(H0, head)
    with_attn = estimate_variance(H0, mu, head, temporal_attention=True)
    pooled = estimate_variance(H0, mu, head, temporal_attention=False)
    np.testing.assert_allclose(with_attn.data, pooled.data, atol=1e-12)


def test_sigma_nonnegative():
    model = Model(tiny_cfg(), seed=6)
    X = derive_rng(6, "x").uniform(-3, 3, size=(4, 3, 3))
    for head in model.heads.values():
        H0 = trunk_forward(X, model.trunk)
        mu = estimate_mean(H0, head)
        sigma = estimate_variance(H0, mu, head)
        assert (sigma.data > 0).all()


def test_reparameterize_eval_mode_returns_mean():
    mu = Tensor([[0.3, -0.7]])
    sigma = Tensor([[2.0, 5.0]])
    emb = reparameterize(mu, sigma, rng=None, train_mode=False)
    assert np.array_equal(emb.z.data, mu.data)
    assert np.array_equal(emb.epsilon, np.zeros((1, 2)))


def test_reparameterize_train_mode_statistics():
    n = 20000
    mu = Tensor(np.zeros((n, 1)))
    sigma = Tensor(np.full((n, 1), 1.5))
    emb = reparameterize(mu, sigma, derive_rng(0, "eps"), train_mode=True)
    z = emb.z.data
    assert abs(z.mean()) < 0.05
    assert abs(z.std() - 1.5) < 0.05


def test_classify_zero_logits_give_half():
    head = Model(tiny_cfg(), seed=0).heads["long_tailed"]
    zero_linear(head.classifier)
    p = classify(Tensor(np.ones((2, 6))), head)
    assert np.array_equal(p.data, np.full((2, 4), 0.5))


def test_classify_bias_hand_case():
    head = Model(tiny_cfg(C=2), seed=0).heads["long_tailed"]
    zero_linear(head.classifier)
    head.classifier.b.data[:] = [0.0, np.log(3.0)]
    p = classify(Tensor(np.zeros((1, 6))), head)
    assert p.data.ravel() == pytest.approx([0.5, 0.75])


def test_forward_expert_shapes_and_determinism():
    model = Model(tiny_cfg(), seed=8)
    X = derive_rng(8, "x").uniform(-1, 1, size=(5, 4, 3))
    head = model.heads["long_tailed"]
    e1, p1 = forward_expert(X, model.trunk, head)
    e2, p2 = forward_expert(X, model.trunk, head)
    assert p1.shape == (5, 4) and e1.mu.shape == (5, 6)
    assert np.array_equal(p1.data, p2.data)
    assert np.array_equal(e1.sigma.data, e2.sigma.data)


def test_inference_average_of_identical_experts_is_idempotent():
    model = Model(tiny_cfg(), seed=9)
    src = model.heads["long_tailed"]
    for kind in ("uniform", "inverse"):
        for p_dst, p_src in zip(model.heads[kind].parameters(), src.parameters()):
            p_dst.data = p_src.data.copy()
    X = derive_rng(9, "x").uniform(-1, 1, size=(3, 2, 3))
    avg = forward_inference(X, model)
    single = forward_inference(X, model, experts=("long_tailed",))
    np.testing.assert_allclose(avg.data, single.data, atol=1e-12)


def test_inference_average_arithmetic():
    model = Model(tiny_cfg(C=1), seed=10)
    probs = [0.2, 0.4, 0.6]
    for kind, p in zip(EXPERT_KINDS, probs):
        head = model.heads[kind]
        zero_linear(head.classifier)
        head.classifier.b.data[:] = np.log(p / (1.0 - p))
    X = derive_rng(10, "x").uniform(0.1, 1.0, size=(2, 3, 3))
    out = forward_inference(X, model)
    assert out.data == pytest.approx(np.full((2, 1), 0.4))


def test_inference_invariant_to_expert_order():
    model = Model(tiny_cfg(), seed=11)
    X = derive_rng(11, "x").uniform(-1, 1, size=(2, 3, 3))
    a = forward_inference(X, model, experts=("uniform", "inverse"))
    b = forward_inference(X, model, experts=("inverse", "uniform"))
    np.testing.assert_allclose(a.data, b.data, atol=1e-15)


def test_inference_rejects_empty_expert_list():
    model = Model(tiny_cfg(), seed=0)
    with pytest.raises(ValueError):
        forward_inference(np.zeros((1, 2, 3)), model, experts=())


def test_checkpoint_roundtrip(tmp_path):
    model = Model(tiny_cfg(), seed=12)
    model.heads["uniform"].gamma = np.linspace(0.1, 0.9, 4)
    path = tmp_path / "model.bin"
    save_checkpoint(path, model, extra={"epoch": 7})
    loaded, extra = load_checkpoint(path)
    assert extra == {"epoch": 7}
    assert loaded.cfg.to_dict() == model.cfg.to_dict()
    assert np.array_equal(loaded.heads["uniform"].gamma, model.heads["uniform"].gamma)
    X = derive_rng(12, "x").uniform(-1, 1, size=(3, 2, 3))
    np.testing.assert_array_equal(forward_inference(X, model).data,
                                  forward_inference(X, loaded).data)


def test_checkpoint_rejects_shape_mismatch(tmp_path):
    import json
    import struct

    model = Model(tiny_cfg(), seed=13)
    path = tmp_path / "model.bin"
    save_checkpoint(path, model)
    blob = path.read_bytes()
    (mlen,) = struct.unpack("<Q", blob[8:16])
    manifest = json.loads(blob[16:16 + mlen])
    manifest["params"][0]["shape"] = [99, 99]
    new_m = json.dumps(manifest, sort_keys=True).encode()
    path.write_bytes(blob[:8] + struct.pack("<Q", len(new_m)) + new_m
                     + blob[16 + mlen:])
    with pytest.raises(ValueError, match="99"):
        load_checkpoint(path)


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_composed_objective_gradient_single_seed():
    assert composed_objective_gradcheck(seed=0) < 1e-4
