import numpy as np
import pytest

from posetraj import autodiff as ad
from posetraj.autodiff import Tape, Tensor
from posetraj.canonical import canonicalize_sequence, pose_layout
from posetraj.engan import EnganConfig, EnganModel
from posetraj.posernn import (
    FusionFlags,
    PoseRnnConfig,
    PoseRnnModel,
    avg_recon_metric,
    decode_sequence,
    encode_sequence,
    fuse_features,
    global_param_channels,
    load_posernn,
    predict_sequence,
    reconstruct_sequence,
    resample_canonical,
    rnn_losses,
    save_posernn,
    train_posernn,
    view_params_from_channels,
)
from posetraj.synthetic import make_dataset


@pytest.fixture(scope="module")
def layout(kinect25):
    return pose_layout(kinect25)


@pytest.fixture(scope="module")
def engan(kinect25):
    # untrained pose model: fixed deterministic feature extractor
    return EnganModel(kinect25, EnganConfig(), seed=3)


@pytest.fixture(scope="module")
def canon_seqs(kinect25):
    seqs = make_dataset(kinect25, sequences_per_family=2, frames=24, seed=21)
    return [canonicalize_sequence(s) for s in seqs[:6]]


def small_config(**kw):
    base = dict(hidden=24, embed_dim=32, batch_size=4)
    base.update(kw)
    return PoseRnnConfig(**base)


class TestFuseFeatures:
    def test_joints_only_dimension(self, canon_seqs, kinect25):
        flags = FusionFlags(joints=True, pose_embedding=False, limb_embeddings=False)
        fused = fuse_features(canon_seqs[0], None, flags, include_global=False)
        assert fused.features.shape == (24, 3 * kinect25.joint_count)

    def test_all_flags_dimension(self, canon_seqs, engan, kinect25):
        fused = fuse_features(canon_seqs[0], engan, FusionFlags())
        limb_dims = 4 * engan.config.limb_out
        expected = 32 + limb_dims + 3 * kinect25.joint_count + 9
        assert fused.features.shape == (24, expected)

    def test_deterministic(self, canon_seqs, engan):
        a = fuse_features(canon_seqs[0], engan, FusionFlags())
        b = fuse_features(canon_seqs[0], engan, FusionFlags())
        assert np.array_equal(a.features, b.features)

    def test_embedding_flags_need_model(self, canon_seqs):
        with pytest.raises(ValueError):
            fuse_features(canon_seqs[0], None, FusionFlags())

    def test_flag_parsing(self):
        flags = FusionFlags.parse("pj,ep")
        assert flags.joints and flags.pose_embedding and not flags.limb_embeddings
        with pytest.raises(ValueError):
            FusionFlags.parse("pj,bogus")

    def test_global_channels_invert(self, canon_seqs):
        g = global_param_channels(canon_seqs[0], translation_scale=2.0)
        trans, alpha, beta, gamma = view_params_from_channels(g, translation_scale=2.0)
        assert np.allclose(trans, canon_seqs[0].root_translation, atol=1e-12)
        assert np.allclose(alpha, canon_seqs[0].alpha, atol=1e-12)
        assert np.allclose(gamma, canon_seqs[0].gamma, atol=1e-12)


class TestEncodeSequence:
    def _model(self, kinect25, engan, input_dim):
        return PoseRnnModel(kinect25, input_dim, small_config(), engan, seed=0)

    def test_deterministic(self, kinect25, engan, canon_seqs):
        fused = fuse_features(canon_seqs[0], engan, FusionFlags())
        model = self._model(kinect25, engan, fused.features.shape[1])
        a = encode_sequence(model, fused.features[None]).data
        b = encode_sequence(model, fused.features[None]).data
        assert np.array_equal(a, b)

    def test_embedding_dim_independent_of_length(self, kinect25, engan, canon_seqs):
        fused = fuse_features(canon_seqs[0], engan, FusionFlags())
        model = self._model(kinect25, engan, fused.features.shape[1])
        short = encode_sequence(model, fused.features[None, :10]).data
        resampled = resample_canonical(canon_seqs[0], 120)
        long_feats = fuse_features(resampled, engan, FusionFlags()).features
        long = encode_sequence(model, long_feats[None]).data
        assert short.shape == long.shape == (1, 32)

    def test_reversal_changes_embedding(self, kinect25, engan, canon_seqs):
        fused = fuse_features(canon_seqs[0], engan, FusionFlags())
        model = self._model(kinect25, engan, fused.features.shape[1])
        fwd = encode_sequence(model, fused.features[None]).data
        rev = encode_sequence(model, fused.features[::-1][None]).data
        assert not np.allclose(fwd, rev)

    def test_too_short_rejected(self, kinect25, engan):
        model = self._model(kinect25, engan, 8)
        with pytest.raises(ValueError):
            encode_sequence(model, np.zeros((1, 1, 8)))


class TestDecodeSequence:
    def _model(self, kinect25, engan):
        return PoseRnnModel(kinect25, 16, small_config(), engan, seed=1)

    def test_output_length(self, kinect25, engan):
        model = self._model(kinect25, engan)
        emb = Tensor(np.random.default_rng(0).normal(size=(3, 32)).astype(np.float32))
        pred = decode_sequence(model, emb, 7)
        assert pred.data.shape == (7 * 3, model.pred_dim)

    def test_depends_on_embedding(self, kinect25, engan):
        model = self._model(kinect25, engan)
        rng = np.random.default_rng(1)
        e = rng.normal(size=(1, 32)).astype(np.float32)
        out_a = decode_sequence(model, Tensor(e), 5).data
        out_b = decode_sequence(model, Tensor(np.zeros_like(e)), 5).data
        assert not np.allclose(out_a, out_b)

    def test_chaining_connectivity(self, kinect25, engan):
        # loss on step 2 only must reach the per-direction prediction head
        # used to chain step 1 output into step 2 input
        model = self._model(kinect25, engan)
        emb = Tensor(np.zeros((1, 32), dtype=np.float32))
        model.store.zero_grad()
        with Tape() as tape:
            pred = decode_sequence(model, emb, 4)
            step2 = ad.narrow(pred, 1, 2, axis=0)
            ad.backward(tape, ad.sum_(ad.mul(step2, step2)))
        grad = model.store["dec.head_f.w"].grad
        assert grad is not None and np.abs(grad).max() > 0

    def test_teacher_forcing_breaks_chain(self, kinect25, engan):
        model = self._model(kinect25, engan)
        emb = Tensor(np.zeros((1, 32), dtype=np.float32))
        teacher = np.zeros((1, 4, model.pred_dim), dtype=np.float32)
        model.store.zero_grad()
        with Tape() as tape:
            pred = decode_sequence(model, emb, 4, teacher=teacher)
            step2 = ad.narrow(pred, 1, 2, axis=0)
            ad.backward(tape, ad.sum_(ad.mul(step2, step2)))
        grad = model.store["dec.head_f.w"].grad
        assert grad is None or np.abs(grad).max() == 0

    def test_min_length(self, kinect25, engan):
        model = self._model(kinect25, engan)
        with pytest.raises(ValueError):
            decode_sequence(model, Tensor(np.zeros((1, 32), dtype=np.float32)), 1)


def brute_force_losses(x_pred, x_true, lam):
    """Independent loop implementation of the sequence losses (B = 1)."""
    t_steps = len(x_true)
    recon = sum(np.mean(np.abs(x_pred[t] - x_true[t])) for t in range(t_steps))
    grad = 0.0
    for t in range(1, t_steps):
        d_pred = np.abs(x_pred[t] - x_pred[t - 1])
        d_true = np.abs(x_true[t] - x_true[t - 1])
        grad += np.mean(np.abs(d_pred - d_true))
    return recon, grad, recon + lam * grad


class TestRnnLosses:
    def test_perfect_prediction_zero(self):
        x = np.random.default_rng(0).normal(size=(6, 4))
        pred = Tensor(x.copy())
        l_recon, l_grad, total = rnn_losses(pred, x, lambda t: t, 1.0, 6)
        assert l_recon.item() == 0.0
        assert l_grad.item() == 0.0
        assert total.item() == 0.0

    def test_constant_wrong_prediction(self):
        x_true = np.full((5, 3), 2.0)
        x_pred = Tensor(np.zeros((5, 3)))
        l_recon, l_grad, _ = rnn_losses(x_pred, x_true, lambda t: t, 1.0, 5)
        assert l_grad.item() == 0.0
        assert l_recon.item() == pytest.approx(10.0)  # 5 steps x mean 2.0

    def test_hand_computed_example(self):
        x_true = np.array([[0.0], [1.0], [2.0]])
        x_pred = Tensor(np.array([[0.0], [2.0], [2.0]]))
        l_recon, l_grad, total = rnn_losses(x_pred, x_true, lambda t: t, 0.5, 3)
        assert l_recon.item() == pytest.approx(1.0)
        assert l_grad.item() == pytest.approx(2.0)
        assert total.item() == pytest.approx(2.0)

    @pytest.mark.parametrize("t_steps", [3, 5, 10])
    def test_matches_brute_force(self, t_steps):
        rng = np.random.default_rng(t_steps)
        channels = int(rng.integers(1, 6))
        x_true = rng.normal(size=(t_steps, channels))
        x_pred_data = rng.normal(size=(t_steps, channels))
        lam = float(rng.uniform(0, 2))
        l_recon, l_grad, total = rnn_losses(Tensor(x_pred_data), x_true,
                                            lambda t: t, lam, t_steps)
        b_recon, b_grad, b_total = brute_force_losses(x_pred_data, x_true, lam)
        assert l_recon.item() == pytest.approx(b_recon, abs=1e-10)
        assert l_grad.item() == pytest.approx(b_grad, abs=1e-10)
        assert total.item() == pytest.approx(b_total, abs=1e-10)

    def test_lambda_zero_additivity(self):
        rng = np.random.default_rng(9)
        x_true = rng.normal(size=(4, 3))
        pred = Tensor(rng.normal(size=(4, 3)))
        l_recon, _, total = rnn_losses(pred, x_true, lambda t: t, 0.0, 4)
        assert total.item() == l_recon.item()

    def test_additivity_exact(self):
        rng = np.random.default_rng(10)
        x_true = rng.normal(size=(4, 3))
        pred = Tensor(rng.normal(size=(4, 3)))
        lam = 0.7
        l_recon, l_grad, total = rnn_losses(pred, x_true, lambda t: t, lam, 4)
        assert total.item() - lam * l_grad.item() == pytest.approx(l_recon.item(), abs=1e-12)

    def test_global_terms_added(self):
        rng = np.random.default_rng(11)
        x_true = rng.normal(size=(4, 3))
        g_true = rng.normal(size=(4, 2))
        pred = Tensor(rng.normal(size=(4, 3)))
        g_pred = Tensor(rng.normal(size=(4, 2)))
        l_all, _, _ = rnn_losses(pred, x_true, lambda t: t, 1.0, 4,
                                 g_pred=g_pred, g_true=g_true)
        l_x, _, _ = rnn_losses(pred, x_true, lambda t: t, 1.0, 4)
        b_recon, _, _ = brute_force_losses(g_pred.data, g_true, 1.0)
        assert l_all.item() == pytest.approx(l_x.item() + b_recon, abs=1e-10)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rnn_losses(Tensor(np.zeros((4, 2))), np.zeros((5, 2)), lambda t: t, 1.0, 4)


class TestResample:
    def test_identity_when_length_matches(self, canon_seqs):
        assert resample_canonical(canon_seqs[0], 24) is canon_seqs[0]

    def test_target_length(self, canon_seqs):
        out = resample_canonical(canon_seqs[0], 50)
        assert out.frame_count == 50
        assert out.local_spherical.shape[0] == 50

    def test_linear_channels_exact(self, kinect25, canon_seqs):
        out = resample_canonical(canon_seqs[0], 47)
        # endpoints are preserved exactly by linear interpolation
        assert np.allclose(out.torso_coords[0], canon_seqs[0].torso_coords[0], atol=1e-12)
        assert np.allclose(out.torso_coords[-1], canon_seqs[0].torso_coords[-1], atol=1e-12)

    def test_angles_stay_in_range(self, canon_seqs):
        out = resample_canonical(canon_seqs[0], 91)
        az = out.local_spherical[..., 0]
        assert az.max() <= np.pi and az.min() > -np.pi


class TestAvgReconMetric:
    def test_identical_zero(self, canon_seqs):
        assert avg_recon_metric(canon_seqs[0], canon_seqs[0]) == 0.0

    def test_constant_offset(self):
        a = np.zeros((5, 4))
        b = np.zeros((5, 4))
        b[:, 2] = 0.8
        assert avg_recon_metric(a, b) == pytest.approx(0.2)  # one of four channels

    def test_matches_brute_force(self):
        rng = np.random.default_rng(12)
        a = rng.normal(size=(7, 5))
        b = rng.normal(size=(7, 5))
        brute = np.mean([np.mean(np.abs(a[t] - b[t])) for t in range(7)])
        assert avg_recon_metric(a, b) == pytest.approx(brute, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            avg_recon_metric(np.zeros((3, 2)), np.zeros((4, 2)))


class TestTraining:
    def test_loss_decreases_and_freezes_engan(self, kinect25, engan, canon_seqs):
        before = {k: s.state_hash() for k, s in engan.stores().items()}
        model, hist = train_posernn(canon_seqs, engan, config=small_config(),
                                    t_steps=16, steps=60, seed=0, log_every=10)
        after = {k: s.state_hash() for k, s in engan.stores().items()}
        assert after == before
        assert hist[-1]["L_RNN"] < hist[0]["L_RNN"]
        assert all(t.requires_grad for s in engan.stores().values() for t in s.tensors())

    def test_lambda_zero_history_additivity(self, kinect25, engan, canon_seqs):
        cfg = small_config(lambda_hat=0.0)
        _, hist = train_posernn(canon_seqs[:2], engan, config=cfg,
                                t_steps=12, steps=5, seed=0, log_every=1)
        for h in hist:
            assert h["L_RNN"] == h["L_recon_RNN"]

    def test_determinism(self, kinect25, engan, canon_seqs):
        a, _ = train_posernn(canon_seqs[:2], engan, config=small_config(),
                             t_steps=12, steps=10, seed=5)
        b, _ = train_posernn(canon_seqs[:2], engan, config=small_config(),
                             t_steps=12, steps=10, seed=5)
        assert a.store.state_hash() == b.store.state_hash()

    def test_raw_joint_baseline_trains(self, kinect25, canon_seqs):
        cfg = small_config(fusion=FusionFlags(joints=True, pose_embedding=False,
                                              limb_embeddings=False))
        model, hist = train_posernn(canon_seqs[:3], None, config=cfg,
                                    t_steps=12, steps=30, seed=0, log_every=10)
        assert model.engan is None
        assert model.pose_dim == pose_layout(kinect25).dim
        assert hist[-1]["L_RNN"] < hist[0]["L_RNN"]


class TestReconstruction:
    def test_shapes_and_lengths(self, kinect25, engan, canon_seqs):
        model, _ = train_posernn(canon_seqs[:2], engan, config=small_config(),
                                 t_steps=12, steps=10, seed=1)
        out = reconstruct_sequence(model, canon_seqs[0], t_steps=12)
        assert out.frame_count == 12
        parents = kinect25.parent_indices()
        lengths = np.linalg.norm(out.subjects[0] - out.subjects[0][:, parents], axis=-1)
        ref = kinect25.ref_length_array()
        torso = {kinect25.joint_index(j) for j in kinect25.torso_set}
        for j in range(kinect25.joint_count):
            if j in torso:
                continue
            assert np.allclose(lengths[:, j], ref[j], atol=1e-6)

    def test_predict_shapes(self, kinect25, engan, canon_seqs):
        model, _ = train_posernn(canon_seqs[:2], engan, config=small_config(),
                                 t_steps=12, steps=5, seed=2)
        x_pred, g, emb = predict_sequence(model, canon_seqs[0], 12)
        assert x_pred.shape == (12, pose_layout(kinect25).dim)
        assert g.shape == (12, 9)
        assert emb.v.shape == (32,)


def test_checkpoint_round_trip(kinect25, engan, canon_seqs, tmp_path):
    model, _ = train_posernn(canon_seqs[:2], engan, config=small_config(),
                             t_steps=12, steps=5, seed=3)
    path = tmp_path / "rnn.ckpt.gz"
    save_posernn(path, model)
    loaded = load_posernn(path, kinect25, model.config, engan)
    assert loaded.store.state_hash() == model.store.state_hash()
    assert loaded.translation_scale == model.translation_scale
