"""End-to-end acceptance suite.

Each test prints one PASS/FAIL line. Full-scale corpus numbers are out of
reach on a desk machine, so these criteria check exact invariants, oracle
agreement, and trend/ordering reproduction on synthetic data.
"""

import time

import numpy as np
import pytest

from posetraj import autodiff as ad
from posetraj.autodiff import Tape, Tensor
from posetraj.canonical import (
    canonicalize_sequence,
    invert_canonical,
    pose_layout,
    smooth_savitzky_golay,
)
from posetraj.engan import (
    ChannelNormalizer,
    EnganConfig,
    TrainingSchedule,
    encode,
    eval_critic,
    generate_poses,
    train_engan,
)
from posetraj.ingest import index_from_sequences, make_split
from posetraj.posernn import (
    FusionFlags,
    PoseRnnConfig,
    rnn_losses,
    train_posernn,
)
from posetraj.recognizer import EvalProtocol, evaluate_protocol
from posetraj.skeleton import MotionSequence, build_spec
from posetraj.synthetic import (
    default_families,
    local_motion_families,
    make_dataset,
    shift_domain,
)

from conftest import random_positions, rotation_about


def report(criterion: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance] {status} {criterion}" + (f" ({detail})" if detail else ""))
    assert passed, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def kinect():
    return build_spec("kinect25")


@pytest.fixture(scope="module")
def fixture_poses(kinect):
    """Synthetic pose corpus (>= 5k poses) used by the training criteria."""
    seqs = make_dataset(kinect, sequences_per_family=20, frames=60, seed=0,
                        noise=0.01, style_jitter=0.35)
    layout = pose_layout(kinect)
    poses = np.concatenate([layout.flatten(canonicalize_sequence(s)) for s in seqs])
    rng = np.random.default_rng(99)
    return poses[rng.permutation(len(poses))]


def test_01_canonical_round_trip(kinect):
    """Criterion 1: exact world-space round trip, 1000 frames, < 1 s."""
    rng = np.random.default_rng(7)
    positions = random_positions(kinect, 1000, rng)
    seq = MotionSequence(spec=kinect, subjects=(positions,))
    start = time.perf_counter()
    cs = canonicalize_sequence(seq, smooth=False, normalize=False)
    back = invert_canonical(cs)
    elapsed = time.perf_counter() - start
    err = float(np.abs(back.subjects[0] - positions).max())
    report("1 canonical round trip",
           err < 1e-6 and elapsed < 1.0,
           f"max error {err:.2e} m, {elapsed:.2f} s")


def test_02_invariance_suite(kinect):
    """Criterion 2: 1e4 random vertical rotations, translations and scales
    leave the canonical pose unchanged within 1e-6."""
    rng = np.random.default_rng(8)
    n = 10_000
    base = random_positions(kinect, n, rng)
    moved = np.empty_like(base)
    angles = rng.uniform(-np.pi, np.pi, size=n)
    scales = rng.uniform(0.3, 3.0, size=n)
    shifts = rng.normal(scale=2.0, size=(n, 3))
    for i in range(n):
        rot = rotation_about([0.0, 1.0, 0.0], angles[i])
        moved[i] = scales[i] * base[i] @ rot.T + shifts[i]
    cs_a = canonicalize_sequence(MotionSequence(spec=kinect, subjects=(base,)), smooth=False)
    cs_b = canonicalize_sequence(MotionSequence(spec=kinect, subjects=(moved,)), smooth=False)
    err = max(float(np.abs(cs_a.torso_coords - cs_b.torso_coords).max()),
              float(np.abs(cs_a.local_spherical - cs_b.local_spherical).max()))
    report("2 invariance suite", err < 1e-6, f"{n} trials, max deviation {err:.2e}")


def test_03_savitzky_golay_exactness():
    """Criterion 3: polynomial reproduction and the analytic center weight."""
    t = np.linspace(-1, 1, 81)
    max_err = 0.0
    for order in (1, 2, 3, 4):
        coeffs = np.random.default_rng(order).normal(size=order + 1)
        sig = np.polyval(coeffs, t)[:, None]
        out = smooth_savitzky_golay(sig, 9, max(order, 2) if order >= 2 else 3)
        max_err = max(max_err, float(np.abs(out - sig).max()))

    offsets = np.arange(-2, 3, dtype=float)
    vand = np.stack([offsets**0, offsets, offsets**2], axis=1)
    impulse = np.zeros(5)
    impulse[2] = 1.0
    coef, *_ = np.linalg.lstsq(vand, impulse, rcond=None)
    analytic = float(vand[2] @ coef)
    sig = np.zeros((11, 1))
    sig[5, 0] = 1.0
    center = smooth_savitzky_golay(sig, 5, 2)[5, 0]
    center_err = abs(center - analytic)
    seventeen = abs(analytic - 17.0 / 35.0)
    report("3 savitzky-golay exactness",
           max_err < 1e-10 and center_err < 1e-12 and seventeen < 1e-12,
           f"poly err {max_err:.1e}, center delta {center_err:.1e}")


def _central_difference(f, x, step=1e-5):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        hi = f()
        x[idx] = orig - step
        lo = f()
        x[idx] = orig
        g[idx] = (hi - lo) / (2 * step)
        it.iternext()
    return g


def _max_rel_err(build_loss, tensors):
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        ad.backward(tape, build_loss())
    worst = 0.0
    for t in tensors:
        got = t.grad if t.grad is not None else np.zeros_like(t.data)
        want = _central_difference(lambda: float(build_loss().data), t.data)
        rel = np.abs(got - want) / np.maximum(np.abs(want), 1.0)
        worst = max(worst, float(rel.max()))
    return worst


def test_04_gradient_correctness():
    """Criterion 4: every op and the LSTM cell vs central differences,
    100 random configurations each, max relative error < 1e-4."""
    rng = np.random.default_rng(11)

    def rand(shape, lo=-1.0, hi=1.0):
        return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)

    def shapes():
        n = int(rng.integers(1, 4))
        d = int(rng.integers(1, 5))
        return n, d

    worst = {}
    for trial in range(100):
        n, d = shapes()
        h = int(rng.integers(1, 4))
        a = rand((n, d))
        b = rand((n, d))
        w = rand((d, h))
        bias = rand((h,))
        labels = rng.integers(0, d, size=n)
        y01 = Tensor(rng.integers(0, 2, size=(n, d)).astype(float))
        pos = rand((n, d), 0.2, 1.8)
        away = Tensor(rng.uniform(0.2, 1.0, size=(n, d)) * rng.choice([-1.0, 1.0], size=(n, d)),
                      requires_grad=True)
        idx = rng.integers(0, d, size=max(1, d // 2 + 1))
        sc = rng.uniform(0.5, 2.0, size=len(idx))
        cases = {
            "add": lambda: ad.mean_(ad.add(a, b)),
            "sub": lambda: ad.mean_(ad.mul(ad.sub(a, b), ad.sub(a, b))),
            "mul": lambda: ad.sum_(ad.mul(a, b)),
            "matmul": lambda: ad.mean_(ad.matmul(a, w)),
            "affine": lambda: ad.mean_(ad.tanh(ad.affine(a, w, bias))),
            "concat": lambda: ad.mean_(ad.mul(ad.concat([a, b], axis=1),
                                              ad.concat([b, a], axis=1))),
            "narrow": lambda: ad.mean_(ad.narrow(ad.concat([a, b], axis=1), 1, d + 1)),
            "gather_cols": lambda: ad.mean_(ad.mul(ad.gather_cols(a, idx), ad.gather_cols(a, idx))),
            "reshape": lambda: ad.mean_(ad.mul(ad.reshape(a, (d, n)), ad.reshape(b, (d, n)))),
            "tanh": lambda: ad.mean_(ad.tanh(a)),
            "sigmoid": lambda: ad.mean_(ad.sigmoid(a)),
            "relu": lambda: ad.mean_(ad.relu(away)),
            "leaky_relu": lambda: ad.mean_(ad.leaky_relu(away)),
            "abs": lambda: ad.mean_(ad.abs_(away)),
            "log": lambda: ad.mean_(ad.log(pos)),
            "clamp": lambda: ad.mean_(ad.clamp(a, -2.0, 2.0)),
            "sum": lambda: ad.sum_(ad.mul(a, a)),
            "mean": lambda: ad.mean_(ad.mul(a, a)),
            "scale_tanh_channels": lambda: ad.mean_(ad.scale_tanh_channels(a, idx, sc)),
            "l1": lambda: ad.l1(a, Tensor(b.data)),
            "bce": lambda: ad.bce(ad.sigmoid(a), y01),
            "bce_logits": lambda: ad.bce_logits(a, y01.data),
            "softmax_cross_entropy": lambda: ad.softmax_cross_entropy(a, labels),
        }
        x_l = rand((n, d))
        h0 = rand((n, h))
        c0 = rand((n, h))
        w_l = rand((d + h, 4 * h), -0.4, 0.4)
        b_l = rand((4 * h,), -0.2, 0.2)

        def lstm_loss():
            hh, cc = ad.lstm_cell(x_l, h0, c0, w_l, b_l)
            return ad.add(ad.mean_(ad.mul(hh, hh)), ad.mean_(ad.abs_(cc)))

        for name, loss in cases.items():
            params = {
                "add": [a, b], "sub": [a, b], "mul": [a, b], "matmul": [a, w],
                "affine": [a, w, bias], "concat": [a, b], "narrow": [a, b],
                "gather_cols": [a], "reshape": [a, b], "tanh": [a], "sigmoid": [a],
                "relu": [away], "leaky_relu": [away], "abs": [away], "log": [pos],
                "clamp": [a], "sum": [a], "mean": [a],
                "scale_tanh_channels": [a], "l1": [a], "bce": [a],
                "bce_logits": [a], "softmax_cross_entropy": [a],
            }[name]
            err = _max_rel_err(loss, params)
            worst[name] = max(worst.get(name, 0.0), err)
        worst["lstm_cell"] = max(worst.get("lstm_cell", 0.0),
                                 _max_rel_err(lstm_loss, [x_l, h0, c0, w_l, b_l]))
    overall = max(worst.values())
    report("4 gradient correctness", overall < 1e-4,
           f"worst op {max(worst, key=worst.get)} rel err {overall:.2e}")


def test_05_engan_range_and_training(kinect, fixture_poses):
    """Criterion 5: latent range, stage-1 convergence within 10k steps,
    exact ramp endpoints."""
    assert len(fixture_poses) >= 5000
    model, hist = train_engan(fixture_poses, kinect, stage_steps=(2500, 0, 0),
                              seed=0, log_every=10)
    z = encode(model, fixture_poses[:2000].astype(np.float32)).z.data
    in_range = bool(np.all(z >= -1.0) and np.all(z <= 1.0)) and z.shape[1] == 32
    first = hist[0]["L_x_recon"] + hist[0]["L_z_recon"]
    best = min(h["L_x_recon"] + h["L_z_recon"] for h in hist)
    converged = best < 0.2 * first

    schedule = TrainingSchedule(stage="adv_ramp", lambda0=0.01, ramp_steps=20_000)
    endpoints = schedule.lambda_at(0) == 0.01 and schedule.lambda_at(20_000) == 0.1
    report("5 engan range and stage-1 training",
           in_range and converged and endpoints,
           f"z in range: {in_range}, L {first:.3f} -> {best:.3f} "
           f"({best / first:.1%} of initial), ramp endpoints exact: {endpoints}")


def test_06_critic_protocol_ordering(kinect, fixture_poses):
    """Criterion 6: a fresh critic detects plain-autoencoder samples at
    least 10 points more reliably than adversarially trained samples."""
    start = time.perf_counter()
    held_out, train = fixture_poses[:1200], fixture_poses[1200:]
    stage_steps = (2500, 2500, 7000)
    engan, _ = train_engan(train, kinect, stage_steps=stage_steps, seed=0)
    ae, _ = train_engan(train, kinect, stage_steps=stage_steps, seed=0,
                        variant="autoencoder")
    rng = np.random.default_rng(7)
    fake_engan = generate_poses(engan, 1200, rng)
    fake_ae = generate_poses(ae, 1200, rng)
    acc_engan = eval_critic(held_out, fake_engan, kinect, seed=5, train_steps=1000)
    acc_ae = eval_critic(held_out, fake_ae, kinect, seed=5, train_steps=1000)
    gap = (acc_ae - acc_engan) * 100
    elapsed = time.perf_counter() - start
    report("6 critic protocol ordering",
           gap >= 10.0 and elapsed < 3600,
           f"AE {acc_ae:.1%} vs EnGAN {acc_engan:.1%}, gap {gap:.1f} pp, {elapsed / 60:.1f} min")


def test_07_rnn_loss_oracle():
    """Criterion 7: brute-force loss agreement to 1e-10 and exact additivity."""
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(40):
        t_steps = int(rng.integers(3, 11))
        channels = int(rng.integers(1, 7))
        x_true = rng.normal(size=(t_steps, channels))
        x_pred = rng.normal(size=(t_steps, channels))
        lam = float(rng.uniform(0, 2))
        l_recon, l_grad, total = rnn_losses(Tensor(x_pred.copy()), x_true,
                                            lambda t: t, lam, t_steps)
        b_recon = sum(np.mean(np.abs(x_pred[t] - x_true[t])) for t in range(t_steps))
        b_grad = sum(
            np.mean(np.abs(np.abs(x_pred[t] - x_pred[t - 1]) - np.abs(x_true[t] - x_true[t - 1])))
            for t in range(1, t_steps)
        )
        worst = max(worst, abs(l_recon.item() - b_recon), abs(l_grad.item() - b_grad),
                    abs(total.item() - (b_recon + lam * b_grad)))
        _, _, t0 = rnn_losses(Tensor(x_pred.copy()), x_true, lambda t: t, 0.0, t_steps)
        r0, _, _ = rnn_losses(Tensor(x_pred.copy()), x_true, lambda t: t, 0.0, t_steps)
        if t0.item() != r0.item():
            worst = max(worst, 1.0)
    report("7 rnn loss oracle", worst < 1e-10, f"max |diff| {worst:.1e}")


def test_08_length_scalability(kinect):
    """Criterion 8: one T=120 sequence overfits to < 1% of the initial loss
    within 2000 steps."""
    bow = default_families(kinect)[2]
    seqs = make_dataset(kinect, families=[bow], sequences_per_family=1,
                        frames=120, seed=4, noise=0.0)
    canon = [canonicalize_sequence(s) for s in seqs]
    layout = pose_layout(kinect)
    poses = np.concatenate([layout.flatten(c) for c in canon])
    engan, _ = train_engan(poses, kinect, stage_steps=(400, 0, 0), seed=0)
    cfg = PoseRnnConfig(hidden=64, embed_dim=128, batch_size=1, lr=2e-3)

    from posetraj.posernn import train_posernn as train
    model, hist = train(canon, engan, config=cfg, t_steps=120, steps=2000,
                        seed=0, log_every=20)
    init = hist[0]["L_RNN"]
    reached = next((h for h in hist if h["L_RNN"] < 0.01 * init), None)
    report("8 length scalability (T=120 overfit)",
           reached is not None,
           f"initial {init:.1f}, "
           + (f"<1% at step {reached['step']}" if reached
              else f"final ratio {hist[-1]['L_RNN'] / init:.2%}"))


def _split_dataset(data, seed, label_fraction=0.4):
    index = index_from_sequences(data, split_seed=seed)
    plan = make_split(index, "cross_subject", label_fraction=label_fraction)
    pos = {e.path: i for i, e in enumerate(index.entries)}
    train_idx = [pos[p] for p in plan.train_ids]
    eval_idx = [pos[p] for p in plan.eval_ids]
    labeled = set(plan.labeled_ids)
    mask = np.array([p in labeled for p in plan.train_ids])
    labels = np.array([s.action_label for s in data])
    return ([data[i] for i in train_idx], labels[train_idx],
            [data[i] for i in eval_idx], labels[eval_idx], mask)


def test_09_fusion_ablation_ordering(kinect):
    """Criterion 9: probe accuracy ordering P_J < P_J+E_P < P_J+E_P+E_L on
    the local-motion benchmark, majority of 3 seeds."""
    fams = local_motion_families(kinect)
    layout = pose_layout(kinect)
    wins = 0
    details = []
    for seed in (0, 1, 2):
        data = make_dataset(kinect, families=fams, sequences_per_family=16,
                            frames=30, seed=100 + seed, noise=0.012,
                            n_subjects=6, style_jitter=0.25)
        train_seqs, train_labels, eval_seqs, eval_labels, mask = _split_dataset(data, seed)
        canon = [canonicalize_sequence(s) for s in train_seqs]
        poses = np.concatenate([layout.flatten(c) for c in canon])
        engan, _ = train_engan(poses, kinect, stage_steps=(2000, 500, 1500), seed=seed)
        accs = {}
        for name, flags in [("pj", FusionFlags(True, False, False)),
                            ("pj+ep", FusionFlags(True, True, False)),
                            ("pj+ep+el", FusionFlags(True, True, True))]:
            cfg = PoseRnnConfig(hidden=48, embed_dim=64, batch_size=16, fusion=flags)
            uses_engan = flags.pose_embedding or flags.limb_embeddings
            model, _ = train_posernn(canon, engan if uses_engan else None,
                                     config=cfg, t_steps=30, steps=500, seed=seed)
            res = evaluate_protocol(EvalProtocol("unsupervised"), model,
                                    train_seqs, train_labels, eval_seqs, eval_labels,
                                    labeled_mask=mask, t_steps=30, seed=seed,
                                    probe_steps=500)
            accs[name] = res.accuracy
        ok = accs["pj"] < accs["pj+ep"] < accs["pj+ep+el"]
        wins += ok
        details.append(f"seed{seed}: " + " ".join(f"{k}={v:.2f}" for k, v in accs.items()))
    report("9 fusion ablation ordering", wins >= 2, f"{wins}/3 seeds | " + " | ".join(details))


def test_10_protocol_orderings(kinect):
    """Criterion 10: semi-supervised >= unsupervised accuracy in-domain and
    in transfer, every seed, with frozen-backbone hash checks."""
    source_fams = default_families(kinect)[:4]
    target_fams = shift_domain(source_fams)
    layout = pose_layout(kinect)
    all_ok = True
    details = []
    for seed in (0, 1, 2):
        source = make_dataset(kinect, families=source_fams, sequences_per_family=12,
                              frames=30, seed=200 + seed, noise=0.008, n_subjects=6)
        target = make_dataset(kinect, families=target_fams, sequences_per_family=12,
                              frames=30, seed=300 + seed, noise=0.008, n_subjects=6)
        s_train, s_train_y, s_eval, s_eval_y, s_mask = _split_dataset(source, seed)
        t_train, t_train_y, t_eval, t_eval_y, t_mask = _split_dataset(target, seed)

        canon = [canonicalize_sequence(s) for s in s_train]
        poses = np.concatenate([layout.flatten(c) for c in canon])
        engan, _ = train_engan(poses, kinect, stage_steps=(1500, 400, 1000), seed=seed)
        cfg = PoseRnnConfig(hidden=48, embed_dim=64, batch_size=16)
        backbone, _ = train_posernn(canon, engan, config=cfg, t_steps=30,
                                    steps=500, seed=seed)

        def run(mode, train_seqs, train_y, eval_seqs, eval_y, mask):
            import copy
            model = backbone
            if mode in ("semi_supervised", "semi_supervised_transfer"):
                # fine-tuning mutates the store; run on a copy
                model = type(backbone)(backbone.spec, backbone.input_dim,
                                       backbone.config, backbone.engan, seed=0,
                                       translation_scale=backbone.translation_scale)
                for name in backbone.store.names():
                    model.store[name].data = backbone.store[name].data.copy()
            return evaluate_protocol(EvalProtocol(mode), model, train_seqs, train_y,
                                     eval_seqs, eval_y, labeled_mask=mask,
                                     t_steps=30, seed=seed, probe_steps=500,
                                     finetune_epochs=15, finetune_lr=1e-3)

        unsup = run("unsupervised", s_train, s_train_y, s_eval, s_eval_y, s_mask)
        semi = run("semi_supervised", s_train, s_train_y, s_eval, s_eval_y, s_mask)
        unsup_tr = run("unsupervised_transfer", t_train, t_train_y, t_eval, t_eval_y, t_mask)
        semi_tr = run("semi_supervised_transfer", t_train, t_train_y, t_eval, t_eval_y, t_mask)

        frozen_ok = (unsup.backbone_hash_before == unsup.backbone_hash_after
                     and unsup_tr.backbone_hash_before == unsup_tr.backbone_hash_after)
        order_ok = (semi.accuracy >= unsup.accuracy
                    and semi_tr.accuracy >= unsup_tr.accuracy)
        all_ok = all_ok and frozen_ok and order_ok
        details.append(
            f"seed{seed}: in-domain {unsup.accuracy:.2f}->{semi.accuracy:.2f}, "
            f"transfer {unsup_tr.accuracy:.2f}->{semi_tr.accuracy:.2f}, frozen={frozen_ok}")
    report("10 protocol orderings", all_ok, " | ".join(details))


def test_11_cli_determinism(tmp_path):
    """Criterion 11: identical manifests yield byte-identical metric CSVs."""
    from posetraj.cli import main

    motion = tmp_path / "motion"
    canon = tmp_path / "canon"
    assert main(["ingest", "--dataset", "synthetic", "--out", str(motion),
                 "--sequences-per-family", "3", "--frames", "16", "--seed", "5"]) == 0
    assert main(["canonicalize", "--in", str(motion), "--out", str(canon),
                 "--window", "5", "--order", "2"]) == 0
    engan = tmp_path / "engan.ckpt.gz"
    csv_a = tmp_path / "m_a.csv"
    csv_b = tmp_path / "m_b.csv"
    train_args = ["train-engan", "--data", str(canon),
                  "--stage-steps", "30,5,5", "--seed", "3"]
    assert main(train_args + ["--out", str(engan), "--metrics", str(csv_a)]) == 0
    assert main(train_args + ["--out", str(tmp_path / "e2.ckpt.gz"),
                              "--metrics", str(csv_b)]) == 0
    metrics_same = csv_a.read_bytes() == csv_b.read_bytes()

    posernn = tmp_path / "rnn.ckpt.gz"
    assert main(["train-posernn", "--data", str(canon), "--engan", str(engan),
                 "--out", str(posernn), "--metrics", str(tmp_path / "rnn.csv"),
                 "--frames", "16", "--hidden", "16", "--embed-dim", "24",
                 "--steps", "15", "--seed", "0"]) == 0
    probe_args = ["probe", "--data", str(motion), "--posernn", str(posernn),
                  "--engan", str(engan), "--split", "cross_subject",
                  "--label-fraction", "1.0", "--frames", "16",
                  "--probe-steps", "50", "--seed", "2"]
    out_a = tmp_path / "p_a.csv"
    out_b = tmp_path / "p_b.csv"
    assert main(probe_args + ["--out", str(out_a)]) == 0
    assert main(probe_args + ["--out", str(out_b)]) == 0
    probe_same = out_a.read_bytes() == out_b.read_bytes()
    report("11 cli determinism", metrics_same and probe_same,
           f"train metrics identical: {metrics_same}, probe identical: {probe_same}")
