"""Trajectory modeling: hierarchical feature fusion, a two-layer
bidirectional LSTM encoder producing a fixed-size trajectory embedding, and
a bidirectional chained decoder trained through the frozen pose decoder.

Sequence tensors use a step-major layout: per-step (batch, channels) blocks
stacked along axis 0 into (T * batch, channels), so per-step losses reduce
to scaled means.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, ParamStore, Tape, Tensor
from .canonical import CanonicalSequence, invert_canonical, local_to_global, pose_layout
from .engan import EnganModel, decode as engan_decode, encode as engan_encode
from .skeleton import MotionSequence, SkeletonSpec


@dataclass(frozen=True)
class FusionFlags:
    """Which feature levels feed the sequence encoder."""

    joints: bool = True           # P_J: scale-normalized root-relative coordinates
    pose_embedding: bool = True   # E_P: 32-dim latent from the pose encoder
    limb_embeddings: bool = True  # E_L: the four limb-level activations

    @classmethod
    def parse(cls, text: str) -> "FusionFlags":
        parts = {p.strip().lower() for p in text.split(",") if p.strip()}
        known = {"pj", "ep", "el"}
        if not parts <= known:
            raise ValueError(f"unknown fusion flags {sorted(parts - known)}; expected pj,ep,el")
        return cls(joints="pj" in parts, pose_embedding="ep" in parts,
                   limb_embeddings="el" in parts)


@dataclass(frozen=True)
class PoseRnnConfig:
    hidden: int = 128
    embed_dim: int = 256
    lambda_hat: float = 1.0
    fusion: FusionFlags = FusionFlags()
    include_global: bool = True
    batch_size: int = 16
    lr: float = 1e-3
    clip_norm: float = 5.0
    teacher_forcing: bool = False


@dataclass(frozen=True)
class TrajectoryEmbedding:
    """Fixed-size summary of one motion sequence."""

    v: np.ndarray


@dataclass(frozen=True)
class FusedSequence:
    """Per-frame fused inputs plus the channels the decoder must restore."""

    features: np.ndarray       # (T, F) encoder input
    pose_channels: np.ndarray  # (T, D) flattened canonical poses (loss target)
    global_params: np.ndarray  # (T, 9) translation + sin/cos of the view angles
    fps: float


N_GLOBAL = 9


def global_param_channels(cs: CanonicalSequence, translation_scale: float = 1.0) -> np.ndarray:
    """(T, 9): normalized root translation and sines/cosines of the view angles."""
    trans = cs.root_translation / translation_scale
    ang = np.stack([
        np.sin(cs.alpha), np.cos(cs.alpha),
        np.sin(cs.beta), np.cos(cs.beta),
        np.sin(cs.gamma), np.cos(cs.gamma),
    ], axis=1)
    return np.concatenate([trans, ang], axis=1)


def view_params_from_channels(g: np.ndarray, translation_scale: float = 1.0):
    """Invert :func:`global_param_channels` (angles via atan2)."""
    trans = g[:, :3] * translation_scale
    alpha = np.arctan2(g[:, 3], g[:, 4])
    beta = np.arctan2(g[:, 5], g[:, 6])
    gamma = np.arctan2(g[:, 7], g[:, 8])
    return trans, alpha, beta, gamma


def fuse_features(cs: CanonicalSequence, engan: EnganModel | None,
                  flags: FusionFlags = FusionFlags(), *,
                  include_global: bool = True,
                  translation_scale: float = 1.0) -> FusedSequence:
    """Concatenate the enabled feature levels for every frame.

    ``E_P``/``E_L`` require a trained (frozen) pose model; ``P_J`` comes from
    the canonical pose itself via forward kinematics, so it is available
    without one.
    """
    if (flags.pose_embedding or flags.limb_embeddings) and engan is None:
        raise ValueError("pose/limb embedding fusion requires a pose model")
    layout = engan.layout if engan is not None else pose_layout(cs.spec)
    x = layout.flatten(cs).astype(np.float32)

    parts = []
    if flags.pose_embedding or flags.limb_embeddings:
        emb = engan_encode(engan, x)
        if flags.pose_embedding:
            parts.append(emb.z.data)
        if flags.limb_embeddings:
            parts.extend(emb.limb_embeddings[g].data for g in sorted(emb.limb_embeddings))
    if flags.joints:
        pos = local_to_global(cs.torso_coords, cs.local_spherical, cs.spec, cs.radii)
        parts.append(pos.reshape(cs.frame_count, -1).astype(np.float32))
    if not parts:
        raise ValueError("at least one fusion flag must be enabled")
    g = global_param_channels(cs, translation_scale).astype(np.float32)
    if include_global:
        parts.append(g)
    return FusedSequence(
        features=np.concatenate(parts, axis=1),
        pose_channels=x,
        global_params=g,
        fps=cs.fps,
    )


class PoseRnnModel:
    """Parameter store and shape bookkeeping for the sequence autoencoder.

    When ``engan`` is provided the decoder predicts latent pose vectors that
    are pushed through the frozen pose decoder for the loss; without one it
    predicts the canonical pose channels directly (the raw-joints baseline).
    """

    def __init__(self, spec: SkeletonSpec, input_dim: int,
                 config: PoseRnnConfig = PoseRnnConfig(),
                 engan: EnganModel | None = None, seed: int = 0,
                 translation_scale: float = 1.0):
        if (config.fusion.pose_embedding or config.fusion.limb_embeddings) and engan is None:
            raise ValueError("fusion flags require a pose model")
        self.spec = spec
        self.config = config
        self.engan = engan
        self.layout = engan.layout if engan is not None else pose_layout(spec)
        self.input_dim = input_dim
        self.translation_scale = translation_scale
        self.pose_dim = engan.config.latent_dim if engan is not None else self.layout.dim
        self.pred_dim = self.pose_dim + (N_GLOBAL if config.include_global else 0)

        h = config.hidden
        e = config.embed_dim
        p = self.pred_dim
        store = ParamStore(seed)
        store.add_linear("enc.l1f", input_dim + h, 4 * h)
        store.add_linear("enc.l1b", input_dim + h, 4 * h)
        store.add_linear("enc.l2f", 2 * h + h, 4 * h)
        store.add_linear("enc.l2b", 2 * h + h, 4 * h)
        store.add_linear("embed", 2 * h, e)
        for name in ("dec.init_fh", "dec.init_fc", "dec.init_bh", "dec.init_bc"):
            store.add_linear(name, e, h)
        store.add("dec.start_f", (1, p), "glorot")
        store.add("dec.start_b", (1, p), "glorot")
        store.add_linear("dec.f", p + h, 4 * h)
        store.add_linear("dec.b", p + h, 4 * h)
        store.add_linear("dec.head_f", h, p)
        store.add_linear("dec.head_b", h, p)
        store.add_linear("dec.final", 2 * h, p)
        self.store = store

        # channel bounding of predictions: latent/sincos channels through
        # tanh, translation linear; raw mode bounds angle channels like the
        # pose decoder does
        if engan is not None:
            bounded = list(range(self.pose_dim))
            scales = [1.0] * self.pose_dim
        else:
            bounded = list(self.layout.azimuth_channels) + list(self.layout.elevation_channels)
            scales = [float(np.pi)] * len(self.layout.azimuth_channels) + \
                     [float(np.pi / 2)] * len(self.layout.elevation_channels)
        if config.include_global:
            base = self.pose_dim
            bounded.extend(base + k for k in range(3, N_GLOBAL))  # sin/cos block
            scales.extend([1.0] * (N_GLOBAL - 3))
        self._bounded_idx = np.array(bounded, dtype=int)
        self._bounded_scale = np.array(scales, dtype=np.float32)

    def bound_prediction(self, raw: Tensor) -> Tensor:
        return ad.scale_tanh_channels(raw, self._bounded_idx, self._bounded_scale)

    def stores(self) -> dict[str, ParamStore]:
        return {"rnn": self.store}


def _lstm_scan(store: ParamStore, prefix: str, steps: list, hidden: int, *,
               reverse: bool = False):
    """Run an LSTM over per-step (batch, features) tensors; returns outputs
    aligned with the input order plus the final hidden state."""
    w, b = store[f"{prefix}.w"], store[f"{prefix}.b"]
    n = steps[0].data.shape[0]
    dtype = steps[0].data.dtype
    h = Tensor(np.zeros((n, hidden), dtype=dtype))
    c = Tensor(np.zeros((n, hidden), dtype=dtype))
    order = range(len(steps) - 1, -1, -1) if reverse else range(len(steps))
    outputs: list = [None] * len(steps)
    for t in order:
        h, c = ad.lstm_cell(steps[t], h, c, w, b)
        outputs[t] = h
    return outputs, h


def encode_sequence(model: PoseRnnModel, features: np.ndarray) -> Tensor:
    """Trajectory embedding (batch, embed_dim) of (batch, T, F) features.

    Layer-1 forward/backward outputs are concatenated per step and fed to
    layer 2; the embedding is a linear map of the concatenated final hidden
    states of both directions.
    """
    arr = np.asarray(features, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.shape[1] < 2:
        raise ValueError("sequences need at least 2 frames")
    if arr.shape[2] != model.input_dim:
        raise ValueError(f"expected feature dim {model.input_dim}, got {arr.shape[2]}")
    h = model.config.hidden
    steps = [Tensor(arr[:, t]) for t in range(arr.shape[1])]
    out_f, _ = _lstm_scan(model.store, "enc.l1f", steps, h)
    out_b, _ = _lstm_scan(model.store, "enc.l1b", steps, h, reverse=True)
    layer2_in = [ad.concat([f, bwd], axis=1) for f, bwd in zip(out_f, out_b)]
    _, last_f = _lstm_scan(model.store, "enc.l2f", layer2_in, h)
    _, last_b = _lstm_scan(model.store, "enc.l2b", layer2_in, h, reverse=True)
    return ad.affine(ad.concat([last_f, last_b], axis=1),
                     model.store["embed.w"], model.store["embed.b"])


def decode_sequence(model: PoseRnnModel, embedding: Tensor, t_steps: int, *,
                    teacher: np.ndarray | None = None) -> Tensor:
    """Chained bidirectional decoding of ``t_steps`` predictions.

    Both directions are initialized from the embedding; each step consumes
    its own previous prediction (a learned start token first). The forward
    pass emits t = 1..T, the backward pass T..1, and the final per-step
    prediction is a linear map of both outputs. Returns a step-major tensor
    (t_steps * batch, pred_dim).

    ``teacher`` (batch, T, pred_dim) switches to teacher forcing: chained
    inputs are replaced by ground-truth previous targets.
    """
    if t_steps < 2:
        raise ValueError("t_steps must be >= 2")
    store = model.store
    h_dim = model.config.hidden
    n = embedding.data.shape[0]
    ones = Tensor(np.ones((n, 1), dtype=np.float32))

    def run_direction(direction: str, order: list[int]):
        h = ad.affine(embedding, store[f"dec.init_{direction}h.w"], store[f"dec.init_{direction}h.b"])
        c = ad.affine(embedding, store[f"dec.init_{direction}c.w"], store[f"dec.init_{direction}c.b"])
        w, b = store[f"dec.{direction}.w"], store[f"dec.{direction}.b"]
        head_w, head_b = store[f"dec.head_{direction}.w"], store[f"dec.head_{direction}.b"]
        x = ad.matmul(ones, store[f"dec.start_{direction}"])
        outputs: list = [None] * t_steps
        for k, t in enumerate(order):
            h, c = ad.lstm_cell(x, h, c, w, b)
            outputs[t] = h
            if k + 1 < t_steps:
                if teacher is not None:
                    x = Tensor(np.asarray(teacher[:, t], dtype=np.float32))
                else:
                    x = model.bound_prediction(ad.affine(h, head_w, head_b))
        return outputs

    out_f = run_direction("f", list(range(t_steps)))
    out_b = run_direction("b", list(range(t_steps - 1, -1, -1)))
    per_step = [
        model.bound_prediction(ad.affine(ad.concat([out_f[t], out_b[t]], axis=1),
                                         store["dec.final.w"], store["dec.final.b"]))
        for t in range(t_steps)
    ]
    return ad.concat(per_step, axis=0)


def split_prediction(model: PoseRnnModel, pred: Tensor):
    """Split step-major predictions into pose and global-param blocks."""
    pose = ad.narrow(pred, 0, model.pose_dim)
    if not model.config.include_global:
        return pose, None
    return pose, ad.narrow(pred, model.pose_dim, model.pred_dim)


def rnn_losses(pred_pose: Tensor, x_true: np.ndarray, decode_fn, lambda_hat: float,
               t_steps: int, g_pred: Tensor | None = None,
               g_true: np.ndarray | None = None):
    """Reconstruction + first-order smoothness losses in pose space.

    ``pred_pose`` is step-major (T*batch, pose_dim); ``decode_fn`` maps it
    into canonical-pose space (the frozen pose decoder, or identity for the
    raw baseline). Per step the reconstruction term is the channel mean of
    |x' - x|, summed over steps; the smoothness term compares per-channel
    absolute frame differences of prediction and target the same way.
    Global-param channels contribute identical-form terms.
    """
    x_true = np.asarray(x_true)
    if pred_pose.data.shape[0] != x_true.shape[0]:
        raise ValueError(
            f"length mismatch: {pred_pose.data.shape[0]} predictions vs {x_true.shape[0]} targets")
    if x_true.shape[0] % t_steps:
        raise ValueError("step-major rows must be a multiple of t_steps")
    x_pred = decode_fn(pred_pose)

    def recon_and_grad(pred: Tensor, true: np.ndarray):
        true_t = Tensor(np.asarray(true, dtype=pred.data.dtype))
        recon = ad.mul(ad.l1(pred, true_t), float(t_steps))
        rows = pred.data.shape[0]
        per = rows // t_steps
        d_pred = ad.abs_(ad.sub(ad.narrow(pred, per, rows, axis=0),
                                ad.narrow(pred, 0, rows - per, axis=0)))
        d_true = np.abs(true[per:] - true[:rows - per])
        grad = ad.mul(ad.l1(d_pred, Tensor(d_true.astype(pred.data.dtype))),
                      float(t_steps - 1))
        return recon, grad

    l_recon, l_grad = recon_and_grad(x_pred, x_true)
    if g_pred is not None:
        if g_true is None:
            raise ValueError("global predictions passed without targets")
        g_recon, g_grad = recon_and_grad(g_pred, np.asarray(g_true))
        l_recon = ad.add(l_recon, g_recon)
        l_grad = ad.add(l_grad, g_grad)
    total = ad.add(l_recon, ad.mul(l_grad, float(lambda_hat)))
    return l_recon, l_grad, total


def _frozen_decode_fn(model: PoseRnnModel):
    if model.engan is None:
        return lambda t: t
    return lambda t: engan_decode(model.engan, t)


def _stack_step_major(arr: np.ndarray) -> np.ndarray:
    """(batch, T, C) -> (T*batch, C)."""
    return np.ascontiguousarray(arr.transpose(1, 0, 2)).reshape(-1, arr.shape[2])


def resample_canonical(cs: CanonicalSequence, t_steps: int) -> CanonicalSequence:
    """Linear time resampling of all canonical channels to a fixed length.

    Angle channels are unwrapped along time before interpolation so the
    (-pi, pi] seam does not produce spurious intermediate values.
    """
    if cs.frame_count == t_steps:
        return cs
    src = np.linspace(0.0, 1.0, cs.frame_count)
    dst = np.linspace(0.0, 1.0, t_steps)

    def interp(arr, unwrap=False):
        flat = arr.reshape(cs.frame_count, -1)
        if unwrap:
            flat = np.unwrap(flat, axis=0)
        out = np.stack([np.interp(dst, src, flat[:, c]) for c in range(flat.shape[1])], axis=1)
        if unwrap:
            out = np.where(out <= -np.pi, out + 2 * np.pi, out)
            out = np.where(out > np.pi, out - 2 * np.pi, out)
        return out.reshape((t_steps,) + arr.shape[1:])

    return CanonicalSequence(
        spec=cs.spec,
        torso_coords=interp(cs.torso_coords),
        local_spherical=interp(cs.local_spherical, unwrap=True),
        alpha=interp(cs.alpha[:, None], unwrap=True)[:, 0],
        beta=interp(cs.beta[:, None], unwrap=True)[:, 0],
        gamma=interp(cs.gamma[:, None], unwrap=True)[:, 0],
        root_translation=interp(cs.root_translation),
        radii=None if cs.radii is None else interp(cs.radii),
        fps=cs.fps * (t_steps - 1) / max(cs.frame_count - 1, 1),
    )


def translation_std(sequences: list[CanonicalSequence]) -> float:
    """Corpus normalizer for root-translation channels."""
    all_t = np.concatenate([cs.root_translation for cs in sequences])
    std = float(all_t.std())
    return std if std > 1e-9 else 1.0


def train_posernn(sequences: list[CanonicalSequence], engan: EnganModel | None, *,
                  config: PoseRnnConfig = PoseRnnConfig(), t_steps: int = 60,
                  steps: int = 2000, seed: int = 0,
                  log_every: int = 25) -> tuple[PoseRnnModel, list[dict]]:
    """Train the sequence autoencoder on canonicalized sequences.

    The pose model stays frozen: its parameters receive no gradients and
    are bit-identical afterwards.
    """
    if engan is not None:
        frozen_state = {n: s.state_hash() for n, s in engan.stores().items()}
        for s in engan.stores().values():
            s.set_trainable(False)
    try:
        scale = translation_std(sequences)
        fused = [
            fuse_features(resample_canonical(cs, t_steps), engan, config.fusion,
                          include_global=config.include_global, translation_scale=scale)
            for cs in sequences
        ]
        feats = np.stack([f.features for f in fused])          # (N, T, F)
        x_true = np.stack([f.pose_channels for f in fused])    # (N, T, D)
        g_true = np.stack([f.global_params for f in fused])    # (N, T, 9)

        model = PoseRnnModel(
            sequences[0].spec, feats.shape[2], config, engan, seed=seed,
            translation_scale=scale,
        )
        opt = Adam(model.store, lr=config.lr)
        rng = np.random.default_rng(seed + 2000)
        decode_fn = _frozen_decode_fn(model)
        history: list[dict] = []
        n = len(fused)
        batch = min(config.batch_size, n)
        for step in range(1, steps + 1):
            idx = rng.permutation(n)[:batch] if n > batch else np.arange(n)
            teacher = None
            if config.teacher_forcing:
                teacher = np.concatenate([x_true[idx], g_true[idx]], axis=2) \
                    if config.include_global else x_true[idx]
            model.store.zero_grad()
            with Tape() as tape:
                emb = encode_sequence(model, feats[idx])
                pred = decode_sequence(model, emb, t_steps, teacher=teacher)
                pose_pred, g_pred = split_prediction(model, pred)
                l_recon, l_grad, total = rnn_losses(
                    pose_pred, _stack_step_major(x_true[idx]), decode_fn,
                    config.lambda_hat, t_steps,
                    g_pred=g_pred,
                    g_true=_stack_step_major(g_true[idx]) if g_pred is not None else None,
                )
                ad.backward(tape, total)
            ad.clip_global_norm(model.store, config.clip_norm)
            opt.step()
            if step % log_every == 0 or step == 1:
                history.append({"step": step, "L_recon_RNN": l_recon.item(),
                                "L_grad": l_grad.item(), "L_RNN": total.item()})
        if engan is not None:
            after = {n_: s.state_hash() for n_, s in engan.stores().items()}
            if after != frozen_state:
                raise AssertionError("frozen pose model was modified during training")
        return model, history
    finally:
        if engan is not None:
            for s in engan.stores().values():
                s.set_trainable(True)


def predict_sequence(model: PoseRnnModel, cs: CanonicalSequence,
                     t_steps: int | None = None):
    """Encode one canonical sequence and decode it back.

    Returns ``(x_pred, g_pred, embedding)``: canonical pose channels (T, D),
    global-param channels (T, 9) or None, and the trajectory embedding.
    """
    t_steps = t_steps or cs.frame_count
    fused = fuse_features(resample_canonical(cs, t_steps), model.engan,
                          model.config.fusion,
                          include_global=model.config.include_global,
                          translation_scale=model.translation_scale)
    emb = encode_sequence(model, fused.features[None])
    pred = decode_sequence(model, emb, t_steps)
    pose_pred, g_pred = split_prediction(model, pred)
    x_pred = _frozen_decode_fn(model)(pose_pred).data
    g = g_pred.data if g_pred is not None else None
    return x_pred, g, TrajectoryEmbedding(v=emb.data[0])


def reconstruct_sequence(model: PoseRnnModel, cs: CanonicalSequence,
                         t_steps: int | None = None) -> MotionSequence:
    """Full round trip back to world space.

    View/translation channels come from the predicted global parameters
    when the model reconstructs them, otherwise from the input sequence.
    """
    t_steps = t_steps or cs.frame_count
    x_pred, g, _ = predict_sequence(model, cs, t_steps)
    layout = model.layout
    resampled = resample_canonical(cs, t_steps)
    if g is not None:
        trans, alpha, beta, gamma = view_params_from_channels(g, model.translation_scale)
    else:
        trans = resampled.root_translation
        alpha, beta, gamma = resampled.alpha, resampled.beta, resampled.gamma
    rebuilt = layout.sequence_from_flat(x_pred, alpha, beta, gamma, trans, fps=resampled.fps)
    return invert_canonical(rebuilt)


def avg_recon_metric(pred, true) -> float:
    """Time-averaged L1 over canonical channels: (1/T) sum_t mean |x'_t - x_t|."""
    a = pred if isinstance(pred, np.ndarray) else pose_layout(pred.spec).flatten(pred)
    b = true if isinstance(true, np.ndarray) else pose_layout(true.spec).flatten(true)
    if a.shape != b.shape:
        raise ValueError(f"length/shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def _config_to_dict(config: PoseRnnConfig) -> dict:
    d = dataclasses.asdict(config)
    d["fusion"] = dataclasses.asdict(config.fusion)
    return d


def _config_from_dict(d: dict) -> PoseRnnConfig:
    d = dict(d)
    d["fusion"] = FusionFlags(**d["fusion"])
    return PoseRnnConfig(**d)


def save_posernn(path, model: PoseRnnModel, step: int = 0):
    ad.save_checkpoint(path, model.stores(), step=step,
                       extra={"spec": model.spec.name, "kind": "posernn",
                              "input_dim": model.input_dim,
                              "translation_scale": model.translation_scale,
                              "config": _config_to_dict(model.config)})


def load_posernn(path, spec: SkeletonSpec, config: PoseRnnConfig | None = None,
                 engan: EnganModel | None = None) -> PoseRnnModel:
    stores, _, extra = ad.load_checkpoint(path)
    del stores
    if config is None:
        config = _config_from_dict(extra["config"])
    model = PoseRnnModel(spec, extra["input_dim"], config, engan, seed=0,
                         translation_scale=extra.get("translation_scale", 1.0))
    ad.load_checkpoint_into(path, model.stores())
    return model
