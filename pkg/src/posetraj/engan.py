"""Pose-embedding networks and the three-stage adversarial training protocol.

Encoder, decoder and discriminator all share the limb hierarchy: the five
part groups are processed by separate subnets, fused into upper-body
(trunk + arms) and lower-body (legs) representations, then into a single
full-body vector. The encoder squashes the 32-dim latent through tanh, so
embeddings always live in [-1, 1]^32; the decoder mirrors the hierarchy in
reverse and bounds angle channels by scaled tanh heads.

Training runs in three consecutive stages on one model: a cycle autoencoder
stage (reconstruction in both pose and latent space), an adversarial stage
at fixed weight lambda0, and a ramp stage that raises the weight linearly
to 10 * lambda0.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, ParamStore, Tape, Tensor
from .canonical import PoseLayout, pose_layout
from .skeleton import SkeletonSpec

_UPPER_GROUPS = ("trunk", "left_arm", "right_arm")
_LOWER_GROUPS = ("left_leg", "right_leg")
LIMB_EMBEDDING_GROUPS = ("left_arm", "right_arm", "left_leg", "right_leg")


@dataclass(frozen=True)
class EnganConfig:
    latent_dim: int = 32
    limb_hidden: int = 64
    limb_out: int = 32
    fuse_hidden: int = 128
    fuse_out: int = 64
    body_hidden: int = 128
    leaky_slope: float = 0.2
    batch_size: int = 64
    lr_cycle: float = 1e-3
    lr_adv: float = 3e-4
    lr_disc: float = 1e-3
    lambda0: float = 0.1
    real_label: float = 0.9
    input_noise: float = 0.02


@dataclass(frozen=True)
class PoseEmbedding:
    """Latent pose vector plus the four limb-level activations."""

    z: Tensor
    limb_embeddings: dict[str, Tensor]


@dataclass
class TrainingSchedule:
    """Adversarial-weight schedule over the three stages."""

    stage: str = "cycle_only"
    lambda0: float = 0.01
    ramp_steps: int = 20_000
    lambda_current: float = 0.0

    def lambda_at(self, ramp_step: int) -> float:
        """Linear ramp: lambda0 at step 0, 10*lambda0 at ramp_steps."""
        if self.stage == "cycle_only":
            return 0.0
        if self.stage == "adv_intro":
            return self.lambda0
        frac = min(max(ramp_step, 0), self.ramp_steps) / self.ramp_steps
        return self.lambda0 * (1.0 + 9.0 * frac)


@dataclass(frozen=True)
class ChannelNormalizer:
    """Per-channel standardization of flattened canonical poses.

    Channels whose corpus variance is structurally zero (the root
    coordinates, the spine anchor's out-of-plane component) are marked
    inactive: they carry no information, the encoder sees them as zero and
    the decoder emits their exact constants.
    """

    mean: np.ndarray
    scale: np.ndarray        # weighting denominators (>= floor) for active channels
    active: np.ndarray       # bool mask

    @classmethod
    def fit(cls, poses: np.ndarray, floor: float = 1e-3) -> "ChannelNormalizer":
        x = np.asarray(poses, dtype=np.float64)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        active = std > 1e-7
        scale = np.where(active, np.maximum(std, floor), 1.0)
        return cls(mean=mean.astype(np.float32), scale=scale.astype(np.float32),
                   active=active)

    @classmethod
    def identity(cls, dim: int) -> "ChannelNormalizer":
        return cls(mean=np.zeros(dim, dtype=np.float32),
                   scale=np.ones(dim, dtype=np.float32),
                   active=np.ones(dim, dtype=bool))

    def standardize(self, x):
        """(x - mean) / scale with inactive channels zeroed; works on arrays
        and tape tensors alike."""
        inv = (self.active / self.scale).astype(np.float32)
        if isinstance(x, Tensor):
            return ad.mul(ad.sub(x, Tensor(self.mean)), Tensor(inv))
        return (np.asarray(x) - self.mean) * inv

    def restore_constants(self, x: Tensor) -> Tensor:
        """Overwrite inactive channels with their exact corpus constants."""
        if self.active.all():
            return x
        mask = self.active.astype(np.float32)
        return ad.add(ad.mul(x, Tensor(mask)), Tensor(self.mean * (1.0 - mask)))


class EnganModel:
    """Encoder/decoder/discriminator parameter stores over one skeleton."""

    def __init__(self, spec: SkeletonSpec, config: EnganConfig = EnganConfig(), seed: int = 0,
                 normalizer: ChannelNormalizer | None = None):
        self.spec = spec
        self.config = config
        self.layout = pose_layout(spec)
        self.seed = seed
        self.normalizer = normalizer or ChannelNormalizer.identity(self.layout.dim)
        c = config
        groups = list(spec.limbs)

        enc = ParamStore(seed)
        for g in groups:
            in_dim = len(self.layout.group_channels[g])
            enc.add_linear(f"{g}.l1", in_dim, c.limb_hidden)
            enc.add_linear(f"{g}.l2", c.limb_hidden, c.limb_out)
        enc.add_linear("upper.l1", c.limb_out * len(_UPPER_GROUPS), c.fuse_hidden)
        enc.add_linear("upper.l2", c.fuse_hidden, c.fuse_out)
        enc.add_linear("lower.l1", c.limb_out * len(_LOWER_GROUPS), c.fuse_hidden)
        enc.add_linear("lower.l2", c.fuse_hidden, c.fuse_out)
        enc.add_linear("body.l1", 2 * c.fuse_out, c.body_hidden)
        enc.add_linear("body.l2", c.body_hidden, c.latent_dim)
        self.encoder = enc

        dec = ParamStore(seed + 1)
        dec.add_linear("body.l1", c.latent_dim, c.body_hidden)
        dec.add_linear("body.l2", c.body_hidden, 2 * c.fuse_out)
        dec.add_linear("upper.l1", c.fuse_out, c.fuse_hidden)
        dec.add_linear("upper.l2", c.fuse_hidden, c.limb_out * len(_UPPER_GROUPS))
        dec.add_linear("lower.l1", c.fuse_out, c.fuse_hidden)
        dec.add_linear("lower.l2", c.fuse_hidden, c.limb_out * len(_LOWER_GROUPS))
        for g in groups:
            out_dim = len(self.layout.group_channels[g])
            dec.add_linear(f"{g}.l1", c.limb_out, c.limb_hidden)
            dec.add_linear(f"{g}.l2", c.limb_hidden, out_dim)
        self.decoder = dec

        disc = ParamStore(seed + 2)
        for g in groups:
            in_dim = len(self.layout.group_channels[g])
            disc.add_linear(f"{g}.l1", in_dim, c.limb_hidden)
            disc.add_linear(f"{g}.l2", c.limb_hidden, c.limb_out)
        disc.add_linear("upper.l1", c.limb_out * len(_UPPER_GROUPS), c.fuse_hidden)
        disc.add_linear("upper.l2", c.fuse_hidden, c.fuse_out)
        disc.add_linear("lower.l1", c.limb_out * len(_LOWER_GROUPS), c.fuse_hidden)
        disc.add_linear("lower.l2", c.fuse_hidden, c.fuse_out)
        disc.add_linear("body.l1", 2 * c.fuse_out, c.body_hidden)
        disc.add_linear("body.l2", c.body_hidden, 1)
        self.discriminator = disc

        # channel permutation used to reassemble decoder limb outputs
        order = np.concatenate([self.layout.group_channels[g] for g in groups])
        self._inverse_order = np.argsort(order)

    def stores(self) -> dict[str, ParamStore]:
        return {"encoder": self.encoder, "decoder": self.decoder,
                "discriminator": self.discriminator}


def _layer(store, name, x, slope):
    return ad.leaky_relu(ad.affine(x, store[f"{name}.w"], store[f"{name}.b"]), slope)


def _hierarchy_trunk_to_body(store, x, model, slope):
    """Shared encoder/discriminator trunk: limb subnets -> fused body vector."""
    limb = {}
    for g in model.spec.limbs:
        xg = ad.gather_cols(x, model.layout.group_channels[g])
        h = _layer(store, f"{g}.l1", xg, slope)
        limb[g] = _layer(store, f"{g}.l2", h, slope)
    upper = ad.concat([limb[g] for g in _UPPER_GROUPS], axis=1)
    upper = _layer(store, "upper.l2", _layer(store, "upper.l1", upper, slope), slope)
    lower = ad.concat([limb[g] for g in _LOWER_GROUPS], axis=1)
    lower = _layer(store, "lower.l2", _layer(store, "lower.l1", lower, slope), slope)
    body = ad.concat([upper, lower], axis=1)
    body = _layer(store, "body.l1", body, slope)
    return body, limb


def encode(model: EnganModel, x) -> PoseEmbedding:
    """Map flattened canonical poses (n, dim) to latent vectors in [-1, 1]^32."""
    x = ad.as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[1] != model.layout.dim:
        raise ValueError(f"encode expects (n, {model.layout.dim}), got {x.data.shape}")
    x = model.normalizer.standardize(x)
    slope = model.config.leaky_slope
    body, limb = _hierarchy_trunk_to_body(model.encoder, x, model, slope)
    z = ad.tanh(ad.affine(body, model.encoder["body.l2.w"], model.encoder["body.l2.b"]))
    return PoseEmbedding(z=z, limb_embeddings={g: limb[g] for g in LIMB_EMBEDDING_GROUPS})


def decode(model: EnganModel, z) -> Tensor:
    """Map latent vectors (n, 32) to flattened canonical poses.

    Torso-coordinate channels are linear; azimuth and elevation channels are
    bounded into their conventions by scaled tanh heads.
    """
    z = ad.as_tensor(z)
    if z.data.ndim != 2 or z.data.shape[1] != model.config.latent_dim:
        raise ValueError(f"decode expects (n, {model.config.latent_dim}), got {z.data.shape}")
    store = model.decoder
    c = model.config
    slope = c.leaky_slope
    body = _layer(store, "body.l1", z, slope)
    body = _layer(store, "body.l2", body, slope)
    upper = ad.narrow(body, 0, c.fuse_out)
    lower = ad.narrow(body, c.fuse_out, 2 * c.fuse_out)
    upper = _layer(store, "upper.l2", _layer(store, "upper.l1", upper, slope), slope)
    lower = _layer(store, "lower.l2", _layer(store, "lower.l1", lower, slope), slope)

    groups = list(model.spec.limbs)
    limb_in = {}
    for i, g in enumerate(_UPPER_GROUPS):
        limb_in[g] = ad.narrow(upper, i * c.limb_out, (i + 1) * c.limb_out)
    for i, g in enumerate(_LOWER_GROUPS):
        limb_in[g] = ad.narrow(lower, i * c.limb_out, (i + 1) * c.limb_out)
    outs = []
    for g in groups:
        h = _layer(store, f"{g}.l1", limb_in[g], slope)
        outs.append(ad.affine(h, store[f"{g}.l2.w"], store[f"{g}.l2.b"]))
    raw = ad.gather_cols(ad.concat(outs, axis=1), model._inverse_order)

    layout = model.layout
    scales = np.ones(layout.dim, dtype=np.float32)
    scales[layout.azimuth_channels] = np.pi
    scales[layout.elevation_channels] = np.pi / 2
    angle_idx = np.concatenate([layout.azimuth_channels, layout.elevation_channels])
    bounded = ad.scale_tanh_channels(raw, angle_idx, scales[angle_idx])
    return model.normalizer.restore_constants(bounded)


def discriminate_logits(model: EnganModel, x) -> Tensor:
    """Pre-sigmoid realness score (the training losses work on logits)."""
    x = ad.as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[1] != model.layout.dim:
        raise ValueError(f"discriminate expects (n, {model.layout.dim}), got {x.data.shape}")
    x = model.normalizer.standardize(x)
    slope = model.config.leaky_slope
    body, _ = _hierarchy_trunk_to_body(model.discriminator, x, model, slope)
    return ad.affine(body, model.discriminator["body.l2.w"], model.discriminator["body.l2.b"])


def discriminate(model: EnganModel, x) -> Tensor:
    """Probability in (0, 1) that each pose comes from the real distribution."""
    return ad.sigmoid(discriminate_logits(model, x))


def sample_z(rng: np.random.Generator, n: int, latent_dim: int = 32) -> np.ndarray:
    """i.i.d. uniform(-1, 1) latent samples."""
    return rng.uniform(-1.0, 1.0, size=(n, latent_dim))


def interpolate(model: EnganModel, z_a, z_b, steps: int) -> np.ndarray:
    """Decoded poses along the straight latent segment from z_a to z_b."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    z_a = np.asarray(z_a, dtype=float).reshape(-1)
    z_b = np.asarray(z_b, dtype=float).reshape(-1)
    ts = np.linspace(0.0, 1.0, steps)[:, None]
    track = (1.0 - ts) * z_a[None, :] + ts * z_b[None, :]
    return decode(model, track).data


def train_step_cycle(model: EnganModel, x_real, z_rand,
                     opt_enc: Adam, opt_dec: Adam) -> dict:
    """One optimizer step of the cycle stage; the discriminator is untouched."""
    model.encoder.zero_grad()
    model.decoder.zero_grad()
    with Tape() as tape:
        x_t = Tensor(x_real)
        z_t = Tensor(z_rand)
        x_rec = decode(model, encode(model, x_t).z)
        loss_x = ad.l1(model.normalizer.standardize(x_rec),
                       Tensor(model.normalizer.standardize(x_real).astype(np.float32)))
        z_rec = encode(model, decode(model, z_t)).z
        loss_z = ad.l1(z_rec, z_t)
        total = ad.add(loss_x, loss_z)
        ad.backward(tape, total)
    opt_enc.step()
    opt_dec.step()
    return {"L_x_recon": loss_x.item(), "L_z_recon": loss_z.item(),
            "L_recon": total.item()}


def train_step_adv(model: EnganModel, x_real, z_rand, lam: float,
                   opt_enc: Adam, opt_dec: Adam, opt_disc: Adam, *,
                   input_noise: float = 0.0,
                   rng: np.random.Generator | None = None) -> dict:
    """Discriminator step, then a generator step on L_recon + lambda * L_adv.

    The generator uses the non-saturating form -log D(decode(z)); that path
    never touches the encoder, so adversarial gradients reach the decoder
    only while reconstruction gradients reach both. ``input_noise`` jitters
    the discriminator's inputs (annealed instance noise), which keeps its
    decision boundary soft enough for useful generator gradients.
    """

    def jitter(arr):
        if input_noise <= 0.0 or rng is None:
            return arr
        # per-channel scale keeps the jitter uniform in standardized space
        span = (model.normalizer.scale * model.normalizer.active).astype(arr.dtype)
        return arr + rng.normal(scale=input_noise, size=arr.shape).astype(arr.dtype) * span

    # discriminator: push D(x_real) -> 1 and D(decode(z_rand)) -> 0;
    # one-sided label smoothing keeps it from saturating against the decoder
    x_fake = decode(model, z_rand).data
    model.discriminator.zero_grad()
    with Tape() as tape:
        l_real = discriminate_logits(model, jitter(np.asarray(x_real)))
        l_fake = discriminate_logits(model, jitter(x_fake))
        real_target = np.full_like(l_real.data, model.config.real_label)
        zeros = np.zeros_like(l_fake.data)
        loss_disc = ad.add(ad.bce_logits(l_real, real_target),
                           ad.bce_logits(l_fake, zeros))
        ad.backward(tape, loss_disc)
    opt_disc.step()

    model.encoder.zero_grad()
    model.decoder.zero_grad()
    model.discriminator.zero_grad()
    with Tape() as tape:
        x_t = Tensor(x_real)
        z_t = Tensor(z_rand)
        x_rec = decode(model, encode(model, x_t).z)
        loss_x = ad.l1(model.normalizer.standardize(x_rec),
                       Tensor(model.normalizer.standardize(x_real).astype(np.float32)))
        z_rec = encode(model, decode(model, z_t)).z
        loss_z = ad.l1(z_rec, z_t)
        l_gen = discriminate_logits(model, decode(model, z_t))
        loss_adv = ad.bce_logits(l_gen, np.ones_like(l_gen.data))
        total = ad.add(ad.add(loss_x, loss_z), ad.mul(loss_adv, lam))
        ad.backward(tape, total)
    model.discriminator.zero_grad()  # generator step must not move the critic
    opt_enc.step()
    opt_dec.step()
    return {"L_x_recon": loss_x.item(), "L_z_recon": loss_z.item(),
            "L_recon": loss_x.item() + loss_z.item(),
            "L_adv": loss_adv.item(), "L_disc": loss_disc.item(), "lambda": lam}


def _batches(n: int, batch_size: int, steps: int, rng: np.random.Generator):
    """Endless shuffled minibatch index stream, deterministic under seed."""
    emitted = 0
    while emitted < steps:
        order = rng.permutation(n)
        for i in range(0, n - batch_size + 1, batch_size):
            if emitted >= steps:
                return
            yield order[i:i + batch_size]
            emitted += 1
        if n < batch_size:
            yield rng.integers(0, n, size=batch_size)
            emitted += 1


def train_engan(poses: np.ndarray, spec: SkeletonSpec, *,
                config: EnganConfig = EnganConfig(),
                stage_steps: tuple[int, int, int] = (4000, 2000, 4000),
                seed: int = 0, variant: str = "engan",
                log_every: int = 25) -> tuple[EnganModel, list[dict]]:
    """Run the training protocol on a pose corpus (n, dim).

    ``variant='engan'`` runs all three stages; ``variant='autoencoder'``
    trains pose reconstruction only (no latent cycle, no adversary) for the
    same total number of steps, as the comparison baseline.
    """
    if variant not in ("engan", "autoencoder"):
        raise ValueError(f"unknown variant {variant!r}")
    poses = np.asarray(poses, dtype=np.float32)
    model = EnganModel(spec, config, seed=seed,
                       normalizer=ChannelNormalizer.fit(poses))
    rng = np.random.default_rng(seed + 1000)
    schedule = TrainingSchedule(stage="cycle_only", lambda0=config.lambda0,
                                ramp_steps=max(stage_steps[2], 1))
    history: list[dict] = []
    step = 0

    opt_enc = Adam(model.encoder, lr=config.lr_cycle)
    opt_dec = Adam(model.decoder, lr=config.lr_cycle)

    if variant == "autoencoder":
        total_steps = sum(stage_steps)
        for idx in _batches(len(poses), config.batch_size, total_steps, rng):
            x = poses[idx]
            model.encoder.zero_grad()
            model.decoder.zero_grad()
            with Tape() as tape:
                x_t = Tensor(x)
                x_rec = decode(model, encode(model, x_t).z)
                loss_x = ad.l1(model.normalizer.standardize(x_rec),
                               Tensor(model.normalizer.standardize(x).astype(np.float32)))
                ad.backward(tape, loss_x)
            opt_enc.step()
            opt_dec.step()
            step += 1
            if step % log_every == 0 or step == 1:
                history.append({"step": step, "stage": "autoencoder",
                                "L_x_recon": loss_x.item(), "L_z_recon": 0.0,
                                "L_adv": 0.0, "lambda": 0.0})
        return model, history

    for idx in _batches(len(poses), config.batch_size, stage_steps[0], rng):
        x = poses[idx]
        z = sample_z(rng, len(idx), config.latent_dim).astype(np.float32)
        losses = train_step_cycle(model, x, z, opt_enc, opt_dec)
        step += 1
        if step % log_every == 0 or step == 1:
            history.append({"step": step, "stage": "cycle_only",
                            "L_x_recon": losses["L_x_recon"],
                            "L_z_recon": losses["L_z_recon"],
                            "L_adv": 0.0, "lambda": 0.0})

    opt_enc = Adam(model.encoder, lr=config.lr_adv)
    opt_dec = Adam(model.decoder, lr=config.lr_adv)
    opt_disc = Adam(model.discriminator, lr=config.lr_disc)

    adv_total = stage_steps[1] + stage_steps[2]
    adv_done = 0

    def instance_noise() -> float:
        # anneal to zero over the adversarial stages
        return config.input_noise * max(0.0, 1.0 - adv_done / max(adv_total, 1))

    schedule.stage = "adv_intro"
    schedule.lambda_current = schedule.lambda_at(0)
    for idx in _batches(len(poses), config.batch_size, stage_steps[1], rng):
        x = poses[idx]
        z = sample_z(rng, len(idx), config.latent_dim).astype(np.float32)
        losses = train_step_adv(model, x, z, schedule.lambda_current,
                                opt_enc, opt_dec, opt_disc,
                                input_noise=instance_noise(), rng=rng)
        step += 1
        adv_done += 1
        if step % log_every == 0 or step == 1:
            history.append({"step": step, "stage": "adv_intro", **_row(losses)})

    schedule.stage = "adv_ramp"
    ramp_step = 0
    for idx in _batches(len(poses), config.batch_size, stage_steps[2], rng):
        schedule.lambda_current = schedule.lambda_at(ramp_step)
        x = poses[idx]
        z = sample_z(rng, len(idx), config.latent_dim).astype(np.float32)
        losses = train_step_adv(model, x, z, schedule.lambda_current,
                                opt_enc, opt_dec, opt_disc,
                                input_noise=instance_noise(), rng=rng)
        step += 1
        adv_done += 1
        ramp_step += 1
        if step % log_every == 0 or step == 1:
            history.append({"step": step, "stage": "adv_ramp", **_row(losses)})
    schedule.lambda_current = schedule.lambda_at(ramp_step)
    return model, history


def _row(losses: dict) -> dict:
    return {"L_x_recon": losses["L_x_recon"], "L_z_recon": losses["L_z_recon"],
            "L_adv": losses["L_adv"], "lambda": losses["lambda"]}


def eval_critic(real_poses: np.ndarray, fake_poses: np.ndarray, spec: SkeletonSpec, *,
                config: EnganConfig = EnganConfig(), seed: int = 0,
                train_steps: int = 1200, holdout_fraction: float = 0.25) -> float:
    """Accuracy of a freshly trained critic on held-out real-vs-generated poses.

    The critic shares the discriminator architecture but is a new network;
    lower accuracy means the generated poses are harder to tell apart.
    """
    rng = np.random.default_rng(seed)
    real = np.asarray(real_poses, dtype=np.float32)
    fake = np.asarray(fake_poses, dtype=np.float32)
    n = min(len(real), len(fake))
    if n < 8:
        raise ValueError(f"need at least 8 poses per side, got {n}")
    real = real[rng.permutation(len(real))[:n]]
    fake = fake[rng.permutation(len(fake))[:n]]
    n_hold = max(2, int(n * holdout_fraction))
    real_tr, real_ho = real[n_hold:], real[:n_hold]
    fake_tr, fake_ho = fake[n_hold:], fake[:n_hold]

    critic = EnganModel(spec, config, seed=seed + 31,
                        normalizer=ChannelNormalizer.fit(real))
    model = critic  # only its discriminator store is used
    opt = Adam(model.discriminator, lr=1e-3)
    batch = min(config.batch_size, len(real_tr))
    for _ in range(train_steps):
        ir = rng.integers(0, len(real_tr), size=batch)
        i_f = rng.integers(0, len(fake_tr), size=batch)
        x = np.concatenate([real_tr[ir], fake_tr[i_f]])
        y = np.concatenate([np.ones((batch, 1)), np.zeros((batch, 1))]).astype(np.float32)
        model.discriminator.zero_grad()
        with Tape() as tape:
            logits = discriminate_logits(model, x)
            ad.backward(tape, ad.bce_logits(logits, y))
        opt.step()

    pred_real = discriminate(model, real_ho).data >= 0.5
    pred_fake = discriminate(model, fake_ho).data < 0.5
    return float((pred_real.sum() + pred_fake.sum()) / (len(real_ho) + len(fake_ho)))


def generate_poses(model: EnganModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Decode n latent samples drawn from the uniform prior."""
    return decode(model, sample_z(rng, n, model.config.latent_dim).astype(np.float32)).data


def save_engan(path, model: EnganModel, step: int = 0):
    norm = model.normalizer
    ad.save_checkpoint(path, model.stores(), step=step,
                       extra={"spec": model.spec.name, "kind": "engan",
                              "config": dataclasses.asdict(model.config),
                              "normalizer": {"mean": norm.mean.tolist(),
                                             "scale": norm.scale.tolist(),
                                             "active": norm.active.astype(int).tolist()}})


def load_engan(path, spec: SkeletonSpec,
               config: EnganConfig | None = None) -> EnganModel:
    stores, _, extra = ad.load_checkpoint(path)
    del stores
    if config is None:
        config = EnganConfig(**extra["config"]) if "config" in extra else EnganConfig()
    norm = None
    if "normalizer" in extra:
        n = extra["normalizer"]
        norm = ChannelNormalizer(
            mean=np.asarray(n["mean"], dtype=np.float32),
            scale=np.asarray(n["scale"], dtype=np.float32),
            active=np.asarray(n["active"], dtype=bool),
        )
    model = EnganModel(spec, config, seed=0, normalizer=norm)
    ad.load_checkpoint_into(path, model.stores())
    return model
