"""Parametric synthetic skeleton motions.

Real corpora cannot ship with the repository, so training and evaluation
fixtures are generated here: limb-swing "action" families animated by
forward kinematics over a rest pose, with controllable sensor noise,
per-subject body scale and speed, and optional global locomotion. The
generator uses plain rotation composition and is independent of the
canonicalization conventions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .skeleton import MotionSequence, SkeletonSpec

# rest-pose bone directions in the body frame (X left->right, Y up,
# Z forward). Consecutive bones are kept well off each other's axis: a
# child bone parallel to its parent sits at the spherical-coordinate pole
# where azimuth is ill-conditioned, which makes canonical angle tracks
# flap under sensor noise.
_REST_DIRECTIONS = {
    "spine_mid": (0, 1, 0.1), "spine_shoulder": (0, 1, -0.25), "neck": (0.05, 1, 0.28),
    "head": (0, 1, -0.2),
    "shoulder_left": (-1, 0.15, 0), "shoulder_right": (1, 0.15, 0),
    "elbow_left": (-1, -0.3, 0.05), "elbow_right": (1, -0.3, 0.05),
    "wrist_left": (-1, -0.75, 0.35), "wrist_right": (1, -0.75, 0.35),
    "hand_left": (-1, -0.5, 0.95), "hand_right": (1, -0.5, 0.95),
    "hand_tip_left": (-1, -1.1, 0.7), "hand_tip_right": (1, -1.1, 0.7),
    "thumb_left": (-0.35, 0.25, 1), "thumb_right": (0.35, 0.25, 1),
    "hip_left": (-1, -0.45, 0), "hip_right": (1, -0.45, 0),
    "knee_left": (-0.06, -1, 0.1), "knee_right": (0.06, -1, 0.1),
    "ankle_left": (0.08, -1, -0.32), "ankle_right": (-0.08, -1, -0.32),
    "foot_left": (0, -0.25, 1), "foot_right": (0, -0.25, 1),
    # sbu15 root bone
    "torso": (0, 1, 0.1),
}


def _rotation(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


@dataclass(frozen=True)
class Swing:
    """Sinusoidal rotation of one joint's bone (inherited by its subtree)."""

    joint: str
    axis: tuple
    amplitude: float      # radians
    frequency: float      # Hz
    phase: float = 0.0


@dataclass(frozen=True)
class MotionFamily:
    """One synthetic action class."""

    name: str
    swings: tuple[Swing, ...]
    root_bob: float = 0.0          # vertical oscillation amplitude, meters
    bob_frequency: float = 1.0
    velocity: tuple = (0.0, 0.0, 0.0)  # body-frame m/s locomotion
    turn_rate: float = 0.0         # yaw, rad/s
    sway: float = 0.03             # small whole-body roll, radians


def rest_directions(spec: SkeletonSpec) -> np.ndarray:
    out = np.zeros((spec.joint_count, 3))
    for i, joint in enumerate(spec.joints):
        d = np.asarray(_REST_DIRECTIONS.get(joint, (0, 1, 0)), dtype=float)
        out[i] = d / np.linalg.norm(d)
    return out


def rest_pose(spec: SkeletonSpec) -> np.ndarray:
    """Static rest skeleton (J, 3), root at the origin, reference lengths."""
    dirs = rest_directions(spec)
    lengths = spec.ref_length_array()
    parents = spec.parent_indices()
    pos = np.zeros((spec.joint_count, 3))
    for j in spec.topological_order():
        if spec.joints[j] == spec.root:
            continue
        pos[j] = pos[parents[j]] + dirs[j] * lengths[j]
    return pos


def generate_positions(spec: SkeletonSpec, family: MotionFamily, frames: int,
                       rng: np.random.Generator, *, fps: float = 30.0,
                       noise: float = 0.0, body_scale: float = 1.0,
                       speed: float = 1.0, yaw: float = 0.0,
                       origin=(0.0, 0.9, 2.5), time_offset: float = 0.0,
                       amplitude_scale: float = 1.0) -> np.ndarray:
    """World positions (T, J, 3) for one performance of a family.

    ``time_offset`` shifts the performance's phase; ``amplitude_scale``
    jointly scales all swing amplitudes (style variation).
    """
    dirs = rest_directions(spec)
    lengths = spec.ref_length_array() * body_scale
    parents = spec.parent_indices()
    root = spec.joint_index(spec.root)
    t_axis = np.arange(frames) / fps + time_offset

    swing_by_joint = {}
    for s in family.swings:
        if s.joint in spec._index:  # families may name joints absent from a spec
            swing_by_joint.setdefault(spec.joint_index(s.joint), []).append(s)

    out = np.zeros((frames, spec.joint_count, 3))
    for t_i, t in enumerate(t_axis):
        heading = yaw + family.turn_rate * speed * t
        body_rot = _rotation([0, 1, 0], heading) @ _rotation(
            [0, 0, 1], family.sway * np.sin(2 * np.pi * 0.4 * speed * t)
        )
        rot_acc = {root: body_rot}
        root_pos = np.asarray(origin, dtype=float) + body_rot @ (
            np.asarray(family.velocity) * speed * t
        )
        root_pos[1] += family.root_bob * np.sin(2 * np.pi * family.bob_frequency * speed * t)
        pos = np.zeros((spec.joint_count, 3))
        pos[root] = root_pos
        for j in spec.topological_order():
            if j == root:
                continue
            r = rot_acc[parents[j]]
            for s in swing_by_joint.get(j, ()):
                angle = amplitude_scale * s.amplitude * np.sin(
                    2 * np.pi * s.frequency * speed * t + s.phase)
                r = r @ _rotation(s.axis, angle)
            rot_acc[j] = r
            pos[j] = pos[parents[j]] + r @ (dirs[j] * lengths[j])
        out[t_i] = pos
    if noise > 0:
        out = out + rng.normal(scale=noise, size=out.shape)
    return out


def default_families(spec: SkeletonSpec) -> list[MotionFamily]:
    """Built-in action families (>= 4 classes); joints missing from a spec
    are skipped, so the same definitions animate kinect25 and sbu15."""
    return [
        MotionFamily(
            name="wave",
            swings=(
                Swing("elbow_right", (0, 0, 1), 0.9, 1.3),
                Swing("wrist_right", (0, 0, 1), 0.5, 2.6),
                Swing("hand_right", (0, 0, 1), 0.5, 2.6),
                Swing("shoulder_right", (0, 0, 1), 0.25, 1.3),
            ),
        ),
        MotionFamily(
            name="march",
            swings=(
                Swing("knee_left", (1, 0, 0), 0.7, 1.0),
                Swing("knee_right", (1, 0, 0), 0.7, 1.0, phase=np.pi),
                Swing("elbow_left", (1, 0, 0), 0.3, 1.0, phase=np.pi),
                Swing("elbow_right", (1, 0, 0), 0.3, 1.0),
            ),
            root_bob=0.03,
            bob_frequency=2.0,
        ),
        MotionFamily(
            name="bow",
            swings=(
                Swing("spine_mid", (1, 0, 0), 0.5, 0.5),
                Swing("neck", (1, 0, 0), 0.2, 0.5),
                Swing("torso", (1, 0, 0), 0.5, 0.5),
                Swing("head", (1, 0, 0), 0.2, 0.5),
            ),
        ),
        MotionFamily(
            name="squat",
            swings=(
                Swing("knee_left", (1, 0, 0), 0.8, 0.7),
                Swing("knee_right", (1, 0, 0), 0.8, 0.7),
                Swing("ankle_left", (1, 0, 0), -0.4, 0.7),
                Swing("ankle_right", (1, 0, 0), -0.4, 0.7),
                Swing("elbow_left", (0, 0, 1), 0.3, 0.7),
                Swing("elbow_right", (0, 0, 1), -0.3, 0.7),
            ),
            root_bob=0.12,
            bob_frequency=0.7,
        ),
        MotionFamily(
            name="walk",
            swings=(
                Swing("hip_left", (1, 0, 0), 0.45, 0.9),
                Swing("hip_right", (1, 0, 0), 0.45, 0.9, phase=np.pi),
                Swing("knee_left", (1, 0, 0), 0.35, 0.9, phase=0.5),
                Swing("knee_right", (1, 0, 0), 0.35, 0.9, phase=np.pi + 0.5),
                Swing("shoulder_left", (1, 0, 0), 0.25, 0.9, phase=np.pi),
                Swing("shoulder_right", (1, 0, 0), 0.25, 0.9),
            ),
            velocity=(0.0, 0.0, 0.6),
            root_bob=0.02,
            bob_frequency=1.8,
        ),
    ]


def local_motion_families(spec: SkeletonSpec) -> list[MotionFamily]:
    """Four classes sharing the same gross body motion and differing only in
    distal-joint dynamics; used by the fusion-ablation benchmark."""
    base = (
        Swing("spine_mid", (1, 0, 0), 0.08, 0.5),
        Swing("torso", (1, 0, 0), 0.08, 0.5),
        Swing("shoulder_left", (0, 0, 1), 0.06, 0.5),
        Swing("shoulder_right", (0, 0, 1), 0.06, 0.5, phase=np.pi / 3),
    )
    return [
        MotionFamily("flick_left", base + (
            Swing("wrist_left", (0, 1, 0), 0.55, 2.8),
            Swing("hand_left", (0, 0, 1), 0.5, 2.8),
            Swing("hand_tip_left", (0, 0, 1), 0.6, 2.8),
        )),
        MotionFamily("flick_right", base + (
            Swing("wrist_right", (0, 1, 0), 0.55, 2.8),
            Swing("hand_right", (0, 0, 1), 0.5, 2.8),
            Swing("hand_tip_right", (0, 0, 1), 0.6, 2.8),
        )),
        MotionFamily("tap_foot", base + (
            Swing("ankle_left", (1, 0, 0), 0.4, 2.2),
            Swing("foot_left", (1, 0, 0), 0.5, 2.2),
        )),
        MotionFamily("turn_head", base + (
            Swing("neck", (0, 1, 0), 0.45, 1.4),
            Swing("head", (0, 1, 0), 0.5, 1.4),
        )),
    ]


def shift_domain(families: list[MotionFamily], *, amplitude_scale: float = 1.35,
                 frequency_scale: float = 0.8) -> list[MotionFamily]:
    """A domain-shifted variant of a family set (transfer benchmarks)."""
    out = []
    for fam in families:
        swings = tuple(
            replace(s, amplitude=s.amplitude * amplitude_scale,
                    frequency=s.frequency * frequency_scale)
            for s in fam.swings
        )
        out.append(replace(fam, swings=swings, root_bob=fam.root_bob * amplitude_scale))
    return out


def make_dataset(spec: SkeletonSpec, *, families: list[MotionFamily] | None = None,
                 sequences_per_family: int = 12, frames: int = 60, fps: float = 30.0,
                 noise: float = 0.004, n_subjects: int = 4, n_cameras: int = 2,
                 style_jitter: float = 0.2, seed: int = 0) -> list[MotionSequence]:
    """Labeled single-subject dataset across the given families.

    Subjects vary body scale and speed; cameras vary viewpoint yaw; every
    performance gets a random phase and an amplitude style factor
    (``style_jitter``). Fully deterministic for a given seed.
    """
    families = families if families is not None else default_families(spec)
    rng = np.random.default_rng(seed)
    scales = 1.0 + 0.18 * rng.standard_normal(n_subjects).clip(-1.5, 1.5)
    speeds = 1.0 + 0.25 * rng.standard_normal(n_subjects).clip(-1.5, 1.5)
    out = []
    for label, fam in enumerate(families):
        for k in range(sequences_per_family):
            subject = int(rng.integers(0, n_subjects))
            camera = int(rng.integers(0, n_cameras))
            yaw = camera * (2 * np.pi / max(n_cameras, 1)) + rng.uniform(-0.3, 0.3)
            pos = generate_positions(
                spec, fam, frames, rng, fps=fps, noise=noise,
                body_scale=float(scales[subject]), speed=float(speeds[subject]),
                yaw=float(yaw), origin=rng.uniform([-1, 0.7, 1.5], [1, 1.1, 3.5]),
                time_offset=float(rng.uniform(0.0, 10.0)),
                amplitude_scale=float(1.0 + style_jitter * rng.uniform(-1.0, 1.0)),
            )
            out.append(MotionSequence(
                spec=spec, subjects=(pos,), action_label=label,
                subject_id=subject, camera_id=camera, fps=fps,
            ))
    return out


def make_interaction_sequence(spec: SkeletonSpec, family_a: MotionFamily,
                              family_b: MotionFamily, frames: int,
                              rng: np.random.Generator, *, fps: float = 30.0,
                              noise: float = 0.004, label: int | None = None) -> MotionSequence:
    """Two-subject sequence: performers facing each other."""
    a = generate_positions(spec, family_a, frames, rng, fps=fps, noise=noise,
                           yaw=0.0, origin=(0.0, 0.9, 1.6))
    b = generate_positions(spec, family_b, frames, rng, fps=fps, noise=noise,
                           yaw=np.pi, origin=(0.0, 0.9, 3.4))
    return MotionSequence(spec=spec, subjects=(a, b), action_label=label, fps=fps)
