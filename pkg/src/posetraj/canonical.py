"""Canonical pose representation: the translation/view/scale-invariant
per-frame parameterization and its exact inverse.

Pipeline order: root-relative shift -> temporal smoothing -> kinematic
(spherical) fit -> scale normalization -> view normalization -> global-to-
local conversion. Conventions used throughout:

* Spherical coordinates: azimuth = atan2(y, x) in (-pi, pi] about the local
  Z axis, elevation = asin(z/r) in [-pi/2, pi/2]; azimuth is forced to 0
  within 1e-12 of the poles.
* View frame: X = unit(right_hip - left_hip), Y = unit(spine direction
  orthogonalized against X), Z = X x Y.
* Euler angles: the view rotation factors as R = Rz(gamma) Ry(beta) Rx(alpha)
  (intrinsic Z-Y-X); applying R.T inverts it.
* Parent-local frames: Z = direction of the parent's own bone, X = global X
  projected orthogonal to Z (global Y when parallel within 1e-6), Y = Z x X.
  Joints whose parent is the root, or whose parent bone is degenerate, fall
  back to the identity frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .skeleton import MotionSequence, SkeletonFrame, SkeletonSpec

_POLE_TOL = 1e-12
_PARALLEL_TOL = 1e-6
_DEGENERATE_LIMB = 1e-9


class DegenerateGeometryError(ValueError):
    """A limb or view axis collapsed below numeric tolerance."""


@dataclass(frozen=True)
class RootRelativeFrame:
    """Positions with the pelvis shifted to the origin."""

    positions: np.ndarray
    root_translation: np.ndarray


@dataclass(frozen=True)
class ViewParams:
    """Per-frame view rotation (Euler angles, radians) and root translation."""

    alpha: float
    beta: float
    gamma: float
    root_translation: np.ndarray

    def rotation(self) -> np.ndarray:
        return euler_to_matrix(self.alpha, self.beta, self.gamma)


@dataclass(frozen=True)
class CanonicalPose:
    """One frame of the canonical representation.

    ``torso_coords`` are view-normalized root-relative positions of the
    torso joints; ``local_spherical`` holds (azimuth, elevation) per
    non-torso joint in its parent-local frame. ``radii`` is None when bone
    lengths are the spec reference lengths (the normalized default).
    """

    torso_coords: np.ndarray
    local_spherical: np.ndarray
    radii: np.ndarray | None = None


@dataclass(frozen=True)
class CanonicalSequence:
    """Stacked canonical poses plus the per-frame view parameters."""

    spec: SkeletonSpec
    torso_coords: np.ndarray      # (T, n_torso, 3)
    local_spherical: np.ndarray   # (T, n_local, 2)
    alpha: np.ndarray             # (T,)
    beta: np.ndarray
    gamma: np.ndarray
    root_translation: np.ndarray  # (T, 3)
    radii: np.ndarray | None = None   # (T, J) when scale normalization was off
    fps: float = 30.0

    def __post_init__(self):
        t = self.torso_coords.shape[0]
        for name in ("local_spherical", "alpha", "beta", "gamma", "root_translation"):
            if getattr(self, name).shape[0] != t:
                raise ValueError(f"{name} length differs from pose count")

    @property
    def frame_count(self) -> int:
        return self.torso_coords.shape[0]

    @property
    def poses(self) -> list[CanonicalPose]:
        return [
            CanonicalPose(
                self.torso_coords[t],
                self.local_spherical[t],
                None if self.radii is None else self.radii[t],
            )
            for t in range(self.frame_count)
        ]

    @property
    def view_track(self) -> list[ViewParams]:
        return [
            ViewParams(float(self.alpha[t]), float(self.beta[t]), float(self.gamma[t]),
                       self.root_translation[t])
            for t in range(self.frame_count)
        ]


def _as_batch(positions: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(positions, dtype=float)
    if arr.ndim == 2:
        return arr[None], True
    if arr.ndim == 3:
        return arr, False
    raise ValueError(f"expected (J, 3) or (T, J, 3), got {arr.shape}")


def root_relative(frame: SkeletonFrame, spec: SkeletonSpec) -> RootRelativeFrame:
    """Shift one frame so the pelvis sits at the origin."""
    rel, trans = root_relative_positions(frame.positions, spec)
    return RootRelativeFrame(positions=rel[0], root_translation=trans[0])


def root_relative_positions(positions: np.ndarray, spec: SkeletonSpec):
    """Batch form of :func:`root_relative`; returns (rel, translations)."""
    batch, _ = _as_batch(positions)
    root = spec.joint_index(spec.root)
    trans = batch[:, root].copy()
    return batch - trans[:, None, :], trans


def smooth_savitzky_golay(signals: np.ndarray, window: int = 9, poly_order: int = 3) -> np.ndarray:
    """Least-squares polynomial smoothing along axis 0, one channel at a time.

    Window ends are handled by fitting the edge polynomial to the truncated
    window, so polynomials up to ``poly_order`` pass through unchanged.
    """
    sig = np.asarray(signals, dtype=float)
    if window % 2 != 1 or window < 3:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    if not 0 <= poly_order < window:
        raise ValueError(f"poly_order must satisfy 0 <= order < window, got {poly_order}")
    if sig.shape[0] < window:
        raise ValueError(f"sequence length {sig.shape[0]} shorter than window {window}")
    return savgol_filter(sig, window, poly_order, axis=0, mode="interp")


def spherical_from_vectors(vecs: np.ndarray):
    """(radius, azimuth, elevation) of 3-vectors; azimuth 0 at the poles."""
    v = np.asarray(vecs, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    hxy = np.hypot(v[..., 0], v[..., 1])
    azimuth = np.where(hxy < _POLE_TOL, 0.0, np.arctan2(v[..., 1], v[..., 0]))
    azimuth = _wrap_angle(azimuth)
    with np.errstate(invalid="ignore", divide="ignore"):
        elevation = np.arcsin(np.clip(np.where(r > 0, v[..., 2] / np.where(r > 0, r, 1.0), 0.0), -1.0, 1.0))
    return r, azimuth, elevation


def vectors_from_spherical(radius, azimuth, elevation) -> np.ndarray:
    ce = np.cos(elevation)
    return np.stack(
        [radius * ce * np.cos(azimuth), radius * ce * np.sin(azimuth), radius * np.sin(elevation)],
        axis=-1,
    )


def _wrap_angle(a):
    # map into (-pi, pi]; atan2 can return exactly -pi
    return np.where(a <= -np.pi, a + 2.0 * np.pi, a)


def fit_kinematic(rel_positions: np.ndarray, spec: SkeletonSpec):
    """Spherical coordinates of each bone vector (joint minus parent).

    Returns ``(radius, azimuth, elevation)`` arrays of shape (T, J) (or (J,)
    for a single frame); root entries are zero. Raises
    :class:`DegenerateGeometryError` when a limb collapses.
    """
    batch, single = _as_batch(rel_positions)
    parents = spec.parent_indices()
    bones = batch - batch[:, parents]
    r, az, el = spherical_from_vectors(bones)
    root = spec.joint_index(spec.root)
    nonroot = np.array([i for i in range(spec.joint_count) if i != root])
    bad = r[:, nonroot] < _DEGENERATE_LIMB
    if bad.any():
        t, k = np.argwhere(bad)[0]
        raise DegenerateGeometryError(
            f"zero-length limb at joint {spec.joints[nonroot[k]]!r}, frame {t}"
        )
    r[:, root] = 0.0
    az[:, root] = 0.0
    el[:, root] = 0.0
    if single:
        return r[0], az[0], el[0]
    return r, az, el


def normalize_scale(radius, azimuth, elevation, spec: SkeletonSpec):
    """Replace fitted radii by the spec reference lengths; angles unchanged."""
    ref = spec.ref_length_array()
    return np.broadcast_to(ref, np.shape(radius)).copy(), np.asarray(azimuth), np.asarray(elevation)


def forward_kinematics(radius, azimuth, elevation, spec: SkeletonSpec) -> np.ndarray:
    """Rebuild root-relative positions from global-axes spherical bone params."""
    r = np.atleast_2d(radius)
    az = np.atleast_2d(azimuth)
    el = np.atleast_2d(elevation)
    single = np.ndim(radius) == 1
    bones = vectors_from_spherical(r, az, el)
    out = np.zeros(bones.shape)
    parents = spec.parent_indices()
    root = spec.joint_index(spec.root)
    for j in spec.topological_order():
        if j == root:
            continue
        out[:, j] = out[:, parents[j]] + bones[:, j]
    return out[0] if single else out


def _view_axes(rel_positions: np.ndarray, spec: SkeletonSpec) -> np.ndarray:
    """Rotation matrices (T, 3, 3) whose rows are the view-frame axes."""
    lh = spec.joint_index(spec.anchors["left_hip"])
    rh = spec.joint_index(spec.anchors["right_hip"])
    sp = spec.joint_index(spec.anchors["spine"])
    root = spec.joint_index(spec.root)

    x_raw = rel_positions[:, rh] - rel_positions[:, lh]
    y_raw = rel_positions[:, sp] - rel_positions[:, root]
    xn = np.linalg.norm(x_raw, axis=-1)
    if (xn < _DEGENERATE_LIMB).any():
        t = int(np.argwhere(xn < _DEGENERATE_LIMB)[0][0])
        raise DegenerateGeometryError(f"hip axis degenerate at frame {t}")
    x = x_raw / xn[:, None]
    y_orth = y_raw - np.sum(y_raw * x, axis=-1, keepdims=True) * x
    yn = np.linalg.norm(y_orth, axis=-1)
    if (yn < _DEGENERATE_LIMB).any():
        t = int(np.argwhere(yn < _DEGENERATE_LIMB)[0][0])
        raise DegenerateGeometryError(f"spine axis collinear with hips at frame {t}")
    y = y_orth / yn[:, None]
    z = np.cross(x, y)
    return np.stack([x, y, z], axis=1)


def view_normalize(rel_positions: np.ndarray, spec: SkeletonSpec):
    """Rotate root-relative positions into the skeleton's view-invariant frame.

    Returns ``(rotated, alpha, beta, gamma)``; the recovered Euler angles
    rebuild the applied rotation via :func:`euler_to_matrix`.
    """
    batch, single = _as_batch(rel_positions)
    rot = _view_axes(batch, spec)
    rotated = np.einsum("tij,tkj->tki", rot, batch)
    alpha, beta, gamma = matrix_to_euler(rot)
    if single:
        return rotated[0], float(alpha[0]), float(beta[0]), float(gamma[0])
    return rotated, alpha, beta, gamma


def euler_to_matrix(alpha, beta, gamma) -> np.ndarray:
    """R = Rz(gamma) @ Ry(beta) @ Rx(alpha), vectorized over leading dims."""
    a, b, g = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(beta, float), np.asarray(gamma, float))
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cg, sg = np.cos(g), np.sin(g)
    rot = np.empty(a.shape + (3, 3))
    rot[..., 0, 0] = cg * cb
    rot[..., 0, 1] = cg * sb * sa - sg * ca
    rot[..., 0, 2] = cg * sb * ca + sg * sa
    rot[..., 1, 0] = sg * cb
    rot[..., 1, 1] = sg * sb * sa + cg * ca
    rot[..., 1, 2] = sg * sb * ca - cg * sa
    rot[..., 2, 0] = -sb
    rot[..., 2, 1] = cb * sa
    rot[..., 2, 2] = cb * ca
    return rot


def matrix_to_euler(rot: np.ndarray):
    """Invert :func:`euler_to_matrix`; near gimbal lock alpha is set to 0."""
    r = np.asarray(rot, dtype=float)
    sb = np.clip(-r[..., 2, 0], -1.0, 1.0)
    beta = np.arcsin(sb)
    locked = np.abs(np.abs(sb) - 1.0) < 1e-12
    alpha = np.where(locked, 0.0, np.arctan2(r[..., 2, 1], r[..., 2, 2]))
    gamma = np.where(
        locked,
        np.arctan2(-r[..., 0, 1], r[..., 1, 1]),
        np.arctan2(r[..., 1, 0], r[..., 0, 0]),
    )
    return _wrap_angle(alpha), _wrap_angle(beta), _wrap_angle(gamma)


def _torso_and_local_indices(spec: SkeletonSpec):
    torso = [spec.joint_index(j) for j in spec.torso_set]
    local = [i for i in range(spec.joint_count) if i not in set(torso)]
    return torso, local


def _parent_local_frames(positions: np.ndarray, parent_idx: int, grand_idx: int | None):
    """Orthonormal frames (T, 3, 3) with rows (X, Y, Z) per convention."""
    t = positions.shape[0]
    frames = np.broadcast_to(np.eye(3), (t, 3, 3)).copy()
    if grand_idx is None:
        return frames
    bone = positions[:, parent_idx] - positions[:, grand_idx]
    norm = np.linalg.norm(bone, axis=-1)
    ok = norm >= _DEGENERATE_LIMB
    if not ok.any():
        return frames
    z = np.where(ok[:, None], bone / np.where(ok, norm, 1.0)[:, None], [0.0, 0.0, 1.0])
    ex = np.array([1.0, 0.0, 0.0])
    ey = np.array([0.0, 1.0, 0.0])
    x_proj = ex - z * z[:, 0:1]
    use_fallback = np.linalg.norm(x_proj, axis=-1) < _PARALLEL_TOL
    x_base = np.where(use_fallback[:, None], ey - z * z[:, 1:2], x_proj)
    x = x_base / np.linalg.norm(x_base, axis=-1)[:, None]
    y = np.cross(z, x)
    built = np.stack([x, y, z], axis=1)
    frames[ok] = built[ok]
    return frames


def global_to_local(view_positions: np.ndarray, spec: SkeletonSpec):
    """Split view-normalized positions into torso coordinates and
    parent-local spherical angles for the remaining joints.

    Returns ``(torso_coords, local_spherical)`` of shapes (T, n_torso, 3)
    and (T, n_local, 2).
    """
    batch, single = _as_batch(view_positions)
    torso, local = _torso_and_local_indices(spec)
    parents = spec.parent_indices()
    root = spec.joint_index(spec.root)

    torso_coords = batch[:, torso].copy()
    local_sph = np.zeros((batch.shape[0], len(local), 2))
    for k, j in enumerate(local):
        p = parents[j]
        g = None if p == root else int(parents[p])
        frames = _parent_local_frames(batch, int(p), g)
        d = batch[:, j] - batch[:, p]
        comp = np.einsum("tij,tj->ti", frames, d)
        _, az, el = spherical_from_vectors(comp)
        local_sph[:, k, 0] = az
        local_sph[:, k, 1] = el
    if single:
        return torso_coords[0], local_sph[0]
    return torso_coords, local_sph


def local_to_global(torso_coords: np.ndarray, local_spherical: np.ndarray,
                    spec: SkeletonSpec, radii: np.ndarray | None = None) -> np.ndarray:
    """Rebuild view-normalized positions from a canonical pose (exact inverse
    of :func:`global_to_local` given matching radii)."""
    tc = torso_coords if torso_coords.ndim == 3 else torso_coords[None]
    ls = local_spherical if local_spherical.ndim == 3 else local_spherical[None]
    single = torso_coords.ndim == 2
    t = tc.shape[0]
    torso, local = _torso_and_local_indices(spec)
    local_pos = {j: k for k, j in enumerate(local)}
    parents = spec.parent_indices()
    root = spec.joint_index(spec.root)
    if radii is None:
        bone_len = np.broadcast_to(spec.ref_length_array(), (t, spec.joint_count))
    else:
        bone_len = radii if radii.ndim == 2 else radii[None]

    out = np.zeros((t, spec.joint_count, 3))
    out[:, torso] = tc
    for j in spec.topological_order():
        if j not in local_pos:
            continue
        k = local_pos[j]
        p = parents[j]
        g = None if p == root else int(parents[p])
        frames = _parent_local_frames(out, int(p), g)
        d_local = vectors_from_spherical(bone_len[:, j], ls[:, k, 0], ls[:, k, 1])
        d = np.einsum("tji,tj->ti", frames, d_local)  # rows are axes: transpose applies
        out[:, j] = out[:, p] + d
    return out[0] if single else out


class PoseLayout:
    """Channel layout of a flattened canonical pose.

    Order: torso coordinates first (torso_set order, xyz per joint), then
    (azimuth, elevation) pairs for the remaining joints in index order.
    Exposes per-part-group channel lists for hierarchical networks and
    per-channel kinds for bounded output heads.
    """

    def __init__(self, spec: SkeletonSpec):
        self.spec = spec
        torso, local = _torso_and_local_indices(spec)
        self.torso_joints = torso
        self.local_joints = local
        self.n_torso = len(torso)
        self.n_local = len(local)
        self.dim = 3 * self.n_torso + 2 * self.n_local

        kinds = ["coord"] * (3 * self.n_torso)
        for _ in local:
            kinds.extend(["azimuth", "elevation"])
        self.channel_kinds = tuple(kinds)
        self.coord_channels = np.array(
            [i for i, k in enumerate(kinds) if k == "coord"], dtype=int)
        self.azimuth_channels = np.array(
            [i for i, k in enumerate(kinds) if k == "azimuth"], dtype=int)
        self.elevation_channels = np.array(
            [i for i, k in enumerate(kinds) if k == "elevation"], dtype=int)

        groups = {g: [] for g in spec.limbs}
        for slot, j in enumerate(torso):
            groups[spec.group_of(spec.joints[j])].extend(
                range(3 * slot, 3 * slot + 3))
        base = 3 * self.n_torso
        for slot, j in enumerate(local):
            groups[spec.group_of(spec.joints[j])].extend(
                (base + 2 * slot, base + 2 * slot + 1))
        self.group_channels = {g: np.array(idx, dtype=int) for g, idx in groups.items()}

    def flatten(self, cs: CanonicalSequence) -> np.ndarray:
        """(T, dim) array of pose channels."""
        t = cs.frame_count
        return np.concatenate(
            [cs.torso_coords.reshape(t, -1), cs.local_spherical.reshape(t, -1)], axis=1)

    def unflatten(self, x: np.ndarray):
        """Inverse of :meth:`flatten`; returns (torso_coords, local_spherical)."""
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        if single:
            arr = arr[None]
        torso = arr[:, : 3 * self.n_torso].reshape(-1, self.n_torso, 3)
        local = arr[:, 3 * self.n_torso:].reshape(-1, self.n_local, 2)
        if single:
            return torso[0], local[0]
        return torso, local

    def sequence_from_flat(self, x: np.ndarray, alpha, beta, gamma,
                           root_translation, fps: float = 30.0) -> CanonicalSequence:
        torso, local = self.unflatten(x)
        return CanonicalSequence(
            spec=self.spec, torso_coords=torso, local_spherical=local,
            alpha=np.asarray(alpha, float), beta=np.asarray(beta, float),
            gamma=np.asarray(gamma, float),
            root_translation=np.asarray(root_translation, float), fps=fps,
        )


def pose_layout(spec: SkeletonSpec) -> PoseLayout:
    return PoseLayout(spec)


def canonicalize_sequence(seq: MotionSequence, *, subject: int = 0, smooth: bool = True,
                          window: int = 9, poly_order: int = 3,
                          normalize: bool = True) -> CanonicalSequence:
    """Run the full canonicalization pipeline on one subject stream.

    With ``normalize=False`` the fitted per-frame radii are kept (exact
    world-space round trip via :func:`invert_canonical`); the default
    replaces them with the spec reference lengths, which makes the output
    invariant to uniform scaling.
    """
    spec = seq.spec
    positions = seq.subjects[subject]
    rel, trans = root_relative_positions(positions, spec)
    if smooth:
        flat = rel.reshape(rel.shape[0], -1)
        rel = smooth_savitzky_golay(flat, window, poly_order).reshape(rel.shape)
    r, az, el = fit_kinematic(rel, spec)
    if normalize:
        r, az, el = normalize_scale(r, az, el, spec)
    rebuilt = forward_kinematics(r, az, el, spec)
    view_pos, alpha, beta, gamma = view_normalize(rebuilt, spec)
    torso_coords, local_sph = global_to_local(view_pos, spec)
    return CanonicalSequence(
        spec=spec,
        torso_coords=torso_coords,
        local_spherical=local_sph,
        alpha=np.asarray(alpha),
        beta=np.asarray(beta),
        gamma=np.asarray(gamma),
        root_translation=trans,
        radii=None if normalize else r,
        fps=seq.fps,
    )


def invert_canonical(cs: CanonicalSequence, spec: SkeletonSpec | None = None,
                     action_label: int | None = None) -> MotionSequence:
    """Reassemble world-space skeletons from a canonical sequence."""
    spec = spec or cs.spec
    view_pos = local_to_global(cs.torso_coords, cs.local_spherical, spec, cs.radii)
    rot = euler_to_matrix(cs.alpha, cs.beta, cs.gamma)
    world = np.einsum("tji,tkj->tki", rot, view_pos) + cs.root_translation[:, None, :]
    return MotionSequence(spec=spec, subjects=(world,), fps=cs.fps, action_label=action_label)
