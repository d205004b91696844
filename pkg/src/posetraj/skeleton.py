"""Skeleton topologies, frame/sequence containers, and geometric primitives.

A skeleton is a rooted kinematic tree (pelvis at the root) whose joints are
partitioned into five part groups: two arms, two legs and one trunk. All
containers are immutable value objects; downstream code treats them as
shareable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

PART_GROUPS = ("trunk", "left_arm", "right_arm", "left_leg", "right_leg")


@dataclass(frozen=True)
class SkeletonSpec:
    """Named joint hierarchy with part groups and reference bone lengths.

    Attributes
    ----------
    name : str
        Topology identifier, e.g. ``"kinect25"``.
    joints : tuple[str, ...]
        Ordered joint names (length J).
    parent : dict[str, str]
        Joint -> parent joint. The root (pelvis) is its own parent.
    limbs : dict[str, tuple[str, ...]]
        The five part groups; together they partition ``joints``.
    torso_set : tuple[str, ...]
        Joints kept in the global (view-normalized) frame during
        canonicalization. Always a subset of the trunk group.
    ref_lengths : dict[str, float]
        Joint -> length of the bone to its parent, meters. Root excluded.
    anchors : dict[str, str]
        Joints that define the view-invariant axes: ``left_hip``,
        ``right_hip`` and ``spine``.
    """

    name: str
    joints: tuple[str, ...]
    parent: dict[str, str]
    limbs: dict[str, tuple[str, ...]]
    torso_set: tuple[str, ...]
    ref_lengths: dict[str, float]
    anchors: dict[str, str]

    def __post_init__(self):
        index = {j: i for i, j in enumerate(self.joints)}
        object.__setattr__(self, "_index", index)

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def root(self) -> str:
        for j in self.joints:
            if self.parent.get(j) == j:
                return j
        raise ValueError(f"spec {self.name!r} has no root joint")

    def joint_index(self, joint: str) -> int:
        try:
            return self._index[joint]
        except KeyError:
            raise KeyError(f"unknown joint {joint!r} in spec {self.name!r}") from None

    def parent_indices(self) -> np.ndarray:
        """Per-joint parent index; the root points at itself."""
        return np.array([self.joint_index(self.parent[j]) for j in self.joints])

    def topological_order(self) -> list[int]:
        """Joint indices ordered so parents precede children."""
        parents = self.parent_indices()
        root = self.joint_index(self.root)
        order, seen = [root], {root}
        while len(order) < self.joint_count:
            for i in range(self.joint_count):
                if i not in seen and parents[i] in seen:
                    order.append(i)
                    seen.add(i)
        return order

    def group_of(self, joint: str) -> str:
        for g, members in self.limbs.items():
            if joint in members:
                return g
        raise KeyError(f"joint {joint!r} belongs to no part group")

    def ref_length_array(self) -> np.ndarray:
        """Per-joint reference bone length; 0.0 at the root."""
        out = np.zeros(self.joint_count)
        for j, l in self.ref_lengths.items():
            out[self.joint_index(j)] = l
        return out


@dataclass(frozen=True)
class SkeletonFrame:
    """One time sample: per-joint world positions (J, 3) in meters."""

    positions: np.ndarray
    timestamp_index: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (J, 3), got {pos.shape}")
        if not np.isfinite(pos).all():
            raise ValueError("positions contain non-finite values")
        object.__setattr__(self, "positions", pos)


@dataclass(frozen=True)
class MotionSequence:
    """Ordered skeleton frames for one or two tracked subjects.

    ``subjects`` holds one (T, J, 3) array per tracked body; all streams
    share the same spec, length and fps.
    """

    spec: SkeletonSpec
    subjects: tuple[np.ndarray, ...]
    action_label: int | None = None
    subject_id: int | None = None
    camera_id: int | None = None
    fps: float = 30.0

    def __post_init__(self):
        if not 1 <= len(self.subjects) <= 2:
            raise ValueError(f"expected 1 or 2 subject streams, got {len(self.subjects)}")
        streams = []
        length = None
        for s in self.subjects:
            arr = np.asarray(s, dtype=float)
            if arr.ndim != 3 or arr.shape[1:] != (self.spec.joint_count, 3):
                raise ValueError(
                    f"subject stream must be (T, {self.spec.joint_count}, 3), got {arr.shape}"
                )
            if arr.shape[0] < 2:
                raise ValueError("sequences need at least 2 frames")
            if not np.isfinite(arr).all():
                raise ValueError("subject stream contains non-finite values")
            if length is None:
                length = arr.shape[0]
            elif arr.shape[0] != length:
                raise ValueError("two-subject streams must have equal length")
            streams.append(arr)
        object.__setattr__(self, "subjects", tuple(streams))

    @property
    def frame_count(self) -> int:
        return self.subjects[0].shape[0]

    @property
    def frames(self) -> list[SkeletonFrame]:
        """Frames of the primary subject."""
        return [SkeletonFrame(p, t) for t, p in enumerate(self.subjects[0])]

    def primary(self) -> np.ndarray:
        return self.subjects[0]

    def with_positions(self, subjects: tuple[np.ndarray, ...]) -> "MotionSequence":
        return MotionSequence(
            spec=self.spec,
            subjects=subjects,
            action_label=self.action_label,
            subject_id=self.subject_id,
            camera_id=self.camera_id,
            fps=self.fps,
        )


# Kinect-v2 topology: 25 joints, SpineBase at the root. Shoulders and hips
# sit in the trunk group so the torso set stays inside one group; arm groups
# start at the elbow and leg groups at the knee.
_KINECT25_JOINTS = (
    "spine_base", "spine_mid", "neck", "head",
    "shoulder_left", "elbow_left", "wrist_left", "hand_left",
    "shoulder_right", "elbow_right", "wrist_right", "hand_right",
    "hip_left", "knee_left", "ankle_left", "foot_left",
    "hip_right", "knee_right", "ankle_right", "foot_right",
    "spine_shoulder", "hand_tip_left", "thumb_left", "hand_tip_right", "thumb_right",
)

_KINECT25_PARENT = {
    "spine_base": "spine_base",
    "spine_mid": "spine_base",
    "spine_shoulder": "spine_mid",
    "neck": "spine_shoulder",
    "head": "neck",
    "shoulder_left": "spine_shoulder",
    "elbow_left": "shoulder_left",
    "wrist_left": "elbow_left",
    "hand_left": "wrist_left",
    "hand_tip_left": "hand_left",
    "thumb_left": "hand_left",
    "shoulder_right": "spine_shoulder",
    "elbow_right": "shoulder_right",
    "wrist_right": "elbow_right",
    "hand_right": "wrist_right",
    "hand_tip_right": "hand_right",
    "thumb_right": "hand_right",
    "hip_left": "spine_base",
    "knee_left": "hip_left",
    "ankle_left": "knee_left",
    "foot_left": "ankle_left",
    "hip_right": "spine_base",
    "knee_right": "hip_right",
    "ankle_right": "knee_right",
    "foot_right": "ankle_right",
}

_KINECT25_LIMBS = {
    "trunk": (
        "spine_base", "spine_mid", "spine_shoulder", "neck", "head",
        "shoulder_left", "shoulder_right", "hip_left", "hip_right",
    ),
    "left_arm": ("elbow_left", "wrist_left", "hand_left", "hand_tip_left", "thumb_left"),
    "right_arm": ("elbow_right", "wrist_right", "hand_right", "hand_tip_right", "thumb_right"),
    "left_leg": ("knee_left", "ankle_left", "foot_left"),
    "right_leg": ("knee_right", "ankle_right", "foot_right"),
}

_KINECT25_TORSO = (
    "spine_base", "spine_mid", "spine_shoulder", "head",
    "shoulder_left", "shoulder_right", "hip_left", "hip_right",
)

_KINECT25_REF_LENGTHS = {
    "spine_mid": 0.26, "spine_shoulder": 0.24, "neck": 0.09, "head": 0.17,
    "shoulder_left": 0.18, "elbow_left": 0.28, "wrist_left": 0.25,
    "hand_left": 0.08, "hand_tip_left": 0.08, "thumb_left": 0.05,
    "shoulder_right": 0.18, "elbow_right": 0.28, "wrist_right": 0.25,
    "hand_right": 0.08, "hand_tip_right": 0.08, "thumb_right": 0.05,
    "hip_left": 0.10, "knee_left": 0.41, "ankle_left": 0.39, "foot_left": 0.14,
    "hip_right": 0.10, "knee_right": 0.41, "ankle_right": 0.39, "foot_right": 0.14,
}

# SBU topology: 15 joints, the torso joint remapped to the pelvis role.
_SBU15_JOINTS = (
    "head", "neck", "torso",
    "shoulder_left", "elbow_left", "hand_left",
    "shoulder_right", "elbow_right", "hand_right",
    "hip_left", "knee_left", "foot_left",
    "hip_right", "knee_right", "foot_right",
)

_SBU15_PARENT = {
    "torso": "torso",
    "neck": "torso",
    "head": "neck",
    "shoulder_left": "neck",
    "elbow_left": "shoulder_left",
    "hand_left": "elbow_left",
    "shoulder_right": "neck",
    "elbow_right": "shoulder_right",
    "hand_right": "elbow_right",
    "hip_left": "torso",
    "knee_left": "hip_left",
    "foot_left": "knee_left",
    "hip_right": "torso",
    "knee_right": "hip_right",
    "foot_right": "knee_right",
}

_SBU15_LIMBS = {
    "trunk": ("torso", "neck", "head", "shoulder_left", "shoulder_right", "hip_left", "hip_right"),
    "left_arm": ("elbow_left", "hand_left"),
    "right_arm": ("elbow_right", "hand_right"),
    "left_leg": ("knee_left", "foot_left"),
    "right_leg": ("knee_right", "foot_right"),
}

_SBU15_TORSO = ("torso", "neck", "head", "shoulder_left", "shoulder_right", "hip_left", "hip_right")

_SBU15_REF_LENGTHS = {
    "neck": 0.26, "head": 0.17,
    "shoulder_left": 0.18, "elbow_left": 0.28, "hand_left": 0.30,
    "shoulder_right": 0.18, "elbow_right": 0.28, "hand_right": 0.30,
    "hip_left": 0.12, "knee_left": 0.41, "foot_left": 0.43,
    "hip_right": 0.12, "knee_right": 0.41, "foot_right": 0.43,
}


def build_spec(kind: str) -> SkeletonSpec:
    """Return a validated built-in skeleton spec (``kinect25`` or ``sbu15``)."""
    if kind == "kinect25":
        spec = SkeletonSpec(
            name="kinect25",
            joints=_KINECT25_JOINTS,
            parent=dict(_KINECT25_PARENT),
            limbs={k: tuple(v) for k, v in _KINECT25_LIMBS.items()},
            torso_set=_KINECT25_TORSO,
            ref_lengths=dict(_KINECT25_REF_LENGTHS),
            anchors={"left_hip": "hip_left", "right_hip": "hip_right", "spine": "spine_mid"},
        )
    elif kind == "sbu15":
        spec = SkeletonSpec(
            name="sbu15",
            joints=_SBU15_JOINTS,
            parent=dict(_SBU15_PARENT),
            limbs={k: tuple(v) for k, v in _SBU15_LIMBS.items()},
            torso_set=_SBU15_TORSO,
            ref_lengths=dict(_SBU15_REF_LENGTHS),
            anchors={"left_hip": "hip_left", "right_hip": "hip_right", "spine": "neck"},
        )
    else:
        raise ValueError(f"unknown skeleton kind {kind!r}; expected 'kinect25' or 'sbu15'")
    violations = validate_spec(spec)
    if violations:
        raise AssertionError(f"built-in spec {kind} invalid: {violations}")
    return spec


def validate_spec(spec: SkeletonSpec) -> list[str]:
    """Check every spec invariant; returns violations (empty list = valid)."""
    out = []
    joints = set(spec.joints)
    if len(joints) != len(spec.joints):
        out.append("duplicate joint names")

    roots = [j for j in spec.joints if spec.parent.get(j) == j]
    if len(roots) != 1:
        out.append(f"expected exactly one root, found {len(roots)}")
    missing = [j for j in spec.joints if j not in spec.parent]
    if missing:
        out.append(f"joints without parent entry: {missing}")
    unknown_parents = [p for p in spec.parent.values() if p not in joints]
    if unknown_parents:
        out.append(f"parents not in joint list: {sorted(set(unknown_parents))}")

    # Tree check: walking parent links from every joint must reach the root
    # without revisiting a joint.
    if len(roots) == 1 and not missing and not unknown_parents:
        root = roots[0]
        for j in spec.joints:
            seen = set()
            cur = j
            while cur != root:
                if cur in seen:
                    out.append(f"parent map is not a tree (cycle through {j!r})")
                    break
                seen.add(cur)
                cur = spec.parent[cur]
                if len(seen) > len(spec.joints):
                    out.append(f"parent chain from {j!r} never reaches root")
                    break
            else:
                continue
            break

    if set(spec.limbs) != set(PART_GROUPS):
        out.append(f"part groups must be exactly {PART_GROUPS}")
    else:
        counts = {j: 0 for j in spec.joints}
        for members in spec.limbs.values():
            for j in members:
                if j in counts:
                    counts[j] += 1
                else:
                    out.append(f"group member {j!r} is not a joint")
        off = [j for j, c in counts.items() if c != 1]
        if off:
            out.append(f"joints not in exactly one part group: {off}")
        trunk = set(spec.limbs.get("trunk", ()))
        if not set(spec.torso_set) <= trunk:
            out.append("torso_set is not a subset of the trunk group")

    nonroot = [j for j in spec.joints if spec.parent.get(j) != j]
    missing_len = [j for j in nonroot if j not in spec.ref_lengths]
    if missing_len:
        out.append(f"missing ref_lengths for: {missing_len}")
    bad_len = [j for j, l in spec.ref_lengths.items() if not l > 0]
    if bad_len:
        out.append(f"non-positive ref_lengths for: {bad_len}")

    for key in ("left_hip", "right_hip", "spine"):
        if spec.anchors.get(key) not in joints:
            out.append(f"anchor {key!r} missing or unknown")
    return out


def limb_length(spec: SkeletonSpec, frame: SkeletonFrame, joint: str) -> float:
    """Euclidean distance from ``joint`` to its parent in one frame."""
    parent = spec.parent.get(joint)
    if parent is None:
        raise KeyError(f"unknown joint {joint!r}")
    if parent == joint:
        raise ValueError(f"{joint!r} is the root; it has no limb")
    d = frame.positions[spec.joint_index(joint)] - frame.positions[spec.joint_index(parent)]
    return float(np.linalg.norm(d))


SPEC_FORMAT_VERSION = 1


def spec_to_json(spec: SkeletonSpec) -> str:
    doc = {
        "format": "posetraj-skeleton-spec",
        "version": SPEC_FORMAT_VERSION,
        "name": spec.name,
        "joints": list(spec.joints),
        "parent": spec.parent,
        "limbs": {k: list(v) for k, v in spec.limbs.items()},
        "torso_set": list(spec.torso_set),
        "ref_lengths": spec.ref_lengths,
        "anchors": spec.anchors,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def spec_from_json(text: str) -> SkeletonSpec:
    doc = json.loads(text)
    if doc.get("format") != "posetraj-skeleton-spec":
        raise ValueError("not a skeleton spec document")
    if doc.get("version") != SPEC_FORMAT_VERSION:
        raise ValueError(f"unsupported spec version {doc.get('version')}")
    spec = SkeletonSpec(
        name=doc["name"],
        joints=tuple(doc["joints"]),
        parent=dict(doc["parent"]),
        limbs={k: tuple(v) for k, v in doc["limbs"].items()},
        torso_set=tuple(doc["torso_set"]),
        ref_lengths={k: float(v) for k, v in doc["ref_lengths"].items()},
        anchors=dict(doc["anchors"]),
    )
    violations = validate_spec(spec)
    if violations:
        raise ValueError(f"loaded spec is invalid: {violations}")
    return spec
