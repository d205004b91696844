import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from posetraj.skeleton import (
    MotionSequence,
    SkeletonFrame,
    SkeletonSpec,
    build_spec,
    limb_length,
    spec_from_json,
    spec_to_json,
    validate_spec,
)


@pytest.fixture(scope="module")
def kinect():
    return build_spec("kinect25")


@pytest.fixture(scope="module")
def sbu():
    return build_spec("sbu15")


def test_kinect25_shape(kinect):
    assert kinect.joint_count == 25
    assert kinect.parent[kinect.root] == kinect.root
    assert len(kinect.limbs) == 5


def test_sbu15_shape(sbu):
    assert sbu.joint_count == 15
    assert sbu.parent[sbu.root] == sbu.root
    assert len(sbu.limbs) == 5


@pytest.mark.parametrize("kind", ["kinect25", "sbu15"])
def test_partition_property(kind):
    spec = build_spec(kind)
    memberships = sum(len(v) for v in spec.limbs.values())
    assert memberships == spec.joint_count
    for j in spec.joints:
        assert sum(j in v for v in spec.limbs.values()) == 1


@pytest.mark.parametrize("kind", ["kinect25", "sbu15"])
def test_builtin_specs_validate(kind):
    assert validate_spec(build_spec(kind)) == []


def test_torso_subset_of_trunk(kinect, sbu):
    for spec in (kinect, sbu):
        assert set(spec.torso_set) <= set(spec.limbs["trunk"])


def test_validate_catches_cycle(kinect):
    parent = dict(kinect.parent)
    # 2-node cycle between wrist and hand
    parent["wrist_left"] = "hand_left"
    parent["hand_left"] = "wrist_left"
    bad = SkeletonSpec(
        name="broken", joints=kinect.joints, parent=parent, limbs=kinect.limbs,
        torso_set=kinect.torso_set, ref_lengths=kinect.ref_lengths, anchors=kinect.anchors,
    )
    assert any("tree" in v or "cycle" in v or "root" in v for v in validate_spec(bad))


def test_validate_catches_zero_length(kinect):
    lengths = dict(kinect.ref_lengths)
    lengths["head"] = 0.0
    bad = SkeletonSpec(
        name="broken", joints=kinect.joints, parent=kinect.parent, limbs=kinect.limbs,
        torso_set=kinect.torso_set, ref_lengths=lengths, anchors=kinect.anchors,
    )
    assert any("non-positive" in v for v in validate_spec(bad))


def _random_frame(spec, rng):
    return SkeletonFrame(rng.normal(size=(spec.joint_count, 3)))


def test_limb_length_unit(kinect):
    pos = np.zeros((25, 3))
    pos[kinect.joint_index("spine_mid")] = [0.0, 1.0, 0.0]
    frame = SkeletonFrame(pos)
    assert limb_length(kinect, frame, "spine_mid") == pytest.approx(1.0)


def test_limb_length_degenerate(kinect):
    frame = SkeletonFrame(np.zeros((25, 3)))
    assert limb_length(kinect, frame, "head") == 0.0


def test_limb_length_homogeneous(kinect):
    rng = np.random.default_rng(0)
    frame = _random_frame(kinect, rng)
    doubled = SkeletonFrame(frame.positions * 2.0)
    for joint in ("head", "knee_left", "hand_tip_right"):
        assert limb_length(kinect, doubled, joint) == pytest.approx(
            2.0 * limb_length(kinect, frame, joint)
        )


def test_limb_length_rigid_invariance(kinect):
    rng = np.random.default_rng(1)
    frame = _random_frame(kinect, rng)
    for _ in range(20):
        rot = Rotation.random(rng=rng).as_matrix()
        shift = rng.normal(size=3)
        moved = SkeletonFrame(frame.positions @ rot.T + shift)
        for joint in ("neck", "foot_right", "thumb_left"):
            assert limb_length(kinect, moved, joint) == pytest.approx(
                limb_length(kinect, frame, joint), abs=1e-9
            )


def test_limb_length_unknown_joint(kinect):
    with pytest.raises(KeyError):
        limb_length(kinect, SkeletonFrame(np.zeros((25, 3))), "tail")


def test_root_has_no_limb(kinect):
    with pytest.raises(ValueError):
        limb_length(kinect, SkeletonFrame(np.zeros((25, 3))), "spine_base")


def test_sequence_needs_two_frames(kinect):
    with pytest.raises(ValueError):
        MotionSequence(spec=kinect, subjects=(np.zeros((1, 25, 3)),))


def test_sequence_rejects_unequal_streams(kinect):
    with pytest.raises(ValueError):
        MotionSequence(spec=kinect, subjects=(np.zeros((4, 25, 3)), np.zeros((5, 25, 3))))


def test_sequence_rejects_nonfinite(kinect):
    arr = np.zeros((3, 25, 3))
    arr[1, 0, 0] = np.nan
    with pytest.raises(ValueError):
        MotionSequence(spec=kinect, subjects=(arr,))


def test_topological_order_parents_first(kinect):
    order = kinect.topological_order()
    parents = kinect.parent_indices()
    seen = set()
    for i in order:
        assert parents[i] in seen or parents[i] == i
        seen.add(i)
    assert len(order) == 25


def test_spec_json_round_trip(kinect):
    again = spec_from_json(spec_to_json(kinect))
    assert again.joints == kinect.joints
    assert again.parent == kinect.parent
    assert again.ref_lengths == kinect.ref_lengths
    assert again.torso_set == kinect.torso_set


def test_spec_json_rejects_garbage():
    with pytest.raises(ValueError):
        spec_from_json('{"format": "something-else"}')
