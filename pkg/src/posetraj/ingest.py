"""Dataset parsing, the internal sequence format, and reproducible splits.

The internal format is gzip-compressed JSON Lines: one header record, one
record per frame, and a trailing sha256 checksum line, so files are
diffable, streamable and bit-exact on round trip.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .skeleton import MotionSequence, SkeletonSpec, build_spec

MOTION_FORMAT_VERSION = 1

_NTU_NAME = re.compile(r"S(\d{3})C(\d{3})P(\d{3})R(\d{3})A(\d{3})")
_NTU_JOINTS = 25
_NTU_BODY_FIELDS = 10
_NTU_JOINT_FIELDS = 12


class ParseError(ValueError):
    """A dataset file violates its published format."""


def parse_ntu_skeleton(data: bytes | str, name: str | None = None,
                       spec: SkeletonSpec | None = None) -> MotionSequence:
    """Parse one NTU ``.skeleton`` text file.

    Frames without any tracked body are dropped; a frame with more than two
    bodies, a joint count other than 25, or a malformed header is rejected.
    Action/subject/camera metadata is taken from ``name`` when it follows
    the ``SsssCcccPpppRrrrAaaa`` convention.
    """
    spec = spec or build_spec("kinect25")
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    tokens = text.split("\n")
    pos = 0

    def next_line() -> str:
        nonlocal pos
        while pos < len(tokens):
            line = tokens[pos].strip()
            pos += 1
            if line:
                return line
        raise ParseError("unexpected end of file")

    try:
        frame_count = int(next_line())
    except (ParseError, ValueError) as exc:
        raise ParseError(f"malformed header: {exc}") from None
    if frame_count <= 0:
        raise ParseError(f"malformed header: frame count {frame_count}")

    frames: list[dict[str, np.ndarray]] = []
    for f in range(frame_count):
        try:
            body_count = int(next_line())
        except ValueError:
            raise ParseError(f"malformed body count at frame {f}") from None
        if body_count > 2:
            raise ParseError(f"frame {f} has {body_count} bodies (limit 2)")
        bodies = {}
        for _ in range(body_count):
            info = next_line().split()
            if len(info) != _NTU_BODY_FIELDS:
                raise ParseError(f"malformed body info at frame {f}")
            body_id = info[0]
            try:
                joint_count = int(next_line())
            except ValueError:
                raise ParseError(f"malformed joint count at frame {f}") from None
            if joint_count != _NTU_JOINTS:
                raise ParseError(
                    f"frame {f} claims {joint_count} joints per body, expected {_NTU_JOINTS}"
                )
            joints = np.zeros((_NTU_JOINTS, 3))
            for j in range(joint_count):
                vals = next_line().split()
                if len(vals) != _NTU_JOINT_FIELDS:
                    raise ParseError(f"malformed joint line at frame {f}, joint {j}")
                joints[j] = [float(vals[0]), float(vals[1]), float(vals[2])]
            bodies[body_id] = joints
        if bodies:
            frames.append(bodies)

    if not frames:
        raise ParseError("no frames with tracked bodies")
    body_ids = sorted({b for fr in frames for b in fr})
    if len(body_ids) > 2:
        raise ParseError(f"more than two tracked bodies across file: {body_ids}")
    # keep only frames where every tracked body is present, so streams align
    kept = [fr for fr in frames if all(b in fr for b in body_ids)]
    if len(kept) < 2:
        raise ParseError("fewer than 2 frames with all bodies tracked")
    streams = tuple(np.stack([fr[b] for fr in kept]) for b in body_ids)

    action = subject = camera = None
    if name:
        m = _NTU_NAME.search(name)
        if m:
            camera = int(m.group(2))
            subject = int(m.group(3))
            action = int(m.group(5)) - 1  # published labels are 1-based
    return MotionSequence(
        spec=spec, subjects=streams, action_label=action,
        subject_id=subject, camera_id=camera, fps=30.0,
    )


def parse_sbu_sequence(data: bytes | str, *, action_label: int | None = None,
                       subject_id: int | None = None,
                       spec: SkeletonSpec | None = None) -> MotionSequence:
    """Parse an SBU interaction ``skeleton_pos.txt`` file.

    Each line is ``frame,x1,y1,z1,...`` with 90 coordinate values: two
    performers times 15 joints. Coordinates are kept exactly as published
    (the pipeline is scale invariant, so no unit conversion is applied).
    """
    spec = spec or build_spec("sbu15")
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    rows = []
    for i, line in enumerate(text.strip().splitlines()):
        parts = [p for p in line.strip().split(",") if p != ""]
        if len(parts) != 1 + 2 * 15 * 3:
            raise ParseError(f"line {i}: expected 91 comma-separated values, got {len(parts)}")
        rows.append([float(p) for p in parts[1:]])
    if len(rows) < 2:
        raise ParseError("fewer than 2 frames")
    arr = np.asarray(rows).reshape(len(rows), 2, 15, 3)
    return MotionSequence(
        spec=spec, subjects=(arr[:, 0], arr[:, 1]),
        action_label=action_label, subject_id=subject_id, fps=15.0,
    )


def write_sequence(path, seq: MotionSequence):
    """Write a sequence in the internal checksummed JSONL format."""
    header = {
        "format": "posetraj-motion",
        "version": MOTION_FORMAT_VERSION,
        "spec": seq.spec.name,
        "fps": seq.fps,
        "action_label": seq.action_label,
        "subject_id": seq.subject_id,
        "camera_id": seq.camera_id,
        "subject_count": len(seq.subjects),
        "frame_count": seq.frame_count,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for t in range(seq.frame_count):
        rec = {"t": t, "s": [s[t].tolist() for s in seq.subjects]}
        lines.append(json.dumps(rec, sort_keys=True))
    body = "".join(line + "\n" for line in lines)
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        fh.write(body)
        fh.write(json.dumps({"checksum": digest}) + "\n")


def read_sequence(path, spec: SkeletonSpec | None = None) -> MotionSequence:
    """Read an internal-format sequence; verifies version and checksum."""
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        lines = fh.readlines()
    if len(lines) < 3:
        raise ParseError(f"{path}: truncated file")
    try:
        trailer = json.loads(lines[-1])
    except json.JSONDecodeError:
        raise ParseError(f"{path}: trailing checksum record missing") from None
    if "checksum" not in trailer:
        raise ParseError(f"{path}: trailing checksum record missing")
    body = "".join(lines[:-1])
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if digest != trailer["checksum"]:
        raise ParseError(f"{path}: checksum mismatch (truncated or corrupted)")

    header = json.loads(lines[0])
    if header.get("format") != "posetraj-motion":
        raise ParseError(f"{path}: not a motion file")
    if header.get("version") != MOTION_FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported version {header.get('version')}")
    spec = spec or build_spec(header["spec"])
    if spec.name != header["spec"]:
        raise ParseError(f"{path}: written with spec {header['spec']!r}, not {spec.name!r}")

    t_count = header["frame_count"]
    s_count = header["subject_count"]
    streams = [np.zeros((t_count, spec.joint_count, 3)) for _ in range(s_count)]
    records = lines[1:-1]
    if len(records) != t_count:
        raise ParseError(f"{path}: frame records ({len(records)}) != header count ({t_count})")
    for line in records:
        rec = json.loads(line)
        for s in range(s_count):
            streams[s][rec["t"]] = rec["s"][s]
    return MotionSequence(
        spec=spec, subjects=tuple(streams),
        action_label=header["action_label"], subject_id=header["subject_id"],
        camera_id=header["camera_id"], fps=header["fps"],
    )


CANONICAL_FORMAT_VERSION = 1


def write_canonical_sequence(path, cs, params: dict | None = None):
    """Store a canonical sequence with its pipeline-parameters header."""
    header = {
        "format": "posetraj-canonical",
        "version": CANONICAL_FORMAT_VERSION,
        "spec": cs.spec.name,
        "fps": cs.fps,
        "frame_count": cs.frame_count,
        "has_radii": cs.radii is not None,
        "params": params or {},
    }
    lines = [json.dumps(header, sort_keys=True)]
    for t in range(cs.frame_count):
        rec = {
            "t": t,
            "torso": cs.torso_coords[t].tolist(),
            "local": cs.local_spherical[t].tolist(),
            "view": [float(cs.alpha[t]), float(cs.beta[t]), float(cs.gamma[t])],
            "trans": cs.root_translation[t].tolist(),
        }
        if cs.radii is not None:
            rec["radii"] = cs.radii[t].tolist()
        lines.append(json.dumps(rec, sort_keys=True))
    body = "".join(line + "\n" for line in lines)
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        fh.write(body)
        fh.write(json.dumps({"checksum": digest}) + "\n")


def read_canonical_sequence(path, spec: SkeletonSpec | None = None):
    """Read a canonical sequence; returns (CanonicalSequence, params)."""
    from .canonical import CanonicalSequence

    with gzip.open(path, "rt", encoding="utf-8") as fh:
        lines = fh.readlines()
    if len(lines) < 3:
        raise ParseError(f"{path}: truncated file")
    trailer = json.loads(lines[-1])
    body = "".join(lines[:-1])
    if hashlib.sha256(body.encode("utf-8")).hexdigest() != trailer.get("checksum"):
        raise ParseError(f"{path}: checksum mismatch (truncated or corrupted)")
    header = json.loads(lines[0])
    if header.get("format") != "posetraj-canonical":
        raise ParseError(f"{path}: not a canonical-sequence file")
    if header.get("version") != CANONICAL_FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported version {header.get('version')}")
    spec = spec or build_spec(header["spec"])
    t_count = header["frame_count"]
    records = [json.loads(line) for line in lines[1:-1]]
    if len(records) != t_count:
        raise ParseError(f"{path}: frame records != header count")
    torso = np.zeros((t_count, len(records[0]["torso"]), 3))
    local = np.zeros((t_count, len(records[0]["local"]), 2))
    alpha = np.zeros(t_count)
    beta = np.zeros(t_count)
    gamma = np.zeros(t_count)
    trans = np.zeros((t_count, 3))
    radii = np.zeros((t_count, spec.joint_count)) if header["has_radii"] else None
    for rec in records:
        t = rec["t"]
        torso[t] = rec["torso"]
        local[t] = rec["local"]
        alpha[t], beta[t], gamma[t] = rec["view"]
        trans[t] = rec["trans"]
        if radii is not None:
            radii[t] = rec["radii"]
    cs = CanonicalSequence(
        spec=spec, torso_coords=torso, local_spherical=local,
        alpha=alpha, beta=beta, gamma=gamma, root_translation=trans,
        radii=radii, fps=header["fps"],
    )
    return cs, header["params"]


@dataclass(frozen=True)
class IndexEntry:
    path: str
    action_label: int | None
    subject_id: int | None
    camera_id: int | None
    subject_count: int


@dataclass(frozen=True)
class DatasetIndex:
    """Catalog of stored sequences plus the seed all splits derive from."""

    entries: tuple[IndexEntry, ...]
    split_seed: int
    n_classes: int | None = None

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("duplicate sequence paths in index")
        if self.n_classes is not None:
            bad = [e.path for e in self.entries
                   if e.action_label is not None and not 0 <= e.action_label < self.n_classes]
            if bad:
                raise ValueError(f"labels outside class count: {bad}")


def index_directory(directory, split_seed: int = 0,
                    n_classes: int | None = None) -> DatasetIndex:
    """Index every internal-format sequence below ``directory``."""
    entries = []
    for path in sorted(Path(directory).rglob("*.jsonl.gz")):
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            header = json.loads(fh.readline())
        if header.get("format") != "posetraj-motion":
            continue
        entries.append(IndexEntry(
            path=str(path),
            action_label=header["action_label"],
            subject_id=header["subject_id"],
            camera_id=header["camera_id"],
            subject_count=header["subject_count"],
        ))
    return DatasetIndex(entries=tuple(entries), split_seed=split_seed, n_classes=n_classes)


def index_from_sequences(seqs, split_seed: int = 0,
                         n_classes: int | None = None) -> DatasetIndex:
    """In-memory index over already-loaded sequences (keys are positions)."""
    entries = tuple(
        IndexEntry(path=f"mem:{i}", action_label=s.action_label,
                   subject_id=s.subject_id, camera_id=s.camera_id,
                   subject_count=len(s.subjects))
        for i, s in enumerate(seqs)
    )
    return DatasetIndex(entries=entries, split_seed=split_seed, n_classes=n_classes)


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train/eval paths plus the exposed-label subset."""

    train_ids: tuple[str, ...]
    eval_ids: tuple[str, ...]
    labeled_ids: tuple[str, ...]
    label_fraction: float
    mode: str

    def __post_init__(self):
        if set(self.train_ids) & set(self.eval_ids):
            raise ValueError("train and eval sets overlap")
        if not set(self.labeled_ids) <= set(self.train_ids):
            raise ValueError("labeled ids must come from the train set")

    def to_json(self) -> str:
        return json.dumps({
            "mode": self.mode,
            "label_fraction": self.label_fraction,
            "train_ids": list(self.train_ids),
            "eval_ids": list(self.eval_ids),
            "labeled_ids": list(self.labeled_ids),
        }, sort_keys=True)


def make_split(index: DatasetIndex, mode: str, label_fraction: float = 0.4,
               fold: int = 0) -> SplitPlan:
    """Deterministic train/eval partition.

    ``cross_subject`` and ``cross_view`` split by performer/camera identity;
    ``five_fold`` holds out one of five subject folds. The exposed-label
    subset is drawn per class (stratified) from the index seed.
    """
    if not 0.0 < label_fraction <= 1.0:
        raise ValueError(f"label_fraction must be in (0, 1], got {label_fraction}")
    rng = np.random.default_rng(index.split_seed)

    if mode in ("cross_subject", "five_fold"):
        key = "subject_id"
    elif mode == "cross_view":
        key = "camera_id"
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    missing = [e.path for e in index.entries if getattr(e, key) is None]
    if missing:
        raise ValueError(f"{mode} split needs {key} on every entry; missing for {missing[:3]}")

    groups = sorted({getattr(e, key) for e in index.entries})
    shuffled = list(groups)
    rng.shuffle(shuffled)
    if mode == "five_fold":
        if len(shuffled) < 5:
            raise ValueError(f"five_fold needs >= 5 subjects, found {len(shuffled)}")
        folds = [shuffled[i::5] for i in range(5)]
        eval_groups = set(folds[fold % 5])
    else:
        half = max(1, len(shuffled) // 2)
        eval_groups = set(shuffled[half:]) or {shuffled[-1]}

    train, evals = [], []
    for e in index.entries:
        (evals if getattr(e, key) in eval_groups else train).append(e)

    by_class: dict[int, list[str]] = {}
    for e in train:
        if e.action_label is not None:
            by_class.setdefault(e.action_label, []).append(e.path)
    labeled = []
    for label in sorted(by_class):
        paths = sorted(by_class[label])
        k = max(1, round(label_fraction * len(paths))) if label_fraction < 1.0 else len(paths)
        picked = rng.choice(len(paths), size=min(k, len(paths)), replace=False)
        labeled.extend(paths[i] for i in sorted(picked))

    return SplitPlan(
        train_ids=tuple(e.path for e in train),
        eval_ids=tuple(e.path for e in evals),
        labeled_ids=tuple(labeled),
        label_fraction=label_fraction,
        mode=mode,
    )


def load_denylist(path) -> set[str]:
    """Sample names flagged as corrupt, one per line; '#' starts a comment."""
    out = set()
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.add(line)
    return out
