"""Command-line interface.

Every run writes a manifest (resolved arguments, seeds, content hashes of
the inputs) next to its outputs, so identical manifests reproduce
byte-identical metric files. Exit codes: 0 success, 1 data error, 2 usage
error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .analysis import pca_fit, pca_project, trajectory_projection, write_csv
from .canonical import canonicalize_sequence, pose_layout
from .engan import (
    EnganConfig,
    decode,
    encode,
    interpolate,
    load_engan,
    sample_z,
    save_engan,
    train_engan,
)
from .ingest import (
    ParseError,
    index_directory,
    load_denylist,
    make_split,
    parse_ntu_skeleton,
    parse_sbu_sequence,
    read_canonical_sequence,
    read_sequence,
    write_canonical_sequence,
    write_sequence,
)
from .posernn import (
    FusionFlags,
    PoseRnnConfig,
    load_posernn,
    predict_sequence,
    reconstruct_sequence,
    resample_canonical,
    save_posernn,
    train_posernn,
    avg_recon_metric,
)
from .recognizer import EvalProtocol, evaluate_protocol
from .skeleton import build_spec, limb_length, spec_from_json, spec_to_json
from .synthetic import default_families, make_dataset


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_input(path) -> str:
    p = Path(path)
    if p.is_dir():
        h = hashlib.sha256()
        for f in sorted(p.rglob("*")):
            if f.is_file():
                h.update(str(f.relative_to(p)).encode())
                h.update(_hash_file(f).encode())
        return h.hexdigest()
    return _hash_file(p)


def write_manifest(out_path, command: str, args: dict, inputs: list, outputs: list):
    doc = {
        "command": command,
        "args": {k: v for k, v in sorted(args.items())},
        "inputs": {str(p): _hash_input(p) for p in inputs},
        "outputs": [str(o) for o in outputs],
        "version": __version__,
    }
    Path(out_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _args_dict(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _load_config_file(path) -> dict:
    """Flat key = value config; '#' starts a comment, values are parsed as
    JSON scalars when possible."""
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"config line without '=': {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            out[key.replace("-", "_")] = json.loads(value)
        except json.JSONDecodeError:
            out[key.replace("-", "_")] = value
    return out


def _apply_config_defaults(parser, argv):
    """Pull '--config FILE' out of argv; its keys become defaults of the
    invoked subcommand (flags still win)."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    path = argv[i + 1]
    argv = argv[:i] + argv[i + 2:]
    defaults = _load_config_file(path)
    sub_actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    command = next((tok for tok in argv if not tok.startswith("-")), None)
    target = sub_actions[0].choices.get(command) if sub_actions and command else None
    if target is None:
        raise ParseError("--config requires a subcommand")
    known = {a.dest for a in target._actions}
    bad = set(defaults) - known
    if bad:
        raise ParseError(f"unknown config keys: {sorted(bad)}")
    target.set_defaults(**defaults)
    return argv


def cmd_spec_build(args):
    if args.data:
        spec = build_spec(args.kind)
        lengths = {j: [] for j in spec.joints if spec.parent[j] != j}
        for path in sorted(Path(args.data).rglob("*.jsonl.gz")):
            try:
                seq = read_sequence(path, spec)
            except ParseError:
                continue
            for frame in seq.frames:
                for j in lengths:
                    lengths[j].append(limb_length(spec, frame, j))
        if not any(lengths.values()):
            raise ParseError(f"no readable sequences under {args.data}")
        median = {j: float(np.median(v)) for j, v in lengths.items()}
        spec = type(spec)(
            name=spec.name, joints=spec.joints, parent=spec.parent,
            limbs=spec.limbs, torso_set=spec.torso_set,
            ref_lengths=median, anchors=spec.anchors,
        )
    else:
        spec = build_spec(args.kind)
    Path(args.out).write_text(spec_to_json(spec) + "\n")
    write_manifest(str(args.out) + ".manifest.json", "spec-build", _args_dict(args),
                   [args.data] if args.data else [], [args.out])
    print(f"wrote {args.out}")
    return 0


def cmd_ingest(args):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    denied = load_denylist(args.denylist) if args.denylist else set()
    written = []
    if args.dataset == "synthetic":
        spec = build_spec(args.skeleton)
        seqs = make_dataset(
            spec, sequences_per_family=args.sequences_per_family,
            frames=args.frames, noise=args.noise, seed=args.seed,
        )
        for i, seq in enumerate(seqs):
            path = out_dir / f"synthetic_{i:04d}.motion.jsonl.gz"
            write_sequence(path, seq)
            written.append(path)
    else:
        pattern = "*.skeleton" if args.dataset == "ntu" else "*.txt"
        files = sorted(Path(args.input).rglob(pattern))
        if not files:
            raise ParseError(f"no {pattern} files under {args.input}")
        for f in files:
            if f.stem in denied:
                continue
            if args.dataset == "ntu":
                seq = parse_ntu_skeleton(f.read_text(), name=f.name)
            else:
                seq = parse_sbu_sequence(f.read_text())
            path = out_dir / (f.stem + ".motion.jsonl.gz")
            write_sequence(path, seq)
            written.append(path)
    write_manifest(out_dir / "manifest.json", "ingest", _args_dict(args),
                   [args.input] if args.input else [], written)
    print(f"ingested {len(written)} sequences into {out_dir}")
    return 0


def cmd_canonicalize(args):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = {
        "smooth": not args.no_smooth, "window": args.window,
        "poly_order": args.order, "normalize": not args.no_normalize,
        "euler": "intrinsic-ZYX", "spherical": "azimuth(-pi,pi], elevation[-pi/2,pi/2]",
    }
    written = []
    for path in sorted(Path(args.input).rglob("*.motion.jsonl.gz")):
        seq = read_sequence(path)
        for s in range(len(seq.subjects)):
            cs = canonicalize_sequence(
                seq, subject=s, smooth=not args.no_smooth, window=args.window,
                poly_order=args.order, normalize=not args.no_normalize,
            )
            name = path.name.replace(".motion.jsonl.gz", f".s{s}.canon.jsonl.gz")
            write_canonical_sequence(out_dir / name, cs, params)
            written.append(out_dir / name)
    if not written:
        raise ParseError(f"no motion files under {args.input}")
    write_manifest(out_dir / "manifest.json", "canonicalize", _args_dict(args),
                   [args.input], written)
    print(f"canonicalized {len(written)} streams into {out_dir}")
    return 0


def _load_canonical_dir(directory, spec=None):
    out = []
    for path in sorted(Path(directory).rglob("*.canon.jsonl.gz")):
        cs, _ = read_canonical_sequence(path, spec)
        out.append(cs)
    if not out:
        raise ParseError(f"no canonical sequences under {directory}")
    return out


def cmd_train_engan(args):
    stage_steps = tuple(int(s) for s in args.stage_steps.split(","))
    if len(stage_steps) != 3:
        raise ParseError("--stage-steps needs three comma-separated integers")
    canon = _load_canonical_dir(args.data)
    spec = canon[0].spec
    layout = pose_layout(spec)
    poses = np.concatenate([layout.flatten(cs) for cs in canon])
    config = EnganConfig(lambda0=args.lambda0, batch_size=args.batch_size)
    model, history = train_engan(poses, spec, config=config,
                                 stage_steps=stage_steps, seed=args.seed,
                                 variant=args.variant)
    save_engan(args.out, model, step=sum(stage_steps))
    rows = [(h["step"], h["stage"], h["L_x_recon"], h["L_z_recon"],
             h["L_adv"], h["lambda"]) for h in history]
    write_csv(args.metrics, ["step", "stage", "L_x_recon", "L_z_recon", "L_adv", "lambda"], rows)
    write_manifest(str(args.out) + ".manifest.json", "train-engan", _args_dict(args),
                   [args.data], [args.out, args.metrics])
    print(f"trained {args.variant} ({sum(stage_steps)} steps) -> {args.out}")
    return 0


def cmd_train_posernn(args):
    canon = _load_canonical_dir(args.data)
    spec = canon[0].spec
    engan = load_engan(args.engan, spec) if args.engan else None
    fusion = FusionFlags.parse(args.fusion)
    config = PoseRnnConfig(hidden=args.hidden, embed_dim=args.embed_dim,
                           lambda_hat=args.lambda_hat, fusion=fusion,
                           batch_size=args.batch_size)
    model, history = train_posernn(canon, engan, config=config,
                                   t_steps=args.frames, steps=args.steps,
                                   seed=args.seed)
    save_posernn(args.out, model, step=args.steps)
    rows = [(h["step"], h["L_recon_RNN"], h["L_grad"], h["L_RNN"]) for h in history]
    write_csv(args.metrics, ["step", "L_recon_RNN", "L_grad", "L_RNN"], rows)
    inputs = [args.data] + ([args.engan] if args.engan else [])
    write_manifest(str(args.out) + ".manifest.json", "train-posernn", _args_dict(args),
                   inputs, [args.out, args.metrics])
    print(f"trained posernn ({args.steps} steps) -> {args.out}")
    return 0


def _load_labeled_motion(directory):
    seqs = []
    for path in sorted(Path(directory).rglob("*.motion.jsonl.gz")):
        seqs.append((str(path), read_sequence(path)))
    if not seqs:
        raise ParseError(f"no motion files under {directory}")
    missing = [p for p, s in seqs if s.action_label is None]
    if missing:
        raise ParseError(f"sequences without labels: {missing[:3]}")
    return seqs


def _split_sequences(directory, mode, label_fraction, seed):
    named = _load_labeled_motion(directory)
    index = index_directory(directory, split_seed=seed)
    plan = make_split(index, mode, label_fraction=label_fraction)
    by_path = dict(named)
    train = [by_path[p] for p in plan.train_ids]
    train_labels = [by_path[p].action_label for p in plan.train_ids]
    evals = [by_path[p] for p in plan.eval_ids]
    eval_labels = [by_path[p].action_label for p in plan.eval_ids]
    labeled = set(plan.labeled_ids)
    mask = [p in labeled for p in plan.train_ids]
    return train, train_labels, evals, eval_labels, mask


def _run_protocol(args, mode: str):
    train, train_labels, evals, eval_labels, mask = _split_sequences(
        args.data, args.split, args.label_fraction, args.seed)
    spec = train[0].spec
    engan = load_engan(args.engan, spec) if args.engan else None
    model = load_posernn(args.posernn, spec, engan=engan)
    result = evaluate_protocol(
        EvalProtocol(mode, label_fraction=args.label_fraction), model,
        train, train_labels, evals, eval_labels, labeled_mask=mask,
        t_steps=args.frames, seed=args.seed, probe_steps=args.probe_steps,
        finetune_epochs=getattr(args, "epochs", 0),
    )
    row = [(mode, args.split, args.seed, args.label_fraction, result.accuracy)]
    write_csv(args.out, ["protocol", "split", "seed", "label_fraction", "accuracy"], row)
    inputs = [args.data, args.posernn] + ([args.engan] if args.engan else [])
    write_manifest(str(args.out) + ".manifest.json", mode, _args_dict(args),
                   inputs, [args.out])
    frozen = "frozen" if result.backbone_hash_before == result.backbone_hash_after else "updated"
    print(f"{mode} accuracy={result.accuracy:.4f} (backbone {frozen})")
    return 0


def cmd_probe(args):
    return _run_protocol(args, "unsupervised")


def cmd_finetune(args):
    return _run_protocol(args, "semi_supervised")


def cmd_transfer(args):
    mode = "semi_supervised_transfer" if args.semi else "unsupervised_transfer"
    args.data = args.target_data
    args.posernn = args.source_posernn
    args.engan = args.source_engan
    return _run_protocol(args, mode)


def cmd_interpolate(args):
    engan = load_engan(args.engan, build_spec(args.skeleton))
    rng = np.random.default_rng(args.seed)
    z_a, z_b = sample_z(rng, 2, engan.config.latent_dim).astype(np.float32)
    track = interpolate(engan, z_a, z_b, steps=args.steps)
    header = ["step"] + [f"ch{i}" for i in range(track.shape[1])]
    rows = [[i] + list(track[i]) for i in range(len(track))]
    write_csv(args.out, header, rows)
    write_manifest(str(args.out) + ".manifest.json", "interpolate", _args_dict(args),
                   [args.engan], [args.out])
    print(f"wrote {args.steps}-step interpolation -> {args.out}")
    return 0


def cmd_reconstruct(args):
    cs, _ = read_canonical_sequence(args.seq)
    engan = load_engan(args.engan, cs.spec) if args.engan else None
    model = load_posernn(args.posernn, cs.spec, engan=engan)
    t_steps = args.frames or cs.frame_count
    out_seq = reconstruct_sequence(model, cs, t_steps=t_steps)
    x_pred, _, _ = predict_sequence(model, cs, t_steps)
    metric = avg_recon_metric(x_pred, pose_layout(cs.spec).flatten(resample_canonical(cs, t_steps)))
    rows = []
    for t in range(out_seq.frame_count):
        for j, joint in enumerate(cs.spec.joints):
            pos = out_seq.subjects[0][t, j]
            rows.append([t, joint, pos[0], pos[1], pos[2]])
    write_csv(args.out, ["t", "joint", "x", "y", "z"], rows)
    metrics_path = str(args.out) + ".metric.csv"
    write_csv(metrics_path, ["metric", "value"], [["avg_recon_l1", metric]])
    inputs = [args.seq, args.posernn] + ([args.engan] if args.engan else [])
    write_manifest(str(args.out) + ".manifest.json", "reconstruct", _args_dict(args),
                   inputs, [args.out, metrics_path])
    print(f"avg_recon_l1={metric:.6f} -> {args.out}")
    return 0


def cmd_trajectory_pca(args):
    cs, _ = read_canonical_sequence(args.seq)
    engan = load_engan(args.engan, cs.spec)
    model = load_posernn(args.posernn, cs.spec, engan=engan)
    t_steps = args.frames or cs.frame_count
    resampled = resample_canonical(cs, t_steps)
    layout = pose_layout(cs.spec)
    z_true = encode(engan, layout.flatten(resampled).astype(np.float32)).z.data
    from .posernn import fuse_features, encode_sequence, decode_sequence, split_prediction
    fused = fuse_features(resampled, engan, model.config.fusion,
                          include_global=model.config.include_global,
                          translation_scale=model.translation_scale)
    emb = encode_sequence(model, fused.features[None])
    pred = decode_sequence(model, emb, t_steps)
    pose_pred, _ = split_prediction(model, pred)
    rows = trajectory_projection(z_true, pose_pred.data)
    write_csv(args.out, ["t", "x_true", "y_true", "x_pred", "y_pred"],
              [list(r) for r in rows])
    write_manifest(str(args.out) + ".manifest.json", "trajectory-pca", _args_dict(args),
                   [args.seq, args.posernn, args.engan], [args.out])
    print(f"wrote latent trajectory projection -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="posetraj",
        description="Pose-embedding manifolds and action trajectories for 3D skeleton data",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spec-build", help="write a skeleton spec file")
    p.add_argument("--kind", choices=["kinect25", "sbu15"], required=True)
    p.add_argument("--data", help="motion dir; ref lengths become corpus medians")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spec_build)

    p = sub.add_parser("ingest", help="parse datasets into the internal format")
    p.add_argument("--dataset", choices=["ntu", "sbu", "synthetic"], required=True)
    p.add_argument("--in", dest="input", help="source directory (ntu/sbu)")
    p.add_argument("--out", required=True)
    p.add_argument("--denylist", help="file of corrupt sample names to skip")
    p.add_argument("--skeleton", default="kinect25", choices=["kinect25", "sbu15"])
    p.add_argument("--sequences-per-family", type=int, default=12)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--noise", type=float, default=0.004)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("canonicalize", help="convert motion files to canonical sequences")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=9)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--no-smooth", action="store_true")
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(func=cmd_canonicalize)

    p = sub.add_parser("train-engan", help="train the pose embedding model")
    p.add_argument("--data", required=True, help="canonical sequence directory")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", required=True)
    p.add_argument("--stage-steps", default="4000,2000,4000")
    p.add_argument("--lambda0", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--variant", choices=["engan", "autoencoder"], default="engan")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_engan)

    p = sub.add_parser("train-posernn", help="train the trajectory model")
    p.add_argument("--data", required=True, help="canonical sequence directory")
    p.add_argument("--engan", help="pose model checkpoint (omit for raw baseline)")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", required=True)
    p.add_argument("--fusion", default="pj,ep,el")
    p.add_argument("--lambda-hat", type=float, default=1.0)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--embed-dim", type=int, default=256)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_posernn)

    def protocol_args(p, transfer=False):
        if transfer:
            p.add_argument("--source-posernn", required=True)
            p.add_argument("--source-engan")
            p.add_argument("--target-data", required=True)
        else:
            p.add_argument("--data", required=True, help="labeled motion directory")
            p.add_argument("--posernn", required=True)
            p.add_argument("--engan")
        p.add_argument("--split", default="cross_subject",
                       choices=["cross_subject", "cross_view", "five_fold"])
        p.add_argument("--label-fraction", type=float, default=0.4)
        p.add_argument("--frames", type=int, default=30)
        p.add_argument("--probe-steps", type=int, default=600)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)

    p = sub.add_parser("probe", help="linear probe on the frozen backbone")
    protocol_args(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("finetune", help="semi-supervised fine-tuning")
    protocol_args(p)
    p.add_argument("--epochs", type=int, default=20)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("transfer", help="evaluate a backbone on another dataset")
    protocol_args(p, transfer=True)
    p.add_argument("--semi", action="store_true", help="also fine-tune on the target")
    p.add_argument("--epochs", type=int, default=20)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("interpolate", help="decode a latent interpolation")
    p.add_argument("--engan", required=True)
    p.add_argument("--skeleton", default="kinect25", choices=["kinect25", "sbu15"])
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("reconstruct", help="round-trip one sequence through the models")
    p.add_argument("--seq", required=True, help="canonical sequence file")
    p.add_argument("--posernn", required=True)
    p.add_argument("--engan")
    p.add_argument("--frames", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("trajectory-pca", help="project latent trajectories to 2D")
    p.add_argument("--seq", required=True, help="canonical sequence file")
    p.add_argument("--posernn", required=True)
    p.add_argument("--engan", required=True)
    p.add_argument("--frames", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trajectory_pca)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (ParseError, ValueError, OSError, ad.NonFiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
