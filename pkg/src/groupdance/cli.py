"""Command-line surface: synth, preprocess, train, generate, evaluate.

Exit codes: 0 success, 2 usage or validation error, 3 missing file,
4 file-format violation, 5 training diverged (non-finite loss).
Verbosity comes from the GROUPDANCE_LOG environment variable
(debug|info|warning|error, default info).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import formats
from .audio import MusicFeatureSequence
from .config import RunConfig, load_config, resolved_text
from .datapipe import load_manifest, load_pairs, make_split, preprocess_clip, save_manifest
from .errors import FormatError, TrainingDivergedError, ValidationError
from .metrics import evaluate_corpus, train_retrieval
from .motion import GroupDanceSequence
from .nn import AttentionConfig
from .skeleton import default_skeleton
from .synthkit import make_paired_dataset
from .training import ModelSet, TrainConfig, Trainer

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_FORMAT = 4
EXIT_DIVERGED = 5

log = logging.getLogger("groupdance")


def _setup_logging():
    level = os.environ.get("GROUPDANCE_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config, args.set)
    if args.seed is not None:
        config.seed = args.seed
    return config


def _write_resolved(config: RunConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.txt").write_text(resolved_text(config))
    for line in resolved_text(config).splitlines():
        log.debug("config %s", line)


def _attention_config(config: RunConfig) -> AttentionConfig:
    return AttentionConfig(config.model_dim, config.num_heads, config.ff_mult)


def _build_models(config: RunConfig) -> ModelSet:
    return ModelSet(_attention_config(config), config.num_layers,
                    config.disc_layers, seed=config.seed)


def cmd_synth(args) -> int:
    config = _load_run_config(args)
    out_dir = Path(args.out)
    _write_resolved(config, out_dir)
    manifest = make_paired_dataset(
        config.synth_pairs, out_dir, seed=config.seed, bpm_choices=config.bpm_list(),
        duration_s=config.synth_duration, n_dancers=config.synth_dancers)
    manifest = make_split(manifest, {"train": config.train_frac, "test": config.test_frac},
                          seed=config.seed)
    save_manifest(manifest, out_dir / "manifest.json")
    log.info("wrote %d pairs to %s", len(manifest["clips"]), out_dir)
    print(out_dir / "manifest.json")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    config = _load_run_config(args)
    in_dir, out_dir = Path(args.in_dir), Path(args.out)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory not found: {in_dir}")
    _write_resolved(config, out_dir)
    skel = default_skeleton()
    clips = []
    for path in sorted(in_dir.glob("*.gdnc")):
        clip = formats.load_gdnc(path)
        segments, report = preprocess_clip(
            clip, skel, config.alpha_tau, config.alpha_rot,
            config.vel_thresh, config.acc_thresh, config.max_gap)
        log.info("%s: %d anomaly flags, %d segment(s)", path.name, len(report), len(segments))
        sidecar = formats.load_sidecar(path) or {}
        for si, seg in enumerate(segments):
            seg_id = f"{path.stem}_seg{si}" if len(segments) > 1 else path.stem
            out_path = out_dir / f"{seg_id}.gdnc"
            formats.save_gdnc(out_path, seg, sidecar=sidecar or None)
            clips.append({
                "id": seg_id, "music": "", "motion": out_path.name,
                "genre": sidecar.get("genre", ""),
                "duration_s": seg.n_frames / seg.fps,
                "n_dancers": seg.n_dancers, "split": "",
            })
    if not clips:
        raise ValidationError(f"no .gdnc clips found in {in_dir}")
    manifest = {"version": 1, "seed": config.seed, "fps": config.fps, "clips": clips}
    manifest = make_split(manifest, {"train": config.train_frac, "test": config.test_frac},
                          seed=config.seed)
    save_manifest(manifest, out_dir / "manifest.json")
    print(out_dir / "manifest.json")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_run_config(args)
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    out_dir = Path(args.out)
    _write_resolved(config, out_dir)
    pairs = load_pairs(manifest, manifest_path.parent, split="train")
    if not pairs:
        raise ValidationError("manifest has no training clips with music")
    clips = [(m.feats, d.data) for _, m, d in pairs]
    models = _build_models(config)
    tcfg = TrainConfig(
        epochs=config.epochs, batch_size=config.batch_size, lr_g=config.lr_g,
        lr_d=config.lr_d, seed=config.seed, schedule_total=config.schedule_total,
        vel_weight=config.vel_weight, w_rec=config.w_rec, w_cyc=config.w_cyc,
        w_fd=config.w_fd, alternation=config.alternation,
        saturating_fool=config.saturating_fool, checkpoint_every=config.checkpoint_every)
    trainer = Trainer(models, tcfg, out_dir=out_dir)
    history = trainer.fit(clips)
    log.info("trained %d steps; final l_g=%.4f", len(history), history[-1].l_g)
    print(out_dir / "checkpoint_final.gdck")
    return EXIT_OK


def cmd_generate(args) -> int:
    config = _load_run_config(args)
    music = formats.load_mftr(args.music)
    init_seq = formats.load_gdnc(args.init_poses)
    models = ModelSet.load(args.checkpoint, _attention_config(config),
                           config.num_layers, config.disc_layers)
    # rollout driven only by the music-to-dance block; the seed pose is the
    # first stored frame and is echoed as frame 0 of the output
    init = init_seq.data[:, 0, :]
    if music.n_frames < 2:
        raise ValidationError("need at least 2 music frames to generate")
    tail = MusicFeatureSequence(music.feats[1:], fps=music.fps)
    rolled = models.m2d.generate(tail, init)
    out = np.concatenate([init[:, None, :], rolled.data], axis=1)
    seq = GroupDanceSequence(out, fps=music.fps)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    formats.save_gdnc(out_path, seq)
    log.info("generated %d dancers x %d frames -> %s", seq.n_dancers, seq.n_frames, out_path)
    print(out_path)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_run_config(args)
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    out_dir = Path(args.out)
    _write_resolved(config, out_dir)
    split = args.split
    reference = load_pairs(manifest, manifest_path.parent, split=split)
    if not reference:
        raise ValidationError(f"no clips in split {split!r}")
    train_pairs = load_pairs(manifest, manifest_path.parent, split="train")

    generated = []
    if args.generated is not None:
        gen_dir = Path(args.generated)
        for cid, music, _ in reference:
            path = gen_dir / f"{cid}.gdnc"
            if not path.exists():
                raise FileNotFoundError(f"generated clip not found: {path}")
            generated.append((cid, music, formats.load_gdnc(path)))
    else:
        if args.checkpoint is None:
            raise ValidationError("evaluate needs --generated or --checkpoint")
        models = ModelSet.load(args.checkpoint, _attention_config(config),
                               config.num_layers, config.disc_layers)
        for cid, music, dance in reference:
            tail = MusicFeatureSequence(music.feats[1:], fps=music.fps)
            rolled = models.m2d.generate(tail, dance.data[:, 0, :])
            gen = np.concatenate([dance.data[:, :1, :], rolled.data], axis=1)
            generated.append((cid, music, GroupDanceSequence(gen, fps=music.fps)))

    retrieval = train_retrieval(
        [(m.feats, d.data) for _, m, d in (train_pairs or reference)],
        cfg=AttentionConfig(config.retrieval_dim, config.retrieval_heads, config.ff_mult),
        embed_dim=config.embed_dim, num_layers=config.retrieval_layers,
        steps=config.retrieval_steps, batch_size=config.retrieval_batch,
        segment_len=config.segment_len, lr=config.retrieval_lr,
        temperature=config.retrieval_temp, seed=config.seed)

    lead = None if config.lead_dancer < 0 else config.lead_dancer
    report, rows = evaluate_corpus(reference, generated, default_skeleton(),
                                   retrieval, sigma=config.sigma, lead=lead,
                                   gda_ordered=config.gda_ordered)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "metrics.json", "w") as f:
        json.dump({"version": 1, "metrics": report.to_dict()}, f, sort_keys=True, indent=2)
        f.write("\n")
    with open(out_dir / "per_clip.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["id", "m_dist", "mm_dist", "mda", "gda"])
        writer.writeheader()
        writer.writerows(rows)
    log.info("metrics: %s", report.to_dict())
    print(out_dir / "metrics.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupdance", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a single config key (repeatable)")

    p = sub.add_parser("synth", help="write a synthetic paired dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="smooth, repair and split raw motion clips")
    common(p)
    p.add_argument("in_dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train generators and discriminators")
    common(p)
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="roll out dance for a music file")
    common(p)
    p.add_argument("checkpoint")
    p.add_argument("music")
    p.add_argument("init_poses", help="GDNC file; frame 0 seeds the rollout")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated clips against a reference corpus")
    common(p)
    p.add_argument("manifest")
    p.add_argument("--generated", default=None, help="directory of generated .gdnc clips")
    p.add_argument("--checkpoint", default=None, help="generate on the fly from this checkpoint")
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        log.error("%s", e)
        return EXIT_MISSING_FILE
    except FormatError as e:
        log.error("%s", e)
        return EXIT_BAD_FORMAT
    except TrainingDivergedError as e:
        log.error("training diverged: %s (report=%s)", e, e.report)
        return EXIT_DIVERGED
    except ValidationError as e:
        log.error("%s", e)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
