"""Command-line entry point: ``v2vlc <command> [--config FILE] [--seed N]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .channel import MODES, ChannelConfig, FeatureMap, apply_channel, rng_stream
from .detection import precision_recall, read_boxes, read_detections
from .geometry import save_scene
from .numerics import Tensor, load_checkpoint, load_tensor, save_tensor

DEFAULT_ROOT = "runs"


def _config(args):
    from .pipeline import ExperimentConfig, load_config

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _latest_params(run_dir: Path) -> dict[str, Tensor]:
    ckpts = sorted((run_dir / "checkpoints").glob("epoch-*"))
    if not ckpts:
        raise SystemExit(f"no checkpoints under {run_dir}; run `v2vlc train` with the same config first")
    params, _ = load_checkpoint(ckpts[-1])
    return params


def cmd_generate(args) -> int:
    from .pipeline import make_packs, save_config

    cfg = _config(args)
    run_dir = _ensure(cfg.run_dir(args.root))
    save_config(run_dir / "config.yaml", cfg)
    for split, pack in zip(("train", "test"), make_packs(cfg)):
        out = run_dir / "scenes" / split
        for scene in pack.scenes:
            sdir = out / f"scene-{scene.scene_id:06d}"
            sdir.mkdir(parents=True, exist_ok=True)
            save_scene(sdir / "scene.json", scene)
            for aid, feat in pack.features[scene.scene_id].items():
                save_tensor(sdir / f"agent-{aid}.v2vt", feat)
        meta = {"value_range": list(pack.value_range), "n_scenes": len(pack), "coverage": pack.coverage()}
        (out / "pack.json").write_text(json.dumps(meta, indent=2))
        print(f"{split}: {len(pack)} scenes, coverage {pack.coverage():.3f} -> {out}")
    return 0


def _ensure(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_channel(args) -> int:
    data = load_tensor(args.input).data
    noise = None
    if args.noise_min is not None or args.noise_max is not None:
        if args.noise_min is None or args.noise_max is None:
            raise SystemExit("--noise-min and --noise-max must be given together")
        noise = (args.noise_min, args.noise_max)
    cfg = ChannelConfig(args.mode, args.p, noise, args.seed)
    out, mask = apply_channel(FeatureMap(data), cfg, rng_stream(args.seed))
    save_tensor(args.output, out.data)
    stats = {"mode": args.mode, **mask.stats()}
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    from .pipeline import make_packs, save_config, train

    cfg = _config(args)
    run_dir = _ensure(cfg.run_dir(args.root))
    save_config(run_dir / "config.yaml", cfg)
    train_pack, _ = make_packs(cfg)
    _, log = train(cfg, train_pack, run_dir)
    for e in log:
        print(f"epoch {e['epoch']:3d}  lr {e['lr']:.2e}  L_det {e['l_det']:.5f}  L_LC {e['l_lc']:.5f}  "
              f"L_total {e['l_total']:.5f}")
    print(f"run directory: {run_dir}")
    return 0


def cmd_eval(args) -> int:
    if args.detections or args.ground_truth:
        if len(args.detections) != len(args.ground_truth):
            raise SystemExit("give one --ground-truth file per --detections file")
        frames = [(read_detections(d), read_boxes(g)) for d, g in zip(args.detections, args.ground_truth)]
        for thr in (0.5, 0.7):
            curve = precision_recall(frames, thr)
            note = "  (no ground truth in range)" if curve.no_ground_truth else ""
            print(f"AP@{thr:.1f} {curve.ap:.4f}{note}")
        return 0
    from .pipeline import evaluate, make_packs

    cfg = _config(args)
    run_dir = cfg.run_dir(args.root)
    params = _latest_params(run_dir)
    _, test_pack = make_packs(cfg)
    report = evaluate(params, cfg, test_pack, run_dir / "ap_report.json", lossy_p=args.p)
    for row in ("ideal", "lossy"):
        r = report[row]
        print(f"{row:6s} AP@0.5 {r['ap50']:.4f}  AP@0.7 {r['ap70']:.4f}")
    print(f"report: {run_dir / 'ap_report.json'}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck_suite import SUITE

    failed = 0
    for name, case in SUITE.items():
        worst = 0.0
        for seed in range(args.seeds):
            rep = case(seed)
            worst = max(worst, rep.max_error)
            failed += not rep.passed
        print(f"{name:22s} max rel err {worst:.2e}  {'ok' if worst <= 1e-3 else 'FAIL'}")
    print("all passed" if not failed else f"{failed} failures")
    return 1 if failed else 0


def cmd_attn_oracle(args) -> int:
    from .attention import criss_cross_attention, criss_cross_dense_mask, dense_attention

    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.instances):
        c = int(rng.integers(1, args.c + 1))
        h = int(rng.integers(1, args.h + 1))
        w = int(rng.integers(1, args.w + 1))
        q, k, v = (Tensor(rng.standard_normal((c, h, w))) for _ in range(3))
        cc = criss_cross_attention(q, k, v).data
        ref = dense_attention(q, k, v, mask=criss_cross_dense_mask(h, w)).data
        worst = max(worst, float(np.abs(cc - ref).max()))
    print(f"max deviation {worst:.3e} over {args.instances} instances")
    return 0 if worst <= 1e-5 else 1


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .channel import IDEAL
    from .pipeline import forward_pipeline, make_packs
    from .pipeline.train import evaluate_mode

    cfg = _config(args)
    run_dir = cfg.run_dir(args.root)
    params = _latest_params(run_dir)
    _, pack = make_packs(cfg)
    out = _ensure(run_dir / "plots")

    fig, ax = plt.subplots(figsize=(5, 4))
    with open(out / "pr_curves.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["channel", "iou", "recall", "precision"])
        for label, ch in (("ideal", replace(cfg.channel, mode=IDEAL)), ("lossy", cfg.channel)):
            frames = [
                (forward_pipeline(s, pack, cfg, params, ch, stream_key=(0xE7A1,))[0], s.gt_boxes) for s in pack.scenes
            ]
            for thr in (0.5, 0.7):
                curve = precision_recall(frames, thr)
                for r, p in zip(curve.recall, curve.precision):
                    wr.writerow([label, thr, f"{r:.6f}", f"{p:.6f}"])
                ax.plot(curve.recall, curve.precision, label=f"{label} IoU {thr} (AP {curve.ap:.3f})")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "pr_curves.png", dpi=120)
    plt.close(fig)

    ps = [round(float(p), 2) for p in np.linspace(0.0, args.p_max, args.p_steps)]
    rows = []
    for p in ps:
        ch = replace(cfg.channel, p=p) if p > 0 else replace(cfg.channel, mode=IDEAL)
        r = evaluate_mode(params, cfg, pack, ch)
        rows.append((p, r["ap50"], r["ap70"]))
        print(f"p={p:.2f}  AP@0.5 {r['ap50']:.4f}  AP@0.7 {r['ap70']:.4f}")
    with open(out / "ap_sweep.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["p", "ap50", "ap70"])
        wr.writerows([(p, f"{a:.6f}", f"{b:.6f}") for p, a, b in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(ps, [r[1] for r in rows], "o-", label="AP@0.5")
    ax.plot(ps, [r[2] for r in rows], "s-", label="AP@0.7")
    ax.set_xlabel(f"selection probability p ({cfg.channel.mode})")
    ax.set_ylabel("AP")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "ap_sweep.png", dpi=120)
    plt.close(fig)
    print(f"plots: {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v2vlc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, run=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML experiment config (defaults when omitted)")
        p.add_argument("--seed", type=int, help="override the experiment seed")
        if run:
            p.add_argument("--root", default=DEFAULT_ROOT, help="parent of the run-<hash> directories")
        p.set_defaults(func=fn)
        return p

    add("generate", cmd_generate, "render the synthetic train/test scene packs")
    p = add("channel", cmd_channel, "pass a V2VT tensor through the lossy channel", run=False)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--mode", choices=MODES, default="lossy")
    p.add_argument("--p", type=float, default=0.3)
    p.add_argument("--noise-min", type=float)
    p.add_argument("--noise-max", type=float)
    add("train", cmd_train, "train the configured model")
    p = add("eval", cmd_eval, "AP@0.5/0.7 of a trained run, or of box text files")
    p.add_argument("--detections", nargs="*", default=[], help="x y z l w h yaw score per line")
    p.add_argument("--ground-truth", nargs="*", default=[], help="x y z l w h yaw per line")
    p.add_argument("--p", type=float, help="lossy-mode probability (defaults to the config's)")
    p = add("gradcheck", cmd_gradcheck, "finite-difference check of every differentiable op", run=False)
    p.add_argument("--seeds", type=int, default=10)
    p = add("attn-oracle", cmd_attn_oracle, "criss-cross attention versus the masked dense oracle", run=False)
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--c", type=int, default=4)
    p.add_argument("--h", type=int, default=6)
    p.add_argument("--w", type=int, default=6)
    p = add("plot", cmd_plot, "PR curves and an AP-versus-p sweep (PNG + CSV)")
    p.add_argument("--p-max", type=float, default=0.9)
    p.add_argument("--p-steps", type=int, default=10)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "channel" and args.seed is None:
        args.seed = 0
    if args.command in ("gradcheck", "attn-oracle") and args.seed is None:
        args.seed = 0
    return int(args.func(args) or 0)


if __name__ == "__main__":
    sys.exit(main())
