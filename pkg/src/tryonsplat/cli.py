"""Command-line entry points: ``synth``, ``fit``, ``render``, ``eval``.

Exit codes: 0 success, 1 validation error (bad config/arguments/paths),
2 runtime failure (training divergence, I/O errors mid-run).
"""

import argparse
import sys

from . import pipeline


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="tryonsplat",
        description="Gaussian-splat avatar fitting and garment transfer")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--config", required=True)
    p_synth.add_argument("--out", required=True)

    p_fit = sub.add_parser("fit", help="fit the avatar on a dataset")
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("--dataset", required=True)
    p_fit.add_argument("--out", required=True)
    p_fit.add_argument("--variant", default="full",
                       choices=list(pipeline.VARIANTS))
    p_fit.add_argument("--resume", default=None,
                       help="checkpoint to resume from")

    p_render = sub.add_parser("render", help="render poses from a checkpoint")
    p_render.add_argument("--checkpoint", required=True)
    p_render.add_argument("--dataset", required=True)
    p_render.add_argument("--out", required=True)
    p_render.add_argument("--branch", default="tar", choices=["src", "tar"])
    p_render.add_argument("--poses", default=None,
                          help="comma-separated dataset pose indices")
    p_render.add_argument("--orbit", type=int, default=0,
                          help="render an N-step camera orbit instead")
    p_render.add_argument("--orbit-pose", type=int, default=0)

    p_eval = sub.add_parser("eval", help="metric report for checkpoint(s)")
    p_eval.add_argument("--checkpoint", required=True, action="append",
                        help="repeat for multiple variants")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--out", required=True, help="output CSV path")
    return parser


def _run(args):
    if args.command == "synth":
        cfg = pipeline.load_config(args.config)
        manifest = pipeline.cmd_synth(cfg, args.out)
        print(f"dataset written to {args.out} "
              f"({len(manifest['hashes'])} artifacts)")
    elif args.command == "fit":
        cfg = pipeline.load_config(args.config)
        ckpt, log = pipeline.cmd_fit(cfg, args.dataset, args.out,
                                     variant=args.variant,
                                     resume_from=args.resume)
        print(f"checkpoint: {ckpt}\nlog: {log}")
    elif args.command == "render":
        poses = None
        if args.poses is not None:
            poses = [int(p) for p in args.poses.split(",") if p.strip()]
        written = pipeline.cmd_render(
            args.checkpoint, args.dataset, args.out, branch=args.branch,
            pose_indices=poses, orbit_steps=args.orbit,
            orbit_pose=args.orbit_pose)
        print(f"wrote {len(written)} frames to {args.out}")
    elif args.command == "eval":
        reports, baseline = pipeline.cmd_eval(args.checkpoint, args.dataset,
                                              args.out)
        print(f"gt sc_proxy baseline: {baseline}")
        for rep in reports:
            print(rep.summary())


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _run(args)
    except (pipeline.ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
