"""Command-line pipeline driver.

Subcommands mirror the pipeline stages; every PipelineConfig key is
exposed as a flag (e.g. --prune-tau) overriding values from --config.
Failures print a single machine-readable `error=...` line on stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

from . import pipeline
from .fileio import config_from_strings, load_config
from .scene import PipelineConfig


def _add_config_flags(parser):
    parser.add_argument("--config", help="key=value config file")
    for f in fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f"cfg_{f.name}", default=None,
                            help=f"override {f.name}")


def _resolve_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    for f in fields(PipelineConfig):
        v = getattr(args, f"cfg_{f.name}", None)
        if v is not None:
            overrides[f.name] = v
    if overrides:
        base = {f.name: getattr(config, f.name) for f in fields(PipelineConfig)}
        merged = config_from_strings(overrides)
        for k in overrides:
            base[k] = getattr(merged, k)
        config = PipelineConfig(**base)
    bad = config.check()
    if bad:
        raise ValueError("; ".join(bad))
    return config


def build_parser():
    parser = argparse.ArgumentParser(
        prog="splatrecon",
        description="Reconstruct lightweight building meshes from Gaussian-primitive scenes.")
    sub = parser.add_subparsers(dest="command", required=True)

    def stage(name, help_, spec_arg=False):
        p = sub.add_parser(name, help=help_)
        if spec_arg:
            p.add_argument("scene_spec", help="key=value scene specification file")
        p.add_argument("--workdir", required=True, help="pipeline working directory")
        _add_config_flags(p)
        return p

    stage("gen", "generate a synthetic scene", spec_arg=True)
    stage("masks", "render the primitive set and extract per-view edge masks")
    stage("score", "score primitives by multi-view edge consistency")
    p_prune = stage("prune", "prune low-scoring primitives")
    p_prune.add_argument("--prune-passes", type=int, default=1)
    p_prune.add_argument("--reextract", action="store_true",
                         help="re-extract masks between prune passes")
    stage("visibility", "validate depth-consistent point-view pairs")
    p_mesh = stage("mesh", "Delaunay graph-cut surface extraction")
    p_mesh.add_argument("--dump-graph", action="store_true")
    p_eval = stage("eval", "evaluate a mesh against the ground truth")
    p_eval.add_argument("--rec", default=None, help="mesh to evaluate (default mesh.obj)")
    p_losses = stage("losses", "report per-view structural losses")
    p_losses.add_argument("--out", default=None, help="write the report to a file")
    p_pipe = stage("pipeline", "run the full chain end to end", spec_arg=True)
    p_pipe.add_argument("--dump-graph", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _resolve_config(args)
        if args.command == "gen":
            path = pipeline.run_gen(args.scene_spec, args.workdir, config)
            print(f"manifest={path}")
        elif args.command == "masks":
            masks = pipeline.run_masks(args.workdir, config)
            print(f"masks={len(masks)} pixels={sum(m.pixel_count() for m in masks)}")
        elif args.command == "score":
            table = pipeline.run_score(args.workdir, config)
            print(f"scored={len(table.scores)}")
        elif args.command == "prune":
            kept, pruned = pipeline.run_prune(args.workdir, config,
                                              passes=args.prune_passes,
                                              reextract=args.reextract)
            print(f"kept={len(kept)} pruned={len(pruned)}")
        elif args.command == "visibility":
            records = pipeline.run_visibility(args.workdir, config)
            pairs = sum(len(r.visible_views) for r in records)
            print(f"points={len(records)} pairs={pairs}")
        elif args.command == "mesh":
            mesh = pipeline.run_mesh(args.workdir, config, dump_graph=args.dump_graph)
            print(f"faces={len(mesh.triangles)} vertices={len(mesh.vertices)}")
        elif args.command == "eval":
            report = pipeline.run_eval(args.workdir, config, rec_path=args.rec)
            print(report.as_text())
        elif args.command == "losses":
            pipeline.run_losses(args.workdir, config, out_path=args.out)
        elif args.command == "pipeline":
            report = pipeline.run_pipeline(args.scene_spec, args.workdir, config,
                                           dump_graph=args.dump_graph)
            print(report.as_text())
        return 0
    except Exception as exc:  # noqa: BLE001 - single CLI failure surface
        print(f"error={exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
