"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 internal numerical error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .archive import read_map_archive, write_lexicon, write_map_archive
from .errors import LsmEvalError, NumericalError, ValidationError
from .grid import regrid
from .query import PostProcessParams
from .report import (
    EvalConfig,
    emit_report,
    run_distinctness,
    run_queryability,
    run_resolution_sweep,
)
from .synthetic import SyntheticSpec, generate_synthetic_map

USAGE_EXIT = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _collect_map_paths(maps_dir: str) -> tuple:
    directory = Path(maps_dir)
    if not directory.is_dir():
        raise ValidationError(f"map directory {maps_dir!r} does not exist")
    paths = tuple(str(p) for p in sorted(directory.glob("*.lsm")))
    if not paths:
        raise ValidationError(f"no .lsm archives found in {maps_dir!r}")
    return paths


def _load_templates(path):
    if path is None:
        return None
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, list) or not all(isinstance(t, str) for t in doc):
        raise ValidationError("prompt template file must hold a JSON list of strings")
    return tuple(doc)


def _add_eval_args(parser, with_lexicon=True):
    parser.add_argument("--maps", required=True, help="directory of .lsm archives")
    if with_lexicon:
        parser.add_argument("--lexicon", required=True, help="lexicon JSON file")
        parser.add_argument(
            "--mode", choices=("vlmaps", "segmentation"), default="vlmaps"
        )
        parser.add_argument("--threshold", type=float, default=0.5)
        parser.add_argument("--blur-sigma", type=float, default=1.0)
        parser.add_argument("--closing", type=int, default=1)
        parser.add_argument("--dilation", type=int, default=1)
        parser.add_argument("--prompts", help="JSON list of '{}' templates")
        parser.add_argument("--negative-key", default="other")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", required=True, help="report output path")
    parser.add_argument("--format", choices=("json", "csv"), default="json")


def _eval_config(args, **overrides) -> EvalConfig:
    fields = {
        "map_paths": _collect_map_paths(args.maps),
        "seed": args.seed,
        "workers": args.workers,
    }
    if hasattr(args, "lexicon"):
        fields.update(
            lexicon_path=args.lexicon,
            mode=args.mode,
            params=PostProcessParams(
                closing_iters=args.closing,
                blur_sigma=args.blur_sigma,
                threshold=args.threshold,
                dilation_iters=args.dilation,
            ),
            prompt_templates=_load_templates(args.prompts),
            negative_key=args.negative_key,
        )
    fields.update(overrides)
    return EvalConfig(**fields)


def build_parser() -> _Parser:
    parser = _Parser(prog="lsmeval", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("queryability", help="binary query metrics per map and query")
    _add_eval_args(p)

    p = sub.add_parser("distinctness", help="intra/inter-map distinctness tables")
    p.add_argument("--maps", required=True)
    p.add_argument("--subsample", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--same-map-negatives", action="store_true")
    p.add_argument("--n-min", type=int, default=20)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("sweep", help="resolution ladder footprint + queryability")
    _add_eval_args(p)
    p.add_argument(
        "--resolutions",
        type=_resolution_ladder,
        default=(0.02, 0.05, 0.1, 0.2),
        help="comma-separated ascending cell sizes in meters",
    )

    p = sub.add_parser("regrid", help="aggregate one archive to a coarser cell size")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--res", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic map + lexicon")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cell-size", type=float, default=0.05)
    p.add_argument("--blob-extent", type=int)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("serve", help="start the explorer HTTP server")
    p.add_argument("--maps", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--encoder-url")
    p.add_argument("--prompts")
    p.add_argument("--ui", help="directory of built UI files to mount at /ui")
    return parser


def _cmd_queryability(args) -> int:
    config = _eval_config(args)
    report = run_queryability(config)
    emit_report(report, args.out, args.format)
    return 0


def _cmd_distinctness(args) -> int:
    config = EvalConfig(
        map_paths=_collect_map_paths(args.maps),
        subsample_ratio=args.subsample,
        seed=args.seed,
        normalize=args.normalize,
        same_map_negatives=args.same_map_negatives,
        n_min=args.n_min,
        workers=args.workers,
    )
    report = run_distinctness(config)
    emit_report(report, args.out, args.format)
    return 0


def _resolution_ladder(text: str) -> tuple:
    try:
        return tuple(float(r) for r in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse resolution ladder {text!r}")


def _cmd_sweep(args) -> int:
    config = _eval_config(args, resolutions=args.resolutions)
    report = run_resolution_sweep(config)
    emit_report(report, args.out, args.format)
    return 0


def _cmd_regrid(args) -> int:
    bundle = read_map_archive(args.input)
    coarse = regrid(bundle, args.res)
    written = write_map_archive(coarse, args.out)
    print(f"wrote {written} bytes to {args.out}")
    return 0


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        class_count=args.classes,
        voxels_per_class=args.per_class,
        dim=args.dim,
        angular_noise=args.noise,
        cell_size=args.cell_size,
        blob_extent=args.blob_extent,
        seed=args.seed,
    )
    bundle, lexicon = generate_synthetic_map(spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    map_path = out_dir / f"{bundle.map_id}.lsm"
    written = write_map_archive(bundle, map_path)
    write_lexicon(lexicon, out_dir / "lexicon.json")
    print(f"wrote {map_path} ({written} bytes) and lexicon.json")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(
        maps_dir=args.maps,
        lexicon_path=args.lexicon,
        encoder_url=args.encoder_url,
        prompts_path=args.prompts,
        ui_dir=args.ui,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "queryability": _cmd_queryability,
    "distinctness": _cmd_distinctness,
    "sweep": _cmd_sweep,
    "regrid": _cmd_regrid,
    "synth": _cmd_synth,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT
    try:
        return _COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"lsmeval: numerical error: {exc}", file=sys.stderr)
        return exc.exit_code
    except LsmEvalError as exc:
        print(f"lsmeval: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
