"""Command-line interface.

    webly variations --concept horse --corpus c.ngrams --docs d.txt --images imgs/ --out out/
    webly images --out out/            # consumes out/variations.json
    webly run --concept horse ... --seed 7
    webly report --out out/

Exit status: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .errors import DataError, NoSurvivingVariations
from .pipeline import (ConfigError, PipelineConfig, read_manifest, read_stage1,
                       render_manifest_summary, render_stage1_report, run_image_stage,
                       run_variation_stage, write_stage1, write_stage2, VariationStageResult, dumps)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("pipeline configuration (overrides --config)")
    for f in fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        default = f.default
        if isinstance(default, tuple):
            g.add_argument(flag, dest=f.name, nargs="+", default=argparse.SUPPRESS)
        else:
            kind = str if default is None else type(default)
            g.add_argument(flag, dest=f.name, type=kind, default=argparse.SUPPRESS,
                           metavar=f.name.upper())
    p.add_argument("--config", help="JSON config file (same schema as the manifest's config echo)")
    p.add_argument("--out", default="out", help="output directory (default: out)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="webly", description="Word-variation and image purification pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    p = sub.add_parser("variations", help="stage 1: discover and purify word variations")
    _add_config_flags(p)
    p = sub.add_parser("images", help="stage 2: purify images for saved stage-1 output")
    _add_config_flags(p)
    p.add_argument("--variations", help="stage-1 output (default: <out>/variations.json)")
    p = sub.add_parser("run", help="both stages")
    _add_config_flags(p)
    p = sub.add_parser("report", help="render tables from saved outputs")
    p.add_argument("--out", default="out")
    return parser


def _config(args, base=None) -> PipelineConfig:
    d = dict(base or {})
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                d.update(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON: {exc}") from None
    names = {f.name for f in fields(PipelineConfig)}
    d.update({k: v for k, v in vars(args).items() if k in names})
    try:
        return PipelineConfig.from_dict(d).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _require(cfg: PipelineConfig, *names):
    missing = [n for n in names if not getattr(cfg, n)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _cmd_variations(args):
    cfg = _config(args)
    _require(cfg, "concept", "corpus", "docs", "images")
    print(f"seed: {cfg.seed}")
    result = run_variation_stage(cfg)
    path = write_stage1(args.out, result)
    print(f"variations: {len(result.variations)} surviving -> {path}")
    return result


def _cmd_images(args, stage1=None):
    if stage1 is None:
        src = args.variations or str(Path(args.out) / "variations.json")
        stage1 = read_stage1(src)
    cfg = _config(args, base=stage1.config)
    _require(cfg, "images")
    print(f"seed: {cfg.seed}")
    output = run_image_stage(cfg, stage1)
    path = write_stage2(args.out, output)
    kept = sum(len(v.kept) for v in output.manifest.variations)
    print(f"manifest: {kept} images kept across {len(output.manifest.variations)} variations -> {path}")


def _cmd_run(args):
    result = _cmd_variations(args)
    # stage 2 reads exactly what stage 1 wrote
    stage1 = VariationStageResult.from_dict(json.loads(dumps(result.to_dict())))
    _cmd_images(args, stage1)


def _cmd_report(args):
    out = Path(args.out)
    shown = False
    if (out / "variations.json").exists():
        print(render_stage1_report(read_stage1(out / "variations.json")))
        shown = True
    if (out / "manifest.json").exists():
        if shown:
            print()
        print(render_manifest_summary(read_manifest(out / "manifest.json")))
        shown = True
    if not shown:
        raise DataError(f"no saved reports in {out}")


COMMANDS = {"variations": _cmd_variations, "images": _cmd_images, "run": _cmd_run,
            "report": _cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        msg = str(exc)
        if not msg.startswith("usage:"):
            msg = parser.format_usage() + f"webly: error: {msg}"
        print(msg, file=sys.stderr)
        return EXIT_USAGE
    except NoSurvivingVariations as exc:
        print(f"webly: error: no surviving variations after step {exc.step!r}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, OSError) as exc:
        print(f"webly: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
