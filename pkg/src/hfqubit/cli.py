"""Command-line entry point: ``hfqubit simulate|fit|render|presets``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import presets
from .config import ConfigError, validate
from .results import ResultTable, atomic_write_text
from .runner import FIT_KINDS, OUTPUT_ENV, RunError, default_output_dir, run
from .svg import PlotSpec, render_svg

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


def _load_document(ref: str) -> tuple[dict, Path | None]:
    path = Path(ref)
    if path.is_file():
        try:
            doc = presets.load_yaml(path.read_text(encoding="utf-8"))
        except Exception as exc:  # yaml.YAMLError and decoding errors
            raise ConfigError([f"<root>: cannot read {ref} ({exc})"]) from None
        return (doc if doc is not None else {}), path.parent
    if ref in presets.experiment_names():
        return {"preset": ref}, None
    raise ConfigError([f"<root>: {ref!r} is neither a config file nor an experiment preset"])


def _experiment(args, fit: bool) -> int:
    doc, base_dir = _load_document(args.config)
    if args.seed is not None:
        if not isinstance(doc, dict):
            raise ConfigError(["<root>: config must be a mapping"])
        doc = {**doc, "seed": args.seed}
    cfg = validate(doc, strict=args.strict, base_dir=base_dir)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if fit != (cfg.kind in FIT_KINDS):
        verb = "fit" if cfg.kind in FIT_KINDS else "simulate"
        raise ConfigError([f"kind: {cfg.kind!r} is run with `{verb}`"])
    if args.svg:
        cfg.output["svg"] = True
    out = run(cfg, args.out)
    for path in out.files:
        print(path)
    return EXIT_OK


def _render(args) -> int:
    table = ResultTable.read_csv(args.csv)
    spec_path = Path(args.plotspec)
    text = spec_path.read_text(encoding="utf-8") if spec_path.is_file() else args.plotspec
    data = presets.load_yaml(text)
    if not isinstance(data, dict):
        raise ConfigError([f"<root>: plot spec must be a mapping, got {args.plotspec!r}"])
    try:
        spec = PlotSpec.from_mapping(data)
        svg = render_svg(table, spec)
    except ValueError as exc:
        raise ConfigError([f"plotspec: {exc}"]) from None
    target = Path(args.out) if args.out else Path(args.csv).with_suffix(".svg")
    print(atomic_write_text(target, svg))
    return EXIT_OK


def _presets(args) -> int:
    if args.action == "list":
        rows = presets.listing()
        width = max(len(r[1]) for r in rows)
        group = None
        for g, name, desc in rows:
            if g != group:
                print(f"[{g}]")
                group = g
            print(f"  {name:<{width}}  {desc}")
        return EXIT_OK
    if args.name is None:
        raise ConfigError(["presets show: give a preset name"])
    if args.name in presets.experiment_names():
        import yaml

        print(yaml.safe_dump(presets.experiment(args.name), sort_keys=False), end="")
        return EXIT_OK
    raise ConfigError([f"presets show: unknown experiment preset {args.name!r}"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hfqubit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("simulate", "run a simulation config"), ("fit", "run a fitting config")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="YAML config file or experiment preset name")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or ./hfqubit-out)")
        p.add_argument("--svg", action="store_true", help="also write an SVG plot")
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--strict", dest="strict", action="store_true", default=True, help="unknown keys are errors (default)")
        mode.add_argument("--lax", dest="strict", action="store_false", help="unknown keys are warnings")
    p = sub.add_parser("render", help="render a result CSV to SVG")
    p.add_argument("csv")
    p.add_argument("plotspec", help="YAML file or inline mapping with x, y, logx, logy, title")
    p.add_argument("--out", default=None, help="SVG path (default: CSV path with .svg)")
    p = sub.add_parser("presets", help="list or show shipped presets")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("name", nargs="?")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("simulate", "fit"):
            if args.out is None:
                args.out = default_output_dir()
            return _experiment(args, fit=args.command == "fit")
        if args.command == "render":
            return _render(args)
        return _presets(args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RunError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything else is still a runtime failure, not a crash
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
