"""Command-line entry point: ``holefill synth|train|fill|eval|export``.

Exit status is 0 on success, 2 when a report contains failed cases and 1
on fatal errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .dataset import (DatasetRecord, generate_corpus, read_records, split,
                      write_records)
from .errors import ConfigurationError, HoleFillError
from .geom import load_surface, save_surface
from .net import NetConfig, TrainConfig, load_checkpoint, save_checkpoint, train, write_trace
from .param import HoleBoundary, PCurve, load_json, save_json
from .pipeline import (METHODS, FillReport, RunConfig, export_mesh, fill_record,
                       read_flat_config, run_eval, run_fill, write_report)

log = logging.getLogger("holefill")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


def _typed(cls, values: dict) -> dict:
    """Pick and convert the entries of ``values`` that are fields of ``cls``."""
    out = {}
    for f in fields(cls):
        if f.name not in values:
            continue
        raw = values[f.name]
        default = f.default
        if isinstance(default, bool):
            out[f.name] = str(raw).strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(default, int):
            out[f.name] = int(raw)
        elif isinstance(default, float):
            out[f.name] = float(raw)
        else:
            out[f.name] = raw
    return out


def _load_config(path):
    return read_flat_config(path) if path else {}


def _records_for(path, which: str, seed: int, ratio: float = 0.9):
    records = read_records(path)
    if which == "all":
        return records
    train_part, test_part = split(records, ratio, seed)
    return train_part if which == "train" else test_part


def cmd_synth(args) -> int:
    per = args.per_surface
    n_surfaces = -(-args.count // per)
    records = generate_corpus(n_surfaces, per, seed=args.seed,
                              noise_level=args.noise)[: args.count]
    write_records(records, args.out, {"seed": args.seed, "noise_level": args.noise,
                                      "surfaces": n_surfaces,
                                      "pcurves_per_surface": per})
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    values = _load_config(args.config)
    ncfg = NetConfig(**_typed(NetConfig, values))
    tcfg = TrainConfig(**_typed(TrainConfig, values))
    split_seed = int(values.get("split_seed", 0))
    records = _records_for(args.dataset, values.get("split", "train"), split_seed)
    model, trace = train(records, ncfg, tcfg)
    save_checkpoint(model, args.out, extra={"train_config": tcfg.__dict__,
                                            "split_seed": split_seed})
    write_trace(trace, Path(str(args.out) + ".trace.csv"))
    print(f"trained on {len(records)} records; checkpoint {args.out}")
    return EXIT_OK


def _read_boundary_file(path):
    """A boundary JSON, or a dataset record JSON (which also carries the
    target surface and ground-truth pcurve)."""
    data = load_json(path)
    if "boundary" in data and "target_surface" in data:
        return DatasetRecord.from_dict(data)
    return HoleBoundary.from_dict(data)


def cmd_fill(args) -> int:
    cfg = RunConfig.from_mapping({**_load_config(args.config), "method": args.method})
    model = load_checkpoint(args.checkpoint) if args.checkpoint else None
    item = _read_boundary_file(args.boundary)
    if isinstance(item, DatasetRecord):
        filled, pc, row = fill_record(cfg, item, model)
    else:
        filled, pc, row = run_fill(cfg, item, model=model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = FillReport([row])
    report.write_csv(out / "report.csv")
    if filled is not None:
        save_surface(filled, out / "surface.json")
    if pc is not None:
        save_json(pc, out / "pcurve.json")
    print(report.summary())
    if row["status"] != "ok":
        print(f"fill failed: {row['message']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_eval(args) -> int:
    values = _load_config(args.config)
    model = load_checkpoint(args.checkpoint) if args.checkpoint else None
    if args.method == "all":
        # without a checkpoint "all" means every method that needs no model
        methods = [m for m in METHODS if model is not None or m != "uvtran"]
    else:
        methods = args.method.split(",")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ConfigurationError(f"unknown method(s): {', '.join(sorted(unknown))}")
    if "uvtran" in methods and model is None:
        raise ConfigurationError("method uvtran needs --checkpoint")
    cfg = RunConfig.from_mapping({**values, "method": methods[0]})
    records = _records_for(args.dataset, args.split, int(values.get("split_seed", 0)))
    report = run_eval(cfg, records, model, methods)
    write_report(report, args.report)
    print(report.summary())
    return EXIT_PARTIAL if report.has_failures else EXIT_OK


def cmd_export(args) -> int:
    surface = load_surface(args.surface)
    pc = PCurve.from_dict(load_json(args.pcurve)) if args.pcurve else None
    out = args.out or str(Path(args.surface).with_suffix(".obj"))
    mesh = export_mesh(surface, pc, args.res, out)
    print(f"wrote {len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles to {out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are fatal; argparse's own status 2 would read as
    # "report has failed cases"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FATAL, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="holefill", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--count", type=int, required=True, help="number of records")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--per-surface", type=int, default=4)
    s.add_argument("--noise", type=float, default=0.02)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train the network on a dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("fill", help="fill a single hole")
    s.add_argument("--method", choices=METHODS, default="uvtran")
    s.add_argument("--boundary", required=True)
    s.add_argument("--checkpoint")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fill)

    s = sub.add_parser("eval", help="evaluate methods on a dataset split")
    s.add_argument("--method", default="all",
                   help="method, comma-separated list, or 'all'")
    s.add_argument("--dataset", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--checkpoint")
    s.add_argument("--config")
    s.add_argument("--split", choices=("train", "test", "all"), default="test")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("export", help="tessellate a surface to OBJ")
    s.add_argument("--surface", required=True)
    s.add_argument("--pcurve")
    s.add_argument("--res", type=int, default=32)
    s.add_argument("--out")
    s.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (OSError, ValueError, ArithmeticError, HoleFillError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"holefill: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
