"""Command-line interface.

Subcommands: generate-corpus, run-grid, fit, predict, scenario, report.
Exit codes: 0 ok, 2 config error, 3 identifiability error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .corpus import FIG1_MIXTURE, MixtureSpec, build_synthetic_corpus, load_manifest, save_manifest
from .errors import ConfigError, IdentifiabilityError, NumericError
from .harness import GridConfig, RunLedger, TrainHyper, design_grid, fit_from_ledger, run_grid
from .report import emit_report, read_fits_json, write_fits_json, write_scenario_report
from .scaling import clamp_pct, predict
from .scenarios import builtin_table1, read_scenarios_csv


def _side_dir(corpus_dir: Path, side: int) -> Path:
    return corpus_dir / f"side_{side}"


def _cmd_generate_corpus(args) -> int:
    manifest = build_synthetic_corpus(
        n_images=args.images,
        mixture=MixtureSpec(FIG1_MIXTURE),
        class_count=args.classes,
        image_side=args.side,
        seed=args.seed,
    )
    target = _side_dir(Path(args.out), args.side)
    save_manifest(manifest, target)
    print(f"wrote {len(manifest)} images to {target}")
    return 0


def _load_corpora(corpus_dir: Path, resolutions) -> dict:
    manifests = {}
    for resolution in resolutions:
        target = _side_dir(corpus_dir, resolution)
        if not target.is_dir():
            raise ConfigError(
                f"no corpus for resolution {resolution}: expected {target} "
                f"(run generate-corpus --side {resolution})"
            )
        manifests[resolution] = load_manifest(target)
    return manifests


def _cmd_run_grid(args) -> int:
    config = GridConfig.from_json_file(args.config)
    manifests = _load_corpora(Path(args.corpus), config.resolutions)
    cells = design_grid(config)
    ledger = run_grid(cells, manifests, args.workers, args.ledger,
                      TrainHyper.from_config(config), config.config_hash())
    ok = sum(1 for r in ledger.results if r.ok)
    print(f"ledger {args.ledger}: {len(ledger.results)} results ({ok} ok)")
    return 0


def _cmd_fit(args) -> int:
    ledger = RunLedger.load(args.ledger)
    fits = fit_from_ledger(ledger)
    if not fits:
        raise IdentifiabilityError("no group in the ledger is identifiable")
    write_fits_json(args.out, fits)
    for (model, protocol), result in sorted(fits.items()):
        print(f"{model}/{protocol}: c={result.params.c:.6g} a={result.params.a:.6g} "
              f"b={result.params.b:.6g} rmse={result.rmse:.4g} n={result.n_points}")
    return 0


def _select_fit(fits: dict, model: str | None, protocol: str | None):
    matches = {
        key: value for key, value in fits.items()
        if (model is None or key[0] == model) and (protocol is None or key[1] == protocol)
    }
    if not matches:
        raise ConfigError(f"no fit matches model={model!r} protocol={protocol!r}")
    if len(matches) > 1:
        options = ", ".join(f"{m}/{p}" for m, p in sorted(matches))
        raise ConfigError(f"ambiguous fit selection ({options}); pass --model/--protocol")
    return next(iter(matches.items()))


def _cmd_predict(args) -> int:
    fits = read_fits_json(args.fits)
    (model, protocol), result = _select_fit(fits, args.model, args.protocol)
    value = predict(result.params, args.i, args.ppi)
    print(json.dumps({
        "model_name": model,
        "protocol": protocol,
        "i_thousands": args.i,
        "ppi": args.ppi,
        "predicted_pct": value,
        "clamped_pct": clamp_pct(value),
    }, sort_keys=True))
    return 0


def _cmd_scenario(args) -> int:
    fits = read_fits_json(args.fits)
    if not fits:
        raise ConfigError("fits file holds no fits")
    scenarios = builtin_table1() if args.table1 else read_scenarios_csv(args.file)
    write_scenario_report(args.out, fits, scenarios)
    print(f"wrote {args.out} ({len(scenarios)} scenarios x {len(fits)} fits)")
    return 0


def _cmd_report(args) -> int:
    ledger = RunLedger.load(args.ledger)
    fits = read_fits_json(args.fits)
    if not fits:
        raise ConfigError("fits file holds no fits")
    written = emit_report(ledger, fits, builtin_table1(), args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maescale", description=__doc__)
    parser.add_argument("--version", action="version", version=f"maescale {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-corpus", help="write a synthetic corpus at one resolution")
    p.add_argument("--out", required=True, help="corpus directory (per-side subdirs)")
    p.add_argument("--images", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--side", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=_cmd_generate_corpus)

    p = sub.add_parser("run-grid", help="execute the experiment grid into a ledger")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", required=True, help="grid config JSON")
    p.add_argument("--ledger", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_run_grid)

    p = sub.add_parser("fit", help="fit the scaling law per (size, protocol) group")
    p.add_argument("--ledger", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="evaluate a fitted law at (i, ppi)")
    p.add_argument("--fits", required=True)
    p.add_argument("--i", type=float, required=True, help="data amount in thousands")
    p.add_argument("--ppi", type=float, required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--protocol", default=None)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("scenario", help="evaluate scenarios under the fitted laws")
    p.add_argument("--fits", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--table1", action="store_true", help="use the built-in reference table")
    group.add_argument("--file", default=None, help="scenario CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_scenario)

    p = sub.add_parser("report", help="emit points.csv, fits.json, SVGs, scenarios.csv")
    p.add_argument("--ledger", required=True)
    p.add_argument("--fits", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IdentifiabilityError as exc:
        print(f"identifiability error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, NumericError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
