"""Experiment orchestration: grid design, seeded execution, run ledger, fits.

A grid is the Cartesian product of subset instances (one deterministic draw at
fraction 1.0, four stochastic repeats at every smaller fraction), resolutions,
ladder sizes, and evaluation protocols. Every cell's seeds derive from the
master seed by hashing the cell coordinates, so the grid is a pure function of
its configuration.

Results land in an append-only JSONL ledger, written in cell-design order no
matter how many workers run or in which order they finish. Reruns skip cells
already present; a ledger opened against a different corpus or configuration
refuses to resume.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .corpus import CorpusManifest, SubsetSpec, sample_subset
from .errors import ConfigError, LedgerMismatch, TrainingDiverged
from .evaluation import EvalProtocol, extract_features, finetune_two_percent, linear_probe
from .mae import SizeLadder, TrainSchedule, init_params, size_ladder, train, LADDER_NAMES
from .scaling import FitResult, ScalingPoint, check_identifiability, fit
from .seeding import derive_seed

logger = logging.getLogger(__name__)

REPEATS_PER_FRACTION = 4
PROTOCOL_ORDER = (EvalProtocol.NO_FINETUNE, EvalProtocol.FINETUNE_2PCT)


@dataclass(frozen=True)
class CellSeeds:
    subset: int
    init: int
    train: int
    eval: int


@dataclass(frozen=True)
class ExperimentCell:
    fraction: float
    repeat_index: int
    resolution: int
    model_name: str
    protocol: EvalProtocol
    seeds: CellSeeds

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")
        if not 0 <= self.repeat_index < REPEATS_PER_FRACTION:
            raise ValueError(f"repeat_index must be in [0, {REPEATS_PER_FRACTION})")
        if self.fraction == 1.0 and self.repeat_index != 0:
            raise ValueError("fraction 1.0 is deterministic and has a single repeat")

    def key(self) -> str:
        return (
            f"f={self.fraction!r}|r={self.repeat_index}|res={self.resolution}"
            f"|m={self.model_name}|p={self.protocol.value}"
        )


@dataclass(frozen=True)
class ExperimentResult:
    cell: ExperimentCell
    i_thousands: float
    accuracy_pct: float | None
    final_train_loss: float | None
    wall_seconds: float
    status: str

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class GridConfig:
    fractions: tuple[float, ...]
    resolutions: tuple[int, ...]
    ladder: tuple[str, ...]
    protocols: tuple[EvalProtocol, ...]
    master_seed: int
    epochs: int
    batch_size: int
    learning_rate: float

    def __post_init__(self):
        if not self.fractions or not self.resolutions or not self.ladder or not self.protocols:
            raise ConfigError("fractions, resolutions, ladder, and protocols must be non-empty")
        for f in self.fractions:
            if not 0.0 < f <= 1.0:
                raise ConfigError(f"fraction {f} outside (0, 1]")
        for r in self.resolutions:
            if r < 8 or r % 8 != 0:
                raise ConfigError(f"resolution {r} must be a multiple of 8 (>= 8)")
        for name in self.ladder:
            if name not in LADDER_NAMES:
                raise ConfigError(f"unknown ladder entry {name!r}; choose from {LADDER_NAMES}")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate < 0:
            raise ConfigError("epochs must be >= 0, batch_size >= 1, learning_rate >= 0")

    @classmethod
    def from_dict(cls, payload: dict) -> "GridConfig":
        required = {"fractions", "resolutions", "ladder", "protocols", "master_seed",
                    "epochs", "batch_size", "learning_rate"}
        missing = required - payload.keys()
        if missing:
            raise ConfigError(f"config missing keys: {sorted(missing)}")
        unknown = payload.keys() - required
        if unknown:
            raise ConfigError(f"config has unknown keys: {sorted(unknown)}")
        try:
            protocols = tuple(EvalProtocol(p) for p in payload["protocols"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(
            fractions=tuple(float(f) for f in payload["fractions"]),
            resolutions=tuple(int(r) for r in payload["resolutions"]),
            ladder=tuple(str(s) for s in payload["ladder"]),
            protocols=protocols,
            master_seed=int(payload["master_seed"]),
            epochs=int(payload["epochs"]),
            batch_size=int(payload["batch_size"]),
            learning_rate=float(payload["learning_rate"]),
        )

    @classmethod
    def from_json_file(cls, path: str | Path) -> "GridConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(payload)

    def to_dict(self) -> dict:
        return {
            "fractions": list(self.fractions),
            "resolutions": list(self.resolutions),
            "ladder": list(self.ladder),
            "protocols": [p.value for p in self.protocols],
            "master_seed": self.master_seed,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _cell_seeds(master_seed: int, fraction: float, repeat: int, resolution: int,
                model_name: str, protocol: EvalProtocol) -> CellSeeds:
    # Repeats re-randomize the subset draw and the training stochasticity
    # only: initialization is a property of (resolution, size) so accuracy
    # comparisons across fractions are paired, and the evaluation split is
    # one fixed seeded split per protocol. Pretraining ignores the protocol,
    # so both protocols score the same checkpoint.
    return CellSeeds(
        subset=derive_seed(master_seed, "subset", repr(fraction), repeat),
        init=derive_seed(master_seed, "init", resolution, model_name),
        train=derive_seed(master_seed, "train", repr(fraction), repeat, resolution, model_name),
        eval=derive_seed(master_seed, "eval", protocol.value),
    )


def design_grid(config: GridConfig) -> list[ExperimentCell]:
    """Deterministic cell list: fractions desc, repeat asc, resolution asc,
    size asc, protocol in fixed order."""
    cells = []
    fractions = sorted(set(config.fractions), reverse=True)
    resolutions = sorted(set(config.resolutions))
    sizes = [name for name in LADDER_NAMES if name in config.ladder]
    protocols = [p for p in PROTOCOL_ORDER if p in config.protocols]
    for fraction in fractions:
        repeats = [0] if fraction == 1.0 else list(range(REPEATS_PER_FRACTION))
        for repeat in repeats:
            for resolution in resolutions:
                for model_name in sizes:
                    for protocol in protocols:
                        cells.append(ExperimentCell(
                            fraction=fraction,
                            repeat_index=repeat,
                            resolution=resolution,
                            model_name=model_name,
                            protocol=protocol,
                            seeds=_cell_seeds(config.master_seed, fraction, repeat,
                                              resolution, model_name, protocol),
                        ))
    return cells


@dataclass(frozen=True)
class TrainHyper:
    epochs: int
    batch_size: int
    learning_rate: float

    @classmethod
    def from_config(cls, config: GridConfig) -> "TrainHyper":
        return cls(config.epochs, config.batch_size, config.learning_rate)


def run_cell(cell: ExperimentCell, manifest: CorpusManifest, ladder: SizeLadder,
             hyper: TrainHyper) -> ExperimentResult:
    """Subset -> pretrain -> evaluate. Training and evaluation failures are
    captured in the result status; only configuration mistakes raise."""
    model_config = ladder.by_name(cell.model_name)
    if manifest.image_side() != cell.resolution or model_config.image_side != cell.resolution:
        raise ConfigError(
            f"cell at {cell.resolution}px got a {manifest.image_side()}px manifest"
        )
    started = time.perf_counter()
    subset = sample_subset(manifest, SubsetSpec(cell.fraction, cell.seeds.subset, cell.repeat_index))
    i_thousands = len(subset) / 1000.0

    accuracy: float | None = None
    final_loss: float | None = None
    status = "ok"
    try:
        store = init_params(model_config, cell.seeds.init)
        schedule = TrainSchedule(hyper.epochs, hyper.batch_size, hyper.learning_rate,
                                 cell.seeds.train)
        trained, trace = train(store, model_config, subset, schedule)
        final_loss = trace[-1] if trace else None
        if cell.protocol is EvalProtocol.NO_FINETUNE:
            features = extract_features(trained, model_config, manifest)
            report = linear_probe(features, manifest.labels(), seed=cell.seeds.eval)
        else:
            report = finetune_two_percent(trained, model_config, manifest, manifest.labels(),
                                          schedule, seed=cell.seeds.eval)
        accuracy = report.accuracy_pct
    except TrainingDiverged:
        status = "failed:nan-loss"
    except Exception as exc:  # runtime failures become ledger entries
        status = f"failed:{type(exc).__name__}: {exc}"
    return ExperimentResult(
        cell=cell,
        i_thousands=i_thousands,
        accuracy_pct=accuracy,
        final_train_loss=final_loss,
        wall_seconds=time.perf_counter() - started,
        status=status,
    )


# --------------------------------------------------------------------------
# Ledger persistence
# --------------------------------------------------------------------------

def corpus_fingerprint(manifests: dict[int, CorpusManifest]) -> str:
    digest = hashlib.sha256()
    for resolution in sorted(manifests):
        manifest = manifests[resolution]
        digest.update(f"res={resolution};n={len(manifest)}".encode("utf-8"))
        for record in manifest.records:
            digest.update(f"{record.id}|{record.source}|{record.label}".encode("utf-8"))
            digest.update(record.pixels.tobytes())
    return digest.hexdigest()[:16]


def _cell_to_dict(cell: ExperimentCell) -> dict:
    return {
        "fraction": cell.fraction,
        "repeat_index": cell.repeat_index,
        "resolution": cell.resolution,
        "model_name": cell.model_name,
        "protocol": cell.protocol.value,
        "seeds": {"subset": cell.seeds.subset, "init": cell.seeds.init,
                  "train": cell.seeds.train, "eval": cell.seeds.eval},
    }


def _cell_from_dict(payload: dict) -> ExperimentCell:
    seeds = payload["seeds"]
    return ExperimentCell(
        fraction=float(payload["fraction"]),
        repeat_index=int(payload["repeat_index"]),
        resolution=int(payload["resolution"]),
        model_name=str(payload["model_name"]),
        protocol=EvalProtocol(payload["protocol"]),
        seeds=CellSeeds(subset=int(seeds["subset"]), init=int(seeds["init"]),
                        train=int(seeds["train"]), eval=int(seeds["eval"])),
    )


def _result_to_line(result: ExperimentResult) -> str:
    payload = {
        "kind": "result",
        "cell": _cell_to_dict(result.cell),
        "i_thousands": result.i_thousands,
        "accuracy_pct": result.accuracy_pct,
        "final_train_loss": result.final_train_loss,
        "wall_seconds": result.wall_seconds,
        "status": result.status,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _result_from_dict(payload: dict) -> ExperimentResult:
    return ExperimentResult(
        cell=_cell_from_dict(payload["cell"]),
        i_thousands=float(payload["i_thousands"]),
        accuracy_pct=None if payload["accuracy_pct"] is None else float(payload["accuracy_pct"]),
        final_train_loss=None if payload["final_train_loss"] is None else float(payload["final_train_loss"]),
        wall_seconds=float(payload["wall_seconds"]),
        status=str(payload["status"]),
    )


class RunLedger:
    """Append-only JSONL record of experiment results plus a run header."""

    def __init__(self, path: str | Path, header: dict, results: list[ExperimentResult] | None = None):
        self.path = Path(path)
        self.header = dict(header)
        self.results: list[ExperimentResult] = list(results or [])

    @classmethod
    def create(cls, path: str | Path, header: dict) -> "RunLedger":
        ledger = cls(path, header)
        with open(ledger.path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"kind": "header", **header}, sort_keys=True,
                                separators=(",", ":")) + "\n")
        return ledger

    @classmethod
    def load(cls, path: str | Path) -> "RunLedger":
        path = Path(path)
        header: dict | None = None
        results: list[ExperimentResult] = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                payload = json.loads(line)
                kind = payload.pop("kind", None)
                if kind == "header":
                    if header is not None:
                        raise ValueError("ledger holds more than one header")
                    header = payload
                elif kind == "result":
                    results.append(_result_from_dict(payload))
                else:
                    raise ValueError(f"unknown ledger line kind {kind!r}")
        if header is None:
            raise ValueError(f"{path} has no ledger header")
        keys = [r.cell.key() for r in results]
        if len(set(keys)) != len(keys):
            raise ValueError("ledger contains duplicate cells")
        return cls(path, header, results)

    def append(self, result: ExperimentResult) -> None:
        if result.cell.key() in {r.cell.key() for r in self.results}:
            raise ValueError(f"cell already present: {result.cell.key()}")
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(_result_to_line(result) + "\n")
            fh.flush()
        self.results.append(result)

    def keys(self) -> set[str]:
        return {r.cell.key() for r in self.results}

    def ok_results(self) -> list[ExperimentResult]:
        return [r for r in self.results if r.ok]


def run_grid(cells: list[ExperimentCell], manifests: dict[int, CorpusManifest],
             workers: int, ledger_path: str | Path, hyper: TrainHyper,
             config_hash: str) -> RunLedger:
    """Execute pending cells with a bounded worker pool.

    Completed results are appended strictly in cell-design order, so the
    ledger bytes do not depend on the worker count. Cells already present are
    skipped, which makes interrupted runs resumable.
    """
    for cell in cells:
        if cell.resolution not in manifests:
            raise ConfigError(f"no corpus provided for resolution {cell.resolution}")
    header = {
        "corpus_fingerprint": corpus_fingerprint(manifests),
        "config_hash": config_hash,
        "tool_version": __version__,
    }
    path = Path(ledger_path)
    if path.exists() and path.stat().st_size > 0:
        ledger = RunLedger.load(path)
        if ledger.header != header:
            raise LedgerMismatch(
                f"ledger at {path} was written for a different corpus or config: "
                f"{ledger.header} != {header}"
            )
    else:
        ledger = RunLedger.create(path, header)

    ladders = {res: size_ladder(res) for res in sorted({c.resolution for c in cells})}
    pending = [c for c in cells if c.key() not in ledger.keys()]
    logger.info("run_grid: %d cells, %d pending, %d workers", len(cells), len(pending), workers)

    if workers <= 1:
        for cell in pending:
            ledger.append(run_cell(cell, manifests[cell.resolution], ladders[cell.resolution], hyper))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run_cell, cell, manifests[cell.resolution],
                            ladders[cell.resolution], hyper)
                for cell in pending
            ]
            for future in futures:
                ledger.append(future.result())
    return ledger


def fit_from_ledger(ledger: RunLedger) -> dict[tuple[str, str], FitResult]:
    """One fit per (model size, protocol) group of ok results.

    Groups that cannot identify the parameters are skipped with a warning
    naming the defect; they never fail the whole call.
    """
    groups: dict[tuple[str, str], list[ScalingPoint]] = {}
    for result in ledger.ok_results():
        key = (result.cell.model_name, result.cell.protocol.value)
        groups.setdefault(key, []).append(
            ScalingPoint(i=result.i_thousands, ppi=float(result.cell.resolution),
                         accuracy_pct=result.accuracy_pct)
        )
    fits: dict[tuple[str, str], FitResult] = {}
    for key in sorted(groups):
        defect = check_identifiability(groups[key])
        if defect is not None:
            logger.warning("skipping group %s/%s: %s", key[0], key[1], defect)
            continue
        fits[key] = fit(groups[key])
    return fits
