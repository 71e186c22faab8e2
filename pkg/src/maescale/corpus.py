"""Image corpus model: synthetic generation and stratified subset sampling.

A corpus is an ordered list of image records, each tagged with the dataset it
stands in for. Per-source counts follow the declared mixture through
largest-remainder apportionment, and subsets are drawn stratified so every
source keeps its share at any fraction. All randomness is seeded; identical
inputs produce bit-identical manifests.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeding import derive_seed, rng_for

SOURCE_TAG_PATTERN = re.compile(r"^(IMAGENET|CELEBA|ADE20K|CIFAR10|SYNTHETIC-\d+)$")

# Declared proportions of the four-source training mixture; the largest
# contributor is pinned at exactly one half so the shares close to 1.
FIG1_MIXTURE = {
    "IMAGENET": 0.500,
    "CELEBA": 0.315,
    "ADE20K": 0.135,
    "CIFAR10": 0.050,
}

_MIXTURE_SUM_TOL = 1e-9


def validate_source_tag(name: str) -> str:
    if not SOURCE_TAG_PATTERN.match(name):
        raise ValueError(f"unknown source tag {name!r}")
    return name


@dataclass(frozen=True)
class MixtureSpec:
    """Declared per-source proportions; must be nonnegative and sum to 1."""

    proportions: dict[str, float]

    def __post_init__(self):
        for name, p in self.proportions.items():
            validate_source_tag(name)
            if p < 0:
                raise ValueError(f"negative proportion for {name}: {p}")
        total = sum(self.proportions.values())
        if abs(total - 1.0) > _MIXTURE_SUM_TOL:
            raise ValueError(f"mixture proportions sum to {total!r}, expected 1.0")

    def sources(self) -> list[str]:
        return list(self.proportions)


@dataclass(frozen=True)
class ImageRecord:
    """One image: float32 intensity grid in [0, 1] plus provenance fields."""

    id: str
    source: str
    width: int
    height: int
    pixels: np.ndarray
    label: int | None = None
    gen_seed: int | None = None

    def __post_init__(self):
        validate_source_tag(self.source)
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.shape != (self.height, self.width):
            raise ValueError(f"pixel grid {px.shape} does not match {self.height}x{self.width}")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError(f"record {self.id}: intensities outside [0, 1]")
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class CorpusManifest:
    """Ordered, immutable record list with its declared mixture."""

    records: tuple[ImageRecord, ...]
    mixture: MixtureSpec
    class_count: int

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("record ids are not unique")
        n = len(self.records)
        if n:
            counts = self.source_counts()
            for source, p in self.mixture.proportions.items():
                share = counts.get(source, 0) / n
                if abs(share - p) > 1.0 / n + 1e-12:
                    raise ValueError(
                        f"empirical proportion of {source} is {share:.6f}, "
                        f"declared {p:.6f} (tolerance 1/{n})"
                    )

    def __len__(self) -> int:
        return len(self.records)

    def source_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for r in self.records:
            counts[r.source] = counts.get(r.source, 0) + 1
        return counts

    def labels(self) -> np.ndarray:
        return np.array([-1 if r.label is None else r.label for r in self.records], dtype=np.int64)

    def image_side(self) -> int:
        sides = {(r.height, r.width) for r in self.records}
        if len(sides) != 1:
            raise ValueError("manifest mixes image shapes")
        h, w = next(iter(sides))
        if h != w:
            raise ValueError("images are not square")
        return h


@dataclass(frozen=True)
class SubsetSpec:
    """One stochastic subset draw: fraction, seed, and which repeat it is."""

    fraction: float
    seed: int
    repeat_index: int = 0

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.repeat_index < 0:
            raise ValueError("repeat_index must be >= 0")


def apportion_largest_remainder(total: int, proportions: list[float]) -> list[int]:
    """Split `total` into integer counts proportional to `proportions`.

    Hamilton's method: assign floors, then hand the leftover units to the
    largest fractional parts (ties broken by position). Counts always sum to
    `total` and each differs from its real-valued target by less than 1.
    """
    if total < 0:
        raise ValueError("total must be nonnegative")
    weight = sum(proportions)
    if weight <= 0:
        raise ValueError("proportions must have positive sum")
    targets = [total * p / weight for p in proportions]
    counts = [int(np.floor(t)) for t in targets]
    leftover = total - sum(counts)
    fractional = sorted(range(len(targets)), key=lambda j: (-(targets[j] - counts[j]), j))
    for j in fractional[:leftover]:
        counts[j] += 1
    return counts


PATTERN_AMPLITUDE = 0.30
PATTERN_NOISE = 0.35
ORIENTATION_BAND_DEG = 12.0


def _class_pattern(side: int, label: int, class_count: int, rng: np.random.Generator) -> np.ndarray:
    """Oriented grating whose orientation sector encodes the class.

    Frequency and phase are per-image nuisances, so a class is a continuous
    family of textures rather than a fixed template; the additive noise keeps
    raw pixel statistics from giving the class away."""
    jitter = np.deg2rad(rng.uniform(-ORIENTATION_BAND_DEG, ORIENTATION_BAND_DEG))
    theta = np.pi * label / class_count + jitter
    cycles = rng.uniform(2.0, 3.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    axis = (xx * np.cos(theta) + yy * np.sin(theta)) / side
    wave = np.sin(2.0 * np.pi * cycles * axis + phase)
    noise = rng.uniform(-1.0, 1.0, size=(side, side))
    img = 0.5 + PATTERN_AMPLITUDE * wave + PATTERN_NOISE * noise
    return np.clip(img, 0.0, 1.0)


def build_synthetic_corpus(
    n_images: int,
    mixture: MixtureSpec,
    class_count: int,
    image_side: int,
    seed: int,
) -> CorpusManifest:
    """Generate a deterministic labeled corpus following `mixture`.

    Source tags are laid out block-wise in apportioned counts; labels cycle
    round-robin so every source carries every class. A record's content
    depends only on (seed, index), never on image_side ordering, so corpora
    generated at different resolutions stay aligned record-for-record.
    """
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    if class_count < 2 or n_images < class_count:
        raise ValueError("need n_images >= class_count >= 2")
    if image_side < 8:
        raise ValueError("image_side must be >= 8")

    sources = mixture.sources()
    counts = apportion_largest_remainder(n_images, [mixture.proportions[s] for s in sources])
    tags: list[str] = []
    for source, count in zip(sources, counts):
        tags.extend([source] * count)

    records = []
    for index, source in enumerate(tags):
        label = index % class_count
        gen_seed = derive_seed(seed, "image", index)
        rng = np.random.default_rng(gen_seed)
        pixels = _class_pattern(image_side, label, class_count, rng).astype(np.float32)
        records.append(
            ImageRecord(
                id=f"img-{index:06d}",
                source=source,
                width=image_side,
                height=image_side,
                pixels=pixels,
                label=label,
                gen_seed=gen_seed,
            )
        )
    return CorpusManifest(records=tuple(records), mixture=mixture, class_count=class_count)


def sample_subset(manifest: CorpusManifest, spec: SubsetSpec) -> CorpusManifest:
    """Draw a stratified subset of round(fraction * N) records.

    Each source contributes its largest-remainder share of the subset size;
    within a source the draw is uniform without replacement, keyed on
    (seed, repeat_index, source). Input ordering is preserved. fraction 1.0
    short-circuits to the full manifest.
    """
    if not manifest.records:
        raise ValueError("manifest is empty")
    if spec.fraction == 1.0:
        return manifest

    n = len(manifest.records)
    subset_size = round(spec.fraction * n)
    if subset_size < 1:
        raise ValueError(f"fraction {spec.fraction} rounds to an empty subset of {n} records")

    by_source: dict[str, list[int]] = {}
    for idx, record in enumerate(manifest.records):
        by_source.setdefault(record.source, []).append(idx)
    sources = list(by_source)
    shares = apportion_largest_remainder(subset_size, [len(by_source[s]) for s in sources])

    chosen: list[int] = []
    for source, share in zip(sources, shares):
        pool = by_source[source]
        rng = rng_for(spec.seed, spec.repeat_index, source)
        picks = rng.choice(len(pool), size=share, replace=False)
        chosen.extend(pool[i] for i in picks)
    chosen.sort()
    return CorpusManifest(
        records=tuple(manifest.records[i] for i in chosen),
        mixture=manifest.mixture,
        class_count=manifest.class_count,
    )


def empirical_mixture(manifest: CorpusManifest) -> MixtureSpec:
    """Observed per-source proportions of a manifest."""
    if not manifest.records:
        raise ValueError("manifest is empty")
    n = len(manifest.records)
    counts = manifest.source_counts()
    return MixtureSpec({source: count / n for source, count in counts.items()})


MANIFEST_FILE = "manifest.jsonl"
PIXELS_FILE = "pixels.bin"
META_FILE = "meta.json"


def save_manifest(manifest: CorpusManifest, directory: str | Path) -> None:
    """Write JSONL metadata plus a little-endian float32 pixel sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        for r in manifest.records:
            row = {
                "id": r.id,
                "source": r.source,
                "width": r.width,
                "height": r.height,
                "label": r.label,
                "gen_seed": r.gen_seed,
            }
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
    with open(directory / PIXELS_FILE, "wb") as fh:
        for r in manifest.records:
            fh.write(r.pixels.astype("<f4").tobytes())
    meta = {
        "n_images": len(manifest.records),
        "class_count": manifest.class_count,
        "mixture": manifest.mixture.proportions,
    }
    with open(directory / META_FILE, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_manifest(directory: str | Path) -> CorpusManifest:
    directory = Path(directory)
    with open(directory / META_FILE, encoding="utf-8") as fh:
        meta = json.load(fh)
    mixture = MixtureSpec({k: float(v) for k, v in meta["mixture"].items()})
    rows = []
    with open(directory / MANIFEST_FILE, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    payload = np.fromfile(directory / PIXELS_FILE, dtype="<f4")
    records = []
    offset = 0
    for row in rows:
        size = row["width"] * row["height"]
        pixels = payload[offset : offset + size].reshape(row["height"], row["width"])
        offset += size
        records.append(
            ImageRecord(
                id=row["id"],
                source=row["source"],
                width=row["width"],
                height=row["height"],
                pixels=pixels,
                label=row["label"],
                gen_seed=row["gen_seed"],
            )
        )
    if offset != payload.size:
        raise ValueError(f"pixel sidecar holds {payload.size} floats, manifest expects {offset}")
    return CorpusManifest(records=tuple(records), mixture=mixture, class_count=int(meta["class_count"]))
