"""Corpus model: apportionment, synthetic generation, stratified sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maescale.corpus import (
    FIG1_MIXTURE,
    CorpusManifest,
    MixtureSpec,
    SubsetSpec,
    apportion_largest_remainder,
    build_synthetic_corpus,
    empirical_mixture,
    load_manifest,
    sample_subset,
    save_manifest,
)


def oracle_largest_remainder(total, proportions):
    """Independent re-derivation: floors, then leftovers by fractional part."""
    targets = [total * p / sum(proportions) for p in proportions]
    floors = [int(t) for t in targets]
    remainder = total - sum(floors)
    order = sorted(range(len(targets)), key=lambda j: (-(targets[j] - floors[j]), j))
    for j in order[:remainder]:
        floors[j] += 1
    return floors


class TestApportionment:
    def test_fig1_thousand(self):
        counts = apportion_largest_remainder(1000, list(FIG1_MIXTURE.values()))
        assert counts == [500, 315, 135, 50]

    def test_quarter_subset_targets(self):
        # targets 125 / 78.75 / 33.75 / 12.5 -> the two .75 remainders win
        counts = apportion_largest_remainder(250, [500, 315, 135, 50])
        assert counts == [125, 79, 34, 12]

    def test_zero_proportion_gets_nothing(self):
        counts = apportion_largest_remainder(7, [0.5, 0.0, 0.5])
        assert counts[1] == 0 and sum(counts) == 7

    @given(
        total=st.integers(min_value=0, max_value=2000),
        weights=st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=8).filter(
            lambda w: sum(w) > 1e-6
        ),
    )
    @settings(max_examples=100, deadline=None)
    def test_exactness(self, total, weights):
        counts = apportion_largest_remainder(total, weights)
        assert sum(counts) == total
        scale = sum(weights)
        for count, w in zip(counts, weights):
            assert abs(count - total * w / scale) < 1.0

    @given(
        total=st.integers(min_value=0, max_value=500),
        weights=st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=1, max_size=6),
    )
    @settings(max_examples=60, deadline=None)
    def test_matches_oracle(self, total, weights):
        assert apportion_largest_remainder(total, weights) == oracle_largest_remainder(total, weights)


class TestMixtureSpec:
    def test_fig1_is_valid(self):
        MixtureSpec(FIG1_MIXTURE)

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError, match="sum"):
            MixtureSpec({"IMAGENET": 0.6, "CIFAR10": 0.3})

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="negative"):
            MixtureSpec({"IMAGENET": 1.2, "CIFAR10": -0.2})

    def test_rejects_unknown_tag(self):
        with pytest.raises(ValueError, match="unknown source tag"):
            MixtureSpec({"LAION": 1.0})

    def test_synthetic_tags_allowed(self):
        MixtureSpec({"SYNTHETIC-0": 0.5, "SYNTHETIC-17": 0.5})


class TestBuildSyntheticCorpus:
    def test_fig1_counts_at_thousand(self):
        man = build_synthetic_corpus(1000, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=3)
        assert man.source_counts() == {"IMAGENET": 500, "CELEBA": 315, "ADE20K": 135, "CIFAR10": 50}

    def test_single_source_degenerate(self):
        man = build_synthetic_corpus(4, MixtureSpec({"SYNTHETIC-0": 1.0}), 2, 8, seed=0)
        assert len(man) == 4
        assert all(r.source == "SYNTHETIC-0" for r in man.records)

    def test_bit_identical_rebuild(self):
        a = build_synthetic_corpus(50, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=9)
        b = build_synthetic_corpus(50, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=9)
        assert [r.id for r in a.records] == [r.id for r in b.records]
        for ra, rb in zip(a.records, b.records):
            assert np.array_equal(ra.pixels, rb.pixels)

    def test_seed_changes_pixels(self):
        a = build_synthetic_corpus(10, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=1)
        b = build_synthetic_corpus(10, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=2)
        assert not np.array_equal(a.records[0].pixels, b.records[0].pixels)

    def test_pixels_in_unit_interval(self):
        man = build_synthetic_corpus(20, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=5)
        for r in man.records:
            assert r.pixels.min() >= 0.0 and r.pixels.max() <= 1.0

    def test_labels_cover_classes(self):
        man = build_synthetic_corpus(40, MixtureSpec(FIG1_MIXTURE), 5, 16, seed=5)
        assert set(man.labels().tolist()) == set(range(5))

    def test_rejects_tiny_inputs(self):
        with pytest.raises(ValueError):
            build_synthetic_corpus(0, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=1)
        with pytest.raises(ValueError):
            build_synthetic_corpus(3, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=1)
        with pytest.raises(ValueError):
            build_synthetic_corpus(10, MixtureSpec(FIG1_MIXTURE), 4, 4, seed=1)

    def test_records_aligned_across_resolutions(self):
        a = build_synthetic_corpus(30, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=11)
        b = build_synthetic_corpus(30, MixtureSpec(FIG1_MIXTURE), 4, 24, seed=11)
        assert [r.label for r in a.records] == [r.label for r in b.records]
        assert [r.source for r in a.records] == [r.source for r in b.records]


@pytest.fixture(scope="module")
def thousand_manifest():
    return build_synthetic_corpus(1000, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=77)


class TestSampleSubset:
    def test_quarter_fraction_stratified_counts(self, thousand_manifest):
        sub = sample_subset(thousand_manifest, SubsetSpec(0.25, seed=5, repeat_index=0))
        assert len(sub) == 250
        assert sub.source_counts() == {"IMAGENET": 125, "CELEBA": 79, "ADE20K": 34, "CIFAR10": 12}

    def test_full_fraction_identity(self, thousand_manifest):
        sub = sample_subset(thousand_manifest, SubsetSpec(1.0, seed=123, repeat_index=0))
        assert sub is thousand_manifest

    def test_deterministic_and_repeat_sensitive(self, thousand_manifest):
        a = sample_subset(thousand_manifest, SubsetSpec(0.25, seed=5, repeat_index=1))
        b = sample_subset(thousand_manifest, SubsetSpec(0.25, seed=5, repeat_index=1))
        c = sample_subset(thousand_manifest, SubsetSpec(0.25, seed=5, repeat_index=2))
        assert [r.id for r in a.records] == [r.id for r in b.records]
        assert [r.id for r in a.records] != [r.id for r in c.records]

    def test_preserves_input_ordering(self, thousand_manifest):
        sub = sample_subset(thousand_manifest, SubsetSpec(0.5, seed=6, repeat_index=0))
        positions = {r.id: i for i, r in enumerate(thousand_manifest.records)}
        got = [positions[r.id] for r in sub.records]
        assert got == sorted(got)

    def test_rejects_bad_fraction(self, thousand_manifest):
        with pytest.raises(ValueError):
            SubsetSpec(0.0, seed=1)
        with pytest.raises(ValueError):
            SubsetSpec(1.5, seed=1)

    @given(fraction=st.sampled_from([0.05, 0.1, 0.25, 0.5, 0.9]), seed=st.integers(0, 2**32))
    @settings(max_examples=25, deadline=None)
    def test_stratification_matches_apportionment(self, thousand_manifest, fraction, seed):
        sub = sample_subset(thousand_manifest, SubsetSpec(fraction, seed=seed, repeat_index=0))
        size = round(fraction * len(thousand_manifest))
        assert len(sub) == size
        parent = thousand_manifest.source_counts()
        expected = oracle_largest_remainder(size, [parent[s] for s in parent])
        got = sub.source_counts()
        assert [got.get(s, 0) for s in parent] == expected


class TestEmpiricalMixture:
    def test_fig1_exact(self, thousand_manifest):
        mix = empirical_mixture(thousand_manifest)
        assert mix.proportions == pytest.approx(FIG1_MIXTURE)

    def test_single_source(self):
        man = build_synthetic_corpus(8, MixtureSpec({"SYNTHETIC-1": 1.0}), 2, 8, seed=0)
        assert empirical_mixture(man).proportions == {"SYNTHETIC-1": 1.0}

    def test_subset_within_tolerance(self, thousand_manifest):
        sub = sample_subset(thousand_manifest, SubsetSpec(0.25, seed=5, repeat_index=0))
        mix = empirical_mixture(sub)
        for source, p in FIG1_MIXTURE.items():
            assert abs(mix.proportions[source] - p) <= 1.0 / len(sub) + 1e-12


class TestManifestIO:
    def test_round_trip(self, tmp_path):
        man = build_synthetic_corpus(25, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=13)
        save_manifest(man, tmp_path / "c")
        loaded = load_manifest(tmp_path / "c")
        assert loaded.class_count == man.class_count
        assert [r.id for r in loaded.records] == [r.id for r in man.records]
        assert [r.label for r in loaded.records] == [r.label for r in man.records]
        for a, b in zip(man.records, loaded.records):
            assert np.array_equal(a.pixels, b.pixels)

    def test_jsonl_fields_exact(self, tmp_path):
        import json

        man = build_synthetic_corpus(5, MixtureSpec(FIG1_MIXTURE), 4, 16, seed=13)
        save_manifest(man, tmp_path / "c")
        with open(tmp_path / "c" / "manifest.jsonl") as fh:
            row = json.loads(fh.readline())
        assert set(row) == {"id", "source", "width", "height", "label", "gen_seed"}

    def test_sidecar_is_le_float32(self, tmp_path):
        man = build_synthetic_corpus(3, MixtureSpec(FIG1_MIXTURE), 2, 8, seed=13)
        save_manifest(man, tmp_path / "c")
        raw = np.fromfile(tmp_path / "c" / "pixels.bin", dtype="<f4")
        assert raw.size == 3 * 8 * 8
        np.testing.assert_array_equal(raw[:64].reshape(8, 8), man.records[0].pixels)


class TestManifestInvariants:
    def test_duplicate_ids_rejected(self):
        man = build_synthetic_corpus(4, MixtureSpec({"SYNTHETIC-0": 1.0}), 2, 8, seed=0)
        with pytest.raises(ValueError, match="unique"):
            CorpusManifest(records=man.records + (man.records[0],),
                           mixture=man.mixture, class_count=2)

    def test_declared_mixture_must_match(self):
        man = build_synthetic_corpus(10, MixtureSpec({"SYNTHETIC-0": 1.0}), 2, 8, seed=0)
        with pytest.raises(ValueError, match="proportion"):
            CorpusManifest(records=man.records,
                           mixture=MixtureSpec({"SYNTHETIC-0": 0.5, "SYNTHETIC-1": 0.5}),
                           class_count=2)
