"""Unit tests for dataset parsing, synthetic generation and class statistics."""

import json

import pytest

from pemi.data.dataset import (
    DatasetBundle,
    Instance,
    label_indices,
    parse_dataset,
    parse_lines,
    write_dataset,
)
from pemi.data.fixtures import load_fixture
from pemi.data.stats import class_stats, format_stats
from pemi.data.synthetic import (
    generate_synthetic,
    nearest_signature_accuracy,
    planted_hierarchy,
    signature_tokens,
)
from pemi.errors import ConfigError, DataError, LabelPathError


def record(arg1="a b", arg2="c", labels=("top0", "leaf1")):
    return json.dumps({"arg1": arg1, "arg2": arg2, "labels": list(labels)})


@pytest.fixture
def hierarchy():
    return planted_hierarchy()


class TestParsing:
    """Test cases for JSON-lines datasets."""

    def test_valid_lines(self, hierarchy):
        """Test that blank lines are skipped and labels kept in order."""
        instances = parse_lines([record(), "", record(labels=("top2", "leaf5"))], hierarchy)
        assert [i.labels for i in instances] == [("top0", "leaf1"), ("top2", "leaf5")]

    def test_bad_json_cites_line(self, hierarchy):
        """Test that malformed JSON names the source and line."""
        with pytest.raises(DataError, match="train.jsonl line 2: invalid JSON"):
            parse_lines([record(), "{arg1"], hierarchy, source="train.jsonl")

    def test_missing_field(self, hierarchy):
        """Test that a non-string argument is rejected."""
        line = json.dumps({"arg1": "x", "labels": ["top0", "leaf0"]})
        with pytest.raises(DataError, match='line 1: "arg2" must be a string'):
            parse_lines([line], hierarchy)

    def test_not_an_object(self, hierarchy):
        """Test that a JSON list is not a record."""
        with pytest.raises(DataError, match="JSON object"):
            parse_lines(["[1, 2]"], hierarchy)

    def test_wrong_arity(self, hierarchy):
        """Test that every level needs a label."""
        with pytest.raises(LabelPathError, match="line 1: expected 2 labels, got 1"):
            parse_lines([record(labels=("top0",))], hierarchy)

    def test_not_a_path(self, hierarchy):
        """Test that a bottom label must be a child of the top label."""
        with pytest.raises(LabelPathError, match="'leaf4' is not a child of 'top0'"):
            parse_lines([record(labels=("top0", "leaf4"))], hierarchy)

    def test_unknown_label(self, hierarchy):
        """Test that an unknown label is a path error, not a hierarchy error."""
        with pytest.raises(LabelPathError, match="unknown level-2 label 'leaf9'"):
            label_indices(hierarchy, ("top0", "leaf9"))

    def test_label_indices(self, hierarchy):
        """Test index resolution for a valid path."""
        assert label_indices(hierarchy, ("top1", "leaf3")) == (1, 3)

    def test_file_round_trip(self, hierarchy, tmp_path):
        """Test that written datasets read back equal."""
        instances = [Instance("x y", "z", ("top0", "leaf0")), Instance("é", "", ("top1", "leaf2"))]
        path = tmp_path / "train.jsonl"
        write_dataset(path, instances)
        assert parse_dataset(path, hierarchy) == instances

    def test_missing_file(self, hierarchy, tmp_path):
        """Test that an unreadable dataset is a data error."""
        with pytest.raises(DataError, match="cannot read dataset"):
            parse_dataset(tmp_path / "absent.jsonl", hierarchy)


class TestBundle:
    """Test cases for split bundles."""

    def test_shared_instance_rejected(self):
        """Test that one instance cannot sit in two splits."""
        shared = Instance("a", "b", ("top0", "leaf0"))
        with pytest.raises(DataError, match="both train and test"):
            DatasetBundle((shared,), (), (shared,))

    def test_equal_but_distinct_instances_allowed(self):
        """Test that identical text in different instances is fine."""
        bundle = DatasetBundle((Instance("a", "b", ("top0", "leaf0")),), (), (Instance("a", "b", ("top0", "leaf0")),))
        assert len(bundle.splits()["test"]) == 1


class TestSynthetic:
    """Test cases for the planted synthetic generator."""

    def test_deterministic(self, hierarchy):
        """Test that a seed fixes the data."""
        assert generate_synthetic(hierarchy, n_per_label=10, seed=4) == generate_synthetic(
            hierarchy, n_per_label=10, seed=4
        )

    def test_seed_changes_data(self, hierarchy):
        """Test that different seeds give different text."""
        assert generate_synthetic(hierarchy, n_per_label=10, seed=1).train != generate_synthetic(
            hierarchy, n_per_label=10, seed=2
        ).train

    def test_split_sizes(self, hierarchy):
        """Test the 80/10/10 split per bottom label."""
        bundle = generate_synthetic(hierarchy, n_per_label=10)
        assert (len(bundle.train), len(bundle.dev), len(bundle.test)) == (48, 6, 6)
        assert "seed=0" in bundle.provenance

    def test_signatures_disjoint(self, hierarchy):
        """Test that no word is shared between signatures or with filler."""
        signatures, filler = signature_tokens(hierarchy)
        words = [w for s in signatures.values() for w in s] + list(filler)
        assert len(words) == len(set(words))
        assert all(len(s) == 3 for s in signatures.values())

    def test_oracle_separates(self, hierarchy):
        """Test that the signature lookup labels every instance correctly."""
        bundle = generate_synthetic(hierarchy, n_per_label=20, seed=7)
        signatures, _ = signature_tokens(hierarchy)
        assert nearest_signature_accuracy(bundle.train + bundle.dev + bundle.test, signatures) == 1.0

    def test_labels_are_paths(self, hierarchy):
        """Test that generated labels follow hierarchy edges."""
        for instance in generate_synthetic(hierarchy, n_per_label=5).train:
            label_indices(hierarchy, instance.labels)

    def test_vocab_too_small(self, hierarchy):
        """Test that the word budget must cover every signature plus filler."""
        with pytest.raises(ConfigError, match="need >= 20"):
            generate_synthetic(hierarchy, vocab_size=19)

    def test_bad_per_label(self, hierarchy):
        """Test that at least one instance per label is required."""
        with pytest.raises(ConfigError):
            generate_synthetic(hierarchy, n_per_label=0)


class TestClassStats:
    """Test cases for per-class counts."""

    def test_counts_sum_to_totals(self, hierarchy):
        """Test that each level's counts add up to the split size."""
        bundle = generate_synthetic(hierarchy, n_per_label=10)
        stats = class_stats(bundle, hierarchy)
        for level in stats.counts:
            for split, total in stats.totals.items():
                assert sum(per_split[split] for per_split in level.values()) == total
        assert stats.counts[1]["leaf0"] == {"train": 8, "dev": 1, "test": 1}

    def test_empty_split(self, hierarchy):
        """Test that an empty split and unseen labels count as zero."""
        bundle = DatasetBundle((Instance("a", "b", ("top0", "leaf0")),), (), ())
        stats = class_stats(bundle, hierarchy)
        assert stats.totals == {"train": 1, "dev": 0, "test": 0}
        assert stats.counts[0]["top2"] == {"train": 0, "dev": 0, "test": 0}

    def test_format(self, hierarchy):
        """Test the rendered table: header, rule, one row per label, total."""
        bundle = generate_synthetic(hierarchy, n_per_label=10)
        lines = format_stats(class_stats(bundle, hierarchy)).splitlines()
        assert lines[0].split() == ["Level", "Relation", "Train", "Dev", "Test"]
        assert set(lines[1].replace(" ", "")) == {"-"}
        assert len(lines) == 2 + 9 + 1
        assert lines[-1].split() == ["Total", "48", "6", "6"]

    def test_pdtb2_shaped_total(self):
        """Test that a 12,683-row training split on the PDTB-2-shaped hierarchy totals 12,683."""
        hierarchy = load_fixture("pdtb2")
        bottom = hierarchy.depth

        def path(i):
            indices = [i]
            for z in range(bottom, 1, -1):
                indices.append(hierarchy.parents(z, indices[-1])[0])
            return tuple(hierarchy.labels(z)[j] for z, j in enumerate(reversed(indices), 1))

        n_bottom = hierarchy.sizes[-1]
        train = tuple(Instance("a", "b", path(k % n_bottom)) for k in range(12683))
        stats = class_stats(DatasetBundle(train, (), ()), hierarchy)
        assert stats.totals["train"] == 12683
        assert format_stats(stats).splitlines()[-1].split() == ["Total", "12683", "0", "0"]
        for level in stats.counts:
            assert sum(per_split["train"] for per_split in level.values()) == 12683

    @pytest.mark.parametrize("labels", [("top0", "nope"), ("top1", "leaf0"), ("top0",)])
    def test_foreign_labels(self, hierarchy, labels):
        """Test that labels outside the hierarchy raise a path error, not a lookup failure."""
        bundle = DatasetBundle((Instance("a", "b", labels),), (), ())
        with pytest.raises(LabelPathError):
            class_stats(bundle, hierarchy)
