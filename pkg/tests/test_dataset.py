import json
from pathlib import Path

import numpy as np
import pytest

from mmfuse.dataset import (
    CATEGORIES,
    FilterReason,
    FilterRuleSet,
    TweetRecord,
    WorkerAnnotation,
    aggregate_annotations,
    build_splits,
    class_distribution,
    export_corpus,
    filter_tweet,
    gate_image_by_text_probability,
    import_corpus,
    keyword_hate_rates,
    label_corpus,
)

FIXTURES = Path(__file__).parent / "fixtures"


def make_record(ident="t1", text="a perfectly fine tweet", **kw):
    kw.setdefault("image_ref", "img/x.jpg")
    return TweetRecord(id=ident, tweet_text=text, **kw)


def ann(category, duration):
    return WorkerAnnotation("w", category, duration)


def make_example(ident, hate):
    category = "Racist" if hate else "NotHate"
    record = make_record(ident, annotations=[ann(category, 10.0)] * 3)
    return label_corpus([record])[0][0]


class TestImportExport:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        records, diagnostics = import_corpus(path)
        assert records == [] and diagnostics == []

    def test_truncated_line_reported_with_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        lines = [make_record(f"t{i}").to_json() for i in range(3)]
        lines.append(make_record("t3").to_json()[:25])
        path.write_text("\n".join(lines) + "\n")
        records, diagnostics = import_corpus(path)
        assert len(records) == 3
        assert len(diagnostics) == 1
        assert diagnostics[0][0] == 4
        assert "line 4" in diagnostics[0][1]

    def test_duplicate_ids_reported(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(make_record("dup").to_json() + "\n" + make_record("dup").to_json() + "\n")
        records, diagnostics = import_corpus(path)
        assert len(records) == 1
        assert "duplicate" in diagnostics[0][1]

    def test_round_trip(self, tmp_path):
        records = [
            make_record("a", "first tweet text here", annotations=[ann("Racist", 5.0)]),
            make_record("b", "second tweet over here", is_retweet=True,
                        image_text="inner", image_text_probability=0.5),
        ]
        path = tmp_path / "c.jsonl"
        export_corpus(records, path)
        loaded, diagnostics = import_corpus(path)
        assert diagnostics == []
        assert loaded == records

    def test_missing_file_raises(self, tmp_path):
        from mmfuse.dataset import CorpusError

        with pytest.raises(CorpusError):
            import_corpus(tmp_path / "nope.jsonl")


class TestFiltering:
    def test_retweet_discarded(self):
        record = make_record(is_retweet=True)
        assert filter_tweet(record, FilterRuleSet()) is FilterReason.RETWEET

    def test_short_text_discarded(self):
        record = make_record(text="two words")
        assert filter_tweet(record, FilterRuleSet()) is FilterReason.TOO_SHORT

    def test_clean_record_kept(self):
        record = make_record(text="five words of clean text")
        assert filter_tweet(record, FilterRuleSet()) is FilterReason.KEEP

    def test_banned_term_whole_token(self):
        rules = FilterRuleSet(banned_terms=("slurword",))
        assert filter_tweet(make_record(text="has slurword in it"), rules) is FilterReason.BANNED_TERM
        assert filter_tweet(make_record(text="has slurwords in it"), rules) is FilterReason.KEEP

    def test_missing_image_discarded(self):
        record = make_record(image_ref=None)
        assert filter_tweet(record, FilterRuleSet()) is FilterReason.NO_IMAGE


class TestGate:
    def test_zero_probability_kept(self):
        assert gate_image_by_text_probability(make_record(image_text_probability=0.0), 0.5) == "keep"

    def test_certain_text_discarded(self):
        assert gate_image_by_text_probability(make_record(image_text_probability=1.0), 0.5) == "discard"

    def test_absent_probability_ungated(self):
        assert gate_image_by_text_probability(make_record(), 0.5) == "ungated"

    def test_uniform_probabilities_discard_rate(self, rng):
        n = 4000
        records = [
            make_record(f"t{i}", image_text_probability=float(p)) for i, p in enumerate(rng.random(n))
        ]
        discarded = sum(
            1 for r in records if gate_image_by_text_probability(r, 0.77) == "discard"
        )
        assert discarded / n == pytest.approx(0.23, abs=0.03)


class TestAggregation:
    def test_hate_majority(self):
        result = aggregate_annotations([ann("Racist", 10), ann("NotHate", 8), ann("Racist", 12)])
        assert result == (True, "Racist", 3, False)

    def test_nothate_majority(self):
        result = aggregate_annotations([ann("NotHate", 5), ann("NotHate", 6), ann("Racist", 9)])
        assert result == (False, "NotHate", 3, False)

    def test_fast_hit_removed_then_category_tie(self):
        result = aggregate_annotations([ann("Racist", 10), ann("Sexist", 10), ann("NotHate", 2)])
        assert result == (True, "Racist", 2, False)

    def test_binary_tie_resolves_to_nothate_flagged(self):
        result = aggregate_annotations([ann("Racist", 10), ann("NotHate", 8), ann("Sexist", 2)])
        assert result == (False, "NotHate", 2, True)

    def test_all_fast_is_unlabelable(self):
        assert aggregate_annotations([ann("Racist", 1.0), ann("NotHate", 2.0)]) is None

    def test_no_annotations_rejected(self):
        with pytest.raises(ValueError):
            aggregate_annotations([])

    def test_category_tie_break_order(self):
        result = aggregate_annotations(
            [ann("OtherHate", 10), ann("Homophobic", 10), ann("Homophobic", 10), ann("OtherHate", 10)]
        )
        assert result[1] == "Homophobic"


class TestSplits:
    def test_balanced_split_arithmetic(self):
        examples = [make_example(f"h{i}", True) for i in range(100)]
        examples += [make_example(f"n{i}", False) for i in range(100)]
        build_splits(examples, val_size=20, test_size=40, seed=5)
        for split, size in (("val", 20), ("test", 40), ("train", 140)):
            chosen = [ex for ex in examples if ex.split == split]
            assert len(chosen) == size
            if split != "train":
                assert sum(ex.hate for ex in chosen) == size // 2

    def test_same_seed_same_assignment(self):
        def assign():
            examples = [make_example(f"h{i}", True) for i in range(30)]
            examples += [make_example(f"n{i}", False) for i in range(30)]
            build_splits(examples, val_size=8, test_size=12, seed=7)
            return [(ex.id, ex.split) for ex in examples]

        assert assign() == assign()

    def test_reference_scale_sizes_accepted(self):
        examples = [make_example(f"h{i}", True) for i in range(8000)]
        examples += [make_example(f"n{i}", False) for i in range(8000)]
        build_splits(examples, val_size=5000, test_size=10000, seed=0)
        assert sum(ex.split == "val" for ex in examples) == 5000
        assert sum(ex.split == "test" for ex in examples) == 10000

    def test_insufficient_counts_rejected(self):
        examples = [make_example("h0", True), make_example("n0", False)]
        with pytest.raises(ValueError, match="insufficient"):
            build_splits(examples, val_size=2, test_size=2, seed=0)

    def test_odd_sizes_rejected(self):
        with pytest.raises(ValueError):
            build_splits([], val_size=3, test_size=2, seed=0)


class TestKeywordRates:
    def test_absent_keyword_null_fraction(self):
        examples = [make_example("a", True)]
        rows = keyword_hate_rates(examples, ("missingterm",))
        assert rows == [("missingterm", 0, 0, None)]

    def test_half_fraction(self):
        examples = [make_example(f"e{i}", i < 2) for i in range(4)]
        for ex in examples:
            ex.tweet_text = "something with termx inside"
        rows = keyword_hate_rates(examples, ("termx",))
        assert rows == [("termx", 2, 2, 0.5)]

    def test_matching_is_whole_token_and_case_insensitive(self):
        example = make_example("a", True)
        example.tweet_text = "Contains TermX, and termxy too"
        rows = dict((r[0], r[1:]) for r in keyword_hate_rates([example], ("termx", "termxy")))
        assert rows["termx"] == (1, 0, 1.0)
        assert rows["termxy"] == (1, 0, 1.0)


class TestClassDistribution:
    def test_published_counts_reproduce_percentages(self):
        counts = {
            "NotHate": 112845,
            "Racist": 11925,
            "Sexist": 3495,
            "Homophobic": 3870,
            "ReligionAttack": 163,
            "OtherHate": 5811,
        }
        total = sum(counts.values())
        percentages = class_distribution(counts)
        for cat, count in counts.items():
            assert percentages[cat] == pytest.approx(100.0 * count / total, abs=1e-9)
        assert sum(percentages.values()) == pytest.approx(100.0, abs=1e-9)
        # the binary split dominates: roughly four fifths not-hate
        assert percentages["NotHate"] == pytest.approx(81.7, abs=0.05)
        assert percentages["Racist"] > percentages["OtherHate"] > percentages["Homophobic"]
        assert percentages["ReligionAttack"] < 0.2

    def test_empty_counts_rejected(self):
        with pytest.raises(ValueError):
            class_distribution({})


@pytest.fixture(scope="module")
def corpus():
    records, diagnostics = import_corpus(FIXTURES / "corpus.jsonl")
    assert diagnostics == []
    assert len(records) == 60
    return records


@pytest.fixture(scope="module")
def expected():
    return json.loads((FIXTURES / "expected.json").read_text())


class TestFixturePipeline:
    """The bundled 60-record corpus against its frozen expected outputs."""

    def test_filter_decisions(self, corpus, expected):
        rules = FilterRuleSet(banned_terms=tuple(expected["banned_terms"]))
        for record in corpus:
            want = expected["filter"].get(record.id, "keep")
            assert filter_tweet(record, rules).value == want, record.id

    def test_gate_decisions(self, corpus, expected):
        by_id = {r.id: r for r in corpus}
        for ident, want in expected["gate"].items():
            got = gate_image_by_text_probability(by_id[ident], expected["gate_threshold"])
            assert got == want, ident

    def test_labels_and_unlabelable(self, corpus, expected):
        rules = FilterRuleSet(banned_terms=tuple(expected["banned_terms"]))
        kept = [
            r for r in corpus
            if filter_tweet(r, rules) is FilterReason.KEEP
            and gate_image_by_text_probability(r, expected["gate_threshold"]) != "discard"
        ]
        examples, unlabelable = label_corpus(kept)
        assert unlabelable == expected["unlabelable"]
        assert len(examples) == len(expected["labels"])
        for ex in examples:
            want = expected["labels"][ex.id]
            assert ex.hate == want["hate"], ex.id
            assert ex.category == want["category"], ex.id
            assert ex.binary_tie == want["tie"], ex.id

    def test_split_assignment(self, corpus, expected):
        rules = FilterRuleSet(banned_terms=tuple(expected["banned_terms"]))
        kept = [
            r for r in corpus
            if filter_tweet(r, rules) is FilterReason.KEEP
            and gate_image_by_text_probability(r, expected["gate_threshold"]) != "discard"
        ]
        examples, _ = label_corpus(kept)
        build_splits(examples, expected["val_size"], expected["test_size"], expected["split_seed"])
        for split in ("val", "test", "train"):
            got = sorted(ex.id for ex in examples if ex.split == split)
            assert got == expected["splits"][split], split

    def test_keyword_rates(self, corpus, expected):
        rules = FilterRuleSet(banned_terms=tuple(expected["banned_terms"]))
        kept = [
            r for r in corpus
            if filter_tweet(r, rules) is FilterReason.KEEP
            and gate_image_by_text_probability(r, expected["gate_threshold"]) != "discard"
        ]
        examples, _ = label_corpus(kept)
        rows = keyword_hate_rates(examples, ("termx", "termy", "termz"))
        want = [tuple(row) for row in expected["keyword_rows"]]
        assert rows == want
