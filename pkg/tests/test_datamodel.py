"""Core data types, embedded audit data, and CSV round trips."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bibuq.datamodel import (
    EMBEDDED_SAMPLE_OBSERVED_CITATIONS,
    CitationErrorSample,
    DocType,
    DocTypeConfusionTable,
    MissedCitationMarginal,
    Publication,
    PublicationSet,
    ValidationError,
    doctype_index,
    embedded_missed_citation_sample,
    load_citation_error_sample,
    load_doctype_confusion,
    load_publications,
    sample_statistics,
    write_citation_error_sample,
    write_doctype_confusion,
    write_publications,
)


class TestDocType:
    def test_parse_canonical_labels(self):
        assert DocType.parse("article") is DocType.ARTICLE
        assert DocType.parse("review") is DocType.REVIEW
        assert DocType.parse("letter") is DocType.LETTER
        assert DocType.parse("other") is DocType.OTHER

    def test_parse_is_case_and_whitespace_insensitive(self):
        assert DocType.parse(" Article ") is DocType.ARTICLE
        assert DocType.parse("REVIEW") is DocType.REVIEW

    def test_unrecognized_labels_collapse_to_other(self):
        for label in ("editorial", "proceedings paper", "note", ""):
            assert DocType.parse(label) is DocType.OTHER

    def test_doctype_index_is_stable(self):
        assert doctype_index(DocType.ARTICLE) == 0
        assert doctype_index(DocType.REVIEW) == 1
        assert doctype_index(DocType.LETTER) == 2
        assert doctype_index(DocType.OTHER) == 3


class TestPublication:
    def test_negative_citations_rejected(self):
        with pytest.raises(ValidationError):
            Publication("p1", "u", DocType.ARTICLE, 2010, -1)

    def test_field_defaults_to_none(self):
        pub = Publication("p1", "u", DocType.ARTICLE, 2010, 3)
        assert pub.field is None


class TestEmbeddedAudit:
    def test_histogram_totals(self):
        marginal = embedded_missed_citation_sample()
        assert marginal.record_count() == 372
        assert marginal.total_missed() == 255
        assert EMBEDDED_SAMPLE_OBSERVED_CITATIONS == 6120

    def test_share_with_missing(self):
        marginal = embedded_missed_citation_sample()
        assert marginal.share_with_missing() == 109 / 372

    def test_expand_matches_histogram(self):
        marginal = embedded_missed_citation_sample()
        expanded = marginal.expand()
        assert expanded.shape == (372,)
        assert expanded.sum() == 255
        values, counts = np.unique(expanded, return_counts=True)
        assert dict(zip(values.tolist(), counts.tolist())) == dict(marginal.histogram)

    def test_negative_entries_rejected(self):
        with pytest.raises(ValidationError):
            MissedCitationMarginal({-1: 3})
        with pytest.raises(ValidationError):
            MissedCitationMarginal({1: -3})


class TestSampleStatistics:
    def test_hand_computed_example(self):
        sample = CitationErrorSample(observed=[10, 0, 5, 5], omitted=[2, 1, 0, 1])
        stats = sample_statistics(sample)
        assert stats.n_records == 4
        assert stats.total_observed == 20
        assert stats.total_omitted == 4
        assert stats.omitted_rate == 4 / 20
        assert stats.share_with_omission == 3 / 4
        assert stats.mean_observed == 5.0
        assert stats.mean_corrected == 6.0

    def test_pearson_r_matches_numpy(self):
        rng = np.random.default_rng(42)
        obs = rng.integers(0, 50, size=200)
        omit = rng.poisson(1.0, size=200)
        stats = sample_statistics(CitationErrorSample(obs.tolist(), omit.tolist()))
        expected = np.corrcoef(obs, omit)[0, 1]
        assert stats.pearson_r == pytest.approx(expected, abs=1e-12)

    def test_fisher_interval_matches_direct_formula(self):
        rng = np.random.default_rng(7)
        obs = rng.integers(0, 50, size=372)
        omit = rng.poisson(1.0, size=372)
        stats = sample_statistics(CitationErrorSample(obs.tolist(), omit.tolist()))
        r = stats.pearson_r
        z = 0.5 * math.log((1 + r) / (1 - r))
        half = 1.96 / math.sqrt(372 - 3)
        assert stats.r_ci_low == pytest.approx(math.tanh(z - half), abs=1e-10)
        assert stats.r_ci_high == pytest.approx(math.tanh(z + half), abs=1e-10)

    def test_zero_variance_disables_correlation(self):
        stats = sample_statistics(CitationErrorSample([5, 5, 5], [0, 1, 2]))
        assert stats.pearson_r is None
        assert stats.r_ci_low is None
        assert stats.r_ci_high is None

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValidationError):
            CitationErrorSample([1, 2], [0])

    def test_corrected_adds_elementwise(self):
        sample = CitationErrorSample([3, 7], [1, 0])
        assert np.array_equal(sample.corrected, [4, 7])


class TestPublicationCsv:
    def test_round_trip(self, tmp_path):
        pubs = [
            Publication("a1", "A", DocType.ARTICLE, 2010, 4, field="phys"),
            Publication("a2", "A", DocType.REVIEW, 2011, 0),
            Publication("b1", "B", DocType.LETTER, 2009, 12),
        ]
        sets = [
            PublicationSet("A", tuple(pubs[:2])),
            PublicationSet("B", tuple(pubs[2:])),
        ]
        path = tmp_path / "pubs.csv"
        write_publications(sets, path)
        loaded = load_publications(path)
        assert [s.name for s in loaded] == ["A", "B"]
        assert loaded[0].members == tuple(pubs[:2])
        assert loaded[1].members == tuple(pubs[2:])

    def test_duplicate_id_rejected_with_line_number(self, tmp_path):
        path = tmp_path / "pubs.csv"
        path.write_text(
            "id,unit,doctype,year,field,citations\n"
            "p1,A,article,2010,,3\n"
            "p1,A,article,2010,,4\n"
        )
        with pytest.raises(ValidationError, match=r":3: duplicate"):
            load_publications(path)

    def test_bad_citation_count_reports_line(self, tmp_path):
        path = tmp_path / "pubs.csv"
        path.write_text(
            "id,unit,doctype,year,field,citations\np1,A,article,2010,,not-a-number\n"
        )
        with pytest.raises(ValidationError, match=r":2:"):
            load_publications(path)

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "pubs.csv"
        path.write_text("id,unit,doctype,year,field\np1,A,article,2010,\n")
        with pytest.raises(ValidationError, match="missing columns"):
            load_publications(path)

    @settings(max_examples=25, deadline=None)
    @given(
        rows=st.lists(
            st.tuples(
                st.sampled_from(["article", "review", "letter", "other"]),
                st.integers(min_value=0, max_value=10_000),
                st.integers(min_value=1900, max_value=2030),
                st.one_of(st.none(), st.sampled_from(["bio", "phys", "math"])),
            ),
            min_size=1,
            max_size=30,
        )
    )
    def test_round_trip_property(self, tmp_path_factory, rows):
        pubs = [
            Publication(f"p{i}", "U", DocType.parse(dt), year, cites, field)
            for i, (dt, cites, year, field) in enumerate(rows)
        ]
        path = tmp_path_factory.mktemp("rt") / "pubs.csv"
        write_publications([PublicationSet("U", tuple(pubs))], path)
        loaded = load_publications(path)
        assert len(loaded) == 1
        assert loaded[0].members == tuple(pubs)


class TestCitationSampleCsv:
    def test_round_trip(self, tmp_path):
        sample = CitationErrorSample([10, 0, 3], [1, 0, 2])
        path = tmp_path / "sample.csv"
        write_citation_error_sample(sample, path)
        loaded = load_citation_error_sample(path)
        assert np.array_equal(loaded.observed, sample.observed)
        assert np.array_equal(loaded.omitted, sample.omitted)

    def test_negative_value_reports_line(self, tmp_path):
        path = tmp_path / "sample.csv"
        path.write_text("observed_citations,omitted_citations\n5,-1\n")
        with pytest.raises(ValidationError, match=r":2:"):
            load_citation_error_sample(path)


class TestConfusionCsv:
    def test_round_trip(self, tmp_path, confusion_table):
        path = tmp_path / "confusion.csv"
        write_doctype_confusion(confusion_table, path)
        loaded = load_doctype_confusion(path)
        assert np.array_equal(loaded.counts, confusion_table.counts)

    def test_counts_accumulate_per_cell(self, tmp_path):
        path = tmp_path / "confusion.csv"
        path.write_text(
            "true_type,observed_type,count\n"
            "article,article,5\n"
            "article,article,2\n"
            "review,letter,1\n"
        )
        table = load_doctype_confusion(path)
        assert table.counts[0, 0] == 7
        assert table.counts[1, 2] == 1

    def test_negative_count_rejected(self, tmp_path):
        path = tmp_path / "confusion.csv"
        path.write_text("true_type,observed_type,count\narticle,article,-2\n")
        with pytest.raises(ValidationError, match=r":2:"):
            load_doctype_confusion(path)

    def test_table_shape_is_4x4(self, confusion_table):
        assert confusion_table.counts.shape == (4, 4)
        assert isinstance(confusion_table, DocTypeConfusionTable)
