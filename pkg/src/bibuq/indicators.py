"""Size-dependent and field-normalized citation indicators.

Three indicators are computed per unit: P, the number of core
publications (articles and reviews); C, their total citations; and MNCS,
the mean of citation scores normalized by the expected citations of a
publication's normalization cell.  Letters and other non-core types are
excluded from the indicators but still contribute to the normalization
cells they fall into.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .datamodel import (
    CORE_TYPES,
    DocType,
    Publication,
    PublicationSet,
    UsageError,
)

__all__ = [
    "KEY_DOCTYPE",
    "KEY_DOCTYPE_YEAR_FIELD",
    "KEY_MODES",
    "NormalizationCell",
    "NormalizationCells",
    "IndicatorResult",
    "select_core",
    "build_normalization",
    "ncs",
    "mncs",
    "indicators_for",
]

KEY_DOCTYPE = "doctype"
KEY_DOCTYPE_YEAR_FIELD = "doctype-year-field"
KEY_MODES = (KEY_DOCTYPE, KEY_DOCTYPE_YEAR_FIELD)


def select_core(pubset: PublicationSet) -> PublicationSet:
    """Keep only articles and reviews, preserving order."""
    return pubset.with_members([p for p in pubset if p.doctype in CORE_TYPES])


@dataclass(frozen=True)
class NormalizationCell:
    """Expected citations of one normalization class.

    ``year`` and ``field`` are None under the doctype-only key mode
    (wildcards).
    """

    doctype: DocType
    year: int | None
    field: str | None
    expected_citations: float
    size: int


def cell_key(pub: Publication, key_mode: str):
    """Normalization key of a publication, or None if it has no cell.

    Under the field-aware mode, publications without a field label
    cannot be assigned to any cell.
    """
    if key_mode == KEY_DOCTYPE:
        return (pub.doctype,)
    if key_mode == KEY_DOCTYPE_YEAR_FIELD:
        if pub.field is None:
            return None
        return (pub.doctype, pub.year, pub.field)
    raise UsageError(f"unknown key mode {key_mode!r}, expected one of {KEY_MODES}")


@dataclass(frozen=True)
class NormalizationCells:
    """All occupied normalization cells of a reference universe."""

    key_mode: str
    cells: Mapping[tuple, NormalizationCell]

    def lookup(self, pub: Publication) -> NormalizationCell | None:
        key = cell_key(pub, self.key_mode)
        if key is None:
            return None
        return self.cells.get(key)


def build_normalization(
    sets: PublicationSet | Iterable[PublicationSet], key_mode: str = KEY_DOCTYPE
) -> NormalizationCells:
    """Compute expected citations per cell over a pooled universe.

    ``sets`` may be a single publication set or any iterable of them;
    all members are pooled.  A cell appears only if at least one
    publication falls into it.  All document types contribute to cells,
    including non-core ones.
    """
    if isinstance(sets, PublicationSet):
        sets = [sets]
    if key_mode not in KEY_MODES:
        raise UsageError(f"unknown key mode {key_mode!r}, expected one of {KEY_MODES}")
    sums: dict[tuple, int] = {}
    counts: dict[tuple, int] = {}
    for pubset in sets:
        for pub in pubset:
            key = cell_key(pub, key_mode)
            if key is None:
                continue
            sums[key] = sums.get(key, 0) + pub.citations
            counts[key] = counts.get(key, 0) + 1
    cells = {}
    for key, count in counts.items():
        doctype = key[0]
        year = key[1] if len(key) == 3 else None
        field = key[2] if len(key) == 3 else None
        cells[key] = NormalizationCell(
            doctype=doctype,
            year=year,
            field=field,
            expected_citations=sums[key] / count,
            size=count,
        )
    if not cells:
        raise UsageError("normalization universe is empty")
    return NormalizationCells(key_mode=key_mode, cells=cells)


def ncs(pub: Publication, cells: NormalizationCells) -> float | None:
    """Normalized citation score of one publication.

    Returns None when the publication cannot be scored: it has no cell
    (missing field label or a cell absent from the universe) or its cell
    has zero expected citations while the publication is cited, which
    signals inconsistent data.  A zero-expected cell with zero citations
    scores 0.0 (degenerate but consistent).
    """
    cell = cells.lookup(pub)
    if cell is None:
        return None
    if cell.expected_citations == 0.0:
        return 0.0 if pub.citations == 0 else None
    return pub.citations / cell.expected_citations


def mncs(pubset: PublicationSet, cells: NormalizationCells) -> float | None:
    """Mean normalized citation score over the core publications.

    Unscorable publications are excluded from the mean; returns None if
    nothing remains.
    """
    scores = [ncs(p, cells) for p in select_core(pubset)]
    included = [s for s in scores if s is not None]
    if not included:
        return None
    return sum(included) / len(included)


@dataclass(frozen=True)
class IndicatorResult:
    """Indicator values of one unit.

    ``p`` counts core publications, ``c`` sums their citations, ``mncs``
    averages their normalized scores (None when undefined), ``excluded``
    counts core publications left out of the MNCS mean.
    """

    unit: str
    p: int
    c: int
    mncs: float | None
    excluded: int


def indicators_for(pubset: PublicationSet, cells: NormalizationCells) -> IndicatorResult:
    """P, C, and MNCS of one unit against a fixed normalization."""
    core = select_core(pubset)
    scores = [ncs(p, cells) for p in core]
    included = [s for s in scores if s is not None]
    return IndicatorResult(
        unit=pubset.name,
        p=len(core),
        c=sum(p.citations for p in core),
        mncs=sum(included) / len(included) if included else None,
        excluded=len(scores) - len(included),
    )
