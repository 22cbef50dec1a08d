"""Construction helpers shared across test modules."""

from __future__ import annotations

from bibuq.datamodel import DocType, Publication, PublicationSet


def make_pubset(unit: str, rows: list[tuple[str, int]], year: int = 2010) -> PublicationSet:
    """Build a publication set from (doctype_label, citations) rows."""
    pubs = tuple(
        Publication(
            id=f"{unit}-{i}",
            unit=unit,
            doctype=DocType.parse(label),
            year=year,
            citations=c,
        )
        for i, (label, c) in enumerate(rows)
    )
    return PublicationSet(name=unit, members=pubs)
