"""Posterior predictive draws for single publications.

For a record as it sits in the database (observed citations plus a
recorded document type), draw what the error-free record might look
like: corrected citation counts from the omitted-citation model and
true types from the confusion model.
"""

from collections import Counter

import numpy as np

from bibuq import (
    DocType,
    fit_citation_error_model,
    fit_doctype_error_model,
    predict_doctype,
    predict_error_free_citations,
    synthesize_training_sample,
    synthetic_confusion_table,
)

EXAMPLES = [
    ("highly cited article", DocType.ARTICLE, 48),
    ("average article", DocType.ARTICLE, 5),
    ("uncited letter", DocType.LETTER, 0),
]


def main() -> None:
    citation_model = fit_citation_error_model(synthesize_training_sample(seed=0))
    doctype_model = fit_doctype_error_model(synthetic_confusion_table())

    for label, doctype, citations in EXAMPLES:
        corrected = predict_error_free_citations(
            citation_model, citations=citations, n=2000, seed=1
        )
        lo, mid, hi = np.quantile(corrected, [0.025, 0.5, 0.975])
        types = Counter(
            t.value for t in predict_doctype(doctype_model, doctype, n=2000, seed=2)
        )
        top = ", ".join(f"{t} {n / 2000:.2f}" for t, n in types.most_common(2))
        print(f"{label} ({doctype.value}, {citations} citations)")
        print(f"  corrected citations: median {mid:.0f}, 95% interval {lo:.0f} to {hi:.0f}")
        print(f"  most likely true types: {top}")
        print()


if __name__ == "__main__":
    main()
