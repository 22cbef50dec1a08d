"""Posterior-predictive draws for single publications.

These operations turn fitted error models into Monte Carlo replicates of
a publication's citation count or document type.  Parameter uncertainty
is propagated by cycling through the stored posterior draws: replicate j
uses posterior draw j modulo the number of draws.  The document-type
model is exact, so each replicate samples a fresh probability vector
from the conditioning row's Dirichlet and then a category from it.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np

from .datamodel import DocType, DOCTYPE_ORDER, UsageError
from .errormodels import (
    FIRST_KIND,
    SECOND_KIND,
    DirichletPosterior,
    NegBinPosterior,
    negbin_rvs,
)

__all__ = [
    "predict_omitted",
    "predict_error_free_citations",
    "predict_error_affected_citations",
    "predict_doctype",
    "write_predictive_draws",
]


def _check_n(n: int) -> None:
    if n < 1:
        raise UsageError(f"need at least one draw, got n={n}")


def _check_citations(c: int) -> None:
    if c < 0:
        raise UsageError(f"citation count must be >= 0, got {c}")


def cycled_params(posterior: NegBinPosterior, n: int) -> np.ndarray:
    """Posterior parameter rows for n replicates, cycling draw j % n_draws."""
    flat = posterior.flat()
    idx = np.arange(n) % flat.shape[0]
    return flat[idx]


def draw_omitted(
    rng: np.random.Generator, params: np.ndarray, predictor: np.ndarray
) -> np.ndarray:
    """Vectorized omitted-count draws.

    ``params`` is either one (3,) parameter row applied to every element
    of ``predictor`` or an (n, 3) array aligned with it.
    """
    params = np.asarray(params, dtype=np.float64)
    b0 = params[..., 0]
    b1 = params[..., 1]
    theta = params[..., 2]
    with np.errstate(over="ignore"):
        mu = np.exp(b0 + b1 * np.log1p(np.asarray(predictor, dtype=np.float64)))
    return negbin_rvs(rng, mu, theta)


def predict_omitted(posterior: NegBinPosterior, citations: int, n: int, seed: int) -> np.ndarray:
    """Draw n omitted-citation counts for one publication.

    ``citations`` is the model predictor: the observed count under a
    second-kind posterior, the error-free count under a first-kind one.
    Deterministic given (posterior, citations, n, seed).
    """
    _check_n(n)
    _check_citations(citations)
    rng = np.random.default_rng(seed)
    params = cycled_params(posterior, n)
    return draw_omitted(rng, params, np.full(n, citations))


def predict_error_free_citations(
    posterior: NegBinPosterior, citations: int, n: int, seed: int
) -> np.ndarray:
    """Draw n corrected citation counts: observed plus predicted omissions.

    Requires a second-kind posterior (the model conditions on the
    observed count).  Every draw is >= the observed count.
    """
    if posterior.spec.direction != SECOND_KIND:
        raise UsageError("correction requires a posterior fitted in the second-kind direction")
    omitted = predict_omitted(posterior, citations, n, seed)
    return citations + omitted


def predict_error_affected_citations(
    posterior: NegBinPosterior, citations: int, n: int, seed: int
) -> np.ndarray:
    """Draw n corrupted citation counts: error-free minus predicted omissions.

    Requires a first-kind posterior (the model conditions on the
    error-free count).  Draws are clamped at zero, so each lies in
    [0, citations].
    """
    if posterior.spec.direction != FIRST_KIND:
        raise UsageError("error injection requires a posterior fitted in the first-kind direction")
    omitted = predict_omitted(posterior, citations, n, seed)
    return np.maximum(citations - omitted, 0)


def draw_doctype_codes(
    rng: np.random.Generator, prob_rows: np.ndarray, conditioning_codes: np.ndarray
) -> np.ndarray:
    """Sample category codes given per-category probability rows.

    ``prob_rows`` is (4, 4): a probability vector per conditioning
    category.  ``conditioning_codes`` selects the row per item.
    """
    p = prob_rows[conditioning_codes]
    cum = np.cumsum(p, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(conditioning_codes.shape[0])
    return (u[:, None] < cum).argmax(axis=1)


def sample_probability_rows(rng: np.random.Generator, posterior: DirichletPosterior) -> np.ndarray:
    """One Dirichlet draw per conditioning category, as a (4, 4) array.

    Rows whose gamma draws all underflow to zero (possible only for
    vanishing concentrations) fall back to a point mass on the largest
    concentration.
    """
    gams = rng.gamma(shape=posterior.concentrations)
    sums = gams.sum(axis=1, keepdims=True)
    bad = (sums == 0.0).ravel()
    if bad.any():
        for i in np.flatnonzero(bad):
            gams[i] = 0.0
            gams[i, int(posterior.concentrations[i].argmax())] = 1.0
        sums = gams.sum(axis=1, keepdims=True)
    return gams / sums


def predict_doctype(
    posterior: DirichletPosterior, conditioning: DocType, n: int, seed: int
) -> list[DocType]:
    """Draw n document types conditional on one recorded (or true) type.

    Each draw samples a probability vector from the conditioning row's
    Dirichlet and then a category from it, i.e. the draws are
    Dirichlet-multinomial with the posterior concentrations.
    """
    _check_n(n)
    rng = np.random.default_rng(seed)
    row = posterior.row(conditioning)
    gams = rng.gamma(shape=np.broadcast_to(row, (n, 4)))
    sums = gams.sum(axis=1, keepdims=True)
    bad = (sums == 0.0).ravel()
    if bad.any():
        gams[bad] = 0.0
        gams[bad, int(row.argmax())] = 1.0
        sums = gams.sum(axis=1, keepdims=True)
    p = gams / sums
    cum = np.cumsum(p, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(n)
    codes = (u[:, None] < cum).argmax(axis=1)
    return [DOCTYPE_ORDER[code] for code in codes]


def write_predictive_draws(
    rows: Iterable[tuple[int, str, int, DocType]], path: str | Path
) -> None:
    """Dump per-item replicate rows to CSV.

    Row format: iteration, publication_id, citations, doctype.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "publication_id", "citations", "doctype"])
        for iteration, pub_id, citations, doctype in rows:
            writer.writerow([iteration, pub_id, citations, doctype.value])
