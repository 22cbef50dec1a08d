"""Command line interface for fitting, propagation, and reporting.

Every run that writes outputs also writes a ``run_manifest.json``
recording the command, the resolved configuration, the seed, the
package version, and a sha256 digest per input file, so any result can
be traced back to exactly what produced it.  Reruns with identical
inputs and configuration produce byte-identical data files; only the
manifest timestamp differs.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error,
3 when --strict is set and a fitted model failed its convergence check.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .datamodel import (
    UsageError,
    ValidationError,
    embedded_missed_citation_sample,
    EMBEDDED_SAMPLE_OBSERVED_CITATIONS,
    load_citation_error_sample,
    load_doctype_confusion,
    load_publications,
    sample_statistics,
    write_citation_error_sample,
    write_doctype_confusion,
)
from .errormodels import (
    FIRST_KIND,
    SECOND_KIND,
    DirichletPosterior,
    McmcConfig,
    NegBinModelSpec,
    NegBinPosterior,
    fit_citation_error_model,
    fit_doctype_error_model,
    load_posterior,
    save_posterior,
)
from .simulation import (
    ALL_CHANNELS,
    FittedModels,
    PropagationConfig,
    _fmt_num,
    list_exercises,
    propagate,
    render_result_table,
    run_exercise,
    write_plot_summary,
    write_report_json,
    write_uncertainty_plot,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3

MANIFEST_NAME = "run_manifest.json"
CITATION_POSTERIOR_NAME = "citation_posterior.json"
DOCTYPE_POSTERIOR_NAME = "doctype_posterior.json"
REPORT_NAME = "report.json"
PLOT_SUMMARY_NAME = "plot_summary.csv"
PLOT_UNCERTAINTY_NAME = "plot_uncertainty.csv"


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return "sha256:" + digest.hexdigest()


def _write_manifest(
    out_dir: Path, command: str, config: dict, inputs: list[Path], outputs: list[str]
) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": config,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": sorted(outputs),
    }
    with (out_dir / MANIFEST_NAME).open("w", encoding="utf-8") as handle:
        json.dump(manifest, handle, sort_keys=True, indent=1)
        handle.write("\n")


def _load_config_file(path: str | None) -> dict:
    """Read a JSON config; a run manifest is accepted via its "config" key."""
    if path is None:
        return {}
    with Path(path).open(encoding="utf-8") as handle:
        payload = json.load(handle)
    if not isinstance(payload, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    if "config" in payload and "command" in payload:
        payload = payload["config"]
    return payload


class _Resolver:
    """Config precedence: explicit flag > config file > built-in default."""

    def __init__(self, args: argparse.Namespace, config_file: dict):
        self.args = args
        self.file = config_file

    def get(self, name: str, default):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.file:
            return self.file[name]
        return default


def _default_workers() -> int:
    raw = os.environ.get("BIBUQ_WORKERS", "1")
    try:
        return max(int(raw), 1)
    except ValueError:
        raise ValidationError(f"BIBUQ_WORKERS must be an integer, got {raw!r}") from None


def _ensure_out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_fit_diagnostics(label: str, posterior: NegBinPosterior) -> None:
    diag = posterior.diagnostics
    print(f"{label}: {posterior.n_draws} draws "
          f"({posterior.config.chains} chains x {posterior.config.keep} kept)")
    if diag is None:
        return
    print(f"{'parameter':<16} {'split R-hat':>12} {'ESS':>10}")
    for name in diag.rhat:
        rhat = diag.rhat[name]
        rhat_text = f"{rhat:.4f}" if rhat == rhat else "n/a"
        print(f"{name:<16} {rhat_text:>12} {diag.ess[name]:>10.0f}")
    acc = ", ".join(f"{a:.2f}" for a in diag.acceptance_rates)
    print(f"acceptance per chain: {acc}")
    print(f"converged: {'yes' if diag.converged else 'NO (R-hat above threshold)'}")


def _cmd_fit(args: argparse.Namespace) -> int:
    cfg_file = _load_config_file(args.config)
    get = _Resolver(args, cfg_file).get
    citation_path = get("citation_sample", None)
    confusion_path = get("doctype_confusion", None)
    if citation_path is None and confusion_path is None:
        raise UsageError("fit needs --citation-sample and/or --doctype-confusion")
    direction = get("direction", SECOND_KIND)
    seed = get("seed", 0)
    mcmc_config = McmcConfig(
        chains=get("chains", 4),
        warmup=get("warmup", 1000),
        keep=get("keep", 1000),
        seed=seed,
        target_acceptance=get("target_acceptance", 0.3),
    )
    pseudocount = get("pseudocount", 1.0)
    out_dir = _ensure_out_dir(args.out)

    inputs: list[Path] = []
    outputs: list[str] = []
    converged = True
    if citation_path is not None:
        sample = load_citation_error_sample(citation_path)
        inputs.append(Path(citation_path))
        posterior = fit_citation_error_model(
            sample, NegBinModelSpec(direction=direction), mcmc_config
        )
        save_posterior(posterior, out_dir / CITATION_POSTERIOR_NAME)
        outputs.append(CITATION_POSTERIOR_NAME)
        _print_fit_diagnostics("citation error model", posterior)
        if posterior.diagnostics is not None:
            converged = converged and posterior.diagnostics.converged
    if confusion_path is not None:
        table = load_doctype_confusion(confusion_path)
        inputs.append(Path(confusion_path))
        doctype_posterior = fit_doctype_error_model(table, pseudocount, direction)
        save_posterior(doctype_posterior, out_dir / DOCTYPE_POSTERIOR_NAME)
        outputs.append(DOCTYPE_POSTERIOR_NAME)
        print(f"document-type error model: conjugate update of {table.total()} audited records")

    config_used = {
        "direction": direction,
        "seed": seed,
        "chains": mcmc_config.chains,
        "warmup": mcmc_config.warmup,
        "keep": mcmc_config.keep,
        "target_acceptance": mcmc_config.target_acceptance,
        "pseudocount": pseudocount,
        "citation_sample": citation_path,
        "doctype_confusion": confusion_path,
    }
    _write_manifest(out_dir, "fit", config_used, inputs, outputs + [MANIFEST_NAME])
    if args.strict and not converged:
        print("convergence check failed and --strict is set", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _load_models(
    citation_path: str | None, doctype_path: str | None
) -> tuple[FittedModels, list[Path]]:
    citation = None
    doctype = None
    inputs: list[Path] = []
    if citation_path is not None:
        loaded = load_posterior(citation_path)
        if not isinstance(loaded, NegBinPosterior):
            raise UsageError(f"{citation_path} does not contain a citation error model")
        citation = loaded
        inputs.append(Path(citation_path))
    if doctype_path is not None:
        loaded = load_posterior(doctype_path)
        if not isinstance(loaded, DirichletPosterior):
            raise UsageError(f"{doctype_path} does not contain a document-type error model")
        doctype = loaded
        inputs.append(Path(doctype_path))
    return FittedModels(citation=citation, doctype=doctype), inputs


def _resolve_pooled(args: argparse.Namespace, cfg_file: dict) -> bool:
    """Normalization universe choice; accepts either key from config files.

    Flag wins; config files (and replayed manifests) may state the choice
    as ``reference_only_normalization`` or as ``pooled_normalization``.
    """
    if getattr(args, "reference_only_normalization", None):
        return False
    if "reference_only_normalization" in cfg_file:
        return not bool(cfg_file["reference_only_normalization"])
    if "pooled_normalization" in cfg_file:
        return bool(cfg_file["pooled_normalization"])
    return True


def _run_propagation(args: argparse.Namespace, direction: str, command: str) -> int:
    cfg_file = _load_config_file(args.config)
    get = _Resolver(args, cfg_file).get

    pubs_path = get("pubs", None)
    if pubs_path is None:
        raise UsageError(f"{command} needs --pubs")
    units = load_publications(pubs_path)
    inputs = [Path(pubs_path)]

    reference = None
    reference_path = get("reference", None)
    if reference_path is not None:
        ref_sets = load_publications(reference_path)
        members = tuple(p for pubset in ref_sets for p in pubset)
        reference = ref_sets[0].with_members(members) if len(ref_sets) > 1 else ref_sets[0]
        inputs.append(Path(reference_path))

    models, model_inputs = _load_models(get("citation_model", None), get("doctype_model", None))
    inputs.extend(model_inputs)

    channels = get("channels", ",".join(sorted(ALL_CHANNELS)))
    # replayed manifests store channels as a list, flags as a comma string
    if isinstance(channels, str):
        channel_set = frozenset(c.strip() for c in channels.split(",") if c.strip())
    else:
        channel_set = frozenset(channels)
    config = PropagationConfig(
        iterations=get("iterations", 2000),
        seed=get("seed", 0),
        channels=channel_set,
        direction=direction,
        key_mode=get("key_mode", "doctype"),
        workers=get("workers", _default_workers()),
        pooled_normalization=_resolve_pooled(args, cfg_file),
        parameter_sharing=get("parameter_sharing", "iteration"),
    )
    if args.strict and models.citation is not None and models.citation.diagnostics is not None:
        if not models.citation.diagnostics.converged:
            print("loaded citation model failed convergence and --strict is set", file=sys.stderr)
            return EXIT_NOT_CONVERGED

    out_dir = _ensure_out_dir(args.out)
    dump = get("dump_items", None)
    result = propagate(
        units,
        reference,
        models,
        config,
        dump_items=out_dir / dump if dump else None,
    )
    write_report_json(result, out_dir / REPORT_NAME)
    write_plot_summary(result, out_dir / PLOT_SUMMARY_NAME)
    write_uncertainty_plot(result, out_dir / PLOT_UNCERTAINTY_NAME)
    outputs = [REPORT_NAME, PLOT_SUMMARY_NAME, PLOT_UNCERTAINTY_NAME, MANIFEST_NAME]
    if dump:
        outputs.append(str(dump))

    config_used = {
        "pubs": pubs_path,
        "reference": reference_path,
        "citation_model": get("citation_model", None),
        "doctype_model": get("doctype_model", None),
        "iterations": config.iterations,
        "seed": config.seed,
        "channels": sorted(config.channels),
        "direction": direction,
        "key_mode": config.key_mode,
        "workers": config.workers,
        "pooled_normalization": config.pooled_normalization,
        "parameter_sharing": config.parameter_sharing,
        "dump_items": dump,
    }
    _write_manifest(out_dir, command, config_used, inputs, outputs)
    print(render_result_table(result))
    print(f"report written to {out_dir / REPORT_NAME}")
    return EXIT_OK


def _cmd_propagate(args: argparse.Namespace) -> int:
    return _run_propagation(args, SECOND_KIND, "propagate")


def _cmd_inject(args: argparse.Namespace) -> int:
    return _run_propagation(args, FIRST_KIND, "inject")


def _cmd_exercise(args: argparse.Namespace) -> int:
    cfg_file = _load_config_file(args.config)
    get = _Resolver(args, cfg_file).get
    seed = get("seed", 0)
    iterations = get("iterations", 2000)

    inputs: list[Path] = []
    citation_sample = None
    sample_path = get("citation_sample", None)
    if sample_path is not None:
        citation_sample = load_citation_error_sample(sample_path)
        inputs.append(Path(sample_path))
    confusion = None
    confusion_path = get("doctype_confusion", None)
    if confusion_path is not None:
        confusion = load_doctype_confusion(confusion_path)
        inputs.append(Path(confusion_path))

    if args.no_synthesize:
        if citation_sample is None:
            raise UsageError(
                "--no-synthesize is set but no --citation-sample file was supplied"
            )
        if confusion is None:
            raise UsageError(
                "--no-synthesize is set but no --doctype-confusion file was supplied"
            )

    report = run_exercise(
        args.name,
        iterations=iterations,
        seed=seed,
        citation_sample=citation_sample,
        confusion=confusion,
        workers=get("workers", _default_workers()),
    )
    print(report.to_text())

    if args.out:
        out_dir = _ensure_out_dir(args.out)
        outputs = ["exercise.json", "exercise.txt", MANIFEST_NAME]
        with (out_dir / "exercise.json").open("w", encoding="utf-8") as handle:
            json.dump(report.to_dict(), handle, sort_keys=True, indent=1)
            handle.write("\n")
        (out_dir / "exercise.txt").write_text(report.to_text() + "\n", encoding="utf-8")
        if sample_path is None and report.training_sample is not None:
            write_citation_error_sample(
                report.training_sample, out_dir / "training_citation_sample.csv"
            )
            outputs.append("training_citation_sample.csv")
        if confusion_path is None and report.confusion is not None:
            write_doctype_confusion(report.confusion, out_dir / "training_doctype_confusion.csv")
            outputs.append("training_doctype_confusion.csv")
        config_used = {
            "exercise": args.name,
            "iterations": iterations,
            "seed": seed,
            "citation_sample": sample_path,
            "doctype_confusion": confusion_path,
            "no_synthesize": bool(args.no_synthesize),
        }
        _write_manifest(out_dir, "exercise", config_used, inputs, outputs)
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    with Path(args.report).open(encoding="utf-8") as handle:
        payload = json.load(handle)
    if "units" not in payload:
        raise ValidationError(f"{args.report}: not a propagation report")
    direction = payload.get("direction", SECOND_KIND)
    observed_label = "error-free" if direction == FIRST_KIND else "observed"
    print(
        f"direction={direction}, channels={'+'.join(payload.get('channels', []))}, "
        f"iterations={payload.get('iterations')}, seed={payload.get('seed')}"
    )
    header = (
        f"{'unit':<12} {'indicator':<10} {observed_label:>12} "
        f"{'median':>12} {'95% interval':>24} {'rel. unc.':>10}"
    )
    print(header)
    for unit in sorted(payload["units"]):
        for indicator in ("P", "C", "MNCS"):
            record = payload["units"][unit].get(indicator)
            if record is None:
                continue
            decimals = 2 if indicator == "MNCS" else 3
            interval = (
                f"({_fmt_num(record['ci_low'], decimals)}, "
                f"{_fmt_num(record['ci_high'], decimals)})"
            )
            rel = record.get("relative_uncertainty_pct")
            rel_text = "n/a" if rel is None else f"{rel:.1f}%"
            print(
                f"{unit:<12} {indicator:<10} {_fmt_num(record['observed'], decimals):>12} "
                f"{_fmt_num(record['median'], decimals):>12} {interval:>24} {rel_text:>10}"
            )
    return EXIT_OK


def _cmd_stats(args: argparse.Namespace) -> int:
    if args.sample is None:
        marginal = embedded_missed_citation_sample()
        records = marginal.record_count()
        missed = marginal.total_missed()
        observed = EMBEDDED_SAMPLE_OBSERVED_CITATIONS
        print("embedded correction audit")
        print(f"records:                {records}")
        print(f"observed citations:     {observed}")
        print(f"omitted citations:      {missed}")
        print(f"omitted rate:           {100.0 * missed / observed:.2f}%")
        print(f"share with >=1 omitted: {100.0 * marginal.share_with_missing():.2f}%")
        print(f"mean observed:          {observed / records:.4f}")
        print(f"mean corrected:         {(observed + missed) / records:.4f}")
        return EXIT_OK
    stats = sample_statistics(load_citation_error_sample(args.sample))
    print(f"records:                {stats.n_records}")
    print(f"observed citations:     {stats.total_observed}")
    print(f"omitted citations:      {stats.total_omitted}")
    print(f"omitted rate:           {100.0 * stats.omitted_rate:.2f}%")
    print(f"share with >=1 omitted: {100.0 * stats.share_with_omission:.2f}%")
    print(f"mean observed:          {stats.mean_observed:.4f}")
    print(f"mean corrected:         {stats.mean_corrected:.4f}")
    if stats.pearson_r is None:
        print("pearson r:              undefined (zero variance)")
    else:
        r_text = f"{stats.pearson_r:.4f}"
        if stats.r_ci_low is not None:
            r_text += f" (95% CI {stats.r_ci_low:.4f} to {stats.r_ci_high:.4f})"
        print(f"pearson r:              {r_text}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bibuq",
        description=(
            "Quantify how citation and document-type data errors propagate "
            "into bibliometric indicators (P, C, MNCS)."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser(
        "fit",
        help="fit error models from audit data",
        description=(
            "Fit the omitted-citation regression (MCMC) and/or the "
            "document-type confusion model (conjugate) and save the "
            "posteriors as JSON."
        ),
    )
    fit.add_argument("--citation-sample", help="CSV of observed_citations,omitted_citations")
    fit.add_argument("--doctype-confusion", help="CSV of true_type,observed_type,count")
    fit.add_argument(
        "--direction",
        choices=[SECOND_KIND, FIRST_KIND],
        help="error direction to model (default second-kind)",
    )
    fit.add_argument("--chains", type=int, help="MCMC chains (default 4)")
    fit.add_argument("--warmup", type=int, help="warmup iterations per chain (default 1000)")
    fit.add_argument("--keep", type=int, help="kept iterations per chain (default 1000)")
    fit.add_argument(
        "--target-acceptance", type=float, help="proposal adaptation target (default 0.3)"
    )
    fit.add_argument(
        "--pseudocount", type=float, help="Dirichlet prior pseudocount (default 1.0)"
    )
    fit.add_argument("--seed", type=int, help="random seed (default 0)")
    fit.add_argument("--config", help="JSON config file (or a previous run manifest)")
    fit.add_argument("--strict", action="store_true", help="exit 3 if convergence fails")
    fit.add_argument("--out", required=True, help="output directory")
    fit.set_defaults(func=_cmd_fit)

    def add_propagation_args(cmd: argparse.ArgumentParser) -> None:
        cmd.add_argument("--pubs", help="publications CSV (assessed units)")
        cmd.add_argument("--reference", help="publications CSV pooled into the reference set")
        cmd.add_argument("--citation-model", help="fitted citation posterior JSON")
        cmd.add_argument("--doctype-model", help="fitted document-type posterior JSON")
        cmd.add_argument(
            "--channels",
            help="comma-separated error channels: citations,doctypes (default both)",
        )
        cmd.add_argument("--iterations", type=int, help="Monte Carlo iterations (default 2000)")
        cmd.add_argument("--seed", type=int, help="random seed (default 0)")
        cmd.add_argument(
            "--key-mode",
            choices=["doctype", "doctype-year-field"],
            help="normalization cell key (default doctype)",
        )
        cmd.add_argument(
            "--workers", type=int, help="worker processes (default $BIBUQ_WORKERS or 1)"
        )
        cmd.add_argument(
            "--reference-only-normalization",
            action="store_true",
            default=None,
            help="exclude assessed units from the normalization universe",
        )
        cmd.add_argument(
            "--parameter-sharing",
            choices=["iteration", "publication"],
            help="posterior draw cycling granularity (default iteration)",
        )
        cmd.add_argument(
            "--dump-items", help="also write per-item draws to this CSV inside --out"
        )
        cmd.add_argument("--config", help="JSON config file (or a previous run manifest)")
        cmd.add_argument(
            "--strict", action="store_true", help="exit 3 if a loaded model failed convergence"
        )
        cmd.add_argument("--out", required=True, help="output directory")

    prop = sub.add_parser(
        "propagate",
        help="correct observed data and propagate uncertainty (second kind)",
        description=(
            "Monte Carlo correction of observed publication data: redraw "
            "citations and/or document types from second-kind error models, "
            "recompute P, C, and MNCS per iteration, and report medians "
            "with 95% intervals."
        ),
    )
    add_propagation_args(prop)
    prop.set_defaults(func=_cmd_propagate)

    inject = sub.add_parser(
        "inject",
        help="corrupt error-free data and propagate uncertainty (first kind)",
        description=(
            "Monte Carlo error injection into error-free publication data "
            "using first-kind error models; otherwise identical to propagate."
        ),
    )
    add_propagation_args(inject)
    inject.set_defaults(func=_cmd_inject)

    exercise = sub.add_parser(
        "exercise",
        help="run a built-in demonstration exercise",
        description=(
            "Run one of the built-in demonstration exercises "
            f"({', '.join(list_exercises())}). Training inputs are "
            "synthesized from embedded data unless explicit files are given."
        ),
    )
    exercise.add_argument("name", help=f"exercise name: {', '.join(list_exercises())}")
    exercise.add_argument(
        "--iterations", "--draws", dest="iterations", type=int,
        help="Monte Carlo draws (default 2000)",
    )
    exercise.add_argument("--seed", type=int, help="random seed (default 0)")
    exercise.add_argument("--citation-sample", help="override the synthesized training sample")
    exercise.add_argument("--doctype-confusion", help="override the synthetic confusion table")
    exercise.add_argument(
        "--no-synthesize",
        action="store_true",
        help="fail instead of synthesizing missing training inputs",
    )
    exercise.add_argument("--workers", type=int, help="worker processes")
    exercise.add_argument("--config", help="JSON config file (or a previous run manifest)")
    exercise.add_argument("--out", help="optionally write tables and inputs here")
    exercise.set_defaults(func=_cmd_exercise)

    report = sub.add_parser(
        "report",
        help="render a stored report.json as a table",
        description="Pretty-print a report.json produced by propagate or inject.",
    )
    report.add_argument("report", help="path to report.json")
    report.set_defaults(func=_cmd_report)

    stats = sub.add_parser(
        "stats",
        help="describe a citation error sample (or the embedded audit)",
        description=(
            "Print record counts, totals, omission rate and correlation of a "
            "correction audit sample; without a file, describe the embedded audit."
        ),
    )
    stats.add_argument("sample", nargs="?", help="CSV of observed_citations,omitted_citations")
    stats.set_defaults(func=_cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValidationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as err:
        name = err.filename if err.filename else err
        print(f"error: input file not found: {name}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # pragma: no cover - defensive
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
