"""Inject first-kind errors into error-free data, at growing unit sizes.

The mirror image of correction: start from data treated as error-free,
corrupt it the way the database would (citations dropped, types
misrecorded), and watch how indicator uncertainty shrinks as units get
bigger.  Uses the built-in injection exercises, which differ only in
publication volume.
"""

from bibuq import run_exercise


def main() -> None:
    for name in ("A3", "A4"):
        report = run_exercise(name, iterations=1000, seed=0, workers=4)
        print(report.to_text())
        for unit in report.result.units:
            summary = report.result.distribution(unit, "MNCS").summary
            p_obs = report.result.observed[unit].p
            if summary and summary.relative_uncertainty_pct is not None:
                print(
                    f"  unit {unit} ({p_obs} core publications): "
                    f"MNCS relative uncertainty {summary.relative_uncertainty_pct:.1f}%"
                )
        print()


if __name__ == "__main__":
    main()
