"""The committed benchmark pipeline, shared by the acceptance test and
``scripts/make_goldens.py`` so the two can never drift apart.

Manifests and the training trace are excluded from the golden set: they
carry wall-clock timestamps by design.  Every compared payload is a pure
function of the flags and seeds below.
"""

from pathlib import Path

from xlconsist.cli import main

GOLDEN_FILES = (
    "scenario.json",
    "policy.json",
    "metrics_fit.json",
    "metrics_ref.json",
    "report.csv",
)


def run_benchmark_pipeline(workdir: Path) -> None:
    workdir.mkdir(parents=True, exist_ok=True)
    scenario = workdir / "scenario.json"
    policy = workdir / "policy.json"
    metrics_fit = workdir / "metrics_fit.json"
    metrics_ref = workdir / "metrics_ref.json"
    report = workdir / "report.csv"

    steps = [
        ["gen", "--langs", "2", "--prompts", "4", "--cands", "4",
         "--translator", "bijective", "--alpha", "1.0", "--seed", "7",
         "--out", str(scenario)],
        ["fit", "--scenario", str(scenario), "--method", "dco",
         "--step", "0.5", "--iters", "10000", "--tol", "1e-9",
         "--norm", "l1", "--seed", "0", "--out", str(policy)],
        ["eval", "--scenario", str(scenario), "--policy", str(policy),
         "--format", "json", "--out", str(metrics_fit)],
        ["eval", "--scenario", str(scenario), "--policy", "ref",
         "--format", "json", "--out", str(metrics_ref)],
        ["report", str(metrics_fit), str(metrics_ref), "--out", str(report)],
    ]
    for argv in steps:
        code = main(argv)
        if code != 0:
            raise RuntimeError(f"pipeline step {argv[0]} exited {code}")
