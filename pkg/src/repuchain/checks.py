"""Named acceptance checks the CLI evaluates over a batch of runs.

Each check consumes the per-seed summaries produced by the runner and
returns a pass/fail verdict with the governing inequality spelled out, so a
CI failure message says exactly which bound broke.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .metrics_oracle import exact_expected_loss, mc_expected_loss
from .scenarios import LATENCY_FACTOR, SLOPE_WINDOW

CHECK_NAMES = ("regret-bound", "scaling", "properties", "oracle-agreement")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _mean_se(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    mean = sum(xs) / n
    if n < 2:
        return mean, 0.0
    var = sum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, math.sqrt(var / n)


def _failed_runs(summaries: Sequence[dict]) -> list[dict]:
    return [s for s in summaries if "error" in s]


def check_regret_bound(summaries: Sequence[dict]) -> CheckResult:
    """Mean per-epoch regret must stay within the theorem bound (+3 SE)."""
    failed = _failed_runs(summaries)
    if failed:
        return CheckResult("regret-bound", False, f"{len(failed)} run(s) aborted")
    margins: dict[tuple[int, int], list[float]] = {}
    for s in summaries:
        for prov in s["providers"]:
            for ep in prov["epochs"]:
                key = (prov["provider_id"], ep["epoch_index"])
                margins.setdefault(key, []).append(ep["bound"] - ep["regret"])
    worst = None
    for key, vals in sorted(margins.items()):
        mean, se = _mean_se(vals)
        slack = mean + 3 * se
        if worst is None or slack < worst[1]:
            worst = (key, slack, mean, se)
    if worst is None:
        return CheckResult("regret-bound", False, "no epochs recorded")
    key, slack, mean, se = worst
    detail = (
        f"provider {key[0]} epoch {key[1]}: mean(bound - regret) = {mean:.4f}, "
        f"se = {se:.4f}, require mean + 3*se >= 0 (got {slack:.4f})"
    )
    return CheckResult("regret-bound", slack >= 0.0, detail)


def check_scaling(summaries: Sequence[dict]) -> CheckResult:
    """Mean log-log slope of cumulative regret vs T_total within the window."""
    failed = _failed_runs(summaries)
    if failed:
        return CheckResult("scaling", False, f"{len(failed)} run(s) aborted")
    slopes = []
    for s in summaries:
        for prov in s["providers"]:
            if prov["slope"] is not None:
                slopes.append(prov["slope"])
    if not slopes:
        return CheckResult("scaling", False, "no defined slopes (zero regret throughout?)")
    mean, se = _mean_se(slopes)
    lo, hi = SLOPE_WINDOW
    detail = (
        f"mean slope over {len(slopes)} fits = {mean:.4f} (se {se:.4f}), "
        f"require {lo} <= slope <= {hi}"
    )
    return CheckResult("scaling", lo <= mean <= hi, detail)


def check_properties(summaries: Sequence[dict]) -> CheckResult:
    """No safety violations, full inclusion, and zero forged txs on chain."""
    failed = _failed_runs(summaries)
    if failed:
        return CheckResult(
            "properties", False,
            f"{len(failed)} run(s) aborted: {failed[0]['error']}",
        )
    problems = []
    for s in summaries:
        if not s["on_chain_all_generated"]:
            problems.append(f"seed {s['seed']}: non-provider transaction on chain")
        inc = s["inclusion"]
        if inc["rate"] < 1.0:
            problems.append(
                f"seed {s['seed']}: inclusion {inc['rate']:.4f} < 1.0 "
                f"(valid txs generated by round {inc['cutoff']})"
            )
        if inc["median_latency"] is not None and inc["median_latency"] > LATENCY_FACTOR * s["max_u"]:
            problems.append(
                f"seed {s['seed']}: median latency {inc['median_latency']} > "
                f"{LATENCY_FACTOR}*u = {LATENCY_FACTOR * s['max_u']}"
            )
    total_attempts = sum(s["forgery_attempts"] for s in summaries)
    detail = f"{len(summaries)} runs, {total_attempts} forgery attempts, all blocks validated"
    if problems:
        return CheckResult("properties", False, "; ".join(problems[:3]))
    return CheckResult("properties", True, detail)


ORACLE_AGREEMENT_INSTANCES = (
    {"labels": [[1, -1]], "validity": [False], "eta": 0.5},
    {"labels": [[1, 1]], "validity": [False], "eta": 0.5},
    {"labels": [[1, -1], [-1, 1], [1, 1]], "validity": [False, True, False], "eta": 0.4},
    {"labels": [[1, -1, 0], [1, 1, -1], [0, 1, 1], [1, -1, -1]],
     "validity": [False, True, True, False], "eta": 0.3},
)


def check_oracle_agreement(_summaries: Sequence[dict]) -> CheckResult:
    """Monte-Carlo means through the production code paths match the oracle."""
    n_runs = 8000
    for idx, inst in enumerate(ORACLE_AGREEMENT_INSTANCES):
        exact = exact_expected_loss(inst["labels"], inst["validity"], inst["eta"])
        mc = mc_expected_loss(
            inst["labels"], inst["validity"], inst["eta"], n_runs=n_runs, seed=idx
        )
        tol = 3 * mc.se_proof + 1e-9
        if abs(mc.mean_proof - exact.proof_loss) > tol:
            return CheckResult(
                "oracle-agreement", False,
                f"instance {idx}: |{mc.mean_proof:.5f} - {exact.proof_loss:.5f}| "
                f"> 3*se = {tol:.5f}",
            )
        tol = 3 * mc.se_prose + 1e-9
        if abs(mc.mean_prose - exact.prose_loss) > tol:
            return CheckResult(
                "oracle-agreement", False,
                f"instance {idx} (prose): |{mc.mean_prose:.5f} - {exact.prose_loss:.5f}| "
                f"> 3*se = {tol:.5f}",
            )
    return CheckResult(
        "oracle-agreement", True,
        f"{len(ORACLE_AGREEMENT_INSTANCES)} instances within 3 standard errors",
    )


CHECKS = {
    "regret-bound": check_regret_bound,
    "scaling": check_scaling,
    "properties": check_properties,
    "oracle-agreement": check_oracle_agreement,
}


def evaluate(names: Sequence[str], summaries: Sequence[dict]) -> list[CheckResult]:
    results = []
    for name in names:
        if name not in CHECKS:
            raise KeyError(name)
        results.append(CHECKS[name](summaries))
    return results
