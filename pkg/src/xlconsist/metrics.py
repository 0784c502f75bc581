"""Consistency checking and evaluation metrics.

The central check compares a model's direct response distribution against
its round trip through another language, re-tempered by the best
temperature found: an existential over temperatures becomes a 1-D
minimization over a log-spaced grid refined by golden-section search.
Both directions of a prompt pair must pass for the pair to count as
consistent.  A fixed-temperature mode bypasses the search so closed-form
predictions can be tested at their exact exponents.

RankC compares candidate *rankings* across two languages: top-j overlap
weighted by exponentially decaying weights, so agreement among the most
likely candidates dominates.  It is insensitive to annealing either side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from xlconsist.core import (
    DivergenceSpec,
    LogDist,
    StochasticKernel,
    StructuralError,
    anneal,
    embed,
    entropy,
    f_divergence,
    round_trip,
)
from xlconsist.scenario import Scenario

DEFAULT_T_GRID = np.geomspace(1e-3, 1e3, 61)

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ConsistencyReport:
    """Outcome of the two-directional consistency check for one prompt pair."""

    lang_pair: tuple[int, int]
    prompt_pair: tuple[int, int]
    divergence_at_best_T: float
    best_T1: float
    best_T2: float
    divergence_1: float
    divergence_2: float
    epsilon: float
    satisfied: bool
    support_extended: bool = False

    def __post_init__(self):
        if self.satisfied != (self.divergence_at_best_T <= self.epsilon):
            raise ValueError("satisfied flag contradicts the recorded divergence")


def _minimize_over_temperature(
    objective: Callable[[float], float],
    t_grid: np.ndarray,
    fixed_t: float | None,
) -> tuple[float, float]:
    """Smallest objective value over temperatures and its argmin."""
    if fixed_t is not None:
        return objective(fixed_t), fixed_t
    grid = np.asarray(t_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("temperature grid is empty")
    values = [objective(float(t)) for t in grid]
    k = int(np.argmin(values))
    best_val, best_t = values[k], float(grid[k])
    lo = math.log(grid[max(k - 1, 0)])
    hi = math.log(grid[min(k + 1, grid.size - 1)])
    if hi - lo > 0:
        # golden-section on log-temperature down to relative width 1e-6
        a, b = lo, hi
        c = b - _INV_PHI * (b - a)
        d = a + _INV_PHI * (b - a)
        fc, fd = objective(math.exp(c)), objective(math.exp(d))
        while b - a > 1e-6:
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - _INV_PHI * (b - a)
                fc = objective(math.exp(c))
            else:
                a, c, fc = c, d, fd
                d = a + _INV_PHI * (b - a)
                fd = objective(math.exp(d))
            for x, fx in ((c, fc), (d, fd)):
                if fx < best_val:
                    best_val, best_t = fx, math.exp(x)
    return best_val, best_t


def _directional_divergence(
    direct: LogDist,
    trip: LogDist,
    spec: DivergenceSpec,
    t_grid: np.ndarray,
    fixed_t: float | None,
) -> tuple[float, float, bool]:
    extended = direct.support != trip.support
    if extended:
        universe = sorted(set(direct.support) | set(trip.support))
        direct = embed(direct, universe)
        trip = embed(trip, universe)

    def objective(t: float) -> float:
        return f_divergence(spec, direct, anneal(trip, t))

    val, best_t = _minimize_over_temperature(objective, t_grid, fixed_t)
    return val, best_t, extended


def check_consistency(
    pi: Mapping[int, StochasticKernel],
    translators: Mapping[tuple[int, int], StochasticKernel],
    lang_pair: tuple[int, int],
    prompt_pair: tuple[int, int],
    spec: DivergenceSpec = DivergenceSpec("forward-kl"),
    eps: float = 1e-9,
    t_grid: np.ndarray = DEFAULT_T_GRID,
    fixed_temperatures: tuple[float, float] | None = None,
) -> ConsistencyReport:
    """Check both directions of one aligned prompt pair.

    When the round trip reaches candidates outside the direct support
    (leaky translators), both sides are embedded onto the support union
    explicitly and the report says so.
    """
    m, n = lang_pair
    x_m, x_n = prompt_pair
    f1 = fixed_temperatures[0] if fixed_temperatures else None
    f2 = fixed_temperatures[1] if fixed_temperatures else None

    trip_m = round_trip(translators[(m, n)], pi[n], translators[(n, m)], x_m)
    d1, t1, ext1 = _directional_divergence(pi[m].row(x_m), trip_m, spec, t_grid, f1)

    trip_n = round_trip(translators[(n, m)], pi[m], translators[(m, n)], x_n)
    d2, t2, ext2 = _directional_divergence(pi[n].row(x_n), trip_n, spec, t_grid, f2)

    worst = max(d1, d2)
    return ConsistencyReport(
        lang_pair=lang_pair,
        prompt_pair=prompt_pair,
        divergence_at_best_T=worst,
        best_T1=t1,
        best_T2=t2,
        divergence_1=d1,
        divergence_2=d2,
        epsilon=eps,
        satisfied=worst <= eps,
        support_extended=ext1 or ext2,
    )


# ---------------------------------------------------------------------------
# ranking agreement


def rankc(d1: LogDist, d2: LogDist, candidate_map: Mapping[int, int]) -> float:
    """Exponentially weighted top-j ranking overlap between two rows.

    ``candidate_map`` must biject d1's support onto d2's.  Sorting is by
    descending probability with ties broken by ascending candidate ID.
    Weights are normalized at the end, so full agreement scores exactly 1.
    """
    if set(candidate_map.keys()) != set(d1.support):
        raise StructuralError("candidate map does not cover the first support")
    mapped = [candidate_map[i] for i in d1.support]
    if len(set(mapped)) != len(mapped) or set(mapped) != set(d2.support):
        raise StructuralError("candidate map is not a bijection onto the second support")
    m = len(d1.support)
    rank1 = [candidate_map[i] for i in d1.ranking()]
    rank2 = list(d2.ranking())
    top1: set[int] = set()
    top2: set[int] = set()
    num = 0.0
    den = 0.0
    for j in range(1, m + 1):
        top1.add(rank1[j - 1])
        top2.add(rank2[j - 1])
        w = math.exp(-j)
        num += w * (len(top1 & top2) / j)
        den += w
    return num / den


@dataclass(frozen=True)
class RankCReport:
    """Per-pair ranking agreement with its aggregate means.

    ``per_prompt`` holds one value per aligned prompt group, keyed by the
    ordered-as-listed language pair; ``clc`` is the per-pair mean and
    ``clc_all`` the mean over all unordered pairs.
    """

    per_prompt: Mapping[tuple[int, int], tuple[float, ...]]
    clc: Mapping[tuple[int, int], float]
    clc_all: float

    def __post_init__(self):
        for vals in self.per_prompt.values():
            for v in vals:
                if not (0.0 <= v <= 1.0):
                    raise ValueError(f"ranking agreement {v} outside [0, 1]")


def rankc_report(
    scenario: Scenario, policy: Mapping[int, StochasticKernel]
) -> RankCReport:
    per_prompt: dict[tuple[int, int], tuple[float, ...]] = {}
    clc: dict[tuple[int, int], float] = {}
    langs = scenario.lang_ids
    for i, a in enumerate(langs):
        for b in langs[i + 1:]:
            vals = []
            ia, ib = scenario.lang_index(a), scenario.lang_index(b)
            for g, pt in enumerate(scenario.alignment.prompt_tuples):
                cmap = {c[ia]: c[ib] for c in scenario.alignment.candidate_tuples[g]}
                vals.append(rankc(policy[a].row(pt[ia]), policy[b].row(pt[ib]), cmap))
            per_prompt[(a, b)] = tuple(vals)
            clc[(a, b)] = float(np.mean(vals))
    clc_all = float(np.mean(list(clc.values()))) if clc else 1.0
    return RankCReport(per_prompt, clc, clc_all)


# ---------------------------------------------------------------------------
# accuracy-style statistics


def accuracy(pi: StochasticKernel, gold: Mapping[int, int]) -> float:
    """Fraction of prompts whose argmax (lowest ID on ties) hits the gold."""
    hits = 0
    prompts = sorted(pi.rows)
    for p in prompts:
        if p not in gold:
            raise StructuralError(f"no gold entry for prompt {p}")
        hits += int(pi.row(p).argmax() == gold[p])
    return hits / len(prompts)


def correct_set(pi: StochasticKernel, gold: Mapping[int, int]) -> set[int]:
    return {p for p in pi.rows if pi.row(p).argmax() == gold[p]}


def jaccard_correct_overlap(
    pi1: StochasticKernel,
    pi2: StochasticKernel,
    gold1: Mapping[int, int],
    gold2: Mapping[int, int],
    prompt_map: Mapping[int, int],
) -> float:
    """Jaccard similarity of the correctly-answered aligned prompt sets."""
    c1 = {p for p in prompt_map if pi1.row(p).argmax() == gold1[p]}
    c2 = {p for p in prompt_map if pi2.row(prompt_map[p]).argmax() == gold2[prompt_map[p]]}
    union = c1 | c2
    if not union:
        return 1.0
    return len(c1 & c2) / len(union)


def changed_fraction(before: StochasticKernel, after: StochasticKernel) -> float:
    """Fraction of prompts whose argmax differs between the two models."""
    prompts = sorted(before.rows)
    changed = sum(int(before.row(p).argmax() != after.row(p).argmax()) for p in prompts)
    return changed / len(prompts)


@dataclass(frozen=True)
class PartitionStats:
    mean: float
    std: float
    count: int


@dataclass(frozen=True)
class EntropyStats:
    correct: PartitionStats | None
    incorrect: PartitionStats | None


def entropy_stats(pi: StochasticKernel, gold: Mapping[int, int]) -> EntropyStats:
    """Response-entropy summary split by argmax correctness.

    Empty partitions are reported as absent rather than as NaN statistics.
    """
    buckets: dict[bool, list[float]] = {True: [], False: []}
    for p in sorted(pi.rows):
        if p not in gold:
            raise StructuralError(f"no gold entry for prompt {p}")
        row = pi.row(p)
        buckets[row.argmax() == gold[p]].append(entropy(row))

    def stats(vals: list[float]) -> PartitionStats | None:
        if not vals:
            return None
        arr = np.asarray(vals)
        return PartitionStats(float(arr.mean()), float(arr.std()), len(vals))

    return EntropyStats(correct=stats(buckets[True]), incorrect=stats(buckets[False]))


# ---------------------------------------------------------------------------
# full evaluation bundle


@dataclass(frozen=True)
class MetricsReport:
    """Everything the evaluator reports for one policy on one scenario."""

    policy_label: str
    seed: int
    rankc: RankCReport
    accuracy: Mapping[int, float]
    entropy: Mapping[int, EntropyStats]
    changed: Mapping[int, float]
    consistency: tuple[ConsistencyReport, ...]

    def to_json_dict(self) -> dict:
        def part(s: PartitionStats | None):
            return None if s is None else {"mean": s.mean, "std": s.std, "count": s.count}

        return {
            "version": "1",
            "policy": self.policy_label,
            "seed": self.seed,
            "rankc": {
                "pairs": [
                    {
                        "langs": list(pair),
                        "per_prompt": list(self.rankc.per_prompt[pair]),
                        "clc": self.rankc.clc[pair],
                    }
                    for pair in sorted(self.rankc.clc)
                ],
                "clc_all": self.rankc.clc_all,
            },
            "accuracy": {str(k): v for k, v in sorted(self.accuracy.items())},
            "entropy": {
                str(k): {"correct": part(v.correct), "incorrect": part(v.incorrect)}
                for k, v in sorted(self.entropy.items())
            },
            "changed_fraction": {str(k): v for k, v in sorted(self.changed.items())},
            "consistency": [
                {
                    "langs": list(r.lang_pair),
                    "prompts": list(r.prompt_pair),
                    "divergence": r.divergence_at_best_T,
                    "best_T1": r.best_T1,
                    "best_T2": r.best_T2,
                    "epsilon": r.epsilon,
                    "satisfied": r.satisfied,
                    "support_extended": r.support_extended,
                }
                for r in self.consistency
            ],
        }

    def to_csv_rows(self) -> list[dict]:
        rows = []

        def add(metric, scope, prompt, value):
            rows.append({
                "metric": metric, "scope": scope, "prompt": prompt,
                "value": value, "policy": self.policy_label, "seed": self.seed,
            })

        for pair in sorted(self.rankc.clc):
            scope = f"{pair[0]}-{pair[1]}"
            for g, v in enumerate(self.rankc.per_prompt[pair]):
                add("rankc", scope, g, v)
            add("clc", scope, "", self.rankc.clc[pair])
        add("clc_all", "all", "", self.rankc.clc_all)
        for lang, v in sorted(self.accuracy.items()):
            add("accuracy", lang, "", v)
        for lang, v in sorted(self.changed.items()):
            add("changed_fraction", lang, "", v)
        for lang, es in sorted(self.entropy.items()):
            for name, s in (("correct", es.correct), ("incorrect", es.incorrect)):
                if s is not None:
                    add(f"entropy_{name}_mean", lang, "", s.mean)
                    add(f"entropy_{name}_std", lang, "", s.std)
        for r in self.consistency:
            scope = f"{r.lang_pair[0]}-{r.lang_pair[1]}"
            add("consistency_divergence", scope, f"{r.prompt_pair[0]}/{r.prompt_pair[1]}",
                r.divergence_at_best_T)
        return rows


def evaluate_policy(
    scenario: Scenario,
    policy: Mapping[int, StochasticKernel],
    policy_label: str,
    spec: DivergenceSpec = DivergenceSpec("forward-kl"),
    eps: float = 1e-9,
    include_consistency: bool = True,
) -> MetricsReport:
    """Run the full metric bundle for one policy.

    Accuracy-style metrics use the scenario's gold convention (the first
    candidate of each aligned tuple); the changed fraction compares the
    policy against the scenario's reference model.
    """
    acc, ent, chg = {}, {}, {}
    for lang in scenario.lang_ids:
        gold = scenario.gold_map(lang)
        acc[lang] = accuracy(policy[lang], gold)
        ent[lang] = entropy_stats(policy[lang], gold)
        chg[lang] = changed_fraction(scenario.ref[lang], policy[lang])

    reports = []
    if include_consistency:
        langs = scenario.lang_ids
        for i, a in enumerate(langs):
            for b in langs[i + 1:]:
                ia, ib = scenario.lang_index(a), scenario.lang_index(b)
                for pt in scenario.alignment.prompt_tuples:
                    reports.append(check_consistency(
                        policy, scenario.translators, (a, b), (pt[ia], pt[ib]),
                        spec=spec, eps=eps,
                    ))

    return MetricsReport(
        policy_label=policy_label,
        seed=scenario.seed,
        rankc=rankc_report(scenario, policy),
        accuracy=acc,
        entropy=ent,
        changed=chg,
        consistency=tuple(reports),
    )
