"""Consistency objectives and their closed-form optima.

Two equivalent routes to the same optimum are implemented side by side:

- the penalized objective: a fidelity KL to the reference minus a
  strength-weighted expected log-likelihood of the round-trip target,
  summed over languages under the prompt priors;
- the direct route: per-candidate regression targets whose softmax is the
  optimum, so matching unnormalized scores to them (any norm) recovers it
  without ever estimating a normalizer.

The optimum itself is the strength-weighted geometric mean of the
reference row and its round-trip target row, computed entirely in log
space.  Zero-mass target entries would drive the geometric mean to minus
infinity, so they are lifted to ``LOG_EPS`` and the affected rows flagged.

The bilingual functions are written directly in terms of the two cross
weights; the ``n_language_*`` functions implement the general
product-of-powers form.  Their agreement in the two-language case is a
test obligation, which is why the code paths are deliberately separate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from xlconsist.core import (
    LOG_EPS,
    LogDist,
    StochasticKernel,
    StructuralError,
    logsumexp,
    round_trip,
)
from xlconsist.scenario import Scenario


@dataclass(frozen=True)
class MonteCarloConfig:
    """Sampling budget for estimated round trips."""

    samples: int
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("sample count must be >= 1")


@dataclass(frozen=True)
class PcoValue:
    """One prompt's penalized-objective decomposition."""

    fidelity: float
    reward_term: float
    total: float


@dataclass(frozen=True, eq=False)
class LogitTable:
    """Unnormalized per-candidate scores, one row per prompt.

    Rows are defined up to a per-prompt additive constant as far as the
    induced policy is concerned; the raw regression loss is not shift
    invariant, only its softmax is.
    """

    supports: Mapping[int, tuple[int, ...]]
    rows: Mapping[int, np.ndarray]

    def __post_init__(self):
        sups = {int(p): tuple(s) for p, s in self.supports.items()}
        rows = {}
        for p, r in self.rows.items():
            arr = np.asarray(r, dtype=float)
            if p not in sups or arr.shape != (len(sups[p]),):
                raise StructuralError(f"logit row {p} misaligned with its support")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"logit row {p} has non-finite entries")
            arr = arr.copy()
            arr.flags.writeable = False
            rows[int(p)] = arr
        if set(rows) != set(sups):
            raise StructuralError("logit rows and supports cover different prompts")
        object.__setattr__(self, "supports", sups)
        object.__setattr__(self, "rows", rows)

    def prompts(self) -> tuple[int, ...]:
        return tuple(sorted(self.rows))

    def policy_row(self, prompt: int) -> LogDist:
        return LogDist.from_logp(self.supports[prompt], self.rows[prompt])

    def with_row(self, prompt: int, values: np.ndarray) -> "LogitTable":
        rows = dict(self.rows)
        rows[prompt] = values
        return LogitTable(self.supports, rows)


def policy_kernels(table: LogitTable, scenario: Scenario) -> dict[int, StochasticKernel]:
    """Softmax the table into one kernel per language."""
    out = {}
    for lang in scenario.lang_ids:
        rows = {p: table.policy_row(p) for p in scenario.space(lang).prompts}
        out[lang] = StochasticKernel(domain=lang, codomain=lang, rows=rows)
    return out


def initial_logits(scenario: Scenario) -> LogitTable:
    """Warm start at the reference scores (floored so entries stay finite)."""
    supports, rows = {}, {}
    for lang in scenario.lang_ids:
        for p in scenario.space(lang).prompts:
            row = scenario.ref[lang].row(p)
            supports[p] = row.support
            rows[p] = np.maximum(row.logp, LOG_EPS)
    return LogitTable(supports, rows)


# ---------------------------------------------------------------------------
# round-trip targets


def _reachable_support(tau_out, pi, tau_back, prompt) -> tuple[int, ...]:
    support: set[int] = set()
    for xp, p_xp in zip(tau_out.row(prompt).support, tau_out.row(prompt).probs):
        if p_xp == 0.0:
            continue
        for yp, p_yp in zip(pi.row(xp).support, pi.row(xp).probs):
            if p_yp == 0.0:
                continue
            back = tau_back.row(yp)
            support.update(i for i, q in zip(back.support, back.probs) if q > 0.0)
    return tuple(sorted(support))


def _sample_rows(rows: dict[int, LogDist], keys: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sample one response per key, vectorized over samples."""
    uniq = np.unique(keys)
    index = {k: i for i, k in enumerate(uniq)}
    width = max(len(rows[k].support) for k in uniq)
    cums = np.ones((len(uniq), width))
    for k in uniq:
        c = np.cumsum(rows[k].probs)
        cums[index[k], : len(c)] = c
    row_idx = np.array([index[k] for k in keys])
    picked = np.sum(cums[row_idx] < u[:, None], axis=1)
    out = np.empty(len(keys), dtype=int)
    for k in uniq:
        sup = np.asarray(rows[k].support)
        mask = keys == k
        out[mask] = sup[np.minimum(picked[mask], len(sup) - 1)]
    return out


def round_trip_target(
    scenario: Scenario,
    lang: int,
    via: int,
    prompt: int,
    mc: MonteCarloConfig | None = None,
) -> LogDist:
    """The distribution of translate-respond-translate-back for one prompt.

    Exact (full marginalization) when ``mc`` is omitted or when both
    translators are deterministic, in which case any sampling budget
    returns the identical exact result.  Otherwise estimated from ``mc``
    samples, smoothed at the probability floor, and renormalized.
    """
    tau_out = scenario.translator(lang, via)
    tau_back = scenario.translator(via, lang)
    pi = scenario.ref[via]
    if mc is None or (tau_out.is_deterministic() and tau_back.is_deterministic()):
        return round_trip(tau_out, pi, tau_back, prompt)

    support = _reachable_support(tau_out, pi, tau_back, prompt)
    rng = np.random.default_rng(mc.seed)
    u = rng.random((mc.samples, 3))
    first = tau_out.row(prompt)
    cum = np.cumsum(first.probs)
    xp_idx = np.minimum(np.sum(cum < u[:, 0][:, None], axis=1), len(cum) - 1)
    xs = np.asarray(first.support)[xp_idx]
    ys = _sample_rows(dict(pi.rows), xs, u[:, 1])
    zs = _sample_rows(dict(tau_back.rows), ys, u[:, 2])
    counts = np.zeros(len(support))
    pos = {i: k for k, i in enumerate(support)}
    for z in zs:
        counts[pos[int(z)]] += 1.0
    return LogDist.from_probs(support, counts / mc.samples).floored()


# ---------------------------------------------------------------------------
# bilingual objective and optimum


def _logp_at(d: LogDist, ids: Sequence[int]) -> np.ndarray:
    idx = {i: k for k, i in enumerate(d.support)}
    out = np.full(len(ids), -math.inf)
    for k, i in enumerate(ids):
        j = idx.get(i)
        if j is not None:
            out[k] = d.logp[j]
    return out


def _other_lang(scenario: Scenario, lang: int) -> int:
    if scenario.n_langs != 2:
        raise ValueError("bilingual operation requires exactly two languages")
    a, b = scenario.lang_ids
    return b if lang == a else a


def _check_prompt(scenario: Scenario, prompt: int, lang: int) -> None:
    if prompt not in scenario.space(lang).candidates:
        raise ValueError(f"prompt {prompt} is not a prompt of language {lang}")


def _expectation_terms(theta_row: LogDist, logp_other: np.ndarray) -> float:
    """Sum of theta * logp_other with the 0*log convention; +-inf propagated."""
    mask = theta_row.probs > 0
    vals = logp_other[mask]
    if np.any(vals == -math.inf):
        return -math.inf
    return float(np.sum(theta_row.probs[mask] * vals))


def pco_objective(
    theta: StochasticKernel,
    scenario: Scenario,
    prompt: int,
    lang: int,
    target: LogDist | None = None,
) -> PcoValue:
    """One prompt's penalized value: KL to the reference minus the
    strength-weighted expected log round-trip likelihood, both under the
    candidate policy."""
    _check_prompt(scenario, prompt, lang)
    via = _other_lang(scenario, lang)
    beta = scenario.beta(lang, via)
    t_row = theta.row(prompt)
    ref_row = scenario.ref[lang].row(prompt)
    if target is None:
        target = round_trip_target(scenario, lang, via, prompt)

    log_ref = _logp_at(ref_row, t_row.support)
    fid = _expectation_terms(t_row, log_ref)
    fidelity = math.inf if fid == -math.inf else max(
        0.0, float(np.sum(t_row.probs[t_row.probs > 0] * t_row.logp[t_row.probs > 0])) - fid
    )
    log_t = _logp_at(target, t_row.support)
    e_log_target = _expectation_terms(t_row, log_t)
    reward = beta * e_log_target
    total = math.inf if (fidelity == math.inf or reward == -math.inf) else fidelity - reward
    return PcoValue(fidelity=fidelity, reward_term=reward, total=total)


def pco_total(
    theta_by_lang: Mapping[int, StochasticKernel],
    scenario: Scenario,
    targets: Mapping[tuple[int, int], LogDist] | None = None,
) -> float:
    """The full prior-weighted objective over both languages."""
    total = 0.0
    for lang in scenario.lang_ids:
        prior = scenario.priors[lang]
        for prompt, mass in zip(prior.support, prior.probs):
            if mass == 0.0:
                continue
            tgt = targets.get((lang, prompt)) if targets is not None else None
            val = pco_objective(theta_by_lang[lang], scenario, prompt, lang, target=tgt)
            total += mass * val.total
    return total


@dataclass(frozen=True)
class ClosedFormOptimum:
    """The optimum policy with its per-prompt log-normalizers.

    ``floored`` lists (lang, prompt) rows where a zero-mass round-trip
    target had to be lifted to the floor before tilting.
    """

    policy: Mapping[int, StochasticKernel]
    log_normalizers: Mapping[int, float]
    floored: tuple[tuple[int, int], ...] = field(default=())

    def row(self, scenario_lang: int, prompt: int) -> LogDist:
        return self.policy[scenario_lang].row(prompt)


def _tilted_row(
    ref_row: LogDist, tilts: Sequence[tuple[float, LogDist]]
) -> tuple[LogDist, float, bool]:
    """ref * prod target^beta, normalized; returns (row, logZ, floor_used)."""
    unnorm = ref_row.logp.copy()
    floor_used = False
    for beta, target in tilts:
        log_t = _logp_at(target, ref_row.support)
        if np.any((log_t < LOG_EPS) & (ref_row.probs > 0)):
            floor_used = True
            log_t = np.maximum(log_t, LOG_EPS)
        unnorm = unnorm + beta * log_t
    log_z = logsumexp(unnorm)
    return LogDist.from_logp(ref_row.support, unnorm), log_z, floor_used


def closed_form_optimum(
    scenario: Scenario, mc: MonteCarloConfig | None = None
) -> ClosedFormOptimum:
    """Bilingual optimum: per prompt, the reference row tilted by the
    round-trip target raised to that language's cross weight."""
    if scenario.n_langs != 2:
        raise ValueError("bilingual operation requires exactly two languages; "
                         "use n_language_optimum for more")
    policy, log_norm, floored = {}, {}, []
    for lang in scenario.lang_ids:
        via = _other_lang(scenario, lang)
        beta = scenario.beta(lang, via)
        rows = {}
        for prompt in scenario.space(lang).prompts:
            target = round_trip_target(scenario, lang, via, prompt, mc=mc)
            row, log_z, used = _tilted_row(scenario.ref[lang].row(prompt),
                                           [(beta, target)])
            rows[prompt] = row
            log_norm[prompt] = log_z
            if used:
                floored.append((lang, prompt))
        policy[lang] = StochasticKernel(domain=lang, codomain=lang, rows=rows)
    return ClosedFormOptimum(policy, log_norm, tuple(floored))


def dco_log_targets(
    scenario: Scenario,
    prompt: int,
    lang: int,
    mc: MonteCarloConfig | None = None,
) -> np.ndarray:
    """Per-candidate regression targets: beta * log target + log reference,
    aligned with the reference row's support order."""
    _check_prompt(scenario, prompt, lang)
    via = _other_lang(scenario, lang)
    beta = scenario.beta(lang, via)
    ref_row = scenario.ref[lang].row(prompt)
    target = round_trip_target(scenario, lang, via, prompt, mc=mc)
    log_t = np.maximum(_logp_at(target, ref_row.support), LOG_EPS)
    log_ref = np.maximum(ref_row.logp, LOG_EPS)
    return beta * log_t + log_ref


def target_table(scenario: Scenario, mc: MonteCarloConfig | None = None) -> LogitTable:
    """Regression targets for every prompt of every language."""
    supports, rows = {}, {}
    for lang in scenario.lang_ids:
        for prompt in scenario.space(lang).prompts:
            supports[prompt] = scenario.ref[lang].row(prompt).support
            if scenario.n_langs == 2:
                rows[prompt] = dco_log_targets(scenario, prompt, lang, mc=mc)
            else:
                rows[prompt] = n_language_log_targets(scenario, prompt, lang, mc=mc)
    return LogitTable(supports, rows)


def dco_loss(
    z: LogitTable,
    targets: LogitTable,
    norm: str = "l1",
    weights: Mapping[int, float] | None = None,
) -> float:
    """Regression loss between scores and targets.

    ``weights`` carries the per-prompt prior masses; omitted, every prompt
    counts once.  The loss is not shift invariant; only the induced policy
    is."""
    if norm not in ("l1", "l2"):
        raise ValueError(f"unknown norm {norm!r}")
    if set(z.rows) != set(targets.rows):
        raise StructuralError("score and target tables cover different prompts")
    total = 0.0
    for p in z.rows:
        if z.supports[p] != targets.supports[p]:
            raise StructuralError(f"row {p}: score and target supports differ")
        resid = z.rows[p] - targets.rows[p]
        per = np.abs(resid).sum() if norm == "l1" else (resid ** 2).sum()
        total += (1.0 if weights is None else weights.get(p, 0.0)) * float(per)
    return total


def prior_weights(scenario: Scenario) -> dict[int, float]:
    w = {}
    for lang in scenario.lang_ids:
        prior = scenario.priors[lang]
        for prompt, mass in zip(prior.support, prior.probs):
            w[prompt] = float(mass)
    return w


# ---------------------------------------------------------------------------
# N-language generalization


def _routes(scenario: Scenario, lang: int) -> list[int]:
    return [n for n in scenario.lang_ids if n != lang]


def n_language_objective(
    theta: StochasticKernel,
    scenario: Scenario,
    prompt: int,
    lang: int,
    targets: Mapping[int, LogDist] | None = None,
) -> PcoValue:
    """Fidelity KL plus one strength-weighted round-trip reward per other
    language; the two-language case coincides with the bilingual form."""
    _check_prompt(scenario, prompt, lang)
    t_row = theta.row(prompt)
    ref_row = scenario.ref[lang].row(prompt)
    log_ref = _logp_at(ref_row, t_row.support)
    fid = _expectation_terms(t_row, log_ref)
    mask = t_row.probs > 0
    fidelity = math.inf if fid == -math.inf else max(
        0.0, float(np.sum(t_row.probs[mask] * t_row.logp[mask])) - fid
    )
    reward = 0.0
    for via in _routes(scenario, lang):
        target = targets.get(via) if targets is not None else None
        if target is None:
            target = round_trip_target(scenario, lang, via, prompt)
        e = _expectation_terms(t_row, _logp_at(target, t_row.support))
        if e == -math.inf:
            reward = -math.inf
            break
        reward += scenario.beta(lang, via) * e
    total = math.inf if (fidelity == math.inf or reward == -math.inf) else fidelity - reward
    return PcoValue(fidelity=fidelity, reward_term=reward, total=total)


def n_language_total(
    theta_by_lang: Mapping[int, StochasticKernel],
    scenario: Scenario,
    targets: Mapping[tuple[int, int, int], LogDist] | None = None,
) -> float:
    total = 0.0
    for lang in scenario.lang_ids:
        prior = scenario.priors[lang]
        for prompt, mass in zip(prior.support, prior.probs):
            if mass == 0.0:
                continue
            per_route = None
            if targets is not None:
                per_route = {via: targets[(lang, via, prompt)]
                             for via in _routes(scenario, lang)}
            val = n_language_objective(theta_by_lang[lang], scenario, prompt, lang,
                                       targets=per_route)
            total += mass * val.total
    return total


def n_language_log_targets(
    scenario: Scenario,
    prompt: int,
    lang: int,
    mc: MonteCarloConfig | None = None,
) -> np.ndarray:
    _check_prompt(scenario, prompt, lang)
    ref_row = scenario.ref[lang].row(prompt)
    out = np.maximum(ref_row.logp, LOG_EPS).copy()
    for via in _routes(scenario, lang):
        target = round_trip_target(scenario, lang, via, prompt, mc=mc)
        log_t = np.maximum(_logp_at(target, ref_row.support), LOG_EPS)
        out += scenario.beta(lang, via) * log_t
    return out


def n_language_optimum(
    scenario: Scenario, mc: MonteCarloConfig | None = None
) -> ClosedFormOptimum:
    """Product-of-powers optimum: the reference row tilted by every other
    language's round-trip target raised to the pairwise strength."""
    policy, log_norm, floored = {}, {}, []
    for lang in scenario.lang_ids:
        rows = {}
        for prompt in scenario.space(lang).prompts:
            tilts = [
                (scenario.beta(lang, via), round_trip_target(scenario, lang, via, prompt, mc=mc))
                for via in _routes(scenario, lang)
            ]
            row, log_z, used = _tilted_row(scenario.ref[lang].row(prompt), tilts)
            rows[prompt] = row
            log_norm[prompt] = log_z
            if used:
                floored.append((lang, prompt))
        policy[lang] = StochasticKernel(domain=lang, codomain=lang, rows=rows)
    return ClosedFormOptimum(policy, log_norm, tuple(floored))
