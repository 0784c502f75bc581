"""Shared hand-built worlds for exact-value tests.

These builders construct minimal scenarios entry by entry so that frozen
expected values can be traced to the defining formulas by hand.
"""

import numpy as np

from xlconsist.core import LogDist, StochasticKernel
from xlconsist.scenario import Alignment, LanguageSpace, Scenario, StrengthConfig


def tiny_bilingual(ref1_probs, ref2_probs, beta1=1.0, beta2=1.0):
    """One prompt per language, two candidates, deterministic translators.

    Language 0: prompt 0, candidates (1, 2); language 1: prompt 10,
    candidates (11, 12).  Candidate 1 aligns with 11 and 2 with 12, so
    ``ref2_probs`` reads directly as the round-trip target in language 0
    coordinates.
    """
    spaces = (
        LanguageSpace(0, (0,), {0: (1, 2)}),
        LanguageSpace(1, (10,), {10: (11, 12)}),
    )
    alignment = Alignment(((0, 10),), (((1, 11), (2, 12)),))
    ref = {
        0: StochasticKernel(0, 0, {0: LogDist.from_probs((1, 2), ref1_probs)}),
        1: StochasticKernel(1, 1, {10: LogDist.from_probs((11, 12), ref2_probs)}),
    }
    translators = {
        (0, 1): StochasticKernel(0, 1, {
            0: LogDist.point_mass((10,), 10),
            1: LogDist.point_mass((11, 12), 11),
            2: LogDist.point_mass((11, 12), 12),
        }),
        (1, 0): StochasticKernel(1, 0, {
            10: LogDist.point_mass((0,), 0),
            11: LogDist.point_mass((1, 2), 1),
            12: LogDist.point_mass((1, 2), 2),
        }),
    }
    priors = {0: LogDist.point_mass((0,), 0), 1: LogDist.point_mass((10,), 10)}
    return Scenario(spaces, alignment, ref, translators, priors,
                    StrengthConfig.bilingual(beta1, beta2), seed=0)


def tiny_trilingual(ref_rows, u=(1.0, 1.0, 1.0), v=(1.0, 1.0, 1.0)):
    """One prompt and two candidates per language, global bijection."""
    spaces = tuple(
        LanguageSpace(m, (100 * m,), {100 * m: (100 * m + 1, 100 * m + 2)})
        for m in range(3)
    )
    alignment = Alignment(
        ((0, 100, 200),),
        (((1, 101, 201), (2, 102, 202)),),
    )
    ref = {
        m: StochasticKernel(m, m, {100 * m: LogDist.from_probs(
            (100 * m + 1, 100 * m + 2), ref_rows[m])})
        for m in range(3)
    }
    translators = {}
    for m in range(3):
        for n in range(3):
            if m == n:
                continue
            translators[(m, n)] = StochasticKernel(m, n, {
                100 * m: LogDist.point_mass((100 * n,), 100 * n),
                100 * m + 1: LogDist.point_mass((100 * n + 1, 100 * n + 2), 100 * n + 1),
                100 * m + 2: LogDist.point_mass((100 * n + 1, 100 * n + 2), 100 * n + 2),
            })
    priors = {m: LogDist.point_mass((100 * m,), 100 * m) for m in range(3)}
    return Scenario(spaces, alignment, ref, translators, priors,
                    StrengthConfig(u, v), seed=0)
