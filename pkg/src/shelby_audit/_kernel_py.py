"""Pure-Python Monte Carlo epoch kernel (fallback for the compiled ``_kernel``)."""

from __future__ import annotations

import numpy as np

from ._prng import EXTRA_NOISE, INSPECT, NOISE, stream_key, uniform

PASSES, ONES, AUDITS, RECON, INSPECTED, INSPECTION_FAILS, FURNISHED, FALSE_ONES, EXTRA, EXTRA_FAILS = range(10)
NCOUNTS = 10

RULE_ONE, RULE_ZERO, RULE_TRUTHFUL = 0, 1, 2


def simulate_counts(
    n, p_s, c_max, seed, epoch0, epochs,
    serves, store, recon, submit, audit, rule, furnish,
    eps, p_a, onchain_noise,
):
    """Per-epoch, per-SP event counts for ``epochs`` consecutive epochs.

    ``rule`` must already have untruthful coercions applied (a TRUTHFUL
    rule is only passed where the auditor audits).
    """
    out = np.zeros((epochs, n, NCOUNTS), dtype=np.int64)
    serves = [bool(x) for x in serves]
    store = [bool(x) for x in store]
    recon = [bool(x) for x in recon]
    submit = [bool(x) for x in submit]
    audit = [[bool(x) for x in row] for row in audit]
    rule = [[int(x) for x in row] for row in rule]
    furnish = [[bool(x) for x in row] for row in furnish]
    eps = float(eps)
    p_a = float(p_a)
    denom = p_s * p_s
    for e in range(epochs):
        epoch = epoch0 + e
        k_noise = stream_key(seed, epoch, NOISE)
        k_insp = stream_key(seed, epoch, INSPECT)
        k_extra = stream_key(seed, epoch, EXTRA_NOISE)
        c = [[0] * NCOUNTS for _ in range(n)]
        for i in range(n):
            for m in range(p_s):
                votes = 0
                if recon[i]:
                    c[i][RECON] += 1
                base = (i * p_s + m) * n
                for j in range(n):
                    if j == i:
                        continue
                    valid = serves[i] and not (uniform(k_noise, base + j) < eps)
                    if audit[j][i]:
                        c[j][AUDITS] += 1
                    r = rule[j][i]
                    if r == RULE_ONE:
                        bit = True
                    elif r == RULE_ZERO:
                        bit = False
                    else:
                        bit = valid
                    if not (bit and submit[j]):
                        continue
                    votes += 1
                    cj = c[j]
                    cj[ONES] += 1
                    if not valid:
                        cj[FALSE_ONES] += 1
                    if uniform(k_insp, (j * n + i) * p_s + m) < p_a:
                        cj[INSPECTED] += 1
                        if not valid:
                            if furnish[j][i]:
                                cj[FURNISHED] += 1
                            else:
                                cj[INSPECTION_FAILS] += 1
                if 2 * votes > n - 1:
                    c[i][PASSES] += 1
        for i in range(n):
            b = c[i][PASSES]
            extra = (2 * (denom - b * b) * c_max + denom) // (2 * denom)
            c[i][EXTRA] = extra
            if store[i]:
                if onchain_noise and eps > 0.0:
                    fails = 0
                    for t in range(extra):
                        if uniform(k_extra, i * c_max + t) < eps:
                            fails += 1
                    c[i][EXTRA_FAILS] = fails
            else:
                c[i][EXTRA_FAILS] = extra
        out[e] = c
    return out
