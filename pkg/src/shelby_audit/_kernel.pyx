# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo epoch kernel; mirrors ``_kernel_py.simulate_counts`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int8_t, int64_t, uint64_t

cnp.import_array()

cdef enum:
    NCOUNTS = 10
    PASSES = 0
    ONES = 1
    AUDITS = 2
    RECON = 3
    INSPECTED = 4
    INSPECTION_FAILS = 5
    FURNISHED = 6
    FALSE_ONES = 7
    EXTRA = 8
    EXTRA_FAILS = 9

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t TAG_NOISE = 0x6E6F697365ULL
cdef uint64_t TAG_INSPECT = 0x696E7370656374ULL
cdef uint64_t TAG_EXTRA_NOISE = 0x65787472616E6FULL
cdef double U53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t stream_key(uint64_t seed, uint64_t epoch, uint64_t tag) nogil:
    cdef uint64_t k = mix64(seed)
    k = mix64(k ^ (epoch * GOLDEN))
    return mix64(k ^ tag)


cdef inline double uniform(uint64_t key, uint64_t counter) nogil:
    return <double>(mix64(key + (counter + 1) * GOLDEN) >> 11) * U53


def simulate_counts(
    long n, long p_s, long c_max, seed, long epoch0, long epochs,
    serves, store, recon, submit, audit, rule, furnish,
    double eps, double p_a, bint onchain_noise,
):
    cdef int8_t[::1] v_serves = np.ascontiguousarray(serves, dtype=np.int8)
    cdef int8_t[::1] v_store = np.ascontiguousarray(store, dtype=np.int8)
    cdef int8_t[::1] v_recon = np.ascontiguousarray(recon, dtype=np.int8)
    cdef int8_t[::1] v_submit = np.ascontiguousarray(submit, dtype=np.int8)
    cdef int8_t[:, ::1] v_audit = np.ascontiguousarray(audit, dtype=np.int8)
    cdef int8_t[:, ::1] v_rule = np.ascontiguousarray(rule, dtype=np.int8)
    cdef int8_t[:, ::1] v_furnish = np.ascontiguousarray(furnish, dtype=np.int8)
    out = np.zeros((epochs, n, NCOUNTS), dtype=np.int64)
    cdef int64_t[:, :, ::1] c = out
    cdef uint64_t useed = <uint64_t>seed
    cdef uint64_t k_noise, k_insp, k_extra
    cdef long e, i, j, m, t, votes, base, b, extra, fails
    cdef long denom = p_s * p_s
    cdef int8_t r
    cdef bint valid, bit
    with nogil:
        for e in range(epochs):
            k_noise = stream_key(useed, <uint64_t>(epoch0 + e), TAG_NOISE)
            k_insp = stream_key(useed, <uint64_t>(epoch0 + e), TAG_INSPECT)
            k_extra = stream_key(useed, <uint64_t>(epoch0 + e), TAG_EXTRA_NOISE)
            for i in range(n):
                for m in range(p_s):
                    votes = 0
                    if v_recon[i]:
                        c[e, i, RECON] += 1
                    base = (i * p_s + m) * n
                    for j in range(n):
                        if j == i:
                            continue
                        valid = v_serves[i] and not (uniform(k_noise, <uint64_t>(base + j)) < eps)
                        if v_audit[j, i]:
                            c[e, j, AUDITS] += 1
                        r = v_rule[j, i]
                        if r == 0:
                            bit = True
                        elif r == 1:
                            bit = False
                        else:
                            bit = valid
                        if not (bit and v_submit[j]):
                            continue
                        votes += 1
                        c[e, j, ONES] += 1
                        if not valid:
                            c[e, j, FALSE_ONES] += 1
                        if uniform(k_insp, <uint64_t>((j * n + i) * p_s + m)) < p_a:
                            c[e, j, INSPECTED] += 1
                            if not valid:
                                if v_furnish[j, i]:
                                    c[e, j, FURNISHED] += 1
                                else:
                                    c[e, j, INSPECTION_FAILS] += 1
                    if 2 * votes > n - 1:
                        c[e, i, PASSES] += 1
            for i in range(n):
                b = c[e, i, PASSES]
                extra = (2 * (denom - b * b) * c_max + denom) // (2 * denom)
                c[e, i, EXTRA] = extra
                if v_store[i]:
                    if onchain_noise and eps > 0.0:
                        fails = 0
                        for t in range(extra):
                            if uniform(k_extra, <uint64_t>(i * c_max + t)) < eps:
                                fails += 1
                        c[e, i, EXTRA_FAILS] = fails
                else:
                    c[e, i, EXTRA_FAILS] = extra
    return out
