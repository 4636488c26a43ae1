# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled root-cluster exploration kernel.

Same contract and bit-identical output as ``arboreal._explore_py.explore``;
this version walks each branch depth-first per sample and releases the GIL.
"""

import numpy as np

from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

from . import rng as _rng

cdef uint64_t GOLDEN = _rng.GOLDEN
cdef uint64_t M1 = 0xBF58476D1CE4E5B9
cdef uint64_t M2 = 0x94D049BB133111EB
cdef uint64_t ROOT_KEY = _rng.ROOT_KEY
cdef uint64_t SEED_SALT = _rng.SEED_SALT
cdef uint64_t PERC_MUL = (_rng.PERC * _rng.STREAM_MUL) & _rng.MASK
cdef uint64_t ETA_MUL = (_rng.ETA * _rng.STREAM_MUL) & _rng.MASK
cdef uint64_t SUCC_MUL = (_rng.SUCC * _rng.STREAM_MUL) & _rng.MASK
cdef double UNIT = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline double unit(uint64_t stream, uint64_t key) noexcept nogil:
    return <double>(mix64(stream ^ key) >> 11) * UNIT


def explore(int k, int R, double p_open, double eta_root, double eta_other,
            seed, int64_t start, int64_t n):
    """Root-cluster statistics for samples ``start .. start + n - 1``."""
    if k < 3 or R < 1 or n < 0:
        raise ValueError("need k >= 3, R >= 1, n >= 0")
    star_arr = np.zeros(n, dtype=np.uint64)
    reach_arr = np.zeros(n, dtype=np.uint64)
    sizes_arr = np.zeros((n, k), dtype=np.int64)
    cdef uint64_t[::1] star = star_arr
    cdef uint64_t[::1] reach = reach_arr
    cdef int64_t[:, ::1] sizes = sizes_arr
    cdef uint64_t base = mix64(<uint64_t>int(seed) ^ SEED_SALT)
    cdef int cap = (R + 2) * k
    cdef uint64_t* stack_key = <uint64_t*>malloc(cap * sizeof(uint64_t))
    cdef int* stack_depth = <int*>malloc(cap * sizeof(int))
    if stack_key == NULL or stack_depth == NULL:
        free(stack_key)
        free(stack_depth)
        raise MemoryError()

    cdef int64_t t, count
    cdef int i, j, s_o, top, d
    cdef uint64_t sk, sp, se, ss, ck, v, c, bit
    cdef bint o_active, w0, gamma, reached
    try:
        with nogil:
            for t in range(n):
                sk = mix64(base + <uint64_t>(start + t + 1) * GOLDEN)
                sp = mix64(sk ^ PERC_MUL)
                se = mix64(sk ^ ETA_MUL)
                ss = mix64(sk ^ SUCC_MUL)
                o_active = unit(se, ROOT_KEY) < eta_root
                s_o = <int>(unit(ss, ROOT_KEY) * k)
                if s_o > k - 1:
                    s_o = k - 1
                for i in range(k):
                    bit = (<uint64_t>1) << i
                    ck = mix64(ROOT_KEY + <uint64_t>(i + 1) * GOLDEN)
                    w0 = unit(sp, ck) < p_open
                    gamma = o_active and s_o == i
                    if not (w0 or gamma):
                        continue
                    star[t] |= bit
                    if gamma or ((not w0) and unit(se, ck) < eta_other):
                        reach[t] |= bit
                        sizes[t, i] = -1
                        continue
                    top = 0
                    stack_key[0] = ck
                    stack_depth[0] = 1
                    count = 0
                    reached = False
                    while top >= 0:
                        v = stack_key[top]
                        d = stack_depth[top]
                        top -= 1
                        count += 1
                        if d == R:
                            reached = True
                            break
                        for j in range(k - 1):
                            c = mix64(v + <uint64_t>(j + 1) * GOLDEN)
                            if unit(sp, c) < p_open:
                                top += 1
                                stack_key[top] = c
                                stack_depth[top] = d + 1
                    if reached:
                        reach[t] |= bit
                        sizes[t, i] = -1
                    else:
                        sizes[t, i] = count
    finally:
        free(stack_key)
        free(stack_depth)
    return star_arr, reach_arr, sizes_arr
