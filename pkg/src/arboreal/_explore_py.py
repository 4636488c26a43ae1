"""Vectorized numpy implementation of the root-cluster exploration kernel.

Reference semantics shared with the compiled ``_explore`` extension. For each
sample ``j`` in ``[start, start + n)``:

* ``star[j]``: bit ``i`` set iff the ``i``-th root edge is open;
* ``reach[j]``: bit ``i`` set iff the root cluster reaches depth ``R``
  through root edge ``i``;
* ``sizes[j, i]``: number of cluster vertices below root edge ``i``
  (0 if the edge is closed, -1 if the branch reaches depth ``R``).

An edge ``v -> c`` is open iff its percolation uniform is below ``p_open`` or
``v`` is active and ``s(v) = c``. A vertex is active iff it starts a path (it
is in the vertex layer and is the root or its parent edge is closed in the
percolation layer) or its parent is active and points to it. An active
vertex at depth ``<= R`` always reaches depth ``R``, so its branch is
marked as reached without walking the path. A vertex entered through an
edge that is open in the percolation layer never starts a path, and below
a non-active vertex every open edge is a percolation edge, so the rest of
the exploration only needs the percolation stream.
"""

from __future__ import annotations

import numpy as np

from . import rng

CHUNK = 1 << 16


def _explore_chunk(k, R, p_open, eta_root, eta_other, seed, start, n):
    skeys = rng.sample_keys_np(seed, start, n)
    s_perc = rng.stream_keys_np(skeys, rng.PERC)
    s_eta = rng.stream_keys_np(skeys, rng.ETA)
    s_succ = rng.stream_keys_np(skeys, rng.SUCC)

    root = np.uint64(rng.ROOT_KEY)
    o_active = rng.uniforms_np(s_eta, root) < eta_root
    s_o = np.minimum((rng.uniforms_np(s_succ, root) * k).astype(np.int64), k - 1)

    star = np.zeros(n, dtype=np.uint64)
    reach = np.zeros(n, dtype=np.uint64)
    sizes = np.zeros((n, k), dtype=np.int64)

    f_sample, f_branch, f_key = [], [], []
    for i in range(k):
        ck = np.uint64(rng.child_key(rng.ROOT_KEY, i))
        w0 = rng.uniforms_np(s_perc, ck) < p_open
        gamma = o_active & (s_o == i)
        is_open = w0 | gamma
        starts_path = (rng.uniforms_np(s_eta, ck) < eta_other) & ~w0
        active = is_open & (gamma | starts_path)
        star |= is_open.astype(np.uint64) << np.uint64(i)
        reach |= active.astype(np.uint64) << np.uint64(i)
        idx = np.flatnonzero(is_open & ~active)
        f_sample.append(idx)
        f_branch.append(np.full(idx.size, i, dtype=np.int64))
        f_key.append(np.full(idx.size, ck, dtype=np.uint64))
    fs = np.concatenate(f_sample)
    fb = np.concatenate(f_branch)
    fk = np.concatenate(f_key)

    for depth in range(1, R + 1):
        if fs.size == 0:
            break
        np.add.at(sizes, (fs, fb), 1)
        if depth == R:
            np.bitwise_or.at(reach, fs, np.uint64(1) << fb.astype(np.uint64))
            break
        nxt_s, nxt_b, nxt_k = [], [], []
        for j in range(k - 1):
            ck = rng.child_key_np(fk, j)
            w0 = rng.uniforms_np(s_perc[fs], ck) < p_open
            nxt_s.append(fs[w0])
            nxt_b.append(fb[w0])
            nxt_k.append(ck[w0])
        fs = np.concatenate(nxt_s)
        fb = np.concatenate(nxt_b)
        fk = np.concatenate(nxt_k)

    bits = (reach[:, None] >> np.arange(k, dtype=np.uint64)) & np.uint64(1)
    sizes[bits.astype(bool)] = -1
    return star, reach, sizes


def explore(k, R, p_open, eta_root, eta_other, seed, start, n):
    """Root-cluster statistics for samples ``start .. start + n - 1``."""
    star = np.empty(n, dtype=np.uint64)
    reach = np.empty(n, dtype=np.uint64)
    sizes = np.empty((n, k), dtype=np.int64)
    for lo in range(0, n, CHUNK):
        m = min(CHUNK, n - lo)
        s, r, z = _explore_chunk(k, R, p_open, eta_root, eta_other, seed, start + lo, m)
        star[lo: lo + m] = s
        reach[lo: lo + m] = r
        sizes[lo: lo + m] = z
    return star, reach, sizes
