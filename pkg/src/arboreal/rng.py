"""Counter-based random numbers keyed by tree vertex.

Every random choice of the samplers is a pure function of
``(master seed, sample index, stream, vertex)``. This makes samples lazy
(any vertex can be queried without generating the rest of the tree),
reproducible across batch splits and thread counts, and lets several
samplers share their uniforms to build monotone couplings.

Derivation, all arithmetic modulo 2**64 with ``mix`` the SplitMix64 finalizer:

* vertex key: ``key(o) = ROOT_KEY``; ``key(child i of v) = mix(key(v) + (i + 1) * GOLDEN)``
* sample key: ``mix(mix(seed ^ SEED_SALT) + (j + 1) * GOLDEN)`` for sample ``j``
* stream key: ``mix(sample_key ^ (stream * STREAM_MUL))``
* uniform: ``(mix(stream_key ^ key(v)) >> 11) * 2**-53``, in ``[0, 1)``

An edge uses the key of its upper endpoint.
"""

from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
ROOT_KEY = 0x243F6A8885A308D3
SEED_SALT = 0x3C6EF372FE94F82B
STREAM_MUL = 0xD1B54A32D192ED03
UNIT = 2.0 ** -53

PERC = 1
ETA = 2
SUCC = 3
COND = 4
STREAMS = {"percolation": PERC, "eta": ETA, "successors": SUCC, "conditionals": COND}


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK:
        raise ValueError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def child_key(key: int, i: int) -> int:
    return mix64(key + (i + 1) * GOLDEN)


def sample_key(seed: int, j: int) -> int:
    return mix64(mix64(seed ^ SEED_SALT) + (j + 1) * GOLDEN)


def stream_key(skey: int, stream: int) -> int:
    return mix64(skey ^ ((stream * STREAM_MUL) & MASK))


def uniform(skey_stream: int, vkey: int) -> float:
    return (mix64(skey_stream ^ vkey) >> 11) * UNIT


def address_key(path) -> int:
    key = ROOT_KEY
    for i in path:
        key = child_key(key, i)
    return key


# numpy versions; uint64 arrays wrap silently on overflow

_U = np.uint64


def mix64_np(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _U(30))) * _U(_M1)
    z = (z ^ (z >> _U(27))) * _U(_M2)
    return z ^ (z >> _U(31))


def child_key_np(keys: np.ndarray, i: int) -> np.ndarray:
    return mix64_np(np.asarray(keys, dtype=np.uint64) + _U(((i + 1) * GOLDEN) & MASK))


def sample_keys_np(seed: int, start: int, n: int) -> np.ndarray:
    base = mix64(check_seed(seed) ^ SEED_SALT)
    j = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    return mix64_np(_U(base) + j * _U(GOLDEN))


def stream_keys_np(skeys: np.ndarray, stream: int) -> np.ndarray:
    return mix64_np(skeys ^ _U((stream * STREAM_MUL) & MASK))


def uniforms_np(skeys_stream: np.ndarray, vkeys: np.ndarray) -> np.ndarray:
    """Uniforms for every (sample, vertex) pair via broadcasting."""
    h = mix64_np(np.asarray(skeys_stream, dtype=np.uint64) ^ np.asarray(vkeys, dtype=np.uint64))
    return (h >> _U(11)).astype(np.float64) * UNIT


def tree_vertex_keys(k: int, radius: int) -> np.ndarray:
    """Keys of all vertices of the radius ``radius`` ball in breadth-first order."""
    levels = [np.array([ROOT_KEY], dtype=np.uint64)]
    for d in range(1, radius + 1):
        parents = levels[-1]
        m = k if d == 1 else k - 1
        kids = np.stack([child_key_np(parents, i) for i in range(m)], axis=1)
        levels.append(kids.reshape(-1))
    return np.concatenate(levels)
