"""Vectorized Philox4x32-10 counter-based generator.

Every random number is a pure function of ``(seed, replication, domain,
counter)``, so a replication can be regenerated on its own and batches can
be evaluated in any order or partition.
"""
from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)

# disjoint counter domains
ARRIVALS = 0
POLICY = 1


def philox4x32(counter, key, rounds: int = 10):
    """Apply the Philox4x32 bijection.

    ``counter`` is a sequence of four uint32 arrays (broadcastable), ``key``
    a pair of uint32 scalars. Returns four uint32-valued uint64 arrays.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK for c in counter)
    k0 = np.uint64(key[0]) & _MASK
    k1 = np.uint64(key[1]) & _MASK
    for _ in range(rounds):
        p0 = c0 * _M0
        p1 = c2 * _M1
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _SHIFT) ^ c3 ^ k1,
            p0 & _MASK,
        )
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


def _split64(v):
    v = np.asarray(v, dtype=np.uint64)
    return v & _MASK, v >> _SHIFT


def _to_unit(hi, lo):
    # 53 random bits -> (0, 1]; never returns 0 so -log(u) is finite
    bits = ((hi << np.uint64(21)) ^ (lo >> np.uint64(11))) & np.uint64((1 << 53) - 1)
    return (bits.astype(np.float64) + 1.0) * (1.0 / 9007199254740992.0)


def uniforms(seed: int, replication, domain: int, counter):
    """Two independent uniforms in ``(0, 1]`` per (replication, counter) cell."""
    klo, khi = int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF
    rlo, rhi = _split64(replication)
    ctr = np.asarray(counter, dtype=np.uint64)
    dom = np.uint64(domain)
    r0, r1, r2, r3 = philox4x32((rlo, rhi, ctr, dom), (klo, khi))
    return _to_unit(r0, r1), _to_unit(r2, r3)
