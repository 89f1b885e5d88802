"""Compiled batch simulation of both walk models.

This module carries a bit-identical uint64 copy of the stream functions in
rng.py; test_rng pins the equivalence.  One kernel simulates a block of
replicates in parallel.  All outputs are written to replicate-indexed slots,
so results are independent of the number of threads and of scheduling order.

The thread-count cap must be fixed before numba is imported, otherwise a
process that first imports numba elsewhere could not honor workers=8 on
small machines; the verify battery compares workers 1 and 8.
"""

from __future__ import annotations

import os

os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np
from numba import njit, prange, set_num_threads

# walk kinds; params layout per kind is documented on simulate_batch
KIND_HEYDE = 0
KIND_IID = 1
KIND_PERIODIC = 2
KIND_MARKOV = 3

MAX_WORKERS = 8

_U11 = np.uint64(11)
_U33 = np.uint64(33)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xFF51AFD7ED558CCD)
_MIX2 = np.uint64(0xC4CEB9FE1A85EC53)
_ROOT_SALT = np.uint64(0x6A09E667F3BCC909)
_K1_SALT = np.uint64(0xBB67AE8584CAA73B)
_K2_SALT = np.uint64(0x3C6EF372FE94F82B)
_STEPS = np.uint64(1)
_FIELD = np.uint64(2)
_TWO_NEG53 = 2.0**-53


def set_workers(count: int) -> int:
    """Bound the thread pool; returns the effective worker count."""
    eff = max(1, min(int(count), MAX_WORKERS))
    set_num_threads(eff)
    return eff


@njit(inline="always", cache=True)
def _fmix64(z):
    z ^= z >> _U33
    z *= _MIX1
    z ^= z >> _U33
    z *= _MIX2
    z ^= z >> _U33
    return z


@njit(inline="always", cache=True)
def _keys(master, rep, purpose):
    h = _fmix64(master ^ _ROOT_SALT)
    h = _fmix64((h + _GOLD) ^ _fmix64(rep))
    h = _fmix64((h + _GOLD) ^ _fmix64(purpose))
    return _fmix64(h ^ _K1_SALT), _fmix64(h ^ _K2_SALT)


@njit(inline="always", cache=True)
def _u01(k1, k2, counter):
    h = _fmix64(counter * _GOLD + k1)
    h = _fmix64(h ^ k2)
    return (h >> _U11) * _TWO_NEG53


@njit(inline="always", cache=True)
def _zig(x):
    # fold signed column index into a distinct non-negative counter
    if x >= 0:
        return np.uint64(2 * x)
    return np.uint64(-2 * x - 1)


@njit(cache=True)
def keys_compiled(master, rep, purpose):
    """Probe surface for the bit-equality test against rng.derive_keys."""
    return _keys(np.uint64(master), np.uint64(rep), np.uint64(purpose))


@njit(cache=True)
def u01_compiled(k1, k2, counters):
    """Probe surface for the bit-equality test against rng.u01."""
    out = np.empty(counters.shape[0], np.float64)
    for i in range(counters.shape[0]):
        out[i] = _u01(np.uint64(k1), np.uint64(k2), np.uint64(counters[i]))
    return out


@njit(parallel=True, cache=True)
def simulate_batch(kind, master, rep_base, reps, n, params, cps, record_moves):
    """Simulate `reps` replicates of n steps each; capture at checkpoints.

    params layout: kind 0 -> per-column probabilities over one period;
    kind 1 -> [q]; kind 2 -> the 0/1 pattern; kind 3 -> [p01, p10, q].
    cps must be strictly increasing with 1 <= cps[0] and cps[-1] == n.
    Replicate r uses the streams of replicate index rep_base + r, so a run
    split into batches equals the unsplit run bit for bit.

    Returns (x, y, h_count, max_x, max_y, moves); the capture arrays are
    (reps, len(cps)), running maxima are over all steps up to the
    checkpoint, and moves is (reps, n) of codes 0:+x 1:-x 2:+y 3:-y
    (a 1x1 dummy when record_moves is false).
    """
    K = cps.shape[0]
    xs = np.empty((reps, K), np.int64)
    ys = np.empty((reps, K), np.int64)
    hs = np.empty((reps, K), np.int64)
    mxx = np.empty((reps, K), np.int64)
    mxy = np.empty((reps, K), np.int64)
    if record_moves:
        moves = np.empty((reps, n), np.int8)
    else:
        moves = np.empty((1, 1), np.int8)

    L = params.shape[0]
    for r in prange(reps):
        rep = np.uint64(rep_base + r)
        sk1, sk2 = _keys(np.uint64(master), rep, _STEPS)
        fk1, fk2 = _keys(np.uint64(master), rep, _FIELD)

        # realized column bits over the reachable window [-n, n]; -1 = unset
        fld = np.empty(0, np.int8)
        phase = 0
        q = 0.0
        a = 0.0
        b = 0.0
        lo = 0
        hi = 0
        if kind == KIND_IID:
            q = params[0]
            fld = np.full(2 * n + 1, -1, np.int8)
        elif kind == KIND_PERIODIC:
            phase = int(_u01(fk1, fk2, np.uint64(0)) * L)
        elif kind == KIND_MARKOV:
            a = params[0]
            b = params[1]
            q = params[2]
            fld = np.full(2 * n + 1, -1, np.int8)
            fld[n] = 1 if _u01(fk1, fk2, _zig(0)) < q else 0

        x = 0
        y = 0
        h = 0
        rmx = 0
        rmy = 0
        ci = 0
        for m in range(1, n + 1):
            u = _u01(sk1, sk2, np.uint64(m))
            if kind == KIND_HEYDE:
                p = params[x % L]
                if u < p:
                    mv = 0
                elif u < 2.0 * p:
                    mv = 1
                elif u < p + 0.5:
                    mv = 2
                else:
                    mv = 3
            else:
                if kind == KIND_IID:
                    c = fld[x + n]
                    if c < 0:
                        c = 1 if _u01(fk1, fk2, _zig(x)) < q else 0
                        fld[x + n] = c
                elif kind == KIND_PERIODIC:
                    c = 1 if params[(x + phase) % L] != 0.0 else 0
                else:
                    while hi < x:
                        prev = fld[hi + n]
                        u2 = _u01(fk1, fk2, _zig(hi + 1))
                        thr = 1.0 - b if prev == 1 else a
                        fld[hi + 1 + n] = 1 if u2 < thr else 0
                        hi += 1
                    while lo > x:
                        prev = fld[lo + n]
                        u2 = _u01(fk1, fk2, _zig(lo - 1))
                        thr = 1.0 - b if prev == 1 else a
                        fld[lo - 1 + n] = 1 if u2 < thr else 0
                        lo -= 1
                    c = fld[x + n]
                if c == 0:
                    mv = 0 if u < 0.5 else 1
                elif u < 0.25:
                    mv = 0
                elif u < 0.5:
                    mv = 1
                elif u < 0.75:
                    mv = 2
                else:
                    mv = 3

            if mv == 0:
                x += 1
                h += 1
            elif mv == 1:
                x -= 1
                h += 1
            elif mv == 2:
                y += 1
            else:
                y -= 1
            if x > rmx:
                rmx = x
            if y > rmy:
                rmy = y
            if record_moves:
                moves[r, m - 1] = mv
            if ci < K and m == cps[ci]:
                xs[r, ci] = x
                ys[r, ci] = y
                hs[r, ci] = h
                mxx[r, ci] = rmx
                mxy[r, ci] = rmy
                ci += 1

    return xs, ys, hs, mxx, mxy, moves
