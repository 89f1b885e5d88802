"""Column configurations for the two walk models.

The fixed-column walk reads its horizontal step probability from a periodic
table of per-column probabilities p_j in (0, 1/2].  The random-environment
walk instead reads a connectivity bit C(x) per column, drawn once per
replicate from a stationary {0,1}-valued law with connective density
q = P(C(0)=1) in (0, 1].

Profiles and laws are immutable values.  A ColumnField is the realized
environment of a single replicate: bits are materialized lazily over the
visited window and memoized, and every bit is a deterministic function of
(law, seed, replicate, column), so query order never matters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .rng import STREAM_FIELD, derive_keys, u01, zig

IID = "iid"
PERIODIC = "periodic-random-phase"
MARKOV = "two-state-markov"


@dataclass(frozen=True)
class ColumnProfile:
    """Periodic per-column probabilities with the derived time-scale constant."""

    period: int
    probs: tuple[float, ...]
    gamma: float


@dataclass(frozen=True)
class EnvironmentLaw:
    """Stationary law of the column bits; q is the connective density."""

    kind: str
    q: float
    pattern: tuple[int, ...] | None = None
    p01: float | None = None
    p10: float | None = None


def make_profile(spec: Mapping) -> ColumnProfile:
    """Build and validate a column profile from a descriptor.

    Descriptors: {"kind": "uniform", "L": int} for one connective column
    (p=1/4) per period of otherwise p=1/2 columns, or
    {"kind": "explicit", "probs": [..]} for an arbitrary table.
    """
    kind = spec.get("kind")
    if kind in ("uniform", "uniform-periodic"):
        L = spec.get("L")
        if not isinstance(L, int) or L < 1:
            raise ValueError("uniform profile needs an integer period L >= 1")
        probs = (0.25,) + (0.5,) * (L - 1)
    elif kind == "explicit":
        raw = spec.get("probs")
        if not raw:
            raise ValueError("explicit profile needs a non-empty probs list")
        probs = tuple(float(p) for p in raw)
    else:
        raise ValueError(f"unknown profile kind: {kind!r}")

    for p in probs:
        if not (0.0 < p <= 0.5):
            raise ValueError(f"column probability {p} outside (0, 1/2]")
    if min(probs) >= 0.5:
        raise ValueError(
            "all columns at p=1/2 give a purely horizontal walk; "
            "at least one column must have p < 1/2"
        )
    L = len(probs)
    gamma = sum(1.0 / p for p in probs) / (2.0 * L)
    return ColumnProfile(period=L, probs=probs, gamma=gamma)


def gamma_of(profile: ColumnProfile) -> float:
    """Per-period harmonic mean constant, (1/2L) * sum of 1/p_j.

    Always in (1, inf) for a valid profile; equals the cached field.
    """
    return sum(1.0 / p for p in profile.probs) / (2.0 * profile.period)


def column_prob(profile: ColumnProfile, j: int) -> float:
    """Probability table lookup with periodic extension to negative columns."""
    # Python % already returns the non-negative remainder
    return profile.probs[j % profile.period]


def make_env_law(spec: Mapping) -> EnvironmentLaw:
    """Build and validate an environment law from a descriptor.

    Descriptors:
      {"kind": "iid", "q": float}
      {"kind": "periodic-random-phase", "pattern": [0/1, ..]}
      {"kind": "two-state-markov", "p01": float, "p10": float}
    """
    kind = spec.get("kind")
    if kind == IID:
        q = float(spec.get("q", -1.0))
        if not (0.0 < q <= 1.0):
            raise ValueError("iid law needs q in (0, 1]")
        return EnvironmentLaw(kind=IID, q=q)
    if kind in (PERIODIC, "periodic"):
        raw = spec.get("pattern")
        if not raw:
            raise ValueError("periodic law needs a non-empty 0/1 pattern")
        pattern = tuple(int(b) for b in raw)
        if any(b not in (0, 1) for b in pattern):
            raise ValueError("pattern entries must be 0 or 1")
        q = sum(pattern) / len(pattern)
        if q == 0.0:
            raise ValueError("pattern of all zeros has no connective columns")
        return EnvironmentLaw(kind=PERIODIC, q=q, pattern=pattern)
    if kind in (MARKOV, "markov"):
        a = float(spec.get("p01", -1.0))
        b = float(spec.get("p10", -1.0))
        if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
            raise ValueError("markov law needs transition probabilities in [0, 1]")
        if a == 0.0:
            # stationary chain started from its own law never leaves state 0
            raise ValueError("p01 = 0 gives q = 0; no connective columns")
        q = a / (a + b)
        return EnvironmentLaw(kind=MARKOV, q=q, p01=a, p10=b)
    raise ValueError(f"unknown environment law kind: {kind!r}")


@dataclass
class ColumnField:
    """Realized column bits of one replicate, memoized over the visited window."""

    law: EnvironmentLaw
    seed: int
    replicate: int
    phase: int = 0
    _k1: int = field(default=0, repr=False)
    _k2: int = field(default=0, repr=False)
    _memo: dict[int, int] = field(default_factory=dict, repr=False)
    # filled frontier for the markov recursion, inclusive
    _lo: int = field(default=0, repr=False)
    _hi: int = field(default=0, repr=False)


def sample_field(law: EnvironmentLaw, seed: int, replicate: int = 0) -> ColumnField:
    """Realize a field for one replicate; a pure function of its arguments.

    The bit stream is keyed by (seed, replicate, field purpose), so it is
    independent of the walk-step stream of the same replicate.
    """
    k1, k2 = derive_keys(seed, replicate, STREAM_FIELD)
    fld = ColumnField(law=law, seed=seed, replicate=replicate, _k1=k1, _k2=k2)
    if law.kind == PERIODIC:
        # one uniform at counter 0 fixes the phase; keeps the law stationary
        period = len(law.pattern)
        fld.phase = int(u01(k1, k2, 0) * period)
    elif law.kind == MARKOV:
        fld._memo[0] = 1 if u01(k1, k2, zig(0)) < law.q else 0
    return fld


def _markov_extend(fld: ColumnField, x: int) -> None:
    # two-state stationary chains are reversible, so the leftward recursion
    # uses the same transition matrix as the rightward one
    a = fld.law.p01
    b = fld.law.p10
    memo = fld._memo
    while fld._hi < x:
        nxt = fld._hi + 1
        u = u01(fld._k1, fld._k2, zig(nxt))
        prev = memo[fld._hi]
        memo[nxt] = (1 if u < 1.0 - b else 0) if prev else (1 if u < a else 0)
        fld._hi = nxt
    while fld._lo > x:
        nxt = fld._lo - 1
        u = u01(fld._k1, fld._k2, zig(nxt))
        prev = memo[fld._lo]
        memo[nxt] = (1 if u < 1.0 - b else 0) if prev else (1 if u < a else 0)
        fld._lo = nxt


def c_at(field: ColumnField, x: int) -> int:
    """Connectivity bit of column x; memoized, stable across query orders."""
    memo = field._memo
    hit = memo.get(x)
    if hit is not None:
        return hit
    law = field.law
    if law.kind == IID:
        bit = 1 if u01(field._k1, field._k2, zig(x)) < law.q else 0
    elif law.kind == PERIODIC:
        pattern = law.pattern
        bit = pattern[(x + field.phase) % len(pattern)]
    else:
        _markov_extend(field, x)
        return memo[x]
    memo[x] = bit
    return bit
