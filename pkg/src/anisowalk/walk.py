"""Trajectory simulation for both walk models.

A model descriptor selects either the fixed-profile walk, whose horizontal
probability depends on the current column through a periodic table, or the
random-environment walk, whose moves depend on the connectivity bit of the
current column.  Single steps are exposed as pure functions for tests and
stubbing; bulk simulation goes through the compiled kernel and returns
checkpointed ensembles.

Every step consumes exactly one uniform from the replicate's step stream,
at counter position equal to the step index, so the single-step functions
driven by a CounterStream reproduce the kernel path bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .environment import (
    IID,
    MARKOV,
    PERIODIC,
    ColumnField,
    ColumnProfile,
    EnvironmentLaw,
    c_at,
    column_prob,
    make_env_law,
    make_profile,
)

HEYDE = "heyde"
ENV = "env"

MASK64 = (1 << 64) - 1

# move codes shared with the kernel
MOVE_XP = 0
MOVE_XM = 1
MOVE_YP = 2
MOVE_YM = 3


@dataclass
class WalkState:
    """Mutable position and step counters of one trajectory."""

    x: int = 0
    y: int = 0
    n: int = 0
    h_count: int = 0
    v_count: int = 0


@dataclass(eq=False)
class Skeleton:
    """Coordinate subsequences observed at their own step times.

    s1 has one entry per horizontal step plus the origin; sigma holds the
    1-based times of those steps.  s2 and tau are the vertical analogues.
    len(sigma) + len(tau) equals the trajectory length.
    """

    s1: np.ndarray
    s2: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray


@dataclass
class TrajectorySummary:
    """Checkpointed record of one trajectory.

    checkpoints holds (m, x, y, h_count, v_count) rows at strictly
    increasing step indices ending at n.  residuals holds the relative
    deviation of h_count from its predicted linear growth at each
    checkpoint.  The skeleton is attached only when per-step moves were
    recorded.
    """

    n: int
    seed: int
    checkpoints: tuple[tuple[int, int, int, int, int], ...]
    endpoint: tuple[int, int]
    residuals: tuple[float, ...]
    skeleton: Skeleton | None = field(default=None, compare=False)


@dataclass(eq=False)
class Ensemble:
    """Checkpoint arrays of a block of replicates, one row per replicate.

    max_x and max_y are running maxima of the coordinates over all steps
    up to each checkpoint, not just over checkpoint values.  moves is the
    per-step move-code matrix when recording was requested.
    """

    model: "Model"
    n: int
    seed: int
    rep_base: int
    cps: np.ndarray
    x: np.ndarray
    y: np.ndarray
    h: np.ndarray
    max_x: np.ndarray
    max_y: np.ndarray
    moves: np.ndarray | None = None

    @property
    def replicates(self) -> int:
        return self.x.shape[0]


@dataclass
class Model:
    """Parsed model descriptor: exactly one of profile or law is set."""

    kind: str
    profile: ColumnProfile | None = None
    law: EnvironmentLaw | None = None


def parse_model(spec: Mapping | "Model") -> Model:
    """Validate a model descriptor of the form accepted in config files."""
    if isinstance(spec, Model):
        return spec
    kind = spec.get("model")
    if kind == HEYDE:
        if "profile" not in spec:
            raise ValueError("heyde model needs a profile descriptor")
        return Model(kind=HEYDE, profile=make_profile(spec["profile"]))
    if kind == ENV:
        if "law" not in spec:
            raise ValueError("env model needs a law descriptor")
        return Model(kind=ENV, law=make_env_law(spec["law"]))
    raise ValueError(f"unknown model kind: {kind!r}")


def model_hfrac(model: Model) -> float:
    """Predicted limiting fraction of horizontal steps."""
    if model.kind == HEYDE:
        return 1.0 / model.profile.gamma
    return 1.0 / (1.0 + model.law.q)


def _kernel_args(model: Model) -> tuple[int, np.ndarray]:
    if model.kind == HEYDE:
        return kernels.KIND_HEYDE, np.asarray(model.profile.probs, np.float64)
    law = model.law
    if law.kind == IID:
        return kernels.KIND_IID, np.array([law.q], np.float64)
    if law.kind == PERIODIC:
        return kernels.KIND_PERIODIC, np.asarray(law.pattern, np.float64)
    if law.kind == MARKOV:
        return kernels.KIND_MARKOV, np.array([law.p01, law.p10, law.q], np.float64)
    raise ValueError(f"unknown law kind: {law.kind!r}")


def heyde_step(state: WalkState, profile: ColumnProfile, rng) -> WalkState:
    """Advance one step of the fixed-profile walk; mutates and returns state.

    With p the probability of the current column: x +/- 1 with probability
    p each, y +/- 1 with probability 1/2 - p each.
    """
    p = column_prob(profile, state.x)
    u = rng.uniform()
    if u < p:
        state.x += 1
        state.h_count += 1
    elif u < 2.0 * p:
        state.x -= 1
        state.h_count += 1
    elif u < p + 0.5:
        state.y += 1
        state.v_count += 1
    else:
        state.y -= 1
        state.v_count += 1
    state.n += 1
    return state


def env_step(state: WalkState, fld: ColumnField, rng) -> WalkState:
    """Advance one step of the random-environment walk.

    On a non-connective column only the two horizontal neighbours are
    reachable, with probability 1/2 each; on a connective column all four
    nearest neighbours have probability 1/4.
    """
    c = c_at(fld, state.x)
    u = rng.uniform()
    if c == 0:
        if u < 0.5:
            state.x += 1
        else:
            state.x -= 1
        state.h_count += 1
    elif u < 0.25:
        state.x += 1
        state.h_count += 1
    elif u < 0.5:
        state.x -= 1
        state.h_count += 1
    elif u < 0.75:
        state.y += 1
        state.v_count += 1
    else:
        state.y -= 1
        state.v_count += 1
    state.n += 1
    return state


def normalize_checkpoints(checkpoints: Sequence[int] | None, n: int) -> np.ndarray:
    """Sorted unique checkpoint indices in 1..n, always ending at n."""
    if n < 1:
        raise ValueError("need at least one step")
    if checkpoints is None:
        cps = np.array([n], np.int64)
    else:
        cps = np.unique(np.asarray(list(checkpoints), np.int64))
        if cps.size == 0:
            cps = np.array([n], np.int64)
        if cps[0] < 1 or cps[-1] > n:
            raise ValueError(f"checkpoints must lie in 1..{n}")
        if cps[-1] != n:
            cps = np.append(cps, n)
    return cps


def run_ensemble(
    model: Model | Mapping,
    n: int,
    checkpoints: Sequence[int] | None,
    seed: int,
    replicates: int,
    record_moves: bool = False,
    rep_base: int = 0,
) -> Ensemble:
    """Simulate a block of replicates through the compiled kernel.

    Replicate r of the block uses the streams of replicate index
    rep_base + r, so batched calls with consecutive bases concatenate to
    one larger ensemble bit for bit.
    """
    model = parse_model(model)
    if replicates < 1:
        raise ValueError("need at least one replicate")
    cps = normalize_checkpoints(checkpoints, n)
    kind, params = _kernel_args(model)
    x, y, h, mxx, mxy, moves = kernels.simulate_batch(
        kind, np.uint64(seed & MASK64), rep_base, replicates, n, params, cps,
        record_moves,
    )
    return Ensemble(
        model=model,
        n=n,
        seed=seed,
        rep_base=rep_base,
        cps=cps,
        x=x,
        y=y,
        h=h,
        max_x=mxx,
        max_y=mxy,
        moves=moves if record_moves else None,
    )


def simulate(
    model: Model | Mapping,
    n: int,
    checkpoints: Sequence[int] | None,
    seed: int,
    record_skeleton: bool = False,
) -> TrajectorySummary:
    """Simulate one trajectory (replicate 0) and summarize it.

    Deterministic in all arguments.  Residual at checkpoint m is
    h_count/(m * hfrac) - 1 with hfrac the model's predicted horizontal
    fraction.
    """
    ens = run_ensemble(model, n, checkpoints, seed, 1, record_moves=record_skeleton)
    hfrac = model_hfrac(ens.model)
    rows = []
    residuals = []
    for k, m in enumerate(ens.cps):
        h = int(ens.h[0, k])
        rows.append((int(m), int(ens.x[0, k]), int(ens.y[0, k]), h, int(m) - h))
        residuals.append(h / (int(m) * hfrac) - 1.0)
    skeleton = None
    if record_skeleton:
        skeleton = extract_skeletons(steps_from_moves(ens.moves[0]))
    return TrajectorySummary(
        n=n,
        seed=seed,
        checkpoints=tuple(rows),
        endpoint=rows[-1][1:3],
        residuals=tuple(residuals),
        skeleton=skeleton,
    )


def steps_from_moves(codes: np.ndarray) -> np.ndarray:
    """Expand kernel move codes into an (n, 2) array of per-step (dx, dy)."""
    codes = np.asarray(codes)
    steps = np.zeros((codes.shape[0], 2), np.int64)
    steps[:, 0] = np.where(codes == MOVE_XP, 1, 0) - np.where(codes == MOVE_XM, 1, 0)
    steps[:, 1] = np.where(codes == MOVE_YP, 1, 0) - np.where(codes == MOVE_YM, 1, 0)
    return steps


def extract_skeletons(steps) -> Skeleton:
    """Split a full step record into the two coordinate skeletons.

    steps is a sequence of (dx, dy) pairs from the origin.  Each skeleton
    lists one coordinate at its own step times only, prefixed with the
    origin, and sigma/tau hold those 1-based times.  Replaying skeletons
    against step counts reconstructs the trajectory exactly.
    """
    arr = np.asarray(steps, np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("step record must be a sequence of (dx, dy) pairs")
    dx = arr[:, 0]
    dy = arr[:, 1]
    if np.any(np.abs(dx) + np.abs(dy) != 1):
        raise ValueError("every step must move exactly one coordinate by 1")
    hmask = dx != 0
    sigma = np.nonzero(hmask)[0] + 1
    tau = np.nonzero(~hmask)[0] + 1
    s1 = np.concatenate([np.zeros(1, np.int64), np.cumsum(dx[hmask])])
    s2 = np.concatenate([np.zeros(1, np.int64), np.cumsum(dy[~hmask])])
    return Skeleton(s1=s1, s2=s2, sigma=sigma, tau=tau)
