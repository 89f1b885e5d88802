"""Quantitative acceptance battery for the two models at the committed seed.

Every limit law the library claims is checked here against its closed form
at a fixed tolerance, one test per claim, on ensembles sized so that the
band sits at three or more standard errors.  The iterated-logarithm
envelope and the ellipse maximum are strict bands around almost-sure
limsup constants; a finite ensemble maximum overshoots them by
construction, so those two checks are expected to stay red and the
reports carry per-replicate quantiles showing the calibrated statistic
inside the band.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import os
import pathlib

import numpy as np
import pytest

from anisowalk.harness import emit_report, parse_config, run_experiment
from anisowalk.statistics import (
    brownian_max_test,
    cross_independence_test,
    ellipse_cloud,
    lil_envelope,
    marginal_clt_test,
    msd,
    range_curve,
    return_probability,
    step_fractions,
    targets_of,
    time_integral_test,
)
from anisowalk.walk import extract_skeletons, run_ensemble, steps_from_moves

ACCEPT_SEED = 42

HEYDE_L4 = {"model": "heyde", "profile": {"kind": "uniform", "L": 4}}
ENV_Q05 = {"model": "env", "law": {"kind": "iid", "q": 0.5}}
ENV_Q1 = {"model": "env", "law": {"kind": "iid", "q": 1.0}}
BOTH = {"heyde_L4": HEYDE_L4, "env_q05": ENV_Q05}

DENSE200 = lambda n: list(np.unique(np.ceil(np.arange(1, 201) * (n / 200)).astype(int)))


def _slice(ens, r):
    return dataclasses.replace(
        ens, x=ens.x[:r], y=ens.y[:r], h=ens.h[:r], max_x=ens.max_x[:r], max_y=ens.max_y[:r]
    )


@pytest.fixture(scope="module")
def endpoint_big():
    # endpoint-only ensembles large enough that a 5% band is >3 s.e.
    return {
        name: run_ensemble(model, 100_000, [100_000], ACCEPT_SEED, 8000)
        for name, model in BOTH.items()
    }


@pytest.fixture(scope="module")
def dense_mid():
    return {
        name: run_ensemble(model, 10_000, DENSE200(10_000), ACCEPT_SEED, 2000)
        for name, model in BOTH.items()
    }


@pytest.fixture(scope="module")
def dense_big():
    return {
        name: run_ensemble(model, 100_000, DENSE200(100_000), ACCEPT_SEED, 2000)
        for name, model in BOTH.items()
    }


@pytest.fixture(scope="module")
def lil_ensemble():
    cps, m = [], 16
    while m < 10**6:
        cps.append(m)
        m = math.ceil(m * 1.5)
    cps.append(10**6)
    return run_ensemble(HEYDE_L4, 10**6, cps, ACCEPT_SEED, 100)


def test_criterion_01_step_fractions(endpoint_big):
    tols = {"heyde_L4": 0.005, "env_q05": 0.01}
    for name, ens in endpoint_big.items():
        rep = step_fractions(_slice(ens, 200), tol=tols[name])
        print(f"criterion 1 [{name}]: mean h/n = {rep.estimate:.5f} vs {rep.target:.5f} +- {rep.tol}")
        assert rep.passed, f"{name}: {rep.estimate} outside {rep.target} +- {rep.tol}"


def test_criterion_02_msd(endpoint_big):
    for name, ens in endpoint_big.items():
        rep = msd(ens, rel_tol=0.05)
        for key, d in rep.details.items():
            print(f"criterion 2 [{name}] {key}: {d['estimate']:.5f} vs {d['target']:.5f} +- {d['tol']:.5f}")
        assert rep.passed, f"{name}: {rep.details}"


def test_criterion_03_clt_marginals_and_cross(dense_mid):
    for name, ens in dense_mid.items():
        clt = marginal_clt_test(ens, t_grid=(0.25, 1.0))
        for t in (0.25, 1.0):
            for coord in "xy":
                d = clt.details[f"t={t}:{coord}"]
                print(f"criterion 3 [{name}] KS t={t} {coord}: {d:.5f} < 0.0365")
                assert d < 0.0365, f"{name} t={t} {coord}: KS {d}"
        cross = cross_independence_test(ens)
        print(f"criterion 3 [{name}] endpoint rho: {cross.estimate:+.5f} < 0.067")
        assert abs(cross.estimate) < 0.067, f"{name}: rho {cross.estimate}"


def test_criterion_04_time_integral_variance(dense_big):
    for name, ens in dense_big.items():
        rep = time_integral_test(ens, rel_tol=0.10)
        d = rep.details["x"]
        print(
            f"criterion 4 [{name}]: integral var {d['variance']:.5f} vs {d['target']:.5f}"
            f" +- {d['tol']:.5f} (ks {d['ks']:.4f})"
        )
        assert abs(d["variance"] - d["target"]) <= d["tol"], f"{name}: {d}"


def test_criterion_05_brownian_max(dense_big):
    for name, ens in dense_big.items():
        rep = brownian_max_test(ens)
        print(
            f"criterion 5 [{name}]: KS {rep.statistic:.5f} < 0.0365,"
            f" median {rep.estimate:.4f} vs {rep.target:.4f}"
        )
        assert rep.statistic < 0.0365, f"{name}: KS {rep.statistic}"


def test_criterion_06_lil_envelope_band(lil_ensemble):
    rep = lil_envelope(lil_ensemble)
    for coord in "xy":
        d = rep.details[coord]
        print(
            f"criterion 6 [envelope {coord}]: ensemble max {d['ensemble_max']:.4f}"
            f" vs band [0.6, 1.3] x {d['target']:.4f};"
            f" per-replicate median {d['rep_median']:.4f},"
            f" IQR [{d['rep_q25']:.4f}, {d['rep_q75']:.4f}]"
        )
    assert rep.passed, (
        "ensemble-max envelope outside the band (the per-replicate quantiles "
        f"above sit inside it): {rep.details}"
    )


def test_criterion_06_ellipse_max(lil_ensemble):
    rep = ellipse_cloud(lil_ensemble)
    print(
        f"criterion 6 [ellipse]: max quadratic form {rep.statistic:.3f} <= 1.3,"
        f" per-replicate median {rep.details['rep_median']:.3f}"
    )
    assert rep.statistic <= 1.3, f"max quadratic form {rep.statistic}"


def test_criterion_06_ellipse_fraction(lil_ensemble):
    rep = ellipse_cloud(lil_ensemble)
    print(f"criterion 6 [ellipse]: fraction above 0.5 = {rep.estimate:.2f} >= 0.5")
    assert rep.estimate >= 0.5, f"fraction {rep.estimate}"


def test_criterion_07_return_probability():
    rep = return_probability(ENV_Q1, 500, 10**6, ACCEPT_SEED, rel_tol=0.15)
    print(
        f"criterion 7 [q=1]: n*Q(n) = {rep.estimate:.4f} vs {rep.target:.4f}"
        f" +- {rep.tol:.4f} ({rep.details['hits']} hits)"
    )
    assert rep.passed, f"q=1: {rep.estimate} vs {rep.target} +- {rep.tol}"

    rep = return_probability(ENV_Q05, 500, 4 * 10**6, ACCEPT_SEED, rel_tol=0.20)
    print(
        f"criterion 7 [q=0.5]: n*Q(n) = {rep.estimate:.4f} vs {rep.target:.4f}"
        f" +- {rep.tol:.4f} ({rep.details['hits']} hits)"
    )
    assert rep.passed, f"q=0.5: {rep.estimate} vs {rep.target} +- {rep.tol}"


def test_criterion_08_range_curve():
    rep = range_curve(ENV_Q1, [10**3, 10**4, 10**5], 100, ACCEPT_SEED, rel_tol=0.25)
    for n, ratio, target in rep.curves["scaled_range"]:
        print(f"criterion 8: n={n} scaled range {ratio:.4f} -> {target:.4f}")
    assert rep.passed, f"{rep.curves['scaled_range']} (increasing={rep.details['increasing']})"


def test_criterion_09_skeleton_suite():
    n, reps = 10_000, 1000
    ens = run_ensemble(HEYDE_L4, n, [n], ACCEPT_SEED, reps, record_moves=True)
    ms = np.arange(1, n + 1)
    h_up = h_tot = v_up = v_tot = 0
    endpoints = np.empty((reps, 2), np.int64)
    for r in range(reps):
        steps = steps_from_moves(ens.moves[r])
        xs = np.cumsum(steps[:, 0])
        ys = np.cumsum(steps[:, 1])
        assert np.all((xs + ys - ms) % 2 == 0)
        sk = extract_skeletons(steps)
        k_of_m = np.searchsorted(sk.sigma, ms, side="right")
        l_of_m = np.searchsorted(sk.tau, ms, side="right")
        assert np.array_equal(sk.s1[k_of_m], xs), f"replicate {r}: s1 replay mismatch"
        assert np.array_equal(sk.s2[l_of_m], ys), f"replicate {r}: s2 replay mismatch"
        d1, d2 = np.diff(sk.s1), np.diff(sk.s2)
        h_up += int(np.sum(d1 == 1))
        h_tot += d1.size
        v_up += int(np.sum(d2 == 1))
        v_tot += d2.size
        endpoints[r] = sk.s1[-1], sk.s2[-1]
    for label, up, tot in (("s1", h_up, h_tot), ("s2", v_up, v_tot)):
        bound = 2.576 * math.sqrt(0.25 / tot)
        frac = up / tot
        print(f"criterion 9 [{label} fairness]: up fraction {frac:.5f}, bound +-{bound:.5f}")
        assert abs(frac - 0.5) <= bound, f"{label}: {frac} over {tot} increments"
    rho = float(np.corrcoef(endpoints[:, 0], endpoints[:, 1])[0, 1])
    bound = 2.576 / math.sqrt(reps)
    print(f"criterion 9 [independence]: endpoint rho {rho:+.4f}, bound +-{bound:.4f}")
    assert abs(rho) <= bound
    assert h_tot + v_tot == reps * n


def _exact_four_step_law():
    # all four moves are fair quarters at every column for both micro models
    deltas = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    law = {}
    for seq in itertools.product(deltas, repeat=4):
        x = sum(d[0] for d in seq)
        y = sum(d[1] for d in seq)
        law[(x, y)] = law.get((x, y), 0) + 1
    return {pt: c / 256.0 for pt, c in law.items()}


def test_criterion_10_micro_enumeration():
    exact = _exact_four_step_law()
    reps = 100_000
    models = {
        "env_q1": ENV_Q1,
        "heyde_srw": {"model": "heyde", "profile": {"kind": "explicit", "probs": [0.25]}},
    }
    for name, model in models.items():
        ens = run_ensemble(model, 4, [4], ACCEPT_SEED, reps)
        pts, counts = np.unique(
            np.stack([ens.x[:, 0], ens.y[:, 0]], axis=1), axis=0, return_counts=True
        )
        observed = {tuple(pt): int(c) for pt, c in zip(pts, counts)}
        assert set(observed) <= set(exact), f"{name}: impossible endpoint observed"
        worst = 0.0
        for pt, p in exact.items():
            se = math.sqrt(p * (1.0 - p) / reps)
            dev = abs(observed.get(pt, 0) / reps - p)
            worst = max(worst, dev / se)
            assert dev <= 3.0 * se, f"{name} at {pt}: |{observed.get(pt, 0) / reps} - {p}| > 3se"
        print(f"criterion 10 [{name}]: worst deviation {worst:.2f} se over {len(exact)} points")


def test_criterion_11_determinism(tmp_path):
    raw = {
        "model": HEYDE_L4,
        "n": 10_000,
        "replicates": 200,
        "seed": ACCEPT_SEED,
        "checkpoints": {"policy": "dense", "count": 100},
        "workers": 1,
        "tests": ["step_fractions", "msd", "residual_decay"],
        "format": "csv",
    }
    outputs = {}
    for label, workers in (("first", 1), ("second", 1), ("wide", 8)):
        cfg = parse_config({**raw, "workers": workers})
        report = run_experiment(cfg)
        outputs[label] = {
            os.path.basename(p): pathlib.Path(p).read_bytes()
            for p in emit_report(report, str(tmp_path / label), cfg.format)
        }
    assert set(outputs["first"]) == {
        "report.json",
        "msd_x.csv",
        "msd_y.csv",
        "residual_decay_abs_residual.csv",
    }
    assert outputs["first"] == outputs["second"], "reruns differ byte-for-byte"
    wide = dict(outputs["wide"])
    first = dict(outputs["first"])
    # the worker count is part of the config echo; everything else must agree
    for name in first:
        a = first[name].replace(b'"workers": 1', b'"workers": 8')
        assert a == wide[name], f"{name} differs across worker counts"
    print("criterion 11: byte-identical reports across reruns and worker counts")
