"""Acceptance criteria 1-10, each at its stated tolerance and runtime budget.

Every criterion records one line in RESULTS ("CRITERION k: PASS|FAIL ...");
the conftest hook prints them at the end of the pytest run, and running this
file directly prints them as they finish.
"""

import contextlib
import io
import json
import math
import re
import sys
import tempfile
import time
from functools import lru_cache
from itertools import combinations
from pathlib import Path

import pytest

from quasiwalk.boundary import (
    boundary_variance,
    cocycle_identity_check,
    cylinder_frequencies,
    integral_representation_check,
    random_triples,
    sample_rays,
    stationarity_check,
)
from quasiwalk.cli import main as cli_main
from quasiwalk.group import FreeGroup
from quasiwalk.harmonic import biharmonic_approx, distortion, monte_carlo_approx, residual_identity_gap, residuals
from quasiwalk.martingale import martingale_sandwich, martingale_sigma
from quasiwalk.measure import FiniteMeasure
from quasiwalk.quasimorphism import BrooksQuasimorphism

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
WORK = Path(tempfile.mkdtemp(prefix="quasiwalk-acceptance-"))
SEED = 1

F2 = FreeGroup(["a", "b"])
SRW = FiniteMeasure.simple_random_walk(F2)
PHI_AB = BrooksQuasimorphism(F2, F2.parse("a b"))

RESULTS = []

pytestmark = pytest.mark.slow


def record(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}"
    RESULTS.append(line)
    print(line)
    return ok, detail


# -- shared runs ---------------------------------------------------------------------

@lru_cache(maxsize=None)
def cli(subcommand, config, threads=1, sets=()):
    """Run the CLI in-process; returns (exit code, summary, output dir, seconds)."""
    tag = re.sub(r"\W+", "_", "-".join(sets)).strip("_")
    out = WORK / f"{Path(config).stem}-{subcommand}-{tag}-t{threads}"
    argv = [subcommand, "--config", str(CONFIGS / config), "--out", str(out),
            "--threads", str(threads), "--check"]
    for s in sets:
        argv += ["--set", s]
    buf, err = io.StringIO(), io.StringIO()
    t0 = time.perf_counter()
    with contextlib.redirect_stdout(buf), contextlib.redirect_stderr(err):
        code = cli_main(argv)
    secs = time.perf_counter() - t0
    summary = json.loads(buf.getvalue()) if buf.getvalue() else json.loads(err.getvalue())
    return code, summary, out, secs


def load(out, name):
    return json.loads((out / name).read_text())


# the KS gate applies at n = 4096; the n = 1024 run only feeds the sigma ratio
F2_SHORT = ("clt.n=1024", 'clt.check={"expect": "non-degenerate"}')


@lru_cache(maxsize=None)
def exact_approx():
    return biharmonic_approx(PHI_AB, SRW, 8, F2.enumerate_ball(3), "exact", depth=6)


@lru_cache(maxsize=None)
def mc_approx():
    return monte_carlo_approx(PHI_AB, SRW, 256, depth=6, seed=SEED)


@lru_cache(maxsize=None)
def rays_2000():
    return sample_rays(SRW, 2000, seed=SEED)


# -- criteria ------------------------------------------------------------------------

def criterion_1():
    t0 = time.perf_counter()
    ap = exact_approx()
    gap = residual_identity_gap(ap)
    worst = residuals(ap, "right").max_right()
    secs = time.perf_counter() - t0
    ok = gap <= 1e-9 and worst <= ap.residual_slack and secs < 120
    return record(1, ok, f"identity gap {gap:.2e} <= 1e-9, max right residual {worst:.4f} "
                         f"<= 2D^/N = {ap.residual_slack:.4f}, {len(ap.eval_set)} elements, {secs:.1f}s < 120s")


def criterion_2():
    t0 = time.perf_counter()
    ap = exact_approx()
    d = distortion(ap.phi_hat, SRW, 10, "exact", defect=ap.defect_hat)
    gap = d.subadditivity_gap()
    secs = time.perf_counter() - t0
    ok = gap <= ap.defect_hat + 1e-9 and secs < 60
    return record(2, ok, f"max |a(m+n) - a(m) - a(n)| = {gap:.3g} <= D^ = {ap.defect_hat:.4f} "
                         f"for m+n <= 10, {secs:.1f}s < 60s")


def criterion_3():
    code, summary, out, secs = cli("clt", "z_pm1.json")
    rep = load(out, "clt.json")
    ok = code == 0 and 0.98 <= rep["sigma_hat"] <= 1.02 and rep["ks"] <= 0.015 and secs < 60
    return record(3, ok, f"sigma {rep['sigma_hat']:.5f} in [0.98, 1.02], KS {rep['ks']:.5f} <= 0.015, "
                         f"exit {code}, {secs:.1f}s < 60s")


def criterion_4():
    runs = [cli("tame", "f2_brooks.json"), cli("clt", "f2_brooks.json"),
            cli("clt", "f2_brooks.json", 1, F2_SHORT), cli("clt", "f2_tame.json"), cli("tame", "f2_tame.json")]
    secs = sum(r[3] for r in runs)
    tame_ab = load(runs[0][2], "tame.json")
    long, short = load(runs[1][2], "clt.json"), load(runs[2][2], "clt.json")
    tame_b = load(runs[3][2], "clt.json")
    samples = (runs[3][2] / "clt_samples.csv").read_text().splitlines()[2:]
    all_zero = all(float(line.split(",")[2]) == 0.0 for line in samples)
    ratio = long["sigma_hat"] / short["sigma_hat"]
    ok_a = (not tame_ab["tame"] and long["sigma_hat"] > 0.1 and 0.85 <= ratio <= 1.15 and long["ks"] <= 0.02)
    ok_b = all_zero and tame_b["sigma_hat"] == 0 and tame_b["verdict"] == "degenerate"
    ok = ok_a and ok_b and all(r[0] == 0 for r in runs) and secs < 600
    return record(4, ok, f"(a) {tame_ab['verdict']}, sigma {long['sigma_hat']:.4f} > 0.1, "
                         f"sigma(4096)/sigma(1024) = {ratio:.4f}, KS {long['ks']:.4f} <= 0.02; "
                         f"(b) {len(samples)} samples all zero: {all_zero}, sigma {tame_b['sigma_hat']}; {secs:.1f}s < 600s")


def criterion_5():
    t0 = time.perf_counter()
    rep = martingale_sandwich(PHI_AB, mc_approx(), 64, 100, K=64, seed=SEED)
    secs = time.perf_counter() - t0
    ok = rep.ok and len(rep.rows) == 100 and secs < 300
    return record(5, ok, f"max |phi(z_n) - n ell - increment sum| = {rep.max_deviation:.4f} <= "
                         f"3D+ + slack = {rep.bound:.4f} over {len(rep.rows)} trials, {secs:.1f}s < 300s")


def criterion_6():
    t0 = time.perf_counter()
    ap = mc_approx()
    rays = rays_2000()
    ident = cocycle_identity_check(ap, random_triples(F2, rays[:100], 2, seed=SEED), 128, seed=SEED)
    elements = F2.enumerate_ball(2) + sorted(F2.sphere(3), key=F2.sort_key)[:3]
    checks = [integral_representation_check(ap, g, rays, 128, seed=SEED) for g in elements]
    secs = time.perf_counter() - t0
    worst = max(checks, key=lambda c: c.discrepancy / c.combined_se if c.combined_se else 0.0)
    worst_z = worst.discrepancy / worst.combined_se if worst.combined_se else 0.0
    ok = ident.within_gaps() and all(c.passes() for c in checks) and secs < 600
    return record(6, ok, f"identity residual {ident.max_residual:.2e} <= summed gaps {ident.total_gap:.3f} "
                         f"(100 triples, L=128); integral representation {sum(c.passes() for c in checks)}/"
                         f"{len(checks)} within 3 SE (worst {worst_z:.2f} SE at {F2.format(worst.g)}), {secs:.1f}s < 600s")


@lru_cache(maxsize=None)
def _variance_estimates():
    clt = load(cli("clt", "f2_brooks.json")[2], "clt.json")
    t0 = time.perf_counter()
    mart = martingale_sigma(mc_approx(), 256, 10_000, seed=SEED)
    bvar = boundary_variance(mc_approx(), rays_2000(), 128, seed=SEED)
    secs = time.perf_counter() - t0
    return {"clt": (clt["sigma_hat"], clt["sigma_se"]), "martingale": (mart.sigma, mart.sigma_se),
            "boundary": (bvar.sigma, bvar.sigma_se)}, secs


def criterion_7():
    est, secs = _variance_estimates()
    ok = secs < 600
    parts = []
    for (na, (a, sa)), (nb, (b, sb)) in combinations(est.items(), 2):
        z = abs(a - b) / math.hypot(sa, sb)
        rel = abs(a - b) / min(a, b)
        ok = ok and z <= 3 and rel <= 0.10
        parts.append(f"{na}/{nb} {z:.2f} SE, {100 * rel:.1f}%")
    vals = ", ".join(f"{k} {v:.4f}+-{s:.4f}" for k, (v, s) in est.items())
    return record(7, ok, f"{vals}; {'; '.join(parts)}; {secs:.1f}s < 600s")


def criterion_8():
    t0 = time.perf_counter()
    freqs = cylinder_frequencies(sample_rays(SRW, 100_000, seed=SEED), 2)
    worst = max(abs(f.frequency - f.expected) / f.se for f in freqs)
    resid = max(r.residual for r in stationarity_check(SRW, 2))
    secs = time.perf_counter() - t0
    ok = all(f.within(3.0) for f in freqs) and resid <= 1e-12 and secs < 120
    return record(8, ok, f"{len(freqs)} cylinders, worst {worst:.2f} binomial SE <= 3, "
                         f"exact stationarity residual {resid:.1e} <= 1e-12, {secs:.1f}s < 120s")


def criterion_9():
    runs = [cli("lil", "z_pm1.json"), cli("lil", "f2_tame.json")]
    z, tame = load(runs[0][2], "lil.json"), load(runs[1][2], "lil.json")
    r = z["r_sqrt2"]
    nondecreasing = all(a <= b for a, b in zip(r, r[1:]))
    secs = max(x[3] for x in runs)
    ok = (all(x[0] == 0 for x in runs) and nondecreasing and 0.6 <= r[-1] <= 1.3
          and all(v == 0 for v in tame["r_plain"]) and secs < 60)
    return record(9, ok, f"r(1e6) = {r[-1]:.4f} in [0.6, 1.3] (sqrt2 normalization, {len(r)} checkpoints "
                         f"from {z['checkpoints'][0]}), running max nondecreasing: {nondecreasing}, "
                         f"tame curve all zero: {all(v == 0 for v in tame['r_plain'])}, {secs:.1f}s < 60s")


def _masked(path):
    doc = json.loads(path.read_text())
    doc.pop("wall_time_ms", None)
    return doc


def criterion_10():
    jobs = [("clt", "z_pm1.json", ()), ("clt", "f2_brooks.json", ()), ("clt", "f2_brooks.json", F2_SHORT),
            ("clt", "f2_tame.json", ()), ("tame", "f2_brooks.json", ()), ("tame", "f2_tame.json", ())]
    mismatches, compared = [], 0
    for sub, config, sets in jobs:
        base = cli(sub, config, 1, sets)[2]
        for t in (4, 16):
            out = cli(sub, config, t, sets)[2]
            for f in sorted(base.iterdir()):
                compared += 1
                other = out / f.name
                same = _masked(f) == _masked(other) if f.suffix == ".json" else f.read_bytes() == other.read_bytes()
                if not same:
                    mismatches.append(f"{config}:{sub}:{f.name}@{t}")
    ok = not mismatches
    return record(10, ok, f"{compared} output files compared across --threads 1/4/16 "
                          f"(CSV byte-for-byte, JSON with wall_time_ms masked); mismatches: {mismatches or 'none'}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_acceptance(criterion):
    ok, detail = criterion()
    assert ok, detail


if __name__ == "__main__":
    passed = sum(bool(c()[0]) for c in CRITERIA)
    print(f"{passed}/{len(CRITERIA)} criteria passed")
    sys.exit(0 if passed == len(CRITERIA) else 1)
