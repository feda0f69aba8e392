"""Command-line entry point: ``quasiwalk <subcommand> --config run.json``.

Exit codes: 0 success, 2 configuration error, 3 capacity error, 4 a ``--check``
gate failed.  Errors go to stderr as one line of JSON.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import boundary as bd
from .config import SUBCOMMANDS, ConfigFieldError, ExperimentConfig, load_config, require
from .group import AlphabetError, CapacityError, Element
from .harmonic import (
    biharmonic_approx,
    distortion,
    monte_carlo_approx,
    residual_identity_gap,
    residuals,
    tameness_check,
)
from .martingale import increments_table, martingale_sandwich, martingale_sigma
from .montecarlo import (
    CltReport,
    IncompatibleReports,
    WalkConfig,
    aggregate_report,
    clt_experiment,
    geometric_checkpoints,
    lil_track,
    run_walk,
)
from .quasimorphism import ConfigError, defect_lower_bound

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_CHECK = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- output helpers ---------------------------------------------------------------

def _jsonable(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _num(x: float) -> str:
    return repr(float(x))


class Outputs:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.dir = Path(cfg.output_dir)
        self.written: list[str] = []

    def _path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.written.append(str(p))
        return p

    def json(self, name: str, obj: dict) -> None:
        body = {"config_hash": self.cfg.hash, "seed": self.cfg.seed, **obj}
        self._path(name).write_text(json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n")

    def csv(self, name: str, header: str, rows) -> None:
        lines = [f"# config_hash={self.cfg.hash} seed={self.cfg.seed}", header]
        lines += [",".join(_num(v) if isinstance(v, (float, np.floating)) else str(v) for v in r) for r in rows]
        self._path(name).write_text("\n".join(lines) + "\n")


def _fmt(G, g: Element) -> str:
    return G.format(g)


def _elements(G, sec: dict, name: str, default_radius: int = 2) -> list:
    if "elements" in sec:
        try:
            return [G.parse(str(s)) for s in sec["elements"]]
        except AlphabetError as e:
            raise ConfigFieldError(f"{name}.elements", str(e)) from None
    r = require(sec, name, "radius", int, default_radius, 0)
    return G.enumerate_ball(r)


# -- subcommands ------------------------------------------------------------------------

def cmd_walk(cfg, out, threads):
    G, mu, phi = cfg.build()
    sec = cfg.section("walk")
    wc = WalkConfig(mu, phi, require(sec, "walk", "n", int, 64, 1), require(sec, "walk", "trials", int, 10, 1),
                    cfg.seed)
    rows = []
    for i in range(wc.trials):
        r = run_walk(wc, i)
        rows.append((i, _fmt(G, r["z"]), float(r["phi"])))
    out.csv("walk.csv", "trial,z,phi_zn", rows)
    report = {"n": wc.n, "trials": wc.trials}
    out.json("walk.json", report)
    return report, {}


def cmd_clt(cfg, out, threads):
    G, mu, phi = cfg.build()
    sec = cfg.section("clt")
    ell = sec.get("ell")
    wc = WalkConfig(mu, phi, require(sec, "clt", "n", int, 1024, 1), require(sec, "clt", "trials", int, 1000, 1),
                    cfg.seed, None if ell is None else float(ell), float(sec.get("ell_error", 0.0)))
    rep = clt_experiment(wc, threads, floor=require(sec, "clt", "floor", float, 1e-9, 0.0),
                         ell_horizon=require(sec, "clt", "ell_horizon", int, 8, 1), config_hash=cfg.hash)
    out.csv("clt_samples.csv", "trial,phi_zn,x",
            ((i, float(v), float(x)) for i, (v, x) in enumerate(zip(rep.phi_values, rep.samples))))
    report = {"n": rep.n, "trials": rep.trials, "sigma_hat": rep.sigma_hat, "sigma_se": rep.sigma_se,
              "ks": rep.ks, "ks_ell_band": rep.ks_ell_band, "ell": rep.ell, "ell_err": rep.ell_error,
              "mean": rep.mean, "second_moment": rep.second_moment, "verdict": rep.verdict,
              "wall_time_ms": rep.wall_time_ms}
    out.json("clt.json", report)
    chk = sec.get("check", {})
    checks = {}
    if "sigma_range" in chk:
        lo, hi = chk["sigma_range"]
        checks["sigma_range"] = lo <= rep.sigma_hat <= hi
    if "ks_max" in chk:
        checks["ks_max"] = rep.ks is not None and rep.ks <= chk["ks_max"]
    if "expect" in chk:
        checks["verdict"] = rep.verdict == chk["expect"]
    if rep.verdict == "degenerate":
        checks["all_zero"] = bool(np.all(np.abs(rep.samples) <= 1e-9))
    else:
        checks["centered"] = abs(rep.mean) <= 3 * rep.sigma_hat / math.sqrt(rep.trials)
    return report, checks


def cmd_lil(cfg, out, threads):
    G, mu, phi = cfg.build()
    sec = cfg.section("lil")
    N = require(sec, "lil", "N", int, 10**6, 16)
    n0 = require(sec, "lil", "n0", int, 1000, 16)
    cps = sec.get("checkpoints") or geometric_checkpoints(n0, N, require(sec, "lil", "per_decade", int, 4, 1))
    curve = lil_track(phi, mu, N, cfg.seed, n0=n0, checkpoints=cps,
                      ell=None if "ell" not in sec else float(sec["ell"]))
    out.csv("lil.csv", "N,r_plain,r_sqrt2", zip(curve.checkpoints, curve.r_plain, curve.r_sqrt2))
    report = {"N": N, "n0": n0, "ell": curve.ell, "checkpoints": curve.checkpoints,
              "r_plain": curve.r_plain, "r_sqrt2": curve.r_sqrt2}
    out.json("lil.json", report)
    chk = sec.get("check", {})
    checks = {"nondecreasing": all(a <= b for a, b in zip(curve.r_plain, curve.r_plain[1:]))}
    if "band" in chk:
        lo, hi = chk["band"]
        checks["band"] = bool(curve.r_sqrt2) and lo <= curve.r_sqrt2[-1] <= hi
    if chk.get("expect") == "zero":
        checks["zero"] = all(r == 0 for r in curve.r_plain)
    return report, checks


def cmd_distortion(cfg, out, threads):
    G, mu, phi = cfg.build()
    sec = cfg.section("distortion")
    N = require(sec, "distortion", "N", int, 10, 1)
    d = distortion(phi, mu, N, cfg.mode, samples=require(sec, "distortion", "samples", int, 4000, 2),
                   seed=cfg.seed, tau=cfg.tau, defect=sec.get("defect"))
    gap = d.subadditivity_gap()
    out.csv("distortion.csv", "n,a_n", ((n, float(a)) for n, a in enumerate(d.a)))
    report = {"N": N, "mode": d.mode, "ell": d.ell, "ell_error": d.error, "defect_assumed": d.defect,
              "subadditivity_gap": gap, "truncation": d.truncation, "a": d.a}
    out.json("distortion.json", report)
    checks = {"subadditivity": gap <= d.defect + 1e-9} if d.mode == "exact" else {}
    return report, checks


def cmd_defect(cfg, out, threads):
    G, mu, phi = cfg.build()
    sec = cfg.section("defect")
    lb = defect_lower_bound(phi, require(sec, "defect", "radius", int, 2, 0), require(sec, "defect", "pairs", int, 0, 0),
                            cfg.seed, require(sec, "defect", "pair_length", int, 12, 0))
    report = {"lower_bound": lb, "assumed_bound": phi.defect_bound}
    out.json("defect.json", report)
    checks = {"below_assumed": phi.defect_bound is None or lb <= phi.defect_bound + 1e-9}
    return report, checks


def cmd_harmonic(cfg, out, threads):
    G, mu, phi = cfg.build()
    sec = cfg.section("harmonic")
    N = require(sec, "harmonic", "N", int, 8, 1)
    ev = _elements(G, sec, "harmonic")
    ap = biharmonic_approx(phi, mu, N, ev, cfg.mode, depth=require(sec, "harmonic", "depth", int, 6, 0),
                           defect=sec.get("defect"), samples=require(sec, "harmonic", "samples", int, 32, 2),
                           seed=cfg.seed, tau=cfg.tau, threads=threads)
    rep = residuals(ap)
    rows = [{"g": _fmt(G, r.g), "right": r.right, "left": r.left, "right_se": r.right_se, "left_se": r.left_se}
            for r in rep.rows]
    report = {"ell": ap.ell, "ell_error": ap.distortion.error, "N": N, "mode": ap.mode, "residuals": rows,
              "defect_assumed": ap.defect_hat, "slack": ap.residual_slack,
              "homogenization_tolerance": ap.homogenization_tolerance,
              "max_right": rep.max_right(), "max_left": rep.max_left()}
    checks = {}
    if ap.mode == "exact":
        gap = residual_identity_gap(ap)
        report["identity_gap"] = gap
        checks["identity"] = gap <= 1e-9
        checks["right_bound"] = rep.max_right() <= ap.residual_slack + 1e-12
    else:
        checks["right_bound"] = all(abs(r.right) <= ap.residual_slack + 3 * r.right_se for r in rep.rows)
    out.json("harmonic.json", report)
    order = sorted(ap.values, key=G.sort_key)
    out.csv("harmonic.csv", "g,phi_tilde,se",
            ((_fmt(G, g), float(ap.values[g]), float(ap.value_se.get(g, 0.0))) for g in order))
    return report, checks


def cmd_tame(cfg, out, threads):
    G, mu, phi = cfg.build()
    sec = cfg.section("tame")
    v = tameness_check(phi, mu, require(sec, "tame", "horizon", int, 64, 1),
                       require(sec, "tame", "threshold", float, 3.0, 0.0),
                       support_cap=require(sec, "tame", "support_cap", int, 200_000, 1))
    report = {"verdict": str(v), "tame": v.tame, "horizon": v.horizon, "constant": v.constant,
              "exact_horizon": v.exact_horizon, "threshold": v.threshold, "ell": v.ell,
              "witness": None if v.witness is None else
              {"n": v.witness[0], "g": _fmt(G, v.witness[1]), "value": v.witness[2]}}
    out.json("tame.json", report)
    out.csv("tame.csv", "n,s_n", enumerate(float(s) for s in v.curve))
    chk = sec.get("check", {})
    checks = {}
    if "expect" in chk:
        checks["verdict"] = (v.tame and chk["expect"] == "tame") or (not v.tame and chk["expect"] == "non-tame")
    return report, checks


def _approx_for(cfg, phi, mu, sec, name, N_default):
    N = require(sec, name, "N", int, N_default, 1)
    depth = require(sec, name, "depth", int, 6, 0)
    if cfg.mode == "exact":
        return biharmonic_approx(phi, mu, N, [mu.group.identity()], "exact", depth=depth,
                                 defect=sec.get("defect"), tau=cfg.tau)
    return monte_carlo_approx(phi, mu, N, depth=depth, defect=sec.get("defect"),
                              samples=require(sec, name, "draws", int, 1, 1), seed=cfg.seed,
                              ell=sec.get("ell"))


def cmd_martingale(cfg, out, threads):
    G, mu, phi = cfg.build()
    sec = cfg.section("martingale")
    ap = _approx_for(cfg, phi, mu, sec, "martingale", 256)
    rep = martingale_sigma(ap, require(sec, "martingale", "K", int, 256, 1),
                           require(sec, "martingale", "M", int, 10_000, 1), seed=cfg.seed, keep=True)
    report = rep.summary()
    report["N"] = ap.N
    checks = {"centered": rep.centered()}
    if "sandwich" in sec:
        sw = sec["sandwich"]
        s = martingale_sandwich(phi, ap, int(sw.get("n", 64)), int(sw.get("trials", 100)),
                                K=int(sw.get("K", 64)), seed=cfg.seed, cesaro_draws=int(sw.get("draws", 16)))
        report["sandwich"] = {"n": s.n, "trials": len(s.rows), "max_deviation": s.max_deviation,
                              "bound": s.bound, "defect": s.defect, "slack": s.slack}
        checks["sandwich"] = s.ok
    chk = sec.get("check", {})
    if "sigma_range" in chk:
        lo, hi = chk["sigma_range"]
        checks["sigma_range"] = lo <= rep.sigma <= hi
    out.json("martingale.json", report)
    out.csv("martingale.csv", "index,delta,gap", increments_table(rep))
    return report, checks


def cmd_boundary(cfg, out, threads):
    G, mu, phi = cfg.build()
    sec = cfg.section("boundary")
    ap = _approx_for(cfg, phi, mu, sec, "boundary", 256)
    L = require(sec, "boundary", "L", int, 128, 1)
    M = require(sec, "boundary", "rays", int, 2000, 2)
    mode = sec.get("ray_mode", "hitting")
    window = require(sec, "boundary", "window", int, bd.DEFAULT_WINDOW, 1)
    rays = bd.sample_rays(mu, M, mode, seed=cfg.seed, window=window)
    checks = {}
    report = {"N": ap.N, "L": L, "rays": M, "ray_mode": mode, "window": window}

    n_tri = require(sec, "boundary", "triples", int, 100, 0)
    if n_tri:
        tri_rays = bd.sample_rays(mu, n_tri, mode, seed=cfg.seed, window=window, label="triple-ray")
        ident = bd.cocycle_identity_check(ap, bd.random_triples(G, tri_rays, require(sec, "boundary", "triple_radius",
                                                                                    int, 2, 0), cfg.seed),
                                          L, seed=cfg.seed)
        report["identity"] = {"max_residual": ident.max_residual, "total_gap": ident.total_gap,
                              "within_gaps": ident.within_gaps()}
        checks["identity"] = ident.within_gaps()

    csv_rows = []
    intrep = []
    for g in _elements(G, sec, "boundary"):
        c = bd.integral_representation_check(ap, g, rays, max(L, len(g)), seed=cfg.seed)
        intrep.append({"g": _fmt(G, g), "mean": c.mean, "se": c.se, "reference": c.reference,
                       "reference_se": c.reference_se, "discrepancy": c.discrepancy, "max_gap": c.max_gap,
                       "max_excursion": c.max_excursion, "passes": c.passes()})
        csv_rows += [(_fmt(G, g), i, a, gp) for i, (a, gp) in enumerate(zip(c.values, c.gaps))]
    report["integral_representation"] = intrep
    if intrep:
        checks["integral_representation"] = all(r["passes"] for r in intrep)

    vr = require(sec, "boundary", "variance_rays", int, 0, 0)
    if vr:
        var = bd.boundary_variance(ap, bd.sample_rays(mu, vr, mode, seed=cfg.seed, window=window, label="var-ray"),
                                   L, seed=cfg.seed)
        report["variance"] = {"sigma2": var.sigma2, "se": var.se, "sigma": var.sigma, "sigma_se": var.sigma_se}

    fr = require(sec, "boundary", "frequency_rays", int, 0, 0)
    if fr and mode == "hitting":
        freqs = bd.cylinder_frequencies(bd.sample_rays(mu, fr, mode, seed=cfg.seed, label="freq-ray"), 2)
        report["cylinders"] = [{"word": _fmt(G, f.word), "frequency": f.frequency, "expected": f.expected,
                                "se": f.se} for f in freqs]
        checks["cylinders"] = all(f.within() for f in freqs)
    if sec.get("stationarity", False) and mode == "hitting":
        st = bd.stationarity_check(mu, 3)
        worst = max(r.residual for r in st)
        report["stationarity_max_residual"] = worst
        checks["stationarity"] = worst <= 1e-12
    out.json("boundary.json", report)
    out.csv("boundary.csv", "g,ray,alpha,gap", csv_rows)
    return report, checks


def cmd_rn_kernel(cfg, out, threads):
    G, mu, phi = cfg.build()
    sec = cfg.section("rn-kernel")
    ap = _approx_for(cfg, phi, mu, sec, "rn-kernel", 256)
    rows = []
    for g in _elements(G, sec, "rn-kernel", 1):
        k = bd.rn_kernel_check(ap, g, require(sec, "rn-kernel", "rays", int, 2000, 2),
                               K=require(sec, "rn-kernel", "K", int, 16, 1),
                               L=require(sec, "rn-kernel", "L", int, 128, 1), seed=cfg.seed)
        rows.append({"g": _fmt(G, g), "reconstruction": k.reconstruction, "se": k.se, "target": k.target,
                     "target_se": k.target_se, "phi_hat": k.phi_hat, "discrepancy": k.discrepancy,
                     "homogenization_gap": k.homogenization_gap, "kernel_mean": k.kernel_mean,
                     "passes": k.passes()})
    report = {"N": ap.N, "checks": rows}
    out.json("rn_kernel.json", report)
    return report, {"reconstruction": all(r["passes"] for r in rows)}


def cmd_report(cfg, out, threads):
    sec = cfg.section("report")
    inputs = sec.get("inputs")
    if not inputs:
        raise ConfigFieldError("report.inputs", "missing or empty")
    reps = []
    for p in inputs:
        try:
            d = json.loads(Path(p).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigFieldError("report.inputs", f"{p}: {e}") from None
        reps.append(CltReport(d["n"], d["trials"], d["seed"], d["ell"], d.get("ell_err", 0.0), d["sigma_hat"],
                              d.get("sigma_se", 0.0), d.get("mean", 0.0), d.get("second_moment", d["sigma_hat"] ** 2),
                              d.get("ks"), d.get("ks_ell_band"), d["verdict"], d.get("config_hash", "")))
    try:
        agg = aggregate_report(reps)
    except IncompatibleReports as e:
        raise ConfigFieldError("report.inputs", str(e)) from None
    out.json("report.json", agg)
    return agg, {}


COMMANDS = {
    "walk": cmd_walk, "clt": cmd_clt, "lil": cmd_lil, "distortion": cmd_distortion, "defect": cmd_defect,
    "harmonic": cmd_harmonic, "tame": cmd_tame, "martingale": cmd_martingale, "boundary": cmd_boundary,
    "rn-kernel": cmd_rn_kernel, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="quasiwalk", description="Quasimorphisms along random walks.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--check", action="store_true", help="exit 4 if an acceptance gate fails")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", help="override outputs.dir")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. clt.n=1024")
    return p


def _fail(code: int, kind: str, message: str, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, default=str) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail(EXIT_CONFIG, "usage", str(e), usage=parser.format_usage().strip())
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"outputs.dir={json.dumps(args.out)}")
    try:
        cfg = load_config(args.config, overrides)
        out = Outputs(cfg)
        t0 = time.perf_counter()
        report, checks = COMMANDS[args.subcommand](cfg, out, max(1, args.threads))
    except CapacityError as e:
        return _fail(EXIT_CAPACITY, "capacity", str(e))
    except ConfigFieldError as e:
        return _fail(EXIT_CONFIG, "config", str(e), field=e.where)
    except (ConfigError, AlphabetError, bd.ModeError, bd.UnsupportedGroupError, ValueError) as e:
        return _fail(EXIT_CONFIG, "config", str(e))
    summary = {"subcommand": args.subcommand, "config_hash": cfg.hash, "seed": cfg.seed,
               "outputs": out.written, "checks": checks,
               "elapsed_ms": round((time.perf_counter() - t0) * 1000.0, 3)}
    print(json.dumps(summary, default=_jsonable))
    if args.check:
        failed = sorted(k for k, ok in checks.items() if not ok)
        if failed:
            return _fail(EXIT_CHECK, "check-failed", f"{len(failed)} gate(s) failed", failed=failed)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
