"""Random-walk trial engine and the CLT / LIL statistics harness.

Trial i draws its increments from ``stream(seed, "walk", i)``, so output is
a function of (seed, config) only; worker count changes scheduling, never
numbers.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr

from .group import Element, Group
from .measure import FiniteMeasure, is_symmetric
from .quasimorphism import BrooksQuasimorphism, Combination, Homomorphism, Quasimorphism
from .rng import stream

DEGENERACY_FLOOR = 1e-9
CHUNK = 1024


@dataclass
class WalkConfig:
    mu: FiniteMeasure
    phi: Quasimorphism
    n: int
    trials: int
    seed: int = 0
    ell: float | None = None  # supplied drift; None -> computed
    ell_error: float = 0.0
    checkpoints: list = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1 or self.trials < 1:
            raise ValueError("need n >= 1 and trials >= 1")
        self.mu.group.check_same(self.phi.group)


def _increment_letters(mu: FiniteMeasure):
    """Support atoms padded into an (atoms, width) int array; 0 = no letter."""
    atoms, _ = mu._table()
    width = max(1, max(len(a) for a in atoms))
    arr = np.zeros((len(atoms), width), dtype=np.int16)
    for i, a in enumerate(atoms):
        arr[i, : len(a)] = a
    return arr


def _reduce_batch(letters: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Freely reduce each row of a (B, T) letter array; returns (stack, lengths)."""
    B, T = letters.shape
    stack = np.zeros((B, T + 1), dtype=letters.dtype)
    length = np.zeros(B, dtype=np.int64)
    rows = np.arange(B)
    for t in range(T):
        x = letters[:, t]
        top = stack[rows, np.maximum(length - 1, 0)]
        cancel = (length > 0) & (top == -x) & (x != 0)
        push = (x != 0) & ~cancel
        length -= cancel
        pr = rows[push]
        stack[pr, length[pr]] = x[pr]
        length += push
    return stack, length


def _draw_indices(mu: FiniteMeasure, n: int, seed: int, trials) -> np.ndarray:
    return np.stack([mu.sample_indices(stream(seed, "walk", int(i)), n) for i in trials])


def _endpoints(cfg: WalkConfig, trials) -> list[Element]:
    G = cfg.mu.group
    idx = _draw_indices(cfg.mu, cfg.n, cfg.seed, trials)
    if G.kind == "free":
        inc = _increment_letters(cfg.mu)
        letters = inc[idx].reshape(len(trials), -1)
        stack, length = _reduce_batch(letters)
        return [tuple(row[:L].tolist()) for row, L in zip(stack, length)]
    atoms, _ = cfg.mu._table()
    vecs = np.array(atoms, dtype=np.int64)
    z = vecs[idx].sum(axis=1)
    return [tuple(r.tolist()) for r in z]


def run_walk(cfg: WalkConfig, trial: int, trajectory: bool = False):
    """(z_n, phi(z_n)) for one trial, optionally with the full path z_0..z_n."""
    G = cfg.mu.group
    idx = cfg.mu.sample_indices(stream(cfg.seed, "walk", int(trial)), cfg.n)
    atoms, _ = cfg.mu._table()
    z = G.identity()
    path = [z] if trajectory else None
    for i in idx:
        z = G.mul(z, atoms[i])
        if trajectory:
            path.append(z)
    out = {"z": z, "phi": cfg.phi(z)}
    if trajectory:
        out["path"] = path
    return out


def _chunk_values(cfg: WalkConfig, lo: int, hi: int) -> np.ndarray:
    zs = _endpoints(cfg, range(lo, hi))
    return np.array([cfg.phi(z) for z in zs], dtype=float)


def endpoint_values(cfg: WalkConfig, threads: int = 1, chunk: int = CHUNK) -> np.ndarray:
    """phi(z_n) for trials 0..M-1, assembled in trial order."""
    bounds = [(lo, min(lo + chunk, cfg.trials)) for lo in range(0, cfg.trials, chunk)]
    if threads <= 1:
        parts = [_chunk_values(cfg, lo, hi) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda b: _chunk_values(cfg, *b), bounds))
    return np.concatenate(parts)


# -- statistics -----------------------------------------------------------------

def ks_statistic(samples, sigma: float) -> float:
    """sup |F_emp - Phi(./sigma)| over the real line."""
    if sigma <= 0:
        raise ValueError("reference sigma must be positive")
    x = np.sort(np.asarray(samples, dtype=float))
    M = len(x)
    if M == 0:
        raise ValueError("no samples")
    F = ndtr(x / sigma)
    i = np.arange(1, M + 1)
    d_plus = np.max(i / M - F)
    d_minus = np.max(F - (i - 1) / M)
    return float(min(1.0, max(d_plus, d_minus, 0.0)))


def _stable_sum(values) -> float:
    return math.fsum(values)


@dataclass
class CltReport:
    n: int
    trials: int
    seed: int
    ell: float
    ell_error: float
    sigma_hat: float
    sigma_se: float
    mean: float
    second_moment: float
    ks: float | None
    ks_ell_band: float | None
    verdict: str
    config_hash: str = ""
    samples: np.ndarray | None = None
    phi_values: np.ndarray | None = None
    wall_time_ms: float = 0.0

    def summary(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("samples", "phi_values")}
        return d


def _sigma_from(x: np.ndarray) -> tuple[float, float, float]:
    m2 = _stable_sum((x * x).tolist()) / len(x)
    sigma = math.sqrt(m2)
    # delta method on the second moment
    if len(x) > 1 and sigma > 0:
        var_m2 = np.var(x * x, ddof=1) / len(x)
        se = math.sqrt(var_m2) / (2 * sigma)
    else:
        se = 0.0
    return sigma, se, m2


def clt_experiment(cfg: WalkConfig, threads: int = 1, floor: float = DEGENERACY_FLOOR,
                   ell_horizon: int = 8, config_hash: str = "") -> CltReport:
    """x_i = (phi(z_n) - n ell)/sqrt(n) over M trials; sigma_hat^2 = mean x_i^2."""
    t0 = time.perf_counter()
    ell, ell_err = cfg.ell, cfg.ell_error
    if ell is None:
        ell, ell_err = drift_for(cfg.phi, cfg.mu, ell_horizon)
    vals = endpoint_values(cfg, threads)
    x = (vals - cfg.n * ell) / math.sqrt(cfg.n)
    sigma, se, m2 = _sigma_from(x)
    mean = _stable_sum(x.tolist()) / len(x)
    if sigma <= floor or np.all(np.abs(x) <= floor):
        ks, band, verdict = None, None, "degenerate"
    else:
        ks = ks_statistic(x, sigma)
        band = math.sqrt(cfg.n) * ell_err / sigma
        verdict = "non-degenerate"
    wall = (time.perf_counter() - t0) * 1000.0
    return CltReport(cfg.n, cfg.trials, cfg.seed, ell, ell_err, sigma, se, mean, m2, ks, band, verdict,
                     config_hash, x, vals, wall)


def drift_for(phi: Quasimorphism, mu: FiniteMeasure, horizon: int = 8) -> tuple[float, float]:
    """(ell, certified error): exact 0 for symmetric mu, else a_N/N from exact powers."""
    if is_symmetric(mu):
        return 0.0, 0.0
    from .harmonic import distortion

    d = distortion(phi, mu, horizon)
    return d.ell, d.error


# -- law of the iterated logarithm ---------------------------------------------------

@dataclass
class LilCurve:
    checkpoints: list
    r_plain: list
    r_sqrt2: list
    n0: int
    ell: float
    seed: int


def trajectory_values(phi: Quasimorphism, mu: FiniteMeasure, N: int, seed: int) -> np.ndarray:
    """phi(z_n) for n = 0..N along one walk (stream (seed, "lil"))."""
    G = mu.group
    rng = stream(seed, "lil")
    idx = mu.sample_indices(rng, N)
    atoms, _ = mu._table()
    if G.kind == "free-abelian" and isinstance(phi, Homomorphism):
        steps = np.array([phi(a) for a in atoms])[idx]
        return np.concatenate([[0.0], np.cumsum(steps)])
    if G.kind == "free-abelian":
        vecs = np.array(atoms, dtype=np.int64)[idx]
        pos = np.vstack([np.zeros((1, G.rank), dtype=np.int64), np.cumsum(vecs, axis=0)])
        return np.array([phi(tuple(p)) for p in pos.tolist()])
    window = _window_function(phi)
    if window is None:
        out = np.empty(N + 1)
        z = G.identity()
        out[0] = phi(z)
        for t, i in enumerate(idx, 1):
            z = G.mul(z, atoms[i])
            out[t] = phi(z)
        return out
    width, f = window
    out = np.empty(N + 1)
    stack: list[int] = []
    contrib: list[float] = []  # contribution of the window ending at each position
    total = 0.0
    out[0] = phi(())
    base = out[0]
    for t, i in enumerate(idx, 1):
        for x in atoms[i]:
            if stack and stack[-1] == -x:
                stack.pop()
                total -= contrib.pop()
            else:
                stack.append(x)
                c = f(tuple(stack[-width:]))
                contrib.append(c)
                total += c
        out[t] = base + total
    return out


def _window_function(phi: Quasimorphism):
    """Express phi as a sum over windows ending at each letter, if possible."""
    if isinstance(phi, Homomorphism):
        lt = phi._letter
        return 1, lambda w: lt[w[-1]]
    if isinstance(phi, BrooksQuasimorphism):
        m = len(phi.word)
        w, wi = phi.word, phi.inverse_word
        return m, lambda s: (1.0 if s == w else 0.0) - (1.0 if s == wi else 0.0)
    if isinstance(phi, Combination):
        parts = [(c, _window_function(q)) for c, q in phi.terms]
        if any(p is None for _, p in parts):
            return None
        width = max(p[0] for _, p in parts)
        return width, lambda s: sum(c * f(s[-k:]) for c, (k, f) in parts)
    return None


def lil_track(phi: Quasimorphism, mu: FiniteMeasure, N: int, seed: int = 0, *, n0: int = 16,
              checkpoints=None, ell: float | None = None) -> LilCurve:
    """Running max of (phi(z_n) - n ell)/sqrt(n log log n) for n0 <= n <= checkpoint."""
    if n0 < 16:
        raise ValueError("n0 must be >= 16 so that log log n > 0")
    if ell is None:
        ell = drift_for(phi, mu)[0]
    if checkpoints is None:
        checkpoints = geometric_checkpoints(max(n0, 1000), N)
    vals = trajectory_values(phi, mu, N, seed)
    n = np.arange(n0, N + 1, dtype=float)
    denom = np.sqrt(n * np.log(np.log(n)))
    ratio = (vals[n0:] - n * ell) / denom
    running = np.maximum.accumulate(ratio)
    cps = [int(c) for c in checkpoints if n0 <= c <= N]
    r_plain = [float(max(running[c - n0], 0.0)) if ratio.size else 0.0 for c in cps]
    return LilCurve(cps, r_plain, [r / math.sqrt(2.0) for r in r_plain], n0, ell, seed)


def geometric_checkpoints(start: int, stop: int, per_decade: int = 4) -> list[int]:
    out = []
    k = 0
    while True:
        c = int(round(start * 10 ** (k / per_decade)))
        if c > stop:
            break
        if not out or c != out[-1]:
            out.append(c)
        k += 1
    if not out or out[-1] != stop:
        out.append(stop)
    return out


# -- aggregation -------------------------------------------------------------------------

class IncompatibleReports(ValueError):
    pass


def aggregate_report(reports: list[CltReport]) -> dict:
    """Pool CLT reports that share n and ell; sigma^2 pools as the weighted second moment."""
    if not reports:
        raise IncompatibleReports("nothing to aggregate")
    n, ell = reports[0].n, reports[0].ell
    for r in reports:
        if r.n != n or r.ell != ell:
            raise IncompatibleReports(f"cannot merge runs with n={r.n}, ell={r.ell} into n={n}, ell={ell}")
    M = sum(r.trials for r in reports)
    m2 = _stable_sum([r.second_moment * r.trials for r in reports]) / M
    mean = _stable_sum([r.mean * r.trials for r in reports]) / M
    sigma = math.sqrt(m2)
    if all(r.samples is not None for r in reports):
        x = np.concatenate([r.samples for r in reports])
        sigma_s, se, _ = _sigma_from(x)
        ks = ks_statistic(x, sigma) if sigma > DEGENERACY_FLOOR else None
    else:
        se = math.sqrt(_stable_sum([(r.sigma_se * r.trials) ** 2 for r in reports])) / M
        ks = None
    return {
        "runs": [{"seed": r.seed, "trials": r.trials, "config_hash": r.config_hash} for r in reports],
        "n": n, "trials": M, "ell": ell, "sigma_hat": sigma, "sigma_se": se, "mean": mean,
        "ks": ks, "verdict": "degenerate" if sigma <= DEGENERACY_FLOOR else "non-degenerate",
    }


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
