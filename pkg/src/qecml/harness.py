"""
Experiment harness: parameter sweeps, bootstrap error bars, threshold crossings
and slope fits.

Randomness is split per ``(distance, p index, chunk)`` from the master seed, so
a sweep produces the same table whatever the number of worker processes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .circuit import Schedule, build_circuit
from .code import SurfaceCode
from .ml import MLDecoder, cached_kernel, model_hash, sector
from .mwpm import MWPMDecoder
from .noise import IndependentXZ, NoiseModel, Phenomenological, TwirledAmpDamp, WangFowler, avg_xy_rate
from .sim import FrameSimulator, run_trials

DECODERS = ("mwpm", "mlcln-full", "mlcln-marginal", "ml-phenomenological")
MODELS = ("wang_fowler", "independent_xz", "phenomenological", "twirled_amp_damp")
CSV_HEADER = ("distance", "p", "decoder", "mean_tL", "ci_lo", "ci_hi", "trials", "censored", "seed")
CENSOR_LIMIT = 0.05
# largest distance each decoder is run at on a desk machine
MAX_DISTANCE = {"mwpm": 99, "mlcln-full": 3, "mlcln-marginal": 5, "ml-phenomenological": 5}


class ConfigError(ValueError):
    pass


class NoCrossing(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    distances: tuple[int, ...]
    p_grid: tuple[float, ...]
    decoder: str = "mwpm"
    model: str = "wang_fowler"
    model_params: Mapping = field(default_factory=dict)
    schedule: str = "SN"
    steps: int = 6
    rate_scale: float = 1.0
    trials: int = 1000
    max_cycles: int = 10 ** 6
    seed: int = 0
    out: str = "results.csv"
    chunk: int = 250
    prune: float = 0.0
    kernel_cache: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "distances", tuple(int(d) for d in self.distances))
        object.__setattr__(self, "p_grid", tuple(float(p) for p in self.p_grid))
        object.__setattr__(self, "model_params", dict(self.model_params))
        validate_config(self)

    @classmethod
    def from_dict(cls, raw: Mapping) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"distances", "p_grid"} - set(raw)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        try:
            return cls(**raw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["distances"] = list(self.distances)
        d["p_grid"] = list(self.p_grid)
        return d


def validate_config(cfg: ExperimentConfig) -> None:
    if not cfg.distances or any(d < 2 for d in cfg.distances):
        raise ConfigError(f"distances must be >= 2, got {list(cfg.distances)}")
    if not cfg.p_grid or any(not 0 < p < 1 for p in cfg.p_grid):
        raise ConfigError(f"p values must lie in (0, 1), got {list(cfg.p_grid)}")
    if cfg.trials < 1 or cfg.max_cycles < 1 or cfg.chunk < 1:
        raise ConfigError("trials, max_cycles and chunk must be >= 1")
    if cfg.decoder not in DECODERS:
        raise ConfigError(f"decoder must be one of {DECODERS}, got {cfg.decoder!r}")
    if cfg.model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {cfg.model!r}")
    if cfg.schedule not in (s.value for s in Schedule):
        raise ConfigError(f"schedule must be SN or CCC, got {cfg.schedule!r}")
    if cfg.steps not in (6, 8):
        raise ConfigError(f"steps must be 6 or 8, got {cfg.steps}")
    if cfg.rate_scale <= 0:
        raise ConfigError("rate_scale must be positive")
    too_big = [d for d in cfg.distances if d > MAX_DISTANCE[cfg.decoder]]
    if too_big:
        raise ConfigError(f"{cfg.decoder} is limited to d <= {MAX_DISTANCE[cfg.decoder]} "
                          f"(its posterior does not fit in memory beyond that); got {too_big}")


def make_model(name: str, p: float, params: Mapping | None = None) -> NoiseModel:
    """Noise model at grid value ``p``.

    For ``twirled_amp_damp`` the grid value is the damping probability of a
    single-qubit gate (20 µs by default).
    """
    params = dict(params or {})
    if name == "wang_fowler":
        return WangFowler(p, **params)
    if name == "independent_xz":
        return IndependentXZ(p, **params)
    if name == "phenomenological":
        return Phenomenological(p, **params)
    if name == "twirled_amp_damp":
        return TwirledAmpDamp.from_gamma(p, **params)
    raise ConfigError(f"unknown model {name!r}")


# most recent kernels only: a d=5 sector kernel is a few hundred MB
_RECENT: dict[str, object] = {}


def _kernel(cache_dir, code, circuit, model, name):
    h = model_hash(circuit, model, sector(code, name))
    if h not in _RECENT:
        if len(_RECENT) >= 2:
            _RECENT.pop(next(iter(_RECENT)))
        _RECENT[h] = cached_kernel(cache_dir, code, circuit, model, name)
    return _RECENT[h]


def make_decoder(cfg: ExperimentConfig, code: SurfaceCode, circuit, model: NoiseModel):
    if cfg.decoder == "mwpm":
        return MWPMDecoder(code)
    belief = model.scaled(cfg.rate_scale) if cfg.rate_scale != 1.0 else model
    tracking = {"mlcln-full": "full", "mlcln-marginal": "marginal"}.get(
        cfg.decoder, "full" if code.distance <= 3 else "marginal")
    names = ("full",) if tracking == "full" else ("X", "Z")
    kernels = {nm: _kernel(cfg.kernel_cache, code, circuit, belief, nm) for nm in names}
    return MLDecoder(code, circuit, belief, tracking=tracking, phenomenological=cfg.decoder == "ml-phenomenological",
                     prune=cfg.prune, kernels=kernels)


# -- statistics -----------------------------------------------------------------


def bootstrap_ci(samples: Sequence[float], B: int = 1000, level: float = 0.95,
                 rng: np.random.Generator | int | None = None) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("bootstrap needs at least two samples")
    rng = np.random.default_rng(rng)
    means = np.empty(B)
    step = max(1, 2_000_000 // x.size)
    for lo in range(0, B, step):
        hi = min(B, lo + step)
        means[lo:hi] = x[rng.integers(0, x.size, (hi - lo, x.size))].mean(axis=1)
    alpha = (1 - level) / 2
    lo, hi = np.quantile(means, [alpha, 1 - alpha])
    mean = x.mean()
    return float(min(lo, mean)), float(max(hi, mean))


@dataclass(frozen=True)
class PointResult:
    distance: int
    p: float
    decoder: str
    mean_tL: float
    ci_lo: float
    ci_hi: float
    trials: int
    censored: int
    seed: int
    wall_time: float = 0.0
    avg_xy_rate: float = float("nan")

    @property
    def usable(self) -> bool:
        return self.censored < CENSOR_LIMIT * self.trials and math.isfinite(self.mean_tL)

    def row(self) -> list:
        return [self.distance, repr(self.p), self.decoder, repr(self.mean_tL), repr(self.ci_lo), repr(self.ci_hi),
                self.trials, self.censored, self.seed]


def summarise(t_L: np.ndarray, censored: np.ndarray, rng: np.random.Generator) -> tuple[float, float, float]:
    """Mean and CI of uncensored lifetimes (censored runs are reported, not averaged in)."""
    done = t_L[~censored].astype(float)
    if done.size == 0:
        return float("nan"), float("nan"), float("nan")
    if done.size == 1:
        return float(done[0]), float(done[0]), float(done[0])
    lo, hi = bootstrap_ci(done, rng=rng)
    return float(done.mean()), lo, hi


# -- sweeps -----------------------------------------------------------------------


def _chunk_seed(seed: int, d: int, p_idx: int, chunk: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(d, p_idx, chunk))


def _run_chunk(args) -> tuple[np.ndarray, np.ndarray]:
    cfg, d, p_idx, chunk, size = args
    code = SurfaceCode(d)
    circuit = build_circuit(code, cfg.schedule, cfg.steps)
    model = make_model(cfg.model, cfg.p_grid[p_idx], cfg.model_params)
    decoder = make_decoder(cfg, code, circuit, model)
    rng = np.random.default_rng(_chunk_seed(cfg.seed, d, p_idx, chunk))
    return run_trials(FrameSimulator(circuit, model), decoder, size, cfg.max_cycles, rng)


def run_point(cfg: ExperimentConfig, d: int, p_idx: int, workers: int = 1) -> tuple[PointResult, np.ndarray, np.ndarray]:
    """All trials of one grid point; returns the summary and the raw ``(t_L, censored)`` arrays."""
    t0 = time.perf_counter()
    sizes = [min(cfg.chunk, cfg.trials - lo) for lo in range(0, cfg.trials, cfg.chunk)]
    jobs = [(cfg, d, p_idx, i, n) for i, n in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    t_L = np.concatenate([a for a, _ in parts])
    cens = np.concatenate([c for _, c in parts])
    rng = np.random.default_rng(_chunk_seed(cfg.seed, d, p_idx, 1 << 20))
    mean, lo, hi = summarise(t_L, cens, rng)
    code = SurfaceCode(d)
    circuit = build_circuit(code, cfg.schedule, cfg.steps)
    xy = avg_xy_rate(make_model(cfg.model, cfg.p_grid[p_idx], cfg.model_params), circuit)
    res = PointResult(d, cfg.p_grid[p_idx], cfg.decoder, mean, lo, hi, cfg.trials, int(cens.sum()), cfg.seed,
                      time.perf_counter() - t0, xy)
    return res, t_L, cens


def run_sweep(cfg: ExperimentConfig, workers: int = 1, log=None) -> list[PointResult]:
    results = []
    for d in cfg.distances:
        for i in range(len(cfg.p_grid)):
            res, _, _ = run_point(cfg, d, i, workers)
            if log:
                log(f"d={d} p={res.p:g} {cfg.decoder}: <t_L>={res.mean_tL:.4g} "
                    f"[{res.ci_lo:.4g}, {res.ci_hi:.4g}] censored={res.censored} ({res.wall_time:.1f}s)")
            results.append(res)
    return results


def kernel_hashes(cfg: ExperimentConfig) -> dict[str, str]:
    """Content hashes of every kernel an ML sweep uses (empty for matching)."""
    if cfg.decoder == "mwpm":
        return {}
    out = {}
    for d in cfg.distances:
        code = SurfaceCode(d)
        circuit = build_circuit(code, cfg.schedule, cfg.steps)
        for i, p in enumerate(cfg.p_grid):
            dec = make_decoder(cfg, code, circuit, make_model(cfg.model, p, cfg.model_params))
            for nm, K in dec.kernels.items():
                out[f"d={d},p={p!r},sector={nm}"] = K.content_hash()
    return out


def write_results(results: Iterable[PointResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in results:
            w.writerow(r.row())


def read_results(path: str | Path) -> list[PointResult]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {list(rows[0])}")
    return [PointResult(int(r["distance"]), float(r["p"]), r["decoder"], float(r["mean_tL"]), float(r["ci_lo"]),
                        float(r["ci_hi"]), int(r["trials"]), int(r["censored"]), int(r["seed"])) for r in rows]


def write_manifest(cfg: ExperimentConfig, results: Sequence[PointResult], path: str | Path,
                   kernels: Mapping[str, str] | None = None) -> None:
    body = {
        "config": cfg.to_dict(),
        "config_sha1": hashlib.sha1(json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest(),
        "kernels": dict(kernels or {}),
        "points": [{"distance": r.distance, "p": r.p, "avg_xy_rate": r.avg_xy_rate, "usable": r.usable,
                    "wall_time": r.wall_time} for r in results],
    }
    Path(path).write_text(json.dumps(body, indent=2) + "\n")


# -- thresholds and slopes -----------------------------------------------------------


@dataclass(frozen=True)
class Curve:
    p: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_points(cls, points: Sequence[PointResult]) -> Curve:
        pts = sorted((r for r in points if r.usable), key=lambda r: r.p)
        return cls(*(np.array(v, float) for v in zip(*[(r.p, r.mean_tL, r.ci_lo, r.ci_hi) for r in pts])))


@dataclass(frozen=True)
class Crossing:
    p_c: float
    lo: float
    hi: float
    distances: tuple[int, int]


def _first_crossing(x: np.ndarray, f: np.ndarray) -> float | None:
    for i in range(len(x) - 1):
        if f[i] > 0 >= f[i + 1] or f[i] >= 0 > f[i + 1]:
            if f[i] == f[i + 1]:
                return float(x[i])
            return float(x[i] - f[i] * (x[i + 1] - x[i]) / (f[i + 1] - f[i]))
    return None


def crossing(small: Curve, big: Curve, distances: tuple[int, int] = (0, 0)) -> Crossing:
    """Crossing of two ``log <t_L>`` curves, linear in ``log p`` on their common grid points."""
    common = np.intersect1d(small.p, big.p)
    if common.size < 2:
        raise NoCrossing("curves share fewer than two p values")
    si = np.searchsorted(small.p, common)
    bi = np.searchsorted(big.p, common)
    x = np.log(common)
    f = np.log(big.mean[bi]) - np.log(small.mean[si])
    xc = _first_crossing(x, f)
    if xc is None:
        raise NoCrossing("no crossing in range")
    # bracket from the confidence intervals: most and least favourable orderings
    f_lo = np.log(big.lo[bi]) - np.log(small.hi[si])
    f_hi = np.log(big.hi[bi]) - np.log(small.lo[si])
    a = _first_crossing(x, f_lo)
    b = _first_crossing(x, f_hi)
    lo = math.exp(a) if a is not None else float(common[0])
    hi = math.exp(b) if b is not None else float(common[-1])
    pc = math.exp(xc)
    return Crossing(pc, min(lo, hi, pc), max(lo, hi, pc), distances)


def estimate_threshold(curves: Mapping[int, Curve]) -> tuple[Crossing, list[Crossing]]:
    """Crossing of the two largest distances plus every adjacent pairwise crossing (drift)."""
    ds = sorted(curves)
    if len(ds) < 2:
        raise NoCrossing("need at least two distances")
    pairwise = []
    for a, b in zip(ds, ds[1:]):
        try:
            pairwise.append(crossing(curves[a], curves[b], (a, b)))
        except NoCrossing:
            pass
    main = crossing(curves[ds[-2]], curves[ds[-1]], (ds[-2], ds[-1]))
    return main, pairwise


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    n: int


def fit_slope(p: Sequence[float], rate: Sequence[float]) -> SlopeFit:
    """Least-squares slope of ``log(rate)`` against ``log(p)``."""
    p = np.asarray(p, float)
    rate = np.asarray(rate, float)
    if p.size < 3:
        raise ValueError("slope fit needs at least three points")
    if (rate <= 0).any() or (p <= 0).any():
        raise ValueError("rates and p values must be positive")
    fit = stats.linregress(np.log(p), np.log(rate))
    return SlopeFit(float(fit.slope), float(fit.stderr), float(fit.intercept), int(p.size))


def slope_from_points(points: Sequence[PointResult], pmax: float | None = None) -> SlopeFit:
    pts = [r for r in points if r.usable and (pmax is None or r.p <= pmax)]
    return fit_slope([r.p for r in pts], [1.0 / r.mean_tL for r in pts])
