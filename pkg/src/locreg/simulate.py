"""Synthetic functional datasets: fBm, piecewise fBm, integrated fBm.

Curve sizes are Poisson; observation times are uniform draws or an
equispaced grid on [0, 1]; Gaussian noise is homoscedastic or follows a
piecewise/callable variance profile.  Every curve is generated from its own
RNG substream, so datasets are reproducible independently of generation
order or parallelism.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
import json
import math
import threading
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import CholeskyFailure, DataError, NegativeVariance

__all__ = [
    "SimulationSpec",
    "GroundTruthCurve",
    "sample_times",
    "fbm_at",
    "piecewise_fbm_at",
    "integrated_fbm_at",
    "add_noise",
    "simulate_curve",
    "make_dataset",
]

SETTINGS = ("fbm", "piecewise_fbm", "integrated_fbm")
SAMPLINGS = ("unif", "equi")

# segments are (right_edge, value) pairs partitioning (0, 1]
Segments = Tuple[Tuple[float, float], ...]


def _normalize_segments(raw) -> Segments:
    segs = tuple((float(b), float(v)) for b, v in raw)
    if not segs:
        raise DataError("segment list is empty")
    edges = [b for b, _ in segs]
    if any(e2 <= e1 for e1, e2 in zip(edges, edges[1:])):
        raise DataError("segment breakpoints must be strictly increasing")
    if edges[0] <= 0.0 or abs(edges[-1] - 1.0) > 1e-12:
        raise DataError("segments must partition [0, 1] (last breakpoint 1)")
    return segs


@dataclass(frozen=True)
class SimulationSpec:
    """The experiment tuple: process type, sample sizes, sampling law, noise.

    ``hurst`` is a scalar in (0, 1) or, for piecewise fBm, a sequence of
    (right_edge, H) segments; ``sigma2`` is likewise a constant noise
    variance or per-segment variances.
    """

    setting: str
    n_learning: int
    n_online: int
    mu: float
    sampling: str
    hurst: Union[float, Segments]
    sigma2: Union[float, Segments]
    seed: int
    grid_n: int = 1000

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise DataError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.sampling not in SAMPLINGS:
            raise DataError(f"sampling must be one of {SAMPLINGS}, got {self.sampling!r}")
        if self.n_learning < 1 or self.n_online < 0:
            raise DataError("need n_learning >= 1 and n_online >= 0")
        if self.mu < 9:
            raise DataError("mu must be >= 9")
        if isinstance(self.hurst, (tuple, list)):
            object.__setattr__(self, "hurst", _normalize_segments(self.hurst))
            if self.setting != "piecewise_fbm":
                raise DataError("segment-valued hurst requires setting 'piecewise_fbm'")
            if any(not 0.0 < h < 1.0 for _, h in self.hurst):
                raise DataError("every segment Hurst exponent must lie in (0, 1)")
        else:
            object.__setattr__(self, "hurst", float(self.hurst))
            if not 0.0 < self.hurst < 1.0:
                raise DataError("hurst must lie in (0, 1)")
            if self.setting == "piecewise_fbm":
                object.__setattr__(self, "hurst", ((1.0, float(self.hurst)),))
        if isinstance(self.sigma2, (tuple, list)):
            object.__setattr__(self, "sigma2", _normalize_segments(self.sigma2))
            if any(v < 0.0 for _, v in self.sigma2):
                raise NegativeVariance("segment noise variances must be >= 0")
        else:
            object.__setattr__(self, "sigma2", float(self.sigma2))
            if self.sigma2 < 0.0:
                raise NegativeVariance(f"sigma2 = {self.sigma2} < 0")
        if self.setting == "integrated_fbm" and self.grid_n < 1000:
            raise DataError("integrated fBm requires grid_n >= 1000")

    def to_dict(self) -> dict:
        def enc(v):
            return [[b, x] for b, x in v] if isinstance(v, tuple) else v

        return {
            "setting": self.setting,
            "n_learning": self.n_learning,
            "n_online": self.n_online,
            "mu": self.mu,
            "sampling": self.sampling,
            "hurst": enc(self.hurst),
            "sigma2": enc(self.sigma2),
            "seed": self.seed,
            "grid_n": self.grid_n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationSpec":
        d = dict(d)
        for key in ("hurst", "sigma2"):
            if isinstance(d.get(key), list):
                d[key] = tuple((float(b), float(v)) for b, v in d[key])
        return cls(**d)


@dataclass(frozen=True)
class GroundTruthCurve:
    """A noisy curve together with its noiseless values.

    ``x_true`` holds the true process at the observation times.  For risk
    evaluation at arbitrary points the curve can carry a dense equispaced
    grid of true values (linear interpolation in between) and/or exact true
    values at a list of requested evaluation points.
    """

    curve: "Curve"
    x_true: np.ndarray
    dense_times: Optional[np.ndarray] = None
    dense_values: Optional[np.ndarray] = None
    extra_t0s: Optional[np.ndarray] = None
    extra_values: Optional[np.ndarray] = None

    def truth_at(self, t0: float) -> float:
        """True process value at t0: exact where available, else dense interp."""
        if self.extra_t0s is not None:
            hit = np.nonzero(np.isclose(self.extra_t0s, t0, rtol=0.0, atol=1e-15))[0]
            if hit.size:
                return float(self.extra_values[hit[0]])
        hit = np.nonzero(self.curve.times == t0)[0]
        if hit.size:
            return float(self.x_true[hit[0]])
        if self.dense_times is not None:
            return float(np.interp(t0, self.dense_times, self.dense_values))
        raise DataError(f"no ground truth available at t0 = {t0}")


def sample_times(mu: float, sampling: str, rng: np.random.Generator) -> np.ndarray:
    """Poisson(mu) many observation times, conditioned on M >= 9 by rejection."""
    if mu < 9:
        raise DataError("mu must be >= 9")
    if sampling not in SAMPLINGS:
        raise DataError(f"unknown sampling {sampling!r}")
    m = int(rng.poisson(mu))
    while m < 9:
        m = int(rng.poisson(mu))
    if sampling == "equi":
        return np.linspace(0.0, 1.0, m)
    return np.sort(rng.uniform(0.0, 1.0, size=m))


# ---------------------------------------------------------------------------
# Fractional Brownian motion
# ---------------------------------------------------------------------------

_CHOL_CACHE: "OrderedDict[tuple, np.ndarray]" = OrderedDict()
_CHOL_CACHE_MAX = 128
_CHOL_LOCK = threading.Lock()


def _fbm_cholesky(times: np.ndarray, hurst: float) -> np.ndarray:
    """Lower Cholesky factor of the fBm covariance at strictly positive times.

    Factors are cached by (times, hurst); repeated grids (equispaced designs,
    the integrated-fBm master grid) amortize the O(M^3) factorization.
    """
    key = (times.tobytes(), float(hurst))
    with _CHOL_LOCK:
        if key in _CHOL_CACHE:
            _CHOL_CACHE.move_to_end(key)
            return _CHOL_CACHE[key]
    h2 = 2.0 * hurst
    s = times[:, None]
    t = times[None, :]
    cov = 0.5 * (s**h2 + t**h2 - np.abs(s - t) ** h2)
    jitter = 1e-12 * float(np.max(np.diag(cov)))
    last = None
    for attempt in range(10):
        try:
            bump = 0.0 if attempt == 0 else jitter * 10.0 ** (attempt - 1)
            chol = np.linalg.cholesky(cov + bump * np.eye(len(times)))
            break
        except np.linalg.LinAlgError as exc:
            last = exc
    else:
        raise CholeskyFailure(
            f"fBm covariance not positive definite after jitter retries: {last}"
        )
    with _CHOL_LOCK:
        _CHOL_CACHE[key] = chol
        while len(_CHOL_CACHE) > _CHOL_CACHE_MAX:
            _CHOL_CACHE.popitem(last=False)
    return chol


def fbm_at(times: np.ndarray, hurst: float, rng: np.random.Generator) -> np.ndarray:
    """Exact fractional Brownian motion draw at the given times; W(0) = 0.

    Covariance (s, t) -> (s^2H + t^2H - |t-s|^2H)/2, sampled jointly via the
    Cholesky factor on the deduplicated times.  The Brownian case H = 1/2 has
    independent increments and is drawn sequentially, which is the same law
    at O(M) cost.
    """
    times = np.asarray(times, dtype=float)
    if not 0.0 < hurst < 1.0:
        raise DataError(f"hurst = {hurst} outside (0, 1)")
    if times.size and (times.min() < 0.0 or times.max() > 1.0 + 1e-12):
        raise DataError("times must lie in [0, 1]")
    uniq, inverse = np.unique(times, return_inverse=True)
    pos = uniq[uniq > 0.0]
    vals = np.zeros(uniq.size)
    if pos.size:
        if hurst == 0.5:
            steps = np.diff(np.concatenate(([0.0], pos)))
            path = np.cumsum(rng.standard_normal(pos.size) * np.sqrt(steps))
        else:
            chol = _fbm_cholesky(pos, hurst)
            path = chol @ rng.standard_normal(pos.size)
        vals[uniq > 0.0] = path
    return vals[inverse]


def piecewise_fbm_at(
    times: np.ndarray, segments: Segments, rng: np.random.Generator
) -> np.ndarray:
    """Concatenated fBms with per-segment Hurst exponents, glued continuously.

    Each segment is an independent fBm simulated on segment-local time
    rescaled to [0, 1], offset so the path starts at the previous segment's
    terminal value.
    """
    segments = _normalize_segments(segments)
    times = np.asarray(times, dtype=float)
    out = np.empty(times.size)
    offset = 0.0
    lo = 0.0
    for hi, hurst in segments:
        mask = (times > lo) & (times <= hi) if lo > 0.0 else (times >= lo) & (times <= hi)
        local = (times[mask] - lo) / (hi - lo)
        # simulate the segment terminal value too, to anchor the next offset
        sim_t = np.concatenate((local, [1.0]))
        path = fbm_at(sim_t, hurst, rng)
        out[mask] = offset + path[:-1]
        offset += path[-1]
        lo = hi
    return out


def integrated_fbm_at(
    times: np.ndarray,
    hurst: float,
    rng: np.random.Generator,
    grid_n: int = 1000,
) -> np.ndarray:
    """Pathwise integral of an fBm, X_t = int_0^t W_H(s) ds.

    The integrand is simulated on a fine equispaced grid of grid_n + 1
    points, integrated with the cumulative trapezoid rule, and linearly
    interpolated to the requested times.  Local regularity is 1 + H.
    """
    if grid_n < 1000:
        raise DataError("grid_n must be >= 1000")
    times = np.asarray(times, dtype=float)
    grid = np.linspace(0.0, 1.0, grid_n + 1)
    w = fbm_at(grid, hurst, rng)
    x = cumulative_trapezoid(w, grid, initial=0.0)
    return np.interp(times, grid, x)


def _sigma2_profile(sigma_spec, x: np.ndarray, times: np.ndarray) -> np.ndarray:
    if callable(sigma_spec):
        s2 = np.asarray(sigma_spec(x, times), dtype=float)
        if s2.shape != times.shape:
            s2 = np.broadcast_to(s2, times.shape).astype(float)
    elif isinstance(sigma_spec, (tuple, list)):
        segs = _normalize_segments(sigma_spec)
        edges = np.array([b for b, _ in segs])
        vals = np.array([v for _, v in segs])
        s2 = vals[np.minimum(np.searchsorted(edges, times, side="left"), len(vals) - 1)]
    else:
        s2 = np.full(times.shape, float(sigma_spec))
    if np.any(s2 < 0.0):
        raise NegativeVariance("noise variance profile takes negative values")
    return s2


def add_noise(
    x_true: np.ndarray,
    times: np.ndarray,
    sigma_spec,
    rng: np.random.Generator,
) -> np.ndarray:
    """Y = x + sigma(x, t) * u with u ~ N(0, 1) i.i.d.

    ``sigma_spec`` is a constant variance, a (right_edge, variance) segment
    list, or a callable sigma^2(x, t) returning per-point variances.
    """
    x_true = np.asarray(x_true, dtype=float)
    times = np.asarray(times, dtype=float)
    s2 = _sigma2_profile(sigma_spec, x_true, times)
    return x_true + np.sqrt(s2) * rng.standard_normal(times.shape)


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------

def _true_path(spec: SimulationSpec, times: np.ndarray, rng) -> np.ndarray:
    if spec.setting == "fbm":
        return fbm_at(times, spec.hurst, rng)
    if spec.setting == "piecewise_fbm":
        return piecewise_fbm_at(times, spec.hurst, rng)
    return integrated_fbm_at(times, spec.hurst, rng, spec.grid_n)


def simulate_curve(
    spec: SimulationSpec,
    curve_id: str,
    rng: np.random.Generator,
    eval_t0s: Sequence[float] = (),
    dense: bool = False,
    dense_n: int = 2000,
) -> GroundTruthCurve:
    """Draw one curve: times, true path, noise; optionally extra truth points.

    The true process is simulated jointly at the union of observation times,
    requested evaluation points, and (optionally) a dense grid of
    dense_n + 1 equispaced points, so all truth values belong to one
    realization.
    """
    obs_t = sample_times(spec.mu, spec.sampling, rng)
    eval_t0s = np.unique(np.asarray(list(eval_t0s), dtype=float))
    parts = [obs_t, eval_t0s]
    if dense:
        dense_t = np.linspace(0.0, 1.0, dense_n + 1)
        parts.append(dense_t)
    union = np.unique(np.concatenate(parts))
    x_union = _true_path(spec, union, rng)

    def at(ts):
        return x_union[np.searchsorted(union, ts)]

    x_obs = at(obs_t)
    noisy = add_noise(x_obs, obs_t, spec.sigma2, rng)
    from .curves import Curve  # local import to avoid cycle at module load

    return GroundTruthCurve(
        curve=Curve(id=curve_id, times=obs_t, values=noisy),
        x_true=x_obs,
        dense_times=dense_t if dense else None,
        dense_values=at(dense_t) if dense else None,
        extra_t0s=eval_t0s if eval_t0s.size else None,
        extra_values=at(eval_t0s) if eval_t0s.size else None,
    )


def make_dataset(
    spec: SimulationSpec,
    eval_t0s: Sequence[float] = (),
    dense: bool = False,
    seed_seq: Optional[np.random.SeedSequence] = None,
):
    """Generate the learning and online sets of a simulation spec.

    Returns (learning, online) lists of GroundTruthCurve.  Each curve uses
    its own child of the spec's seed sequence, so regenerating any subset in
    any order (or in parallel) reproduces identical values.
    """
    root = seed_seq if seed_seq is not None else np.random.SeedSequence(spec.seed)
    children = root.spawn(spec.n_learning + spec.n_online)
    learning = [
        simulate_curve(spec, f"learn-{i:04d}", np.random.default_rng(children[i]),
                       eval_t0s=eval_t0s, dense=dense)
        for i in range(spec.n_learning)
    ]
    online = [
        simulate_curve(spec, f"online-{i:04d}",
                       np.random.default_rng(children[spec.n_learning + i]),
                       eval_t0s=eval_t0s, dense=dense)
        for i in range(spec.n_online)
    ]
    return learning, online
