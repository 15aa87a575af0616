"""Curve data model, observation windows and sample-level summaries.

A curve is a set of noisy observations (t, y) with t in [0, 1], kept sorted
by time.  From a sample of curves we derive the mean number of observations
mu_hat, the data-driven window size k0_hat and, around any point t0, the
per-curve windows made of the k0 observation times closest to t0.
"""

from dataclasses import dataclass, field
import csv
import io
import json
import math
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DegenerateMu, EmptySample, FormatError

__all__ = [
    "Curve",
    "FunctionalSample",
    "Window",
    "summarize",
    "data_driven_k0",
    "choose_k",
    "window_at",
    "gather_windows",
    "load_curves_csv",
    "save_curves_csv",
    "load_curves_json",
    "save_curves_json",
]

# lossless float formatting for file output
FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class Curve:
    """One trajectory: observation times in [0, 1] and same-length values.

    Observations are sorted by time at construction (stable, so duplicate
    timestamps keep their input order).  Arrays are made read-only; all
    downstream code treats curves as immutable.
    """

    id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or y.ndim != 1 or t.size != y.size:
            raise DataError(f"curve {self.id!r}: times/values must be 1-d and same length")
        if t.size < 1:
            raise DataError(f"curve {self.id!r}: at least one observation required")
        if not np.all(np.isfinite(t)):
            raise DataError(f"curve {self.id!r}: non-finite observation times")
        order = np.argsort(t, kind="stable")
        if np.any(np.diff(order) < 0):
            t, y = t[order], y[order]
        if t[0] < 0.0 or t[-1] > 1.0:
            raise DataError(f"curve {self.id!r}: times outside [0, 1]")
        t.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class FunctionalSample:
    """A set of curves plus the derived summaries mu_hat and k0_hat."""

    curves: tuple
    mu_hat: float
    k0_hat: int
    interval_length: float = 1.0

    def __len__(self) -> int:
        return len(self.curves)


@dataclass(frozen=True)
class Window:
    """Per-curve selection of the k0 observation times closest to t0.

    ``selected`` holds, for each curve, the indices (into the curve's sorted
    arrays) of the selected points, in time order.  ``in_b`` marks curves
    that have at least k0 points with all selected times strictly inside the
    shrinking neighborhood (j_mu_lo, j_mu_hi).
    """

    t0: float
    k0: int
    j_mu_lo: float
    j_mu_hi: float
    selected: tuple
    in_b: np.ndarray

    def n_effective(self) -> int:
        return int(np.sum(self.in_b))


def data_driven_k0(mu_hat: float) -> int:
    """Window size from the mean number of observations per curve.

    Nearest integer of mu_hat * exp(-(log log mu_hat)^2); requires mu_hat > e.
    """
    if mu_hat <= math.e:
        raise DegenerateMu(f"mu_hat = {mu_hat} <= e; log log undefined")
    x = mu_hat * math.exp(-((math.log(math.log(mu_hat))) ** 2))
    return int(math.floor(x + 0.5))


def choose_k(k0: int) -> int:
    """Difference lag k = floor((k0 + 7) / 8); callers must keep 8k-7 <= k0."""
    if k0 < 1:
        raise DataError(f"k0 = {k0} must be >= 1")
    return (k0 + 7) // 8


def summarize(curves: Sequence[Curve], interval_length: float = 1.0) -> FunctionalSample:
    """Compute mu_hat and k0_hat for a sample of curves."""
    curves = tuple(curves)
    if not curves:
        raise EmptySample("no curves supplied")
    if interval_length <= 0.0:
        raise DataError("interval_length must be > 0")
    mu_hat = float(np.mean([len(c) for c in curves]))
    return FunctionalSample(
        curves=curves,
        mu_hat=mu_hat,
        k0_hat=data_driven_k0(mu_hat),
        interval_length=float(interval_length),
    )


def window_at(sample: FunctionalSample, t0: float, k0: int) -> Window:
    """Select, per curve, the k0 times closest to t0 (ties toward smaller time).

    A curve is flagged in_b when it has at least k0 points and all selected
    times lie strictly inside (t0 - |I|/log(mu_hat), t0 + |I|/log(mu_hat))
    intersected with [0, 1].  Curves failing the event keep their (shorter or
    out-of-range) selection but are excluded from estimation.
    """
    if not 0.0 <= t0 <= 1.0:
        raise DataError(f"t0 = {t0} outside [0, 1]")
    if k0 < 1:
        raise DataError(f"k0 = {k0} must be >= 1")
    half = sample.interval_length / math.log(sample.mu_hat)
    # open interval (t0 - half, t0 + half) intersected with [0, 1]; a clipped
    # endpoint belongs to the intersection, an unclipped one does not
    clip_lo, clip_hi = t0 - half < 0.0, t0 + half > 1.0
    j_lo = max(t0 - half, 0.0)
    j_hi = min(t0 + half, 1.0)
    selected = []
    in_b = np.zeros(len(sample.curves), dtype=bool)
    for i, curve in enumerate(sample.curves):
        dist = np.abs(curve.times - t0)
        # stable argsort on sorted times resolves distance ties toward the
        # smaller time, which comes first in the array
        order = np.argsort(dist, kind="stable")[:k0]
        idx = np.sort(order)
        selected.append(idx)
        if len(curve) >= k0:
            ts = curve.times[idx]
            lo_ok = ts[0] >= j_lo if clip_lo else ts[0] > j_lo
            hi_ok = ts[-1] <= j_hi if clip_hi else ts[-1] < j_hi
            in_b[i] = bool(lo_ok and hi_ok)
    in_b.flags.writeable = False
    return Window(
        t0=float(t0),
        k0=int(k0),
        j_mu_lo=j_lo,
        j_mu_hi=j_hi,
        selected=tuple(selected),
        in_b=in_b,
    )


def gather_windows(sample: FunctionalSample, window: Window):
    """Stack the selected times and values of the in-B curves.

    Returns (times, values) matrices of shape (n_effective, k0).
    """
    rows_t, rows_y = [], []
    for curve, idx, ok in zip(sample.curves, window.selected, window.in_b):
        if ok:
            rows_t.append(curve.times[idx])
            rows_y.append(curve.values[idx])
    if not rows_t:
        return np.empty((0, window.k0)), np.empty((0, window.k0))
    return np.vstack(rows_t), np.vstack(rows_y)


# ---------------------------------------------------------------------------
# File formats: CSV with header curve_id,t,y and JSON array-of-curves
# ---------------------------------------------------------------------------

def _finish_curves(buckets: dict, rescale: bool) -> list:
    curves = []
    for cid, (ts, ys) in buckets.items():
        t = np.asarray(ts, dtype=float)
        if rescale and t.size > 1 and t.max() > t.min():
            t = (t - t.min()) / (t.max() - t.min())
        curves.append(Curve(id=cid, times=t, values=np.asarray(ys, dtype=float)))
    return curves


def load_curves_csv(source, rescale: bool = False) -> list:
    """Read curves from a curve_id,t,y CSV file or file-like object.

    Rows need not be pre-sorted.  With rescale=True each curve's times are
    affinely mapped onto [0, 1] (first observation to 0, last to 1).
    """
    close = False
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        fh = open(source, "r", newline="")
        close = True
    else:
        fh = source
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["curve_id", "t", "y"]:
            raise FormatError("expected header 'curve_id,t,y'", line=1)
        buckets: dict = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 3:
                raise FormatError(f"expected 3 columns, got {len(row)}", line=lineno)
            cid = row[0].strip()
            if not cid:
                raise FormatError("empty curve_id", line=lineno)
            try:
                t, y = float(row[1]), float(row[2])
            except ValueError as exc:
                raise FormatError(f"could not parse number: {exc}", line=lineno) from None
            if not math.isfinite(t) or not math.isfinite(y):
                raise FormatError("non-finite observation", line=lineno)
            buckets.setdefault(cid, ([], []))
            buckets[cid][0].append(t)
            buckets[cid][1].append(y)
        if not buckets:
            raise FormatError("no data rows")
        return _finish_curves(buckets, rescale)
    finally:
        if close:
            fh.close()


def save_curves_csv(curves: Iterable[Curve], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("curve_id,t,y\n")
        for c in curves:
            for t, y in zip(c.times, c.values):
                fh.write(f"{c.id},{FLOAT_FMT % t},{FLOAT_FMT % y}\n")


def load_curves_json(source, rescale: bool = False) -> list:
    """Read curves from a JSON array [{"id":..., "t":[...], "y":[...]}]."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r") as fh:
            payload = json.load(fh)
    else:
        payload = json.load(source)
    if not isinstance(payload, list) or not payload:
        raise FormatError("expected a non-empty JSON array of curves")
    buckets: dict = {}
    for i, entry in enumerate(payload):
        try:
            cid = str(entry["id"])
            ts, ys = list(entry["t"]), list(entry["y"])
        except (TypeError, KeyError) as exc:
            raise FormatError(f"curve #{i}: missing field {exc}") from None
        if len(ts) != len(ys):
            raise FormatError(f"curve #{i} ({cid!r}): t and y lengths differ")
        buckets[cid] = (ts, ys)
    return _finish_curves(buckets, rescale)


def save_curves_json(curves: Iterable[Curve], path) -> None:
    payload = [
        {"id": c.id, "t": [float(t) for t in c.times], "y": [float(y) for y in c.values]}
        for c in curves
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")
