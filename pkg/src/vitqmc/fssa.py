"""Finite-size-scaling collapse of order-parameter curves and Savitzky-Golay smoothing.

Scaling form: value(N, J) = N^(-2 beta / nu) f(N^(1/nu) (J - J_c)). The collapse
quality is the autoscale chi-square: every scaled point is compared with a weighted
straight line through the bracketing points of all other sizes.
"""
import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.optimize

from .kernels import autoscale_quality

QUALITY_EPS = 1e-12


class CollapseError(ValueError):
    pass


class FitConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalingDataset:
    """Records (N, J, value, error), stored sorted by (N, J)."""

    N: np.ndarray
    J: np.ndarray
    value: np.ndarray
    error: np.ndarray

    def __post_init__(self):
        cols = [np.asarray(c, dtype=np.float64).ravel() for c in (self.N, self.J, self.value, self.error)]
        if len({c.shape[0] for c in cols}) != 1:
            raise ValueError("columns N, J, value, error must have equal length")
        order = np.lexsort((cols[1], cols[0]))
        for name, c in zip(("N", "J", "value", "error"), cols):
            object.__setattr__(self, name, c[order])
        if not np.all(np.isfinite(self.value)) or not np.all(np.isfinite(self.J)):
            raise ValueError("J and value must be finite")
        if not np.all(self.error > 0):
            raise ValueError("all errors must be > 0")
        sizes, counts = np.unique(self.N, return_counts=True)
        if sizes.shape[0] < 3:
            raise ValueError(f"need at least 3 distinct sizes, got {sizes.tolist()}")
        if counts.min() < 5:
            small = sizes[counts < 5].astype(int).tolist()
            raise ValueError(f"need at least 5 J points per size; sizes {small} have fewer")

    @classmethod
    def from_records(cls, records):
        arr = np.asarray(records, dtype=np.float64)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    @property
    def sizes(self):
        return np.unique(self.N)

    def __len__(self):
        return self.N.shape[0]

    def window(self, lo=None, hi=None):
        keep = np.ones(len(self), dtype=bool)
        if lo is not None:
            keep &= self.J >= lo
        if hi is not None:
            keep &= self.J <= hi
        return ScalingDataset(self.N[keep], self.J[keep], self.value[keep], self.error[keep])

    def records(self):
        return np.column_stack([self.N, self.J, self.value, self.error])


def scale_transform(N, J, value, J_c, nu, beta, error=None):
    """x = N^(1/nu)(J - J_c), y = value N^(2 beta/nu); errors scale like y."""
    if nu == 0:
        raise ValueError("nu must be non-zero")
    N = np.asarray(N, dtype=np.float64)
    x = N ** (1.0 / nu) * (np.asarray(J) - J_c)
    factor = N ** (2.0 * beta / nu)
    y = np.asarray(value) * factor
    if error is None:
        return x, y
    return x, y, np.asarray(error) * factor


def inverse_transform(N, x, y, J_c, nu, beta):
    N = np.asarray(N, dtype=np.float64)
    return J_c + np.asarray(x) * N ** (-1.0 / nu), np.asarray(y) * N ** (-2.0 * beta / nu)


def _scaled_blocks(data, J_c, nu, beta):
    x, y, dy = scale_transform(data.N, data.J, data.value, J_c, nu, beta, data.error)
    sizes, starts = np.unique(data.N, return_index=True)
    starts = np.append(starts, len(data))
    # J is sorted within a size, so x is too when nu > 0; re-sort defensively otherwise
    for a in range(sizes.shape[0]):
        sl = slice(starts[a], starts[a + 1])
        o = np.argsort(x[sl], kind="stable")
        x[sl], y[sl], dy[sl] = x[sl][o], y[sl][o], dy[sl][o]
    return x, y, dy, starts, sizes


def _quality_terms(data, J_c, nu, beta, eps=QUALITY_EPS):
    x, y, dy, starts, _ = _scaled_blocks(data, J_c, nu, beta)
    return autoscale_quality(x, y, dy, starts, eps)


def collapse_quality(data, J_c, nu, beta, eps=QUALITY_EPS):
    """Reduced chi-square of the collapse; about 1 for a statistically perfect one."""
    x, y, dy, starts, sizes = _scaled_blocks(data, J_c, nu, beta)
    lo = [x[starts[a]] for a in range(sizes.shape[0])]
    hi = [x[starts[a + 1] - 1] for a in range(sizes.shape[0])]
    if max(lo) >= min(hi):
        raise CollapseError(f"scaled x-ranges of sizes {sizes.astype(int).tolist()} do not overlap "
                            f"(J_c={J_c:g}, nu={nu:g})")
    total, count = autoscale_quality(x, y, dy, starts, eps)
    if count == 0:
        raise CollapseError(f"no comparable points between sizes {sizes.astype(int).tolist()}")
    return total / count


@dataclass
class CriticalFit:
    J_c: float
    nu: float
    beta: float
    J_c_err: float
    nu_err: float
    beta_err: float
    quality: float
    window: tuple = (None, None)
    n_points: int = 0
    evaluations: int = 0
    error_method: str = "curvature"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"fitted nu must be positive, got {self.nu}")
        if not np.isfinite(self.quality):
            raise ValueError("collapse quality is not finite")

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, default=float))


def _to_internal(p):
    J_c, nu, beta = p
    return np.array([J_c, 1.0 / nu, 2.0 * beta / nu])


def _from_internal(q):
    J_c, inv_nu, ratio = q
    return np.array([J_c, 1.0 / inv_nu, 0.5 * ratio / inv_nu])


def _objective(data, eps, min_overlap):
    """Quality in the coordinates (J_c, 1/nu, 2 beta/nu), which are far less correlated."""
    need = max(3, int(np.ceil(min_overlap * len(data))))

    def f(q):
        if not q[1] > 0.05:
            return 1e12
        J_c, nu, beta = _from_internal(q)
        total, count = _quality_terms(data, J_c, nu, beta, eps)
        if count < need:
            return 1e12
        return total / count
    return f


def _curvature_errors(data, p, eps):
    """Errors from the chi-square curvature: cov = 2 H^-1 with H the Hessian of the total chi-square."""
    def chi2(q):
        total, count = _quality_terms(data, q[0], q[1], q[2], eps)
        return total, count

    _, count = chi2(p)
    h = np.maximum(np.abs(p), 1e-2) * 1e-3
    H = np.empty((3, 3))
    f0 = chi2(p)[0]
    for i in range(3):
        for j in range(i, 3):
            ei, ej = np.eye(3)[i] * h[i], np.eye(3)[j] * h[j]
            if i == j:
                H[i, i] = (chi2(p + ei)[0] - 2 * f0 + chi2(p - ei)[0]) / h[i] ** 2
            else:
                H[i, j] = H[j, i] = (chi2(p + ei + ej)[0] - chi2(p + ei - ej)[0]
                                     - chi2(p - ei + ej)[0] + chi2(p - ei - ej)[0]) / (4 * h[i] * h[j])
    try:
        cov = 2.0 * np.linalg.inv(H)
        err = np.sqrt(np.diag(cov))
    except np.linalg.LinAlgError:
        err = np.full(3, np.nan)
    return np.where(np.isfinite(err), err, np.nan), count


def fit_critical(data, initial_guess, window=None, max_evaluations=4000, bootstrap=0, seed=0,
                 eps=QUALITY_EPS, min_overlap=0.5):
    """Nelder-Mead minimisation of the collapse quality over (J_c, nu, beta).

    ``window`` = (J_lo, J_hi) restricts the records used. Parameter sets under which
    fewer than ``min_overlap`` of the points can be compared are rejected. With
    ``bootstrap`` > 0 the errors are instead the spread of fits to data resampled
    within their error bars.
    """
    guess = np.asarray(initial_guess, dtype=np.float64)
    if guess.shape != (3,) or not np.all(np.isfinite(guess)):
        raise ValueError(f"initial guess must be three finite numbers, got {initial_guess}")
    window = tuple(window) if window is not None else (None, None)
    data = data.window(*window)
    best, evals = _minimise(data, guess, max_evaluations, eps, min_overlap)
    quality = collapse_quality(data, *best, eps=eps)
    if bootstrap:
        rng = np.random.default_rng(seed)
        fits = []
        for _ in range(bootstrap):
            noisy = ScalingDataset(data.N, data.J, data.value + data.error * rng.standard_normal(len(data)),
                                   data.error)
            fits.append(_minimise(noisy, best, max_evaluations, eps, min_overlap)[0])
        err, method = np.std(fits, axis=0, ddof=1), "bootstrap"
    else:
        err, _ = _curvature_errors(data, best, eps)
        method = "curvature"
    return CriticalFit(float(best[0]), float(best[1]), float(best[2]), float(err[0]), float(err[1]),
                       float(err[2]), float(quality), window, len(data), evals, method)


def _minimise(data, start, max_evaluations, eps, min_overlap=0.5, restarts=3):
    """Nelder-Mead, restarted with a full-size simplex at the best vertex until it stops improving."""
    f = _objective(data, eps, min_overlap)
    x = _to_internal(start)
    scale = np.maximum(np.abs(x), 0.05) * 0.1
    evals = 0
    best = np.inf
    res = None
    for _ in range(1 + restarts):
        sim = np.vstack([x] + [x + np.eye(3)[k] * scale[k] for k in range(3)])
        res = scipy.optimize.minimize(f, x, method="Nelder-Mead",
                                      options={"initial_simplex": sim, "maxfev": max_evaluations,
                                               "xatol": 1e-8, "fatol": 1e-10})
        evals += res.nfev
        improved = res.fun < best - 1e-9
        if res.fun < best:
            best, x = res.fun, res.x
        if not improved:
            break
    if not np.isfinite(best) or best >= 1e12 or res.status == 1:
        raise FitConvergenceError(f"collapse fit did not converge after {evals} evaluations: {res.message}")
    return _from_internal(x), evals


def collapsed_points(data, fit):
    x, y, dy = scale_transform(data.N, data.J, data.value, fit.J_c, fit.nu, fit.beta, data.error)
    return np.column_stack([data.N, data.J, x, y, dy])


# --------------------------------------------------------------------------
# I/O

DATASET_HEADER = ("N", "J", "value", "error")


def read_dataset(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(DATASET_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = []
        for r in reader:
            try:
                rows.append([float(r[k]) for k in DATASET_HEADER])
            except (TypeError, ValueError):
                raise ValueError(f"{path}, line {reader.line_num}: expected four numbers, "
                                 f"got {[r.get(k) for k in DATASET_HEADER]}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return ScalingDataset.from_records(rows)


def write_dataset(path, data):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DATASET_HEADER)
        for r in data.records():
            w.writerow([int(r[0])] + [repr(float(v)) for v in r[1:]])


def write_collapsed(path, data, fit):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("N", "J", "x", "y", "dy"))
        for r in collapsed_points(data, fit):
            w.writerow([int(r[0])] + [repr(float(v)) for v in r[1:]])


# --------------------------------------------------------------------------
# smoothing and derived numbers

def savitzky_golay(series, window, poly_order):
    """Local least-squares polynomial smoothing; near the ends the window is truncated."""
    y = np.asarray(series, dtype=np.float64)
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    if poly_order < 0 or poly_order >= window:
        raise ValueError(f"poly_order must satisfy 0 <= poly_order < window, got {poly_order}")
    n = y.shape[0]
    half = window // 2
    out = np.empty(n)
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        t = np.arange(lo, hi) - i
        deg = min(poly_order, hi - lo - 1)
        V = np.vander(t, deg + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(V, y[lo:hi], rcond=None)
        out[i] = coef[0]
    return out


def derived_critical_quantities(J_c, normalization):
    """J~_c = |J_c| / N~, h~_c = 1 / J~_c and theta_c = arctan(1 / h~_c)."""
    if not normalization > 0:
        raise ValueError("normalisation must be positive")
    if J_c == 0:
        raise ValueError("J_c must be non-zero")
    Jt = abs(J_c) / normalization
    ht = 1.0 / Jt
    return {"J_tilde_c": Jt, "h_tilde_c": ht, "theta_c": float(np.arctan(1.0 / ht))}
