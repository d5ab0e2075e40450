"""Hot numeric kernels, each with a numba loop and a vectorised numpy twin.

The public names ``counter_uniforms``, ``tfim_matvec`` and ``autoscale_quality``
dispatch to the numba versions unless ``VITQMC_DISABLE_NUMBA`` is set;
``pair_energies`` always takes the BLAS-backed numpy path. Both variants stay importable as ``*_nb`` /
``*_np`` so they can be cross-checked and benchmarked.
"""
import numpy as np

from ._accel import NUMBA_ENABLED, njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


# --------------------------------------------------------------------------
# counter-based uniforms: u(seed, chain, step, slot), splitmix64 finaliser

def _mix_np(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def counter_uniforms_np(seed, chain_ids, step, n_slots):
    with np.errstate(over="ignore"):
        chains = np.asarray(chain_ids, dtype=np.uint64)
        base = _mix_np(np.full(chains.shape, np.uint64(seed), dtype=np.uint64) + _GOLDEN)
        h = _mix_np(base + chains * _GOLDEN)
        h = _mix_np(h + np.uint64(step) * _GOLDEN)
        slots = np.arange(n_slots, dtype=np.uint64)
        h = _mix_np(h[:, None] + slots[None, :] * _GOLDEN)
    return (h >> _S11).astype(np.float64) * _INV53


@njit
def _mix_nb(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit
def _counter_uniforms_nb(seed, chains, step, n_slots):
    g = np.uint64(0x9E3779B97F4A7C15)
    out = np.empty((chains.shape[0], n_slots))
    base = _mix_nb(seed + g)
    for c in range(chains.shape[0]):
        h = _mix_nb(base + chains[c] * g)
        h = _mix_nb(h + step * g)
        for k in range(n_slots):
            v = _mix_nb(h + np.uint64(k) * g)
            out[c, k] = np.float64(v >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    return out


def counter_uniforms_nb(seed, chain_ids, step, n_slots):
    chains = np.asarray(chain_ids, dtype=np.uint64)
    return _counter_uniforms_nb(np.uint64(seed), chains, np.uint64(step), int(n_slots))


# --------------------------------------------------------------------------
# pair energies: sum_{i<j} row[(j - i) mod N] s_i s_j for a batch of configurations

def pair_energies_np(spins, row):
    spins = np.asarray(spins, dtype=np.float64)
    n = spins.shape[-1]
    offsets = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    mat = np.asarray(row, dtype=np.float64)[offsets]
    np.fill_diagonal(mat, 0.0)
    # row is symmetric under r -> N - r, so the full double sum counts each bond twice
    return 0.5 * np.einsum("bi,bi->b", spins @ mat, spins)


@njit(fastmath=True)
def _pair_energies_nb(spins, row):
    b, n = spins.shape
    # full symmetric matrix with zero diagonal: fixed-length inner loops vectorise well
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            mat[i, j] = row[j - i]
            mat[j, i] = row[j - i]
    out = np.zeros(b)
    for k in range(b):
        s = spins[k]
        acc = 0.0
        for i in range(n):
            m = mat[i]
            part = 0.0
            for j in range(n):
                part += m[j] * s[j]
            acc += s[i] * part
        out[k] = 0.5 * acc
    return out


def pair_energies_nb(spins, row):
    return _pair_energies_nb(np.ascontiguousarray(spins, dtype=np.float64),
                             np.ascontiguousarray(row, dtype=np.float64))


# --------------------------------------------------------------------------
# matrix-free transverse-field Ising matvec on the 2^N computational basis

def tfim_matvec_np(diag, field, n_sites, v):
    out = diag * v
    idx = np.arange(v.shape[0])
    for i in range(n_sites):
        out -= field * v[idx ^ (1 << i)]
    return out


@njit
def _tfim_matvec_nb(diag, field, n_sites, v):
    dim = v.shape[0]
    out = np.empty(dim)
    for a in range(dim):
        acc = diag[a] * v[a]
        for i in range(n_sites):
            acc -= field * v[a ^ (1 << i)]
        out[a] = acc
    return out


def tfim_matvec_nb(diag, field, n_sites, v):
    return _tfim_matvec_nb(diag, float(field), int(n_sites), np.ascontiguousarray(v, dtype=np.float64))


# --------------------------------------------------------------------------
# autoscale collapse quality
#
# Points of each size are sorted by x. For every point, each other size contributes
# the pair of its points bracketing x; a weighted straight line through all bracketing
# points gives the master-curve estimate (Y, dY^2) at x.

def autoscale_quality_np(x, y, dy, starts, eps):
    """Return (sum of squared normalised residuals, number of compared points)."""
    n_sizes = starts.shape[0] - 1
    total = 0.0
    count = 0
    for a in range(n_sizes):
        xa = x[starts[a]:starts[a + 1]]
        ya = y[starts[a]:starts[a + 1]]
        dya = dy[starts[a]:starts[a + 1]]
        bx = []
        by = []
        bdy = []
        usable = np.zeros(xa.shape[0], dtype=bool)
        for b in range(n_sizes):
            if b == a:
                continue
            xb = x[starts[b]:starts[b + 1]]
            pos = np.searchsorted(xb, xa, side="right")
            ok = (pos > 0) & (pos < xb.shape[0])
            lo = np.clip(pos - 1, 0, xb.shape[0] - 1)
            hi = np.clip(pos, 0, xb.shape[0] - 1)
            sl = slice(starts[b], starts[b + 1])
            bx.append(np.where(ok[:, None], np.stack([xb[lo], xb[hi]], 1), np.nan))
            by.append(np.stack([y[sl][lo], y[sl][hi]], 1))
            bdy.append(np.stack([dy[sl][lo], dy[sl][hi]], 1))
            usable |= ok
        if not bx:
            continue
        px = np.concatenate(bx, 1)
        py = np.concatenate(by, 1)
        pdy = np.maximum(np.concatenate(bdy, 1), eps)
        w = np.where(np.isnan(px), 0.0, 1.0 / pdy ** 2)
        px0 = np.where(np.isnan(px), 0.0, px)
        npts = (w > 0).sum(1)
        k = w.sum(1)
        kx = (w * px0).sum(1)
        ky = (w * py).sum(1)
        kxx = (w * px0 * px0).sum(1)
        kxy = (w * px0 * py).sum(1)
        delta = k * kxx - kx * kx
        good = usable & (npts >= 2) & (delta > 0)
        if not good.any():
            continue
        d = np.where(good, delta, 1.0)
        y_est = (kxx * ky - kx * kxy + xa * (k * kxy - kx * ky)) / d
        dy2 = (kxx - 2.0 * xa * kx + xa * xa * k) / d
        var = np.maximum(dya ** 2 + dy2, eps * eps)
        total += float(np.sum(np.where(good, (ya - y_est) ** 2 / var, 0.0)))
        count += int(good.sum())
    return total, count


@njit
def _autoscale_quality_nb(x, y, dy, starts, eps):
    n_sizes = starts.shape[0] - 1
    total = 0.0
    count = 0
    for a in range(n_sizes):
        for i in range(starts[a], starts[a + 1]):
            xi = x[i]
            k = 0.0
            kx = 0.0
            ky = 0.0
            kxx = 0.0
            kxy = 0.0
            npts = 0
            for b in range(n_sizes):
                if b == a:
                    continue
                s0 = starts[b]
                s1 = starts[b + 1]
                if s1 - s0 < 2 or xi < x[s0] or xi >= x[s1 - 1]:
                    continue
                # first index with x > xi
                lo = s0
                hi = s1
                while lo < hi:
                    mid = (lo + hi) // 2
                    if x[mid] <= xi:
                        lo = mid + 1
                    else:
                        hi = mid
                for j in (lo - 1, lo):
                    e = dy[j] if dy[j] > eps else eps
                    w = 1.0 / (e * e)
                    k += w
                    kx += w * x[j]
                    ky += w * y[j]
                    kxx += w * x[j] * x[j]
                    kxy += w * x[j] * y[j]
                    npts += 1
            if npts < 2:
                continue
            delta = k * kxx - kx * kx
            if delta <= 0.0:
                continue
            y_est = (kxx * ky - kx * kxy + xi * (k * kxy - kx * ky)) / delta
            dy2 = (kxx - 2.0 * xi * kx + xi * xi * k) / delta
            var = dy[i] * dy[i] + dy2
            if var < eps * eps:
                var = eps * eps
            total += (y[i] - y_est) ** 2 / var
            count += 1
    return total, count


def autoscale_quality_nb(x, y, dy, starts, eps):
    return _autoscale_quality_nb(np.ascontiguousarray(x, dtype=np.float64),
                                 np.ascontiguousarray(y, dtype=np.float64),
                                 np.ascontiguousarray(dy, dtype=np.float64),
                                 np.ascontiguousarray(starts, dtype=np.int64), float(eps))


# the dense pair sum is a matrix product, where BLAS beats a compiled loop (see the
# kernel benchmark), so it uses the numpy version in both modes
pair_energies = pair_energies_np

if NUMBA_ENABLED:
    counter_uniforms = counter_uniforms_nb
    tfim_matvec = tfim_matvec_nb
    autoscale_quality = autoscale_quality_nb
else:
    counter_uniforms = counter_uniforms_np
    tfim_matvec = tfim_matvec_np
    autoscale_quality = autoscale_quality_np
