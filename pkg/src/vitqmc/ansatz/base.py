"""Ansatz contract, flat parameter layout, gradient checking and checkpoints."""
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EVAL_CHUNK = 2048


class Layout:
    """Named, disjoint slices of a flat parameter vector (insertion order)."""

    def __init__(self, shapes):
        self.shapes = {}
        self.slices = {}
        pos = 0
        for name, shape in shapes:
            shape = tuple(int(s) for s in shape)
            size = int(np.prod(shape)) if shape else 1
            self.shapes[name] = shape
            self.slices[name] = slice(pos, pos + size)
            pos += size
        self.size = pos

    def view(self, values, name):
        return values[..., self.slices[name]].reshape(values.shape[:-1] + self.shapes[name])

    def unpack(self, values):
        return {name: self.view(values, name) for name in self.shapes}

    def pack(self, per_name, batch=None):
        """Inverse of ``unpack``; with ``batch`` the arrays carry a leading sample axis."""
        lead = () if batch is None else (batch,)
        out = np.empty(lead + (self.size,))
        for name, sl in self.slices.items():
            out[..., sl] = np.asarray(per_name[name]).reshape(lead + (-1,))
        return out

    def breakdown(self):
        counts = {}
        for name, sl in self.slices.items():
            group = name.split(".")[0]
            counts[group] = counts.get(group, 0) + (sl.stop - sl.start)
        return counts

    def to_dict(self):
        return [[name, list(shape)] for name, shape in self.shapes.items()]


@dataclass
class AnsatzParameters:
    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.layout.size,):
            raise ValueError(f"expected {self.layout.size} parameters, got shape {self.values.shape}")

    @property
    def parameter_count(self):
        return self.layout.size

    def __getitem__(self, name):
        return self.layout.view(self.values, name)

    def replace(self, values):
        return AnsatzParameters(values, self.layout)


@dataclass
class LogAmplitudeResult:
    log_psi: float
    derivatives: np.ndarray = None


class Ansatz:
    """Real log-amplitude model over +-1 spin configurations.

    Subclasses implement ``_forward(values, spins)`` returning log psi for a batch and
    ``_forward_backward(values, spins)`` returning ``(log_psi, O)`` with ``O`` of shape
    ``(B, parameter_count)``.
    """

    kind = "base"

    def __init__(self, n_sites, layout):
        self.n_sites = int(n_sites)
        self.layout = layout

    @property
    def parameter_count(self):
        return self.layout.size

    def hyperparameters(self):
        return {"n_sites": self.n_sites}

    def init_params(self, seed=0):
        rng = np.random.default_rng(seed)
        per = {}
        for name, shape in self.layout.shapes.items():
            per[name] = self._init_block(name, shape, rng)
        return AnsatzParameters(self.layout.pack(per), self.layout)

    def _init_block(self, name, shape, rng):
        # weights: N(0, 1/fan_in); biases and offsets zero
        if len(shape) >= 2:
            return rng.normal(0.0, 1.0 / np.sqrt(shape[-1]), size=shape)
        return np.zeros(shape)

    def _check(self, spins, dtype=np.float64):
        spins = np.atleast_2d(np.asarray(spins))
        if spins.shape[-1] != self.n_sites:
            raise ValueError(f"{self.kind}: expected {self.n_sites} spins, got {spins.shape[-1]}")
        return spins.astype(dtype)

    @staticmethod
    def _values(params, dtype=np.float64):
        v = params.values if isinstance(params, AnsatzParameters) else params
        return np.asarray(v, dtype=dtype)

    def log_psi(self, params, spins, dtype=np.float64):
        """Batch log-amplitudes; ``dtype=np.longdouble`` gives an extended-precision pass."""
        x = self._check(spins, dtype)
        v = self._values(params, dtype)
        if x.shape[0] <= EVAL_CHUNK:
            return self._forward(v, x)
        return np.concatenate([self._forward(v, x[i:i + EVAL_CHUNK])
                               for i in range(0, x.shape[0], EVAL_CHUNK)])

    def log_psi_and_grad(self, params, spins):
        x = self._check(spins)
        v = self._values(params)
        chunk = max(1, EVAL_CHUNK // 4)
        if x.shape[0] <= chunk:
            return self._forward_backward(v, x)
        parts = [self._forward_backward(v, x[i:i + chunk]) for i in range(0, x.shape[0], chunk)]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    def evaluate(self, params, s, derivatives=True):
        if derivatives:
            lp, o = self.log_psi_and_grad(params, np.asarray(s)[None, :])
            return LogAmplitudeResult(float(lp[0]), o[0])
        return LogAmplitudeResult(float(self.log_psi(params, np.asarray(s)[None, :])[0]))

    def batch_fn(self, params):
        return lambda spins: self.log_psi(params, spins)

    def _forward(self, values, x):
        raise NotImplementedError

    def _forward_backward(self, values, x):
        raise NotImplementedError


def check_gradients(ansatz, params, s, step=1e-5, dtype=np.longdouble):
    """Max relative error between analytic log-derivatives and central differences.

    Components whose magnitudes are both below 1e-10 are compared absolutely. The
    difference quotients are evaluated in ``dtype`` (extended precision by default) so
    that cancellation in log psi(theta + h) - log psi(theta - h) does not swamp small
    derivatives.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"finite-difference step must lie in [1e-7, 1e-3], got {step}")
    values = Ansatz._values(params, dtype)
    s = np.asarray(s)[None, :]
    _, analytic = ansatz.log_psi_and_grad(values.astype(np.float64), s)
    analytic = analytic[0]
    if not np.all(np.isfinite(analytic)):
        raise FloatingPointError("non-finite analytic derivatives")
    # +/- perturbations evaluated as batches of per-sample parameter sets
    p = values.shape[0]
    idx = np.arange(p)
    lp = np.empty(2 * p, dtype=dtype)
    chunk = max(1, min(2 * p, (1 << 22) // max(p, 1)))
    for start in range(0, 2 * p, chunk):
        rows = np.arange(start, min(start + chunk, 2 * p))
        stacked = np.repeat(values[None, :], rows.shape[0], axis=0)
        k = rows % p
        stacked[np.arange(rows.shape[0]), k] += np.where(rows < p, step, -step).astype(dtype)
        lp[rows] = ansatz._forward(stacked, np.repeat(ansatz._check(s, dtype), rows.shape[0], axis=0))
    h = (values + dtype(step)) - (values - dtype(step))
    if not np.all(np.isfinite(lp)):
        raise FloatingPointError("non-finite log-amplitude during finite differences")
    numeric = ((lp[:p] - lp[p:]) / h).astype(np.float64)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.where(scale < 1e-10, np.abs(analytic - numeric),
                   np.abs(analytic - numeric) / np.where(scale < 1e-10, 1.0, scale))
    return float(err.max()) if err.size else 0.0


# --------------------------------------------------------------------------
# checkpoints: manifest.json + params.bin (little-endian f64)

def save_checkpoint(directory, ansatz, params, **extra):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    values = AnsatzParameters(Ansatz._values(params), ansatz.layout).values
    values.astype("<f8").tofile(directory / "params.bin")
    manifest = {
        "kind": ansatz.kind,
        "hyperparameters": ansatz.hyperparameters(),
        "parameter_count": ansatz.parameter_count,
        "layout": ansatz.layout.to_dict(),
        **extra,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def load_checkpoint(directory):
    from . import build_ansatz

    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    ansatz = build_ansatz(manifest["kind"], **manifest["hyperparameters"])
    if ansatz.layout.to_dict() != manifest["layout"]:
        raise ValueError(f"checkpoint layout in {directory} does not match the rebuilt ansatz")
    values = np.fromfile(directory / "params.bin", dtype="<f8").astype(np.float64)
    return ansatz, AnsatzParameters(values, ansatz.layout), manifest
