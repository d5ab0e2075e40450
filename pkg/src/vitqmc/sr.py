"""Stochastic reconfiguration updates, schedules and the VMC training loop."""
import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .ansatz.base import AnsatzParameters, save_checkpoint
from .hamiltonian import all_configurations, config_index, local_energies
from .observables import chain_stderr, v_score
from .sampler import AcceptanceLog, SamplerState, init_state, sample_batch

log = logging.getLogger(__name__)


class SRSolveError(np.linalg.LinAlgError):
    pass


class TrainingError(FloatingPointError):
    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class LearningRateSchedule:
    initial: float = 0.1
    peak: float = 2.0
    warmup: int = 75
    decay: float = 0.995

    def __post_init__(self):
        if not self.initial <= self.peak:
            raise ValueError("initial learning rate must not exceed the peak")
        if not 0 < self.decay <= 1:
            raise ValueError("decay ratio must lie in (0, 1]")

    def __call__(self, iteration):
        return learning_rate_at(self, iteration)


def learning_rate_at(schedule, iteration):
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    if iteration <= schedule.warmup:
        frac = iteration / schedule.warmup if schedule.warmup else 1.0
        return schedule.initial + (schedule.peak - schedule.initial) * frac
    return schedule.peak * schedule.decay ** (iteration - schedule.warmup)


@dataclass(frozen=True)
class DiagonalShiftSchedule:
    start: float = 1e-2
    end: float = 1e-4
    total: int = 250

    def __post_init__(self):
        if not (self.start > 0 and self.end > 0):
            raise ValueError("diagonal shift must stay positive")

    def __call__(self, iteration):
        if self.total <= 1:
            return self.start
        frac = min(max(iteration / (self.total - 1), 0.0), 1.0)
        return self.start + (self.end - self.start) * frac


@dataclass
class SrStatistics:
    """Covariance S and force F of the log-derivatives.

    Built from samples, the centred data are kept and S/F are formed on demand so that
    the solver can work in sample space when parameters outnumber samples.
    """

    mean_energy: float
    n_samples: int
    S: np.ndarray = None
    F: np.ndarray = None
    centered_o: np.ndarray = field(default=None, repr=False)
    centered_e: np.ndarray = field(default=None, repr=False)
    energy_variance: float = 0.0

    def __post_init__(self):
        if self.S is None and self.centered_o is not None and self.centered_o.shape[1] <= self.n_samples:
            self.S = self.centered_o.T @ self.centered_o / self.n_samples
        if self.F is None and self.centered_o is not None:
            self.F = self.centered_o.T @ self.centered_e / self.n_samples

    @property
    def parameter_count(self):
        return self.F.shape[0]

    def covariance(self):
        if self.S is None:
            self.S = self.centered_o.T @ self.centered_o / self.n_samples
        return self.S


def accumulate_sr_statistics(log_derivs, energies):
    """S = <O O^T> - <O><O>^T and F = <E O> - <E><O>, from mean-centred samples."""
    O = np.asarray(log_derivs, dtype=np.float64)
    E = np.asarray(energies, dtype=np.float64)
    if O.ndim != 2 or E.shape != (O.shape[0],):
        raise ValueError(f"shape mismatch: O{O.shape}, E{E.shape}")
    if O.shape[0] < 2:
        raise ValueError("SR statistics need at least two samples")
    bad = ~np.isfinite(E) | ~np.isfinite(O).all(axis=1)
    if bad.any():
        raise ValueError(f"non-finite input at sample {int(np.flatnonzero(bad)[0])}")
    e_mean = E.mean()
    Oc = O - O.mean(axis=0)
    Ec = E - e_mean
    return SrStatistics(float(e_mean), O.shape[0], centered_o=Oc, centered_e=Ec,
                        energy_variance=float(Ec @ Ec / E.shape[0]))


def _solve(stats, shift):
    """delta with (S + shift I) delta = F; Cholesky in parameter or sample space."""
    n, F = stats.n_samples, stats.F
    if stats.S is None and stats.centered_o is not None:
        A = stats.centered_o / np.sqrt(n)
        e = stats.centered_e / np.sqrt(n)
        K = A @ A.T
        K[np.diag_indices_from(K)] += shift
        y = scipy.linalg.cho_solve(scipy.linalg.cho_factor(K), e)
        delta = A.T @ y
        lhs = A.T @ (A @ delta) + shift * delta
        return delta, lhs, "samples"
    M = stats.S + shift * np.eye(F.shape[0])
    delta = scipy.linalg.cho_solve(scipy.linalg.cho_factor(M), F)
    return delta, M @ delta, "parameters"


def sr_update(params, stats, lr, shift):
    """Returns (new values, info). Raises SRSolveError if S + shift I stays singular."""
    values = params.values if isinstance(params, AnsatzParameters) else np.asarray(params, dtype=np.float64)
    if stats.F.shape[0] != values.shape[0]:
        raise ValueError(f"statistics for {stats.F.shape[0]} parameters, ansatz has {values.shape[0]}")
    used = shift
    try:
        delta, lhs, route = _solve(stats, used)
    except np.linalg.LinAlgError:
        used = shift * 10 if shift > 0 else 1e-8
        log.warning("SR matrix not positive definite; retrying with diagonal shift %g", used)
        try:
            delta, lhs, route = _solve(stats, used)
        except np.linalg.LinAlgError as exc:
            raise SRSolveError(f"SR solve failed with diagonal shift {used:g} "
                               f"({stats.parameter_count} parameters, {stats.n_samples} samples)") from exc
    fnorm = np.linalg.norm(stats.F)
    residual = float(np.linalg.norm(lhs - stats.F) / fnorm) if fnorm > 0 else 0.0
    new = values - lr * delta
    if isinstance(params, AnsatzParameters):
        new = params.replace(new)
    return new, {"residual": residual, "diag_shift": used, "route": route,
                 "step_norm": float(lr * np.linalg.norm(delta))}


# --------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class OptimizerConfig:
    lr_initial: float = 0.1
    lr_peak: float = 2.0
    lr_warmup: int = 75
    lr_decay: float = 0.995
    shift_start: float = 1e-2
    shift_end: float = 1e-4
    max_iter: int = 250
    checkpoint_every: int = 0

    def __post_init__(self):
        self.learning_rate()
        self.diagonal_shift()
        if self.max_iter < 0 or self.checkpoint_every < 0:
            raise ValueError("max_iter and checkpoint_every must be >= 0")

    def learning_rate(self):
        return LearningRateSchedule(self.lr_initial, self.lr_peak, self.lr_warmup, self.lr_decay)

    def diagonal_shift(self):
        return DiagonalShiftSchedule(self.shift_start, self.shift_end, self.max_iter)


class AmplitudeTable:
    """log psi (and optionally O) tabulated over all 2^N configurations for one parameter set."""

    def __init__(self, ansatz, params, with_grads=False):
        self.configs = all_configurations(ansatz.n_sites)
        if with_grads:
            self.log_psi, self.grads = ansatz.log_psi_and_grad(params, self.configs)
        else:
            self.log_psi, self.grads = ansatz.log_psi(params, self.configs), None

    def __call__(self, spins):
        return self.log_psi[config_index(spins)]

    def derivatives(self, spins):
        return self.grads[config_index(spins)]


TRACE_COLUMNS = ("iteration", "energy", "energy_err", "variance", "v_score", "learning_rate",
                 "diag_shift", "acc_local", "acc_global", "sr_residual")


@dataclass
class TrainResult:
    params: AnsatzParameters
    trace: list
    state: SamplerState
    iterations: int
    stopped_by_budget: bool = False
    elapsed: float = 0.0


def _clock(kind):
    return time.process_time if kind == "cpu" else time.perf_counter


def save_training_checkpoint(directory, ansatz, params, state, iteration, **extra):
    directory = Path(directory)
    save_checkpoint(directory, ansatz, params, iteration=iteration, **extra)
    np.savez(directory / "sampler_state.npz", **state.to_arrays())
    return directory


def load_sampler_state(directory):
    with np.load(Path(directory) / "sampler_state.npz") as f:
        return SamplerState.from_arrays(f)


def train(model, ansatz, sampler_config, optimizer, params=None, param_seed=0, state=None,
          start_iter=0, out_dir=None, time_budget=None, clock="cpu", table_max_sites=12,
          manifest_extra=None):
    """Run SR iterations ``start_iter .. optimizer.max_iter - 1``.

    The per-iteration trace is returned and, with ``out_dir``, written to
    ``energy_trace.csv`` together with checkpoints.
    """
    n = model.n_sites
    if ansatz.n_sites != n:
        raise ValueError(f"ansatz built for N={ansatz.n_sites}, model has N={n}")
    if params is None:
        params = ansatz.init_params(param_seed)
    lr_at, shift_at = optimizer.learning_rate(), optimizer.diagonal_shift()
    use_table = n <= table_max_sites and 2 ** n <= 4 * sampler_config.samples_per_iteration
    out = Path(out_dir) if out_dir is not None else None
    trace_path = acc_log = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        trace_path = out / "energy_trace.csv"
        if start_iter == 0 or not trace_path.exists():
            with open(trace_path, "w", newline="") as fh:
                csv.writer(fh).writerow(TRACE_COLUMNS)
        acc_log = AcceptanceLog(out / "acceptance.csv", append=start_iter > 0)
    extra = dict(manifest_extra or {})
    tick = _clock(clock)
    t0 = tick()
    trace = []
    stopped = False
    it = start_iter
    last_ckpt = None
    for it in range(start_iter, optimizer.max_iter):
        table = AmplitudeTable(ansatz, params, with_grads=True) if use_table else None
        fn = table if use_table else ansatz.batch_fn(params)
        if state is None:
            state = init_state(sampler_config, n, fn)
        else:
            state.log_psi = np.asarray(fn(state.spins), dtype=np.float64)
        state.reset_counters()
        spins, lps = sample_batch(state, fn, sampler_config)
        if use_table:
            O = table.derivatives(spins)
        else:
            _, O = ansatz.log_psi_and_grad(params, spins)
        eloc = local_energies(model, spins, fn, lps)
        if not np.all(np.isfinite(eloc)):
            raise TrainingError(f"non-finite local energy at iteration {it}", last_ckpt)
        stats = accumulate_sr_statistics(O, eloc)
        lr, shift = lr_at(iteration=it), shift_at(it)
        params, info = sr_update(params, stats, lr, shift)
        acc = state.acceptance()
        row = {
            "iteration": it,
            "energy": stats.mean_energy,
            "energy_err": chain_stderr(eloc, sampler_config.n_chains),
            "variance": stats.energy_variance,
            "v_score": v_score(eloc, n),
            "learning_rate": lr,
            "diag_shift": info["diag_shift"],
            "acc_local": acc["local"],
            "acc_global": acc["global"],
            "sr_residual": info["residual"],
        }
        trace.append(row)
        if acc_log is not None:
            acc_log.record(it, state)
        if trace_path is not None:
            with open(trace_path, "a", newline="") as fh:
                csv.writer(fh).writerow([repr(float(row[c])) if c != "iteration" else it for c in TRACE_COLUMNS])
        if out is not None and optimizer.checkpoint_every and (it + 1) % optimizer.checkpoint_every == 0:
            last_ckpt = save_training_checkpoint(out / "checkpoint", ansatz, params, state, it, **extra)
        if time_budget is not None and tick() - t0 >= time_budget:
            stopped = it + 1 < optimizer.max_iter
            break
    if out is not None:
        save_training_checkpoint(out / "checkpoint", ansatz, params, state, it, **extra)
    return TrainResult(params, trace, state, len(trace), stopped, tick() - t0)


def read_trace(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "iteration" else float(v)) for k, v in r.items()} for r in rows]


def optimizer_to_dict(optimizer):
    return asdict(optimizer)


def dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=float))
