"""Metropolis-Hastings sampling of |psi|^2 with mixed single-flip / global-inversion moves.

All chains advance in lock step so one batched amplitude call serves every chain. Each
chain draws its random numbers from a counter-based stream ``u(seed, chain, step, slot)``,
which makes the sample stream independent of how chains are grouped or scheduled.
"""
import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import NonFiniteAmplitudeError
from .kernels import counter_uniforms

log = logging.getLogger(__name__)

LOCAL, GLOBAL = 0, 1
MOVE_NAMES = ("local", "global")


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 1024
    samples_per_iteration: int = 4096
    burn_in: int = None            # steps per chain at initialisation; default 10 N
    sweep: int = None              # steps between retained samples; default N
    local_weight: float = 3.0
    global_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.samples_per_iteration % self.n_chains:
            raise ValueError(f"samples_per_iteration={self.samples_per_iteration} is not a multiple "
                             f"of n_chains={self.n_chains}")
        if not (self.local_weight > 0 and self.global_weight > 0):
            raise ValueError("move weights must be positive")

    @property
    def global_probability(self):
        return self.global_weight / (self.local_weight + self.global_weight)

    def burn_in_steps(self, n_sites):
        return 10 * n_sites if self.burn_in is None else int(self.burn_in)

    def sweep_steps(self, n_sites):
        return n_sites if self.sweep is None else int(self.sweep)


@dataclass
class SamplerState:
    spins: np.ndarray              # (C, N) int8
    log_psi: np.ndarray            # (C,)
    step: int = 0
    proposed: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=np.int64))
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=np.int64))
    rejected_nonfinite: int = 0

    @property
    def n_chains(self):
        return self.spins.shape[0]

    def acceptance(self):
        return {MOVE_NAMES[k]: (float(self.accepted[k] / self.proposed[k]) if self.proposed[k] else float("nan"))
                for k in (LOCAL, GLOBAL)}

    def reset_counters(self):
        self.proposed[:] = 0
        self.accepted[:] = 0
        self.rejected_nonfinite = 0

    def copy(self):
        return SamplerState(self.spins.copy(), self.log_psi.copy(), self.step,
                            self.proposed.copy(), self.accepted.copy(), self.rejected_nonfinite)

    def to_arrays(self):
        return {"spins": self.spins, "log_psi": self.log_psi, "step": np.array(self.step),
                "proposed": self.proposed, "accepted": self.accepted}

    @classmethod
    def from_arrays(cls, arrays):
        return cls(np.array(arrays["spins"], dtype=np.int8), np.array(arrays["log_psi"]),
                   int(arrays["step"]), np.array(arrays["proposed"]), np.array(arrays["accepted"]))


def propose_local_flip(spins, u):
    """Negate one uniformly chosen site per chain; ``u`` in [0, 1) picks the site."""
    spins = np.atleast_2d(spins)
    n = spins.shape[1]
    site = np.minimum((np.asarray(u) * n).astype(np.int64), n - 1)
    cand = spins.copy()
    rows = np.arange(spins.shape[0])
    cand[rows, site] = -cand[rows, site]
    return cand


def propose_global_inversion(spins):
    return -np.asarray(spins)


def _uniforms(config, chain_ids, step):
    return counter_uniforms(config.seed, chain_ids, step, 3)


def init_state(config, n_sites, log_psi_fn, chain_ids=None):
    """Uniform random +-1 chains (drawn from the counter stream at step 0), then burn-in."""
    chain_ids = np.arange(config.n_chains) if chain_ids is None else np.asarray(chain_ids)
    bits = counter_uniforms(config.seed ^ 0x5EED, chain_ids, 0, n_sites)
    spins = np.where(bits < 0.5, 1, -1).astype(np.int8)
    lp = np.asarray(log_psi_fn(spins), dtype=np.float64)
    bad = ~np.isfinite(lp)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise NonFiniteAmplitudeError(f"non-finite log psi for the initial configuration of chain "
                                      f"{int(chain_ids[k])}", spins[k])
    state = SamplerState(spins, lp)
    for _ in range(config.burn_in_steps(n_sites)):
        metropolis_step(state, log_psi_fn, config, chain_ids)
    state.reset_counters()
    return state


def metropolis_step(state, log_psi_fn, config, chain_ids=None):
    """Advance every chain by one Metropolis-Hastings step (in place)."""
    chain_ids = np.arange(state.n_chains) if chain_ids is None else chain_ids
    state.step += 1
    u = _uniforms(config, chain_ids, state.step)
    is_global = u[:, 0] < config.global_probability
    cand = propose_local_flip(state.spins, u[:, 1])
    cand[is_global] = -state.spins[is_global]
    lp_new = np.asarray(log_psi_fn(cand), dtype=np.float64)
    finite = np.isfinite(lp_new)
    with np.errstate(over="ignore", invalid="ignore"):
        log_ratio = 2.0 * (lp_new - state.log_psi)
        accept = finite & (np.log(np.maximum(u[:, 2], 1e-300)) < log_ratio)
    if not finite.all():
        state.rejected_nonfinite += int((~finite).sum())
        log.warning("rejected %d proposals with non-finite log psi", int((~finite).sum()))
    state.spins[accept] = cand[accept]
    state.log_psi[accept] = lp_new[accept]
    move = is_global.astype(np.int64)
    state.proposed += np.bincount(move, minlength=2)
    state.accepted += np.bincount(move[accept], minlength=2)
    return state


def sample_batch(state, log_psi_fn, config, chain_ids=None):
    """Collect ``samples_per_iteration`` configurations round-robin over chains.

    Returns ``(spins, log_psi)`` ordered as ``[round][chain]``.
    """
    n_sites = state.spins.shape[1]
    rounds = config.samples_per_iteration // config.n_chains
    spins = np.empty((rounds, state.n_chains, n_sites), dtype=np.int8)
    lps = np.empty((rounds, state.n_chains))
    for r in range(rounds):
        for _ in range(config.sweep_steps(n_sites)):
            metropolis_step(state, log_psi_fn, config, chain_ids)
        spins[r] = state.spins
        lps[r] = state.log_psi
    return spins.reshape(-1, n_sites), lps.reshape(-1)


def check_cached_log_psi(state, log_psi_fn, atol=1e-10):
    fresh = np.asarray(log_psi_fn(state.spins))
    return bool(np.allclose(fresh, state.log_psi, atol=atol, rtol=0))


class AcceptanceLog:
    """CSV log with columns iteration, move_type, proposed, accepted, rate.

    With ``append`` an existing log is continued (used when a run is resumed).
    """

    header = ("iteration", "move_type", "proposed", "accepted", "rate")

    def __init__(self, path, append=False):
        self.path = path
        if not (append and os.path.exists(path)):
            with open(path, "w", newline="") as fh:
                csv.writer(fh).writerow(self.header)

    def record(self, iteration, state):
        with open(self.path, "a", newline="") as fh:
            w = csv.writer(fh)
            for k in (LOCAL, GLOBAL):
                rate = state.accepted[k] / state.proposed[k] if state.proposed[k] else float("nan")
                w.writerow((iteration, MOVE_NAMES[k], int(state.proposed[k]), int(state.accepted[k]), repr(float(rate))))
