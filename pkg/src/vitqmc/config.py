"""Run configuration: a JSON document checked against a fixed schema.

Every block has defaults; a user file may only override keys that exist. The
defaults reproduce the reference setup (ViT of 10 tokens, 14-dim embedding, 2 heads,
3 core MLP layers, a 5-unit post-processor; 4096 samples per step; SR with a warmed-up
then decaying learning rate and a linearly shrinking diagonal shift; 250 iterations).
"""
import copy
import json
from pathlib import Path

from .ansatz import FFNN, RBM, ViT
from .hamiltonian import lr_ising
from .sampler import SamplerConfig
from .sr import OptimizerConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "model": {"N": 50, "alpha": 2.5, "J": -2.09, "b": 1.0, "h_x": 1.0, "kac_on": True,
              "include_self_term": True},
    "ansatz": {"type": "vit", "hyperparameters": {}},
    "sampler": {"n_chains": 1024, "samples_per_iteration": 4096, "burn_in": None, "sweep": None,
                "local_weight": 3.0, "global_weight": 1.0},
    "optimizer": {"lr_initial": 0.1, "lr_peak": 2.0, "lr_warmup": 75, "lr_decay": 0.995,
                  "shift_start": 1e-2, "shift_end": 1e-4, "max_iter": 250, "checkpoint_every": 50},
    "output": "runs/default",
    "seed": 0,
}

ANSATZ_DEFAULTS = {
    "vit": {"token_dim": None, "embed_dim": 14, "heads": 2, "core_mlp_layers": 3,
            "postprocessor_dims": [5], "symmetrize": "equivariant"},
    "rbm": {"density": 1, "width_factor": 2, "hidden": None},
    "mlp": {"widths": None, "activation": "logcosh"},
}

_NUMBER = (int, float)


def _typecheck(path, default, value):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, _NUMBER):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
    return value


def _merge(path, defaults, user):
    if not isinstance(user, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(user).__name__}")
    unknown = sorted(set(user) - set(defaults))
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {unknown}")
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        sub = f"{path}.{key}" if path else key
        if isinstance(defaults[key], dict) and key != "hyperparameters":
            out[key] = _merge(sub, defaults[key], value)
        elif key == "hyperparameters":
            if not isinstance(value, dict):
                raise ConfigError(f"{sub}: expected an object")
            out[key] = dict(value)
        else:
            out[key] = _typecheck(sub, defaults[key], value)
    return out


def resolve(user=None):
    """Merge ``user`` over the defaults and validate; returns a plain dict."""
    cfg = _merge("", DEFAULTS, user or {})
    kind = cfg["ansatz"]["type"]
    if kind not in ANSATZ_DEFAULTS:
        raise ConfigError(f"ansatz.type: expected one of {sorted(ANSATZ_DEFAULTS)}, got {kind!r}")
    cfg["ansatz"]["hyperparameters"] = _merge("ansatz.hyperparameters", ANSATZ_DEFAULTS[kind],
                                              cfg["ansatz"]["hyperparameters"])
    m = cfg["model"]
    if m["N"] < 1:
        raise ConfigError(f"model.N must be >= 1, got {m['N']}")
    if m["alpha"] < 0:
        raise ConfigError(f"model.alpha must be >= 0, got {m['alpha']}")
    if cfg["optimizer"]["max_iter"] < 0:
        raise ConfigError("optimizer.max_iter must be >= 0")
    try:
        build_sampler(cfg)
        build_optimizer(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return resolve(user)


def apply_overrides(cfg, assignments):
    """Apply ``a.b.c=value`` strings (value parsed as JSON, else taken as a string)."""
    user = copy.deepcopy(cfg)
    kind = user.get("ansatz", {}).get("type")
    touched = set()
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.split(".")
        node = user
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"override {key!r}: {p!r} is not a block")
            node = node[p]
        node[parts[-1]] = value
        touched.add(key)
    # a new architecture starts from its own defaults, not the old one's hyperparameters
    if user.get("ansatz", {}).get("type") != kind and not any(
            k.startswith("ansatz.hyperparameters") for k in touched):
        user["ansatz"]["hyperparameters"] = {}
    return resolve(user)


# --------------------------------------------------------------------------
# builders

def build_model(cfg):
    m = cfg["model"]
    return lr_ising(m["N"], m["alpha"], m["J"], b=m["b"], kac_on=m["kac_on"], field=m["h_x"],
                    include_self_term=m["include_self_term"])


def build_ansatz_from(cfg, n_sites=None):
    n = cfg["model"]["N"] if n_sites is None else n_sites
    kind = cfg["ansatz"]["type"]
    hp = dict(cfg["ansatz"]["hyperparameters"])
    try:
        if kind == "vit":
            symmetrize = hp.pop("symmetrize")
            hp["postprocessor_dims"] = tuple(hp["postprocessor_dims"])
            return ViT(n, symmetrize=symmetrize, **hp)
        if kind == "rbm":
            return RBM(n, **hp)
        widths = hp.pop("widths")
        return FFNN(n, widths=tuple(widths) if widths else None, **hp)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"ansatz: {exc}") from exc


def build_sampler(cfg, seed=None):
    s = cfg["sampler"]
    return SamplerConfig(s["n_chains"], s["samples_per_iteration"], s["burn_in"], s["sweep"],
                         s["local_weight"], s["global_weight"], cfg["seed"] if seed is None else seed)


def build_optimizer(cfg):
    return OptimizerConfig(**cfg["optimizer"])
