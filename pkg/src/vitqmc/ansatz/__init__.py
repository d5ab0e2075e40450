from .base import (Ansatz, AnsatzParameters, Layout, LogAmplitudeResult, check_gradients,
                   load_checkpoint, save_checkpoint)
from .layers import layer_norm, mlp_forward
from .mlp import FFNN, ffnn_log_psi
from .rbm import RBM, rbm_log_psi
from .vit import (ViT, ViTHyperparameters, circulant, embed, factored_attention,
                  symmetrize_and_reduce, tokenize, vit_log_psi)


def build_ansatz(kind, n_sites, **hyper):
    if kind == "vit":
        return ViT.from_hyperparameters(n_sites, **hyper) if hyper else ViT(n_sites)
    if kind == "rbm":
        return RBM(n_sites, **hyper)
    if kind == "mlp":
        return FFNN(n_sites, **hyper)
    raise ValueError(f"unknown ansatz type {kind!r} (expected vit, rbm or mlp)")
