"""Neural-network variational Monte Carlo for the long-range transverse-field Ising chain."""
from ._accel import NUMBA_ENABLED
from .ansatz import FFNN, RBM, ViT, build_ansatz, check_gradients, load_checkpoint, save_checkpoint
from .exact import ground_state
from .hamiltonian import build_coupling, local_energies, lr_ising
from .sampler import SamplerConfig, sample_batch
from .sr import OptimizerConfig, train

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED", "FFNN", "RBM", "ViT", "build_ansatz", "check_gradients", "load_checkpoint",
    "save_checkpoint", "ground_state", "build_coupling", "local_energies", "lr_ising",
    "SamplerConfig", "sample_batch", "OptimizerConfig", "train", "__version__",
]
