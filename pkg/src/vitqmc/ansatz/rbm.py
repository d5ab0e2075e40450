"""RBM-like ansatz: log psi = sum_j log cosh((W s + b)_j), visible bias fixed at zero."""
import numpy as np

from .base import Ansatz, Layout
from .layers import dense, logcosh


INIT_STD = 0.01


class RBM(Ansatz):
    """Real-parameter RBM.

    ``width_factor`` scales the hidden layer to ``width_factor * density * N`` units. The
    default of 2 gives the same number of real parameters as a complex RBM of the same
    density (real and imaginary parts of W and b), e.g. 5100 at N=50, density 1.
    """

    kind = "rbm"

    def __init__(self, n_sites, density=1, width_factor=2, hidden=None):
        if hidden is None:
            if int(density) != density or density < 1:
                raise ValueError(f"RBM density must be a positive integer, got {density}")
            hidden = int(width_factor * density * n_sites)
        self.density = density
        self.width_factor = width_factor
        self.hidden = int(hidden)
        super().__init__(n_sites, Layout([("W", (self.hidden, n_sites)), ("b", (self.hidden,))]))

    def hyperparameters(self):
        return {"n_sites": self.n_sites, "density": self.density,
                "width_factor": self.width_factor, "hidden": self.hidden}

    def _init_block(self, name, shape, rng):
        # small weights keep log psi nearly flat at the start; fan-in scaling makes the
        # sum over hundreds of hidden units swing by tens and stalls the first SR steps
        return rng.normal(0.0, INIT_STD, size=shape)

    def _theta(self, values, x):
        return dense(x, self.layout.view(values, "W"), self.layout.view(values, "b"))

    def _forward(self, values, x):
        return logcosh(self._theta(values, x)).sum(axis=1)

    def _forward_backward(self, values, x):
        theta = self._theta(values, x)
        t = np.tanh(theta)
        grads = np.empty((x.shape[0], self.parameter_count))
        grads[:, self.layout.slices["W"]] = (t[:, :, None] * x[:, None, :]).reshape(x.shape[0], -1)
        grads[:, self.layout.slices["b"]] = t
        return logcosh(theta).sum(axis=1), grads


def rbm_log_psi(params, s, derivatives=True):
    """Evaluate an RBM whose shapes are read off the parameter layout."""
    hidden, n = params.layout.shapes["W"]
    return RBM(n, hidden=hidden).evaluate(params, s, derivatives)
