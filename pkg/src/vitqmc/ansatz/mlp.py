"""Feed-forward ansatz: psi = exp(sum of MLP outputs)."""
import numpy as np

from .base import Ansatz, Layout
from .layers import mlp_backward, mlp_forward_cached


class FFNN(Ansatz):
    kind = "mlp"

    def __init__(self, n_sites, widths=None, activation="logcosh"):
        if widths is None:
            widths = (2 * n_sites, n_sites)
        self.widths = tuple(int(w) for w in widths)
        if not self.widths or min(self.widths) < 1:
            raise ValueError(f"MLP widths must be positive, got {widths}")
        self.activation = activation
        shapes = []
        prev = n_sites
        for k, w in enumerate(self.widths):
            shapes += [(f"l{k}.W", (w, prev)), (f"l{k}.b", (w,))]
            prev = w
        super().__init__(n_sites, Layout(shapes))

    def hyperparameters(self):
        return {"n_sites": self.n_sites, "widths": list(self.widths), "activation": self.activation}

    def _weights(self, values):
        p = self.layout.unpack(values)
        n = len(self.widths)
        return [p[f"l{k}.W"] for k in range(n)], [p[f"l{k}.b"] for k in range(n)]

    def _forward(self, values, x):
        Ws, bs = self._weights(values)
        out, _ = mlp_forward_cached(Ws, bs, self.activation, x)
        return out.sum(axis=-1)

    def _forward_backward(self, values, x):
        Ws, bs = self._weights(values)
        out, cache = mlp_forward_cached(Ws, bs, self.activation, x)
        grads, _ = mlp_backward(np.ones_like(out), Ws, cache, self.activation)
        per = {}
        for k, (dW, db) in enumerate(grads):
            per[f"l{k}.W"] = dW
            per[f"l{k}.b"] = db
        return out.sum(axis=-1), self.layout.pack(per, batch=x.shape[0])


def ffnn_log_psi(params, s, activation="logcosh", derivatives=True):
    n_layers = len(params.layout.shapes) // 2
    widths = [params.layout.shapes[f"l{k}.b"][0] for k in range(n_layers)]
    n_sites = params.layout.shapes["l0.W"][1]
    return FFNN(n_sites, widths, activation).evaluate(params, s, derivatives)
