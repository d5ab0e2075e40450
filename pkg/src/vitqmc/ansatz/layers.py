"""Layer primitives with hand-written reverse passes.

Everything works on arrays with a leading sample axis ``B`` and arbitrary middle axes;
parameter gradients are returned per sample (shape ``(B, *param.shape)``) because the
SR step needs the full matrix of log-derivatives, not their sum.
"""
import numpy as np

LN_EPS = 1e-6


def logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x):
    return x * sigmoid(x)


def silu_grad(x):
    sg = sigmoid(x)
    return sg * (1.0 + x * (1.0 - sg))


ACTIVATIONS = {
    "linear": (lambda x: x, lambda x: np.ones_like(x)),
    "logcosh": (logcosh, np.tanh),
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
    "silu": (silu, silu_grad),
}


def activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


def per_sample(param, like, trailing):
    """Reshape a per-sample parameter (B, *shape) to broadcast against ``like``.

    ``trailing`` is the number of feature axes of ``param`` after the sample axis.
    """
    extra = like.ndim - 1 - trailing
    return param.reshape(param.shape[:1] + (1,) * extra + param.shape[1:])


def dense(x, W, b):
    """y = x W^T + b. A 3-d ``W`` (and 2-d ``b``) holds one weight set per sample."""
    if x.shape[-1] != W.shape[-1]:
        raise ValueError(f"dense layer expects input dim {W.shape[-1]}, got {x.shape[-1]}")
    if W.ndim == 2:
        return x @ W.T + b
    xe = x[:, None, :] if x.ndim == 2 else x
    Wt = np.swapaxes(W, -1, -2)
    out = xe @ Wt.reshape(Wt.shape[:1] + (1,) * (xe.ndim - 3) + Wt.shape[1:])
    if x.ndim == 2:
        out = out[:, 0]
    return out + per_sample(b, out, 1)


def dense_backward(g, x, W):
    """Per-sample (dW, db) and the input cotangent for y = x W^T + b."""
    bsz = g.shape[0]
    g2 = g.reshape(bsz, -1, g.shape[-1])
    x2 = x.reshape(bsz, -1, x.shape[-1])
    dW = np.matmul(g2.transpose(0, 2, 1), x2)
    db = g2.sum(axis=1)
    return dW, db, g @ W


def layer_norm(x, gain, offset, eps=LN_EPS):
    """Normalise the last axis by its population std (floored at ``eps``)."""
    if x.shape[-1] < 2:
        raise ValueError("layer norm needs at least two features")
    xc = x - x.mean(axis=-1, keepdims=True)
    sd = np.sqrt((xc * xc).mean(axis=-1, keepdims=True))
    sd_eff = np.maximum(sd, eps)
    xh = xc / sd_eff
    if gain.ndim == 2:
        gain, offset = per_sample(gain, xh, 1), per_sample(offset, xh, 1)
    return gain * xh + offset, (xh, sd_eff, sd > eps)


def layer_norm_backward(g, cache, gain):
    xh, sd_eff, live = cache
    bsz = g.shape[0]
    dgain = (g * xh).reshape(bsz, -1, g.shape[-1]).sum(axis=1)
    doffset = g.reshape(bsz, -1, g.shape[-1]).sum(axis=1)
    gx = g * gain
    gm = gx.mean(axis=-1, keepdims=True)
    gxm = (gx * xh).mean(axis=-1, keepdims=True)
    dx = np.where(live, gx - gm - xh * gxm, gx - gm) / sd_eff
    return dgain, doffset, dx


def mlp_forward(weights, biases, activation_name, x, final_activation=None):
    """Affine + elementwise activation per layer; returns the output only."""
    out, _ = mlp_forward_cached(weights, biases, activation_name, x, final_activation)
    return out


def mlp_forward_cached(weights, biases, activation_name, x, final_activation=None):
    if len(weights) != len(biases):
        raise ValueError("weights and biases must have the same number of layers")
    f, _ = activation(activation_name)
    f_last, _ = activation(final_activation or activation_name)
    cache = []
    h = x
    for k, (W, b) in enumerate(zip(weights, biases)):
        if W.shape[-2] != b.shape[-1]:
            raise ValueError(f"layer {k}: weight rows {W.shape[-2]} != bias length {b.shape[-1]}")
        pre = dense(h, W, b)
        cache.append((h, pre))
        h = (f_last if k == len(weights) - 1 else f)(pre)
    return h, cache


def mlp_backward(g, weights, cache, activation_name, final_activation=None):
    """Per-sample parameter grads [(dW, db), ...] and the input cotangent."""
    _, df = activation(activation_name)
    _, df_last = activation(final_activation or activation_name)
    grads = [None] * len(weights)
    for k in range(len(weights) - 1, -1, -1):
        h_in, pre = cache[k]
        g = g * (df_last if k == len(weights) - 1 else df)(pre)
        dW, db, g = dense_backward(g, h_in, weights[k])
        grads[k] = (dW, db)
    return grads, g
