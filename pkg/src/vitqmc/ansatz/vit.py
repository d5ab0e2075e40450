"""Vision-transformer wave function with circulant factored attention.

Pipeline for one configuration, repeated for each of the ``n`` cyclic token shifts ``t``::

    tokens -> linear embedding -> x
    y = x + MHA(LN(x))             circulant attention, per head A_i = sum_j c[(j-i) % n] V x_j
    z = y + MLP(LN(y))             SiLU between layers, last layer linear
    log cosh(z) -> mean over tokens -> post-processor MLP (SiLU) -> sum -> scale * r + offset = o_t

and finally ``log psi = log(mean_t exp(o_t))``.

Every stage before pooling is token-shift equivariant and the mean pooling is invariant,
so all branches agree; by default a single branch is evaluated. ``symmetrize="explicit"``
runs all ``n`` shifted branches instead.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .base import Ansatz, Layout
from .layers import (dense, dense_backward, layer_norm, layer_norm_backward, logcosh,
                     mlp_backward, mlp_forward_cached, per_sample)


@dataclass(frozen=True)
class ViTHyperparameters:
    n_tokens: int
    token_dim: int
    embed_dim: int = 14
    heads: int = 2
    core_mlp_layers: int = 3
    postprocessor_dims: tuple = (5,)

    def __post_init__(self):
        object.__setattr__(self, "postprocessor_dims", tuple(int(d) for d in self.postprocessor_dims))
        dims = [self.n_tokens, self.token_dim, self.embed_dim, self.heads, self.core_mlp_layers,
                *self.postprocessor_dims]
        if min(dims) < 1:
            raise ValueError(f"all ViT dimensions must be >= 1: {self}")
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2 for layer norm")

    @property
    def n_sites(self):
        return self.n_tokens * self.token_dim

    @property
    def head_dim(self):
        return self.embed_dim // self.heads

    @classmethod
    def for_chain(cls, n_sites, token_dim=None, **kw):
        """Default (table) setting: 10 tokens of N/10 spins, falling back to d=1 for N < 10."""
        if token_dim is None:
            token_dim = n_sites // 10 if n_sites % 10 == 0 and n_sites >= 10 else 1
        if n_sites % token_dim:
            raise ValueError(f"N={n_sites} is not divisible by token dimension {token_dim}")
        return cls(n_tokens=n_sites // token_dim, token_dim=token_dim, **kw)


def tokenize(s, d):
    s = np.asarray(s)
    n = s.shape[-1]
    if n % d:
        raise ValueError(f"configuration of length {n} cannot be split into tokens of size {d}")
    return s.reshape(s.shape[:-1] + (n // d, d))


def embed(tokens, W_emb, b_emb):
    return dense(np.asarray(tokens, dtype=np.float64), W_emb, b_emb)


def circulant(c):
    """(..., n) generators -> (..., n, n) matrices with a[i, j] = c[(j - i) % n]."""
    n = c.shape[-1]
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return c[..., idx]


def factored_attention(x, c, V):
    """x: (..., n, h, p); c: (h, n); V: (h, p, p) -> (..., n, h, p)."""
    if x.shape[-2:] != V.shape[-3:-1] or c.shape[-2:] != (V.shape[-3], x.shape[-3]):
        raise ValueError(f"attention shape mismatch: x{x.shape}, c{c.shape}, V{V.shape}")
    xh = np.swapaxes(x, -3, -2)                      # (..., h, n, p)
    Vt, C = np.swapaxes(V, -1, -2), circulant(c)
    if V.ndim == 4:                                   # one weight set per sample
        Vt, C = per_sample(Vt, xh, 3), per_sample(C, xh, 3)
    return np.swapaxes(C @ (xh @ Vt), -3, -2)


class ViT(Ansatz):
    kind = "vit"

    def __init__(self, n_sites=None, hyper=None, symmetrize="equivariant", **kw):
        if symmetrize not in ("equivariant", "explicit"):
            raise ValueError(f"symmetrize must be 'equivariant' or 'explicit', got {symmetrize!r}")
        self.symmetrize = symmetrize
        if hyper is None:
            hyper = ViTHyperparameters.for_chain(n_sites, **kw)
        elif kw:
            raise TypeError("pass either hyper or keyword hyperparameters, not both")
        if n_sites is not None and n_sites != hyper.n_sites:
            raise ValueError(f"N={n_sites} does not match n_tokens*token_dim={hyper.n_sites}")
        self.hyper = hyper
        D, d, n, h, p = hyper.embed_dim, hyper.token_dim, hyper.n_tokens, hyper.heads, hyper.head_dim
        shapes = [("embed.W", (D, d)), ("embed.b", (D,)),
                  ("ln1.gain", (D,)), ("ln1.offset", (D,)),
                  ("attn.c", (h, n)), ("attn.V", (h, p, p)),
                  ("ln2.gain", (D,)), ("ln2.offset", (D,))]
        for k in range(hyper.core_mlp_layers):
            shapes += [(f"mlp.{k}.W", (D, D)), (f"mlp.{k}.b", (D,))]
        prev = D
        for k, dk in enumerate(hyper.postprocessor_dims):
            shapes += [(f"post.{k}.W", (dk, prev)), (f"post.{k}.b", (dk,))]
            prev = dk
        shapes += [("final.scale", ()), ("final.offset", ())]
        super().__init__(hyper.n_sites, Layout(shapes))
        self._shift_index = (np.arange(n)[:, None] + np.arange(n)[None, :]) % n

    def hyperparameters(self):
        hp = asdict(self.hyper)
        hp["postprocessor_dims"] = list(hp["postprocessor_dims"])
        return {"n_sites": self.n_sites, **hp, "symmetrize": self.symmetrize}

    @classmethod
    def from_hyperparameters(cls, n_sites, **hp):
        symmetrize = hp.pop("symmetrize", "equivariant")
        return cls(n_sites, ViTHyperparameters(**hp), symmetrize=symmetrize)

    def _init_block(self, name, shape, rng):
        if name.endswith(".gain"):
            return np.ones(shape)
        if name == "attn.c":
            return rng.normal(0.0, 1.0 / np.sqrt(shape[-1]), size=shape)
        if name == "final.scale":
            return np.array(1.0)
        return super()._init_block(name, shape, rng)

    def _lists(self, p):
        hp = self.hyper
        core = ([p[f"mlp.{k}.W"] for k in range(hp.core_mlp_layers)],
                [p[f"mlp.{k}.b"] for k in range(hp.core_mlp_layers)])
        npp = len(hp.postprocessor_dims)
        post = ([p[f"post.{k}.W"] for k in range(npp)], [p[f"post.{k}.b"] for k in range(npp)])
        return core, post

    # ------------------------------------------------------------------ forward

    def shifted_tokens(self, x, explicit=False):
        """(B, N) -> (B, T, n, d) with branch t holding tokens rolled left by t."""
        tok = tokenize(x, self.hyper.token_dim)
        if self.symmetrize == "equivariant" and not explicit:
            return tok[:, None]
        return tok[:, self._shift_index, :]

    def core_block(self, e, p, keep=False):
        """Core block on embedded tokens e: (..., n, D)."""
        hp = self.hyper
        core, _ = self._lists(p)
        l1, ln1_cache = layer_norm(e, p["ln1.gain"], p["ln1.offset"])
        l1h = l1.reshape(l1.shape[:-1] + (hp.heads, hp.head_dim))
        att = factored_attention(l1h, p["attn.c"], p["attn.V"])
        y = e + att.reshape(e.shape)
        l2, ln2_cache = layer_norm(y, p["ln2.gain"], p["ln2.offset"])
        m, mlp_cache = mlp_forward_cached(core[0], core[1], "silu", l2, final_activation="linear")
        z = y + m
        if not np.all(np.isfinite(z)):
            raise FloatingPointError("non-finite activation in ViT core block")
        out = logcosh(z)
        if keep:
            return out, dict(ln1=ln1_cache, l1h=l1h, y=y, ln2=ln2_cache, mlp=mlp_cache, z=z)
        return out

    def branch_outputs(self, values, x, keep=False, explicit=False):
        p = self.layout.unpack(values)
        _, post = self._lists(p)
        xs = self.shifted_tokens(x, explicit)
        e = dense(xs, p["embed.W"], p["embed.b"])
        res = self.core_block(e, p, keep)
        out, cache = res if keep else (res, None)
        pooled = out.mean(axis=-2)
        q, post_cache = mlp_forward_cached(post[0], post[1], "silu", pooled)
        r = q.sum(axis=-1)
        scale, offset = p["final.scale"], p["final.offset"]
        if scale.ndim == 1:
            scale, offset = scale[:, None], offset[:, None]
        o = scale * r + offset
        if keep:
            cache.update(p=p, xs=xs, post=post_cache, q=q, r=r)
            return o, cache
        return o

    @staticmethod
    def _symmetrize(o):
        top = o.max(axis=-1, keepdims=True)
        w = np.exp(o - top)
        total = w.sum(axis=-1)
        lp = top[..., 0] + np.log(total) - np.log(o.shape[-1])
        return lp, w / total[..., None]

    def _forward(self, values, x):
        return self._symmetrize(self.branch_outputs(values, x))[0]

    # ------------------------------------------------------------------ backward

    def _forward_backward(self, values, x):
        hp = self.hyper
        bsz = x.shape[0]
        o, c = self.branch_outputs(values, x, keep=True)
        lp, w = self._symmetrize(o)
        p = c["p"]
        core, post = self._lists(p)
        g = {}

        g["final.scale"] = (w * c["r"]).sum(axis=1)
        g["final.offset"] = w.sum(axis=1)
        gq = np.broadcast_to((w * p["final.scale"])[..., None], c["q"].shape)
        post_grads, gpool = mlp_backward(gq, post[0], c["post"], "silu")
        for k, (dW, db) in enumerate(post_grads):
            g[f"post.{k}.W"], g[f"post.{k}.b"] = dW, db

        gout = np.broadcast_to(gpool[:, :, None, :] / hp.n_tokens, c["z"].shape)
        gz = gout * np.tanh(c["z"])
        mlp_grads, gl2 = mlp_backward(gz, core[0], c["mlp"], "silu", final_activation="linear")
        for k, (dW, db) in enumerate(mlp_grads):
            g[f"mlp.{k}.W"], g[f"mlp.{k}.b"] = dW, db
        g["ln2.gain"], g["ln2.offset"], gy = layer_norm_backward(gl2, c["ln2"], p["ln2.gain"])
        gy = gy + gz

        ga = gy.reshape(gy.shape[:-1] + (hp.heads, hp.head_dim))
        l1h = c["l1h"]
        V = p["attn.V"]
        # head-major views: (B, T, h, n, p)
        xh = np.swapaxes(l1h, 2, 3)
        gah = np.swapaxes(ga, 2, 3)
        u = xh @ np.swapaxes(V, -1, -2)
        # dc[k] = sum_i <g_A[i], u[(i + k) % n]>; as a matrix G[i, j] = <g_A[i], u[j]>
        G = (gah @ np.swapaxes(u, -1, -2)).sum(axis=1)          # (B, h, n, n)
        n = hp.n_tokens
        diag_idx = (np.arange(n)[None, :] + np.arange(n)[:, None]) % n   # [k, i] -> (i + k) % n
        g["attn.c"] = G[:, :, np.arange(n)[None, :], diag_idx].sum(axis=-1)
        guh = np.swapaxes(circulant(p["attn.c"]), -1, -2) @ gah   # (B, T, h, n, p)
        g["attn.V"] = (np.swapaxes(guh, -1, -2) @ xh).sum(axis=1)
        gl1 = np.swapaxes(guh @ V, 2, 3).reshape(gy.shape)
        g["ln1.gain"], g["ln1.offset"], ge = layer_norm_backward(gl1, c["ln1"], p["ln1.gain"])
        ge = ge + gy

        g["embed.W"], g["embed.b"], _ = dense_backward(ge, c["xs"], p["embed.W"])
        return lp, self.layout.pack(g, batch=bsz)


def vit_log_psi(ansatz, params, s, derivatives=True):
    return ansatz.evaluate(params, s, derivatives)


def symmetrize_and_reduce(ansatz, params, s):
    """log psi of one configuration from its n shifted branch outputs."""
    o = ansatz.branch_outputs(Ansatz._values(params), ansatz._check(s), explicit=True)
    return float(ViT._symmetrize(o)[0][0])
