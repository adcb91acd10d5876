"""Forward and backward passes for the four layer families.

Every layer stores its parameters as named numpy arrays (usually views into
a model-wide flat vector).  ``forward`` returns the output together with a
cache; ``backward`` consumes that cache and returns ``(grads, dX)`` where
``grads`` maps parameter names to arrays of the parameter's shape.

Gradients are summed over the batch.  The loss owns any ``1/B`` factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spline import (
    KnotVector,
    SharedBasis,
    basis_values_and_derivatives,
    build_uniform_knots,
    gather_coeffs,
)

WAVKAN_SCALE_FLOOR = 1e-3


def sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def silu(u):
    return u * sigmoid(u)


def silu_grad(u):
    s = sigmoid(u)
    return s * (1.0 + u * (1.0 - s))


def mexican_hat(u):
    return (1.0 - u * u) * np.exp(-0.5 * u * u)


def mexican_hat_grad(u):
    return (u**3 - 3.0 * u) * np.exp(-0.5 * u * u)


@dataclass
class LayerCache:
    """Intermediates from one forward call, consumed by the matching backward."""

    kind: str
    X: np.ndarray
    data: dict = field(default_factory=dict)


def _check_input(X, n_in):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_in:
        raise ValueError(f"expected input of shape (B, {n_in}), got {X.shape}")
    return X


def _check_grad_out(cache, dY, kind, n_out):
    if cache.kind != kind:
        raise ValueError(f"cache from a {cache.kind!r} layer passed to a {kind!r} layer")
    dY = np.asarray(dY, dtype=np.float64)
    if dY.shape != (cache.X.shape[0], n_out):
        raise ValueError(f"dY has shape {dY.shape}, expected {(cache.X.shape[0], n_out)}")
    return dY


class Layer:
    """Shape bookkeeping shared by all layer kinds."""

    kind = "layer"

    def __init__(self, n_in: int, n_out: int):
        if n_in < 1 or n_out < 1:
            raise ValueError("layer widths must be >= 1")
        self.n_in = n_in
        self.n_out = n_out
        self.params: dict[str, np.ndarray] = {
            name: np.zeros(shape) for name, shape in self.param_shapes()
        }

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        raise NotImplementedError

    def n_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.param_shapes())

    def bind(self, views: dict[str, np.ndarray]) -> None:
        """Point parameters at externally owned storage (values are kept)."""
        for name, shape in self.param_shapes():
            v = views[name]
            if v.shape != shape:
                raise ValueError(f"{name}: view shape {v.shape} != {shape}")
            v[...] = self.params[name]
            self.params[name] = v

    def project(self) -> None:
        """Restore parameter constraints after an optimizer step."""

    def forward(self, X):
        raise NotImplementedError

    def backward(self, cache: LayerCache, dY):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.n_in}, {self.n_out})"


class GsKanLayer(Layer):
    """``y_q = sum_p lambda[q, p] * psi(x_p + eps[q])`` with one shared spline ``psi``."""

    kind = "gskan"

    def __init__(self, n_in: int, n_out: int, kv: KnotVector):
        self.kv = kv
        super().__init__(n_in, n_out)

    def param_shapes(self):
        return [
            ("lambda", (self.n_out, self.n_in)),
            ("eps", (self.n_out,)),
            ("coeffs", (self.kv.n_coeffs,)),
        ]

    @property
    def basis(self) -> SharedBasis:
        return SharedBasis(self.kv, self.params["coeffs"])

    def forward(self, X):
        X = _check_input(X, self.n_in)
        lam, eps, coeffs = self.params["lambda"], self.params["eps"], self.params["coeffs"]
        t = X[:, None, :] + eps[None, :, None]  # (B, q, p)
        offset, vals, dvals = basis_values_and_derivatives(self.kv, t)
        c = gather_coeffs(coeffs, offset, self.kv.degree)
        psi = np.einsum("bqpr,bqpr->bqp", vals, c)
        dpsi = np.einsum("bqpr,bqpr->bqp", dvals, c)
        Y = np.einsum("bqp,qp->bq", psi, lam)
        cache = LayerCache(self.kind, X, dict(offset=offset, vals=vals, psi=psi, dpsi=dpsi))
        return Y, cache

    def backward(self, cache, dY):
        dY = _check_grad_out(cache, dY, self.kind, self.n_out)
        lam = self.params["lambda"]
        psi, dpsi = cache.data["psi"], cache.data["dpsi"]
        offset, vals = cache.data["offset"], cache.data["vals"]
        d = self.kv.degree

        d_lambda = np.einsum("bq,bqp->qp", dY, psi)
        w = dY[:, :, None] * lam[None, :, :]  # dL/dpsi per (b, q, p)
        g = w * dpsi
        d_eps = g.sum(axis=(0, 2))
        dX = g.sum(axis=1)
        idx = offset[..., None] + np.arange(d + 1)
        d_coeffs = np.bincount(
            idx.ravel(), weights=(w[..., None] * vals).ravel(), minlength=self.kv.n_coeffs
        )
        return {"lambda": d_lambda, "eps": d_eps, "coeffs": d_coeffs}, dX


ACTIVATIONS = {
    "identity": (lambda u: u, lambda u: np.ones_like(u)),
    "relu": (lambda u: np.maximum(u, 0.0), lambda u: (u > 0).astype(np.float64)),
    "silu": (silu, silu_grad),
}


class DenseLayer(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, activation: str = "identity"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        super().__init__(n_in, n_out)

    def param_shapes(self):
        return [("weights", (self.n_out, self.n_in)), ("biases", (self.n_out,))]

    def forward(self, X):
        X = _check_input(X, self.n_in)
        u = X @ self.params["weights"].T + self.params["biases"]
        act, _ = ACTIVATIONS[self.activation]
        return act(u), LayerCache(self.kind, X, dict(u=u))

    def backward(self, cache, dY):
        dY = _check_grad_out(cache, dY, self.kind, self.n_out)
        _, act_grad = ACTIVATIONS[self.activation]
        du = dY * act_grad(cache.data["u"])
        grads = {"weights": du.T @ cache.X, "biases": du.sum(axis=0)}
        return grads, du @ self.params["weights"]


class WavKanLayer(Layer):
    """Per-edge ``w * psi((x - t) / s)`` with a Mexican-hat mother wavelet."""

    kind = "wavkan"

    def param_shapes(self):
        shape = (self.n_out, self.n_in)
        return [("w", shape), ("s", shape), ("t", shape)]

    def project(self):
        s = self.params["s"]
        small = np.abs(s) < WAVKAN_SCALE_FLOOR
        if np.any(small):
            s[small] = np.where(s[small] < 0, -WAVKAN_SCALE_FLOOR, WAVKAN_SCALE_FLOOR)

    def forward(self, X):
        X = _check_input(X, self.n_in)
        w, s, t = self.params["w"], self.params["s"], self.params["t"]
        u = (X[:, None, :] - t) / s  # (B, q, p)
        psi = mexican_hat(u)
        Y = np.einsum("bqp,qp->bq", psi, w)
        return Y, LayerCache(self.kind, X, dict(u=u, psi=psi))

    def backward(self, cache, dY):
        dY = _check_grad_out(cache, dY, self.kind, self.n_out)
        w, s = self.params["w"], self.params["s"]
        u, psi = cache.data["u"], cache.data["psi"]
        d_w = np.einsum("bq,bqp->qp", dY, psi)
        du = dY[:, :, None] * w * mexican_hat_grad(u)
        dx_edge = du / s  # du/dx = 1/s, du/dt = -1/s, du/ds = -u/s
        grads = {
            "w": d_w,
            "s": -(dx_edge * u).sum(axis=0),
            "t": -dx_edge.sum(axis=0),
        }
        return grads, dx_edge.sum(axis=1)


class EdgeSplineKanLayer(Layer):
    """Standard KAN layer: a unique spline per edge plus a SiLU base path.

    ``y_q = sum_p base_w[q,p] * silu(x_p) + scaler[q,p] * sum_j c[q,p,j] B_j(x_p)``
    """

    kind = "edgespline"

    def __init__(self, n_in: int, n_out: int, grid: int, degree: int = 3, domain=(-1.0, 1.0)):
        self.grid = grid
        self.kv = build_uniform_knots(domain[0], domain[1], grid + 2 * degree + 1, degree)
        super().__init__(n_in, n_out)

    def param_shapes(self):
        edges = (self.n_out, self.n_in)
        return [
            ("coeffs", edges + (self.kv.n_coeffs,)),
            ("base_w", edges),
            ("scaler", edges),
        ]

    def _dense_basis(self, X):
        offset, vals, dvals = basis_values_and_derivatives(self.kv, X)  # (B, p, r)
        B, n_in = X.shape
        full = np.zeros((B, n_in, self.kv.n_coeffs))
        dfull = np.zeros_like(full)
        idx = offset[..., None] + np.arange(self.kv.degree + 1)
        np.put_along_axis(full, idx, vals, axis=-1)
        np.put_along_axis(dfull, idx, dvals, axis=-1)
        return full, dfull

    def forward(self, X):
        X = _check_input(X, self.n_in)
        full, dfull = self._dense_basis(X)
        S = np.einsum("bpj,qpj->bqp", full, self.params["coeffs"])
        Y = silu(X) @ self.params["base_w"].T + np.einsum("bqp,qp->bq", S, self.params["scaler"])
        return Y, LayerCache(self.kind, X, dict(full=full, dfull=dfull, S=S))

    def backward(self, cache, dY):
        dY = _check_grad_out(cache, dY, self.kind, self.n_out)
        X = cache.X
        full, dfull, S = cache.data["full"], cache.data["dfull"], cache.data["S"]
        coeffs, base_w, scaler = self.params["coeffs"], self.params["base_w"], self.params["scaler"]

        d_base = dY.T @ silu(X)
        d_scaler = np.einsum("bq,bqp->qp", dY, S)
        d_coeffs = scaler[..., None] * np.einsum("bq,bpj->qpj", dY, full)
        dS_dx = np.einsum("bpj,qpj->bqp", dfull, coeffs)
        dX = (dY @ base_w) * silu_grad(X) + np.einsum("bq,qp,bqp->bp", dY, scaler, dS_dx)
        return {"coeffs": d_coeffs, "base_w": d_base, "scaler": d_scaler}, dX
