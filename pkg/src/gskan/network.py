"""Model specs, construction, parameter accounting and checkpoints.

A :class:`Model` owns one flat float64 vector ``theta``; every layer parameter
is a reshaped view into it.  The optimizer updates ``theta`` in place and the
layers see the change immediately.  Gradients come back in the same layout.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .layers import DenseLayer, EdgeSplineKanLayer, GsKanLayer, Layer, WavKanLayer, silu
from .spline import build_uniform_knots, greville_abscissae

KINDS = ("gskan", "mlp", "wavkan", "edgespline")
CHECKPOINT_FORMAT = "gskan-checkpoint"
CHECKPOINT_VERSION = 1


class SpecError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    widths: tuple[int, ...]
    spline_K: int | None = None
    grid_G: int | None = None
    degree: int = 3
    domain: tuple[float, float] = (-1.0, 1.0)
    activation: str = "silu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if len(self.widths) < 2:
            raise SpecError(f"widths needs at least an input and an output size, got {list(self.widths)}")
        if any(w < 1 for w in self.widths):
            raise SpecError(f"all widths must be >= 1, got {list(self.widths)}")
        if len(self.domain) != 2 or not all(math.isfinite(v) for v in self.domain):
            raise SpecError(f"domain must be two finite numbers, got {self.domain}")
        if self.domain[0] >= self.domain[1]:
            raise SpecError(f"inverted domain {self.domain}")
        if not 1 <= self.degree <= 5:
            raise SpecError(f"spline degree must be in 1..5, got {self.degree}")
        needs_K = self.kind == "gskan"
        needs_G = self.kind == "edgespline"
        if needs_K != (self.spline_K is not None):
            raise SpecError(
                "spline_K is required for gskan" if needs_K else f"spline_K is not used by kind {self.kind!r}"
            )
        if needs_G != (self.grid_G is not None):
            raise SpecError(
                "grid_G is required for edgespline" if needs_G else f"grid_G is not used by kind {self.kind!r}"
            )
        if needs_K and self.spline_K < 2 * self.degree + 2:
            raise SpecError(f"insufficient knots for degree: K={self.spline_K}, d={self.degree}")
        if needs_G and self.grid_G < 1:
            raise SpecError(f"grid_G must be >= 1, got {self.grid_G}")
        if self.kind == "mlp" and self.activation not in ("relu", "silu"):
            raise SpecError(f"MLP activation must be relu or silu, got {self.activation!r}")

    @property
    def resolution(self) -> str:
        if self.kind == "gskan":
            return f"K={self.spline_K}"
        if self.kind == "edgespline":
            return f"G={self.grid_G}"
        return "-"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["domain"] = list(self.domain)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown model spec keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise SpecError(str(exc)) from None


@dataclass
class ParamReport:
    spec: ModelSpec
    layers: list[dict[str, int]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(sum(layer.values()) for layer in self.layers)

    def format(self) -> str:
        lines = [f"{self.spec.kind} {list(self.spec.widths)} {self.spec.resolution}"]
        for i, (a, b, layer) in enumerate(zip(self.spec.widths, self.spec.widths[1:], self.layers)):
            parts = ", ".join(f"{k}={v}" for k, v in layer.items())
            lines.append(f"  layer {i} [{a} -> {b}]: {parts} (sum {sum(layer.values())})")
        lines.append(f"total: {self.total}")
        return "\n".join(lines)


def count_params(spec: ModelSpec) -> ParamReport:
    """Closed-form per-layer parameter inventory."""
    report = ParamReport(spec)
    d = spec.degree
    for n_in, n_out in zip(spec.widths, spec.widths[1:]):
        edges = n_in * n_out
        if spec.kind == "mlp":
            layer = {"weights": edges, "biases": n_out}
        elif spec.kind == "wavkan":
            layer = {"w": edges, "s": edges, "t": edges}
        elif spec.kind == "edgespline":
            layer = {"coeffs": edges * (spec.grid_G + d), "base_w": edges, "scaler": edges}
        else:
            layer = {"lambda": edges, "eps": n_out, "coeffs": spec.spline_K - d - 1}
        report.layers.append(layer)
    return report


class Model:
    def __init__(self, spec: ModelSpec, layers: list[Layer]):
        self.spec = spec
        self.layers = layers
        self.registry: dict[str, tuple[int, int, tuple[int, ...]]] = {}
        offset = 0
        for i, layer in enumerate(layers):
            for name, shape in layer.param_shapes():
                size = int(np.prod(shape))
                self.registry[f"layers.{i}.{name}"] = (offset, offset + size, shape)
                offset += size
        self.theta = np.zeros(offset)
        for i, layer in enumerate(layers):
            layer.bind(self._views(self.theta, i, layer))

    def _views(self, flat, i, layer):
        out = {}
        for name, _ in layer.param_shapes():
            lo, hi, shape = self.registry[f"layers.{i}.{name}"]
            out[name] = flat[lo:hi].reshape(shape)
        return out

    @property
    def n_params(self) -> int:
        return self.theta.size

    def group_slices(self) -> dict[str, slice]:
        return {name: slice(lo, hi) for name, (lo, hi, _) in self.registry.items()}

    def project(self):
        for layer in self.layers:
            layer.project()

    def forward(self, X):
        return model_forward(self, X)

    def predict(self, X):
        return model_forward(self, X)[0]

    def __repr__(self):
        return f"Model({self.spec.kind}, {list(self.spec.widths)}, params={self.n_params})"


def _make_layers(spec: ModelSpec) -> list[Layer]:
    pairs = list(zip(spec.widths, spec.widths[1:]))
    last = len(pairs) - 1
    layers: list[Layer] = []
    for i, (n_in, n_out) in enumerate(pairs):
        if spec.kind == "gskan":
            kv = build_uniform_knots(spec.domain[0], spec.domain[1], spec.spline_K, spec.degree)
            layers.append(GsKanLayer(n_in, n_out, kv))
        elif spec.kind == "mlp":
            layers.append(DenseLayer(n_in, n_out, "identity" if i == last else spec.activation))
        elif spec.kind == "wavkan":
            layers.append(WavKanLayer(n_in, n_out))
        else:
            layers.append(EdgeSplineKanLayer(n_in, n_out, spec.grid_G, spec.degree, spec.domain))
    return layers


def _initialize(model: Model, rng: np.random.Generator):
    lo, hi = model.spec.domain
    for layer in model.layers:
        p = layer.params
        a = math.sqrt(1.0 / layer.n_in)
        if isinstance(layer, GsKanLayer):
            p["lambda"][...] = rng.uniform(-a, a, p["lambda"].shape)
            p["eps"][...] = rng.uniform(-0.05 * (hi - lo), 0.05 * (hi - lo), p["eps"].shape)
            p["coeffs"][...] = silu(greville_abscissae(layer.kv))
        elif isinstance(layer, DenseLayer):
            p["weights"][...] = rng.uniform(-a, a, p["weights"].shape)
            p["biases"][...] = 0.0
        elif isinstance(layer, WavKanLayer):
            p["w"][...] = rng.uniform(-a, a, p["w"].shape)
            p["s"][...] = 1.0
            p["t"][...] = rng.uniform(lo, hi, p["t"].shape)
        else:
            p["base_w"][...] = rng.uniform(-a, a, p["base_w"].shape)
            p["scaler"][...] = 1.0
            p["coeffs"][...] = rng.normal(0.0, 0.1, p["coeffs"].shape)


def build_model(spec: ModelSpec) -> Model:
    """Build and initialize a model; the result is a pure function of ``spec``."""
    spec.validate()
    model = Model(spec, _make_layers(spec))
    _initialize(model, np.random.default_rng(spec.seed))
    expected = count_params(spec).total
    if model.n_params != expected:
        raise AssertionError(f"registry has {model.n_params} slots, count_params says {expected}")
    return model


def model_forward(model: Model, X):
    caches = []
    H = np.asarray(X, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != model.spec.widths[0]:
        raise ValueError(f"expected input of shape (B, {model.spec.widths[0]}), got {H.shape}")
    for layer in model.layers:
        H, cache = layer.forward(H)
        caches.append(cache)
    return H, caches


def model_backward(model: Model, caches, dY, return_input_grad: bool = False):
    """Chain layer backward passes; returns the flat gradient aligned with ``theta``."""
    if len(caches) != len(model.layers):
        raise ValueError(f"got {len(caches)} caches for {len(model.layers)} layers")
    grad = np.zeros_like(model.theta)
    delta = np.asarray(dY, dtype=np.float64)
    for i in reversed(range(len(model.layers))):
        grads, delta = model.layers[i].backward(caches[i], delta)
        for name, g in grads.items():
            lo, hi, _ = model.registry[f"layers.{i}.{name}"]
            grad[lo:hi] = g.ravel()
    if return_input_grad:
        return grad, delta
    return grad


def save_checkpoint(model: Model, path) -> None:
    """Write a versioned JSON checkpoint with hex-float parameter values."""
    params = {}
    for name, (lo, hi, shape) in model.registry.items():
        params[name] = {"shape": list(shape), "data": [float(v).hex() for v in model.theta[lo:hi]]}
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
        "total": model.n_params,
        "params": params,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path, kind: str | None = None) -> Model:
    """Read a checkpoint written by :func:`save_checkpoint`.

    If ``kind`` is given the stored spec must be of that kind.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupted checkpoint ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    try:
        spec = ModelSpec.from_dict(doc["spec"])
    except (KeyError, TypeError, SpecError) as exc:
        raise CheckpointError(f"{path}: bad spec ({exc})") from None
    if kind is not None and spec.kind != kind:
        raise CheckpointError(f"{path}: expected a {kind!r} model, file holds {spec.kind!r}")
    expected = count_params(spec).total
    if doc.get("total") != expected:
        raise CheckpointError(f"{path}: declared total {doc.get('total')!r} != {expected} for this spec")

    model = Model(spec, _make_layers(spec))
    stored = doc.get("params", {})
    if set(stored) != set(model.registry):
        raise CheckpointError(f"{path}: parameter groups do not match the model spec")
    for name, (lo, hi, shape) in model.registry.items():
        entry = stored[name]
        if tuple(entry.get("shape", ())) != shape or len(entry.get("data", ())) != hi - lo:
            raise CheckpointError(f"{path}: {name} has the wrong shape")
        try:
            model.theta[lo:hi] = [float.fromhex(v) for v in entry["data"]]
        except (TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: {name}: {exc}") from None
    if not np.all(np.isfinite(model.theta)):
        raise CheckpointError(f"{path}: non-finite parameter values")
    return model
