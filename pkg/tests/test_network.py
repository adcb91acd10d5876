import json

import numpy as np
import pytest

from gskan.layers import silu
from gskan.network import (
    CheckpointError,
    ModelSpec,
    SpecError,
    build_model,
    count_params,
    load_checkpoint,
    model_backward,
    model_forward,
    save_checkpoint,
)
from gskan.spline import greville_abscissae
from oracles import central_diff, max_rel_err


class TestModelSpec:
    def test_single_width_rejected(self):
        with pytest.raises(SpecError, match="at least"):
            ModelSpec("mlp", [2])

    def test_zero_width_rejected(self):
        with pytest.raises(SpecError):
            ModelSpec("mlp", [2, 0, 1])

    def test_resolution_required(self):
        with pytest.raises(SpecError, match="spline_K"):
            ModelSpec("gskan", [2, 1])
        with pytest.raises(SpecError, match="grid_G"):
            ModelSpec("edgespline", [2, 1])

    def test_irrelevant_resolution_rejected(self):
        with pytest.raises(SpecError, match="not used"):
            ModelSpec("mlp", [2, 1], spline_K=20)
        with pytest.raises(SpecError, match="not used"):
            ModelSpec("gskan", [2, 1], spline_K=20, grid_G=5)

    def test_unknown_kind(self):
        with pytest.raises(SpecError, match="kind"):
            ModelSpec("cnn", [2, 1])

    def test_dict_round_trip(self):
        spec = ModelSpec("gskan", [2, 16, 16, 1], spline_K=50, domain=(-3, 3), seed=4)
        assert ModelSpec.from_dict(spec.to_dict()) == spec

    def test_from_dict_unknown_key(self):
        with pytest.raises(SpecError, match="unknown"):
            ModelSpec.from_dict({"kind": "mlp", "widths": [2, 1], "bias": True})


# Published baseline counts, keyed by (kind, widths, resolution)
TABLE_COUNTS = [
    ("mlp", [2, 12, 12, 1], None, 205),
    ("mlp", [2, 20, 20, 1], None, 501),
    ("mlp", [8, 10, 10, 1], None, 211),
    ("mlp", [8, 20, 20, 1], None, 621),
    ("mlp", [8, 40, 40, 1], None, 2041),
    ("wavkan", [2, 7, 7, 1], None, 210),
    ("wavkan", [2, 12, 11, 1], None, 501),
    ("wavkan", [8, 5, 5, 1], None, 210),
    ("wavkan", [8, 11, 10, 1], None, 624),
    ("wavkan", [8, 22, 21, 1], None, 1977),
    ("edgespline", [2, 5, 1], 8, 195),
    ("edgespline", [2, 5, 5, 1], 7, 480),
    ("edgespline", [8, 2, 1], 7, 216),
    ("edgespline", [8, 5, 1], 8, 585),
    ("edgespline", [8, 8, 8, 1], 10, 2040),
]


def _spec(kind, widths, res):
    kw = {"spline_K": res} if kind == "gskan" else {"grid_G": res} if kind == "edgespline" else {}
    return ModelSpec(kind, widths, **kw)


class TestCountParams:
    @pytest.mark.parametrize("kind, widths, res, expected", TABLE_COUNTS)
    def test_table_entries_exact(self, kind, widths, res, expected):
        assert count_params(_spec(kind, widths, res)).total == expected

    def test_gskan_breakdown(self):
        report = count_params(ModelSpec("gskan", [2, 16, 16, 1], spline_K=50))
        assert report.total == 475
        assert sum(layer["lambda"] for layer in report.layers) == 304
        assert sum(layer["eps"] for layer in report.layers) == 33
        assert sum(layer["coeffs"] for layer in report.layers) == 138

    def test_total_is_sum(self):
        report = count_params(ModelSpec("edgespline", [3, 4, 2], grid_G=5))
        assert report.total == sum(sum(layer.values()) for layer in report.layers)

    @pytest.mark.parametrize("kind, widths, res, _", TABLE_COUNTS[::3])
    def test_realized_registry_matches(self, kind, widths, res, _):
        spec = _spec(kind, widths, res)
        assert build_model(spec).n_params == count_params(spec).total

    def test_format(self):
        text = count_params(ModelSpec("mlp", [2, 12, 12, 1])).format()
        assert text.splitlines()[-1] == "total: 205"


class TestBuildModel:
    def test_deterministic(self):
        spec = ModelSpec("gskan", [2, 8, 1], spline_K=20, seed=11)
        np.testing.assert_array_equal(build_model(spec).theta, build_model(spec).theta)

    def test_seed_matters(self):
        a = build_model(ModelSpec("wavkan", [2, 4, 1], seed=0)).theta
        b = build_model(ModelSpec("wavkan", [2, 4, 1], seed=1)).theta
        assert not np.array_equal(a, b)

    def test_gskan_coeff_init(self):
        model = build_model(ModelSpec("gskan", [2, 5, 1], spline_K=20))
        for layer in model.layers:
            np.testing.assert_array_equal(layer.params["coeffs"], silu(greville_abscissae(layer.kv)))

    def test_layers_are_views(self):
        model = build_model(ModelSpec("mlp", [2, 3, 1]))
        model.theta[:] = 0
        assert np.all(model.layers[0].params["weights"] == 0)

    def test_mlp_last_layer_linear(self):
        model = build_model(ModelSpec("mlp", [2, 3, 1], activation="relu"))
        assert [l.activation for l in model.layers] == ["relu", "identity"]

    def test_registry_covers_every_slot_once(self):
        model = build_model(ModelSpec("edgespline", [2, 3, 2], grid_G=4))
        covered = np.zeros(model.n_params, int)
        for lo, hi, _ in model.registry.values():
            covered[lo:hi] += 1
        assert np.all(covered == 1)


def _probe_inputs(n_in, n=32, seed=0):
    return np.random.default_rng(seed).uniform(-0.9, 0.9, (n, n_in))


@pytest.mark.parametrize(
    "spec",
    [
        ModelSpec("gskan", [2, 3], spline_K=10),
        ModelSpec("mlp", [2, 3]),
        ModelSpec("wavkan", [2, 3]),
        ModelSpec("edgespline", [2, 3], grid_G=3),
    ],
    ids=lambda s: s.kind,
)
def test_no_dead_parameters(spec):
    """Perturbing any registry slot changes the output on some probe input."""
    model = build_model(spec)
    X = _probe_inputs(2, n=256)
    base = model.predict(X)
    for i in range(model.n_params):
        orig = model.theta[i]
        model.theta[i] = orig + 0.05
        changed = not np.array_equal(model.predict(X), base)
        model.theta[i] = orig
        assert changed, f"slot {i} has no effect"


class TestForwardBackward:
    def test_single_layer_matches_layer(self):
        model = build_model(ModelSpec("gskan", [3, 2], spline_K=12, seed=3))
        X = _probe_inputs(3, 5)
        Y, caches = model_forward(model, X)
        Y_layer, cache = model.layers[0].forward(X)
        np.testing.assert_array_equal(Y, Y_layer)
        dY = np.random.default_rng(1).normal(size=Y.shape)
        grads, dX = model.layers[0].backward(cache, dY)
        flat, dX_model = model_backward(model, caches, dY, return_input_grad=True)
        np.testing.assert_array_equal(dX, dX_model)
        for name, g in grads.items():
            lo, hi, _ = model.registry[f"layers.0.{name}"]
            np.testing.assert_array_equal(flat[lo:hi], g.ravel())

    def test_zero_upstream(self):
        model = build_model(ModelSpec("mlp", [2, 4, 1]))
        _, caches = model_forward(model, _probe_inputs(2, 4))
        assert np.all(model_backward(model, caches, np.zeros((4, 1))) == 0)

    def test_gskan_three_layers_finite_differences(self):
        model = build_model(ModelSpec("gskan", [2, 4, 3, 1], spline_K=12, seed=5))
        X = _probe_inputs(2, 6, seed=2)
        Y, caches = model_forward(model, X)
        grad = model_backward(model, caches, Y)

        def loss(theta):
            saved = model.theta.copy()
            model.theta[:] = theta
            out = 0.5 * np.sum(model.predict(X) ** 2)
            model.theta[:] = saved
            return out

        num = central_diff(loss, model.theta.copy(), 1e-5)
        assert max_rel_err(grad, num) < 1e-4

    def test_shape_mismatch(self):
        model = build_model(ModelSpec("mlp", [3, 2]))
        with pytest.raises(ValueError, match="shape"):
            model_forward(model, np.zeros((2, 2)))


class TestCheckpoint:
    @pytest.mark.parametrize(
        "spec",
        [
            ModelSpec("gskan", [2, 4, 1], spline_K=14, seed=9),
            ModelSpec("edgespline", [2, 2, 1], grid_G=4, seed=9),
            ModelSpec("wavkan", [2, 3, 1], seed=9),
            ModelSpec("mlp", [2, 3, 1], activation="relu", seed=9),
        ],
        ids=lambda s: s.kind,
    )
    def test_round_trip_bit_exact(self, tmp_path, spec):
        model = build_model(spec)
        model.theta += np.random.default_rng(0).normal(size=model.n_params) * 1e-3
        path = tmp_path / "m.json"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.spec == model.spec
        assert loaded.theta.tobytes() == model.theta.tobytes()
        X = _probe_inputs(2, 7)
        assert np.array_equal(loaded.predict(X), model.predict(X))

    def test_save_is_deterministic(self, tmp_path):
        model = build_model(ModelSpec("mlp", [2, 3, 1]))
        save_checkpoint(model, tmp_path / "a.json")
        save_checkpoint(model, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_declared_total_mismatch(self, tmp_path):
        path = tmp_path / "m.json"
        save_checkpoint(build_model(ModelSpec("mlp", [2, 3, 1])), path)
        doc = json.loads(path.read_text())
        doc["total"] += 1
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="declared total"):
            load_checkpoint(path)

    def test_kind_mismatch(self, tmp_path):
        path = tmp_path / "m.json"
        save_checkpoint(build_model(ModelSpec("mlp", [2, 3, 1])), path)
        with pytest.raises(CheckpointError, match="expected a 'gskan'"):
            load_checkpoint(path, kind="gskan")

    def test_corrupted(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text('{"format": "gskan-checkpoint", "vers')
        with pytest.raises(CheckpointError, match="corrupted"):
            load_checkpoint(path)

    def test_wrong_version(self, tmp_path):
        path = tmp_path / "m.json"
        save_checkpoint(build_model(ModelSpec("mlp", [2, 1])), path)
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_bad_hex(self, tmp_path):
        path = tmp_path / "m.json"
        save_checkpoint(build_model(ModelSpec("mlp", [2, 1])), path)
        doc = json.loads(path.read_text())
        doc["params"]["layers.0.biases"]["data"][0] = "zz"
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_checkpoint(tmp_path / "nope.json")
