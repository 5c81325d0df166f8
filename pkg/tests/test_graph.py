import numpy as np
import pytest

from tumorgraph import graph
from tumorgraph.errors import GraphError, ShapeError
from tumorgraph.tensor import no_grad


@pytest.fixture(scope="module")
def model150():
    return graph.build_model(150)


@pytest.fixture(scope="module")
def model75():
    return graph.build_model(75)


class TestBackboneGeometry:
    def test_mixed8_shape_at_150(self, model150):
        assert model150.endpoint_shape("mixed8") == (3, 3, 1280)

    def test_mixed8_shape_at_75(self, model75):
        assert model75.endpoint_shape("mixed8") == (1, 1, 1280)

    def test_mixed0_channel_width(self, model150):
        assert model150.endpoint_shape("mixed0")[2] == 256

    def test_block_output_channels(self, model150):
        widths = {name: model150.endpoint_shape(name)[2]
                  for name in ("mixed0", "mixed1", "mixed2", "mixed3", "mixed4",
                               "mixed5", "mixed6", "mixed7", "mixed8")}
        assert widths == {"mixed0": 256, "mixed1": 288, "mixed2": 288, "mixed3": 768,
                          "mixed4": 768, "mixed5": 768, "mixed6": 768, "mixed7": 768,
                          "mixed8": 1280}

    def test_flatten_width_anchors(self, model150, model75):
        assert model150.endpoint_shape("flatten") == (11520,)
        assert model75.endpoint_shape("flatten") == (1280,)

    def test_input_too_small_names_first_empty_layer(self):
        with pytest.raises(GraphError) as err:
            graph.build_backbone(74)
        assert "empty" in str(err.value)

    def test_non_square_input(self):
        g = graph.build_backbone((75, 150))
        h, w, c = g.endpoint_shape("mixed8")
        assert (h, w, c) == (1, 3, 1280)

    def test_conv_bn_relu_unit_invariant(self, model150):
        layer_map = model150.layer_map
        consumers = {}
        for layer in model150.layers:
            for src in layer.inputs:
                consumers.setdefault(src, []).append(layer.name)
        for layer in model150.layers:
            if layer.kind == "conv" and layer.section == "backbone":
                (bn,) = consumers[layer.name]
                assert layer_map[bn].kind == "batchnorm"
                (act,) = consumers[bn]
                assert layer_map[act].kind == "activation"
                assert layer_map[act].activation == "relu"

    def test_graph_is_immutable(self, model150):
        with pytest.raises(AttributeError):
            model150.input_shape = (1, 1, 1)


class TestParameterAccounting:
    def test_fig3_totals_exact(self, model150):
        rep = graph.param_report(model150, "full_finetune")
        assert rep.total == 22_475_427
        assert rep.trainable == 22_454_051
        assert rep.non_trainable == 21_376

    def test_head_dense_counts(self, model150):
        counts = {name: total for name, total, _ in
                  graph.param_report(model150).per_layer}
        assert counts["dense_0"] == 11_797_504
        assert counts["dense_1"] == 3_075

    def test_head_sum(self, model150):
        rep = graph.param_report(model150, "head_only")
        assert rep.trainable == 11_800_579
        assert rep.total == 22_475_427

    def test_backbone_only_total(self):
        rep = graph.param_report(graph.build_backbone(150))
        assert rep.total == 22_475_427 - 11_800_579 == 10_674_848

    def test_total_is_trainable_plus_frozen(self, model75):
        for policy in graph.TRAINABLE_POLICIES:
            rep = graph.param_report(model75, policy)
            assert rep.total == rep.trainable + rep.non_trainable

    def test_batchnorm_channel_sum(self, model150):
        stats = sum(int(np.prod(ws.shape)) for ws in model150.weight_specs()
                    if not ws.trainable)
        assert stats == 21_376
        channels = sum(int(np.prod(ws.shape)) for ws in model150.weight_specs()
                       if ws.name.endswith("/beta"))
        assert channels == 10_688

    def test_report_matches_store_element_count(self, tiny_model):
        store = graph.init_random(tiny_model, seed=0)
        assert graph.param_report(tiny_model).total == store.element_count()

    def test_weight_names_unique_and_complete(self, model150):
        specs = model150.weight_specs()
        names = [ws.name for ws in specs]
        assert len(names) == len(set(names))
        store = graph.init_random(graph.build_model(75), seed=1)
        assert sorted(store.names()) == sorted(
            ws.name for ws in graph.build_model(75).weight_specs()
        )


class TestHead:
    def test_layer_sequence_after_mixed8(self, model150):
        head = [l.kind for l in model150.layers if l.section == "head"]
        assert head == ["flatten", "dense", "dropout", "dense"]

    def test_double_attachment_rejected(self, model150):
        with pytest.raises(GraphError):
            graph.attach_head(model150)

    def test_attach_needs_mixed8(self, tiny_model):
        bare = graph.GraphSpec(layers=(graph.LayerSpec(name="input", kind="input"),),
                               endpoint_items=(("input", "input"),),
                               input_shape=(8, 8, 3),
                               shape_items=(("input", (8, 8, 3)),))
        with pytest.raises(GraphError):
            graph.attach_head(bare)

    def test_flatten_consumes_mixed8(self, model150):
        flat = model150.layer_map["flatten"]
        assert flat.inputs == (model150.endpoints["mixed8"],)


class TestInitRandom:
    def test_moving_variances_are_ones(self, tiny_model):
        store = graph.init_random(tiny_model, seed=5)
        for name in store.names():
            if name.endswith("/moving_var"):
                assert np.all(store[name] == 1.0)
            elif name.endswith(("/moving_mean", "/beta", "/bias")):
                assert np.all(store[name] == 0.0)

    def test_same_seed_identical(self, tiny_model):
        a = graph.init_random(tiny_model, seed=9)
        b = graph.init_random(tiny_model, seed=9)
        for name in a.names():
            np.testing.assert_array_equal(a[name], b[name])

    def test_different_seed_differs(self, tiny_model):
        a = graph.init_random(tiny_model, seed=1)
        b = graph.init_random(tiny_model, seed=2)
        assert any(not np.array_equal(a[name], b[name]) for name in a.names())

    def test_dense_glorot_bound(self, model150):
        store = graph.init_random(model150, seed=3)
        limit = np.sqrt(6.0 / (11520 + 1024))
        kernel = store["dense_0/kernel"]
        assert kernel.shape == (11520, 1024)
        assert np.abs(kernel).max() <= limit

    def test_conv_glorot_bound(self, tiny_model):
        store = graph.init_random(tiny_model, seed=3)
        spec = {ws.name: ws for ws in tiny_model.weight_specs()}["conv_0/kernel"]
        kh, kw, cin, f = spec.shape
        limit = np.sqrt(6.0 / (kh * kw * cin + kh * kw * f))
        assert np.abs(store["conv_0/kernel"]).max() <= limit


class TestForward:
    def test_rows_sum_to_one(self, tiny_model, rng):
        store = graph.init_random(tiny_model, seed=0)
        x = rng.standard_normal((4, 12, 12, 3)).astype(np.float32)
        with no_grad():
            probs = graph.forward(tiny_model, store, x)
        np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-6)

    def test_zero_head_gives_exact_thirds(self, tiny_model, rng):
        store = graph.init_random(tiny_model, seed=0)
        for name in ("dense_0/kernel", "dense_0/bias", "dense_1/kernel", "dense_1/bias"):
            store.set(name, np.zeros_like(store[name]))
        x = rng.standard_normal((3, 12, 12, 3)).astype(np.float32)
        with no_grad():
            probs = graph.forward(tiny_model, store, x)
        third = np.float32(1.0) / np.float32(3.0)
        assert np.all(probs.data == third)

    def test_training_dropout_deterministic_per_seed(self, rng):
        from conftest import make_tiny_model

        model = make_tiny_model(dropout_rate=0.5)
        store = graph.init_random(model, seed=0)
        x = rng.standard_normal((2, 12, 12, 3)).astype(np.float32)
        with no_grad():
            a = graph.forward(model, store, x, training=True, rng=np.random.default_rng(4))
            b = graph.forward(model, store, x, training=True, rng=np.random.default_rng(4))
        np.testing.assert_array_equal(a.data, b.data)

    def test_training_flag_only_affects_dropout(self, tiny_model, rng):
        # dropout rate 0 in the fixture: train and eval must agree exactly
        store = graph.init_random(tiny_model, seed=0)
        x = rng.standard_normal((2, 12, 12, 3)).astype(np.float32)
        with no_grad():
            a = graph.forward(tiny_model, store, x, training=True, rng=np.random.default_rng(0))
            b = graph.forward(tiny_model, store, x, training=False)
        np.testing.assert_array_equal(a.data, b.data)

    def test_missing_weight_named(self, tiny_model, rng):
        store = graph.init_random(tiny_model, seed=0)
        partial = {name: store[name] for name in store.names() if name != "bn_1/beta"}
        x = rng.standard_normal((1, 12, 12, 3)).astype(np.float32)
        with pytest.raises(GraphError) as err:
            with no_grad():
                graph.forward(tiny_model, partial, x)
        assert "bn_1/beta" in str(err.value)

    def test_batch_spatial_mismatch_rejected(self, tiny_model, rng):
        store = graph.init_random(tiny_model, seed=0)
        with pytest.raises(ShapeError):
            graph.forward(tiny_model, store, rng.standard_normal((1, 10, 12, 3)))

    def test_endpoint_extraction_matches_static_shape(self, tiny_model, rng):
        store = graph.init_random(tiny_model, seed=0)
        x = rng.standard_normal((2, 12, 12, 3)).astype(np.float32)
        with no_grad():
            feats = graph.forward(tiny_model, store, x, endpoint="mixed8")
        assert feats.shape[1:] == tiny_model.endpoint_shape("mixed8")

    @pytest.mark.slow
    def test_full_backbone_runtime_shape(self, model75, rng):
        store = graph.init_random(model75, seed=0)
        x = rng.standard_normal((1, 75, 75, 3)).astype(np.float32)
        with no_grad():
            feats = graph.forward(model75, store, x, endpoint="mixed8")
        assert feats.shape == (1, 1, 1, 1280)
