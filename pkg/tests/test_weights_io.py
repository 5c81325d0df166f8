import json
import struct

import numpy as np
import pytest

from tumorgraph import graph, weights_io
from tumorgraph.errors import (
    MissingWeightError,
    UnexpectedWeightError,
    WeightFileCorruptError,
    WeightFileTruncatedError,
    WeightShapeError,
)


@pytest.fixture
def store(tiny_model):
    return graph.init_random(tiny_model, seed=17)


def test_round_trip_is_bit_identical(tiny_model, store, tmp_path):
    path = tmp_path / "w.tgw"
    weights_io.export_weights(store, path, meta={"hidden": 8})
    loaded = weights_io.load_weights(tiny_model, path)
    assert sorted(loaded.names()) == sorted(store.names())
    for name in store.names():
        got, want = loaded[name], store[name]
        assert got.dtype == want.dtype == np.float32
        assert np.array_equal(got.view(np.uint32), want.view(np.uint32))


def test_reexport_is_byte_identical(tiny_model, store, tmp_path):
    a, b = tmp_path / "a.tgw", tmp_path / "b.tgw"
    weights_io.export_weights(store, a, meta={"k": 1})
    loaded = weights_io.load_weights(tiny_model, a)
    _, meta = weights_io.read_weight_file(a)
    weights_io.export_weights(loaded, b, meta=meta)
    assert a.read_bytes() == b.read_bytes()


def test_meta_round_trip(store, tmp_path):
    path = tmp_path / "w.tgw"
    meta = {"input_size": [12, 12], "hidden": 8, "classes": 3, "dropout_rate": 0.0}
    weights_io.export_weights(store, path, meta=meta)
    _, got = weights_io.read_weight_file(path)
    assert got == meta


def test_offsets_are_aligned(store, tmp_path):
    path = tmp_path / "w.tgw"
    weights_io.export_weights(store, path)
    raw = path.read_bytes()
    (hlen,) = struct.unpack("<Q", raw[4:12])
    header = json.loads(raw[12 : 12 + hlen])
    for name, entry in header["tensors"].items():
        assert entry["offset"] % 8 == 0, name


def test_trainable_tags_follow_graph(tiny_model, store, tmp_path):
    path = tmp_path / "w.tgw"
    weights_io.export_weights(store, path)
    loaded = weights_io.load_weights(tiny_model, path)
    for ws in tiny_model.weight_specs():
        assert loaded.is_trainable(ws.name) == ws.trainable


class TestCorruptions:
    def _tensors(self, store):
        return dict(store.items())

    def test_missing_tensor_named(self, tiny_model, store, tmp_path):
        tensors = self._tensors(store)
        victim = "bn_0/beta"
        del tensors[victim]
        path = tmp_path / "missing.tgw"
        weights_io.write_weight_file(path, tensors)
        with pytest.raises(MissingWeightError) as err:
            weights_io.load_weights(tiny_model, path)
        assert victim in str(err.value)

    def test_extra_tensor_named(self, tiny_model, store, tmp_path):
        tensors = self._tensors(store)
        tensors["conv_99/kernel"] = np.zeros((1, 1, 1, 1), dtype=np.float32)
        path = tmp_path / "extra.tgw"
        weights_io.write_weight_file(path, tensors)
        with pytest.raises(UnexpectedWeightError) as err:
            weights_io.load_weights(tiny_model, path)
        assert "conv_99/kernel" in str(err.value)

    def test_transposed_dense_kernel_rejected(self, tiny_model, store, tmp_path):
        tensors = self._tensors(store)
        tensors["dense_0/kernel"] = np.ascontiguousarray(tensors["dense_0/kernel"].T)
        path = tmp_path / "transposed.tgw"
        weights_io.write_weight_file(path, tensors)
        with pytest.raises(WeightShapeError) as err:
            weights_io.load_weights(tiny_model, path)
        assert "dense_0/kernel" in str(err.value)

    def test_truncated_data_region(self, tiny_model, store, tmp_path):
        path = tmp_path / "trunc.tgw"
        weights_io.export_weights(store, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 64])
        with pytest.raises(WeightFileTruncatedError):
            weights_io.load_weights(tiny_model, path)

    def test_bad_magic(self, store, tmp_path):
        path = tmp_path / "magic.tgw"
        weights_io.export_weights(store, path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(WeightFileCorruptError):
            weights_io.read_weight_file(path)

    def test_header_length_beyond_file(self, store, tmp_path):
        path = tmp_path / "hlen.tgw"
        weights_io.export_weights(store, path)
        raw = bytearray(path.read_bytes())
        raw[4:12] = struct.pack("<Q", 2**40)
        path.write_bytes(bytes(raw))
        with pytest.raises(WeightFileCorruptError):
            weights_io.read_weight_file(path)

    def test_undecodable_header(self, tmp_path):
        path = tmp_path / "json.tgw"
        garbage = b"{not json"
        path.write_bytes(weights_io.MAGIC + struct.pack("<Q", len(garbage)) + garbage)
        with pytest.raises(WeightFileCorruptError):
            weights_io.read_weight_file(path)

    def test_corruption_classes_are_distinct(self):
        classes = {MissingWeightError, UnexpectedWeightError, WeightShapeError,
                   WeightFileTruncatedError, WeightFileCorruptError}
        assert len(classes) == 5


def test_store_set_rejects_shape_change(store):
    with pytest.raises(WeightShapeError):
        store.set("dense_0/bias", np.zeros((3, 3), dtype=np.float32))


def test_validate_against_full_model():
    g = graph.build_model(75)
    store = graph.init_random(g, seed=0)
    store.validate_against(g)  # must not raise
    assert store.element_count() == graph.param_report(g).total
