import numpy as np
import pytest

from skullnet import nn
from skullnet.errors import IngestionError
from skullnet.mlknn import fit_mlknn, predict_mlknn
from skullnet.serialize import load_knn, load_model, save_knn, save_model
from skullnet.tensor import make_rng


def small_model(seed=0):
    rng = make_rng(seed)
    layers = [
        nn.ConvLayer(rng.normal(0, 0.3, (3, 3, 1, 4)).astype(np.float32),
                     rng.normal(0, 0.1, 4).astype(np.float32)),
        nn.ConvLayer(rng.normal(0, 0.3, (3, 3, 4, 4)).astype(np.float32),
                     rng.normal(0, 0.1, 4).astype(np.float32)),
    ]
    head = nn.DenseLayer(rng.normal(0, 0.1, (16, 7)).astype(np.float32),
                         rng.normal(0, 0.1, 7).astype(np.float32))
    return nn.ModelParams(conv_layers=layers, head=head, leaky_slope=0.015)


def small_knn(seed=1):
    rng = make_rng(seed)
    features = rng.normal(0, 1, (20, 6)).astype(np.float32)
    labels = (rng.random((20, 3)) < 0.5).astype(np.int8)
    return fit_mlknn(features, labels, k=3, s=1.0)


class TestModelFile:
    def test_round_trip_bit_exact(self, tmp_path):
        model = small_model()
        path = tmp_path / "m.skn"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.leaky_slope == model.leaky_slope
        assert len(loaded.conv_layers) == 2
        for a, b in zip(nn.param_arrays(model), nn.param_arrays(loaded)):
            assert a.dtype == b.dtype == np.float32
            assert a.tobytes() == b.tobytes()

    def test_save_load_save_identical_bytes(self, tmp_path):
        model = small_model()
        p1, p2 = tmp_path / "a.skn", tmp_path / "b.skn"
        save_model(model, p1)
        save_model(load_model(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_magic_pinned(self, tmp_path):
        path = tmp_path / "m.skn"
        save_model(small_model(), path)
        assert path.read_bytes()[:4] == b"SKN1"

    def test_checksum_detects_corruption(self, tmp_path):
        path = tmp_path / "m.skn"
        save_model(small_model(), path)
        blob = bytearray(path.read_bytes())
        blob[30] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(IngestionError, match="checksum"):
            load_model(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "m.skn"
        path.write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(IngestionError):
            load_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError):
            load_model(tmp_path / "missing.skn")

    def test_full_extractor_round_trip(self, tmp_path):
        model = nn.build_extractor(make_rng(3))
        path = tmp_path / "full.skn"
        save_model(model, path)
        loaded = load_model(path)
        assert nn.count_params(loaded) == 1_172_256
        img = make_rng(4).random((200, 200, 3)).astype(np.float32)
        a = nn.extract_features(model, img)
        b = nn.extract_features(loaded, img)
        assert a.tobytes() == b.tobytes()


class TestKnnFile:
    def test_round_trip_bit_exact(self, tmp_path):
        model = small_knn()
        path = tmp_path / "k.skk"
        save_knn(model, path)
        loaded = load_knn(path)
        assert loaded.k == model.k and loaded.s == model.s
        assert loaded.features.tobytes() == model.features.tobytes()
        assert loaded.labels.tobytes() == model.labels.tobytes()
        assert loaded.prior1.tobytes() == model.prior1.tobytes()
        assert loaded.prior0.tobytes() == model.prior0.tobytes()
        assert loaded.c1.tobytes() == model.c1.tobytes()
        assert loaded.c0.tobytes() == model.c0.tobytes()

    def test_save_load_save_identical_bytes(self, tmp_path):
        p1, p2 = tmp_path / "a.skk", tmp_path / "b.skk"
        save_knn(small_knn(), p1)
        save_knn(load_knn(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_magic_pinned(self, tmp_path):
        path = tmp_path / "k.skk"
        save_knn(small_knn(), path)
        assert path.read_bytes()[:4] == b"SKK1"

    def test_predictions_survive_round_trip(self, tmp_path):
        model = small_knn()
        path = tmp_path / "k.skk"
        save_knn(model, path)
        loaded = load_knn(path)
        rng = make_rng(5)
        for _ in range(10):
            q = rng.normal(0, 1, 6).astype(np.float32)
            a = predict_mlknn(model, q)
            b = predict_mlknn(loaded, q)
            assert a.labels.tolist() == b.labels.tolist()
            assert a.confidences.tobytes() == b.confidences.tobytes()

    def test_loaded_tables_satisfy_invariants(self, tmp_path):
        path = tmp_path / "k.skk"
        save_knn(small_knn(), path)
        loaded = load_knn(path)
        np.testing.assert_allclose(loaded.prior1 + loaded.prior0, 1.0, atol=1e-12)
        np.testing.assert_allclose(loaded.c1.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(loaded.c0.sum(axis=1), 1.0, atol=1e-9)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "k.skk"
        save_knn(small_knn(), path)
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises(IngestionError):
            load_knn(path)
