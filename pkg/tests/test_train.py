import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skullnet import nn
from skullnet.errors import NumericError, ShapeError, ValidationError
from skullnet.tensor import make_rng
from skullnet.train import (
    SplitSpec,
    TrainConfig,
    bce_loss,
    bce_sigmoid_grad,
    grad_check,
    init_optimizer,
    optimizer_step,
    parse_config,
    split_dataset,
    train,
)


def tiny_model(seed=0, feature_dim=None):
    """A miniature two-conv + pool + head model that trains in milliseconds."""
    rng = make_rng(seed)
    layers = [
        nn.ConvLayer(rng.normal(0, 0.3, (3, 3, 1, 4)).astype(np.float32), np.zeros(4, np.float32)),
        nn.ConvLayer(rng.normal(0, 0.15, (3, 3, 4, 4)).astype(np.float32), np.zeros(4, np.float32)),
    ]
    dim = feature_dim or 6 * 6 * 4
    head = nn.DenseLayer(rng.normal(0, 0.05, (dim, 7)).astype(np.float32), np.zeros(7, np.float32))
    return nn.ModelParams(conv_layers=layers, head=head, leaky_slope=0.01)


def toy_dataset(n=8, seed=3):
    """Linearly separable 12x12x1 images: label j fires iff quadrant j is lit."""
    rng = make_rng(seed)
    images = np.zeros((n, 12, 12, 1), dtype=np.float32)
    labels = np.zeros((n, 7), dtype=np.int8)
    corners = [(0, 0), (0, 6), (6, 0), (6, 6)]
    for i in range(n):
        for q, (r, c) in enumerate(corners):
            if rng.random() < 0.5:
                images[i, r : r + 6, c : c + 6, 0] = 1.0
                labels[i, q] = 1
        images[i] += rng.normal(0, 0.05, (12, 12, 1)).astype(np.float32)
    return images, labels


class TestBceLoss:
    def test_half_probability(self):
        assert bce_loss(np.array([[0.5]]), np.array([[1]])) == pytest.approx(np.log(2), abs=1e-12)

    def test_clipping_floor(self):
        loss = bce_loss(np.array([[1.0, 0.0]]), np.array([[1, 0]]))
        assert loss == pytest.approx(-np.log(1 - 1e-7), rel=1e-6)

    def test_matches_scalar_loop(self):
        rng = make_rng(5)
        p = rng.uniform(0.01, 0.99, (6, 7))
        y = (rng.random((6, 7)) < 0.5).astype(np.int8)
        acc = 0.0
        for i in range(6):
            for j in range(7):
                pc = min(max(p[i, j], 1e-7), 1 - 1e-7)
                acc += -(y[i, j] * np.log(pc) + (1 - y[i, j]) * np.log(1 - pc))
        assert bce_loss(p, y) == pytest.approx(acc / 42, abs=1e-9)

    def test_non_negative(self):
        rng = make_rng(6)
        for _ in range(20):
            p = rng.uniform(0, 1, (3, 7))
            y = (rng.random((3, 7)) < 0.5).astype(np.int8)
            assert bce_loss(p, y) >= 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            bce_loss(np.zeros((2, 7)), np.zeros((3, 7)))


class TestBceSigmoidGrad:
    def test_zero_at_optimum(self):
        y = np.array([[1.0, 0.0, 1.0]])
        assert not bce_sigmoid_grad(y.copy(), y).any()

    def test_hand_case(self):
        g = bce_sigmoid_grad(np.array([[0.75] * 7]), np.ones((1, 7)))
        assert g[0, 0] == pytest.approx(-0.25 / 7, abs=1e-12)

    def test_matches_finite_differences(self):
        for seed in range(3):
            assert grad_check("bce_head", make_rng(seed), 1e-4) < 1e-5


class TestOptimizerStep:
    def test_sgd_arithmetic(self):
        p = [np.array([1.0])]
        state = init_optimizer("sgd", p)
        optimizer_step(p, [np.array([0.5])], state, 0.1)
        assert p[0][0] == pytest.approx(0.95)

    def test_zero_gradient_fixed_point(self):
        for kind in ("sgd", "adam"):
            p = [np.array([3.0, -2.0])]
            state = init_optimizer(kind, p)
            optimizer_step(p, [np.zeros(2)], state, 0.1)
            assert np.array_equal(p[0], [3.0, -2.0])

    def test_adam_single_step(self):
        p = [np.array([0.0])]
        state = init_optimizer("adam", p)
        optimizer_step(p, [np.array([1.0])], state, 1e-3)
        # bias-corrected m/sqrt(v) is exactly 1 at t=1
        assert p[0][0] == pytest.approx(-1e-3, abs=1e-8)

    def test_nan_gradient_aborts(self):
        p = [np.array([0.0])]
        state = init_optimizer("adam", p)
        with pytest.raises(NumericError):
            optimizer_step(p, [np.array([np.nan])], state, 1e-3)

    def test_shape_mismatch(self):
        p = [np.zeros(3)]
        state = init_optimizer("sgd", p)
        with pytest.raises(ShapeError):
            optimizer_step(p, [np.zeros(4)], state, 0.1)


class TestTrain:
    def test_loss_decreases_on_separable_toy(self):
        images, labels = toy_dataset(8)
        model = tiny_model()
        config = TrainConfig(epochs=30, batch_size=4, seed=1, early_stop_patience=None)
        _, history = train(model, images, labels, config)
        assert len(history.train_loss) == 30
        assert history.train_loss[-1] < history.train_loss[0]

    def test_zero_epochs_noop(self):
        images, labels = toy_dataset(4)
        model = tiny_model()
        before = [a.copy() for a in nn.param_arrays(model)]
        _, history = train(model, images, labels, TrainConfig(epochs=0))
        assert history.train_loss == [] and history.val_loss == []
        for a, b in zip(nn.param_arrays(model), before):
            assert np.array_equal(a, b)

    def test_determinism(self):
        images, labels = toy_dataset(8)
        histories = []
        for _ in range(2):
            model = tiny_model(seed=4)
            _, h = train(model, images, labels, TrainConfig(epochs=5, batch_size=4, seed=9))
            histories.append(h.train_loss)
        assert histories[0] == histories[1]

    def test_empty_dataset(self):
        with pytest.raises(ValidationError):
            train(tiny_model(), np.zeros((0, 12, 12, 1)), np.zeros((0, 7)), TrainConfig())

    def test_single_sgd_step_descends(self):
        images, labels = toy_dataset(6, seed=8)
        model = tiny_model(seed=2)
        probs = np.stack([nn.model_forward(model, img)[0] for img in images])
        before = bce_loss(probs, labels)
        config = TrainConfig(
            epochs=1, batch_size=6, optimizer="sgd", learning_rate=1e-4, seed=0
        )
        train(model, images, labels, config)
        probs = np.stack([nn.model_forward(model, img)[0] for img in images])
        assert bce_loss(probs, labels) <= before

    def test_early_stopping(self):
        images, labels = toy_dataset(8)
        model = tiny_model()
        # validation labels are inverted, so val loss rises as training fits
        config = TrainConfig(epochs=50, batch_size=4, seed=1, early_stop_patience=2,
                             learning_rate=0.05)
        _, history = train(model, images, labels, config, images[:4], 1 - labels[:4])
        assert len(history.train_loss) < 50
        assert len(history.val_loss) == len(history.train_loss)

    def test_validation_history(self):
        images, labels = toy_dataset(6)
        model = tiny_model()
        config = TrainConfig(epochs=3, batch_size=3, seed=5, early_stop_patience=None)
        _, history = train(model, images, labels, config, images[:2], labels[:2])
        assert len(history.train_loss) == len(history.val_loss) == 3


class TestSplitDataset:
    def test_paper_sizes(self):
        tr, va, te = split_dataset(range(232), SplitSpec(ratios=(0.6, 0.2, 0.2), seed=0))
        assert (len(tr), len(va), len(te)) == (140, 46, 46)

    def test_all_train(self):
        tr, va, te = split_dataset(range(5), SplitSpec(ratios=(1.0, 0.0, 0.0), seed=1))
        assert sorted(tr) == [0, 1, 2, 3, 4] and not va and not te

    def test_grouping_never_straddles(self):
        groups = ["s1", "s1", "s2", "s2", "s3", "s3", "s4", "s4", "s5", "s5"]
        for seed in range(10):
            spec = SplitSpec(ratios=(0.6, 0.2, 0.2), seed=seed, group_key=groups)
            tr, va, te = split_dataset(range(10), spec)
            for part in (tr, va, te):
                keys = {groups[i] for i in part}
                for key in keys:
                    members = [i for i, g in enumerate(groups) if g == key]
                    assert all(m in part for m in members)

    @given(n=st.integers(1, 300), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_partition_property(self, n, seed):
        tr, va, te = split_dataset(range(n), SplitSpec(ratios=(0.6, 0.2, 0.2), seed=seed))
        assert len(te) == int(np.floor(n * 0.2))
        assert len(va) == int(np.floor(n * 0.2))
        combined = sorted(tr + va + te)
        assert combined == list(range(n))
        again = split_dataset(range(n), SplitSpec(ratios=(0.6, 0.2, 0.2), seed=seed))
        assert (tr, va, te) == again

    def test_empty_dataset(self):
        with pytest.raises(ValidationError):
            split_dataset([], SplitSpec())

    def test_bad_ratios(self):
        with pytest.raises(ValidationError):
            SplitSpec(ratios=(0.5, 0.2, 0.2))


class TestGradCheck:
    @pytest.mark.parametrize("kind,bound", [
        ("conv", 1e-4),
        ("leaky_relu", 1e-4),
        ("maxpool", 1e-4),
        ("dense", 1e-5),
        ("bce_head", 1e-4),
    ])
    def test_all_kinds_small_error(self, kind, bound):
        for seed in range(5):
            err = grad_check(kind, make_rng(seed), 1e-3)
            assert err < bound, f"{kind} seed {seed}: {err}"

    def test_bad_epsilon(self):
        with pytest.raises(ValidationError):
            grad_check("conv", make_rng(0), 0.5)

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            grad_check("pool3", make_rng(0))


class TestParseConfig:
    def test_round_trip(self, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text(
            "# comment\n"
            "learning_rate = 0.005\n"
            "epochs=7\n"
            "batch_size = 8\n"
            "optimizer = sgd\n"
            "seed = 123\n"
            "early_stop_patience = none\n"
            "leaky_slope = 0.02\n"
        )
        config = parse_config(cfg)
        assert config.learning_rate == 0.005
        assert config.epochs == 7
        assert config.batch_size == 8
        assert config.optimizer == "sgd"
        assert config.seed == 123
        assert config.early_stop_patience is None
        assert config.leaky_slope == 0.02

    def test_defaults(self, tmp_path):
        cfg = tmp_path / "empty.cfg"
        cfg.write_text("")
        config = parse_config(cfg)
        assert config == TrainConfig()

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("momentum = 0.9\n")
        with pytest.raises(ValidationError):
            parse_config(cfg)

    def test_bad_value(self, tmp_path):
        cfg = tmp_path / "bad2.cfg"
        cfg.write_text("epochs = many\n")
        with pytest.raises(ValidationError):
            parse_config(cfg)

    def test_invalid_settings_rejected(self):
        with pytest.raises(ValidationError):
            TrainConfig(learning_rate=-1.0)
        with pytest.raises(ValidationError):
            TrainConfig(optimizer="rmsprop")
        with pytest.raises(ValidationError):
            TrainConfig(batch_size=0)
