import numpy as np
import pytest

from livestyle import autodiff as ad
from livestyle.archive import WeightArchive
from livestyle.backbone import (
    CONV3X3,
    MAXPOOL2X2,
    RELU,
    FeatureMap,
    LayerSpec,
    extract_features,
    gram_matrix,
    load_weights,
    random_backbone,
    random_weight_archive,
    tiny_backbone_spec,
    vgg19_spec,
)
from livestyle.errors import MissingTensor, RangeMismatch, ShapeMismatch, UnknownLayer
from livestyle.images import ImageTensor, Range


def _named_spec():
    return [
        LayerSpec("conv1_1", CONV3X3, in_channels=3, out_channels=8),
        LayerSpec("relu1_1", RELU),
        LayerSpec("pool1", MAXPOOL2X2),
        LayerSpec("conv2_1", CONV3X3, in_channels=8, out_channels=4),
    ]


def _backbone_img(arr: np.ndarray) -> ImageTensor:
    return ImageTensor.from_array(arr, Range.BACKBONE)


class TestLoadWeights:
    def test_happy_path_binds_all_layers(self):
        spec = _named_spec()
        model = load_weights(random_weight_archive(spec, seed=0), spec)
        assert model.weight("conv1_1").shape == (8, 3, 3, 3)
        assert model.weight("conv2_1").shape == (4, 8, 3, 3)
        assert not model.weight("conv1_1").flags.writeable

    def test_missing_tensor_named(self):
        spec = _named_spec()
        archive = random_weight_archive(spec, seed=0)
        tensors = archive.tensors()
        del tensors["conv1_1.weight"]
        with pytest.raises(MissingTensor, match="conv1_1.weight"):
            load_weights(WeightArchive.from_tensors(tensors), spec)

    def test_shape_mismatch_named(self):
        spec = _named_spec()
        tensors = random_weight_archive(spec, seed=0).tensors()
        tensors["conv1_1.weight"] = np.zeros((8, 3, 5, 5), dtype=np.float32)
        with pytest.raises(ShapeMismatch, match="conv1_1"):
            load_weights(WeightArchive.from_tensors(tensors), spec)


class TestExtractFeatures:
    def test_zero_network_gives_zero_maps(self):
        spec = tiny_backbone_spec(channels=(4, 4))
        tensors = {name: np.zeros_like(arr) for name, arr in random_weight_archive(spec, 0).tensors().items()}
        model = load_weights(WeightArchive.from_tensors(tensors), spec)
        img = _backbone_img(np.random.default_rng(0).normal(size=(8, 8, 3)))
        feats = extract_features(model, img, {"relu1", "relu2"})
        assert all((f.data == 0).all() for f in feats.values())

    def test_spatial_after_two_pools(self):
        spec = tiny_backbone_spec(channels=(4, 4, 4), pool_after=(1, 2))
        model = load_weights(random_weight_archive(spec, seed=1), spec)
        img = _backbone_img(np.random.default_rng(1).normal(size=(64, 64, 3)))
        feats = extract_features(model, img, {"conv3"})
        assert feats["conv3"].spatial == 256  # 64 -> 32 -> 16

    def test_delta_kernel_passthrough(self):
        spec = [LayerSpec("conv1", CONV3X3, in_channels=3, out_channels=3)]
        w = np.zeros((3, 3, 3, 3), dtype=np.float32)
        for c in range(3):
            w[c, c, 1, 1] = 1.0
        archive = WeightArchive.from_tensors(
            {"conv1.weight": w, "conv1.bias": np.zeros(3, dtype=np.float32)}
        )
        model = load_weights(archive, spec)
        data = np.abs(np.random.default_rng(2).normal(size=(6, 6, 3)))
        feats = extract_features(model, _backbone_img(data), {"conv1"})
        assert np.allclose(
            feats["conv1"].data.reshape(3, 6, 6), data.transpose(2, 0, 1), atol=1e-12
        )

    def test_unknown_layer(self):
        model = random_backbone(seed=0)
        img = _backbone_img(np.zeros((8, 8, 3)))
        with pytest.raises(UnknownLayer):
            extract_features(model, img, {"conv99"})

    def test_requires_backbone_range(self):
        model = random_backbone(seed=0)
        img = ImageTensor.from_array(np.zeros((8, 8, 3)), Range.UNIT)
        with pytest.raises(RangeMismatch):
            extract_features(model, img, {"conv1"})

    def test_deterministic_bit_identical(self):
        model = random_backbone(seed=3)
        img = _backbone_img(np.random.default_rng(3).normal(size=(16, 16, 3)))
        a = extract_features(model, img, {"conv2"})["conv2"].data
        b = extract_features(model, img, {"conv2"})["conv2"].data
        assert (a == b).all()

    def test_vgg19_preset_structure(self):
        spec = vgg19_spec()
        convs = [s for s in spec if s.kind == CONV3X3]
        pools = [s for s in spec if s.kind == MAXPOOL2X2]
        assert len(convs) == 16
        assert len(pools) == 5
        assert convs[0].out_channels == 64
        assert convs[-1].out_channels == 512


class TestGram:
    def test_zero_map(self):
        g = gram_matrix(FeatureMap("l", 3, 5, np.zeros((3, 5))))
        assert (g.data == 0).all()

    def test_constant_single_channel(self):
        c, m = 1.5, 7
        g = gram_matrix(FeatureMap("l", 1, m, np.full((1, m), c)))
        assert np.allclose(g.data, [[c * c * m]])

    def test_orthonormal_rows(self):
        g = gram_matrix(FeatureMap("l", 2, 2, np.array([[1.0, 0.0], [0.0, 1.0]])))
        assert np.allclose(g.data, np.eye(2))

    def test_symmetry_and_psd_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            c = int(rng.integers(1, 12))
            m = int(rng.integers(1, 40))
            g = gram_matrix(FeatureMap("l", c, m, rng.normal(size=(c, m))))
            assert (g.data == g.data.T).all()
            assert np.linalg.eigvalsh(g.data).min() >= -1e-5


def test_feature_extraction_is_differentiable():
    """Input gradient of sum(features^2) matches central differences."""
    spec = tiny_backbone_spec(channels=(4, 4), pool_after=())
    model = load_weights(random_weight_archive(spec, seed=4), spec)
    rng = np.random.default_rng(5)
    x0 = rng.normal(size=(3, 16, 16))

    def loss_value(arr):
        graph = model.forward_graph(ad.const(arr), {"relu2"})
        return float(ad.sum_sq(graph["relu2"]).value)

    x = ad.param(x0.copy())
    total = ad.sum_sq(model.forward_graph(x, {"relu2"})["relu2"])
    ad.backward(total)

    h = 1e-3
    idx = rng.choice(x0.size, size=24, replace=False)
    for i in idx:
        flat = x0.reshape(-1)
        old = flat[i]
        flat[i] = old + h
        lp = loss_value(x0)
        flat[i] = old - h
        lm = loss_value(x0)
        flat[i] = old
        numeric = (lp - lm) / (2 * h)
        analytic = x.grad.reshape(-1)[i]
        assert abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8) < 1e-3
