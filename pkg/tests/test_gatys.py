import numpy as np
import pytest

from livestyle.backbone import (
    FeatureMap,
    GramMatrix,
    TINY_CONTENT_LAYERS,
    TINY_STYLE_LAYERS,
    extract_features,
    gram_matrix,
    random_backbone,
)
from livestyle.errors import DivergedLoss, RangeMismatch, ShapeMismatch
from livestyle.gatys import (
    GatysConfig,
    InitMode,
    content_loss,
    layer_style_error,
    run_gatys,
    style_loss,
    total_loss,
)
from livestyle.images import ImageTensor, PreprocessSpec, Range, normalize

from conftest import make_unit_image


def _cfg(**kw):
    base = dict(
        content_layers=TINY_CONTENT_LAYERS,
        style_layers=TINY_STYLE_LAYERS,
        layer_weights=(1 / 3, 1 / 3, 1 / 3),
        iterations=5,
        step_size=0.02,
        seed=0,
    )
    base.update(kw)
    return GatysConfig(**base)


def _fm(values) -> FeatureMap:
    arr = np.atleast_2d(np.asarray(values, dtype=float))
    return FeatureMap("l", arr.shape[0], arr.shape[1], arr)


class TestContentLoss:
    def test_identical_is_zero(self):
        f = _fm([[1.0, -2.0, 3.0]])
        assert content_loss(f, f) == 0.0

    def test_half_sum_squared(self):
        assert content_loss(_fm([[1.0, 0.0]]), _fm([[0.0, 0.0]])) == pytest.approx(0.5, rel=1e-6)
        assert content_loss(_fm([[2.0, 1.0]]), _fm([[0.0, 1.0]])) == pytest.approx(2.0, rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            content_loss(_fm([[1.0, 2.0]]), _fm([[1.0]]))


class TestLayerStyleError:
    def test_identical_is_zero(self):
        g = GramMatrix(2, np.array([[1.0, 0.5], [0.5, 2.0]]))
        assert layer_style_error(g, g, 2, 9) == 0.0

    def test_hand_computed(self):
        gx = GramMatrix(1, [[2.0]])
        ga = GramMatrix(1, [[0.0]])
        assert layer_style_error(gx, ga, 1, 1) == pytest.approx(1.0, rel=1e-6)

    def test_quartic_feature_scaling(self):
        rng = np.random.default_rng(0)
        f = rng.normal(size=(3, 10))
        a = rng.normal(size=(3, 10))
        c = 1.7
        base = layer_style_error(
            gram_matrix(FeatureMap("l", 3, 10, f)), gram_matrix(FeatureMap("l", 3, 10, a)), 3, 10
        )
        scaled = layer_style_error(
            gram_matrix(FeatureMap("l", 3, 10, c * f)),
            gram_matrix(FeatureMap("l", 3, 10, c * a)),
            3,
            10,
        )
        assert scaled == pytest.approx(c**4 * base, rel=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            layer_style_error(GramMatrix(1, [[1.0]]), GramMatrix(2, np.eye(2)), 1, 1)


class TestStyleAndTotal:
    def test_zero_weights(self):
        assert style_loss([3.0, 4.0], [0.0, 0.0]) == 0.0

    def test_weighted_sum(self):
        assert style_loss([1.0, 2.0], [0.5, 0.5]) == pytest.approx(1.5, rel=1e-6)

    def test_single_layer_degenerate(self):
        e = 0.37
        assert style_loss([e], [1.0]) == pytest.approx(e, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            style_loss([1.0], [0.5, 0.5])

    def test_total_endpoints(self):
        assert total_loss(2.0, 3.0, 1.0, 0.0) == 2.0
        assert total_loss(2.0, 3.0, 0.0, 1.0) == 3.0
        assert total_loss(2.0, 3.0, 1.0, 10.0) == pytest.approx(32.0, rel=1e-12)


class TestRunGatys:
    def test_style_equals_content_is_stationary(self, tiny_model):
        spec = tiny_model.input_spec
        content = normalize(make_unit_image(1, 24), spec)
        out, trace = run_gatys(content, content, tiny_model, _cfg(iterations=3))
        assert trace.losses[0].total == pytest.approx(0.0, abs=1e-9)
        unit_content = make_unit_image(1, 24)
        assert np.abs(out.data - unit_content.data).max() <= 1.0 / 255 + 1e-6

    def test_zero_style_weight_keeps_content_loss_zero(self, tiny_model):
        spec = tiny_model.input_spec
        content = normalize(make_unit_image(2, 24), spec)
        style = normalize(make_unit_image(3, 24), spec)
        _, trace = run_gatys(content, style, tiny_model, _cfg(style_weight=0.0, iterations=4))
        assert all(b.content == pytest.approx(0.0, abs=1e-12) for b in trace.losses)

    def test_requires_backbone_range(self, tiny_model):
        unit = make_unit_image(4, 24)
        with pytest.raises(RangeMismatch):
            run_gatys(unit, unit, tiny_model, _cfg())

    def test_deterministic_given_seed(self, tiny_model):
        spec = tiny_model.input_spec
        content = normalize(make_unit_image(5, 24), spec)
        style = normalize(make_unit_image(6, 24), spec)
        out1, _ = run_gatys(content, style, tiny_model, _cfg(init=InitMode.NOISE, seed=11))
        out2, _ = run_gatys(content, style, tiny_model, _cfg(init=InitMode.NOISE, seed=11))
        assert (out1.data == out2.data).all()

    def test_trace_shape_and_breakdown_invariants(self, tiny_model):
        spec = tiny_model.input_spec
        content = normalize(make_unit_image(7, 24), spec)
        style = normalize(make_unit_image(8, 24), spec)
        cfg = _cfg(iterations=6, style_weight=250.0, content_weight=2.0)
        _, trace = run_gatys(content, style, tiny_model, cfg)
        assert len(trace.losses) == 6
        assert len(trace.wall_times) == 6
        for b in trace.losses:
            recomputed = cfg.content_weight * b.content + cfg.style_weight * b.style
            assert b.total == pytest.approx(recomputed, rel=1e-6)
            assert b.style == pytest.approx(
                sum(w * e for w, e in zip(cfg.layer_weights, b.per_layer_E)), rel=1e-6
            )
            assert b.content >= 0 and b.style >= 0 and all(e >= 0 for e in b.per_layer_E)

    def test_best_so_far_is_non_increasing(self, tiny_model):
        spec = tiny_model.input_spec
        content = normalize(make_unit_image(9, 32), spec)
        style = normalize(make_unit_image(10, 32), spec)
        _, trace = run_gatys(content, style, tiny_model, _cfg(iterations=12, init=InitMode.NOISE))
        totals = [b.total for b in trace.losses]
        best = np.minimum.accumulate(totals)
        assert (np.diff(best) <= 0).all()

    def test_diverged_loss_reports_iteration(self, tiny_model):
        spec = tiny_model.input_spec
        content = normalize(make_unit_image(11, 24), spec)
        style = normalize(make_unit_image(12, 24), spec)
        with pytest.raises(DivergedLoss) as exc:
            run_gatys(
                content,
                style,
                tiny_model,
                _cfg(content_weight=1e308, style_weight=1e308, init=InitMode.NOISE),
            )
        assert exc.value.iteration == 0

    def test_pixel_gradient_matches_finite_differences(self):
        model = random_backbone(seed=0, input_spec=PreprocessSpec(target_size=32))
        spec = model.input_spec
        content = normalize(make_unit_image(13, 16), spec)
        style = normalize(make_unit_image(14, 16), spec)
        cfg = _cfg(iterations=1)

        from livestyle import autodiff as ad
        from livestyle.gatys import _losses_graph

        want = set(cfg.content_layers) | set(cfg.style_layers)
        c_arr = content.data.astype(np.float64).transpose(2, 0, 1)
        s_arr = style.data.astype(np.float64).transpose(2, 0, 1)
        c_maps = model.forward_arrays(c_arr, want)
        s_maps = model.forward_arrays(s_arr, set(cfg.style_layers))
        targets = {lid: c_maps[lid] for lid in cfg.content_layers}
        grams = {}
        dims = {}
        for lid, arr in s_maps.items():
            f = arr.reshape(arr.shape[0], -1)
            grams[lid] = f @ f.T
            g = c_maps[lid]
            dims[lid] = (g.shape[0], g.shape[1] * g.shape[2])

        x0 = np.ascontiguousarray(s_arr * 0.4 + c_arr * 0.6)

        def value(arr):
            total, _ = _losses_graph(ad.const(arr), model, cfg, targets, grams, dims)
            return float(total.value)

        x = ad.param(x0.copy())
        total, _ = _losses_graph(x, model, cfg, targets, grams, dims)
        ad.backward(total)

        rng = np.random.default_rng(0)
        h = 1e-3
        flat = x0.reshape(-1)
        for i in rng.choice(flat.size, size=24, replace=False):
            old = flat[i]
            flat[i] = old + h
            lp = value(x0)
            flat[i] = old - h
            lm = value(x0)
            flat[i] = old
            numeric = (lp - lm) / (2 * h)
            analytic = x.grad.reshape(-1)[i]
            assert abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8) < 1e-3
