"""Tests for the encoder backbone, the adapters and checkpoint files."""

import numpy as np
import pytest

from src.autodiff.engine import DiffGraph, backpropagate
from src.autodiff.gradcheck import check_gradients
from src.errors import AdapterCountError, BadMagicError, ShapeMismatchError, TruncatedFileError
from src.models.adapters import AdapterSpec, BaselineAdapter, adapter_parameters, build_adapters
from src.models.backbone import BackboneConfig, BackboneModel
from src.models.cats import CatsAdapter, GatLayer, TdcLayer, count_parameters, gat_parameters, tdc_parameters
from src.models.checkpoint import load_checkpoint, load_model, save_checkpoint, save_model


@pytest.fixture
def config():
    return BackboneConfig(n_vars=3, n_classes=4, d_model=8, n_blocks=2, n_heads=2, d_ff=16, window_len=6)


@pytest.fixture
def model(config):
    return BackboneModel(config, seed=3)


class TestBackbone:
    """Encoder forward pass and freezing."""

    def test_output_shapes(self, model, rng):
        result = model.forward(DiffGraph(), rng.normal(size=(5, 6, 3)))
        assert result.logits.shape == (5, 4)
        assert result.pooled.shape == (5, 8)
        assert len(result.pre_adapter) == len(result.post_adapter) == 2
        assert result.hidden.shape == (5, 6, 8)
        assert result.attention[0].shape == (5, 2, 6, 6)

    def test_single_window(self, model, rng):
        assert model.forward(DiffGraph(), rng.normal(size=(6, 3))).logits.shape == (1, 4)

    def test_forecast_shape(self, model, rng):
        g = DiffGraph()
        assert model.forecast(g, model.forward(g, rng.normal(size=(2, 6, 3)))).shape == (2, 6, 3)

    def test_attention_rows_are_distributions(self, model, rng):
        weights = model.forward(DiffGraph(), rng.normal(size=(2, 6, 3))).attention[1]
        np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)

    def test_same_seed_same_model(self, config, rng):
        windows = rng.normal(size=(2, 6, 3))
        first = BackboneModel(config, seed=9).forward(DiffGraph(), windows).logits.value
        second = BackboneModel(config, seed=9).forward(DiffGraph(), windows).logits.value
        np.testing.assert_array_equal(first, second)

    def test_wrong_variable_count(self, model, rng):
        with pytest.raises(ShapeMismatchError):
            model.forward(DiffGraph(), rng.normal(size=(2, 6, 4)))

    def test_adapter_count(self, model, config, rng):
        adapters = build_adapters(AdapterSpec("linear"), config)[:1]
        with pytest.raises(AdapterCountError):
            model.forward(DiffGraph(), rng.normal(size=(2, 6, 3)), adapters)

    def test_indivisible_heads(self):
        with pytest.raises(ShapeMismatchError):
            BackboneConfig(n_vars=2, n_classes=2, d_model=10, n_heads=4)

    def test_freeze_leaves_forecaster_trainable(self, model, rng):
        model.freeze_backbone()
        assert model.forecaster.num_parameters(trainable_only=True) == model.forecaster.num_parameters()
        assert model.classifier.num_parameters(trainable_only=True) == 0
        assert all(block.num_parameters(trainable_only=True) == 0 for block in model.blocks)

    def test_frozen_backbone_receives_no_gradient(self, model, config, rng):
        model.freeze_backbone()
        adapters = build_adapters(AdapterSpec("cats", kernel_size=3, length=6), config, seed=1)
        g = DiffGraph()
        result = model.forward(g, rng.normal(size=(2, 6, 3)), adapters)
        backpropagate(g, g.sum(g.mul(result.logits, result.logits)))
        assert all(p.grad is None for p in model.classifier.parameters())
        assert any(p.grad is not None for p in adapter_parameters(adapters))

    def test_backbone_parameter_count_matches_closed_form(self, model, config):
        assert model.backbone_parameters() == count_parameters(config).backbone


class TestAdapters:
    """Residual adapters start as the identity."""

    @pytest.mark.parametrize("kind", ["linear", "cats"])
    def test_fresh_adapters_do_not_change_outputs(self, kind, model, config, rng):
        windows = rng.normal(size=(3, 6, 3))
        plain = model.forward(DiffGraph(), windows)
        adapters = build_adapters(AdapterSpec(kind, kernel_size=3, length=6), config, seed=4)
        adapted = model.forward(DiffGraph(), windows, adapters)
        np.testing.assert_allclose(adapted.logits.value, plain.logits.value, atol=1e-12)
        for pre, post in zip(adapted.pre_adapter, adapted.post_adapter):
            np.testing.assert_allclose(post.value, pre.value, atol=1e-12)

    def test_none_builds_nothing(self, config):
        assert build_adapters(AdapterSpec("none"), config) == []

    def test_one_adapter_per_block(self, config):
        adapters = build_adapters(AdapterSpec("cats", length=6), config)
        assert len(adapters) == config.n_blocks
        assert all(isinstance(a, CatsAdapter) for a in adapters)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            AdapterSpec("lora")

    def test_linear_adapter_width(self, rng):
        adapter = BaselineAdapter(8, rank=2)
        g = DiffGraph()
        with pytest.raises(ShapeMismatchError):
            adapter(g, g.constant(rng.normal(size=(2, 4, 6))))

    def test_cats_adapter_length(self, rng):
        adapter = CatsAdapter(8, length=6, kernel_size=3)
        g = DiffGraph()
        with pytest.raises(ShapeMismatchError):
            adapter(g, g.constant(rng.normal(size=(2, 5, 8))))

    def test_cats_adapter_gradients(self, rng):
        adapter = CatsAdapter(4, length=5, kernel_size=3, seed=2)
        adapter.tdc_up.kernel.value[...] = rng.normal(scale=0.3, size=(4, 3))
        hidden = rng.normal(size=(2, 5, 4))
        weights = rng.normal(size=(2, 5, 4))

        def build(g):
            return g.sum(g.mul(adapter(g, g.constant(hidden)), g.constant(weights)))

        assert check_gradients(build, adapter.parameters()).max_error < 1e-4


class TestTdc:
    """Depthwise temporal convolution."""

    def test_delta_kernel_is_identity(self, rng):
        layer = TdcLayer(3, 5)
        layer.kernel.value[:, 2] = 1.0
        g = DiffGraph()
        x = rng.normal(size=(2, 3, 7))
        np.testing.assert_allclose(layer(g, g.constant(x)).value, x)

    def test_zero_kernel_outputs_bias(self, rng):
        layer = TdcLayer(3, 3)
        layer.bias.value[...] = [1.0, 2.0, 3.0]
        g = DiffGraph()
        out = layer(g, g.constant(rng.normal(size=(3, 4)))).value
        np.testing.assert_array_equal(out, np.repeat([[1.0], [2.0], [3.0]], 4, axis=1))

    def test_even_kernel(self):
        with pytest.raises(ShapeMismatchError):
            TdcLayer(3, 4)

    def test_parameter_count_example(self):
        assert tdc_parameters(128, 5) == 768
        assert TdcLayer(128, 5).num_parameters() == 768


class TestGat:
    """Graph attention over channel nodes."""

    def test_single_node_attends_to_itself(self, rng):
        layer = GatLayer(4, rng)
        g = DiffGraph()
        x = rng.normal(size=(1, 4))
        assert layer.attention_weights(g, g.constant(x)).value == pytest.approx(1.0)
        np.testing.assert_allclose(layer(g, g.constant(x)).value, x @ layer.weight.value.T)

    def test_zero_scores_give_uniform_attention(self, rng):
        layer = GatLayer(4, rng)
        layer.attn.value[...] = 0.0
        g = DiffGraph()
        np.testing.assert_allclose(layer.attention_weights(g, g.constant(rng.normal(size=(5, 4)))).value, 0.2)

    def test_matches_explicit_loops(self, rng):
        layer = GatLayer(3, rng)
        x = rng.normal(size=(4, 3))
        g = DiffGraph()
        out = layer(g, g.constant(x)).value

        projected = x @ layer.weight.value.T
        a_self, a_other = layer.attn.value[:3], layer.attn.value[3:]
        expected = np.zeros_like(projected)
        for i in range(4):
            scores = np.array([projected[i] @ a_self + projected[j] @ a_other for j in range(4)])
            scores = np.where(scores > 0, scores, 0.2 * scores)
            alpha = np.exp(scores - scores.max())
            alpha /= alpha.sum()
            expected[i] = sum(alpha[j] * projected[j] for j in range(4))
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_parameter_count_example(self, rng):
        assert gat_parameters(48) == 2400
        assert GatLayer(48, rng).num_parameters() == 2400


class TestParameterCounts:
    """Closed-form adapter and backbone sizes."""

    def test_cats_adapter_matches_module(self, config):
        counts = count_parameters(config, kernel_size=3)
        adapters = build_adapters(AdapterSpec("cats", kernel_size=3, length=6), config)
        assert counts.adapter == sum(a.num_parameters() for a in adapters)

    def test_linear_adapter_matches_module(self, config):
        counts = count_parameters(config, adapter="linear", rank=4)
        adapters = build_adapters(AdapterSpec("linear", rank=4), config)
        assert counts.adapter == sum(a.num_parameters() for a in adapters)

    def test_default_ratio_is_small_and_shrinks_with_width(self):
        configs = [BackboneConfig(n_vars=9, n_classes=6, d_model=d, d_ff=256, n_blocks=3) for d in (128, 256, 512)]
        ratios = [count_parameters(c).ratio for c in configs]
        assert ratios[0] < 0.05
        assert ratios[0] > ratios[1] > ratios[2]

    def test_unknown_adapter(self, config):
        with pytest.raises(ValueError):
            count_parameters(config, adapter="prefix")


class TestCheckpoint:
    """CKPT1 files."""

    def test_tensor_file_round_trip(self, tmp_path, rng):
        tensors = {"a": rng.normal(size=(2, 3)), "scalar": np.array(1.5), "empty": np.zeros((0,))}
        save_checkpoint(tmp_path / "t.ckpt", tensors)
        loaded = load_checkpoint(tmp_path / "t.ckpt")
        assert list(loaded) == ["a", "scalar", "empty"]
        np.testing.assert_array_equal(loaded["a"], tensors["a"])
        assert loaded["scalar"].shape == ()

    def test_model_round_trip(self, tmp_path, model, config, rng):
        spec = AdapterSpec("cats", kernel_size=3, length=6)
        adapters = build_adapters(spec, config, seed=5)
        adapters[0].tdc_up.kernel.value[...] = rng.normal(size=(8, 3))
        save_model(tmp_path / "m.ckpt", model, adapters, spec)
        loaded_model, loaded_adapters, loaded_spec = load_model(tmp_path / "m.ckpt")

        assert loaded_spec == spec
        assert loaded_model.config == config
        windows = rng.normal(size=(2, 6, 3))
        before = model.forward(DiffGraph(), windows, adapters).logits.value
        after = loaded_model.forward(DiffGraph(), windows, loaded_adapters).logits.value
        np.testing.assert_array_equal(before, after)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.ckpt").write_bytes(b"NOTCKPT")
        with pytest.raises(BadMagicError):
            load_checkpoint(tmp_path / "x.ckpt")

    def test_truncated(self, tmp_path, rng):
        save_checkpoint(tmp_path / "t.ckpt", {"a": rng.normal(size=(4, 4))})
        payload = (tmp_path / "t.ckpt").read_bytes()
        (tmp_path / "t.ckpt").write_bytes(payload[:-8])
        with pytest.raises(TruncatedFileError):
            load_checkpoint(tmp_path / "t.ckpt")

    def test_missing_metadata(self, tmp_path):
        save_checkpoint(tmp_path / "t.ckpt", {"a": np.ones(2)})
        with pytest.raises(ShapeMismatchError):
            load_model(tmp_path / "t.ckpt")
