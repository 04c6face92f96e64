"""
Unit tests for the model zoo: specs, saliency modules, recurrent cells,
non-contextual ablations and prediction
"""

import numpy as np
import pytest
import torch
from torch.autograd import gradcheck

from tcc_saliency_audit.errors import ConfigurationError, InputError, NumericError, ShapeError
from tcc_saliency_audit.model_zoo import (
    ConvLSTMCell,
    HiddenState,
    ModelSpec,
    NonContextualTemporal,
    SaliencyDims,
    SaliencyType,
    SpatialAttention,
    TemporalAttention,
    apply_spatial_mask,
    build_model,
    confidence_forward,
    conv_lstm_step,
    count_trainable_parameters,
    noncontextual_spatial_forward,
    noncontextual_temporal_forward,
    predict,
    rescale_confidence,
    sequence_tensor,
    spatial_attention_forward,
    temporal_attention_forward,
    temporal_confidence_weights,
)


def _zero_(module: torch.nn.Module) -> torch.nn.Module:
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module


class TestModelSpec:
    """Test cases for ModelSpec invariants and labels."""

    @pytest.mark.parametrize("label", ["B", "A-S", "A-T", "A-ST", "C-S", "C-T", "C-ST", "CA-ST"])
    def test_buildable_labels(self, label: str) -> None:
        spec = ModelSpec.from_label(label)
        spec.validate()
        assert spec.label == label

    @pytest.mark.parametrize("label", ["CA-S", "CA-T"])
    def test_combined_requires_both_dimensions(self, label: str) -> None:
        with pytest.raises(ConfigurationError, match="CA requires"):
            ModelSpec.from_label(label).validate()

    def test_type_and_dims_must_agree(self) -> None:
        with pytest.raises(ConfigurationError):
            ModelSpec(saliency_type=SaliencyType.A).validate()
        with pytest.raises(ConfigurationError):
            ModelSpec(saliency_dims=SaliencyDims.S).validate()

    @pytest.mark.parametrize("kernel_size", [0, 2, 4])
    def test_kernel_size_must_be_odd(self, kernel_size: int) -> None:
        with pytest.raises(ConfigurationError):
            ModelSpec(kernel_size=kernel_size).validate()

    def test_malformed_label(self) -> None:
        with pytest.raises(ConfigurationError):
            ModelSpec.from_label("A-S-T")

    def test_saliency_kinds(self) -> None:
        combined = ModelSpec.from_label("CA-ST")
        assert combined.spatial_kind == "confidence"
        assert combined.temporal_kind == "attention"
        assert ModelSpec.from_label("C-T").temporal_kind == "confidence"
        assert ModelSpec.from_label("A-S").temporal_kind is None

    def test_noncontextual_ablation(self) -> None:
        spatial = ModelSpec.from_label("C-S").noncontextual()
        assert not spatial.spatial_contextual and spatial.temporal_contextual
        both = ModelSpec.from_label("A-ST").noncontextual()
        assert not both.spatial_contextual and not both.temporal_contextual
        assert not both.is_contextual

    def test_paper_scale_defaults(self) -> None:
        spec = ModelSpec.paper_scale()
        assert spec.hidden_size == 128
        assert spec.kernel_size == 5

    def test_dict_roundtrip(self) -> None:
        spec = ModelSpec.from_label("A-T", hidden_size=8, input_size=(16, 16))
        assert ModelSpec.from_dict(spec.to_dict()) == spec


class TestBuildModel:
    """Test cases for build_model."""

    def test_baseline_has_no_saliency_modules(self) -> None:
        model = build_model(ModelSpec(), seed=0)
        assert model.spatial_attention is None
        assert model.temporal_attention is None

    def test_attention_spatiotemporal(self, make_spec) -> None:
        model = build_model(make_spec("A-ST"), seed=0)
        assert isinstance(model.spatial_attention, SpatialAttention)
        assert isinstance(model.temporal_attention, TemporalAttention)

    def test_invalid_spec(self) -> None:
        with pytest.raises(ConfigurationError):
            build_model(ModelSpec.from_label("CA-S"), seed=0)

    def test_deterministic_initialisation(self, make_spec) -> None:
        first = build_model(make_spec("C-ST"), seed=5).state_dict()
        second = build_model(make_spec("C-ST"), seed=5).state_dict()
        for name, tensor in first.items():
            assert torch.equal(tensor, second[name])

    def test_seed_changes_weights(self, make_spec) -> None:
        first = build_model(make_spec("A-S"), seed=0).state_dict()
        second = build_model(make_spec("A-S"), seed=1).state_dict()
        assert any(not torch.equal(first[k], second[k]) for k in first if first[k].is_floating_point())

    def test_attention_costs_more_parameters_than_confidence(self, make_spec) -> None:
        attention = count_trainable_parameters(build_model(make_spec("A-ST"), seed=0))
        confidence = count_trainable_parameters(build_model(make_spec("C-ST"), seed=0))
        assert attention > confidence

    def test_noncontextual_layers_swapped(self, make_spec) -> None:
        model = build_model(make_spec("A-T").noncontextual(), seed=0)
        assert isinstance(model.temporal, NonContextualTemporal)

    def test_dense_noncontextual_needs_input_size(self) -> None:
        spec = ModelSpec.from_label("C-S", spatial_contextual=False, dense_noncontextual=True)
        with pytest.raises(ConfigurationError):
            build_model(spec, seed=0)

    def test_dense_noncontextual_rejects_other_sizes(self, make_spec) -> None:
        spec = make_spec("C-S", dense_noncontextual=True, input_size=(16, 16)).noncontextual()
        model = build_model(spec, seed=0)
        assert model(torch.rand(1, 2, 3, 16, 16)).illuminant.shape == (1, 3)
        with pytest.raises(ShapeError):
            model(torch.rand(1, 2, 3, 8, 8))


class TestSpatialAttention:
    """Test cases for the spatial attention module."""

    def test_zero_parameters_give_half_mask(self) -> None:
        module = _zero_(SpatialAttention(8)).eval()
        mask = spatial_attention_forward(torch.randn(8, 4, 4), module)
        assert torch.allclose(mask, torch.full((4, 4), 0.5))

    def test_mask_shape_and_range(self) -> None:
        module = SpatialAttention(8).eval()
        mask = spatial_attention_forward(torch.randn(8, 4, 4), module)
        assert mask.shape == (4, 4)
        assert bool(((mask >= 0) & (mask <= 1)).all())

    def test_unbatched_input_required(self) -> None:
        with pytest.raises(ShapeError):
            spatial_attention_forward(torch.randn(1, 8, 4, 4), SpatialAttention(8))

    def test_channel_mismatch(self) -> None:
        with pytest.raises(ShapeError):
            spatial_attention_forward(torch.randn(6, 4, 4), SpatialAttention(8))

    def test_gradient_matches_finite_differences(self) -> None:
        torch.manual_seed(0)
        module = SpatialAttention(8).double().eval()
        x = torch.randn(1, 8, 4, 4, dtype=torch.float64, requires_grad=True)
        assert gradcheck(lambda inp: module(inp), (x,), eps=1e-6, atol=1e-4)


class TestConfidence:
    """Test cases for confidence maps."""

    def test_zero_trunk_gives_constant_map(self, make_spec) -> None:
        model = build_model(make_spec("C-S"), seed=0)
        _zero_(model.encoder)
        _, conf = confidence_forward(torch.rand(3, 16, 16), model.encoder)
        assert torch.all(conf == conf.flatten()[0])

    def test_map_in_unit_interval(self, make_spec) -> None:
        model = build_model(make_spec("C-S"), seed=3)
        features, conf = confidence_forward(torch.rand(3, 16, 16), model.encoder)
        assert features.shape[-2:] == conf.shape
        assert bool(((conf >= 0) & (conf <= 1)).all())

    def test_encoder_without_confidence(self, make_spec) -> None:
        model = build_model(make_spec("A-S"), seed=0)
        with pytest.raises(ShapeError):
            confidence_forward(torch.rand(3, 16, 16), model.encoder)

    def test_rescale_gradient(self) -> None:
        torch.manual_seed(1)
        raw = torch.rand(1, 4, 4, dtype=torch.float64, requires_grad=True)
        assert gradcheck(rescale_confidence, (raw,), eps=1e-6, atol=1e-4)


class TestApplySpatialMask:
    """Test cases for apply_spatial_mask."""

    def test_ones_is_identity(self) -> None:
        x = torch.randn(4, 3, 3)
        assert torch.equal(apply_spatial_mask(x, torch.ones(3, 3)), x)

    def test_zeros_annihilate(self) -> None:
        x = torch.randn(4, 3, 3)
        assert torch.equal(apply_spatial_mask(x, torch.zeros(3, 3)), torch.zeros(4, 3, 3))

    def test_scalar_case(self) -> None:
        out = apply_spatial_mask(torch.tensor([[[2.0]]]), torch.tensor([[0.5]]))
        assert out.tolist() == [[[1.0]]]

    def test_shape_mismatch(self) -> None:
        with pytest.raises(ShapeError):
            apply_spatial_mask(torch.randn(4, 3, 3), torch.ones(2, 2))


class TestTemporalAttention:
    """Test cases for temporal attention weights."""

    def test_zero_parameters_give_uniform_weights(self) -> None:
        module = _zero_(TemporalAttention(8, 4, 4))
        weights, _ = temporal_attention_forward(torch.randn(5, 8, 2, 2), HiddenState.zeros(4, 2, 2), module)
        assert torch.allclose(weights, torch.full((5,), 0.2))

    def test_single_timestep(self) -> None:
        module = TemporalAttention(8, 4, 4)
        frame = torch.randn(1, 8, 2, 2)
        weights, out = temporal_attention_forward(frame, HiddenState.zeros(4, 2, 2), module)
        assert weights.tolist() == pytest.approx([1.0])
        assert torch.allclose(out, frame[0])

    def test_weights_form_a_distribution(self) -> None:
        torch.manual_seed(2)
        for trial in range(1000):
            if trial % 100 == 0:
                module = TemporalAttention(4, 3, 4)
            state = HiddenState(torch.randn(3, 2, 2), torch.randn(3, 2, 2))
            weights, _ = temporal_attention_forward(torch.randn(4, 4, 2, 2) * 5, state, module)
            assert bool((weights >= 0).all())
            assert float(weights.sum()) == pytest.approx(1.0, abs=1e-6)

    def test_empty_sequence(self) -> None:
        with pytest.raises(InputError):
            temporal_attention_forward([], HiddenState.zeros(4, 2, 2), TemporalAttention(8, 4, 4))


class TestTemporalConfidence:
    """Test cases for confidence-derived temporal weights."""

    def test_constant_mask(self) -> None:
        weights = temporal_confidence_weights([np.full((3, 3), 0.5)])
        assert weights.weights.tolist() == pytest.approx([0.5])
        assert not weights.normalized

    def test_extremes(self) -> None:
        weights = temporal_confidence_weights([np.zeros((2, 2)), np.ones((2, 2))])
        assert weights.weights.tolist() == [0.0, 1.0]

    def test_arithmetic_mean(self) -> None:
        weights = temporal_confidence_weights(torch.tensor([[[0.0, 1.0], [1.0, 1.0]]]))
        assert weights.weights.tolist() == pytest.approx([0.75])

    def test_no_masks(self) -> None:
        with pytest.raises(InputError):
            temporal_confidence_weights([])


class TestConvLSTM:
    """Test cases for the ConvLSTM cell."""

    def test_zero_parameters_closed_form(self) -> None:
        cell = _zero_(ConvLSTMCell(4, 3, 3))
        h, state = conv_lstm_step(torch.randn(4, 5, 5), HiddenState.zeros(3, 5, 5), cell)
        assert torch.equal(h, torch.zeros(3, 5, 5))
        assert torch.equal(state.c, torch.zeros(3, 5, 5))

    def test_state_shape_preserved(self) -> None:
        cell = ConvLSTMCell(4, 3, 3)
        state = HiddenState.zeros(3, 5, 5)
        for _ in range(3):
            _, state = conv_lstm_step(torch.randn(4, 5, 5), state, cell)
            assert state.h.shape == (3, 5, 5) and state.c.shape == (3, 5, 5)

    def test_state_mismatch(self) -> None:
        with pytest.raises(ShapeError):
            conv_lstm_step(torch.randn(4, 5, 5), HiddenState.zeros(3, 4, 4), ConvLSTMCell(4, 3, 3))

    def test_hidden_state_shapes_must_agree(self) -> None:
        with pytest.raises(ShapeError):
            HiddenState(torch.zeros(3, 2, 2), torch.zeros(3, 2, 3))

    def test_gradient_matches_finite_differences(self) -> None:
        torch.manual_seed(0)
        cell = ConvLSTMCell(2, 2, 3).double()
        h0 = torch.randn(1, 2, 3, 3, dtype=torch.float64)
        c0 = torch.randn(1, 2, 3, 3, dtype=torch.float64)
        x = torch.randn(1, 2, 3, 3, dtype=torch.float64, requires_grad=True)
        assert gradcheck(lambda inp: cell(inp, (h0, c0))[0], (x,), eps=1e-6, atol=1e-4)


class TestNonContextual:
    """Test cases for the non-contextual ablations."""

    def test_identity_affine(self) -> None:
        frame = torch.rand(3, 4, 4)
        out = noncontextual_spatial_forward(frame, torch.eye(3), torch.zeros(3))
        assert torch.allclose(out, frame)

    def test_pixel_permutation_equivariance(self) -> None:
        torch.manual_seed(0)
        weight, bias = torch.randn(5, 3), torch.randn(5)
        frame = torch.rand(3, 4, 4)
        swapped = frame.clone()
        swapped[:, 0, 0], swapped[:, 2, 3] = frame[:, 2, 3], frame[:, 0, 0]
        out = noncontextual_spatial_forward(frame, weight, bias)
        out_swapped = noncontextual_spatial_forward(swapped, weight, bias)
        expected = out.clone()
        expected[:, 0, 0], expected[:, 2, 3] = out[:, 2, 3], out[:, 0, 0]
        assert torch.allclose(out_swapped, expected)

    def test_grid_sampling_picks_pixels(self) -> None:
        frame = torch.rand(3, 4, 4)
        out = noncontextual_spatial_forward(frame, torch.eye(3), torch.zeros(3), grid=(2, 2))
        assert torch.equal(out, frame[:, ::2, ::2])

    def test_matches_encoder(self, make_spec) -> None:
        encoder = build_model(make_spec("C-S").noncontextual(), seed=0).encoder
        frame = torch.rand(3, 16, 16)
        with torch.no_grad():
            features, raw = encoder(frame.unsqueeze(0))
            out = noncontextual_spatial_forward(frame, encoder.pointwise.weight.flatten(1),
                                                encoder.pointwise.bias, grid=encoder.output_size(16, 16))
        channels = encoder.out_channels
        assert torch.allclose(out[:channels], features[0], atol=1e-6)
        assert torch.allclose(torch.relu(out[channels:]), raw[0], atol=1e-6)

    def test_encoder_grid_matches_contextual(self, make_spec) -> None:
        frames = torch.rand(2, 3, 16, 16)
        contextual = build_model(make_spec("C-S"), seed=0)
        ablated = build_model(make_spec("C-S").noncontextual(), seed=0)
        assert contextual.encoder(frames)[0].shape == ablated.encoder(frames)[0].shape

    def test_single_timestep_is_affine(self) -> None:
        module = NonContextualTemporal(4, 3)
        x = torch.randn(1, 4, 2, 2)
        out = noncontextual_temporal_forward(x, module)
        assert torch.allclose(out, module.pointwise(x)[0])

    def test_order_invariance_with_uniform_weights(self) -> None:
        module = NonContextualTemporal(4, 3)
        seq = torch.randn(5, 4, 2, 2)
        forward = noncontextual_temporal_forward(seq, module)
        backward = noncontextual_temporal_forward(seq.flip(0), module)
        assert torch.allclose(forward, backward, atol=1e-6)

    def test_shape_parity_with_convlstm(self) -> None:
        seq = torch.randn(3, 4, 2, 2)
        out = noncontextual_temporal_forward(seq, NonContextualTemporal(4, 6))
        h, _ = conv_lstm_step(seq[0], HiddenState.zeros(6, 2, 2), ConvLSTMCell(4, 6, 3))
        assert out.shape == h.shape

    def test_weight_length_mismatch(self) -> None:
        with pytest.raises(ShapeError):
            noncontextual_temporal_forward(torch.randn(3, 4, 2, 2), NonContextualTemporal(4, 3),
                                           weights=torch.ones(2))


class TestPredict:
    """Test cases for predict and the forward pass."""

    def test_baseline_captures_nothing(self, sequence) -> None:
        prediction = predict(build_model(ModelSpec(hidden_size=4), seed=0), sequence)
        assert prediction.captured_spatial_masks == []
        assert prediction.captured_temporal_weights is None

    @pytest.mark.parametrize("label", ["B", "A-S", "A-T", "A-ST", "C-S", "C-T", "C-ST", "CA-ST"])
    def test_unit_norm_nonnegative_illuminant(self, make_spec, sequence, label: str) -> None:
        prediction = predict(build_model(make_spec(label), seed=0), sequence)
        assert np.linalg.norm(prediction.illuminant) == pytest.approx(1.0, abs=1e-6)
        assert np.all(prediction.illuminant >= 0)

    def test_one_mask_per_frame(self, make_spec, sequence) -> None:
        prediction = predict(build_model(make_spec("C-S"), seed=0), sequence)
        assert len(prediction.captured_spatial_masks) == len(sequence)
        assert all(np.all((m >= 0) & (m <= 1)) for m in prediction.captured_spatial_masks)

    def test_attention_weights_normalised(self, make_spec, sequence) -> None:
        weights = predict(build_model(make_spec("A-T"), seed=0), sequence).captured_temporal_weights
        assert weights.normalized
        assert weights.weights.sum() == pytest.approx(1.0, abs=1e-6)

    def test_confidence_weights_unnormalised(self, make_spec, sequence) -> None:
        weights = predict(build_model(make_spec("C-T"), seed=0), sequence).captured_temporal_weights
        assert not weights.normalized
        assert len(weights) == len(sequence)
        assert np.all((weights.weights >= 0) & (weights.weights <= 1))

    def test_bad_frame_shape(self, make_spec) -> None:
        with pytest.raises(ShapeError):
            build_model(make_spec("A-S"), seed=0)(torch.rand(3, 3, 16, 16))

    def test_collapsed_prediction_names_the_head(self, make_spec, sequence) -> None:
        model = build_model(make_spec("A-S"), seed=0)
        with torch.no_grad():
            model.head.weight.zero_()
            model.head.bias.fill_(-1.0)
        with pytest.raises(NumericError) as info:
            predict(model, sequence)
        assert info.value.layer == "head"

    def test_sequence_tensor_layout(self, sequence) -> None:
        frames = sequence_tensor(sequence)
        assert frames.shape == (1, 3, 3, 16, 16)
        assert torch.allclose(frames[0, 1].permute(1, 2, 0), torch.from_numpy(sequence.frames[1]))
