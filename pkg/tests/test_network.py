import numpy as np
import pytest

from core_net.network import (
    LossKind,
    accuracy,
    append_output_nodes,
    flatten,
    forward,
    forward_batch,
    hidden_activations,
    init_weights,
    input_gradient,
    jvp,
    loss_and_grad,
    output_jacobian,
    per_sample_jacobian,
    predict,
    unflatten,
    vjp,
    widen_output_head,
)
from shared_models.errors import (
    CapExceededError,
    DimensionMismatchError,
    DuplicateTaskError,
    EmptyBatchError,
    InvalidLayerError,
    LabelRangeError,
    MissingLabelsError,
    NonFiniteError,
    UnknownTaskError,
)
from shared_models.network import Activation, Batch, NetworkSpec, WeightVector


class TestSpec:
    def test_param_count(self):
        assert NetworkSpec.mlp([3, 5, 2]).param_count == 3 * 5 + 5 + 5 * 2 + 2
        assert NetworkSpec.mlp([3, 5, 2], use_bias=False).param_count == 25

    def test_bias_mask_layout(self):
        spec = NetworkSpec.mlp([2, 3, 1])
        mask = spec.bias_mask()
        assert mask.sum() == 4
        # W1 (6), b1 (3), W2 (3), b2 (1)
        np.testing.assert_array_equal(np.flatnonzero(mask), [6, 7, 8, 12])

    def test_heads_must_cover_output_suffix(self):
        with pytest.raises(ValueError):
            NetworkSpec(layer_dims=[2, 3], activations=[Activation.IDENTITY],
                        head_ranges=[{"task_id": 1, "start": 0, "stop": 2}])

    def test_unknown_head(self):
        spec = NetworkSpec.mlp([2, 2], head_widths=[2])
        with pytest.raises(UnknownTaskError):
            spec.head(7)

    def test_headless_spec_exposes_all_outputs(self):
        spec = NetworkSpec.mlp([2, 3])
        assert spec.head(5).as_slice() == slice(0, 3)


class TestWeights:
    def test_flatten_is_row_major_weight_then_bias(self):
        spec = NetworkSpec.mlp([2, 2, 1])
        values = np.arange(spec.param_count, dtype=np.float64)
        layers = unflatten(spec, values)
        np.testing.assert_array_equal(layers[0][0], [[0, 1], [2, 3]])
        np.testing.assert_array_equal(layers[0][1], [4, 5])
        np.testing.assert_array_equal(layers[1][0], [[6, 7]])
        np.testing.assert_array_equal(flatten(layers), values)

    def test_non_finite_weights_rejected(self):
        spec = NetworkSpec.mlp([1, 1])
        with pytest.raises(NonFiniteError):
            WeightVector.for_spec(spec, [np.nan, 0.0])

    def test_wrong_length_rejected(self):
        spec = NetworkSpec.mlp([2, 2])
        with pytest.raises(DimensionMismatchError):
            WeightVector.for_spec(spec, np.zeros(spec.param_count + 1))

    def test_weights_bound_to_their_spec(self):
        a = NetworkSpec.mlp([2, 2], hidden=Activation.RELU)
        b = NetworkSpec.mlp([2, 2], output=Activation.TANH)
        w = init_weights(a, seed=0)
        with pytest.raises(DimensionMismatchError):
            forward(b, w, np.zeros(2))

    def test_init_is_seeded(self):
        spec = NetworkSpec.mlp([4, 8, 3])
        np.testing.assert_array_equal(init_weights(spec, 5).values, init_weights(spec, 5).values)
        assert not np.array_equal(init_weights(spec, 5).values, init_weights(spec, 6).values)


class TestBatch:
    def test_empty_batch(self):
        with pytest.raises(EmptyBatchError):
            Batch(inputs=np.zeros((0, 2)))

    def test_labels_out_of_range(self):
        spec = NetworkSpec.mlp([2, 2], head_widths=[2])
        batch = Batch(inputs=np.zeros((2, 2)), labels=[0, 2], task_id=1)
        with pytest.raises(LabelRangeError):
            batch.check_for(spec)

    def test_missing_labels(self):
        spec = NetworkSpec.mlp([2, 2])
        with pytest.raises(MissingLabelsError):
            loss_and_grad(spec, init_weights(spec, 0), Batch(inputs=np.zeros((1, 2))))

    def test_subsample_is_seeded_and_sorted(self, rng):
        batch = Batch(inputs=rng.standard_normal((50, 2)))
        a = batch.subsample(10, seed=3)
        np.testing.assert_array_equal(a.inputs, batch.subsample(10, seed=3).inputs)
        assert batch.subsample(100, seed=3) is batch


class TestForward:
    def test_linear_network(self):
        spec = NetworkSpec.mlp([2, 1], use_bias=False)
        w = WeightVector.for_spec(spec, [3.0, -1.0])
        np.testing.assert_allclose(forward(spec, w, np.array([1.0, 2.0])), [1.0])

    def test_input_dimension_checked(self, tanh_net):
        spec, w, _ = tanh_net
        with pytest.raises(DimensionMismatchError):
            forward(spec, w, np.zeros(4))

    def test_relu_subgradient_at_zero_is_zero(self):
        spec = NetworkSpec.mlp([1, 1, 1], hidden=Activation.RELU)
        # hidden pre-activation is exactly 0 at x = 0
        w = WeightVector.for_spec(spec, [1.0, 0.0, 2.0, 0.5])
        jac = output_jacobian(spec, w, np.array([0.0]))
        np.testing.assert_array_equal(jac, [[0.0, 0.0, 0.0, 1.0]])

    def test_hidden_activations_layer_range(self, tanh_net):
        spec, w, batch = tanh_net
        assert hidden_activations(spec, w, batch.inputs, 2).shape == (batch.size, 4)
        with pytest.raises(InvalidLayerError):
            hidden_activations(spec, w, batch.inputs, 3)


class TestLinearisation:
    def test_jvp_matches_jacobian(self, tanh_net, rng):
        spec, w, batch = tanh_net
        dw = rng.standard_normal(spec.param_count)
        x = batch.inputs[0]
        np.testing.assert_allclose(jvp(spec, w, x, dw), output_jacobian(spec, w, x) @ dw, rtol=1e-12, atol=1e-12)

    def test_vjp_is_adjoint_of_jvp(self, tanh_net, rng):
        spec, w, batch = tanh_net
        dw = rng.standard_normal(spec.param_count)
        v = rng.standard_normal(spec.output_dim)
        x = batch.inputs[1]
        assert float(v @ jvp(spec, w, x, dw)) == pytest.approx(float(vjp(spec, w, x, v) @ dw), rel=1e-12)

    def test_jvp_matches_finite_difference(self, tanh_net, rng):
        spec, w, batch = tanh_net
        dw = rng.standard_normal(spec.param_count)
        x = batch.inputs[2]
        h = 1e-6
        shifted = WeightVector.for_spec(spec, w.values + h * dw)
        fd = (forward(spec, shifted, x) - forward(spec, w, x)) / h
        np.testing.assert_allclose(jvp(spec, w, x, dw), fd, rtol=1e-4, atol=1e-6)

    def test_jacobian_cap(self, tanh_net):
        spec, w, batch = tanh_net
        with pytest.raises(CapExceededError):
            per_sample_jacobian(spec, w, batch.inputs, cap=10)


class TestLoss:
    def test_cross_entropy_gradient_matches_finite_difference(self, tanh_net, rng):
        spec, w, batch = tanh_net
        value, grad = loss_and_grad(spec, w, batch)
        direction = rng.standard_normal(spec.param_count)
        h = 1e-6
        shifted = WeightVector.for_spec(spec, w.values + h * direction)
        fd = (loss_and_grad(spec, shifted, batch)[0] - value) / h
        assert float(grad @ direction) == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_mse_gradient_matches_finite_difference(self, tanh_net, rng):
        spec, w, batch = tanh_net
        value, grad = loss_and_grad(spec, w, batch, LossKind.MSE)
        direction = rng.standard_normal(spec.param_count)
        h = 1e-6
        shifted = WeightVector.for_spec(spec, w.values + h * direction)
        fd = (loss_and_grad(spec, shifted, batch, LossKind.MSE)[0] - value) / h
        assert float(grad @ direction) == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_input_gradient_matches_finite_difference(self, tanh_net):
        spec, w, batch = tanh_net
        grads = input_gradient(spec, w, batch)
        h = 1e-6
        for i in range(batch.size):
            row = batch.take(np.array([i]))
            base = loss_and_grad(spec, w, row)[0]
            for j in range(spec.input_dim):
                x = np.array(row.inputs)
                x[0, j] += h
                fd = (loss_and_grad(spec, w, row.with_inputs(x))[0] - base) / h
                assert grads[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_cross_entropy_restricted_to_head(self):
        spec = NetworkSpec.mlp([2, 4], head_widths=[2, 2])
        w = init_weights(spec, 1)
        batch = Batch(inputs=np.ones((3, 2)), labels=[0, 1, 1], task_id=2)
        _, grad = loss_and_grad(spec, w, batch)
        weight_grad = grad[:8].reshape(4, 2)
        # rows of task 1's head receive no gradient
        np.testing.assert_array_equal(weight_grad[:2], 0.0)


class TestPredict:
    def test_ties_go_to_lowest_index(self):
        spec = NetworkSpec.mlp([1, 3], use_bias=False)
        w = WeightVector.for_spec(spec, [1.0, 1.0, 0.0])
        assert predict(spec, w, np.array([[2.0]]), task_id=0)[0] == 0

    def test_accuracy(self):
        spec = NetworkSpec.mlp([1, 2], use_bias=False)
        w = WeightVector.for_spec(spec, [-1.0, 1.0])
        batch = Batch(inputs=[[-1.0], [1.0], [2.0]], labels=[0, 1, 0])
        assert accuracy(spec, w, batch) == pytest.approx(2 / 3)


class TestAppendOutputNodes:
    def test_existing_outputs_untouched(self, tanh_net):
        spec, w, batch = tanh_net
        spec = NetworkSpec.mlp([3, 5, 4, 2], hidden=Activation.TANH, head_widths=[2])
        w = init_weights(spec, seed=3)
        new_spec, new_w = append_output_nodes(spec, w, new_task_id=2, count=3, init_scale=0.1, seed=9)
        assert new_spec.output_dim == 5
        assert new_spec.param_count == spec.param_count + 3 * 4 + 3
        before = forward_batch(spec, w, batch.inputs)
        after = forward_batch(new_spec, new_w, batch.inputs)
        np.testing.assert_array_equal(after[:, :2], before)
        assert new_spec.head(2).as_slice() == slice(2, 5)

    def test_new_rows_seeded_and_bounded(self):
        spec = NetworkSpec.mlp([2, 2], head_widths=[2])
        w = init_weights(spec, 0)
        _, a = append_output_nodes(spec, w, 2, 2, 0.1, seed=4)
        _, b = append_output_nodes(spec, w, 2, 2, 0.1, seed=4)
        np.testing.assert_array_equal(a.values, b.values)
        new_rows = a.values[4:8]
        assert np.all(np.abs(new_rows) <= 0.1)
        np.testing.assert_array_equal(a.values[-2:], 0.0)

    def test_duplicate_task(self):
        spec = NetworkSpec.mlp([2, 2], head_widths=[2])
        with pytest.raises(DuplicateTaskError):
            append_output_nodes(spec, init_weights(spec, 0), 1, 2, 0.1, seed=0)

    def test_zero_count(self):
        spec = NetworkSpec.mlp([2, 2], head_widths=[2])
        with pytest.raises(InvalidLayerError):
            append_output_nodes(spec, init_weights(spec, 0), 2, 0, 0.1, seed=0)


class TestWidenOutputHead:
    def test_old_outputs_kept_and_head_grows(self, tanh_net):
        _, _, batch = tanh_net
        spec = NetworkSpec.mlp([3, 5, 4, 2], hidden=Activation.TANH, head_widths=[2])
        w = init_weights(spec, seed=3)
        new_spec, new_w = widen_output_head(spec, w, task_id=1, count=2, init_scale=0.1, seed=9)
        assert new_spec.task_ids == [1]
        assert new_spec.head(1).as_slice() == slice(0, 4)
        before = forward_batch(spec, w, batch.inputs)
        after = forward_batch(new_spec, new_w, batch.inputs)
        np.testing.assert_array_equal(after[:, :2], before)

    def test_only_the_last_head_grows(self):
        spec = NetworkSpec.mlp([2, 2], head_widths=[2])
        grown, w = append_output_nodes(spec, init_weights(spec, 0), 2, 2, 0.1, seed=0)
        with pytest.raises(InvalidLayerError):
            widen_output_head(grown, w, 1, 2, 0.1, seed=0)
        assert widen_output_head(grown, w, 2, 1, 0.1, seed=0)[0].head(2).as_slice() == slice(2, 5)
