import numpy as np
import pytest

from core_net.network import init_weights, loss_and_grad
from objectives import hard_sparsify, objective_grad, p_sparse_projection, project_p_sparse, sparse_count
from shared_models.errors import InvalidObjectiveError
from shared_models.network import Batch, NetworkSpec, WeightVector
from shared_models.objective import ObjectiveKind, ObjectiveSpec, RefPoint, SparsitySchedule


class TestProjection:
    def test_smallest_magnitudes_zeroed(self):
        np.testing.assert_array_equal(project_p_sparse(np.array([3.0, -1.0, 0.5, 2.0]), 0.5), [3.0, 0.0, 0.0, 2.0])

    def test_floor_of_count(self):
        projected = project_p_sparse(np.array([5.0, 4.0, 3.0, 2.0, 1.0]), 0.5)
        assert np.count_nonzero(projected == 0.0) == 2
        assert sparse_count(5, 0.5) == 2

    def test_ties_break_on_lower_index(self):
        np.testing.assert_array_equal(project_p_sparse(np.array([1.0, -1.0, 1.0, 2.0]), 0.5), [0.0, 0.0, 1.0, 2.0])

    def test_idempotent(self, rng):
        values = rng.standard_normal(40)
        once = project_p_sparse(values, 0.3)
        np.testing.assert_array_equal(project_p_sparse(once, 0.3), once)

    def test_monotone_in_p(self, rng):
        values = rng.standard_normal(40)
        zeros = [np.count_nonzero(project_p_sparse(values, p) == 0.0) for p in np.linspace(0.0, 1.0, 11)]
        assert zeros == sorted(zeros)

    def test_extremes(self, rng):
        values = rng.standard_normal(10)
        np.testing.assert_array_equal(project_p_sparse(values, 0.0), values)
        np.testing.assert_array_equal(project_p_sparse(values, 1.0), 0.0)

    def test_fraction_out_of_range(self):
        with pytest.raises(ValueError):
            project_p_sparse(np.ones(3), 1.5)

    def test_eligible_mask_spares_biases(self):
        spec = NetworkSpec.mlp([2, 2])
        w = WeightVector.for_spec(spec, [1.0, 2.0, 3.0, 4.0, 0.1, 0.2])
        projected = p_sparse_projection(w, 0.5, eligible=~spec.bias_mask())
        np.testing.assert_array_equal(projected.values, [0.0, 0.0, 3.0, 4.0, 0.1, 0.2])

    def test_hard_sparsify_reports_achieved_fraction(self):
        spec = NetworkSpec.mlp([2, 2])
        w = WeightVector.for_spec(spec, [1.0, 2.0, 3.0, 4.0, 0.0, 0.2])
        projected, achieved = hard_sparsify(spec, w, 0.5)
        assert achieved == pytest.approx(3 / 6)
        projected, achieved = hard_sparsify(spec, w, 0.5, include_biases=False)
        # the bias that already was 0 is not part of the projection
        assert achieved == pytest.approx(2 / 6)
        assert projected.values[5] == 0.2

    def test_existing_zeros_are_not_counted(self):
        spec = NetworkSpec.mlp([2, 2])
        w = WeightVector.for_spec(spec, [0.0, 0.0, 0.0, 0.0, 5.0, 6.0])
        projected, achieved = hard_sparsify(spec, w, 0.5)
        assert achieved == 0.5
        assert np.count_nonzero(projected.values == 0.0) == 4
        assert hard_sparsify(spec, w, 0.0)[1] == 0.0


class TestObjectiveSpec:
    def test_sparsify_defaults(self):
        obj = ObjectiveSpec(kind=ObjectiveKind.SPARSIFY, target_sparsity=0.4)
        assert obj.ref_point is RefPoint.CURRENT
        assert obj.schedule is SparsitySchedule.CONSTANT
        assert obj.include_biases is True

    def test_foreign_fields_rejected(self):
        with pytest.raises(InvalidObjectiveError):
            ObjectiveSpec(kind=ObjectiveKind.NULL, target_sparsity=0.5)
        with pytest.raises(InvalidObjectiveError):
            ObjectiveSpec(kind=ObjectiveKind.TASK_LOSS)

    def test_task_loss_needs_labels(self):
        with pytest.raises(InvalidObjectiveError):
            ObjectiveSpec.task_loss(Batch(inputs=np.zeros((2, 2))))

    def test_linear_schedule(self):
        obj = ObjectiveSpec.sparsify(0.6, schedule=SparsitySchedule.LINEAR)
        assert obj.scheduled(0, 3).target_sparsity == pytest.approx(0.2)
        assert obj.scheduled(2, 3).target_sparsity == pytest.approx(0.6)
        assert ObjectiveSpec.sparsify(0.6).scheduled(0, 3).target_sparsity == 0.6


class TestObjectiveGrad:
    def test_null(self):
        spec = NetworkSpec.mlp([2, 2])
        assert objective_grad(ObjectiveSpec.null(), spec, init_weights(spec, 0)) == (0.0, None)

    def test_task_loss_is_cross_entropy(self, tanh_net):
        spec, w, batch = tanh_net
        value, grad = objective_grad(ObjectiveSpec.task_loss(batch), spec, w)
        expected_value, expected_grad = loss_and_grad(spec, w, batch)
        assert value == expected_value
        np.testing.assert_array_equal(grad, expected_grad)

    def test_sparsify_against_current_weights(self):
        spec = NetworkSpec.mlp([2, 2], use_bias=False)
        w = WeightVector.for_spec(spec, [3.0, -1.0, 0.5, 2.0])
        value, grad = objective_grad(ObjectiveSpec.sparsify(0.5), spec, w)
        assert value == pytest.approx(1.25)
        np.testing.assert_allclose(grad, [0.0, -2.0, 1.0, 0.0])

    def test_sparsify_zero_on_sparse_weights(self):
        spec = NetworkSpec.mlp([2, 2], use_bias=False)
        w = WeightVector.for_spec(spec, [3.0, 0.0, 0.0, 2.0])
        value, grad = objective_grad(ObjectiveSpec.sparsify(0.5), spec, w)
        assert value == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_sparsify_gradient_matches_finite_difference_away_from_ties(self, rng):
        spec = NetworkSpec.mlp([3, 3], use_bias=False)
        w = WeightVector.for_spec(spec, rng.standard_normal(spec.param_count))
        value, grad = objective_grad(ObjectiveSpec.sparsify(0.4), spec, w)
        direction = rng.standard_normal(spec.param_count)
        h = 1e-7
        shifted = WeightVector.for_spec(spec, w.values + h * direction)
        fd = (objective_grad(ObjectiveSpec.sparsify(0.4), spec, shifted)[0] - value) / h
        assert float(grad @ direction) == pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_fixed_reference_point(self):
        spec = NetworkSpec.mlp([2, 2], use_bias=False)
        w_ref = WeightVector.for_spec(spec, [3.0, -1.0, 0.5, 2.0])
        w = WeightVector.for_spec(spec, [1.0, 1.0, 1.0, 1.0])
        obj = ObjectiveSpec.sparsify(0.5, ref_point=RefPoint.FIXED)
        _, grad = objective_grad(obj, spec, w, w_ref)
        np.testing.assert_allclose(grad, 2.0 * (w.values - np.array([3.0, 0.0, 0.0, 2.0])))
        with pytest.raises(InvalidObjectiveError):
            objective_grad(obj, spec, w)
