import numpy as np
import pytest

from core_net.network import input_gradient, predict
from ensemble_adversarial import (
    coherence_score,
    diversity_score,
    ensemble_accuracy,
    ensemble_from_checkpoints,
    ensemble_predict,
    ensemble_predict_batch,
    even_indices,
    feasible_box,
    fgsm_attack,
    member_accuracies,
    paired_cosine,
    pgd_attack,
    sample_ensemble_along_path,
)
from path_sampler import sample_path
from shared_models.ensemble import AttackConfig, Ensemble, EnsembleSource
from shared_models.errors import (
    AttackInfeasibleError,
    DimensionMismatchError,
    InsufficientStepsError,
    ZeroGradientError,
)
from shared_models.network import Activation, Batch, NetworkSpec, WeightVector
from shared_models.path import PathConfig


@pytest.fixture
def unit_box_batch(rng):
    return Batch(inputs=rng.uniform(0.2, 0.8, size=(8, 3)), labels=rng.integers(0, 2, 8))


class TestAttacks:
    def test_zero_budget_is_identity(self, tanh_net, unit_box_batch):
        spec, w, _ = tanh_net
        x = pgd_attack((spec, w), unit_box_batch, AttackConfig(eps_adv=0.0))
        np.testing.assert_array_equal(x, unit_box_batch.inputs)

    def test_single_step_is_fgsm(self, tanh_net, unit_box_batch):
        spec, w, _ = tanh_net
        eps = 0.05
        expected = np.clip(
            unit_box_batch.inputs + eps * np.sign(input_gradient(spec, w, unit_box_batch)), 0.0, 1.0
        )
        np.testing.assert_allclose(fgsm_attack((spec, w), unit_box_batch, eps), expected, rtol=0, atol=1e-15)

    def test_linear_classifier_moves_against_its_weights(self, rng):
        spec = NetworkSpec.mlp([3, 2], use_bias=False)
        direction = np.array([0.5, -1.0, 2.0])
        w = WeightVector.for_spec(spec, np.concatenate([direction, -direction]))
        batch = Batch(inputs=rng.uniform(0.3, 0.7, size=(6, 3)), labels=[0, 1, 0, 1, 0, 1])
        x = fgsm_attack((spec, w), batch, 0.05)
        moved = np.sign(x - batch.inputs)
        for row, label in zip(moved, batch.labels):
            # raising the loss of class 0 means lowering w . x, of class 1 raising it
            expected = -np.sign(direction) if label == 0 else np.sign(direction)
            np.testing.assert_array_equal(row, expected)

    def test_result_is_feasible(self, rng, tanh_net):
        spec, w, _ = tanh_net
        batch = Batch(inputs=rng.uniform(0.0, 1.0, size=(20, 3)), labels=rng.integers(0, 2, 20))
        eps = 0.1
        x = pgd_attack((spec, w), batch, AttackConfig(eps_adv=eps, n_iters=10, step_size=0.04, seed=3))
        assert np.all(np.abs(x - batch.inputs) <= eps)
        assert np.all((x >= 0.0) & (x <= 1.0))

    def test_seeded(self, tanh_net, unit_box_batch):
        spec, w, _ = tanh_net
        cfg = AttackConfig(eps_adv=0.1, n_iters=5, seed=7)
        np.testing.assert_array_equal(pgd_attack((spec, w), unit_box_batch, cfg),
                                      pgd_attack((spec, w), unit_box_batch, cfg))

    def test_box_bounds_stay_inside_the_ball(self, rng):
        x0 = rng.uniform(0.0, 1.0, size=(50, 4))
        eps = 0.1
        lo, hi = feasible_box(x0, eps, (0.0, 1.0))
        assert np.all(np.abs(lo - x0) <= eps)
        assert np.all(np.abs(hi - x0) <= eps)

    def test_infeasible_input(self):
        with pytest.raises(AttackInfeasibleError):
            feasible_box(np.array([[2.0]]), 0.1, (0.0, 1.0))

    def test_relative_budget_over_data_range(self):
        cfg = AttackConfig(eps_adv=0.1, eps_relative=True, clamp_range=None).resolved_for(np.array([[-5.0, 5.0]]))
        assert cfg.clamp_range == (-5.0, 5.0)
        assert cfg.eps_adv == pytest.approx(1.0)
        assert cfg.step == pytest.approx(0.25)

    def test_clamp_range_must_be_ordered(self):
        with pytest.raises(ValueError):
            AttackConfig(clamp_range=(1.0, 0.0))


class TestEnsemblePredict:
    @staticmethod
    def member(spec: NetworkSpec, probs) -> WeightVector:
        return WeightVector.for_spec(spec, np.log(probs))

    def test_softmax_sum(self):
        spec = NetworkSpec.mlp([1, 2], use_bias=False)
        ens = Ensemble(spec=spec, members=[self.member(spec, [0.6, 0.4]), self.member(spec, [0.2, 0.8])],
                       source=EnsembleSource.INDEPENDENT_RUNS)
        label, summed = ensemble_predict(ens, np.array([1.0]))
        assert label == 1
        np.testing.assert_allclose(summed, [0.8, 1.2])

    def test_identical_members_match_single_model(self, blob_task, trained_blob_classifier):
        spec, w = trained_blob_classifier
        ens = ensemble_from_checkpoints([(spec, w)] * 3)
        predicted, _ = ensemble_predict_batch(ens, blob_task.test.inputs, task_id=blob_task.task_id)
        np.testing.assert_array_equal(predicted, predict(spec, w, blob_task.test.inputs, blob_task.task_id))
        assert member_accuracies(ens, blob_task.test) == [ensemble_accuracy(ens, blob_task.test)] * 3

    def test_member_order_does_not_matter(self, rng, tanh_net):
        spec, w, batch = tanh_net
        members = [WeightVector.for_spec(spec, w.values + 0.3 * rng.standard_normal(spec.param_count))
                   for _ in range(4)]
        forward = Ensemble(spec=spec, members=members, source=EnsembleSource.INDEPENDENT_RUNS)
        backward = Ensemble(spec=spec, members=members[::-1], source=EnsembleSource.INDEPENDENT_RUNS)
        np.testing.assert_array_equal(ensemble_predict_batch(forward, batch.inputs)[0],
                                      ensemble_predict_batch(backward, batch.inputs)[0])

    def test_members_must_match_spec(self, tanh_net):
        spec, w, _ = tanh_net
        other = NetworkSpec.mlp([3, 2])
        with pytest.raises(DimensionMismatchError):
            Ensemble(spec=other, members=[w], source=EnsembleSource.INDEPENDENT_RUNS)


class TestSampling:
    def test_even_indices(self):
        assert even_indices(10, 10) == list(range(10))
        assert even_indices(100, 10) == [9, 19, 29, 39, 49, 59, 69, 79, 89, 99]
        assert even_indices(3, 2) == [1, 2]
        assert even_indices(5, 1) == [4]

    def test_members_taken_from_recorded_steps(self, tanh_net):
        spec, w, batch = tanh_net
        cfg = PathConfig(epsilon=1e-4, n_steps=6, record_stride=2)
        path = sample_path(spec, w, Batch(inputs=batch.inputs), None, cfg)
        ens = sample_ensemble_along_path(path, 2)
        assert ens.source_steps == [3, 5]
        assert ens.source is EnsembleSource.FIP_PATH
        np.testing.assert_array_equal(ens.members[-1].values, path.endpoint.values)
        with pytest.raises(InsufficientStepsError):
            sample_ensemble_along_path(path, 4)


class TestDiagnostics:
    def test_paired_cosine_zero_vectors(self):
        a = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        b = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [-1.0, -1.0]])
        np.testing.assert_allclose(paired_cosine(a, b), [1.0, 0.0, 1.0, -1.0])

    def test_self_coherence(self, blob_task, trained_blob_classifier):
        model = trained_blob_classifier
        assert coherence_score(model, model, blob_task.test) == pytest.approx(1.0)

    def test_negated_head_is_anti_coherent(self, blob_task, trained_blob_classifier):
        spec, w = trained_blob_classifier
        flipped = np.array(w.values)
        flipped[-(16 * 2 + 2):] *= -1.0
        negated = WeightVector.for_spec(spec, flipped)
        assert coherence_score((spec, w), (spec, negated), blob_task.test) == pytest.approx(-1.0)

    def test_zero_gradients(self, blob_task):
        spec = NetworkSpec.mlp([2, 4, 2], head_widths=[2], first_task_id=blob_task.task_id)
        zero = WeightVector.for_spec(spec, np.zeros(spec.param_count))
        with pytest.raises(ZeroGradientError):
            coherence_score((spec, zero), (spec, zero), blob_task.test)

    def test_diversity(self, rng):
        spec = NetworkSpec.mlp([2, 2, 1], hidden=Activation.IDENTITY, use_bias=False)
        identity = WeightVector.for_spec(spec, [1.0, 0.0, 0.0, 1.0, 1.0, 1.0])
        rotated = WeightVector.for_spec(spec, [0.0, -1.0, 1.0, 0.0, 1.0, 1.0])
        batch = Batch(inputs=rng.standard_normal((10, 2)))
        same = Ensemble(spec=spec, members=[identity, identity], source=EnsembleSource.INDEPENDENT_RUNS)
        orthogonal = Ensemble(spec=spec, members=[identity, rotated], source=EnsembleSource.INDEPENDENT_RUNS)
        single = Ensemble(spec=spec, members=[identity], source=EnsembleSource.INDEPENDENT_RUNS)
        assert diversity_score(same, 1, batch) == pytest.approx(0.0, abs=1e-12)
        assert diversity_score(orthogonal, 1, batch) == pytest.approx(1.0)
        assert diversity_score(single, 1, batch) == 0.0
