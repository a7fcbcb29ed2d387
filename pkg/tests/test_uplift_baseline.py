import numpy as np
import pytest

from ucmab.core import Treatment
from ucmab.errors import DomainError, FitError, ModelStateError
from ucmab.models import AdwinParams, ControllerConfig, ForestParams
from ucmab.uplift_baseline import (
    AdwinDetector, LabeledExample, Phase, UpliftController, UpliftData, UpliftForest, UpliftTree, adwin_observe,
    controller_act, controller_feedback, fit_forest, fit_tree, forest_from_dict, forest_to_dict, make_controller,
    predict_uplift,
)


def step_uplift_data(n=2000, seed=0) -> UpliftData:
    """Treated individuals with x0 > 0.5 respond, nobody else does"""
    rng = np.random.default_rng(seed)
    X = rng.random((n, 2))
    arm = rng.integers(2, size=n)
    y = ((arm == 1) & (X[:, 0] > 0.5)).astype(np.int64)
    return UpliftData.from_arrays(X, arm, y)


class TestTrees:
    def test_single_split_recovers_step(self):
        tree = fit_tree(step_uplift_data(), ForestParams(max_depth=1, min_group=20, max_features=None))
        assert tree.feature[0] == 0
        assert tree.threshold[0] == pytest.approx(0.5, abs=0.02)
        assert tree.predict_one(np.array([0.9, 0.5])) == 1.0
        assert tree.predict_one(np.array([0.1, 0.5])) == 0.0

    def test_leaves_respect_min_group(self):
        params = ForestParams(max_depth=6, min_group=30, max_features=None)
        tree = fit_tree(step_uplift_data(seed=1), params)
        for leaf in tree.leaves():
            n0, n1, _, _ = tree.counts[leaf]
            assert n0 >= 30 and n1 >= 30

    def test_depth_zero_is_root_uplift(self):
        data = step_uplift_data()
        tree = fit_tree(data, ForestParams(max_depth=0))
        treated = data.arm == 1
        expected = data.y[treated].mean() - data.y[~treated].mean()
        assert tree.n_nodes == 1
        assert tree.predict_one(data.X[0]) == pytest.approx(expected)

    def test_no_uplift_no_split(self):
        rng = np.random.default_rng(3)
        X = rng.random((400, 2))
        arm = np.tile([0, 1], 200)
        tree = fit_tree(UpliftData.from_arrays(X, arm, np.zeros(400)), ForestParams(max_features=None))
        assert tree.n_nodes == 1

    def test_single_arm_rejected(self):
        X = np.random.default_rng(0).random((50, 2))
        with pytest.raises(FitError):
            fit_tree(UpliftData.from_arrays(X, np.ones(50), np.ones(50)))

    def test_too_few_per_arm_rejected(self):
        data = step_uplift_data(n=20)
        with pytest.raises(FitError):
            fit_tree(data, ForestParams(min_group=50))

    def test_vectorized_predict_matches_single(self):
        data = step_uplift_data(seed=4)
        tree = fit_tree(data, ForestParams(max_depth=4, min_group=10, max_features=None))
        expected = [tree.predict_one(x) for x in data.X[:100]]
        np.testing.assert_array_equal(tree.predict(data.X[:100]), expected)

    def test_accepts_labeled_examples(self):
        data = step_uplift_data(n=200)
        examples = [LabeledExample(x=data.X[i], arm=Treatment(int(data.arm[i])), y=bool(data.y[i]))
                    for i in range(len(data))]
        a = fit_tree(examples, ForestParams(max_depth=2, min_group=10, max_features=None))
        b = fit_tree(data, ForestParams(max_depth=2, min_group=10, max_features=None))
        assert a.to_dict() == b.to_dict()

    def test_hand_dataset_takes_the_best_split(self):
        x = [0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9]
        arm = [0, 1, 0, 1, 0, 1, 0, 1]
        y = [0, 0, 1, 0, 1, 1, 0, 1]

        def uplift(rows):
            treated = [y[i] for i in rows if arm[i] == 1]
            control = [y[i] for i in rows if arm[i] == 0]
            return sum(treated) / len(treated) - sum(control) / len(control)

        parent = uplift(range(8))
        gains = {}
        for k in range(1, 8):
            left, right = range(k), range(k, 8)
            if {arm[i] for i in left} != {0, 1} or {arm[i] for i in right} != {0, 1}:
                continue
            gains[(x[k - 1] + x[k]) / 2] = (k / 8 * (uplift(left) - parent) ** 2
                                            + (8 - k) / 8 * (uplift(right) - parent) ** 2)
        threshold = max(gains, key=gains.get)
        assert threshold == pytest.approx(0.65)

        tree = fit_tree(UpliftData.from_arrays(np.array(x)[:, None], arm, y),
                        ForestParams(max_depth=1, min_group=1, max_features=None))
        assert (tree.feature[0], tree.threshold[0]) == (0, pytest.approx(threshold))
        assert tree.value[0] == pytest.approx(0.0)
        assert tree.value[tree.left[0]] == pytest.approx(-2 / 3)
        assert tree.value[tree.right[0]] == pytest.approx(1.0)

    def test_leaf_estimates_recover_cell_uplift(self):
        rng = np.random.default_rng(17)
        n = 4000
        X = rng.random((n, 2))
        arm = rng.integers(2, size=n)
        true_uplift = np.where(X[:, 0] > 0.5, 0.9, 0.0)
        y = (rng.random(n) < 0.05 + arm * true_uplift).astype(int)
        tree = fit_tree(UpliftData.from_arrays(X, arm, y), ForestParams(max_depth=1, min_group=20, max_features=None))
        assert tree.feature[0] == 0
        leaf_of = np.where(X[:, 0] <= tree.threshold[0], tree.left[0], tree.right[0])
        for leaf in tree.leaves():
            n0, n1, _, _ = tree.counts[leaf]
            truth = true_uplift[leaf_of == leaf].mean()
            assert abs(tree.value[leaf] - truth) < 1 / np.sqrt(min(n0, n1))


class TestForest:
    def test_predicts_step_uplift(self):
        forest = fit_forest(step_uplift_data(), params=ForestParams(n_trees=10, max_depth=3, min_group=20, max_features=None), seed=1)
        assert predict_uplift(forest, np.array([0.9, 0.3])) > 0.8
        assert predict_uplift(forest, np.array([0.1, 0.3])) < 0.2

    def test_same_seed_same_forest(self):
        params = ForestParams(n_trees=4, max_depth=3, min_group=10)
        a = fit_forest(step_uplift_data(n=300), params=params, seed=7)
        b = fit_forest(step_uplift_data(n=300), params=params, seed=7)
        assert forest_to_dict(a) == forest_to_dict(b)

    def test_parallel_training_matches_serial(self):
        data = step_uplift_data(n=300)
        serial = fit_forest(data, params=ForestParams(n_trees=4, max_depth=3, min_group=10), seed=7)
        parallel = fit_forest(data, params=ForestParams(n_trees=4, max_depth=3, min_group=10, n_jobs=2), seed=7)
        assert forest_to_dict(serial) == forest_to_dict(parallel)

    def test_json_form_predicts_identically(self):
        data = step_uplift_data(n=500)
        forest = fit_forest(data, params=ForestParams(n_trees=3, max_depth=3, min_group=10), seed=2)
        restored = forest_from_dict(forest_to_dict(forest))
        assert forest_to_dict(forest)["schema"] == "ucmab.forest/1"
        np.testing.assert_array_equal(restored.predict(data.X), forest.predict(data.X))

    def test_unfitted_model(self):
        with pytest.raises(ModelStateError):
            predict_uplift(None, np.array([0.5]))

    def test_single_tree_without_bagging_is_fit_tree(self):
        data = step_uplift_data(n=600, seed=5)
        params = ForestParams(n_trees=1, bootstrap=False, max_features=None, max_depth=3, min_group=10)
        forest = fit_forest(data, params=params, seed=11)
        assert forest_to_dict(forest)["trees"] == [fit_tree(data, params).to_dict()]

    def test_prediction_is_mean_of_members(self):
        leaf = UpliftTree.from_dict({"nodes": [{"counts": [4, 4, 1, 2], "uplift": 0.3}]})
        on_x0 = UpliftTree.from_dict({"nodes": [
            {"counts": [8, 8, 2, 4], "uplift": 0.25, "feature": 0, "threshold": 0.5, "left": 1, "right": 2},
            {"counts": [4, 4, 1, 1], "uplift": -0.1},
            {"counts": [4, 4, 1, 3], "uplift": 0.5},
        ]})
        on_x1 = UpliftTree.from_dict({"nodes": [
            {"counts": [8, 8, 2, 4], "uplift": 0.25, "feature": 1, "threshold": 0.2, "left": 1, "right": 2},
            {"counts": [4, 4, 2, 2], "uplift": 0.0},
            {"counts": [4, 4, 0, 2], "uplift": 0.9},
        ]})
        forest = UpliftForest(trees=[leaf, on_x0, on_x1], n_features=2)
        assert predict_uplift(forest, np.array([0.7, 0.1])) == pytest.approx((0.3 + 0.5 + 0.0) / 3)
        assert predict_uplift(forest, np.array([0.2, 0.6])) == pytest.approx((0.3 - 0.1 + 0.9) / 3)
        np.testing.assert_allclose(forest.predict(np.array([[0.7, 0.1], [0.2, 0.6]])), [0.8 / 3, 1.1 / 3])


class TestAdwin:
    def test_detects_mean_shift(self):
        detected_within = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            detector = AdwinDetector()
            for _ in range(1000):
                detector.update(float(rng.random() < 0.2))
            step = None
            for i in range(500):
                if detector.update(float(rng.random() < 0.8)):
                    step = i
                    break
            detected_within.append(step is not None)
        assert all(detected_within)

    def test_window_shrinks_after_detection(self):
        detector = AdwinDetector()
        for _ in range(2000):
            detector.update(0.0)
        width = detector.width
        for _ in range(200):
            if detector.update(1.0):
                break
        assert detector.n_detections == 1
        assert detector.width < width

    def test_stationary_stream_is_quiet(self):
        for seed in range(3):
            rng = np.random.default_rng(100 + seed)
            detector = AdwinDetector()
            for _ in range(10_000):
                detector.update(float(rng.random() < 0.5))
            assert detector.n_detections == 0

    def test_constant_stream(self):
        detector = AdwinDetector()
        assert not any(adwin_observe(detector, 0.7) for _ in range(1000))
        assert detector.mean == pytest.approx(0.7)
        assert detector.variance == pytest.approx(0.0, abs=1e-9)

    def test_histogram_invariants(self):
        params = AdwinParams(max_buckets=3)
        detector = AdwinDetector(params)
        rng = np.random.default_rng(8)
        values = rng.random(777)
        for v in values:
            detector.update(float(v))
        sizes = detector.bucket_sizes()
        assert sum(sizes) == detector.width == 777
        assert sizes == sorted(sizes, reverse=True)
        for size in set(sizes):
            assert sizes.count(size) <= 3
        assert detector.mean == pytest.approx(values.mean())
        assert detector.variance == pytest.approx(values.var())

    def test_rejects_values_outside_unit_interval(self):
        with pytest.raises(DomainError):
            AdwinDetector().update(1.5)

    def test_clear(self):
        detector = AdwinDetector(delta=0.01)
        for _ in range(50):
            detector.update(1.0)
        detector.clear()
        assert detector.width == 0 and detector.n_buckets == 0

    def test_long_constant_stream_never_fires(self):
        detector = AdwinDetector()
        for _ in range(100_000):
            detector.update(0.5)
        assert detector.n_detections == 0
        assert detector.width == 100_000

    def test_every_insertion_is_checked(self):
        assert AdwinParams().clock == 1
        detector = AdwinDetector()
        for _ in range(1024):
            detector.update(0.0)
        fired_at = next(i for i in range(200) if detector.update(1.0))
        assert fired_at < 31


def small_controller_config(tau_spec) -> ControllerConfig:
    return ControllerConfig(
        collection_target=300, reward_spec=tau_spec,
        forest=ForestParams(n_trees=5, max_depth=2, min_group=10, max_features=None),
    )


class TestController:
    def test_collect_deploy_and_recollect(self, tau_spec):
        state = make_controller(small_controller_config(tau_spec), seed=1)
        rng = np.random.default_rng(0)
        for _ in range(300):
            x = rng.random(2)
            arm = controller_act(state, x, rng)
            controller_feedback(state, x, arm, bool(arm == 1 and x[0] > 0.5), 0.5)
        assert state.phase == Phase.DEPLOYED
        assert state.model is not None and state.buffer == []
        assert controller_act(state, np.array([0.9, 0.5]), rng) == Treatment.TREATED
        assert controller_act(state, np.array([0.1, 0.5]), rng) == Treatment.CONTROL

        x = np.array([0.5, 0.5])
        for _ in range(1000):
            controller_feedback(state, x, 1, True, 1.0)
        assert state.phase == Phase.DEPLOYED
        for _ in range(500):
            controller_feedback(state, x, 1, False, 0.0)
            if state.phase == Phase.COLLECTING:
                break
        assert state.phase == Phase.COLLECTING
        assert state.model is None and state.buffer == []

    def test_fit_failure_keeps_collecting(self, tau_spec):
        state = make_controller(small_controller_config(tau_spec), seed=1)
        for _ in range(300):
            controller_feedback(state, np.array([0.5, 0.5]), 1, True, 1.0)
        assert state.phase == Phase.COLLECTING
        assert len(state.buffer) == 300

    def test_policy_adapter_records_phase_events(self, tau_spec):
        controller = UpliftController(small_controller_config(tau_spec), seed=2)
        rng = np.random.default_rng(1)
        for t in range(300):
            x = rng.random(2)
            arm = controller.act(x, t)
            controller.feedback(x, arm, bool(arm == 1 and x[0] > 0.5), t)
        assert controller.phase == Phase.DEPLOYED
        assert controller.events == [(299, "deployed")]
